//! Monte-Carlo estimators under a budget of value-function evaluations.
//!
//! The budget counts distinct coalitions: every estimator sees the game
//! through a memoizing oracle, so repeated draws are free.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)` with the stream
//! set to the repetition index, so repetition `r` of seed `s` always sees
//! the same draws regardless of how many other repetitions run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, SubsetBasis};
use crate::error::{Error, Result};
use crate::game::ValueFunction;
use crate::index::{IndexKind, InteractionIndex};
use crate::solver::{EqualityConstraints, MomentAccumulator, RegressionRow};
use crate::weighting::faithshap_weights;

/// Draws per unit of budget before sampling gives up on finding new
/// coalitions.
const DRAWS_PER_EVALUATION: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    FaithShapSampling,
    ShapleyTaylorPermutation,
    ShapleyInteractionPermutation,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::FaithShapSampling,
        EstimatorKind::ShapleyTaylorPermutation,
        EstimatorKind::ShapleyInteractionPermutation,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::FaithShapSampling => "faith-shap-sampling",
            EstimatorKind::ShapleyTaylorPermutation => "shapley-taylor-permutation",
            EstimatorKind::ShapleyInteractionPermutation => "shapley-interaction-permutation",
        }
    }

    /// The exact index this estimator targets.
    pub fn target(self) -> IndexKind {
        match self {
            EstimatorKind::FaithShapSampling => IndexKind::FaithShap,
            EstimatorKind::ShapleyTaylorPermutation => IndexKind::ShapleyTaylor,
            EstimatorKind::ShapleyInteractionPermutation => IndexKind::ShapleyInteraction,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub kind: EstimatorKind,
    pub order: usize,
    pub budget: usize,
    pub seed: u64,
    /// ℓ1 penalty for the regression estimator.
    #[serde(default)]
    pub lambda: f64,
    /// Record a snapshot every this many evaluations.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// RNG stream; one per repetition.
    #[serde(default)]
    pub repetition: u64,
    /// Cap on permutation passes; defaults to the budget.
    #[serde(default)]
    pub max_passes: Option<usize>,
}

impl EstimateConfig {
    pub fn new(kind: EstimatorKind, order: usize, budget: usize, seed: u64) -> Self {
        EstimateConfig {
            kind,
            order,
            budget,
            seed,
            lambda: 0.0,
            checkpoint_every: None,
            repetition: 0,
            max_passes: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_checkpoints(mut self, every: usize) -> Self {
        self.checkpoint_every = Some(every);
        self
    }

    pub fn with_repetition(mut self, repetition: u64) -> Self {
        self.repetition = repetition;
        self
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.repetition);
        rng
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.order > d {
            return Err(Error::config(format!("order {} exceeds d={d}", self.order)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::config("checkpoint interval must be positive"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget must be positive"));
        }
        Ok(())
    }
}

/// An intermediate estimate after `evaluations` distinct calls.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub evaluations: usize,
    pub index: InteractionIndex,
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub index: InteractionIndex,
    pub evaluations_used: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Basis positions the estimator had no sample for; their scores are 0.
    pub unestimated: Vec<Coalition>,
    /// Per-entry standard error of the mean (permutation estimators).
    pub std_errors: Option<Vec<f64>>,
    /// Permutation passes, or regression rows for the sampling estimator.
    pub samples: usize,
    /// The final regression was rank deficient.
    pub rank_deficient: bool,
}

/// Sizes `1..d-1` with `P(s) ∝ 1/(s(d-s))`, then a uniform subset of that
/// size. Equivalent to drawing each proper non-empty coalition with
/// probability proportional to the Faith-Shap kernel.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    d: usize,
    sizes: WeightedIndex<f64>,
}

impl KernelSampler {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("kernel sampling needs d >= 2, got {d}")));
        }
        let weights: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
        let sizes = WeightedIndex::new(weights).expect("positive weights");
        Ok(KernelSampler { d, sizes })
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Coalition {
        let size = self.sizes.sample(rng) + 1;
        sample_indices(rng, self.d, size)
            .into_iter()
            .fold(Coalition::EMPTY, |acc, i| acc.with(i))
    }
}

/// `n` i.i.d. kernel-weighted coalitions from `seed`.
pub fn sample_coalitions(d: usize, n: usize, seed: u64) -> Result<Vec<Coalition>> {
    if n == 0 {
        return Err(Error::domain("need at least one draw"));
    }
    let sampler = KernelSampler::new(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// Memoizing, budget-limited access to a game.
struct Oracle<'a> {
    v: &'a ValueFunction,
    cache: HashMap<u64, f64>,
    budget: usize,
}

impl<'a> Oracle<'a> {
    fn new(v: &'a ValueFunction, budget: usize) -> Self {
        Oracle {
            v,
            cache: HashMap::new(),
            budget,
        }
    }

    fn used(&self) -> usize {
        self.cache.len()
    }

    fn remaining(&self) -> usize {
        self.budget - self.used()
    }

    fn is_cached(&self, s: Coalition) -> bool {
        self.cache.contains_key(&s.bits())
    }

    /// Value of `s`; the caller has checked the budget.
    fn eval(&mut self, s: Coalition) -> Result<f64> {
        if let Some(x) = self.cache.get(&s.bits()) {
            return Ok(*x);
        }
        debug_assert!(self.used() < self.budget);
        let x = self.v.eval(s).map_err(|e| Error::PartialFailure {
            evaluations: self.used(),
            source: Box::new(e),
        })?;
        self.cache.insert(s.bits(), x);
        Ok(x)
    }

    /// Distinct uncached coalitions in `list`, in first-seen order.
    fn new_among(&self, list: &[Coalition]) -> Vec<Coalition> {
        let mut seen = HashSet::new();
        list.iter()
            .copied()
            .filter(|s| !self.is_cached(*s) && seen.insert(s.bits()))
            .collect()
    }
}

/// Next evaluation count at which a checkpoint is due.
struct Cadence {
    every: Option<usize>,
    next: usize,
}

impl Cadence {
    fn new(every: Option<usize>) -> Self {
        Cadence {
            every,
            next: every.unwrap_or(usize::MAX),
        }
    }

    /// Whether `used` has reached the next mark; advances past it.
    fn due(&mut self, used: usize) -> bool {
        let Some(every) = self.every else {
            return false;
        };
        if used < self.next {
            return false;
        }
        while self.next <= used {
            self.next += every;
        }
        true
    }
}

fn push_final(checkpoints: &mut Vec<Checkpoint>, evaluations: usize, index: &InteractionIndex) {
    if checkpoints.last().map(|c| c.evaluations) != Some(evaluations) {
        checkpoints.push(Checkpoint {
            evaluations,
            index: index.clone(),
        });
    }
}

/// Faith-Shap by kernel-weighted sampling and constrained regression.
///
/// Spends two evaluations on `∅` and `[d]`, then draws coalitions until the
/// budget of distinct evaluations is used. All draws, repeats included,
/// enter the regression with unit weight. With `budget >= 2^d` the lattice
/// is enumerated instead and rows carry the exact kernel weights.
pub fn estimate_faith_shap(v: &ValueFunction, cfg: &EstimateConfig) -> Result<EstimateReport> {
    let d = v.players();
    cfg.validate(d)?;
    if d < 2 {
        return Err(Error::config("sampling needs d >= 2"));
    }
    if cfg.budget < d + 2 {
        return Err(Error::config(format!(
            "budget {} is below d + 2 = {}",
            cfg.budget,
            d + 2
        )));
    }
    let basis = Arc::new(SubsetBasis::new(d, cfg.order)?);
    let mut oracle = Oracle::new(v, cfg.budget);
    let empty = oracle.eval(Coalition::EMPTY)?;
    let full = oracle.eval(Coalition::full(d))?;
    let constraints = Some(EqualityConstraints { empty, full });
    let mut acc = MomentAccumulator::with_basis(basis);
    let mut checkpoints = Vec::new();

    let full_lattice = d < usize::BITS as usize - 1 && cfg.budget >= 1usize << d;
    if full_lattice {
        let w = faithshap_weights(d)?;
        for bits in 1..(1u64 << d) - 1 {
            let s = Coalition::from_bits(bits);
            let target = oracle.eval(s)?;
            let weight = w.weight(s.size()).expect("proper coalitions are finite");
            acc.add(RegressionRow { coalition: s, weight, target })?;
        }
    } else {
        let sampler = KernelSampler::new(d)?;
        let mut rng = cfg.rng();
        let mut cadence = Cadence::new(cfg.checkpoint_every);
        let max_draws = DRAWS_PER_EVALUATION.saturating_mul(cfg.budget);
        for _ in 0..max_draws {
            let s = sampler.draw(&mut rng);
            if !oracle.is_cached(s) && oracle.remaining() == 0 {
                break;
            }
            let target = oracle.eval(s)?;
            acc.add(RegressionRow { coalition: s, weight: 1.0, target })?;
            if cadence.due(oracle.used()) {
                let fit = acc.solve(constraints, cfg.lambda, IndexKind::FaithShap)?;
                checkpoints.push(Checkpoint {
                    evaluations: oracle.used(),
                    index: fit.index,
                });
            }
        }
    }
    let fit = acc.solve(constraints, cfg.lambda, IndexKind::FaithShap)?;
    push_final(&mut checkpoints, oracle.used(), &fit.index);
    Ok(EstimateReport {
        index: fit.index,
        evaluations_used: oracle.used(),
        checkpoints,
        unestimated: Vec::new(),
        std_errors: None,
        samples: acc.rows(),
        rank_deficient: fit.rank_deficient,
    })
}

/// Running mean and variance per basis entry.
struct Moments {
    count: Vec<usize>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            count: vec![0; n],
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, i: usize, x: f64) {
        self.count[i] += 1;
        let delta = x - self.mean[i];
        self.mean[i] += delta / self.count[i] as f64;
        self.m2[i] += delta * (x - self.mean[i]);
    }

    fn std_error(&self, i: usize) -> f64 {
        let n = self.count[i];
        if n < 2 {
            f64::NAN
        } else {
            (self.m2[i] / (n - 1) as f64 / n as f64).sqrt()
        }
    }
}

/// One `Δ_S v(T)` sample for the permutation estimators.
struct DerivativeSample {
    s: Coalition,
    t: Coalition,
}

fn derivative_points(samples: &[DerivativeSample]) -> Vec<Coalition> {
    samples
        .iter()
        .flat_map(|x| x.s.subsets().map(move |l| x.t.union(l)))
        .collect()
}

fn derivative(oracle: &mut Oracle<'_>, s: Coalition, t: Coalition) -> Result<f64> {
    let parity = s.size() & 1;
    let mut acc = 0.0;
    for l in s.subsets() {
        let x = oracle.eval(t.union(l))?;
        if l.size() & 1 == parity {
            acc += x;
        } else {
            acc -= x;
        }
    }
    Ok(acc)
}

/// Top-order Shapley-Taylor samples of one permutation: for every `S` of
/// size `l`, `T` is the set of players before the first member of `S`.
fn taylor_samples(perm: &[usize], order: usize) -> Vec<DerivativeSample> {
    let d = perm.len();
    let mut out = Vec::new();
    let mut prefix = Coalition::EMPTY;
    for k in 0..d {
        let later = &perm[k + 1..];
        if later.len() + 1 >= order {
            for rest in crate::coalition::masks_of_size(later.len(), order - 1) {
                let s = rest
                    .members()
                    .fold(Coalition::singleton(perm[k]), |acc, j| acc.with(later[j]));
                out.push(DerivativeSample { s, t: prefix });
            }
        }
        prefix = prefix.with(perm[k]);
    }
    out
}

/// Shapley interaction samples of one permutation: each window of `l`
/// consecutive players, with `T` the players before the window.
fn window_samples(perm: &[usize], order: usize) -> Vec<DerivativeSample> {
    let d = perm.len();
    let mut out = Vec::new();
    let mut prefix = Coalition::EMPTY;
    for k in 0..=d - order {
        let s = perm[k..k + order]
            .iter()
            .fold(Coalition::EMPTY, |acc, &j| acc.with(j));
        out.push(DerivativeSample { s, t: prefix });
        prefix = prefix.with(perm[k]);
    }
    out
}

fn estimate_by_permutations(
    v: &ValueFunction,
    cfg: &EstimateConfig,
    kind: IndexKind,
    samples_of: fn(&[usize], usize) -> Vec<DerivativeSample>,
    exact_lower_orders: bool,
) -> Result<EstimateReport> {
    let d = v.players();
    cfg.validate(d)?;
    let order = cfg.order;
    let basis = Arc::new(SubsetBasis::new(d, order)?);
    let mut oracle = Oracle::new(v, cfg.budget);
    let mut moments = Moments::new(basis.len());
    let mut fixed = vec![None; basis.len()];

    if exact_lower_orders {
        // Δ_S v(∅) below the top order needs every coalition of size < l.
        let lower: Vec<Coalition> = basis.subsets().iter().copied().filter(|s| s.size() < order).collect();
        if lower.len() > cfg.budget {
            return Err(Error::config(format!(
                "budget {} cannot cover the {} lower-order evaluations",
                cfg.budget,
                lower.len()
            )));
        }
        for s in lower {
            let i = basis.position(s).expect("in basis");
            fixed[i] = Some(derivative(&mut oracle, s, Coalition::EMPTY)?);
        }
    }

    let snapshot = |moments: &Moments, fixed: &[Option<f64>]| -> Result<InteractionIndex> {
        let scores = (0..basis.len())
            .map(|i| fixed[i].unwrap_or(if moments.count[i] > 0 { moments.mean[i] } else { 0.0 }))
            .collect();
        InteractionIndex::new(kind, basis.clone(), scores)
    };

    let mut rng = cfg.rng();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut cadence = Cadence::new(cfg.checkpoint_every);
    let mut checkpoints = Vec::new();
    let max_passes = cfg.max_passes.unwrap_or(cfg.budget);
    let mut passes = 0;
    while passes < max_passes {
        perm.shuffle(&mut rng);
        let samples = samples_of(&perm, order);
        let fresh = oracle.new_among(&derivative_points(&samples));
        if fresh.len() > oracle.remaining() {
            break;
        }
        for x in &samples {
            let value = derivative(&mut oracle, x.s, x.t)?;
            moments.push(basis.position(x.s).expect("sampled sets are in the basis"), value);
        }
        passes += 1;
        if cadence.due(oracle.used()) {
            checkpoints.push(Checkpoint {
                evaluations: oracle.used(),
                index: snapshot(&moments, &fixed)?,
            });
        }
    }
    if passes == 0 {
        return Err(Error::config(format!(
            "budget {} does not cover one permutation pass",
            cfg.budget
        )));
    }
    let index = snapshot(&moments, &fixed)?;
    push_final(&mut checkpoints, oracle.used(), &index);
    let unestimated = basis
        .subsets()
        .iter()
        .enumerate()
        .filter(|(i, _)| fixed[*i].is_none() && moments.count[*i] == 0)
        .map(|(_, s)| *s)
        .collect();
    let std_errors = (0..basis.len())
        .map(|i| if fixed[i].is_some() { 0.0 } else { moments.std_error(i) })
        .collect();
    Ok(EstimateReport {
        index,
        evaluations_used: oracle.used(),
        checkpoints,
        unestimated,
        std_errors: Some(std_errors),
        samples: passes,
        rank_deficient: false,
    })
}

/// Top-order Shapley-Taylor by random permutations; lower orders are the
/// exact `Δ_S v(∅)`. Runs whole passes only.
pub fn estimate_shapley_taylor(v: &ValueFunction, cfg: &EstimateConfig) -> Result<EstimateReport> {
    if cfg.order < 2 {
        return Err(Error::config("permutation Shapley-Taylor needs order >= 2"));
    }
    estimate_by_permutations(v, cfg, IndexKind::ShapleyTaylor, taylor_samples, true)
}

/// Top-order Shapley interaction by windows of random permutations. Lower
/// orders are not estimated.
pub fn estimate_shapley_interaction(
    v: &ValueFunction,
    cfg: &EstimateConfig,
) -> Result<EstimateReport> {
    if cfg.order < 1 {
        return Err(Error::config("permutation Shapley interaction needs order >= 1"));
    }
    estimate_by_permutations(v, cfg, IndexKind::ShapleyInteraction, window_samples, false)
}

/// An estimation strategy selectable by name.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn target(&self) -> IndexKind;
    fn estimate(&self, v: &ValueFunction, cfg: &EstimateConfig) -> Result<EstimateReport>;
}

struct Builtin(EstimatorKind);

impl Estimator for Builtin {
    fn name(&self) -> &str {
        self.0.tag()
    }

    fn target(&self) -> IndexKind {
        self.0.target()
    }

    fn estimate(&self, v: &ValueFunction, cfg: &EstimateConfig) -> Result<EstimateReport> {
        match self.0 {
            EstimatorKind::FaithShapSampling => estimate_faith_shap(v, cfg),
            EstimatorKind::ShapleyTaylorPermutation => estimate_shapley_taylor(v, cfg),
            EstimatorKind::ShapleyInteractionPermutation => estimate_shapley_interaction(v, cfg),
        }
    }
}

pub struct EstimatorRegistry {
    estimators: BTreeMap<String, Box<dyn Estimator>>,
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        EstimatorRegistry {
            estimators: BTreeMap::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        for k in EstimatorKind::ALL {
            r.register(Box::new(Builtin(k)));
        }
        r
    }

    pub fn register(&mut self, estimator: Box<dyn Estimator>) {
        self.estimators.insert(estimator.name().to_string(), estimator);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.estimators.get(name).map(|e| e.as_ref()).ok_or_else(|| {
            Error::config(format!(
                "unknown estimator `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.estimators.keys().map(String::as_str).collect()
    }
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

/// Runs the estimator named by `cfg.kind`.
pub fn estimate(v: &ValueFunction, cfg: &EstimateConfig) -> Result<EstimateReport> {
    Builtin(cfg.kind).estimate(v, cfg)
}
