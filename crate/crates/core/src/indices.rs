//! Exact interaction indices.
//!
//! Each index has two equivalent forms: a weighted sum of discrete
//! derivatives `Σ_{T ⊆ [d]\S} w(|S|,|T|) Δ_S v(T)` and a kernel over the
//! Möbius transform `Σ_{T ⊇ S} k(|S|,|T|) a(T)`. Which one runs depends on
//! how the game is stored:
//!
//! * games whose value depends on `|S|` only collapse both sums over sizes;
//! * Möbius-sparse games push each term down to its subsets;
//! * everything else is tabulated, with `d <= 20` for derivative sums.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::coalition::{binom_f64, ln_factorial, Coalition, SubsetBasis};
use crate::error::{Error, Result};
use crate::game::{MobiusGame, ValueFunction};
use crate::index::{IndexKind, InteractionIndex};
use crate::solver::{solve_constrained, solve_unconstrained};
use crate::transforms::{discrete_derivative_table, mobius_in_place};
use crate::weighting::{faithshap_weights, WeightingScheme};

/// Largest `d` for derivative sums over a full table.
pub const MAX_DERIVATIVE_PLAYERS: usize = 20;

fn ln_binom(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn check_order(d: usize, order: usize) -> Result<()> {
    if order > d {
        return Err(Error::domain(format!("order {order} exceeds d={d}")));
    }
    Ok(())
}

/// Möbius kernel of Faith-Shap for `S ⊆ T`, `|S| = s`, `|T| = t`.
fn faith_shap_kernel(order: usize, s: usize, t: usize) -> f64 {
    if t == s {
        1.0
    } else if t > order && s > 0 {
        let ratio = (ln_binom(t - 1, order) - ln_binom(t + order - 1, order + s)).exp();
        sign(order - s) * s as f64 / (order + s) as f64 * binom_f64(order, s as i64) * ratio
    } else {
        0.0
    }
}

/// Möbius kernel of Faith-Banzhaf.
fn faith_banzhaf_kernel(order: usize, s: usize, t: usize) -> f64 {
    if t == s {
        1.0
    } else if t > order {
        sign(order - s) * 0.5f64.powi((t - s) as i32) * (ln_binom(t - s - 1, order - s)).exp()
    } else {
        0.0
    }
}

fn shapley_interaction_kernel(s: usize, t: usize) -> f64 {
    1.0 / (t - s + 1) as f64
}

fn banzhaf_interaction_kernel(s: usize, t: usize) -> f64 {
    0.5f64.powi((t - s) as i32)
}

fn shapley_taylor_kernel(order: usize, s: usize, t: usize) -> f64 {
    if s < order {
        if t == s {
            1.0
        } else {
            0.0
        }
    } else {
        (-ln_binom(t, order)).exp()
    }
}

/// Derivative weight of the Shapley interaction index.
fn shapley_interaction_weight(d: usize, s: usize, t: usize) -> f64 {
    (ln_factorial(t) + ln_factorial(d - s - t) - ln_factorial(d - s + 1)).exp()
}

fn banzhaf_interaction_weight(d: usize, s: usize) -> f64 {
    0.5f64.powi((d - s) as i32)
}

/// Derivative weight of the top-order Shapley-Taylor index.
fn shapley_taylor_weight(d: usize, order: usize, t: usize) -> f64 {
    (ln_factorial(t) + ln_factorial(d - t - 1) + (order as f64).ln() - ln_factorial(d)).exp()
}

/// How a game's values are made available to the index formulas.
enum Source<'a> {
    /// `v` by coalition size.
    Symmetric(Vec<f64>),
    Terms(&'a MobiusGame),
    Table(Vec<f64>),
}

fn source(v: &ValueFunction) -> Result<Source<'_>> {
    if let Some(profile) = v.size_profile() {
        return Ok(Source::Symmetric(profile));
    }
    if let Some(m) = v.mobius_game() {
        return Ok(Source::Terms(m));
    }
    Ok(Source::Table(v.tabulate()?))
}

/// Möbius coefficients by size for a symmetric game.
fn symmetric_mobius(profile: &[f64]) -> Vec<f64> {
    (0..profile.len()).map(|t| symmetric_derivative(profile, t, 0)).collect()
}

/// `Δ_S v(T)` for a symmetric game with `|S| = s`, `|T| = t`.
fn symmetric_derivative(profile: &[f64], s: usize, t: usize) -> f64 {
    (0..=s)
        .map(|j| sign(s - j) * binom_f64(s, j as i64) * profile[t + j])
        .sum()
}

/// `Σ_{T ⊇ S} kernel(|S|, |T|) a(T)` for every `S` in the basis.
fn mobius_form(
    src: &Source<'_>,
    basis: Arc<SubsetBasis>,
    kind: IndexKind,
    kernel: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<InteractionIndex> {
    let d = basis.players();
    let scores = match src {
        Source::Symmetric(profile) => {
            let a = symmetric_mobius(profile);
            let by_size: Vec<f64> = (0..=basis.order())
                .map(|s| {
                    (s..=d)
                        .map(|t| binom_f64(d - s, (t - s) as i64) * kernel(s, t) * a[t])
                        .sum()
                })
                .collect();
            basis.subsets().iter().map(|s| by_size[s.size()]).collect()
        }
        Source::Terms(m) => {
            let mut scores = vec![0.0; basis.len()];
            for (r, c) in m.terms() {
                let t = r.size();
                for s in r.subsets().filter(|s| s.size() <= basis.order()) {
                    let i = basis.position(s).expect("small subsets are in the basis");
                    scores[i] += kernel(s.size(), t) * c;
                }
            }
            scores
        }
        Source::Table(table) => {
            let mut a = table.clone();
            mobius_in_place(&mut a);
            basis
                .subsets()
                .par_iter()
                .map(|&s| {
                    let sz = s.size();
                    s.complement(d)
                        .subsets()
                        .map(|extra| {
                            let t = s.union(extra);
                            kernel(sz, t.size()) * a[t.index()]
                        })
                        .sum()
                })
                .collect()
        }
    };
    InteractionIndex::new(kind, basis, scores)
}

/// `Σ_{T ⊆ [d]\S} weight(|T|) Δ_S v(T)` over a full table.
fn derivative_sum(table: &[f64], d: usize, s: Coalition, weight: impl Fn(usize) -> f64) -> f64 {
    s.complement(d)
        .subsets()
        .map(|t| weight(t.size()) * discrete_derivative_table(table, s, t))
        .sum()
}

/// Same on a symmetric game, grouped by `|T|`.
fn symmetric_derivative_sum(profile: &[f64], s: usize, weight: impl Fn(usize) -> f64) -> f64 {
    let d = profile.len() - 1;
    (0..=d - s)
        .map(|t| binom_f64(d - s, t as i64) * weight(t) * symmetric_derivative(profile, s, t))
        .sum()
}

fn check_derivative_table(d: usize) -> Result<()> {
    if d > MAX_DERIVATIVE_PLAYERS {
        return Err(Error::domain(format!(
            "derivative sums over a full table support d <= {MAX_DERIVATIVE_PLAYERS}, got {d}"
        )));
    }
    Ok(())
}

/// Derivative-form index: `weight(s, t)` is the weight of `Δ_S v(T)` for
/// `|S| = s`, `|T| = t`.
fn derivative_form(
    v: &ValueFunction,
    order: usize,
    kind: IndexKind,
    weight: impl Fn(usize, usize) -> f64 + Sync,
    kernel: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<InteractionIndex> {
    let d = v.players();
    check_order(d, order)?;
    let basis = Arc::new(SubsetBasis::new(d, order)?);
    match source(v)? {
        Source::Symmetric(profile) => {
            let by_size: Vec<f64> = (0..=order)
                .map(|s| symmetric_derivative_sum(&profile, s, |t| weight(s, t)))
                .collect();
            let scores = basis.subsets().iter().map(|s| by_size[s.size()]).collect();
            InteractionIndex::new(kind, basis, scores)
        }
        src @ Source::Terms(_) => mobius_form(&src, basis, kind, kernel),
        Source::Table(table) => {
            check_derivative_table(d)?;
            let scores = basis
                .subsets()
                .par_iter()
                .map(|&s| derivative_sum(&table, d, s, |t| weight(s.size(), t)))
                .collect();
            InteractionIndex::new(kind, basis, scores)
        }
    }
}

/// Shapley interaction index of every coalition up to size `l`. The entry
/// for `∅` is the same formula at `S = ∅`, a weighted average of `v`.
pub fn shapley_interaction(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    let d = v.players();
    derivative_form(
        v,
        order,
        IndexKind::ShapleyInteraction,
        |s, t| shapley_interaction_weight(d, s, t),
        shapley_interaction_kernel,
    )
}

/// Banzhaf interaction index; the `∅` entry is the mean of `v`.
pub fn banzhaf_interaction(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    let d = v.players();
    derivative_form(
        v,
        order,
        IndexKind::BanzhafInteraction,
        |s, _| banzhaf_interaction_weight(d, s),
        banzhaf_interaction_kernel,
    )
}

/// Shapley-Taylor index of order `l >= 1`: `Δ_S v(∅)` below the top
/// order, a Shapley-weighted derivative average at `|S| = l`.
pub fn shapley_taylor(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    if order == 0 {
        return Err(Error::domain("Shapley-Taylor needs order >= 1"));
    }
    let d = v.players();
    derivative_form(
        v,
        order,
        IndexKind::ShapleyTaylor,
        |s, t| {
            if s < order {
                if t == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                shapley_taylor_weight(d, order, t)
            }
        },
        |s, t| shapley_taylor_kernel(order, s, t),
    )
}

fn faith_index(
    v: &ValueFunction,
    order: usize,
    kind: IndexKind,
    kernel: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<InteractionIndex> {
    let d = v.players();
    check_order(d, order)?;
    let src = source(v)?;
    let basis = Arc::new(SubsetBasis::new(d, order)?);
    mobius_form(&src, basis, kind, kernel)
}

/// Faith-Shap: the least-squares fit under the Shapley kernel with exact
/// fit at `∅` and `[d]`. `E_∅ = v(∅)`.
pub fn faith_shap(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    faith_index(v, order, IndexKind::FaithShap, |s, t| faith_shap_kernel(order, s, t))
}

/// Faith-Banzhaf: the least-squares fit under uniform weights, `∅`
/// included.
pub fn faith_banzhaf(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    faith_index(v, order, IndexKind::FaithBanzhaf, |s, t| faith_banzhaf_kernel(order, s, t))
}

/// The weights `p_t`, `t = 0..=d-l`, that write the top-order Faith-Shap
/// entries as `Σ_{T ⊆ [d]\S} p_{|T|} Δ_S v(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CardinalProbCoefficients {
    pub d: usize,
    pub order: usize,
    pub p: Vec<f64>,
}

impl CardinalProbCoefficients {
    /// `Σ_t C(d-l, t) p_t`, which is 1.
    pub fn total_mass(&self) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(t, p)| binom_f64(self.d - self.order, t as i64) * p)
            .sum()
    }
}

/// `p_t = (2l-1)! (l+t-1)! (d-t-1)! / ((l-1)!² (d+l-1)!)`, evaluated from
/// log-factorials.
pub fn cardinal_prob_coeffs(d: usize, order: usize) -> Result<CardinalProbCoefficients> {
    if order == 0 || order > d {
        return Err(Error::domain(format!("need 1 <= l <= d, got d={d}, l={order}")));
    }
    let head = ln_factorial(2 * order - 1) - 2.0 * ln_factorial(order - 1) - ln_factorial(d + order - 1);
    let p = (0..=d - order)
        .map(|t| (head + ln_factorial(order + t - 1) + ln_factorial(d - t - 1)).exp())
        .collect();
    Ok(CardinalProbCoefficients { d, order, p })
}

/// Top-order Faith-Shap entries as a weighted average of discrete
/// derivatives, in enumeration order.
pub fn faith_shap_top_order(v: &ValueFunction, order: usize) -> Result<Vec<(Coalition, f64)>> {
    let d = v.players();
    let coeffs = cardinal_prob_coeffs(d, order)?;
    let p = &coeffs.p;
    let basis = SubsetBasis::new(d, order)?;
    let top: Vec<Coalition> = basis.subsets().iter().copied().filter(|s| s.size() == order).collect();
    match source(v)? {
        Source::Symmetric(profile) => {
            let e = symmetric_derivative_sum(&profile, order, |t| p[t]);
            Ok(top.into_iter().map(|s| (s, e)).collect())
        }
        Source::Terms(m) => {
            // Δ_S v(T) expanded in Möbius terms; group by term.
            let mut out: BTreeMap<u64, f64> = BTreeMap::new();
            for (r, c) in m.terms() {
                if r.size() < order {
                    continue;
                }
                // Σ_{T ⊆ [d]\S, T ⊇ R\S} p_{|T|} = Σ_k C(d-|R|, k) p_{|R|-l+k}
                let free = d - r.size();
                let w: f64 = (0..=free)
                    .map(|k| binom_f64(free, k as i64) * p[r.size() - order + k])
                    .sum();
                for s in r.subsets().filter(|s| s.size() == order) {
                    *out.entry(s.bits()).or_default() += w * c;
                }
            }
            Ok(top
                .into_iter()
                .map(|s| (s, out.get(&s.bits()).copied().unwrap_or(0.0)))
                .collect())
        }
        Source::Table(table) => {
            check_derivative_table(d)?;
            Ok(top
                .par_iter()
                .map(|&s| (s, derivative_sum(&table, d, s, |t| p[t])))
                .collect())
        }
    }
}

/// An exact index computation selectable by name.
pub trait IndexMethod: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> IndexKind;
    fn describe(&self) -> &str;
    fn compute(&self, v: &ValueFunction, order: usize) -> Result<InteractionIndex>;
}

type IndexFn = fn(&ValueFunction, usize) -> Result<InteractionIndex>;

struct ClosedForm {
    name: &'static str,
    kind: IndexKind,
    describe: &'static str,
    run: IndexFn,
}

impl IndexMethod for ClosedForm {
    fn name(&self) -> &str {
        self.name
    }

    fn kind(&self) -> IndexKind {
        self.kind
    }

    fn describe(&self) -> &str {
        self.describe
    }

    fn compute(&self, v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
        (self.run)(v, order)
    }
}

fn faith_shap_regression(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    solve_constrained(v, &faithshap_weights(v.players())?, order)
}

fn faith_banzhaf_regression(v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    solve_unconstrained(v, &WeightingScheme::uniform(v.players()), order)
}

/// Named exact index methods.
pub struct IndexRegistry {
    methods: BTreeMap<String, Box<dyn IndexMethod>>,
}

impl IndexRegistry {
    pub fn empty() -> Self {
        IndexRegistry {
            methods: BTreeMap::new(),
        }
    }

    /// The five closed forms under their kind tags, plus the two
    /// regression solvers.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        let builtin: [ClosedForm; 7] = [
            ClosedForm {
                name: "faith-shap",
                kind: IndexKind::FaithShap,
                describe: "Faith-Shap from Möbius coefficients",
                run: faith_shap,
            },
            ClosedForm {
                name: "faith-banzhaf",
                kind: IndexKind::FaithBanzhaf,
                describe: "Faith-Banzhaf from Möbius coefficients",
                run: faith_banzhaf,
            },
            ClosedForm {
                name: "shapley-interaction",
                kind: IndexKind::ShapleyInteraction,
                describe: "Shapley interaction index",
                run: shapley_interaction,
            },
            ClosedForm {
                name: "banzhaf-interaction",
                kind: IndexKind::BanzhafInteraction,
                describe: "Banzhaf interaction index",
                run: banzhaf_interaction,
            },
            ClosedForm {
                name: "shapley-taylor",
                kind: IndexKind::ShapleyTaylor,
                describe: "Shapley-Taylor index",
                run: shapley_taylor,
            },
            ClosedForm {
                name: "faith-shap-regression",
                kind: IndexKind::FaithShap,
                describe: "Faith-Shap by constrained weighted least squares",
                run: faith_shap_regression,
            },
            ClosedForm {
                name: "faith-banzhaf-regression",
                kind: IndexKind::FaithBanzhaf,
                describe: "Faith-Banzhaf by uniform least squares",
                run: faith_banzhaf_regression,
            },
        ];
        for m in builtin {
            r.register(Box::new(m));
        }
        r
    }

    /// Adds a method, replacing any previous one of the same name.
    pub fn register(&mut self, method: Box<dyn IndexMethod>) {
        self.methods.insert(method.name().to_string(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn IndexMethod> {
        self.methods.get(name).map(|m| m.as_ref()).ok_or_else(|| {
            Error::config(format!(
                "unknown index `{name}` (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.methods.keys().map(String::as_str).collect()
    }

    /// Runs a method by name. Non-finite scores are a numeric error.
    pub fn compute(&self, name: &str, v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
        let index = self.get(name)?.compute(v, order)?;
        if let Some((s, x)) = index.iter().find(|(_, x)| !x.is_finite()) {
            return Err(Error::Numeric(format!("{name}: score of {s} is {x}")));
        }
        Ok(index)
    }
}

impl Default for IndexRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::builtin_game;

    fn example(name: &str, p: Option<f64>) -> ValueFunction {
        let mut params = BTreeMap::new();
        if let Some(p) = p {
            params.insert("p".to_string(), serde_json::json!(p));
        }
        builtin_game(name, &params).unwrap()
    }

    fn rep(idx: &InteractionIndex) -> (f64, f64) {
        (
            idx.score(Coalition::singleton(0)),
            idx.score(Coalition::from_bits(0b11)),
        )
    }

    #[test]
    fn example_one_values() {
        let v = example("example1", Some(0.1));
        let (a, b) = rep(&faith_shap(&v, 2).unwrap());
        assert!((a - 0.9545).abs() < 1e-4 && (b + 0.0909).abs() < 1e-4);
        let (a, b) = rep(&shapley_taylor(&v, 2).unwrap());
        assert!(a.abs() < 1e-12 && (b - 0.1).abs() < 1e-12);
        let (a, b) = rep(&shapley_interaction(&v, 2).unwrap());
        assert!((a - 0.5).abs() < 1e-12 && b.abs() < 1e-12);
    }

    #[test]
    fn symmetric_path_matches_table_path() {
        for (name, p) in [("example1", Some(0.2)), ("example2", None)] {
            let v = example(name, p);
            let t = ValueFunction::Tabulated(v.to_tabulated().unwrap());
            for order in 1..=3 {
                for f in [faith_shap, faith_banzhaf, shapley_interaction, banzhaf_interaction, shapley_taylor] {
                    let a = f(&v, order).unwrap();
                    let b = f(&t, order).unwrap();
                    assert!(a.max_abs_diff(&b).unwrap() < 1e-9, "{name} {:?} l={order}", a.kind());
                }
                let a = faith_shap_top_order(&v, order).unwrap();
                let b = faith_shap_top_order(&t, order).unwrap();
                for ((s1, x), (s2, y)) in a.iter().zip(&b) {
                    assert_eq!(s1, s2);
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn term_path_matches_table_path() {
        let d = 7;
        let terms = vec![
            (Coalition::from_bits(0b1), 0.7),
            (Coalition::from_bits(0b110), -1.2),
            (Coalition::from_bits(0b1011001), 0.4),
            (Coalition::from_bits(0b111000), 2.0),
        ];
        let v = ValueFunction::mobius(d, terms).unwrap();
        let t = ValueFunction::Tabulated(v.to_tabulated().unwrap());
        for order in 1..=3 {
            for f in [faith_shap, faith_banzhaf, shapley_interaction, banzhaf_interaction, shapley_taylor] {
                let a = f(&v, order).unwrap();
                let b = f(&t, order).unwrap();
                assert!(a.max_abs_diff(&b).unwrap() < 1e-10, "{:?} l={order}", a.kind());
            }
            let a = faith_shap_top_order(&v, order).unwrap();
            let b = faith_shap_top_order(&t, order).unwrap();
            for ((_, x), (_, y)) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cardinal_coefficients_reduce_to_shapley_weights() {
        let d = 9;
        let c = cardinal_prob_coeffs(d, 1).unwrap();
        for (t, p) in c.p.iter().enumerate() {
            let w = (ln_factorial(t) + ln_factorial(d - t - 1) - ln_factorial(d)).exp();
            assert!((p - w).abs() < 1e-15);
        }
        assert!((cardinal_prob_coeffs(11, 2).unwrap().total_mass() - 1.0).abs() < 1e-12);
        assert!(cardinal_prob_coeffs(3, 0).is_err());
        assert!(cardinal_prob_coeffs(3, 4).is_err());
    }

    #[test]
    fn registry_lookup() {
        let r = IndexRegistry::standard();
        for k in [
            IndexKind::FaithShap,
            IndexKind::FaithBanzhaf,
            IndexKind::ShapleyInteraction,
            IndexKind::BanzhafInteraction,
            IndexKind::ShapleyTaylor,
        ] {
            assert_eq!(r.get(k.tag()).unwrap().kind(), k);
        }
        assert!(matches!(r.get("nope"), Err(Error::Config(_))));
        let v = example("example1", Some(0.1));
        let a = r.compute("faith-shap", &v, 2).unwrap();
        let b = r.compute("faith-shap-regression", &v, 2).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-8);
    }

    #[test]
    fn shapley_taylor_rejects_order_zero() {
        assert!(shapley_taylor(&example("example2", None), 0).is_err());
    }
}
