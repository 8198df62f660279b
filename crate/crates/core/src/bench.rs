//! Accuracy metrics and the benchmark scenarios behind `interact bench`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coalition::{binom_f64, Coalition};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateConfig, EstimatorKind};
use crate::game::{builtin_game, load_value_function, ValueFunction};
use crate::index::{IndexKind, InteractionIndex};
use crate::indices::{
    banzhaf_interaction, faith_banzhaf, faith_shap, shapley_interaction, shapley_taylor,
};

fn check_same_shape(exact: &InteractionIndex, est: &InteractionIndex) -> Result<()> {
    if exact.players() != est.players() || exact.order() != est.order() {
        return Err(Error::domain(format!(
            "index shapes differ: d={}, l={} vs d={}, l={}",
            exact.players(),
            exact.order(),
            est.players(),
            est.order()
        )));
    }
    Ok(())
}

/// `Σ_{|S|=l} (E_S - Ê_S)² / C(d, l)`.
pub fn metric_avg_sq_distance(exact: &InteractionIndex, est: &InteractionIndex) -> Result<f64> {
    check_same_shape(exact, est)?;
    let order = exact.order();
    let total: f64 = exact
        .iter()
        .zip(est.scores())
        .filter(|((s, _), _)| s.size() == order)
        .map(|((_, a), b)| (a - b) * (a - b))
        .sum();
    Ok(total / binom_f64(exact.players(), order as i64))
}

/// The `k` top-order coalitions of largest `|E_S|`; ties go to the earlier
/// coalition in enumeration order.
pub fn top_k(index: &InteractionIndex, k: usize) -> Vec<Coalition> {
    let mut top: Vec<(usize, Coalition, f64)> = index
        .top_order()
        .enumerate()
        .map(|(i, (s, x))| (i, s, x.abs()))
        .collect();
    top.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    top.into_iter().take(k).map(|(_, s, _)| s).collect()
}

/// Share of the top-`k` interactions by magnitude that the estimate ranks
/// in its own top `k`.
pub fn metric_precision_at_k(exact: &InteractionIndex, est: &InteractionIndex, k: usize) -> Result<f64> {
    check_same_shape(exact, est)?;
    let available = binom_f64(exact.players(), exact.order() as i64);
    if k == 0 || k as f64 > available {
        return Err(Error::domain(format!(
            "precision@{k} needs 1 <= k <= C(d, l) = {available}"
        )));
    }
    let truth = top_k(exact, k);
    let hits = top_k(est, k).iter().filter(|s| truth.contains(s)).count();
    Ok(hits as f64 / k as f64)
}

/// Exact value of a closed-form index by kind.
pub fn exact_index(kind: IndexKind, v: &ValueFunction, order: usize) -> Result<InteractionIndex> {
    match kind {
        IndexKind::FaithShap => faith_shap(v, order),
        IndexKind::FaithBanzhaf => faith_banzhaf(v, order),
        IndexKind::ShapleyInteraction => shapley_interaction(v, order),
        IndexKind::BanzhafInteraction => banzhaf_interaction(v, order),
        IndexKind::ShapleyTaylor => shapley_taylor(v, order),
        IndexKind::FaithInteraction => Err(Error::config(
            "faith-interaction needs a weighting scheme; use the regression solvers",
        )),
    }
}

/// One line of an example table: representative entries of one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub index: IndexKind,
    /// Entry for `{1}`.
    pub order1: f64,
    /// Entry for `{1, 2}` when `l >= 2`.
    pub order2: Option<f64>,
    /// Entry for `∅`.
    pub empty: f64,
}

/// Per-budget summary of one estimator over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub estimator: EstimatorKind,
    pub budget: usize,
    /// Seeds with an estimate at this budget.
    pub seeds: usize,
    pub mean_sq_distance: f64,
    pub std_sq_distance: f64,
    pub median_sq_distance: f64,
    pub mean_precision: Option<f64>,
    pub std_precision: Option<f64>,
    pub median_precision: Option<f64>,
    pub mean_evaluations: f64,
}

/// Evaluations each estimator needed to reach the distance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub estimator: EstimatorKind,
    pub threshold: f64,
    /// First budget whose median distance is below the threshold.
    pub median_curve_budget: Option<usize>,
    /// Median over seeds of the first checkpoint below the threshold;
    /// seeds that never get there count as infinite.
    pub median_seed_evaluations: Option<usize>,
    pub seeds_reached: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub value: f64,
    pub approx: f64,
}

/// Self-describing output of a benchmark scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scenario: String,
    pub version: String,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<TableRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<ThresholdReport>,
    /// Wall time; left out of reproducible outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl BenchResult {
    fn new(scenario: &str, config: Value) -> Self {
        BenchResult {
            scenario: scenario.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            table: Vec::new(),
            curve: Vec::new(),
            traces: Vec::new(),
            thresholds: Vec::new(),
            runtime_seconds: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench result serializes")
    }

    /// The example table as aligned text.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}{:>12}{:>12}{:>12}", "index", "order 1", "order 2", "empty");
        for row in &self.table {
            let o2 = row.order2.map_or("-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(
                out,
                "{:<22}{:>12.4}{:>12}{:>12.4}",
                row.index.tag(),
                row.order1,
                o2,
                row.empty
            );
        }
        out
    }

    /// The convergence traces as CSV.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from(
            "estimator,budget,seeds,mean_sq_distance,std_sq_distance,median_sq_distance,mean_precision,std_precision,median_precision,mean_evaluations\n",
        );
        let opt = |x: Option<f64>| x.map_or(String::new(), |x| format!("{x:e}"));
        for t in &self.traces {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{},{},{},{}",
                t.estimator,
                t.budget,
                t.seeds,
                t.mean_sq_distance,
                t.std_sq_distance,
                t.median_sq_distance,
                opt(t.mean_precision),
                opt(t.std_precision),
                opt(t.median_precision),
                t.mean_evaluations
            );
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("size,value,approx\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{:e},{:e}", p.size, p.value, p.approx);
        }
        out
    }
}

/// Builtin game of an example table: `1` is the diminishing-returns game
/// (needs `p`), `2` the increasing-returns game; both with 11 players.
pub fn example_game(example: u8, p: Option<f64>) -> Result<ValueFunction> {
    let mut params = BTreeMap::new();
    let name = match example {
        1 => {
            let p = p.ok_or_else(|| Error::config("example 1 needs p"))?;
            params.insert("p".to_string(), serde_json::json!(p));
            "example1"
        }
        2 => {
            if p.is_some() {
                return Err(Error::config("example 2 takes no p"));
            }
            "example2"
        }
        other => return Err(Error::config(format!("unknown example {other}, expected 1 or 2"))),
    };
    builtin_game(name, &params)
}

/// The five closed-form kinds in table order.
pub const TABLE_KINDS: [IndexKind; 5] = [
    IndexKind::FaithShap,
    IndexKind::ShapleyTaylor,
    IndexKind::ShapleyInteraction,
    IndexKind::BanzhafInteraction,
    IndexKind::FaithBanzhaf,
];

/// All five indices on an example game, reduced to their `{1}`, `{1,2}`
/// and `∅` entries.
pub fn run_example_table(example: u8, p: Option<f64>, order: usize) -> Result<BenchResult> {
    if !(1..=2).contains(&order) {
        return Err(Error::config(format!("example tables use order 1 or 2, got {order}")));
    }
    let start = Instant::now();
    let v = example_game(example, p)?;
    let mut result = BenchResult::new(
        "table",
        serde_json::json!({ "example": example, "p": p, "order": order }),
    );
    for kind in TABLE_KINDS {
        let e = exact_index(kind, &v, order)?;
        result.table.push(TableRow {
            index: kind,
            order1: e.score(Coalition::singleton(0)),
            order2: (order >= 2).then(|| e.score(Coalition::from_bits(0b11))),
            empty: e.empty_score(),
        });
    }
    result.runtime_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}

/// `v` by size if it depends on `|S|` only.
fn symmetric_profile(v: &ValueFunction) -> Result<Vec<f64>> {
    if let Some(p) = v.size_profile() {
        return Ok(p);
    }
    let d = v.players();
    let table = v.tabulate()?;
    let mut profile = vec![None; d + 1];
    for (bits, x) in table.iter().enumerate() {
        let s = (bits as u64).count_ones() as usize;
        match profile[s] {
            None => profile[s] = Some(*x),
            Some(y) if y == *x => {}
            Some(_) => {
                return Err(Error::domain(format!(
                    "game is not symmetric: coalitions of size {s} differ"
                )))
            }
        }
    }
    Ok(profile.into_iter().map(|x| x.expect("every size occurs")).collect())
}

/// `(s, v(s), Σ_{T ⊆ S, |T| <= l} E_T)` for `S = {1..s}`, `s = 0..=d`.
pub fn approx_curve(v: &ValueFunction, index: &InteractionIndex) -> Result<Vec<CurvePoint>> {
    let d = v.players();
    if index.players() != d {
        return Err(Error::domain(format!(
            "index has d={}, game has d={d}",
            index.players()
        )));
    }
    let profile = symmetric_profile(v)?;
    Ok((0..=d)
        .map(|s| CurvePoint {
            size: s,
            value: profile[s],
            approx: index.surrogate(Coalition::full(s)),
        })
        .collect())
}

/// `approx_curve` for one index on an example game, packaged as a result.
pub fn run_example_curve(example: u8, p: Option<f64>, kind: IndexKind, order: usize) -> Result<BenchResult> {
    let start = Instant::now();
    let v = example_game(example, p)?;
    let e = exact_index(kind, &v, order)?;
    let mut result = BenchResult::new(
        "curve",
        serde_json::json!({ "example": example, "p": p, "index": kind, "order": order }),
    );
    result.curve = approx_curve(&v, &e)?;
    result.runtime_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}

/// Where the benchmark game comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GameSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: BTreeMap<String, Value>,
    },
    File {
        file: PathBuf,
    },
}

impl GameSpec {
    /// The game of repetition `r`. With `vary_seed`, a builtin game's `seed`
    /// parameter is offset by `r`.
    pub fn instantiate(&self, r: u64, vary_seed: bool) -> Result<ValueFunction> {
        match self {
            GameSpec::Builtin { builtin, params } => {
                let mut params = params.clone();
                if vary_seed && builtin == "sparse_synthetic" {
                    let base = params.get("seed").and_then(Value::as_u64).unwrap_or(0);
                    params.insert("seed".into(), serde_json::json!(base + r));
                }
                builtin_game(builtin, &params)
            }
            GameSpec::File { file } => load_value_function(file),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_threshold() -> f64 {
    1e-3
}

fn default_checkpoint() -> usize {
    200
}

fn default_k() -> usize {
    10
}

/// Configuration of a convergence benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub game: GameSpec,
    pub estimators: Vec<EstimatorKind>,
    pub order: usize,
    /// Largest budget; every estimator runs once per seed up to it.
    pub budget: usize,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    /// Budgets to report; defaults to every checkpoint multiple.
    #[serde(default)]
    pub budgets: Option<Vec<usize>>,
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_true")]
    pub vary_game_seed: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_k")]
    pub precision_k: usize,
    /// Permutation pass cap per run.
    #[serde(default)]
    pub max_passes: Option<usize>,
}

impl ConvergenceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))
    }

    fn budget_grid(&self) -> Vec<usize> {
        match &self.budgets {
            Some(b) => b.clone(),
            None => (1..=self.budget / self.checkpoint_every)
                .map(|k| k * self.checkpoint_every)
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::config("need at least one seed"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("need at least one estimator"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every must be positive"));
        }
        if self.budget_grid().iter().any(|b| *b == 0 || *b > self.budget) {
            return Err(Error::config("report budgets must lie in 1..=budget"));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::config("threshold must be positive"));
        }
        Ok(())
    }
}

/// Metrics of one run at each checkpoint.
struct RunTrace {
    evaluations: Vec<usize>,
    sq_distance: Vec<f64>,
    precision: Vec<Option<f64>>,
}

impl RunTrace {
    /// Latest checkpoint affordable with `budget`.
    fn at(&self, budget: usize) -> Option<usize> {
        self.evaluations.iter().rposition(|e| *e <= budget)
    }
}

fn mean_std_median(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std, median(xs))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_one(
    spec: &ConvergenceSpec,
    kind: EstimatorKind,
    rep: u64,
) -> Result<RunTrace> {
    let v = spec.game.instantiate(rep, spec.vary_game_seed)?;
    let exact = exact_index(kind.target(), &v, spec.order)?;
    let mut cfg = EstimateConfig::new(kind, spec.order, spec.budget, spec.seed)
        .with_lambda(spec.lambda)
        .with_checkpoints(spec.checkpoint_every)
        .with_repetition(rep);
    cfg.max_passes = spec.max_passes;
    let report = estimate(&v, &cfg)?;
    let k_ok = spec.precision_k as f64 <= binom_f64(v.players(), spec.order as i64);
    let mut trace = RunTrace {
        evaluations: Vec::new(),
        sq_distance: Vec::new(),
        precision: Vec::new(),
    };
    for c in &report.checkpoints {
        trace.evaluations.push(c.evaluations);
        trace.sq_distance.push(metric_avg_sq_distance(&exact, &c.index)?);
        trace.precision.push(if k_ok {
            Some(metric_precision_at_k(&exact, &c.index, spec.precision_k)?)
        } else {
            None
        });
    }
    Ok(trace)
}

/// Runs every estimator on every seed and summarizes both metrics per
/// budget. Seeds run in parallel when the game allows it.
pub fn convergence_bench(spec: &ConvergenceSpec) -> Result<BenchResult> {
    spec.validate()?;
    let start = Instant::now();
    let grid = spec.budget_grid();
    let parallel = spec.game.instantiate(0, spec.vary_game_seed)?.is_thread_safe();
    let mut result = BenchResult::new(
        "converge",
        serde_json::to_value(spec).expect("spec serializes"),
    );
    for &kind in &spec.estimators {
        let reps: Vec<u64> = (0..spec.seeds as u64).collect();
        let runs: Vec<RunTrace> = if parallel {
            reps.par_iter().map(|r| run_one(spec, kind, *r)).collect::<Result<_>>()?
        } else {
            reps.iter().map(|r| run_one(spec, kind, *r)).collect::<Result<_>>()?
        };
        let mut first_budget = None;
        for &b in &grid {
            let picks: Vec<(usize, &RunTrace)> =
                runs.iter().filter_map(|t| t.at(b).map(|i| (i, t))).collect();
            if picks.is_empty() {
                continue;
            }
            let sq: Vec<f64> = picks.iter().map(|(i, t)| t.sq_distance[*i]).collect();
            let prec: Option<Vec<f64>> = picks.iter().map(|(i, t)| t.precision[*i]).collect();
            let evals: Vec<f64> = picks.iter().map(|(i, t)| t.evaluations[*i] as f64).collect();
            let (mean_sq, std_sq, median_sq) = mean_std_median(&sq);
            let prec_stats = prec.as_deref().map(mean_std_median);
            // Seeds without an estimate at this budget count as not yet
            // converged.
            if first_budget.is_none() && picks.len() == runs.len() && median_sq < spec.threshold {
                first_budget = Some(b);
            }
            result.traces.push(TracePoint {
                estimator: kind,
                budget: b,
                seeds: picks.len(),
                mean_sq_distance: mean_sq,
                std_sq_distance: std_sq,
                median_sq_distance: median_sq,
                mean_precision: prec_stats.map(|p| p.0),
                std_precision: prec_stats.map(|p| p.1),
                median_precision: prec_stats.map(|p| p.2),
                mean_evaluations: evals.iter().sum::<f64>() / evals.len() as f64,
            });
        }
        let reached: Vec<f64> = runs
            .iter()
            .map(|t| {
                t.sq_distance
                    .iter()
                    .position(|x| *x < spec.threshold)
                    .map_or(f64::INFINITY, |i| t.evaluations[i] as f64)
            })
            .collect();
        let seeds_reached = reached.iter().filter(|x| x.is_finite()).count();
        let m = median(&reached);
        result.thresholds.push(ThresholdReport {
            estimator: kind,
            threshold: spec.threshold,
            median_curve_budget: first_budget,
            median_seed_evaluations: m.is_finite().then(|| m.round() as usize),
            seeds_reached,
        });
    }
    result.runtime_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}
