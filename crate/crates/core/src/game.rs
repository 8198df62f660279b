//! Set value functions `v: 2^[d] -> R`, their JSON form, builtin games and
//! the player reductions used by the recursive and 2-efficiency axioms.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coalition::{binom_f64, Coalition, MAX_LATTICE_PLAYERS, MAX_PLAYERS};
use crate::error::{Error, Result};

/// Signature of a foreign value oracle. The coalition is handed over as a
/// mask; the caller is responsible for its own player numbering.
pub type CallbackFn = dyn Fn(Coalition) -> std::result::Result<f64, String> + Send + Sync;

/// A game given by its full table, `values[S.bits()] = v(S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedGame {
    d: usize,
    values: Vec<f64>,
}

impl TabulatedGame {
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        if d > MAX_LATTICE_PLAYERS {
            return Err(Error::domain(format!(
                "tabulated games are capped at d <= {MAX_LATTICE_PLAYERS}, got {d}"
            )));
        }
        if values.len() != 1usize << d {
            return Err(Error::parse(
                "values",
                format!("table for d={d} needs {} entries, got {}", 1usize << d, values.len()),
            ));
        }
        Ok(TabulatedGame { d, values })
    }

    pub fn players(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A game given by its nonzero Möbius coefficients,
/// `v(S) = sum_{R ⊆ S} a(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusGame {
    d: usize,
    terms: Vec<(Coalition, f64)>,
}

impl MobiusGame {
    pub fn new(d: usize, terms: Vec<(Coalition, f64)>) -> Result<Self> {
        if d > MAX_PLAYERS {
            return Err(Error::domain(format!("d={d} exceeds {MAX_PLAYERS}")));
        }
        let mut seen = HashMap::with_capacity(terms.len());
        for (k, (r, _)) in terms.iter().enumerate() {
            if !r.fits(d) {
                return Err(Error::parse(
                    format!("terms[{k}]"),
                    format!("subset {r} not within [{d}]"),
                ));
            }
            if let Some(first) = seen.insert(r.bits(), k) {
                return Err(Error::parse(
                    format!("terms[{k}]"),
                    format!("subset {r} duplicates terms[{first}]"),
                ));
            }
        }
        Ok(MobiusGame { d, terms })
    }

    pub fn players(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &[(Coalition, f64)] {
        &self.terms
    }

    pub fn eval(&self, s: Coalition) -> f64 {
        self.terms
            .iter()
            .filter(|(r, _)| r.is_subset_of(s))
            .map(|(_, a)| a)
            .sum()
    }

    /// Smallest `l_v` such that every nonzero coefficient sits on a set of
    /// size at most `l_v`.
    pub fn order(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(r, _)| r.size())
            .max()
            .unwrap_or(0)
    }
}

/// Parameters of the seeded synthetic sparse game
/// `v(x) = sum_i a_i prod_{j in S_i} x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseSyntheticParams {
    pub d: usize,
    pub n_terms: usize,
    pub max_term_size: usize,
    pub seed: u64,
    /// `a_i ~ Uniform[-i * coef_step, i * coef_step]`.
    pub coef_step: f64,
}

impl Default for SparseSyntheticParams {
    fn default() -> Self {
        SparseSyntheticParams {
            d: 15,
            n_terms: 10,
            max_term_size: 5,
            seed: 0,
            coef_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinGame {
    /// Diminishing returns: `0` for `|S| <= 1`, else `|S| - p C(|S|, 2)`.
    Example1 { d: usize, p: f64 },
    /// Increasing returns: `0, 3` for sizes 0 and 1, else
    /// `2|S| - 2 ln(|S| + 1)`.
    Example2 { d: usize },
    /// `1[S ⊇ R]`.
    Unanimity { d: usize, carrier: Coalition },
    SparseSynthetic {
        params: SparseSyntheticParams,
        game: MobiusGame,
    },
}

impl BuiltinGame {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinGame::Example1 { .. } => "example1",
            BuiltinGame::Example2 { .. } => "example2",
            BuiltinGame::Unanimity { .. } => "unanimity",
            BuiltinGame::SparseSynthetic { .. } => "sparse_synthetic",
        }
    }

    pub fn players(&self) -> usize {
        match self {
            BuiltinGame::Example1 { d, .. }
            | BuiltinGame::Example2 { d }
            | BuiltinGame::Unanimity { d, .. } => *d,
            BuiltinGame::SparseSynthetic { params, .. } => params.d,
        }
    }

    pub fn eval(&self, s: Coalition) -> f64 {
        match self {
            BuiltinGame::Example1 { p, .. } => example1_value(*p, s.size()),
            BuiltinGame::Example2 { .. } => example2_value(s.size()),
            BuiltinGame::Unanimity { carrier, .. } => {
                if carrier.is_subset_of(s) {
                    1.0
                } else {
                    0.0
                }
            }
            BuiltinGame::SparseSynthetic { game, .. } => game.eval(s),
        }
    }

    /// Parameters as they appear in the JSON `params` object.
    pub fn params(&self) -> Value {
        match self {
            BuiltinGame::Example1 { d, p } => serde_json::json!({ "d": d, "p": p }),
            BuiltinGame::Example2 { d } => serde_json::json!({ "d": d }),
            BuiltinGame::Unanimity { d, carrier } => {
                serde_json::json!({ "d": d, "R": carrier.players() })
            }
            BuiltinGame::SparseSynthetic { params, .. } => {
                serde_json::to_value(params).expect("plain struct serializes")
            }
        }
    }
}

fn example1_value(p: f64, size: usize) -> f64 {
    if size <= 1 {
        0.0
    } else {
        size as f64 - p * binom_f64(size, 2)
    }
}

fn example2_value(size: usize) -> f64 {
    match size {
        0 => 0.0,
        1 => 3.0,
        s => 2.0 * s as f64 - 2.0 * (s as f64 + 1.0).ln(),
    }
}

/// A host-supplied value oracle.
#[derive(Clone)]
pub struct CallbackGame {
    d: usize,
    func: Arc<CallbackFn>,
    reentrant: bool,
}

impl CallbackGame {
    pub fn new(d: usize, func: Arc<CallbackFn>) -> Result<Self> {
        if d == 0 || d > MAX_PLAYERS {
            return Err(Error::domain(format!("callback game needs 1 <= d <= {MAX_PLAYERS}")));
        }
        Ok(CallbackGame {
            d,
            func,
            reentrant: false,
        })
    }

    /// Marks the callback as safe to call from several threads at once.
    pub fn reentrant(mut self, yes: bool) -> Self {
        self.reentrant = yes;
        self
    }

    pub fn is_reentrant(&self) -> bool {
        self.reentrant
    }

    pub fn players(&self) -> usize {
        self.d
    }

    pub fn call(&self, s: Coalition) -> Result<f64> {
        match (self.func)(s) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(Error::Evaluation {
                coalition: s,
                message: format!("non-finite value {v}"),
            }),
            Err(message) => Err(Error::Evaluation {
                coalition: s,
                message,
            }),
        }
    }
}

impl fmt::Debug for CallbackGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallbackGame")
            .field("d", &self.d)
            .field("reentrant", &self.reentrant)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ValueFunction {
    Tabulated(TabulatedGame),
    Mobius(MobiusGame),
    Builtin(BuiltinGame),
    Callback(CallbackGame),
}

impl ValueFunction {
    pub fn table(d: usize, values: Vec<f64>) -> Result<Self> {
        Ok(ValueFunction::Tabulated(TabulatedGame::new(d, values)?))
    }

    pub fn mobius(d: usize, terms: Vec<(Coalition, f64)>) -> Result<Self> {
        Ok(ValueFunction::Mobius(MobiusGame::new(d, terms)?))
    }

    pub fn callback(d: usize, func: Arc<CallbackFn>) -> Result<Self> {
        Ok(ValueFunction::Callback(CallbackGame::new(d, func)?))
    }

    pub fn players(&self) -> usize {
        match self {
            ValueFunction::Tabulated(t) => t.d,
            ValueFunction::Mobius(m) => m.d,
            ValueFunction::Builtin(b) => b.players(),
            ValueFunction::Callback(c) => c.d,
        }
    }

    pub fn eval(&self, s: Coalition) -> Result<f64> {
        debug_assert!(s.fits(self.players()), "{s} outside [{}]", self.players());
        match self {
            ValueFunction::Tabulated(t) => Ok(t.values[s.index()]),
            ValueFunction::Mobius(m) => Ok(m.eval(s)),
            ValueFunction::Builtin(b) => Ok(b.eval(s)),
            ValueFunction::Callback(c) => c.call(s),
        }
    }

    /// Whether concurrent evaluation is allowed.
    pub fn is_thread_safe(&self) -> bool {
        match self {
            ValueFunction::Callback(c) => c.reentrant,
            _ => true,
        }
    }

    /// For games whose value depends on `|S|` only: `v` by size, `0..=d`.
    pub fn size_profile(&self) -> Option<Vec<f64>> {
        match self {
            ValueFunction::Builtin(b @ (BuiltinGame::Example1 { .. } | BuiltinGame::Example2 { .. })) => {
                let d = b.players();
                Some(
                    (0..=d)
                        .map(|s| b.eval(Coalition::full(s)))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Möbius terms when the game carries them natively.
    pub fn mobius_game(&self) -> Option<&MobiusGame> {
        match self {
            ValueFunction::Mobius(m) => Some(m),
            ValueFunction::Builtin(BuiltinGame::SparseSynthetic { game, .. }) => Some(game),
            _ => None,
        }
    }

    /// The full value table, indexed by coalition mask.
    pub fn tabulate(&self) -> Result<Vec<f64>> {
        let d = self.players();
        if d > MAX_LATTICE_PLAYERS {
            return Err(Error::domain(format!(
                "cannot tabulate d={d}: exact lattice operations are capped at d <= {MAX_LATTICE_PLAYERS}"
            )));
        }
        match self {
            ValueFunction::Tabulated(t) => Ok(t.values.clone()),
            ValueFunction::Mobius(m) => {
                let mut table = vec![0.0; 1usize << d];
                for (r, a) in &m.terms {
                    table[r.index()] += a;
                }
                crate::transforms::zeta_in_place(&mut table);
                Ok(table)
            }
            _ => (0..1u64 << d)
                .map(|bits| self.eval(Coalition::from_bits(bits)))
                .collect(),
        }
    }

    pub fn to_tabulated(&self) -> Result<TabulatedGame> {
        TabulatedGame::new(self.players(), self.tabulate()?)
    }
}

impl From<TabulatedGame> for ValueFunction {
    fn from(t: TabulatedGame) -> Self {
        ValueFunction::Tabulated(t)
    }
}

impl From<MobiusGame> for ValueFunction {
    fn from(m: MobiusGame) -> Self {
        ValueFunction::Mobius(m)
    }
}

impl From<BuiltinGame> for ValueFunction {
    fn from(b: BuiltinGame) -> Self {
        ValueFunction::Builtin(b)
    }
}

/// Order `l_v` of a Möbius-sparse game.
pub fn mobius_order(v: &MobiusGame) -> usize {
    v.order()
}

fn param_f64(params: &BTreeMap<String, Value>, key: &str) -> Result<Option<f64>> {
    match params.get(key) {
        None => Ok(None),
        Some(x) => x
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::config(format!("parameter `{key}` must be a number"))),
    }
}

fn param_usize(params: &BTreeMap<String, Value>, key: &str) -> Result<Option<usize>> {
    match params.get(key) {
        None => Ok(None),
        Some(x) => x
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| Error::config(format!("parameter `{key}` must be a nonnegative integer"))),
    }
}

fn check_known(name: &str, params: &BTreeMap<String, Value>, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::config(format!(
                "unknown parameter `{key}` for builtin `{name}` (expected one of {allowed:?})"
            )));
        }
    }
    Ok(())
}

/// Constructs one of the named builtin games.
///
/// `example1` takes `p` in (0,1) and `d` (default 11); `example2` takes `d`
/// (default 11); `unanimity` takes `d` and the carrier `R` as a player list;
/// `sparse_synthetic` takes `d`, `n_terms`, `max_term_size`, `seed` and
/// `coef_step`.
pub fn builtin_game(name: &str, params: &BTreeMap<String, Value>) -> Result<ValueFunction> {
    let game = match name {
        "example1" => {
            check_known(name, params, &["p", "d"])?;
            let p = param_f64(params, "p")?
                .ok_or_else(|| Error::config("example1 needs parameter `p`"))?;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config(format!("example1 needs p in (0,1), got {p}")));
            }
            let d = param_usize(params, "d")?.unwrap_or(11);
            check_players(d)?;
            BuiltinGame::Example1 { d, p }
        }
        "example2" => {
            check_known(name, params, &["d"])?;
            let d = param_usize(params, "d")?.unwrap_or(11);
            check_players(d)?;
            BuiltinGame::Example2 { d }
        }
        "unanimity" => {
            check_known(name, params, &["d", "R"])?;
            let d = param_usize(params, "d")?
                .ok_or_else(|| Error::config("unanimity needs parameter `d`"))?;
            check_players(d)?;
            let r = params
                .get("R")
                .ok_or_else(|| Error::config("unanimity needs parameter `R`"))?;
            let players: Vec<usize> = serde_json::from_value(r.clone())
                .map_err(|e| Error::config(format!("parameter `R`: {e}")))?;
            let carrier = Coalition::from_players(&players, d)
                .map_err(|e| Error::config(format!("parameter `R`: {e}")))?;
            BuiltinGame::Unanimity { d, carrier }
        }
        "sparse_synthetic" => {
            check_known(name, params, &["d", "n_terms", "max_term_size", "seed", "coef_step"])?;
            let defaults = SparseSyntheticParams::default();
            let p = SparseSyntheticParams {
                d: param_usize(params, "d")?.unwrap_or(defaults.d),
                n_terms: param_usize(params, "n_terms")?.unwrap_or(defaults.n_terms),
                max_term_size: param_usize(params, "max_term_size")?
                    .unwrap_or(defaults.max_term_size),
                seed: param_usize(params, "seed")?.map_or(defaults.seed, |s| s as u64),
                coef_step: param_f64(params, "coef_step")?.unwrap_or(defaults.coef_step),
            };
            return sparse_synthetic(p);
        }
        other => {
            return Err(Error::config(format!(
                "unknown builtin game `{other}` (expected example1, example2, unanimity, sparse_synthetic)"
            )))
        }
    };
    Ok(ValueFunction::Builtin(game))
}

fn check_players(d: usize) -> Result<()> {
    if d == 0 || d > MAX_PLAYERS {
        Err(Error::config(format!("d must lie in 1..={MAX_PLAYERS}, got {d}")))
    } else {
        Ok(())
    }
}

/// Seeded synthetic sparse game. Each carrier `S_i` is drawn uniformly from
/// the nonempty subsets of size at most `max_term_size`; repeated carriers
/// have their coefficients merged.
pub fn sparse_synthetic(params: SparseSyntheticParams) -> Result<ValueFunction> {
    check_players(params.d)?;
    if params.max_term_size == 0 || params.max_term_size > params.d {
        return Err(Error::config(format!(
            "max_term_size must lie in 1..={}, got {}",
            params.d, params.max_term_size
        )));
    }
    if !(params.coef_step.is_finite() && params.coef_step > 0.0) {
        return Err(Error::config("coef_step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size_weights: Vec<f64> = (1..=params.max_term_size)
        .map(|s| binom_f64(params.d, s as i64))
        .collect();
    let size_dist = rand::distributions::WeightedIndex::new(&size_weights)
        .map_err(|e| Error::config(format!("term size distribution: {e}")))?;

    let mut merged: Vec<(Coalition, f64)> = Vec::with_capacity(params.n_terms);
    for i in 1..=params.n_terms {
        let half_width = i as f64 * params.coef_step;
        let coef = rng.gen_range(-half_width..=half_width);
        let size = 1 + rng.sample(&size_dist);
        let carrier = sample_indices(&mut rng, params.d, size)
            .iter()
            .fold(Coalition::EMPTY, |acc, b| acc.with(b));
        match merged.iter_mut().find(|(r, _)| *r == carrier) {
            Some((_, a)) => *a += coef,
            None => merged.push((carrier, coef)),
        }
    }
    let game = MobiusGame::new(params.d, merged)?;
    Ok(ValueFunction::Builtin(BuiltinGame::SparseSynthetic { params, game }))
}

/// A one-player reduction of a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameReduction {
    /// `v'(T) = v(T)` on `[d] \ j`.
    RemovePlayer(usize),
    /// `v'(T) = v(T ∪ j) - v(j)` on `[d] \ j`.
    RemovePlayerWithJ(usize),
    /// Players `i` and `j` act as one; the merged player takes the slot of
    /// `min(i, j)` and the players above `max(i, j)` shift down.
    MergePlayers(usize, usize),
}

/// Applies a reduction; players are 1-indexed. The result is tabulated over
/// `d - 1` players.
pub fn reduce_game(v: &ValueFunction, reduction: GameReduction) -> Result<ValueFunction> {
    let d = v.players();
    if d < 2 {
        return Err(Error::domain("reductions need at least two players"));
    }
    if d - 1 > MAX_LATTICE_PLAYERS {
        return Err(Error::domain(format!("reduced game with d={} cannot be tabulated", d - 1)));
    }
    let check = |p: usize| -> Result<usize> {
        if p == 0 || p > d {
            Err(Error::domain(format!("player {p} outside 1..={d}")))
        } else {
            Ok(p - 1)
        }
    };
    let n = 1usize << (d - 1);
    let values: Vec<f64> = match reduction {
        GameReduction::RemovePlayer(j) => {
            let j = check(j)?;
            (0..n as u64)
                .map(|m| v.eval(Coalition::from_bits(m).insert_position(j)))
                .collect::<Result<_>>()?
        }
        GameReduction::RemovePlayerWithJ(j) => {
            let j = check(j)?;
            let vj = v.eval(Coalition::singleton(j))?;
            (0..n as u64)
                .map(|m| {
                    v.eval(Coalition::from_bits(m).insert_position(j).with(j))
                        .map(|x| x - vj)
                })
                .collect::<Result<_>>()?
        }
        GameReduction::MergePlayers(i, j) => {
            let (i, j) = (check(i)?, check(j)?);
            if i == j {
                return Err(Error::domain("cannot merge a player with itself"));
            }
            let (lo, hi) = (i.min(j), i.max(j));
            (0..n as u64)
                .map(|m| {
                    let mut s = Coalition::from_bits(m).insert_position(hi);
                    if s.contains(lo) {
                        s = s.with(hi);
                    }
                    v.eval(s)
                })
                .collect::<Result<_>>()?
        }
    };
    ValueFunction::table(d - 1, values)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Serialize, Deserialize)]
struct TermJson {
    subset: Vec<usize>,
    coef: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameJson {
    d: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<TermJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<BTreeMap<String, Value>>,
}

/// Parses a value function from its JSON text.
pub fn parse_value_function(text: &str) -> Result<ValueFunction> {
    let raw: GameJson = serde_json::from_str(text).map_err(|e| {
        Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let d = raw.d;
    match raw.kind.as_str() {
        "table" => {
            let values = raw
                .values
                .ok_or_else(|| Error::parse("values", "kind `table` needs `values`"))?;
            ValueFunction::table(d, values)
        }
        "mobius" => {
            let terms = raw
                .terms
                .ok_or_else(|| Error::parse("terms", "kind `mobius` needs `terms`"))?;
            let terms = terms
                .into_iter()
                .enumerate()
                .map(|(k, t)| {
                    Coalition::from_players(&t.subset, d)
                        .map(|c| (c, t.coef))
                        .map_err(|e| Error::parse(format!("terms[{k}].subset"), e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            ValueFunction::mobius(d, terms)
        }
        "builtin" => {
            let name = raw
                .name
                .ok_or_else(|| Error::parse("name", "kind `builtin` needs `name`"))?;
            let mut params = raw.params.unwrap_or_default();
            params.entry("d".to_string()).or_insert_with(|| Value::from(d));
            let game = builtin_game(&name, &params)
                .map_err(|e| Error::parse("params", e.to_string()))?;
            if game.players() != d {
                return Err(Error::parse("d", "top-level `d` disagrees with params.d"));
            }
            Ok(game)
        }
        other => Err(Error::parse(
            "kind",
            format!("unknown kind `{other}` (expected table, mobius, builtin)"),
        )),
    }
}

pub fn load_value_function(path: impl AsRef<Path>) -> Result<ValueFunction> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_value_function(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn value_function_to_json(v: &ValueFunction) -> Result<String> {
    let d = v.players();
    let raw = match v {
        ValueFunction::Tabulated(t) => GameJson {
            d,
            kind: "table".into(),
            values: Some(t.values.clone()),
            terms: None,
            name: None,
            params: None,
        },
        ValueFunction::Mobius(m) => GameJson {
            d,
            kind: "mobius".into(),
            values: None,
            terms: Some(
                m.terms
                    .iter()
                    .map(|(r, a)| TermJson {
                        subset: r.players(),
                        coef: *a,
                    })
                    .collect(),
            ),
            name: None,
            params: None,
        },
        ValueFunction::Builtin(b) => GameJson {
            d,
            kind: "builtin".into(),
            values: None,
            terms: None,
            name: Some(b.name().into()),
            params: Some(
                serde_json::from_value(b.params()).expect("builtin params form an object"),
            ),
        },
        ValueFunction::Callback(_) => {
            return Err(Error::config("callback games cannot be serialized"))
        }
    };
    serde_json::to_string_pretty(&raw).map_err(|e| Error::config(e.to_string()))
}

pub fn save_value_function(v: &ValueFunction, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, value_function_to_json(v)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::mobius_transform;

    fn params(json: Value) -> BTreeMap<String, Value> {
        serde_json::from_value(json).unwrap()
    }

    fn players(list: &[usize], d: usize) -> Coalition {
        Coalition::from_players(list, d).unwrap()
    }

    #[test]
    fn additive_mobius_eval() {
        let v = ValueFunction::mobius(2, vec![(players(&[1], 2), 1.0), (players(&[2], 2), 1.0)])
            .unwrap();
        assert_eq!(v.eval(players(&[1, 2], 2)).unwrap(), 2.0);
        assert_eq!(v.eval(Coalition::EMPTY).unwrap(), 0.0);
    }

    #[test]
    fn example_games_by_size() {
        let ex1 = builtin_game("example1", &params(serde_json::json!({"p": 0.1}))).unwrap();
        assert!((ex1.eval(Coalition::full(11)).unwrap() - 5.5).abs() < 1e-12);
        assert_eq!(ex1.eval(players(&[4], 11)).unwrap(), 0.0);
        let ex1b = builtin_game("example1", &params(serde_json::json!({"p": 0.2}))).unwrap();
        assert!(ex1b.eval(Coalition::full(11)).unwrap().abs() < 1e-12);

        let ex2 = builtin_game("example2", &BTreeMap::new()).unwrap();
        let full = ex2.eval(Coalition::full(11)).unwrap();
        assert!((full - (22.0 - 2.0 * 12f64.ln())).abs() < 1e-12);
        assert!((full - 17.030).abs() < 5e-4);
        // Efficiency of the singleton Shapley value: 11 * 1.55 ~ v([11]).
        assert!((full / 11.0 - 1.55).abs() < 0.005);
    }

    #[test]
    fn example_games_are_symmetric() {
        for v in [
            builtin_game("example1", &params(serde_json::json!({"p": 0.1}))).unwrap(),
            builtin_game("example2", &BTreeMap::new()).unwrap(),
        ] {
            let profile = v.size_profile().unwrap();
            for bits in 0..1u64 << 11 {
                let s = Coalition::from_bits(bits);
                assert_eq!(v.eval(s).unwrap(), profile[s.size()]);
            }
        }
    }

    #[test]
    fn unanimity_indicator() {
        let v = builtin_game("unanimity", &params(serde_json::json!({"d": 3, "R": [1, 2]})))
            .unwrap();
        assert_eq!(v.eval(players(&[1], 3)).unwrap(), 0.0);
        assert_eq!(v.eval(players(&[1, 2, 3], 3)).unwrap(), 1.0);
    }

    #[test]
    fn builtin_parameter_errors() {
        let bad = |name: &str, p: Value| builtin_game(name, &params(p)).unwrap_err();
        assert!(matches!(bad("example1", serde_json::json!({})), Error::Config(_)));
        assert!(matches!(bad("example1", serde_json::json!({"p": 1.5})), Error::Config(_)));
        assert!(matches!(bad("example1", serde_json::json!({"p": 0.1, "q": 1})), Error::Config(_)));
        assert!(matches!(bad("nope", serde_json::json!({})), Error::Config(_)));
        assert!(matches!(
            bad("sparse_synthetic", serde_json::json!({"d": 4, "max_term_size": 5})),
            Error::Config(_)
        ));
    }

    #[test]
    fn sparse_synthetic_is_reproducible() {
        let p = SparseSyntheticParams { seed: 42, ..Default::default() };
        let a = sparse_synthetic(p).unwrap();
        let b = sparse_synthetic(p).unwrap();
        let (ga, gb) = (a.mobius_game().unwrap(), b.mobius_game().unwrap());
        assert_eq!(ga.terms().len(), gb.terms().len());
        for ((ra, ca), (rb, cb)) in ga.terms().iter().zip(gb.terms()) {
            assert_eq!(ra, rb);
            assert_eq!(ca.to_bits(), cb.to_bits());
        }
        for (k, (r, a)) in ga.terms().iter().enumerate() {
            assert!(r.size() >= 1 && r.size() <= 5);
            // merged carriers can exceed a single term's range only by sums
            assert!(a.abs() <= 0.1 * 10.0 * (k + 1) as f64 + 1e-12);
        }
        let other = sparse_synthetic(SparseSyntheticParams { seed: 43, ..p }).unwrap();
        assert_ne!(other.mobius_game().unwrap().terms(), ga.terms());
    }

    #[test]
    fn mobius_order_examples() {
        let additive = MobiusGame::new(
            3,
            (0..3).map(|i| (Coalition::singleton(i), 1.0)).collect(),
        )
        .unwrap();
        assert_eq!(mobius_order(&additive), 1);
        assert_eq!(mobius_order(&MobiusGame::new(4, vec![]).unwrap()), 0);
        let single = MobiusGame::new(6, vec![(Coalition::full(5), 2.0)]).unwrap();
        assert_eq!(mobius_order(&single), 5);

        // s - p*C(s,2) without the singleton threshold is a pairwise game.
        let d = 6;
        let values = (0..1u64 << d)
            .map(|m| {
                let s = m.count_ones() as f64;
                s - 0.1 * s * (s - 1.0) / 2.0
            })
            .collect();
        let a = mobius_transform(&TabulatedGame::new(d, values).unwrap()).unwrap();
        let terms: Vec<_> = a
            .coefficients()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-9)
            .map(|(bits, c)| (Coalition::from_bits(bits as u64), *c))
            .collect();
        assert_eq!(mobius_order(&MobiusGame::new(d, terms).unwrap()), 2);
    }

    #[test]
    fn mobius_duplicates_rejected() {
        let r = players(&[1], 2);
        assert!(matches!(
            MobiusGame::new(2, vec![(r, 1.0), (r, 2.0)]),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn json_loading() {
        let v = parse_value_function(r#"{"d":2,"kind":"table","values":[0,1,1,2]}"#).unwrap();
        assert_eq!(v.eval(Coalition::full(2)).unwrap(), 2.0);

        let v = parse_value_function(r#"{"d":11,"kind":"builtin","name":"example1","params":{"p":0.1}}"#)
            .unwrap();
        assert!((v.eval(Coalition::full(11)).unwrap() - 5.5).abs() < 1e-12);

        let err = parse_value_function(r#"{"d":2,"kind":"table","values":[0,1,1]}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");

        let err = parse_value_function(
            r#"{"d":2,"kind":"mobius","terms":[{"subset":[1],"coef":1},{"subset":[1],"coef":2}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location.contains("terms[1]")));

        assert!(parse_value_function(r#"{"d":2,"kind":"nope"}"#).is_err());
        assert!(parse_value_function(r#"{"d":2,"kind":"table""#).is_err());
    }

    #[test]
    fn save_load_preserves_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let games = [
            ValueFunction::table(2, vec![0.0, 1.0, 1.0, 2.5]).unwrap(),
            ValueFunction::mobius(3, vec![(players(&[1, 3], 3), -0.5), (players(&[2], 3), 1.0)])
                .unwrap(),
            builtin_game("example2", &params(serde_json::json!({"d": 6}))).unwrap(),
            sparse_synthetic(SparseSyntheticParams { d: 8, seed: 3, ..Default::default() }).unwrap(),
        ];
        for (k, g) in games.iter().enumerate() {
            let path = dir.path().join(format!("g{k}.json"));
            save_value_function(g, &path).unwrap();
            let back = load_value_function(&path).unwrap();
            assert_eq!(back.players(), g.players());
            assert_eq!(back.tabulate().unwrap(), g.tabulate().unwrap());
        }
        let cb = ValueFunction::callback(2, Arc::new(|s: Coalition| Ok(s.size() as f64))).unwrap();
        assert!(value_function_to_json(&cb).is_err());
    }

    #[test]
    fn callback_errors_carry_coalition() {
        let cb = ValueFunction::callback(
            3,
            Arc::new(|s: Coalition| {
                if s.size() == 2 {
                    Err("boom".to_string())
                } else {
                    Ok(1.0)
                }
            }),
        )
        .unwrap();
        let s = players(&[1, 3], 3);
        match cb.eval(s) {
            Err(Error::Evaluation { coalition, message }) => {
                assert_eq!(coalition, s);
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reductions() {
        // additive d=3, remove player 3 -> additive on two players
        let additive = ValueFunction::table(3, (0..8u64).map(|m| m.count_ones() as f64).collect())
            .unwrap();
        let r = reduce_game(&additive, GameReduction::RemovePlayer(3)).unwrap();
        assert_eq!(r.tabulate().unwrap(), vec![0.0, 1.0, 1.0, 2.0]);

        // unanimity on {1,2} merged -> unanimity on the merged player
        let u = builtin_game("unanimity", &params(serde_json::json!({"d": 3, "R": [1, 2]})))
            .unwrap();
        let merged = reduce_game(&u, GameReduction::MergePlayers(1, 2)).unwrap();
        assert_eq!(merged.tabulate().unwrap(), vec![0.0, 1.0, 0.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let random = ValueFunction::table(4, (0..16).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let with_j = reduce_game(&random, GameReduction::RemovePlayerWithJ(2)).unwrap();
        assert_eq!(with_j.players(), 3);
        assert_eq!(with_j.eval(Coalition::EMPTY).unwrap(), 0.0);
        // v'({1}) = v({1,2}) - v({2}); {3} in reduced numbering is player 4
        let expect = random.eval(players(&[1, 2], 4)).unwrap() - random.eval(players(&[2], 4)).unwrap();
        assert_eq!(with_j.eval(players(&[1], 3)).unwrap(), expect);
        let expect = random.eval(players(&[2, 4], 4)).unwrap() - random.eval(players(&[2], 4)).unwrap();
        assert_eq!(with_j.eval(players(&[3], 3)).unwrap(), expect);

        assert!(matches!(
            reduce_game(&random, GameReduction::MergePlayers(2, 2)),
            Err(Error::Domain(_))
        ));
        assert!(reduce_game(&random, GameReduction::RemovePlayer(5)).is_err());
    }
}
