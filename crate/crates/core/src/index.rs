use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, SubsetBasis};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    FaithShap,
    FaithBanzhaf,
    ShapleyInteraction,
    BanzhafInteraction,
    ShapleyTaylor,
    /// Faithful regression under a caller-supplied weighting.
    FaithInteraction,
}

impl IndexKind {
    pub const ALL: [IndexKind; 6] = [
        IndexKind::FaithShap,
        IndexKind::FaithBanzhaf,
        IndexKind::ShapleyInteraction,
        IndexKind::BanzhafInteraction,
        IndexKind::ShapleyTaylor,
        IndexKind::FaithInteraction,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            IndexKind::FaithShap => "faith-shap",
            IndexKind::FaithBanzhaf => "faith-banzhaf",
            IndexKind::ShapleyInteraction => "shapley-interaction",
            IndexKind::BanzhafInteraction => "banzhaf-interaction",
            IndexKind::ShapleyTaylor => "shapley-taylor",
            IndexKind::FaithInteraction => "faith-interaction",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown index kind `{s}`")))
    }
}

/// Scores for every coalition of size at most `l`, including `∅`, in
/// (size, mask) order.
#[derive(Debug, Clone)]
pub struct InteractionIndex {
    kind: IndexKind,
    basis: Arc<SubsetBasis>,
    scores: Vec<f64>,
}

impl PartialEq for InteractionIndex {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.players() == other.players()
            && self.order() == other.order()
            && self.scores == other.scores
    }
}

impl InteractionIndex {
    pub fn new(kind: IndexKind, basis: Arc<SubsetBasis>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != basis.len() {
            return Err(Error::domain(format!(
                "index over d={}, l={} needs {} scores, got {}",
                basis.players(),
                basis.order(),
                basis.len(),
                scores.len()
            )));
        }
        Ok(InteractionIndex { kind, basis, scores })
    }

    pub fn zeros(kind: IndexKind, d: usize, order: usize) -> Result<Self> {
        let basis = Arc::new(SubsetBasis::new(d, order)?);
        let n = basis.len();
        Ok(InteractionIndex {
            kind,
            basis,
            scores: vec![0.0; n],
        })
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: IndexKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn players(&self) -> usize {
        self.basis.players()
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn basis(&self) -> &Arc<SubsetBasis> {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut [f64] {
        &mut self.scores
    }

    pub fn subsets(&self) -> &[Coalition] {
        self.basis.subsets()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        self.basis.subsets().iter().copied().zip(self.scores.iter().copied())
    }

    pub fn get(&self, s: Coalition) -> Option<f64> {
        self.basis.position(s).map(|i| self.scores[i])
    }

    /// Score of `s`; panics if `|s| > l`.
    pub fn score(&self, s: Coalition) -> f64 {
        self.get(s)
            .unwrap_or_else(|| panic!("{s} is not in the order-{} basis", self.order()))
    }

    pub fn set(&mut self, s: Coalition, value: f64) {
        let i = self
            .basis
            .position(s)
            .unwrap_or_else(|| panic!("{s} is not in the order-{} basis", self.order()));
        self.scores[i] = value;
    }

    pub fn empty_score(&self) -> f64 {
        self.scores[0]
    }

    /// Entries with `|S| = l`.
    pub fn top_order(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        let order = self.order();
        self.iter().filter(move |(s, _)| s.size() == order)
    }

    /// `Σ_{T ⊆ S, |T| <= l} E_T`, the surrogate value of `S`.
    pub fn surrogate(&self, s: Coalition) -> f64 {
        self.iter()
            .filter(|(t, _)| t.is_subset_of(s))
            .map(|(_, e)| e)
            .sum()
    }

    /// Largest absolute score difference against another index on the same
    /// basis.
    pub fn max_abs_diff(&self, other: &InteractionIndex) -> Result<f64> {
        if self.players() != other.players() || self.order() != other.order() {
            return Err(Error::domain("indices have different shapes"));
        }
        Ok(self
            .scores
            .iter()
            .zip(&other.scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&IndexJson::from(self)).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: IndexJson = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        let mut index = InteractionIndex::zeros(raw.kind, raw.d, raw.l)?;
        if raw.scores.len() != index.len() {
            return Err(Error::parse(
                "scores",
                format!("expected {} entries, got {}", index.len(), raw.scores.len()),
            ));
        }
        for (k, entry) in raw.scores.iter().enumerate() {
            let s = Coalition::from_players(&entry.subset, raw.d)
                .map_err(|e| Error::parse(format!("scores[{k}].subset"), e.to_string()))?;
            if index.subsets()[k] != s {
                return Err(Error::parse(
                    format!("scores[{k}].subset"),
                    format!("expected {} in enumeration order, got {s}", index.subsets()[k]),
                ));
            }
            index.scores[k] = entry.value;
        }
        Ok(index)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ScoreJson {
    pub subset: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct IndexJson {
    pub d: usize,
    pub l: usize,
    pub kind: IndexKind,
    pub scores: Vec<ScoreJson>,
}

impl From<&InteractionIndex> for IndexJson {
    fn from(index: &InteractionIndex) -> Self {
        IndexJson {
            d: index.players(),
            l: index.order(),
            kind: index.kind,
            scores: index
                .iter()
                .map(|(s, value)| ScoreJson {
                    subset: s.players(),
                    value,
                })
                .collect(),
        }
    }
}

impl Serialize for InteractionIndex {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        IndexJson::from(self).serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_tags_round_trip() {
        for k in IndexKind::ALL {
            assert_eq!(k.tag().parse::<IndexKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.tag()));
        }
        assert!("shapley".parse::<IndexKind>().is_err());
    }

    #[test]
    fn json_shape() {
        let mut idx = InteractionIndex::zeros(IndexKind::FaithShap, 3, 1).unwrap();
        idx.set(Coalition::singleton(2), 0.25);
        let text = idx.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["d"], 3);
        assert_eq!(v["l"], 1);
        assert_eq!(v["kind"], "faith-shap");
        assert_eq!(v["scores"][0]["subset"], serde_json::json!([]));
        assert_eq!(v["scores"][3]["subset"], serde_json::json!([3]));
        assert_eq!(v["scores"][3]["value"], 0.25);
        let back = InteractionIndex::from_json(&text).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut idx = InteractionIndex::zeros(IndexKind::ShapleyTaylor, 5, 2).unwrap();
        for (k, x) in idx.scores_mut().iter_mut().enumerate() {
            *x = (k as f64 + 0.1).ln() / 7.0 - 1e-17 * k as f64;
        }
        let back = InteractionIndex::from_json(&idx.to_json()).unwrap();
        for (a, b) in idx.scores().iter().zip(back.scores()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn json_rejects_out_of_order_scores() {
        let text = r#"{"d":2,"l":1,"kind":"faith-shap","scores":[
            {"subset":[],"value":0},{"subset":[2],"value":1},{"subset":[1],"value":2}]}"#;
        assert!(matches!(InteractionIndex::from_json(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn surrogate_sums_subsets() {
        let mut idx = InteractionIndex::zeros(IndexKind::FaithBanzhaf, 3, 2).unwrap();
        for (k, s) in idx.subsets().to_vec().into_iter().enumerate() {
            idx.set(s, k as f64);
        }
        let s = Coalition::from_players(&[1, 3], 3).unwrap();
        // ∅, {1}, {3}, {1,3}
        let expect = idx.score(Coalition::EMPTY)
            + idx.score(Coalition::singleton(0))
            + idx.score(Coalition::singleton(2))
            + idx.score(s);
        assert_eq!(idx.surrogate(s), expect);
        assert_eq!(idx.top_order().count(), 3);
    }
}
