//! Coalition weighting schemes `μ` for the faithful regression.
//!
//! Every scheme here is symmetric, so it is stored per coalition size.
//! Infinite weights on `∅` and `[d]` are carried as flags; the matching
//! `mu` entries are zero and never read.

use serde::{Deserialize, Serialize};

use crate::coalition::binom_f64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Provenance {
    FaithShap,
    Ab { a: f64, b: f64 },
    Uniform,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingScheme {
    pub d: usize,
    #[serde(rename = "mu")]
    mu_by_size: Vec<f64>,
    #[serde(rename = "inf_empty")]
    infinite_at_empty: bool,
    #[serde(rename = "inf_full")]
    infinite_at_full: bool,
    pub provenance: Provenance,
}

impl WeightingScheme {
    /// A symmetric scheme from per-size weights. Entries flagged infinite
    /// are ignored; every other entry must be finite and positive.
    pub fn custom(
        mu_by_size: Vec<f64>,
        infinite_at_empty: bool,
        infinite_at_full: bool,
    ) -> Result<Self> {
        Self::checked(mu_by_size, infinite_at_empty, infinite_at_full, Provenance::Custom)
    }

    fn checked(
        mut mu_by_size: Vec<f64>,
        infinite_at_empty: bool,
        infinite_at_full: bool,
        provenance: Provenance,
    ) -> Result<Self> {
        if mu_by_size.len() < 2 {
            return Err(Error::domain("weighting needs d >= 1"));
        }
        let d = mu_by_size.len() - 1;
        if infinite_at_empty {
            mu_by_size[0] = 0.0;
        }
        if infinite_at_full {
            mu_by_size[d] = 0.0;
        }
        for (s, mu) in mu_by_size.iter().enumerate() {
            let flagged = (s == 0 && infinite_at_empty) || (s == d && infinite_at_full);
            if !flagged && !(mu.is_finite() && *mu > 0.0) {
                return Err(Error::Validity(format!(
                    "weight for coalitions of size {s} is {mu}, must be finite and positive"
                )));
            }
        }
        Ok(WeightingScheme {
            d,
            mu_by_size,
            infinite_at_empty,
            infinite_at_full,
            provenance,
        })
    }

    /// `μ(S) = 1 / 2^d` for every coalition.
    pub fn uniform(d: usize) -> Self {
        let w = 0.5f64.powi(d as i32);
        Self::checked(vec![w; d + 1], false, false, Provenance::Uniform)
            .expect("uniform weights are positive")
    }

    pub fn players(&self) -> usize {
        self.d
    }

    /// Per-size weights; entries under an infinity flag read as zero.
    pub fn mu_by_size(&self) -> &[f64] {
        &self.mu_by_size
    }

    /// `Some(μ_s)` when finite.
    pub fn weight(&self, size: usize) -> Option<f64> {
        if self.is_infinite(size) {
            None
        } else {
            Some(self.mu_by_size[size])
        }
    }

    pub fn is_infinite(&self, size: usize) -> bool {
        (size == 0 && self.infinite_at_empty) || (size == self.d && self.infinite_at_full)
    }

    pub fn infinite_at_empty(&self) -> bool {
        self.infinite_at_empty
    }

    pub fn infinite_at_full(&self) -> bool {
        self.infinite_at_full
    }

    pub fn is_finite(&self) -> bool {
        !self.infinite_at_empty && !self.infinite_at_full
    }

    /// Multiplies every finite weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::domain(format!("scale factor must be positive, got {c}")));
        }
        let mut out = self.clone();
        for mu in &mut out.mu_by_size {
            *mu *= c;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scheme serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: WeightingScheme = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if raw.mu_by_size.len() != raw.d + 1 {
            return Err(Error::parse("mu", format!("expected {} entries", raw.d + 1)));
        }
        Self::checked(raw.mu_by_size, raw.infinite_at_empty, raw.infinite_at_full, raw.provenance)
    }
}

/// The Faith-Shap kernel `μ_s = (d-1) / (C(d,s) s (d-s))`, infinite at
/// both ends.
pub fn faithshap_weights(d: usize) -> Result<WeightingScheme> {
    if d < 2 {
        return Err(Error::domain(format!("Faith-Shap weights need d >= 2, got {d}")));
    }
    let mu = (0..=d)
        .map(|s| {
            if s == 0 || s == d {
                0.0
            } else {
                (d - 1) as f64 / (binom_f64(d, s as i64) * s as f64 * (d - s) as f64)
            }
        })
        .collect();
    WeightingScheme::checked(mu, true, true, Provenance::FaithShap)
}

/// `g(a, b, i) = prod_{j<i} (a(a-b) + j(b-a²)) / (a-b + j(b-a²))`.
pub fn ab_cumulative(a: f64, b: f64, i: usize) -> f64 {
    let slope = b - a * a;
    (0..i)
        .map(|j| (a * (a - b) + j as f64 * slope) / (a - b + j as f64 * slope))
        .product()
}

/// Per-size weights `μ_s = Σ_{i>=s} C(d-s, i-s) (-1)^{i-s} g(a,b,i)`.
///
/// The alternating sum collapses to a ratio of rising products: with
/// `e = a - b` and `c = b - a²`,
/// `μ_s = Π_{j<s}(ae + jc) Π_{j<d-s}((1-a)e + jc) / Π_{j<d}(e + jc)`,
/// which has no cancellation for `a` close to 1.
fn ab_raw(d: usize, a: f64, b: f64) -> Vec<f64> {
    let e = a - b;
    let c = b - a * a;
    let head: Vec<f64> = (0..d).map(|j| a * e + j as f64 * c).collect();
    let tail: Vec<f64> = (0..d).map(|j| (1.0 - a) * e + j as f64 * c).collect();
    let denom: f64 = (0..d).map(|j| e + j as f64 * c).product();
    (0..=d)
        .map(|s| {
            let num: f64 = head[..s].iter().product::<f64>() * tail[..d - s].iter().product::<f64>();
            num / denom
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbValidity {
    pub valid: bool,
    /// `1 >= a > b >= a² > 0` holds, which guarantees positivity for every d.
    pub sufficient_condition: bool,
    /// Sizes with `μ_s <= 0` (or non-finite) found by the explicit scan.
    pub nonpositive_sizes: Vec<usize>,
    pub reason: Option<String>,
}

/// Checks whether `(a, b)` yields a positive weighting on `d` players.
pub fn validate_ab(a: f64, b: f64, d: usize) -> AbValidity {
    let invalid = |reason: String| AbValidity {
        valid: false,
        sufficient_condition: false,
        nonpositive_sizes: Vec::new(),
        reason: Some(reason),
    };
    if !(a.is_finite() && b.is_finite()) {
        return invalid("a and b must be finite".into());
    }
    if !(a > 0.0 && b > 0.0) {
        return invalid(format!("a={a} and b={b} must both be positive"));
    }
    if a <= b {
        return invalid(format!("a > b violated (a={a}, b={b})"));
    }
    if d == 0 {
        return invalid("d must be at least 1".into());
    }
    if 1.0 >= a && b >= a * a {
        return AbValidity {
            valid: true,
            sufficient_condition: true,
            nonpositive_sizes: Vec::new(),
            reason: None,
        };
    }
    let bad: Vec<usize> = ab_raw(d, a, b)
        .iter()
        .enumerate()
        .filter(|(_, mu)| !(mu.is_finite() && **mu > 0.0))
        .map(|(s, _)| s)
        .collect();
    AbValidity {
        valid: bad.is_empty(),
        sufficient_condition: false,
        reason: (!bad.is_empty()).then(|| format!("nonpositive weight at sizes {bad:?}")),
        nonpositive_sizes: bad,
    }
}

/// The two-parameter family of weightings that keep linearity, symmetry and
/// dummy; normalized so that the total weight `Σ_S μ(S)` is one.
pub fn ab_weights(d: usize, a: f64, b: f64) -> Result<WeightingScheme> {
    let report = validate_ab(a, b, d);
    if !report.valid {
        return Err(Error::Validity(match report.nonpositive_sizes.first() {
            Some(s) => format!("(a={a}, b={b}) gives a nonpositive weight at size {s} for d={d}"),
            None => report.reason.unwrap_or_default(),
        }));
    }
    let raw = ab_raw(d, a, b);
    if let Some(s) = raw.iter().position(|mu| !(mu.is_finite() && *mu > 0.0)) {
        return Err(Error::Validity(format!(
            "(a={a}, b={b}) gives a nonpositive weight at size {s} for d={d}"
        )));
    }
    let total: f64 = raw
        .iter()
        .enumerate()
        .map(|(s, mu)| binom_f64(d, s as i64) * mu)
        .sum();
    let mu = raw.into_iter().map(|m| m / total).collect();
    WeightingScheme::checked(mu, false, false, Provenance::Ab { a, b })
}

/// Recovers `(a, b)` from the tail ratios `r1 = μ_d/μ_{d-1}` and
/// `r2 = μ_{d-1}/μ_{d-2}`.
pub fn ab_from_ratios(d: usize, r1: f64, r2: f64) -> Result<(f64, f64)> {
    if d < 3 {
        return Err(Error::domain("ratio construction needs d >= 3"));
    }
    let lower = (d - 2) as f64 * r1 / ((d - 1) as f64 + r1);
    if !(r1 > r2 && r2 > lower && lower > 0.0) {
        return Err(Error::domain(format!(
            "ratios must satisfy r1 > r2 > (d-2) r1 / (d-1+r1) > 0; got r1={r1}, r2={r2}, bound={lower}"
        )));
    }
    let diff = r1 - r2;
    let d1 = (d - 1) as f64;
    let d2 = (d - 2) as f64;
    let a = (r1 * (r2 + 1.0) - d1 * diff) / ((r1 + 1.0) * (r2 + 1.0) - d1 * diff);
    let b = a * (r1 * (r2 + 1.0) - d2 * diff) / ((r1 + 1.0) * (r2 + 1.0) - d2 * diff);
    Ok((a, b))
}

/// `μ̄_t = Σ_{i >= t, μ_i finite} C(d-t, i-t) μ_i`, the total finite weight
/// of all supersets of a size-`t` coalition.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeWeights {
    mubar_by_size: Vec<f64>,
}

impl CumulativeWeights {
    pub fn by_size(&self) -> &[f64] {
        &self.mubar_by_size
    }

    pub fn get(&self, size: usize) -> f64 {
        self.mubar_by_size[size]
    }
}

pub fn cumulative_weights(w: &WeightingScheme) -> CumulativeWeights {
    let d = w.d;
    let mubar_by_size = (0..=d)
        .map(|t| {
            (t..=d)
                .filter_map(|i| w.weight(i).map(|mu| binom_f64(d - t, (i - t) as i64) * mu))
                .sum()
        })
        .collect();
    CumulativeWeights { mubar_by_size }
}
