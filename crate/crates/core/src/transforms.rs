//! Lattice transforms and calculus on games.
//!
//! The fast transforms work in place on tables indexed by coalition mask and
//! run in `O(d 2^d)`.

use crate::coalition::{ln_factorial, Coalition, MAX_LATTICE_PLAYERS};
use crate::error::{Error, Result};
use crate::game::{TabulatedGame, ValueFunction};

fn lattice_dim(len: usize) -> usize {
    assert!(len.is_power_of_two(), "lattice tables have 2^d entries");
    len.trailing_zeros() as usize
}

/// `x[S] <- sum_{T ⊆ S} x[T]`.
pub fn zeta_in_place(x: &mut [f64]) {
    let d = lattice_dim(x.len());
    for i in 0..d {
        let bit = 1usize << i;
        for s in 0..x.len() {
            if s & bit != 0 {
                x[s] += x[s ^ bit];
            }
        }
    }
}

/// Inverse of [`zeta_in_place`].
pub fn mobius_in_place(x: &mut [f64]) {
    let d = lattice_dim(x.len());
    for i in 0..d {
        let bit = 1usize << i;
        for s in 0..x.len() {
            if s & bit != 0 {
                x[s] -= x[s ^ bit];
            }
        }
    }
}

/// `x[S] <- sum_{T ⊇ S} x[T]`.
pub fn superset_sum_in_place(x: &mut [f64]) {
    let d = lattice_dim(x.len());
    for i in 0..d {
        let bit = 1usize << i;
        for s in 0..x.len() {
            if s & bit == 0 {
                x[s] += x[s | bit];
            }
        }
    }
}

/// The Möbius coefficients `a(v, S)` of a game, indexed by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusCoefficients {
    d: usize,
    a: Vec<f64>,
}

impl MobiusCoefficients {
    pub fn new(d: usize, a: Vec<f64>) -> Result<Self> {
        if d > MAX_LATTICE_PLAYERS || a.len() != 1usize << d {
            return Err(Error::domain(format!(
                "Möbius table for d={d} needs 2^d entries (d <= {MAX_LATTICE_PLAYERS}), got {}",
                a.len()
            )));
        }
        Ok(MobiusCoefficients { d, a })
    }

    pub fn players(&self) -> usize {
        self.d
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    pub fn get(&self, s: Coalition) -> f64 {
        self.a[s.index()]
    }
}

/// `a(S) = sum_{T ⊆ S} (-1)^{|S|-|T|} v(T)`.
pub fn mobius_transform(v: &TabulatedGame) -> Result<MobiusCoefficients> {
    let mut a = v.values().to_vec();
    mobius_in_place(&mut a);
    MobiusCoefficients::new(v.players(), a)
}

/// `v(S) = sum_{T ⊆ S} a(T)`.
pub fn inverse_mobius(a: &MobiusCoefficients) -> Result<TabulatedGame> {
    let mut v = a.a.clone();
    zeta_in_place(&mut v);
    TabulatedGame::new(a.d, v)
}

/// Convenience: Möbius coefficients of any game small enough to tabulate.
pub fn mobius_of(v: &ValueFunction) -> Result<MobiusCoefficients> {
    if let Some(m) = v.mobius_game() {
        if m.players() <= MAX_LATTICE_PLAYERS {
            let mut a = vec![0.0; 1usize << m.players()];
            for (r, c) in m.terms() {
                a[r.index()] += c;
            }
            return MobiusCoefficients::new(m.players(), a);
        }
    }
    mobius_transform(&v.to_tabulated()?)
}

/// The `S`-derivative of `v` at `T`: `sum_{L ⊆ S} (-1)^{|S|-|L|} v(T ∪ L)`.
pub fn discrete_derivative(v: &ValueFunction, s: Coalition, t: Coalition) -> Result<f64> {
    if !s.is_disjoint(t) {
        return Err(Error::domain(format!("derivative set {s} overlaps base {t}")));
    }
    let parity = s.size() & 1;
    let mut acc = 0.0;
    for l in s.subsets() {
        let x = v.eval(t.union(l))?;
        if (l.size() & 1) == parity {
            acc += x;
        } else {
            acc -= x;
        }
    }
    Ok(acc)
}

/// Same as [`discrete_derivative`] on a raw table; no overlap check.
pub(crate) fn discrete_derivative_table(table: &[f64], s: Coalition, t: Coalition) -> f64 {
    let parity = s.size() & 1;
    let mut acc = 0.0;
    for l in s.subsets() {
        let x = table[t.union(l).index()];
        if (l.size() & 1) == parity {
            acc += x;
        } else {
            acc -= x;
        }
    }
    acc
}

fn check_unit_interval(x: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} = {x} outside [0,1]")))
    }
}

/// The multilinear extension `g(x) = sum_T a(T) prod_{i in T} x_i`.
pub fn multilinear_eval(a: &MobiusCoefficients, x: &[f64]) -> Result<f64> {
    if x.len() != a.d {
        return Err(Error::domain(format!("point has {} coordinates, game has {}", x.len(), a.d)));
    }
    for (i, xi) in x.iter().enumerate() {
        check_unit_interval(*xi, &format!("x[{}]", i + 1))?;
    }
    // Accumulate products along the lattice so every monomial costs O(1).
    let mut prod = vec![1.0f64; a.a.len()];
    let mut total = a.a[0];
    for s in 1..a.a.len() {
        let low = s.trailing_zeros() as usize;
        prod[s] = prod[s & (s - 1)] * x[low];
        total += a.a[s] * prod[s];
    }
    Ok(total)
}

/// `Δ_S g` at the diagonal point `(t, ..., t)`:
/// `sum_{T ⊇ S} a(T) t^{|T \ S|}`.
pub fn multilinear_s_derivative(a: &MobiusCoefficients, s: Coalition, t: f64) -> Result<f64> {
    check_unit_interval(t, "t")?;
    if !s.fits(a.d) {
        return Err(Error::domain(format!("{s} not within [{}]", a.d)));
    }
    let by_size = superset_profile(a, s);
    // Horner over |T \ S|.
    Ok(by_size.iter().rev().fold(0.0, |acc, c| acc * t + c))
}

/// `c[k] = sum_{T ⊇ S, |T \ S| = k} a(T)`.
fn superset_profile(a: &MobiusCoefficients, s: Coalition) -> Vec<f64> {
    let free = s.complement(a.d);
    let mut by_size = vec![0.0; free.size() + 1];
    for extra in free.subsets() {
        by_size[extra.size()] += a.get(s.union(extra));
    }
    by_size
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Node count for integrating `Δ_S g(t) * Beta(l,l) density` exactly: the
/// integrand is a polynomial of degree at most `d + l - 2`, and `n` nodes are
/// exact up to degree `2n - 1`.
pub fn quadrature_nodes_for(d: usize, order: usize) -> usize {
    64usize.max((d + order) / 2 + 1)
}

/// `ln B(l, l) = 2 ln((l-1)!) - ln((2l-1)!)`.
fn ln_beta_sym(order: usize) -> f64 {
    2.0 * ln_factorial(order - 1) - ln_factorial(2 * order - 1)
}

/// `∫_0^1 Δ_S g(t, ..., t) dI_t(l, l)` where `I_t(l, l)` is the Beta(l, l)
/// CDF. Requires `|S| = l >= 1`.
pub fn beta_path_integral(a: &MobiusCoefficients, s: Coalition, order: usize) -> Result<f64> {
    if order == 0 || s.size() != order {
        return Err(Error::domain(format!(
            "path integral needs |S| = l >= 1, got |S|={}, l={order}",
            s.size()
        )));
    }
    if !s.fits(a.d) {
        return Err(Error::domain(format!("{s} not within [{}]", a.d)));
    }
    let profile = superset_profile(a, s);
    let n = quadrature_nodes_for(a.d, order);
    let (nodes, weights) = gauss_legendre(n);
    let ln_b = ln_beta_sym(order);
    let mut total = 0.0;
    for (t, w) in nodes.iter().zip(&weights) {
        let deriv = profile.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let density = ((order as f64 - 1.0) * (t * (1.0 - t)).ln() - ln_b).exp();
        total += w * deriv * density;
    }
    Ok(total)
}
