//! Weighted least-squares fits of interaction indices.
//!
//! Every index of order `l` is a vector `E` over the basis `{T : |T| <= l}`;
//! the surrogate value of `S` is `p(S)ᵀE` with `p(S)[T] = 1[T ⊆ S]`. The
//! exact solvers minimize `Σ_S μ(S) (v(S) - p(S)ᵀE)²` over all coalitions,
//! turning infinite weights into equality constraints.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::coalition::{Coalition, SubsetBasis};
use crate::error::{Error, Result};
use crate::game::ValueFunction;
use crate::index::{IndexKind, InteractionIndex};
use crate::transforms::superset_sum_in_place;
use crate::weighting::{cumulative_weights, Provenance, WeightingScheme};

/// Largest `d` for the direct `2^d` assembly.
pub const MAX_DIRECT_PLAYERS: usize = 12;

const RESIDUAL_TOL: f64 = 1e-8;
const CONSTRAINT_TOL: f64 = 1e-10;
const PROX_TOL: f64 = 1e-9;
const PROX_MAX_ITERS: usize = 100_000;

/// `p(S)` over the order-`l` basis.
pub fn design_vector(s: Coalition, basis: &SubsetBasis) -> Result<Vec<f64>> {
    if !s.fits(basis.players()) {
        return Err(Error::domain(format!(
            "coalition {s} is outside a {}-player game",
            basis.players()
        )));
    }
    let mut p = vec![0.0; basis.len()];
    for i in basis.positions_within(s) {
        p[i] = 1.0;
    }
    Ok(p)
}

/// `Σ_S μ(S) p(S)p(S)ᵀ` and `Σ_S μ(S) v(S) p(S)` over coalitions with
/// finite weight.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub basis: Arc<SubsetBasis>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

fn check_scheme(v: &ValueFunction, w: &WeightingScheme, order: usize) -> Result<()> {
    let d = v.players();
    if w.players() != d {
        return Err(Error::domain(format!(
            "weighting is for d={}, game has d={d}",
            w.players()
        )));
    }
    if order > d {
        return Err(Error::domain(format!("order {order} exceeds d={d}")));
    }
    Ok(())
}

/// Assembles the normal equations from the per-size cumulative weights:
/// `A[S,T] = μ̄_{|S∪T|}`, `b[S] = Σ_{L ⊇ S} μ(L) v(L)`.
pub fn normal_equations(
    v: &ValueFunction,
    w: &WeightingScheme,
    order: usize,
) -> Result<NormalEquations> {
    check_scheme(v, w, order)?;
    let d = v.players();
    let basis = Arc::new(SubsetBasis::new(d, order)?);
    let mubar = cumulative_weights(w);
    let n = basis.len();
    let subsets = basis.subsets();
    let matrix = DMatrix::from_fn(n, n, |i, j| mubar.get(subsets[i].union(subsets[j]).size()));

    let mut weighted = v.tabulate()?;
    for (bits, x) in weighted.iter_mut().enumerate() {
        let size = (bits as u64).count_ones() as usize;
        *x = w.weight(size).map_or(0.0, |mu| mu * *x);
    }
    superset_sum_in_place(&mut weighted);
    let rhs = DVector::from_iterator(n, subsets.iter().map(|s| weighted[s.index()]));
    Ok(NormalEquations { basis, matrix, rhs })
}

/// Assembles the normal equations row by row over all `2^d` coalitions.
/// Slow; kept as a cross-check for `d <= 12`.
pub fn normal_equations_direct(
    v: &ValueFunction,
    w: &WeightingScheme,
    order: usize,
) -> Result<NormalEquations> {
    check_scheme(v, w, order)?;
    let d = v.players();
    if d > MAX_DIRECT_PLAYERS {
        return Err(Error::domain(format!(
            "direct assembly supports d <= {MAX_DIRECT_PLAYERS}, got {d}"
        )));
    }
    let basis = Arc::new(SubsetBasis::new(d, order)?);
    let n = basis.len();
    let mut matrix = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for bits in 0..1u64 << d {
        let s = Coalition::from_bits(bits);
        let Some(mu) = w.weight(s.size()) else {
            continue;
        };
        let value = v.eval(s)?;
        let pos = basis.positions_within(s);
        for &i in &pos {
            rhs[i] += mu * value;
            for &j in &pos {
                matrix[(i, j)] += mu;
            }
        }
    }
    Ok(NormalEquations { basis, matrix, rhs })
}

fn kind_for(w: &WeightingScheme) -> IndexKind {
    match w.provenance {
        Provenance::FaithShap => IndexKind::FaithShap,
        Provenance::Uniform => IndexKind::FaithBanzhaf,
        Provenance::Ab { a, b } if a == 0.5 && b == 0.25 => IndexKind::FaithBanzhaf,
        _ => IndexKind::FaithInteraction,
    }
}

fn check_residual(m: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
    let r = (m * x - y).norm();
    let scale = m.norm() * x.norm() + y.norm();
    if !r.is_finite() || r > RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!(
            "linear solve residual {r:.3e} exceeds tolerance (scale {scale:.3e})"
        )));
    }
    Ok(())
}

/// Exact fit for a scheme with no infinite weights, via Cholesky on the
/// normal equations.
pub fn solve_unconstrained(
    v: &ValueFunction,
    w: &WeightingScheme,
    order: usize,
) -> Result<InteractionIndex> {
    if !w.is_finite() {
        return Err(Error::domain(
            "unconstrained solve needs finite weights on every coalition",
        ));
    }
    let eq = normal_equations(v, w, order)?;
    solve_normal_equations(&eq, kind_for(w))
}

/// Solves assembled normal equations with no constraints.
pub fn solve_normal_equations(eq: &NormalEquations, kind: IndexKind) -> Result<InteractionIndex> {
    let chol = eq
        .matrix
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal equations are not positive definite".into()))?;
    let x = chol.solve(&eq.rhs);
    check_residual(&eq.matrix, &x, &eq.rhs)?;
    InteractionIndex::new(kind, eq.basis.clone(), x.iter().copied().collect())
}

/// Exact fit for the Faith-Shap style schemes with infinite weight at `∅`
/// and `[d]`, via the KKT system of the two equality constraints
/// `E_∅ = v(∅)` and `Σ_T E_T = v([d])`.
pub fn solve_constrained(
    v: &ValueFunction,
    w: &WeightingScheme,
    order: usize,
) -> Result<InteractionIndex> {
    if !(w.infinite_at_empty() && w.infinite_at_full()) {
        return Err(Error::domain(
            "constrained solve needs infinite weight at both the empty and the full coalition",
        ));
    }
    solve_weighted(v, w, order)
}

/// Fits any symmetric scheme: each infinity flag becomes an equality
/// constraint.
pub fn solve_weighted(
    v: &ValueFunction,
    w: &WeightingScheme,
    order: usize,
) -> Result<InteractionIndex> {
    let eq = normal_equations(v, w, order)?;
    if w.is_finite() {
        return solve_normal_equations(&eq, kind_for(w));
    }
    let d = v.players();
    let mut constraints = Vec::new();
    let n = eq.basis.len();
    if w.infinite_at_empty() {
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        constraints.push((row, v.eval(Coalition::EMPTY)?));
    }
    if w.infinite_at_full() {
        constraints.push((vec![1.0; n], v.eval(Coalition::full(d))?));
    }
    let x = solve_kkt(&eq, &constraints)?;
    let mut scores: Vec<f64> = x.iter().copied().collect();
    if w.infinite_at_empty() {
        scores[0] = v.eval(Coalition::EMPTY)?;
    }
    for (row, target) in &constraints {
        let got: f64 = row.iter().zip(&scores).map(|(a, b)| a * b).sum();
        let scale = 1.0 + target.abs() + scores.iter().map(|x| x.abs()).sum::<f64>();
        if (got - target).abs() > CONSTRAINT_TOL * scale {
            return Err(Error::Numeric(format!(
                "equality constraint violated by {:.3e}",
                (got - target).abs()
            )));
        }
    }
    InteractionIndex::new(kind_for(w), eq.basis.clone(), scores)
}

/// `[[2A, Cᵀ], [C, 0]] [E; λ] = [2b; c]`, solved by LU.
fn solve_kkt(eq: &NormalEquations, constraints: &[(Vec<f64>, f64)]) -> Result<DVector<f64>> {
    let n = eq.basis.len();
    let k = constraints.len();
    let mut m = DMatrix::zeros(n + k, n + k);
    let mut y = DVector::zeros(n + k);
    m.view_mut((0, 0), (n, n)).copy_from(&(&eq.matrix * 2.0));
    y.rows_mut(0, n).copy_from(&(&eq.rhs * 2.0));
    for (c, (row, target)) in constraints.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            m[(n + c, j)] = *a;
            m[(j, n + c)] = *a;
        }
        y[n + c] = *target;
    }
    let x = m
        .clone()
        .lu()
        .solve(&y)
        .ok_or_else(|| Error::Numeric("KKT system is singular".into()))?;
    check_residual(&m, &x, &y)?;
    Ok(x.rows(0, n).into_owned())
}

/// `Σ_S μ(S) (v(S) - p(S)ᵀE)²` over coalitions with finite weight.
pub fn weighted_objective(
    v: &ValueFunction,
    w: &WeightingScheme,
    index: &InteractionIndex,
) -> Result<f64> {
    check_scheme(v, w, index.order())?;
    let d = v.players();
    let mut surrogate = vec![0.0; 1usize << d];
    for (s, e) in index.iter() {
        surrogate[s.index()] = e;
    }
    crate::transforms::zeta_in_place(&mut surrogate);
    let values = v.tabulate()?;
    Ok(values
        .iter()
        .zip(&surrogate)
        .enumerate()
        .filter_map(|(bits, (a, b))| {
            let size = (bits as u64).count_ones() as usize;
            w.weight(size).map(|mu| mu * (a - b) * (a - b))
        })
        .sum())
}

/// One observed coalition in a sampled regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionRow {
    pub coalition: Coalition,
    pub weight: f64,
    pub target: f64,
}

/// The pair `E_∅ = v(∅)`, `Σ_T E_T = v([d])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualityConstraints {
    pub empty: f64,
    pub full: f64,
}

/// A sampled weighted regression, optionally constrained and penalized by
/// `λ Σ_{T≠∅} |E_T|`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub d: usize,
    pub order: usize,
    pub rows: Vec<RegressionRow>,
    pub constraints: Option<EqualityConstraints>,
    pub lambda: f64,
}

/// Output of [`solve_sampled`].
#[derive(Debug, Clone)]
pub struct SampledFit {
    pub index: InteractionIndex,
    /// The least-squares system did not pin down every coefficient; the
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Sufficient statistics of a weighted regression: `Σ w p pᵀ`, `Σ w y p`
/// and `Σ w`. Rows can be added one at a time and the fit re-solved at any
/// point.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    basis: Arc<SubsetBasis>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    total_weight: f64,
    rows: usize,
}

impl MomentAccumulator {
    pub fn new(d: usize, order: usize) -> Result<Self> {
        let basis = Arc::new(SubsetBasis::new(d, order)?);
        Ok(Self::with_basis(basis))
    }

    pub fn with_basis(basis: Arc<SubsetBasis>) -> Self {
        let n = basis.len();
        MomentAccumulator {
            basis,
            gram: DMatrix::zeros(n, n),
            rhs: DVector::zeros(n),
            total_weight: 0.0,
            rows: 0,
        }
    }

    pub fn basis(&self) -> &Arc<SubsetBasis> {
        &self.basis
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn add(&mut self, row: RegressionRow) -> Result<()> {
        if !(row.weight.is_finite() && row.weight > 0.0) {
            return Err(Error::domain(format!(
                "row weight for {} must be positive, got {}",
                row.coalition, row.weight
            )));
        }
        if !row.target.is_finite() {
            return Err(Error::domain(format!("target for {} is not finite", row.coalition)));
        }
        if !row.coalition.fits(self.basis.players()) {
            return Err(Error::domain(format!(
                "coalition {} is outside a {}-player game",
                row.coalition,
                self.basis.players()
            )));
        }
        let pos = self.basis.positions_within(row.coalition);
        for &i in &pos {
            self.rhs[i] += row.weight * row.target;
            for &j in &pos {
                self.gram[(i, j)] += row.weight;
            }
        }
        self.total_weight += row.weight;
        self.rows += 1;
        Ok(())
    }

    /// Minimizes `(1/W) Σ w (y - p(S)ᵀE)² + λ Σ_{T≠∅} |E_T|`, `W = Σ w`.
    pub fn solve(
        &self,
        constraints: Option<EqualityConstraints>,
        lambda: f64,
        kind: IndexKind,
    ) -> Result<SampledFit> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::domain(format!("ℓ1 penalty must be >= 0, got {lambda}")));
        }
        if self.rows == 0 {
            return Err(Error::domain("sampled regression needs at least one row"));
        }
        let n = self.basis.len();
        let scale = 1.0 / self.total_weight;
        let g = &self.gram * scale;
        let h = &self.rhs * scale;
        let (scores, rank_deficient, iterations, converged) = match constraints {
            Some(c) => {
                if !(c.empty.is_finite() && c.full.is_finite()) {
                    return Err(Error::domain("constraint targets must be finite"));
                }
                // Fix E_∅ and work on the remaining coordinates.
                let m = n - 1;
                let g_rest = g.view((1, 1), (m, m)).into_owned();
                let h_rest: DVector<f64> =
                    h.rows(1, m).into_owned() - g.view((1, 0), (m, 1)).column(0) * c.empty;
                let total = c.full - c.empty;
                let (x, deficient, iters, conv) = if m == 0 {
                    (DVector::zeros(0), false, 0, true)
                } else if lambda == 0.0 {
                    let (x, deficient) = min_norm_on_hyperplane(&g_rest, &h_rest, total);
                    (x, deficient, 0, true)
                } else {
                    let (x, iters, conv) =
                        proximal_gradient(&g_rest, &h_rest, lambda, Some(total), None);
                    (x, false, iters, conv)
                };
                let mut scores = Vec::with_capacity(n);
                scores.push(c.empty);
                scores.extend(x.iter().copied());
                (scores, deficient, iters, conv)
            }
            None => {
                if lambda == 0.0 {
                    let (x, deficient) = min_norm_solve(&g, &h);
                    (x.iter().copied().collect(), deficient, 0, true)
                } else {
                    // The intercept E_∅ is not penalized.
                    let (x, iters, conv) = proximal_gradient(&g, &h, lambda, None, Some(0));
                    (x.iter().copied().collect(), false, iters, conv)
                }
            }
        };
        Ok(SampledFit {
            index: InteractionIndex::new(kind, self.basis.clone(), scores)?,
            rank_deficient,
            iterations,
            converged,
        })
    }
}

/// Solves a sampled regression problem. At `λ = 0` this is equality
/// constrained least squares, with the minimum-norm solution when the rows
/// do not determine every coefficient.
pub fn solve_sampled(problem: &RegressionProblem) -> Result<SampledFit> {
    if problem.order > problem.d {
        return Err(Error::domain(format!(
            "order {} exceeds d={}",
            problem.order, problem.d
        )));
    }
    let mut acc = MomentAccumulator::new(problem.d, problem.order)?;
    for row in &problem.rows {
        acc.add(*row)?;
    }
    let kind = if problem.constraints.is_some() {
        IndexKind::FaithShap
    } else {
        IndexKind::FaithInteraction
    };
    acc.solve(problem.constraints, problem.lambda, kind)
}

/// Relative eigenvalue cutoff for the pseudo-inverse.
fn eigen_cutoff(values: &DVector<f64>) -> f64 {
    let top = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    top * 1e-10 * values.len().max(1) as f64
}

/// Minimum-norm minimizer of `xᵀGx - 2hᵀx` for symmetric PSD `G`.
fn min_norm_solve(g: &DMatrix<f64>, h: &DVector<f64>) -> (DVector<f64>, bool) {
    let eig = SymmetricEigen::new(g.clone());
    let cutoff = eigen_cutoff(&eig.eigenvalues);
    let mut x = DVector::zeros(h.len());
    let mut deficient = false;
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        if *lam > cutoff {
            x += u * (u.dot(h) / lam);
        } else {
            deficient = true;
        }
    }
    (x, deficient)
}

/// Minimum-norm minimizer of `xᵀGx - 2hᵀx` subject to `Σ x = c`.
///
/// Writes `x = (c/m)·1 + Q y` with `Q` an orthonormal basis of `1^⊥` taken
/// from a Householder reflector, so the minimum-norm `y` gives the
/// minimum-norm `x`.
fn min_norm_on_hyperplane(g: &DMatrix<f64>, h: &DVector<f64>, c: f64) -> (DVector<f64>, bool) {
    let m = h.len();
    let x0 = DVector::from_element(m, c / m as f64);
    if m == 1 {
        return (x0, false);
    }
    let q = hyperplane_basis(m);
    let gq = g * &q;
    let reduced = q.transpose() * &gq;
    let rhs = q.transpose() * (h - g * &x0);
    let (y, deficient) = min_norm_solve(&reduced, &rhs);
    (x0 + q * y, deficient)
}

/// `m × (m-1)` orthonormal basis of the vectors summing to zero.
fn hyperplane_basis(m: usize) -> DMatrix<f64> {
    // Reflector H = I - 2uuᵀ/uᵀu swapping e_1 and 1/√m.
    let r = 1.0 / (m as f64).sqrt();
    let mut u = DVector::from_element(m, -r);
    u[0] += 1.0;
    let uu = u.dot(&u);
    DMatrix::from_fn(m, m - 1, |i, j| {
        let col = j + 1;
        let delta = if i == col { 1.0 } else { 0.0 };
        delta - 2.0 * u[i] * u[col] / uu
    })
}

fn soft(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// `argmin_x ½‖x - z‖² + τ‖x‖₁` subject to `Σ x = c`. The solution is
/// `soft(z - θ, τ)` for the shift `θ` that meets the constraint.
fn prox_l1_hyperplane(z: &DVector<f64>, tau: f64, c: f64) -> DVector<f64> {
    let m = z.len() as f64;
    let sum_at = |theta: f64| z.iter().map(|zi| soft(zi - theta, tau)).sum::<f64>();
    let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = tau + c.abs() / m + 1.0;
    let (mut lo, mut hi) = (zmin - pad, zmax + pad);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    // The sum is linear in θ between breakpoints; solve it exactly on the
    // piece found by bisection.
    let theta = 0.5 * (lo + hi);
    let (mut acc, mut active) = (0.0, 0usize);
    for zi in z.iter() {
        let t = zi - theta;
        if t > tau {
            acc += zi - tau;
            active += 1;
        } else if t < -tau {
            acc += zi + tau;
            active += 1;
        }
    }
    let theta = if active > 0 { (acc - c) / active as f64 } else { theta };
    z.map(|zi| soft(zi - theta, tau))
}

/// Accelerated proximal gradient with adaptive restart on
/// `xᵀGx - 2hᵀx + λ‖x‖₁`, optionally on the hyperplane `Σ x = c`.
/// `free` names one coordinate left unpenalized (unconstrained case only).
fn proximal_gradient(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    lambda: f64,
    hyperplane: Option<f64>,
    free: Option<usize>,
) -> (DVector<f64>, usize, bool) {
    let m = h.len();
    let top = SymmetricEigen::new(g.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, b| a.max(*b));
    let lip = 2.0 * top.max(f64::MIN_POSITIVE);
    let step = 1.0 / lip;
    let tau = lambda * step;
    let prox = |z: DVector<f64>| -> DVector<f64> {
        match hyperplane {
            Some(c) => prox_l1_hyperplane(&z, tau, c),
            None => {
                let mut out = z.map(|zi| soft(zi, tau));
                if let Some(k) = free {
                    out[k] = z[k];
                }
                out
            }
        }
    };
    let start = match hyperplane {
        Some(c) => DVector::from_element(m, c / m as f64),
        None => DVector::zeros(m),
    };
    let mut x = prox(start);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for iter in 1..=PROX_MAX_ITERS {
        let grad = (g * &y - h) * 2.0;
        let next = prox(&y - grad * step);
        let delta = (&next - &x).amax();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Restart momentum when it points uphill.
        let uphill = (&y - &next).dot(&(&next - &x)) > 0.0;
        if uphill {
            t = 1.0;
            y = next.clone();
        } else {
            y = &next + (&next - &x) * ((t - 1.0) / t_next);
            t = t_next;
        }
        x = next;
        if delta < PROX_TOL {
            return (x, iter, true);
        }
    }
    (x, PROX_MAX_ITERS, false)
}
