//! Augmented-Lagrangian solver for smooth problems of the form
//!
//! ```text
//! min J(z)  s.t.  c(z) = 0,  lo <= z <= hi
//! ```
//!
//! The outer loop updates first-order multiplier estimates and the penalty
//! `rho`; the inner loop minimizes `J + lambda'c + rho/2 |c|^2` over the box
//! with an Armijo backtracking search along the projection arc. Search
//! directions come from a projected Gauss-Newton model `B + rho J'J` when the
//! problem supplies a Hessian approximation `B`, and from projected L-BFGS
//! otherwise. Everything runs in a fixed order, so identical inputs give
//! bitwise-identical iterates.

use std::collections::VecDeque;

use log::debug;
use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn num_equalities(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn objective(&self, z: &[f64]) -> Result<f64>;
    /// Objective value; writes the gradient into `grad`.
    fn objective_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64>;
    fn equality_residuals(&self, z: &[f64], c: &mut [f64]) -> Result<()>;
    fn equality_residuals_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, CsrMatrix<f64>)>;

    /// Symmetric approximation of the objective Hessian as `(row, col,
    /// value)` triplets covering both triangles; duplicates are summed. It
    /// may be indefinite: the solver shifts the diagonal until the model
    /// factorizes. Problems returning `None` are minimized with projected
    /// L-BFGS.
    fn objective_hessian(&self, _z: &[f64]) -> Result<Option<Vec<(usize, usize, f64)>>> {
        Ok(None)
    }

    /// Curvature of the equalities weighted by `w`, `sum_i w_i Hess c_i`, in
    /// the same triplet form. Added to the objective Hessian model; empty by
    /// default.
    fn constraint_curvature(&self, _z: &[f64], _w: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        Ok(Vec::new())
    }

    /// Elimination order used when factorizing Hessian approximations, as a
    /// permutation of `0..dim`. Identity by default.
    fn elimination_order(&self) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Bound on the infinity norm of the equality residuals.
    pub eq_tol: f64,
    /// Bound on the infinity norm of the projected merit gradient.
    pub opt_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rho_init: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eq_tol: 1e-6,
            opt_tol: 1e-5,
            max_outer: 30,
            max_inner: 200,
            rho_init: 10.0,
            rho_growth: 10.0,
            rho_max: 1e8,
            memory: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("eq_tol", self.eq_tol),
            ("opt_tol", self.opt_tol),
            ("rho_init", self.rho_init),
            ("rho_max", self.rho_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, format!("{v} must be positive")));
            }
        }
        if !(self.rho_growth > 1.0) {
            return Err(Error::invalid("rho_growth", "must exceed 1"));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.memory == 0 {
            return Err(Error::invalid("max_outer", "iteration budgets and memory must be at least 1"));
        }
        Ok(())
    }
}

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;
const RESIDUAL_SHRINK: f64 = 0.25;
const MERIT_NOISE: f64 = 1e-13;
const MAX_STALLS: usize = 3;
const MAX_REFINEMENTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleBounds,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleBounds => "infeasible_bounds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub objective: f64,
    pub residual_norm: f64,
    pub step_norm: f64,
    pub projected_gradient: f64,
    pub rho: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: Vec<OuterIteration>,
    pub inner_iterations: usize,
    /// Penalty parameter when the outer loop stopped.
    pub rho: f64,
}

/// Multiplier estimate and penalty carried over from a related solve.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart<'a> {
    pub multipliers: &'a [f64],
    pub rho: f64,
}

impl Solution {
    pub fn residual_norm(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |it| it.residual_norm)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((zi, l), h) in z.iter_mut().zip(lo).zip(hi) {
        *zi = zi.clamp(*l, *h);
    }
}

fn projected_gradient_norm(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((zi, gi), (l, h))| ((zi - gi).clamp(*l, *h) - zi).abs())
        .fold(0.0, f64::max)
}

/// Augmented Lagrangian `J + lambda'c + rho/2 |c|^2` at fixed multipliers.
struct Merit<'a, P: NlpProblem + ?Sized> {
    prob: &'a P,
    lambda: &'a [f64],
    rho: f64,
    c: Vec<f64>,
    grad_j: Vec<f64>,
    jac: Option<CsrMatrix<f64>>,
    weights: Vec<f64>,
}

impl<'a, P: NlpProblem + ?Sized> Merit<'a, P> {
    fn new(prob: &'a P, lambda: &'a [f64], rho: f64) -> Self {
        Self {
            prob,
            lambda,
            rho,
            c: vec![0.0; prob.num_equalities()],
            grad_j: vec![0.0; prob.dim()],
            jac: None,
            weights: Vec::new(),
        }
    }

    fn value(&mut self, z: &[f64]) -> f64 {
        let j = match self.prob.objective(z) {
            Ok(j) => j,
            Err(_) => return f64::INFINITY,
        };
        if self.prob.equality_residuals(z, &mut self.c).is_err() {
            return f64::INFINITY;
        }
        let v = j + dot(self.lambda, &self.c) + 0.5 * self.rho * dot(&self.c, &self.c);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn value_and_gradient(&mut self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let j = self.prob.objective_and_gradient(z, &mut self.grad_j)?;
        let (c, jac) = self.prob.equality_residuals_and_jacobian(z)?;
        self.c = c;
        let w: Vec<f64> = self.lambda.iter().zip(&self.c).map(|(l, ci)| l + self.rho * ci).collect();
        grad.copy_from_slice(&self.grad_j);
        for (row, col, val) in jac.triplet_iter() {
            grad[col] += val * w[row];
        }
        self.jac = Some(jac);
        self.weights = w;
        Ok(j + dot(self.lambda, &self.c) + 0.5 * self.rho * dot(&self.c, &self.c))
    }
}

struct InnerResult {
    value: f64,
    projected_gradient: f64,
    iterations: usize,
}

/// Projected L-BFGS on the merit function; updates `z` in place.
fn minimize_box<P: NlpProblem + ?Sized>(
    merit: &mut Merit<'_, P>,
    z: &mut Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
    tol: f64,
) -> Result<InnerResult> {
    let n = z.len();
    let mut g = vec![0.0; n];
    let mut f = merit.value_and_gradient(z, &mut g)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut free = vec![true; n];
    let mut alpha_buf = vec![0.0; cfg.memory];
    let mut pg = projected_gradient_norm(z, &g, lo, hi);
    let mut iterations = 0;

    while iterations < cfg.max_inner && pg > tol {
        iterations += 1;
        for i in 0..n {
            free[i] = !((z[i] <= lo[i] && g[i] > 0.0) || (z[i] >= hi[i] && g[i] < 0.0));
        }

        let mut accepted = false;
        for attempt in 0..2 {
            if attempt == 1 {
                if history.is_empty() {
                    break;
                }
                history.clear();
            }
            two_loop_direction(&g, &free, &history, &mut alpha_buf, &mut d);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                history.clear();
                two_loop_direction(&g, &free, &history, &mut alpha_buf, &mut d);
                slope = dot(&g, &d);
                if !(slope < 0.0) {
                    break;
                }
            }

            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    trial[i] = z[i] + alpha * d[i];
                }
                project(&mut trial, lo, hi);
                let decrease: f64 = g.iter().zip(trial.iter().zip(z.iter())).map(|(gi, (t, zi))| gi * (t - zi)).sum();
                let ft = merit.value(&trial);
                if ft <= f + ARMIJO * decrease {
                    accepted = true;
                    break;
                }
                alpha *= BACKTRACK;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }

        let f_new = merit.value_and_gradient(&trial, &mut g_new)?;
        let s: Vec<f64> = trial.iter().zip(z.iter()).map(|(t, zi)| t - zi).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(z, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        pg = projected_gradient_norm(z, &g, lo, hi);
    }

    Ok(InnerResult {
        value: f,
        projected_gradient: pg,
        iterations,
    })
}

/// Projected Newton on the merit function; updates `z` in place.
///
/// Coordinates within `eps` of a bound with the gradient pushing outward are
/// moved onto it, and free coordinates on a bound that the step would push
/// outward stay where they are. The rest take the Newton step of the merit
/// Hessian model, factorized with a sparse Cholesky in `order`.
#[allow(clippy::too_many_arguments)]
fn minimize_newton<P: NlpProblem + ?Sized>(
    merit: &mut Merit<'_, P>,
    z: &mut Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
    tol: f64,
    order: &[usize],
) -> Result<InnerResult> {
    let n = z.len();
    let mut position = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        position[i] = k;
    }
    let mut g = vec![0.0; n];
    let mut f = merit.value_and_gradient(z, &mut g)?;
    let mut trial = vec![0.0; n];
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut damping = 0.0;
    let mut pg = projected_gradient_norm(z, &g, lo, hi);
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < cfg.max_inner && pg > tol {
        iterations += 1;
        let eps = pg.min(1e-3);
        // coordinates within eps of a bound they are pushed against go onto it
        for i in 0..n {
            fixed[i] = if z[i] <= lo[i] + eps && g[i] > 0.0 {
                Some(lo[i] - z[i])
            } else if z[i] >= hi[i] - eps && g[i] < 0.0 {
                Some(hi[i] - z[i])
            } else {
                None
            };
        }
        let mut hessian = merit.prob.objective_hessian(z)?.unwrap_or_default();
        hessian.extend(merit.prob.constraint_curvature(z, &merit.weights)?);
        let jac = merit.jac.as_ref().expect("gradient evaluated before the step");
        let mut d = None;
        for _ in 0..MAX_REFINEMENTS {
            d = newton_direction(&hessian, jac, merit.rho, &g, &fixed, &position, &mut damping);
            let Some(dir) = d.as_ref() else { break };
            // free coordinates on a bound that the step would push outward stay put
            let mut changed = false;
            for i in 0..n {
                if fixed[i].is_none() && ((z[i] <= lo[i] && dir[i] < 0.0) || (z[i] >= hi[i] && dir[i] > 0.0)) {
                    fixed[i] = Some(0.0);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let noise = MERIT_NOISE * f.abs().max(1.0);
        let mut accepted = false;
        for direction in [d, None] {
            let d = direction.unwrap_or_else(|| {
                let scale = 1.0 / inf_norm(&g).max(1.0);
                g.iter().map(|gi| -gi * scale).collect()
            });
            let mut alpha = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    trial[i] = z[i] + alpha * d[i];
                }
                project(&mut trial, lo, hi);
                let decrease: f64 = g.iter().zip(trial.iter().zip(z.iter())).map(|(gi, (t, zi))| gi * (t - zi)).sum();
                if decrease < 0.0 {
                    let value = merit.value(&trial);
                    // below the rounding level of f the Armijo test is meaningless
                    let tiny = -decrease <= noise && value <= f + noise;
                    if value <= f + ARMIJO * decrease || tiny {
                        accepted = true;
                        break;
                    }
                }
                alpha *= BACKTRACK;
            }
            if accepted {
                if alpha < 1.0 {
                    damping = (damping * 10.0).max(1e-8);
                } else {
                    damping *= 0.1;
                }
                break;
            }
        }
        if !accepted {
            break;
        }
        std::mem::swap(z, &mut trial);
        let (f_prev, pg_prev) = (f, pg);
        f = merit.value_and_gradient(z, &mut g)?;
        pg = projected_gradient_norm(z, &g, lo, hi);
        if f_prev - f <= noise && pg > 0.9 * pg_prev {
            stalled += 1;
            if stalled >= MAX_STALLS {
                break;
            }
        } else {
            stalled = 0;
        }
        log::trace!(
            "inner={iterations} merit={f:.9e} pg={pg:.3e} fixed={} damping={damping:.1e}",
            fixed.iter().filter(|a| a.is_some()).count()
        );
    }

    Ok(InnerResult {
        value: f,
        projected_gradient: pg,
        iterations,
    })
}

/// Solves `(B + rho J'J + damping) d = -g` over the free coordinates, with
/// each fixed coordinate displaced by its prescribed step and the coupling
/// moved to the right-hand side. `None` when the model cannot be factorized
/// even after heavy damping.
fn newton_direction(
    hessian: &[(usize, usize, f64)],
    jac: &CsrMatrix<f64>,
    rho: f64,
    g: &[f64],
    fixed: &[Option<f64>],
    position: &[usize],
    damping: &mut f64,
) -> Option<Vec<f64>> {
    let n = g.len();
    let jtj = &jac.transpose() * jac;
    let mut diag = vec![0.0; n];
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        if fixed[i].is_none() {
            rhs[position[i]] = -g[i];
        }
    }
    let mut coo = CooMatrix::new(n, n);
    let mut push = |coo: &mut CooMatrix<f64>, r: usize, c: usize, v: f64| {
        if r == c {
            diag[r] += v;
        }
        if v == 0.0 || fixed[r].is_some() {
            return;
        }
        match fixed[c] {
            None => coo.push(position[r], position[c], v),
            Some(step) => rhs[position[r]] -= v * step,
        }
    };
    for &(r, c, v) in hessian {
        push(&mut coo, r, c, v);
    }
    for (r, c, v) in jtj.triplet_iter() {
        push(&mut coo, r, c, rho * v);
    }
    let scale = diag.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut extra = *damping;
    for _ in 0..8 {
        let mut shifted = coo.clone();
        for i in 0..n {
            let v = if fixed[i].is_some() { 1.0 } else { 1e-12 * scale + extra * (1.0 + diag[i].abs()) };
            shifted.push(position[i], position[i], v);
        }
        match CscCholesky::factor(&CscMatrix::from(&shifted)) {
            Ok(chol) => {
                *damping = extra;
                let sol = chol.solve(&rhs);
                let d: Vec<f64> = (0..n).map(|i| fixed[i].unwrap_or(sol[position[i]])).collect();
                return d.iter().all(|v| v.is_finite()).then_some(d);
            }
            Err(_) => extra = (extra * 100.0).max(1e-8),
        }
    }
    None
}

/// `d = -H g` over the free coordinates (two-loop recursion), zero elsewhere.
/// With an empty history the step is steepest descent scaled to unit length
/// in the max norm.
fn two_loop_direction(
    g: &[f64],
    free: &[bool],
    history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    alpha: &mut [f64],
    d: &mut [f64],
) {
    for ((di, gi), fi) in d.iter_mut().zip(g).zip(free) {
        *di = if *fi { *gi } else { 0.0 };
    }
    let masked_dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(free)
            .filter(|(_, f)| **f)
            .map(|((x, y), _)| x * y)
            .sum()
    };
    if history.is_empty() {
        let scale = inf_norm(d);
        let scale = if scale > 1.0 { 1.0 / scale } else { 1.0 };
        for di in d.iter_mut() {
            *di = -*di * scale;
        }
        return;
    }
    for (k, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * masked_dot(s, d);
        alpha[k] = a;
        for ((di, yi), fi) in d.iter_mut().zip(y).zip(free) {
            if *fi {
                *di -= a * yi;
            }
        }
    }
    let (s, y, _) = history.back().unwrap();
    let yy = masked_dot(y, y);
    let gamma = if yy > 0.0 { masked_dot(s, y) / yy } else { 1.0 };
    let gamma = if gamma > 0.0 { gamma } else { 1.0 };
    for di in d.iter_mut() {
        *di *= gamma;
    }
    for (k, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * masked_dot(y, d);
        for ((di, si), fi) in d.iter_mut().zip(s).zip(free) {
            if *fi {
                *di += (alpha[k] - b) * si;
            }
        }
    }
    for (di, fi) in d.iter_mut().zip(free) {
        *di = if *fi { -*di } else { 0.0 };
    }
}

pub fn solve<P: NlpProblem + ?Sized>(prob: &P, cfg: &SolverConfig, init: &[f64]) -> Result<Solution> {
    solve_warm(prob, cfg, init, None)
}

/// As [`solve`], starting the outer loop from a previous multiplier estimate
/// and penalty. The penalty is kept within `[rho_init, rho_max]`.
pub fn solve_warm<P: NlpProblem + ?Sized>(
    prob: &P,
    cfg: &SolverConfig,
    init: &[f64],
    warm: Option<WarmStart<'_>>,
) -> Result<Solution> {
    let n = prob.dim();
    let ne = prob.num_equalities();
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: init.len(),
        });
    }
    let (lo, hi) = (prob.lower_bounds(), prob.upper_bounds());
    if let Some(i) = (0..n).find(|&i| !(lo[i] <= hi[i])) {
        debug!("bound {i} is inconsistent: {} > {}", lo[i], hi[i]);
        return Ok(Solution {
            z: init.to_vec(),
            multipliers: vec![0.0; ne],
            objective: f64::NAN,
            status: SolveStatus::InfeasibleBounds,
            iterations: Vec::new(),
            inner_iterations: 0,
            rho: cfg.rho_init,
        });
    }

    let mut z = init.to_vec();
    project(&mut z, lo, hi);
    let (mut lambda, mut rho) = match warm {
        Some(w) if w.multipliers.len() == ne => (w.multipliers.to_vec(), w.rho.clamp(cfg.rho_init, cfg.rho_max)),
        _ => (vec![0.0; ne], cfg.rho_init),
    };
    let mut c = vec![0.0; ne];
    prob.equality_residuals(&z, &mut c)?;
    let mut prev_residual = inf_norm(&c);

    let mut iterations = Vec::new();
    let mut total_inner = 0;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let order = if prob.objective_hessian(&z)?.is_some() {
        Some(prob.elimination_order().unwrap_or_else(|| (0..n).collect()))
    } else {
        None
    };
    let mut status = SolveStatus::MaxIter;

    for outer in 0..cfg.max_outer {
        let z_prev = z.clone();
        let inner = {
            let mut merit = Merit::new(prob, &lambda, rho);
            match &order {
                Some(order) => minimize_newton(&mut merit, &mut z, lo, hi, cfg, cfg.opt_tol, order)?,
                None => minimize_box(&mut merit, &mut z, lo, hi, cfg, cfg.opt_tol)?,
            }
        };
        total_inner += inner.iterations;
        prob.equality_residuals(&z, &mut c)?;
        let residual = inf_norm(&c);
        let objective = prob.objective(&z)?;
        let step_norm = z.iter().zip(&z_prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for (l, ci) in lambda.iter_mut().zip(&c) {
            *l += rho * ci;
        }
        iterations.push(OuterIteration {
            objective,
            residual_norm: residual,
            step_norm,
            projected_gradient: inner.projected_gradient,
            rho,
            inner_iterations: inner.iterations,
        });
        debug!(
            "outer={outer} objective={objective:.6e} merit={:.6e} residual={residual:.3e} pg={:.3e} rho={rho:.1e} inner={}",
            inner.value, inner.projected_gradient, inner.iterations
        );

        let score = (residual / cfg.eq_tol).max(inner.projected_gradient / cfg.opt_tol);
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, z.clone(), lambda.clone()));
        }
        if residual <= cfg.eq_tol && inner.projected_gradient <= cfg.opt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if residual > RESIDUAL_SHRINK * prev_residual {
            rho = (rho * cfg.rho_growth).min(cfg.rho_max);
        }
        prev_residual = residual;
    }

    if status != SolveStatus::Converged {
        if let Some((_, bz, bl)) = best {
            z = bz;
            lambda = bl;
        }
    }
    let objective = prob.objective(&z)?;
    Ok(Solution {
        z,
        multipliers: lambda,
        objective,
        status,
        iterations,
        inner_iterations: total_inner,
        rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub finite_difference: f64,
}

const MAX_CHECKED_COORDS: usize = 400;

/// Central-difference check of the objective gradient. Large problems are
/// checked on an evenly spaced subset of 400 coordinates. The error at each
/// coordinate is `|analytic - fd| / max(1, |analytic|, |fd|)`.
pub fn check_gradient<P: NlpProblem + ?Sized>(prob: &P, z: &[f64], step: f64) -> Result<GradientCheck> {
    let n = prob.dim();
    let mut grad = vec![0.0; n];
    prob.objective_and_gradient(z, &mut grad)?;
    let indices: Vec<usize> = if n <= MAX_CHECKED_COORDS {
        (0..n).collect()
    } else {
        (0..MAX_CHECKED_COORDS).map(|k| k * n / MAX_CHECKED_COORDS).collect()
    };
    let mut worst = GradientCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        finite_difference: 0.0,
    };
    let mut zp = z.to_vec();
    for i in indices {
        let h = step * z[i].abs().max(1.0);
        zp[i] = z[i] + h;
        let fp = prob.objective(&zp)?;
        zp[i] = z[i] - h;
        let fm = prob.objective(&zp)?;
        zp[i] = z[i];
        let fd = (fp - fm) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
        if !(err <= worst.max_relative_error) {
            worst = GradientCheck {
                max_relative_error: err,
                worst_index: i,
                analytic: grad[i],
                finite_difference: fd,
            };
        }
    }
    Ok(worst)
}
