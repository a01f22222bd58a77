//! Multiple-shooting transcription of the tracking problem
//!
//! ```text
//! min  sum_{j<N} |x_j - x_a|_Q^2 + |u_j - u_a|_R^2 + |y_a - y_t|_T^2 + avoidance(y_0..y_N, y_a)
//! s.t. x_0 = x,  x_{j+1} = f(x_j, u_j),  x_N = x_a,  x_a = f(x_a, u_a),
//!      (x_j, u_j) in X x U,  (x_a, u_a) in lambda (X x U)
//! ```
//!
//! Decision vector packing: `[x_0 .. x_N, u_0 .. u_{N-1}, x_a, u_a]`.
//! Equality residual stacking: initial condition (n), shooting defects for
//! `j = 0..N-1` (n each), terminal `x_N - x_a` (n), steady state
//! `x_a - f(x_a, u_a)` (n).

use std::ops::Range;

use log::warn;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::barrier::{horizon_penalty, horizon_penalty_hessian, horizon_penalty_with_gradient, BarrierParams, DistanceField};
use crate::dynamics::{rk4_step, rk4_step_with_jacobians, rk4_weighted_curvature, SystemModel};
use crate::error::{Error, Result};
use crate::smoothdist::SmoothDistParams;
use crate::solver::{NlpProblem, Solution, WarmStart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmpcConfig {
    pub horizon: usize,
    /// Diagonal of the state weight.
    pub q: Vec<f64>,
    /// Diagonal of the input weight.
    pub r: Vec<f64>,
    /// Diagonal of the offset weight on `y_a - y_t`.
    pub t_w: Vec<f64>,
    /// Shrink factor of the admissible equilibrium box.
    pub lambda: f64,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub smoothing: SmoothDistParams,
    pub barrier: BarrierParams,
}

impl NmpcConfig {
    pub fn validate(&self, n: usize, m: usize, p: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        let lens = [
            ("q", self.q.len(), n),
            ("r", self.r.len(), m),
            ("t_w", self.t_w.len(), p),
            ("state_lower", self.state_lower.len(), n),
            ("state_upper", self.state_upper.len(), n),
            ("input_lower", self.input_lower.len(), m),
            ("input_upper", self.input_upper.len(), m),
        ];
        for (key, found, expected) in lens {
            if found != expected {
                return Err(Error::invalid(key, format!("expected {expected} entries, found {found}")));
            }
        }
        if self.q.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("q", "weights must be nonnegative"));
        }
        for (key, w) in [("r", &self.r), ("t_w", &self.t_w)] {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(key, "weights must be positive"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::invalid(
                "lambda",
                format!("{} is outside the open interval (0, 1)", self.lambda),
            ));
        }
        for (key, lo, hi) in [
            ("state_lower", &self.state_lower, &self.state_upper),
            ("input_lower", &self.input_lower, &self.input_upper),
        ] {
            if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
                return Err(Error::invalid(key, format!("entry {i}: {} exceeds the upper bound {}", lo[i], hi[i])));
            }
        }
        self.smoothing.validate()?;
        self.barrier.validate()
    }
}

/// Interval `[lo, hi]` shrunk toward its midpoint by `lambda`. Unbounded
/// intervals are left alone.
pub fn shrink_interval(lo: f64, hi: f64, lambda: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (lo, hi);
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * lambda * (hi - lo);
    (mid - half, mid + half)
}

/// Index arithmetic for the packed decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.n * (self.horizon + 1) + self.m * self.horizon + self.n + self.m
    }

    pub fn num_equalities(&self) -> usize {
        self.n * (self.horizon + 3)
    }

    pub fn state(&self, j: usize) -> Range<usize> {
        j * self.n..(j + 1) * self.n
    }

    pub fn input(&self, j: usize) -> Range<usize> {
        let base = self.n * (self.horizon + 1);
        base + j * self.m..base + (j + 1) * self.m
    }

    pub fn artificial_state(&self) -> Range<usize> {
        let base = self.n * (self.horizon + 1) + self.m * self.horizon;
        base..base + self.n
    }

    pub fn artificial_input(&self) -> Range<usize> {
        let base = self.n * (self.horizon + 2) + self.m * self.horizon;
        base..base + self.m
    }

    /// Residual rows of the defect `x_{j+1} - f(x_j, u_j)`.
    pub fn defect_rows(&self, j: usize) -> Range<usize> {
        (j + 1) * self.n..(j + 2) * self.n
    }

    pub fn terminal_rows(&self) -> Range<usize> {
        (self.horizon + 1) * self.n..(self.horizon + 2) * self.n
    }

    pub fn steady_rows(&self) -> Range<usize> {
        (self.horizon + 2) * self.n..(self.horizon + 3) * self.n
    }
}

/// A solved OCP together with the layout needed to read it.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub layout: Layout,
    pub solution: Solution,
}

impl OcpSolution {
    pub fn first_input(&self) -> &[f64] {
        &self.solution.z[self.layout.input(0)]
    }

    pub fn artificial_state(&self) -> &[f64] {
        &self.solution.z[self.layout.artificial_state()]
    }

    pub fn artificial_input(&self) -> &[f64] {
        &self.solution.z[self.layout.artificial_input()]
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.solution.z[self.layout.state(j)]
    }

    /// The plan advanced by one stage, as used for warm starts.
    pub fn shifted(&self) -> OcpSolution {
        let mut out = self.clone();
        out.solution.z = shift_guess(&self.layout, &self.solution.z);
        out.solution.multipliers = shift_multipliers(&self.layout, &self.solution.multipliers);
        out
    }
}

/// The transcribed NLP for one sampling instant.
pub struct OcpProblem<'a, M: SystemModel, F: DistanceField> {
    model: &'a M,
    cfg: &'a NmpcConfig,
    sensed: &'a [F],
    layout: Layout,
    x_meas: Vec<f64>,
    y_target: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    initial_guess: Vec<f64>,
    initial_multipliers: Option<Vec<f64>>,
    initial_penalty: f64,
}

/// Assembles the problem. With `warm`, the initial guess is the previous
/// solution shifted one stage (last stage repeated, artificial pair kept);
/// otherwise a constant-input rollout from `x_meas` at the model's
/// equilibrium input.
pub fn build_problem<'a, M: SystemModel, F: DistanceField>(
    cfg: &'a NmpcConfig,
    model: &'a M,
    x_meas: &[f64],
    y_target: &[f64],
    sensed: &'a [F],
    warm: Option<&OcpSolution>,
) -> Result<OcpProblem<'a, M, F>> {
    let (n, m, p) = (model.state_dim(), model.input_dim(), model.output_dim());
    cfg.validate(n, m, p)?;
    if x_meas.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x_meas.len() });
    }
    if y_target.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: y_target.len() });
    }
    if y_target.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("target", "non-finite component"));
    }
    let layout = Layout { n, m, p, horizon: cfg.horizon };

    let mut x0 = x_meas.to_vec();
    for i in 0..n {
        let clamped = x0[i].clamp(cfg.state_lower[i], cfg.state_upper[i]);
        if clamped != x0[i] {
            warn!("measured state {i} = {} clamped into [{}, {}]", x0[i], cfg.state_lower[i], cfg.state_upper[i]);
            x0[i] = clamped;
        }
    }

    let dim = layout.dim();
    let mut lower = vec![0.0; dim];
    let mut upper = vec![0.0; dim];
    for j in 0..=cfg.horizon {
        lower[layout.state(j)].copy_from_slice(&cfg.state_lower);
        upper[layout.state(j)].copy_from_slice(&cfg.state_upper);
    }
    for j in 0..cfg.horizon {
        lower[layout.input(j)].copy_from_slice(&cfg.input_lower);
        upper[layout.input(j)].copy_from_slice(&cfg.input_upper);
    }
    for (k, i) in layout.artificial_state().enumerate() {
        (lower[i], upper[i]) = shrink_interval(cfg.state_lower[k], cfg.state_upper[k], cfg.lambda);
    }
    for (k, i) in layout.artificial_input().enumerate() {
        (lower[i], upper[i]) = shrink_interval(cfg.input_lower[k], cfg.input_upper[k], cfg.lambda);
    }

    let (initial_guess, initial_multipliers, initial_penalty) = match warm {
        Some(prev) if prev.layout == layout => (
            shift_guess(&layout, &prev.solution.z),
            Some(shift_multipliers(&layout, &prev.solution.multipliers)),
            prev.solution.rho,
        ),
        _ => (cold_guess(&layout, model, &x0, &lower, &upper)?, None, 0.0),
    };

    Ok(OcpProblem {
        model,
        cfg,
        sensed,
        layout,
        x_meas: x0,
        y_target: y_target.to_vec(),
        lower,
        upper,
        initial_guess,
        initial_multipliers,
        initial_penalty,
    })
}

fn shift_guess(layout: &Layout, z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    let big_n = layout.horizon;
    for j in 0..big_n {
        out.copy_within(layout.state(j + 1), layout.state(j).start);
    }
    for j in 0..big_n - 1 {
        out.copy_within(layout.input(j + 1), layout.input(j).start);
    }
    out
}

fn shift_multipliers(layout: &Layout, lambda: &[f64]) -> Vec<f64> {
    if lambda.len() != layout.num_equalities() {
        return vec![0.0; layout.num_equalities()];
    }
    let mut out = lambda.to_vec();
    let n = layout.n;
    // the new initial condition inherits the old first defect's multiplier
    out.copy_within(layout.defect_rows(0), 0);
    for j in 0..layout.horizon - 1 {
        out.copy_within(layout.defect_rows(j + 1), layout.defect_rows(j).start);
    }
    debug_assert_eq!(layout.defect_rows(0).start, n);
    out
}

fn cold_guess<M: SystemModel>(layout: &Layout, model: &M, x0: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    let mut z = vec![0.0; layout.dim()];
    let u_eq = model.equilibrium_input();
    let mut x = x0.to_vec();
    for j in 0..=layout.horizon {
        z[layout.state(j)].copy_from_slice(&x);
        if j < layout.horizon {
            z[layout.input(j)].copy_from_slice(&u_eq);
            x = rk4_step(model, &x, &u_eq)?;
        }
    }
    z[layout.artificial_state()].copy_from_slice(&model.rest_state(x0));
    z[layout.artificial_input()].copy_from_slice(&u_eq);
    for ((zi, l), h) in z.iter_mut().zip(lower).zip(upper) {
        *zi = zi.clamp(*l, *h);
    }
    Ok(z)
}

impl<'a, M: SystemModel, F: DistanceField> OcpProblem<'a, M, F> {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn initial_guess(&self) -> &[f64] {
        &self.initial_guess
    }

    pub fn initial_multipliers(&self) -> Option<&[f64]> {
        self.initial_multipliers.as_deref()
    }

    /// Shifted multipliers and final penalty of the previous plan, if any.
    pub fn warm_start(&self) -> Option<WarmStart<'_>> {
        self.initial_multipliers.as_deref().map(|multipliers| WarmStart {
            multipliers,
            rho: self.initial_penalty,
        })
    }

    pub fn measured_state(&self) -> &[f64] {
        &self.x_meas
    }

    /// Output trajectory `y_0 .. y_N` (flattened) and artificial output `y_a`.
    fn outputs(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout;
        let mut ys = vec![0.0; l.p * (l.horizon + 1)];
        for j in 0..=l.horizon {
            self.model.output(&z[l.state(j)], &mut ys[j * l.p..(j + 1) * l.p]);
        }
        let mut ya = vec![0.0; l.p];
        self.model.output(&z[l.artificial_state()], &mut ya);
        (ys, ya)
    }

    fn tracking_cost(&self, z: &[f64], ya: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout;
        let xa = &z[l.artificial_state()];
        let ua = &z[l.artificial_input()];
        let mut cost = 0.0;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for j in 0..l.horizon {
            for (k, i) in l.state(j).enumerate() {
                let d = z[i] - xa[k];
                cost += self.cfg.q[k] * d * d;
                if let Some(g) = grad.as_deref_mut() {
                    g[i] += 2.0 * self.cfg.q[k] * d;
                    g[l.artificial_state().start + k] -= 2.0 * self.cfg.q[k] * d;
                }
            }
            for (k, i) in l.input(j).enumerate() {
                let d = z[i] - ua[k];
                cost += self.cfg.r[k] * d * d;
                if let Some(g) = grad.as_deref_mut() {
                    g[i] += 2.0 * self.cfg.r[k] * d;
                    g[l.artificial_input().start + k] -= 2.0 * self.cfg.r[k] * d;
                }
            }
        }
        for k in 0..l.p {
            let d = ya[k] - self.y_target[k];
            cost += self.cfg.t_w[k] * d * d;
            if let Some(g) = grad.as_deref_mut() {
                g[l.artificial_state().start + self.model.output_state_index(k)] += 2.0 * self.cfg.t_w[k] * d;
            }
        }
        cost
    }

    /// Objective value and its exact gradient.
    pub fn objective_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; z.len()];
        let v = self.eval_objective(z, Some(&mut g));
        (v, g)
    }

    fn eval_objective(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout;
        let (ys, ya) = self.outputs(z);
        match grad {
            None => self.tracking_cost(z, &ya, None) + horizon_penalty(&ys, &ya, self.sensed, &self.cfg.barrier),
            Some(g) => {
                let mut cost = self.tracking_cost(z, &ya, Some(&mut *g));
                if self.sensed.is_empty() {
                    return cost;
                }
                let mut gy = vec![0.0; ys.len()];
                let mut gya = vec![0.0; l.p];
                cost += horizon_penalty_with_gradient(&ys, &ya, self.sensed, &self.cfg.barrier, &mut gy, &mut gya);
                for j in 0..=l.horizon {
                    let base = l.state(j).start;
                    for k in 0..l.p {
                        g[base + self.model.output_state_index(k)] += gy[j * l.p + k];
                    }
                }
                let base = l.artificial_state().start;
                for k in 0..l.p {
                    g[base + self.model.output_state_index(k)] += gya[k];
                }
                cost
            }
        }
    }

    /// Hessian of the objective: exact for the tracking and avoidance terms,
    /// with the curvature of the dynamics left out.
    pub fn hessian_approximation(&self, z: &[f64]) -> Vec<(usize, usize, f64)> {
        let l = self.layout;
        let mut h = Vec::new();
        let coupled = |h: &mut Vec<(usize, usize, f64)>, i: usize, a: usize, w: f64| {
            h.extend_from_slice(&[(i, i, w), (a, a, w), (i, a, -w), (a, i, -w)]);
        };
        for j in 0..l.horizon {
            for (k, (i, a)) in l.state(j).zip(l.artificial_state()).enumerate() {
                coupled(&mut h, i, a, 2.0 * self.cfg.q[k]);
            }
            for (k, (i, a)) in l.input(j).zip(l.artificial_input()).enumerate() {
                coupled(&mut h, i, a, 2.0 * self.cfg.r[k]);
            }
        }
        let xa = l.artificial_state().start;
        for k in 0..l.p {
            let i = xa + self.model.output_state_index(k);
            h.push((i, i, 2.0 * self.cfg.t_w[k]));
        }
        if !self.sensed.is_empty() {
            let (ys, ya) = self.outputs(z);
            let stages = l.horizon + 1;
            let to_z = |idx: usize| {
                let (j, k) = (idx / l.p, idx % l.p);
                let base = if j < stages { l.state(j).start } else { xa };
                base + self.model.output_state_index(k)
            };
            horizon_penalty_hessian(&ys, &ya, self.sensed, &self.cfg.barrier, |r, c, v| h.push((to_z(r), to_z(c), v)));
        }
        h
    }

    /// Stage-interleaved order `x_0, u_0, x_1, .., x_N, x_a, u_a`, which keeps
    /// the Hessian model banded apart from the artificial pair.
    pub fn stage_order(&self) -> Vec<usize> {
        let l = self.layout;
        let mut order = Vec::with_capacity(l.dim());
        for j in 0..l.horizon {
            order.extend(l.state(j));
            order.extend(l.input(j));
        }
        order.extend(l.state(l.horizon));
        order.extend(l.artificial_state());
        order.extend(l.artificial_input());
        order
    }

    fn residuals_into(&self, z: &[f64], c: &mut [f64]) -> Result<()> {
        let l = self.layout;
        for (k, i) in l.state(0).enumerate() {
            c[k] = z[i] - self.x_meas[k];
        }
        for j in 0..l.horizon {
            let next = rk4_step(self.model, &z[l.state(j)], &z[l.input(j)])?;
            for ((row, i), f) in l.defect_rows(j).zip(l.state(j + 1)).zip(next) {
                c[row] = z[i] - f;
            }
        }
        for ((row, i), a) in l.terminal_rows().zip(l.state(l.horizon)).zip(l.artificial_state()) {
            c[row] = z[i] - z[a];
        }
        let xa = &z[l.artificial_state()];
        let next = rk4_step(self.model, xa, &z[l.artificial_input()])?;
        for ((row, a), f) in l.steady_rows().zip(xa).zip(next) {
            c[row] = a - f;
        }
        Ok(())
    }

    /// Residual vector (stacked as documented on the module) and its sparse
    /// Jacobian with respect to `z`.
    pub fn equality_residuals_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, CsrMatrix<f64>)> {
        let l = self.layout;
        let n = l.n;
        let mut c = vec![0.0; l.num_equalities()];
        let mut coo = CooMatrix::new(l.num_equalities(), l.dim());

        for (k, i) in l.state(0).enumerate() {
            c[k] = z[i] - self.x_meas[k];
            coo.push(k, i, 1.0);
        }
        let push_block = |coo: &mut CooMatrix<f64>, rows: Range<usize>, cols: Range<usize>, mat: &nalgebra::DMatrix<f64>, sign: f64| {
            for (a, row) in rows.enumerate() {
                for (b, col) in cols.clone().enumerate() {
                    let v = mat[(a, b)];
                    if v != 0.0 {
                        coo.push(row, col, sign * v);
                    }
                }
            }
        };
        for j in 0..l.horizon {
            let (next, fx, fu) = rk4_step_with_jacobians(self.model, &z[l.state(j)], &z[l.input(j)])?;
            for (k, (row, i)) in l.defect_rows(j).zip(l.state(j + 1)).enumerate() {
                c[row] = z[i] - next[k];
                coo.push(row, i, 1.0);
            }
            push_block(&mut coo, l.defect_rows(j), l.state(j), &fx, -1.0);
            push_block(&mut coo, l.defect_rows(j), l.input(j), &fu, -1.0);
        }
        for ((row, i), a) in l.terminal_rows().zip(l.state(l.horizon)).zip(l.artificial_state()) {
            c[row] = z[i] - z[a];
            coo.push(row, i, 1.0);
            coo.push(row, a, -1.0);
        }
        let xa = &z[l.artificial_state()];
        let (next, mut fx, fu) = rk4_step_with_jacobians(self.model, xa, &z[l.artificial_input()])?;
        for (k, (row, a)) in l.steady_rows().zip(xa).enumerate() {
            c[row] = a - next[k];
        }
        // d/dx_a (x_a - f(x_a, u_a)) = I - F_x
        fx.neg_mut();
        for k in 0..n {
            fx[(k, k)] += 1.0;
        }
        push_block(&mut coo, l.steady_rows(), l.artificial_state(), &fx, 1.0);
        push_block(&mut coo, l.steady_rows(), l.artificial_input(), &fu, -1.0);
        Ok((c, CsrMatrix::from(&coo)))
    }
}

impl<'a, M: SystemModel, F: DistanceField> NlpProblem for OcpProblem<'a, M, F> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }
    fn num_equalities(&self) -> usize {
        self.layout.num_equalities()
    }
    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }
    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }
    fn objective(&self, z: &[f64]) -> Result<f64> {
        Ok(self.eval_objective(z, None))
    }
    fn objective_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        Ok(self.eval_objective(z, Some(grad)))
    }
    fn equality_residuals(&self, z: &[f64], c: &mut [f64]) -> Result<()> {
        self.residuals_into(z, c)
    }
    fn equality_residuals_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, CsrMatrix<f64>)> {
        OcpProblem::equality_residuals_and_jacobian(self, z)
    }
    fn objective_hessian(&self, z: &[f64]) -> Result<Option<Vec<(usize, usize, f64)>>> {
        Ok(Some(self.hessian_approximation(z)))
    }
    fn constraint_curvature(&self, z: &[f64], w: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        let l = self.layout;
        let mut h = Vec::new();
        // every dynamic row reads x+ with a minus sign
        let mut stage = |xs: Range<usize>, us: Range<usize>, rows: Range<usize>| -> Result<()> {
            let block = rk4_weighted_curvature(self.model, &z[xs.clone()], &z[us.clone()], &w[rows])?;
            let idx: Vec<usize> = xs.chain(us).collect();
            for (a, &i) in idx.iter().enumerate() {
                for (b, &k) in idx.iter().enumerate() {
                    let v = block[(a, b)];
                    if v != 0.0 {
                        h.push((i, k, -v));
                    }
                }
            }
            Ok(())
        };
        for j in 0..l.horizon {
            stage(l.state(j), l.input(j), l.defect_rows(j))?;
        }
        stage(l.artificial_state(), l.artificial_input(), l.steady_rows())?;
        Ok(h)
    }
    fn elimination_order(&self) -> Option<Vec<usize>> {
        Some(self.stage_order())
    }
}

/// Default weights and bounds for the full-scale quadrotor.
pub fn quadrotor_defaults() -> NmpcConfig {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};
    NmpcConfig {
        horizon: 35,
        q: vec![1.0, 1.0, 1.0, 0.1, 0.1, 1.0, 1.0, 1.0, 1.0, 10.0, 10.0, 1.0],
        r: vec![3.0; 4],
        t_w: vec![1000.0; 3],
        lambda: 0.99,
        state_lower: vec![-25.0, -25.0, 0.0, -FRAC_PI_6, -FRAC_PI_6, -PI, -5.0, -5.0, -3.0, -FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2],
        state_upper: vec![25.0, 25.0, 25.0, FRAC_PI_6, FRAC_PI_6, PI, 5.0, 5.0, 3.0, FRAC_PI_2, FRAC_PI_2, FRAC_PI_2],
        input_lower: vec![0.0; 4],
        input_upper: vec![12.0; 4],
        smoothing: SmoothDistParams::default(),
        barrier: BarrierParams::default(),
    }
}

/// Default weights and bounds for a `dim`-axis double integrator.
pub fn double_integrator_defaults(dim: usize) -> NmpcConfig {
    let pos_lo = [-25.0, -25.0, 0.0];
    let pos_hi = [25.0, 25.0, 25.0];
    let vel = [5.0, 5.0, 3.0];
    let mut state_lower = pos_lo[..dim].to_vec();
    state_lower.extend(vel[..dim].iter().map(|v| -v));
    let mut state_upper = pos_hi[..dim].to_vec();
    state_upper.extend_from_slice(&vel[..dim]);
    NmpcConfig {
        horizon: 35,
        q: vec![1.0; 2 * dim],
        r: vec![3.0; dim],
        t_w: vec![1000.0; dim],
        lambda: 0.99,
        state_lower,
        state_upper,
        input_lower: vec![-5.0; dim],
        input_upper: vec![5.0; dim],
        smoothing: SmoothDistParams::default(),
        barrier: BarrierParams::default(),
    }
}
