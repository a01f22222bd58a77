//! Discrete barrier penalties built on a distance field.
//!
//! `beta(y) = D(y) - d_min` is nonnegative on the safe set. Consecutive
//! predicted outputs are checked with the violation measure
//! `g = c * beta(y_j) - beta(y_{j+1})`, where `c = 1 - delta` by default, and
//! violations are priced by the softplus penalty
//! `F(g) = (1/kappa) * softplus(kappa * g)^epsilon`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothdist::{SmoothDistParams, WeightedCloud};

/// Something that measures how far an output is from one obstacle.
pub trait DistanceField {
    fn id(&self) -> &str;
    fn distance(&self, y: &[f64]) -> f64;
    fn distance_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64;
    /// Hessian of the distance at `y`, row-major. Fields without curvature
    /// information leave zeros.
    fn hessian(&self, _y: &[f64], hess: &mut [f64]) {
        hess.fill(0.0);
    }
}

impl<T: DistanceField + ?Sized> DistanceField for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn distance(&self, y: &[f64]) -> f64 {
        (**self).distance(y)
    }
    fn distance_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        (**self).distance_and_gradient(y, grad)
    }
    fn hessian(&self, y: &[f64], hess: &mut [f64]) {
        (**self).hessian(y, hess)
    }
}

/// A sensed cloud measured with the smoothed metric.
#[derive(Debug, Clone)]
pub struct SmoothedObstacle {
    pub cloud: WeightedCloud,
    pub params: SmoothDistParams,
}

impl DistanceField for SmoothedObstacle {
    fn id(&self) -> &str {
        self.cloud.cloud().id()
    }
    fn distance(&self, y: &[f64]) -> f64 {
        self.cloud.evaluate(y, &self.params, None)
    }
    fn distance_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        self.cloud.distance_and_gradient(y, &self.params, grad)
    }
    fn hessian(&self, y: &[f64], hess: &mut [f64]) {
        self.cloud.hessian(y, &self.params, hess)
    }
}

/// Which factor multiplies `beta(y_j)` in the violation measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayConvention {
    /// `g = (1 - delta) beta_j - beta_{j+1}`
    #[default]
    AsPrinted,
    /// `g = delta beta_j - beta_{j+1}`, i.e. `beta_{j+1} >= delta beta_j`
    Definition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierParams {
    pub delta: f64,
    pub d_min: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub mu: f64,
    #[serde(default)]
    pub decay_convention: DecayConvention,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            delta: 0.95,
            d_min: 0.5,
            kappa: 10.0,
            epsilon: 1.0,
            mu: 5e4,
            decay_convention: DecayConvention::AsPrinted,
        }
    }
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta", format!("{} is outside the open interval (0, 1)", self.delta)));
        }
        for (key, v) in [("d_min", self.d_min), ("kappa", self.kappa), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, format!("{v} must be positive and finite")));
            }
        }
        // mu = 0 switches the avoidance terms off, which the gradient checks use.
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", format!("{} must be nonnegative and finite", self.mu)));
        }
        Ok(())
    }

    /// Factor applied to `beta(y_j)` in the violation measure.
    pub fn decay_factor(&self) -> f64 {
        match self.decay_convention {
            DecayConvention::AsPrinted => 1.0 - self.delta,
            DecayConvention::Definition => self.delta,
        }
    }
}

pub fn beta(y: &[f64], wc: &WeightedCloud, bp: &BarrierParams, sp: &SmoothDistParams) -> f64 {
    wc.evaluate(y, sp, None) - bp.d_min
}

pub fn violation(beta_j: f64, beta_j1: f64, bp: &BarrierParams) -> f64 {
    bp.decay_factor() * beta_j - beta_j1
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn penalty(g: f64, bp: &BarrierParams) -> f64 {
    let s = softplus(bp.kappa * g);
    if bp.epsilon == 1.0 {
        s / bp.kappa
    } else {
        s.powf(bp.epsilon) / bp.kappa
    }
}

/// `F(g) - max(0, g)`, the gap to the hinge. With `epsilon == 1` it is
/// evaluated as `ln(1 + exp(-kappa |g|)) / kappa`, which stays positive where
/// the plain difference rounds to zero.
pub fn penalty_excess(g: f64, bp: &BarrierParams) -> f64 {
    if bp.epsilon == 1.0 {
        (-(bp.kappa * g).abs()).exp().ln_1p() / bp.kappa
    } else {
        penalty(g, bp) - g.max(0.0)
    }
}

/// dF/dg.
pub fn penalty_derivative(g: f64, bp: &BarrierParams) -> f64 {
    let x = bp.kappa * g;
    if bp.epsilon == 1.0 {
        return sigmoid(x);
    }
    let s = softplus(x);
    if s == 0.0 {
        return 0.0;
    }
    bp.epsilon * s.powf(bp.epsilon - 1.0) * sigmoid(x)
}

/// d²F/dg².
pub fn penalty_curvature(g: f64, bp: &BarrierParams) -> f64 {
    let x = bp.kappa * g;
    let sg = sigmoid(x);
    let logistic = bp.kappa * sg * (1.0 - sg);
    if bp.epsilon == 1.0 {
        return logistic;
    }
    let s = softplus(x);
    if s == 0.0 {
        return 0.0;
    }
    let e = bp.epsilon;
    e * (e - 1.0) * s.powf(e - 2.0) * sg * sg * bp.kappa + e * s.powf(e - 1.0) * logistic
}

/// Hessian of [`horizon_penalty`]. Every violation term contributes
/// `mu F''(g) grad(g) grad(g)' + mu F'(g) hess(g)`, which is indefinite in
/// general. Entries are reported through `push(row, col, value)` in output
/// coordinates, where stage `j` occupies `j*p .. (j+1)*p` and `y_a` follows
/// the last stage.
pub fn horizon_penalty_hessian<F: DistanceField>(
    outputs: &[f64],
    y_a: &[f64],
    sensed: &[F],
    bp: &BarrierParams,
    mut push: impl FnMut(usize, usize, f64),
) {
    let p = y_a.len();
    let stages = outputs.len() / p;
    let c = bp.decay_factor();
    let mut betas = vec![0.0; stages];
    let mut dbeta = vec![0.0; outputs.len()];
    let mut hbeta = vec![0.0; stages * p * p];
    let mut dbeta_a = vec![0.0; p];
    let mut hbeta_a = vec![0.0; p * p];
    let mut grad = vec![0.0; 2 * p];
    for field in sensed {
        for j in 0..stages {
            let y = &outputs[j * p..(j + 1) * p];
            betas[j] = field.distance_and_gradient(y, &mut dbeta[j * p..(j + 1) * p]) - bp.d_min;
            field.hessian(y, &mut hbeta[j * p * p..(j + 1) * p * p]);
        }
        for j in 0..stages.saturating_sub(1) {
            let g = c * betas[j] - betas[j + 1];
            let slope = bp.mu * penalty_derivative(g, bp);
            let w = bp.mu * penalty_curvature(g, bp);
            for k in 0..p {
                grad[k] = c * dbeta[j * p + k];
                grad[p + k] = -dbeta[(j + 1) * p + k];
            }
            for a in 0..2 * p {
                for b in 0..2 * p {
                    let mut v = w * grad[a] * grad[b];
                    if a < p && b < p {
                        v += slope * c * hbeta[j * p * p + a * p + b];
                    } else if a >= p && b >= p {
                        v -= slope * hbeta[(j + 1) * p * p + (a - p) * p + (b - p)];
                    }
                    if v != 0.0 {
                        push(j * p + a, j * p + b, v);
                    }
                }
            }
        }
        let beta_a = field.distance_and_gradient(y_a, &mut dbeta_a) - bp.d_min;
        field.hessian(y_a, &mut hbeta_a);
        let g_a = (c - 1.0) * beta_a;
        let w = bp.mu * penalty_curvature(g_a, bp) * (c - 1.0) * (c - 1.0);
        let slope = bp.mu * penalty_derivative(g_a, bp) * (c - 1.0);
        let base = stages * p;
        for a in 0..p {
            for b in 0..p {
                let v = w * dbeta_a[a] * dbeta_a[b] + slope * hbeta_a[a * p + b];
                if v != 0.0 {
                    push(base + a, base + b, v);
                }
            }
        }
    }
}

/// Total avoidance cost of a predicted output trajectory.
///
/// `outputs` holds `y_0 .. y_N` flattened (`p = y_a.len()` values each). For
/// every obstacle the cost adds `mu * F(g(y_j, y_{j+1}))` for each consecutive
/// pair plus `mu * F(g(y_a, y_a))` for the artificial steady output. Obstacles
/// are summed in slice order.
pub fn horizon_penalty<F: DistanceField>(outputs: &[f64], y_a: &[f64], sensed: &[F], bp: &BarrierParams) -> f64 {
    horizon_penalty_impl(outputs, y_a, sensed, bp, None)
}

/// As [`horizon_penalty`], additionally accumulating the gradient with respect
/// to every output into `grad_outputs` (same layout as `outputs`) and with
/// respect to `y_a` into `grad_ya`. Both buffers are added to, not overwritten.
pub fn horizon_penalty_with_gradient<F: DistanceField>(
    outputs: &[f64],
    y_a: &[f64],
    sensed: &[F],
    bp: &BarrierParams,
    grad_outputs: &mut [f64],
    grad_ya: &mut [f64],
) -> f64 {
    horizon_penalty_impl(outputs, y_a, sensed, bp, Some((grad_outputs, grad_ya)))
}

fn horizon_penalty_impl<F: DistanceField>(
    outputs: &[f64],
    y_a: &[f64],
    sensed: &[F],
    bp: &BarrierParams,
    mut grads: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let p = y_a.len();
    debug_assert!(p > 0 && outputs.len() % p == 0);
    let stages = outputs.len() / p;
    let c = bp.decay_factor();
    let mut total = 0.0;
    let mut betas = vec![0.0; stages];
    let mut dbeta = vec![0.0; outputs.len()];
    let mut dbeta_a = vec![0.0; p];

    for field in sensed {
        for (j, (b, db)) in betas.iter_mut().zip(dbeta.chunks_exact_mut(p)).enumerate() {
            let y = &outputs[j * p..(j + 1) * p];
            *b = if grads.is_some() {
                field.distance_and_gradient(y, db)
            } else {
                field.distance(y)
            } - bp.d_min;
        }
        for j in 0..stages.saturating_sub(1) {
            let g = c * betas[j] - betas[j + 1];
            total += bp.mu * penalty(g, bp);
            if let Some((go, _)) = grads.as_mut() {
                let w = bp.mu * penalty_derivative(g, bp);
                for k in 0..p {
                    go[j * p + k] += w * c * dbeta[j * p + k];
                    go[(j + 1) * p + k] -= w * dbeta[(j + 1) * p + k];
                }
            }
        }

        let beta_a = if grads.is_some() {
            field.distance_and_gradient(y_a, &mut dbeta_a)
        } else {
            field.distance(y_a)
        } - bp.d_min;
        let g_a = (c - 1.0) * beta_a;
        total += bp.mu * penalty(g_a, bp);
        if let Some((_, ga)) = grads.as_mut() {
            let w = bp.mu * penalty_derivative(g_a, bp) * (c - 1.0);
            for (gk, dk) in ga.iter_mut().zip(&dbeta_a) {
                *gk += w * dk;
            }
        }
    }
    total
}
