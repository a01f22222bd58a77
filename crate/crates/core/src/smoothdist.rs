//! Smoothed point-to-cloud distance.
//!
//! For a cloud `A = {a_j}` with centroid `c`, per-point weights
//! `w_j = exp(-|a_j - c|^2 / (2 sigma^2))` and volume `V = sum_j w_j`,
//!
//! ```text
//! D(y)  = -eta^2 * ln( (1/V) * sum_j w_j exp(-|y - a_j|^2 / (2 eta^2)) )
//! Pi(y) = softmax-weighted mean of a_j with the same per-point terms
//! grad D(y) = y - Pi(y)
//! ```
//!
//! Everything is evaluated in the log domain with a streaming log-sum-exp, so
//! points far from `y` never underflow to a `0 * inf` artifact.

use serde::{Deserialize, Serialize};

use crate::cloud::{squared_distance, PointCloud};
use crate::error::{Error, Result};

/// Logits more than this far below the running maximum contribute less than
/// `exp(-40)` relative and are skipped when pruning is on.
pub const PRUNE_MARGIN: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothDistParams {
    /// Smoothing length; smaller tracks the exact distance more closely.
    pub eta: f64,
    /// Spread of the centroid-based point weights.
    pub sigma: f64,
    /// Skip exponentials of negligible points.
    #[serde(default)]
    pub prune: bool,
}

impl Default for SmoothDistParams {
    fn default() -> Self {
        Self {
            eta: 0.3,
            sigma: 0.8,
            prune: false,
        }
    }
}

impl SmoothDistParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive and finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be positive and finite"));
        }
        Ok(())
    }
}

/// A cloud together with its centroid and log-weights, which depend only on
/// the points and `sigma`.
#[derive(Debug, Clone)]
pub struct WeightedCloud {
    cloud: PointCloud,
    centroid: Vec<f64>,
    log_weights: Vec<f64>,
    log_volume: f64,
}

pub fn precompute(cloud: PointCloud, params: &SmoothDistParams) -> Result<WeightedCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let dim = cloud.dim();
    let m = cloud.len() as f64;
    let mut centroid = vec![0.0; dim];
    for p in cloud.points() {
        for (c, x) in centroid.iter_mut().zip(p) {
            *c += x;
        }
    }
    for c in &mut centroid {
        *c /= m;
    }
    let inv = 1.0 / (2.0 * params.sigma * params.sigma);
    let log_weights: Vec<f64> = cloud
        .points()
        .map(|p| -squared_distance(p, &centroid) * inv)
        .collect();
    let log_volume = log_sum_exp(&log_weights);
    Ok(WeightedCloud {
        cloud,
        centroid,
        log_weights,
        log_volume,
    })
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl WeightedCloud {
    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_volume(&self) -> f64 {
        self.log_volume
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    /// Single streaming pass over the cloud. Returns the smoothed distance
    /// and, if `projection` is given, writes the smoothed projection into it.
    pub fn evaluate(&self, y: &[f64], params: &SmoothDistParams, projection: Option<&mut [f64]>) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        let inv = 1.0 / (2.0 * params.eta * params.eta);
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut acc = projection;
        if let Some(acc) = acc.as_deref_mut() {
            acc.fill(0.0);
        }
        for (p, lw) in self.cloud.points().zip(&self.log_weights) {
            let logit = lw - squared_distance(y, p) * inv;
            if logit > max {
                let scale = (max - logit).exp();
                sum = sum * scale + 1.0;
                if let Some(acc) = acc.as_deref_mut() {
                    for (a, x) in acc.iter_mut().zip(p) {
                        *a = *a * scale + x;
                    }
                }
                max = logit;
            } else {
                if params.prune && logit < max - PRUNE_MARGIN {
                    continue;
                }
                let e = (logit - max).exp();
                sum += e;
                if let Some(acc) = acc.as_deref_mut() {
                    for (a, x) in acc.iter_mut().zip(p) {
                        *a += e * x;
                    }
                }
            }
        }
        if let Some(acc) = acc {
            for a in acc.iter_mut() {
                *a /= sum;
            }
        }
        -params.eta * params.eta * (max + sum.ln() - self.log_volume)
    }

    /// Smoothed distance and its gradient `y - Pi(y)`.
    pub fn distance_and_gradient(&self, y: &[f64], params: &SmoothDistParams, grad: &mut [f64]) -> f64 {
        let d = self.evaluate(y, params, Some(grad));
        for (g, yi) in grad.iter_mut().zip(y) {
            *g = yi - *g;
        }
        d
    }
}

impl WeightedCloud {
    /// Hessian `I - Cov/eta^2` of the smoothed distance, row-major `p x p`,
    /// where `Cov` is the covariance of the cloud under the soft assignment
    /// weights at `y`.
    pub fn hessian(&self, y: &[f64], params: &SmoothDistParams, hess: &mut [f64]) {
        let p = self.dim();
        let eta2 = params.eta * params.eta;
        let inv = 1.0 / (2.0 * eta2);
        let logits: Vec<f64> = self
            .cloud
            .points()
            .zip(&self.log_weights)
            .map(|(a, lw)| lw - squared_distance(y, a) * inv)
            .collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut sum = 0.0;
        let mut mean = vec![0.0; p];
        let mut second = vec![0.0; p * p];
        for (a, l) in self.cloud.points().zip(&logits) {
            if params.prune && *l < max - PRUNE_MARGIN {
                continue;
            }
            let w = (l - max).exp();
            sum += w;
            for r in 0..p {
                let d = a[r] - y[r];
                mean[r] += w * d;
                for c in 0..p {
                    second[r * p + c] += w * d * (a[c] - y[c]);
                }
            }
        }
        for r in 0..p {
            for c in 0..p {
                let cov = second[r * p + c] / sum - mean[r] * mean[c] / (sum * sum);
                hess[r * p + c] = f64::from(u8::from(r == c)) - cov / eta2;
            }
        }
    }
}

pub fn smooth_distance(wc: &WeightedCloud, y: &[f64], params: &SmoothDistParams) -> f64 {
    wc.evaluate(y, params, None)
}

pub fn smooth_projection(wc: &WeightedCloud, y: &[f64], params: &SmoothDistParams) -> Vec<f64> {
    let mut out = vec![0.0; wc.dim()];
    wc.evaluate(y, params, Some(&mut out));
    out
}

pub fn smooth_gradient(wc: &WeightedCloud, y: &[f64], params: &SmoothDistParams) -> Vec<f64> {
    let mut out = vec![0.0; wc.dim()];
    wc.distance_and_gradient(y, params, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{generate_cloud, HaltonConfig, ObstacleShape};
    use proptest::prelude::*;

    const P: SmoothDistParams = SmoothDistParams {
        eta: 0.3,
        sigma: 0.8,
        prune: false,
    };

    fn wc(points: &[Vec<f64>]) -> WeightedCloud {
        precompute(PointCloud::new("t", points).unwrap(), &P).unwrap()
    }

    fn halton5() -> WeightedCloud {
        let cfg = HaltonConfig {
            bases: vec![2, 3, 5],
            count: 5,
            box_min: vec![0.0; 3],
            box_max: vec![1.0; 3],
            skip: 0,
            shape: ObstacleShape::Box,
        };
        precompute(generate_cloud(&cfg).unwrap(), &P).unwrap()
    }

    #[test]
    fn singleton_precompute() {
        let w = wc(&[vec![1.0, -2.0, 0.5]]);
        assert_eq!(w.centroid(), &[1.0, -2.0, 0.5]);
        assert_eq!(w.log_weights(), &[0.0]);
        assert_eq!(w.log_volume(), 0.0);
    }

    #[test]
    fn two_point_symmetry() {
        let w = wc(&[vec![0.0, 0.0], vec![2.0, 4.0]]);
        assert_eq!(w.centroid(), &[1.0, 2.0]);
        assert_eq!(w.log_weights()[0], w.log_weights()[1]);
    }

    #[test]
    fn three_points_match_high_precision_oracle() {
        let w = wc(&[vec![0.3, -1.2, 0.7], vec![1.5, 0.4, -0.2], vec![-0.6, 0.9, 1.1]]);
        let cen = [0.4, 0.033333333333333333333, 0.53333333333333333333];
        for (a, b) in w.centroid().iter().zip(cen) {
            assert!((a - b).abs() < 1e-15);
        }
        let lw = [-1.2178819444444444444, -1.4704861111111111111, -1.6189236111111111111];
        for (a, b) in w.log_weights().iter().zip(lw) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((w.log_volume() - -0.32326542893861752323).abs() < 1e-14);
        assert!(w.log_volume().exp() <= 3.0);
    }

    #[test]
    fn singleton_distance_is_half_squared() {
        let w = wc(&[vec![1.0, 2.0, 3.0]]);
        for params in [P, SmoothDistParams { eta: 0.01, sigma: 5.0, prune: false }] {
            let d = smooth_distance(&w, &[4.0, 6.0, 3.0], &params);
            assert!((d - 12.5).abs() < 1e-12, "{d}");
            assert_eq!(smooth_distance(&w, &[1.0, 2.0, 3.0], &params), 0.0);
            assert_eq!(smooth_projection(&w, &[-7.0, 0.0, 9.0], &params), vec![1.0, 2.0, 3.0]);
            assert_eq!(smooth_gradient(&w, &[4.0, 6.0, 3.0], &params), vec![3.0, 4.0, 0.0]);
        }
    }

    #[test]
    fn halton_cloud_matches_high_precision_oracle() {
        let w = halton5();
        let y = [2.0, 2.0, 2.0];
        let d = smooth_distance(&w, &y, &P);
        assert!((d - 3.6384520131778988587).abs() < 1e-12, "{d}");
        let proj = smooth_projection(&w, &y, &P);
        let expected = [0.59618457457832169097, 0.37398473865697115692, 0.46028178700373666832];
        for (a, b) in proj.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_has_midpoint_projection_and_zero_gradient() {
        let w = wc(&[vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let y = [0.0, 0.7];
        let proj = smooth_projection(&w, &y, &P);
        assert!(proj[0].abs() < 1e-15 && proj[1].abs() < 1e-15);
        let g = smooth_gradient(&w, &[0.0, 0.0], &P);
        assert!(g.iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn far_query_does_not_underflow() {
        let w = halton5();
        let y = [1e3, -1e3, 5e2];
        let d = smooth_distance(&w, &y, &P);
        assert!(d.is_finite() && d > 1e6);
        assert!(smooth_gradient(&w, &y, &P).iter().all(|g| g.is_finite()));
    }

    #[test]
    fn pruning_changes_nothing_visible() {
        let cfg = HaltonConfig {
            bases: vec![2, 3, 5],
            count: 400,
            box_min: vec![0.0; 3],
            box_max: vec![4.0, 4.0, 2.0],
            skip: 20,
            shape: ObstacleShape::Box,
        };
        let w = precompute(generate_cloud(&cfg).unwrap(), &P).unwrap();
        let pruned = SmoothDistParams { prune: true, ..P };
        for y in [[5.0, 1.0, 1.0], [2.0, 2.0, 1.0], [-1.0, -1.0, 3.0]] {
            let a = smooth_distance(&w, &y, &P);
            let b = smooth_distance(&w, &y, &pruned);
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    fn fd_gradient(w: &WeightedCloud, y: &[f64], h: f64) -> Vec<f64> {
        (0..y.len())
            .map(|i| {
                let mut yp = y.to_vec();
                let mut ym = y.to_vec();
                yp[i] += h;
                ym[i] -= h;
                (smooth_distance(w, &yp, &P) - smooth_distance(w, &ym, &P)) / (2.0 * h)
            })
            .collect()
    }

    fn cloud_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..3).prop_flat_map(|dim| {
            (
                prop::collection::vec(prop::collection::vec(-2.0..2.0f64, dim..=dim), 1..30),
                prop::collection::vec(-3.0..3.0f64, dim..=dim),
            )
        })
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences((pts, y) in cloud_strategy()) {
            let w = wc(&pts);
            let g = smooth_gradient(&w, &y, &P);
            let fd = fd_gradient(&w, &y, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0));
            }
        }

        #[test]
        fn sandwich_and_convex_projection((pts, y) in cloud_strategy()) {
            let w = wc(&pts);
            let d = smooth_distance(&w, &y, &P);
            let (jstar, dstar2) = pts.iter().enumerate()
                .map(|(j, a)| (j, squared_distance(a, &y)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            let lo = dstar2 / 2.0;
            let hi = lo + P.eta * P.eta * (w.log_volume() - w.log_weights()[jstar]);
            let slack = 1e-12 * hi.abs().max(1.0);
            prop_assert!(d >= lo - slack && d <= hi + slack);
            let proj = smooth_projection(&w, &y, &P);
            for k in 0..y.len() {
                let lo = pts.iter().map(|a| a[k]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|a| a[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(proj[k] >= lo - 1e-12 && proj[k] <= hi + 1e-12);
            }
        }

        #[test]
        fn translation_invariance((pts, y) in cloud_strategy(), shift in -5.0..5.0f64) {
            let w = wc(&pts);
            let moved: Vec<Vec<f64>> = pts.iter().map(|a| a.iter().map(|c| c + shift).collect()).collect();
            let wm = wc(&moved);
            let ym: Vec<f64> = y.iter().map(|c| c + shift).collect();
            let d0 = smooth_distance(&w, &y, &P);
            let d1 = smooth_distance(&wm, &ym, &P);
            prop_assert!((d0 - d1).abs() <= 1e-9 * d0.abs().max(1.0));
            let p0 = smooth_projection(&w, &y, &P);
            let p1 = smooth_projection(&wm, &ym, &P);
            for (a, b) in p0.iter().zip(&p1) {
                prop_assert!((a + shift - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SmoothDistParams { eta: 0.0, ..P }.validate().is_err());
        assert!(SmoothDistParams { sigma: f64::NAN, ..P }.validate().is_err());
    }
}
