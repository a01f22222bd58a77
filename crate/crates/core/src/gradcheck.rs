//! Finite-difference audits of every analytic derivative, run at a
//! scenario's parameters. Sample points come from a Halton sequence, so the
//! report is reproducible.

use serde::Serialize;

use crate::barrier::{horizon_penalty, horizon_penalty_with_gradient, SmoothedObstacle};
use crate::cloud::{halton_value, PointCloud};
use crate::dynamics::{rk4_step, rk4_step_with_jacobians, SystemModel};
use crate::error::Result;
use crate::nmpc::build_problem;
use crate::sim::ScenarioConfig;
use crate::smoothdist::precompute;
use crate::solver::{check_gradient, NlpProblem};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Tolerance on the relative error `|a - fd| / max(1, |a|, |fd|)`.
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub samples: usize,
    pub max_relative_error: f64,
    /// Human-readable location of the worst coordinate.
    pub worst: String,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= GRADIENT_TOLERANCE
    }
}

struct Sampler {
    index: u64,
}

impl Sampler {
    /// Next point of the Halton sequence mapped into `[lo, hi]` per coordinate.
    fn next(&mut self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        self.index += 1;
        lo.iter()
            .zip(hi)
            .enumerate()
            .map(|(k, (l, h))| l + (h - l) * halton_value(self.index, PRIMES[k % PRIMES.len()]))
            .collect()
    }
}

fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / a.abs().max(fd.abs()).max(1.0)
}

struct Worst {
    err: f64,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Self { err: 0.0, at: String::from("-") }
    }
    fn update(&mut self, err: f64, at: impl FnOnce() -> String) {
        if !(err <= self.err) {
            self.err = err;
            self.at = at();
        }
    }
}

/// Region around the obstacles where the checks sample outputs.
fn sampling_box(clouds: &[PointCloud], p: usize, margin: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for c in clouds {
        for pt in c.points() {
            for k in 0..p {
                lo[k] = lo[k].min(pt[k]);
                hi[k] = hi[k].max(pt[k]);
            }
        }
    }
    if clouds.is_empty() {
        return (vec![-1.0; p], vec![1.0; p]);
    }
    (lo.iter().map(|v| v - margin).collect(), hi.iter().map(|v| v + margin).collect())
}

/// Runs the smoothed-distance, barrier, dynamics and OCP suites.
pub fn run_checks(cfg: &ScenarioConfig, step: f64) -> Result<Vec<SuiteResult>> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let (n, m, p) = (model.state_dim(), model.input_dim(), model.output_dim());
    let clouds: Vec<PointCloud> = cfg.obstacles.iter().map(|o| o.generate()).collect::<Result<_>>()?;
    let sp = cfg.nmpc.smoothing;
    let obstacles: Vec<SmoothedObstacle> = clouds
        .iter()
        .map(|c| Ok(SmoothedObstacle { cloud: precompute(c.clone(), &sp)?, params: sp }))
        .collect::<Result<_>>()?;
    let (lo, hi) = sampling_box(&clouds, p, 1.5);
    let mut sampler = Sampler { index: 0 };
    let mut results = Vec::new();

    // smoothed distance
    let mut worst = Worst::new();
    let mut samples = 0;
    for (oi, o) in obstacles.iter().enumerate() {
        for _ in 0..50 {
            let y = sampler.next(&lo, &hi);
            let mut g = vec![0.0; p];
            o.cloud.distance_and_gradient(&y, &sp, &mut g);
            for k in 0..p {
                let h = step * y[k].abs().max(1.0);
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[k] += h;
                ym[k] -= h;
                let fd = (o.cloud.evaluate(&yp, &sp, None) - o.cloud.evaluate(&ym, &sp, None)) / (2.0 * h);
                worst.update(rel_err(g[k], fd), || format!("obstacle {oi}, y = {y:?}, coordinate {k}: analytic {} vs fd {fd}", g[k]));
            }
            samples += 1;
        }
    }
    results.push(SuiteResult { suite: "smoothdist", samples, max_relative_error: worst.err, worst: worst.at });

    // barrier over a short output trajectory
    let mut worst = Worst::new();
    let stages = 6;
    let bp = cfg.nmpc.barrier;
    for s in 0..20 {
        let outputs: Vec<f64> = (0..stages).flat_map(|_| sampler.next(&lo, &hi)).collect();
        let ya = sampler.next(&lo, &hi);
        let mut go = vec![0.0; outputs.len()];
        let mut ga = vec![0.0; p];
        horizon_penalty_with_gradient(&outputs, &ya, &obstacles, &bp, &mut go, &mut ga);
        let scale = horizon_penalty(&outputs, &ya, &obstacles, &bp).abs().max(1.0);
        for i in 0..outputs.len() + p {
            let (mut op, mut om, mut ap, mut am) = (outputs.clone(), outputs.clone(), ya.clone(), ya.clone());
            let (analytic, h) = if i < outputs.len() {
                let h = step * outputs[i].abs().max(1.0);
                op[i] += h;
                om[i] -= h;
                (go[i], h)
            } else {
                let k = i - outputs.len();
                let h = step * ya[k].abs().max(1.0);
                ap[k] += h;
                am[k] -= h;
                (ga[k], h)
            };
            let fd = (horizon_penalty(&op, &ap, &obstacles, &bp) - horizon_penalty(&om, &am, &obstacles, &bp)) / (2.0 * h);
            // penalty values reach mu-scale, so errors are measured against it
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0).max(scale * 1e-3);
            worst.update(err, || format!("sample {s}, coordinate {i}: analytic {analytic} vs fd {fd}"));
        }
    }
    results.push(SuiteResult { suite: "barrier", samples: 20, max_relative_error: worst.err, worst: worst.at });

    // discrete dynamics Jacobians
    let mut worst = Worst::new();
    let xl: Vec<f64> = cfg.nmpc.state_lower.iter().map(|v| v.max(-10.0)).collect();
    let xh: Vec<f64> = cfg.nmpc.state_upper.iter().map(|v| v.min(10.0)).collect();
    for s in 0..20 {
        let x = sampler.next(&xl, &xh);
        let u = sampler.next(&cfg.nmpc.input_lower, &cfg.nmpc.input_upper);
        let (_, fx, fu) = rk4_step_with_jacobians(&model, &x, &u)?;
        for col in 0..n + m {
            let (mut xp, mut xm, mut up, mut um) = (x.clone(), x.clone(), u.clone(), u.clone());
            let h = if col < n {
                let h = step * x[col].abs().max(1.0);
                xp[col] += h;
                xm[col] -= h;
                h
            } else {
                let h = step * u[col - n].abs().max(1.0);
                up[col - n] += h;
                um[col - n] -= h;
                h
            };
            let fp = rk4_step(&model, &xp, &up)?;
            let fm = rk4_step(&model, &xm, &um)?;
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let analytic = if col < n { fx[(row, col)] } else { fu[(row, col - n)] };
                worst.update(rel_err(analytic, fd), || format!("sample {s}, d x+[{row}] / d z[{col}]: analytic {analytic} vs fd {fd}"));
            }
        }
    }
    results.push(SuiteResult { suite: "dynamics", samples: 20, max_relative_error: worst.err, worst: worst.at });

    // full OCP objective at bounded random points with outputs near obstacles
    let mut worst = Worst::new();
    let target = &cfg.mission.waypoints[0];
    let prob = build_problem(&cfg.nmpc, &model, &cfg.mission.initial_state, target, &obstacles, None)?;
    let layout = prob.layout();
    let (zl, zh) = (prob.lower_bounds().to_vec(), prob.upper_bounds().to_vec());
    let clip = |v: f64, a: f64| v.clamp(-a, a);
    for s in 0..5 {
        // golden-ratio offsets decorrelate coordinates sharing a base
        let mut z: Vec<f64> = (0..zl.len())
            .map(|i| {
                let (l, h) = (clip(zl[i], 1.0), clip(zh[i], 1.0));
                let t = (halton_value(s + 1, PRIMES[i % PRIMES.len()]) + 0.618_033_988_749_895 * i as f64).fract();
                l + (h - l) * t
            })
            .collect();
        for j in 0..=layout.horizon {
            let y = sampler.next(&lo, &hi);
            for k in 0..p {
                let i = layout.state(j).start + model.output_state_index(k);
                z[i] = y[k].clamp(zl[i], zh[i]);
            }
        }
        let check = check_gradient(&prob, &z, step)?;
        worst.update(check.max_relative_error, || {
            format!(
                "sample {s}, z[{}]: analytic {} vs fd {}",
                check.worst_index, check.analytic, check.finite_difference
            )
        });
    }
    results.push(SuiteResult { suite: "nmpc", samples: 5, max_relative_error: worst.err, worst: worst.at });
    Ok(results)
}
