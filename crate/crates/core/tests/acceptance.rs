//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cloudmpc::barrier::{penalty, penalty_excess, BarrierParams};
use cloudmpc::cloud::PointCloud;
use cloudmpc::dynamics::{double_integrator, rk4_step, Quadrotor, QuadrotorParams};
use cloudmpc::nmpc::{build_problem, shrink_interval, NmpcConfig};
use cloudmpc::scenario::{load_scenario, parse_scenario, resolved_toml};
use cloudmpc::sim::{metrics, run_scenario, Metric, Outcome, ScenarioConfig, TrajectoryLog};
use cloudmpc::smoothdist::{precompute, SmoothDistParams, WeightedCloud};
use cloudmpc::solver::{solve, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome_ = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn load(name: &str) -> Result<ScenarioConfig, String> {
    load_scenario(scenario_path(name), &[]).map_err(|e| e.to_string())
}

const SP: SmoothDistParams = SmoothDistParams { eta: 0.3, sigma: 0.8, prune: false };

fn random_cloud(rng: &mut ChaCha8Rng, max_points: usize) -> PointCloud {
    let count = rng.random_range(1..=max_points);
    let coords: Vec<f64> = (0..3 * count).map(|_| rng.random_range(-2.0..2.0)).collect();
    PointCloud::from_flat("sample", 3, coords).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, half: f64) -> Vec<f64> {
    (0..3).map(|_| rng.random_range(-half..half)).collect()
}

/// Brute-force nearest sample: (distance, index).
fn nearest(cloud: &PointCloud, y: &[f64]) -> (f64, usize) {
    cloud
        .points()
        .enumerate()
        .map(|(j, p)| (p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), j))
        .fold((f64::INFINITY, 0), |best, c| if c.0 < best.0 { c } else { best })
}

/// Clouds and query points for the distance checks, including queries on a
/// sample and at points equidistant to several samples.
fn distance_samples(count: usize, seed: u64) -> Vec<(WeightedCloud, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let pair = PointCloud::new("pair", &[vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]).unwrap();
    out.push((precompute(pair, &SP).unwrap(), vec![0.0, 0.5, 0.0]));
    let corners: Vec<Vec<f64>> = (0..8).map(|k| (0..3).map(|b| if k >> b & 1 == 1 { 1.0 } else { -1.0 }).collect()).collect();
    out.push((precompute(PointCloud::new("cube", &corners).unwrap(), &SP).unwrap(), vec![0.0; 3]));
    while out.len() < count {
        let cloud = random_cloud(&mut rng, 500);
        let y = if out.len() % 50 == 2 { cloud.point(0).to_vec() } else { random_point(&mut rng, 3.0) };
        out.push((precompute(cloud, &SP).unwrap(), y));
    }
    out
}

fn criterion_1() -> Outcome_ {
    let samples = distance_samples(1000, 1);
    let mut worst = 0.0f64;
    for (wc, y) in &samples {
        let mut g = [0.0; 3];
        wc.distance_and_gradient(y, &SP, &mut g);
        for k in 0..3 {
            let h = 1e-5;
            let (mut yp, mut ym) = (y.clone(), y.clone());
            yp[k] += h;
            ym[k] -= h;
            let fd = (wc.evaluate(&yp, &SP, None) - wc.evaluate(&ym, &SP, None)) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1.0));
        }
    }
    let detail = format!("max relative error {worst:.2e} over {} samples", samples.len());
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `(d*^2/2, D, upper gap)` per sample.
fn sandwich(wc: &WeightedCloud, y: &[f64], sp: &SmoothDistParams) -> (f64, f64, f64) {
    let (d, j) = nearest(wc.cloud(), y);
    let d_val = wc.evaluate(y, sp, None);
    (0.5 * d * d, d_val, sp.eta * sp.eta * (wc.log_volume() - wc.log_weights()[j]))
}

fn criterion_2() -> Outcome_ {
    let samples = distance_samples(1000, 1);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for (wc, y) in &samples {
        let (lower, d, gap) = sandwich(wc, y, &SP);
        // rounding slack of the log-sum-exp evaluation
        let slack = 1e-12 * d.abs().max(1.0);
        let excess = (lower - d).max(d - lower - gap);
        worst = worst.max(excess);
        if excess > slack {
            violations += 1;
        }
    }
    let detail = format!("{violations} violations over {} samples, worst excess {worst:.2e}", samples.len());
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome_ {
    let samples = distance_samples(100, 3);
    let mut maxima = Vec::new();
    for eta in [0.5, 0.2, 0.1, 0.05] {
        let sp = SmoothDistParams { eta, ..SP };
        let mut max_err = 0.0f64;
        for (wc, y) in &samples {
            let (lower, d, gap) = sandwich(wc, y, &sp);
            let err = (d - lower).abs();
            if err > gap + 1e-12 * d.abs().max(1.0) {
                return Err(format!("eta {eta}: |D - d*^2/2| = {err:.3e} exceeds gap {gap:.3e}"));
            }
            max_err = max_err.max(err);
        }
        maxima.push(max_err);
    }
    let detail = format!("max |D - d*^2/2| for eta 0.5, 0.2, 0.1, 0.05: {maxima:.3?}");
    if maxima.windows(2).all(|w| w[1] < w[0]) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome_ {
    let mut worst_ratio = 0.0f64;
    for kappa in [1.0, 10.0, 100.0] {
        let bp = BarrierParams { kappa, epsilon: 1.0, ..BarrierParams::default() };
        let bound = std::f64::consts::LN_2 / kappa;
        for i in 0..10_000 {
            let g = -5.0 + 10.0 * i as f64 / 9_999.0;
            let gap = penalty_excess(g, &bp);
            if !(gap > 0.0 && gap <= bound) {
                return Err(format!("kappa {kappa}, g {g}: F - max(0, g) = {gap:e}, bound {bound:e}"));
            }
            let direct = penalty(g, &bp) - g.max(0.0);
            if (direct - gap).abs() > 4.0 * f64::EPSILON * g.abs().max(1.0) {
                return Err(format!("kappa {kappa}, g {g}: penalty gives gap {direct:e}, expected {gap:e}"));
            }
            worst_ratio = worst_ratio.max(gap / bound);
        }
    }
    Ok(format!("gap within (0, ln2/kappa] on 3 x 10^4 points, largest gap/bound {worst_ratio:.6}"))
}

fn di_config(horizon: usize) -> NmpcConfig {
    NmpcConfig {
        horizon,
        q: vec![1.0, 1.0],
        r: vec![0.1],
        t_w: vec![100.0],
        lambda: 0.99,
        state_lower: vec![-1.0, -2.0],
        state_upper: vec![1.0, 2.0],
        input_lower: vec![-1.0],
        input_upper: vec![1.0],
        smoothing: SmoothDistParams::default(),
        barrier: BarrierParams::default(),
    }
}

/// Best objective over input sequences from the grid that end at rest inside
/// the admissible boxes.
fn grid_objective(cfg: &NmpcConfig, ts: f64, x0: [f64; 2], target: f64) -> Option<f64> {
    let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let n = cfg.horizon;
    let (pa_lo, pa_hi) = shrink_interval(cfg.state_lower[0], cfg.state_upper[0], cfg.lambda);
    let mut best: Option<f64> = None;
    for code in 0..levels.len().pow(n as u32) {
        let mut c = code;
        let u: Vec<f64> = (0..n)
            .map(|_| {
                let v = levels[c % levels.len()];
                c /= levels.len();
                v
            })
            .collect();
        let mut xs = vec![x0];
        for &uj in &u {
            let [p, v] = *xs.last().unwrap();
            xs.push([p + ts * v + 0.5 * ts * ts * uj, v + ts * uj]);
        }
        let inside = xs.iter().all(|x| (0..2).all(|k| x[k] >= cfg.state_lower[k] && x[k] <= cfg.state_upper[k]));
        let [pn, vn] = xs[n];
        if !inside || vn.abs() > 1e-12 || pn < pa_lo || pn > pa_hi {
            continue;
        }
        let mut cost = cfg.t_w[0] * (pn - target).powi(2);
        for j in 0..n {
            cost += cfg.q[0] * (xs[j][0] - pn).powi(2) + cfg.q[1] * xs[j][1].powi(2) + cfg.r[0] * u[j].powi(2);
        }
        best = Some(best.map_or(cost, |b: f64| b.min(cost)));
    }
    best
}

fn criterion_5() -> Outcome_ {
    let ts = 0.1;
    let model = double_integrator(1, ts).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let velocities = [-0.1, -0.05, 0.0, 0.05, 0.1];
    let (mut worst_gap, mut worst_residual) = (f64::NEG_INFINITY, 0.0f64);
    for instance in 0..20 {
        let horizon = 3 + instance % 3;
        let cfg = di_config(horizon);
        let x0 = [rng.random_range(-0.7..0.7), velocities[rng.random_range(0..velocities.len())]];
        let target = rng.random_range(-1.2..1.2);
        let Some(grid) = grid_objective(&cfg, ts, x0, target) else {
            return Err(format!("instance {instance}: no feasible grid sequence"));
        };
        let none: [cloudmpc::barrier::SmoothedObstacle; 0] = [];
        let prob = build_problem(&cfg, &model, &x0, &[target], &none, None).map_err(|e| e.to_string())?;
        let sol = solve(&prob, &SolverConfig::default(), prob.initial_guess()).map_err(|e| e.to_string())?;
        let residual = sol.residual_norm();
        worst_gap = worst_gap.max(sol.objective - grid);
        worst_residual = worst_residual.max(residual);
        if sol.objective > grid + 1e-3 || residual > 1e-6 {
            return Err(format!(
                "instance {instance}: objective {} vs grid {grid}, residual {residual:.2e}",
                sol.objective
            ));
        }
    }
    Ok(format!("20 instances, max(objective - grid) {worst_gap:.3e}, max residual {worst_residual:.2e}"))
}

fn criterion_6() -> Outcome_ {
    let params = QuadrotorParams::default();
    let f = params.hover_force();
    let model = Quadrotor::new(params, 0.01);
    let mut x = vec![0.0; 12];
    x[..3].copy_from_slice(&[1.0, -2.0, 3.0]);
    let start = x.clone();
    for _ in 0..100 {
        x = rk4_step(&model, &x, &[f; 4]).map_err(|e| e.to_string())?;
    }
    let drift = (0..3).map(|k| (x[k] - start[k]).powi(2)).sum::<f64>().sqrt();
    let detail = format!("hover force {f:.4} N, position drift {drift:.2e} m over 1 s");
    if drift < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Safety and tracking of one smoothed desk run.
fn check_desk(name: &str, budget: Duration) -> Result<(String, TrajectoryLog), String> {
    let cfg = load(name)?;
    let started = Instant::now();
    let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let d_min = cfg.nmpc.barrier.d_min;
    let summary = metrics(&log);
    let unsafe_rows = log.rows.iter().filter(|r| r.clearance.iter().any(|c| 0.5 * c * c < 0.95 * d_min)).count();
    let missed: Vec<usize> = summary.waypoints.iter().filter(|w| !w.reached).map(|w| w.index).collect();
    let detail = format!(
        "{name}: {} after {:.2} s simulated, min clearance {:.4} m (needs {:.4}), {} steps below the bound, waypoints missed {missed:?}, wall {:.1} s (budget {} s)",
        log.outcome.as_str(),
        summary.duration,
        summary.min_clearance,
        (1.9 * d_min).sqrt(),
        unsafe_rows,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    if log.outcome == Outcome::Completed && unsafe_rows == 0 && missed.is_empty() && elapsed < budget {
        Ok((detail, log))
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome_ {
    let (di, _) = check_desk("desk_double_integrator", Duration::from_secs(120))?;
    let (quad, _) = check_desk("desk_quadrotor", Duration::from_secs(900))?;
    Ok(format!("{di}; {quad}"))
}

fn criterion_8() -> Outcome_ {
    let mut cfg = load("desk_double_integrator")?;
    let mut summaries = Vec::new();
    for metric in [Metric::Smoothed, Metric::Euclidean] {
        cfg.mission.metric = metric;
        let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
        summaries.push(metrics(&log));
    }
    let (s, e) = (&summaries[0], &summaries[1]);
    let detail = format!(
        "TV(u) smoothed {:.4} vs euclidean {:.4}; non-converged {} vs {} (outcomes {} / {})",
        s.input_total_variation,
        e.input_total_variation,
        s.non_converged,
        e.non_converged,
        s.outcome.as_str(),
        e.outcome.as_str()
    );
    if s.input_total_variation < e.input_total_variation && s.non_converged < e.non_converged {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome_ {
    let mut checked = Vec::new();
    for (name, horizon_time) in [("desk_double_integrator", None), ("unobstructed", None), ("desk_quadrotor", Some(0.5))] {
        let mut cfg = load(name)?;
        if let Some(t) = horizon_time {
            cfg.mission.max_sim_time = t;
        }
        let first = run_scenario(&cfg).and_then(|l| l.to_csv_string()).map_err(|e| e.to_string())?;
        let snapshot = resolved_toml(&cfg).map_err(|e| e.to_string())?;
        let replay_cfg = parse_scenario(&snapshot, &[]).map_err(|e| e.to_string())?;
        let replay = run_scenario(&replay_cfg).and_then(|l| l.to_csv_string()).map_err(|e| e.to_string())?;
        if first != replay {
            return Err(format!("{name}: replay from the resolved config differs"));
        }
        checked.push(format!("{name} ({} bytes)", first.len()));
    }
    Ok(format!("identical CSV on replay: {}", checked.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome_, Duration); 9] = [
        ("gradient identity", criterion_1, Duration::from_secs(10)),
        ("distance sandwich", criterion_2, Duration::from_secs(10)),
        ("eta limit", criterion_3, Duration::from_secs(10)),
        ("softplus penalty", criterion_4, Duration::from_secs(1)),
        ("solver oracle", criterion_5, Duration::from_secs(60)),
        ("hover invariant", criterion_6, Duration::from_secs(1)),
        ("closed-loop safety and tracking", criterion_7, Duration::from_secs(17 * 60)),
        ("smoothed vs euclidean", criterion_8, Duration::MAX),
        ("determinism", criterion_9, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = run();
        let elapsed = started.elapsed();
        let (verdict, detail) = match result {
            Ok(d) if elapsed <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {:.0} s budget", budget.as_secs_f64())),
            Err(d) => ("FAIL", d),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("{verdict} {} {name}: {detail} [{:.2} s]", i + 1, elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
