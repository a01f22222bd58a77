//! Closed-loop harness: measure, scan, solve, apply the first input, log.

use std::io::Write;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::barrier::{DistanceField, SmoothedObstacle};
use crate::cloud::{generate_cloud, lidar_scan, squared_distance, HaltonConfig, LidarConfig, ObstacleShape, PointCloud};
use crate::dynamics::{double_integrator, output, rk4_step, Model, Quadrotor, QuadrotorParams, SystemModel};
use crate::error::{Error, Result};
use crate::nmpc::{build_problem, NmpcConfig, OcpSolution};
use crate::smoothdist::precompute;
use crate::solver::{solve_warm, SolveStatus, SolverConfig};

/// Exact distance from `y` to the nearest point of `cloud`, with that point.
/// Ties go to the lowest index.
pub fn euclidean_baseline_distance<'a>(cloud: &'a PointCloud, y: &[f64]) -> (f64, &'a [f64]) {
    let mut best = (f64::INFINITY, 0);
    for (j, a) in cloud.points().enumerate() {
        let d2 = squared_distance(a, y);
        if d2 < best.0 {
            best = (d2, j);
        }
    }
    (best.0.sqrt(), cloud.point(best.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Smoothed,
    Euclidean,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Smoothed => "smoothed",
            Metric::Euclidean => "euclidean",
        }
    }
}

/// Units of the Euclidean baseline field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EuclideanScaling {
    /// `d^2 / 2`, the same units as the smoothed distance.
    #[default]
    Squared,
    /// `d`.
    Raw,
}

/// Nearest-point distance to a sensed cloud, used by the baseline controller.
#[derive(Debug, Clone)]
pub struct EuclideanObstacle {
    pub cloud: PointCloud,
    pub scaling: EuclideanScaling,
}

impl DistanceField for EuclideanObstacle {
    fn id(&self) -> &str {
        self.cloud.id()
    }

    fn distance(&self, y: &[f64]) -> f64 {
        let d = euclidean_baseline_distance(&self.cloud, y).0;
        match self.scaling {
            EuclideanScaling::Squared => 0.5 * d * d,
            EuclideanScaling::Raw => d,
        }
    }

    /// Subgradient through the nearest point.
    fn distance_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let (d, a) = euclidean_baseline_distance(&self.cloud, y);
        for ((g, yi), ai) in grad.iter_mut().zip(y).zip(a) {
            *g = yi - ai;
        }
        match self.scaling {
            EuclideanScaling::Squared => 0.5 * d * d,
            EuclideanScaling::Raw => {
                let s = if d > 0.0 { 1.0 / d } else { 0.0 };
                grad.iter_mut().for_each(|g| *g *= s);
                d
            }
        }
    }

    /// Hessian of the active piece: the identity for the squared scaling,
    /// `(I - n n') / d` for the raw distance.
    fn hessian(&self, y: &[f64], hess: &mut [f64]) {
        let p = y.len();
        hess.fill(0.0);
        match self.scaling {
            EuclideanScaling::Squared => (0..p).for_each(|k| hess[k * p + k] = 1.0),
            EuclideanScaling::Raw => {
                let (d, a) = euclidean_baseline_distance(&self.cloud, y);
                if d > 0.0 {
                    for r in 0..p {
                        for c in 0..p {
                            let nn = (y[r] - a[r]) * (y[c] - a[c]) / (d * d);
                            hess[r * p + c] = (f64::from(u8::from(r == c)) - nn) / d;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Quadrotor {
        sample_time: f64,
        params: QuadrotorParams,
    },
    DoubleIntegrator {
        sample_time: f64,
        dim: usize,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelConfig::Quadrotor { sample_time, params } => {
                params.validate()?;
                if !(*sample_time > 0.0 && sample_time.is_finite()) {
                    return Err(Error::invalid("sample_time", "must be positive"));
                }
                Ok(Model::Quadrotor(Quadrotor::new(*params, *sample_time)))
            }
            ModelConfig::DoubleIntegrator { sample_time, dim } => Ok(Model::DoubleIntegrator(double_integrator(*dim, *sample_time)?)),
        }
    }

    pub fn sample_time(&self) -> f64 {
        match self {
            ModelConfig::Quadrotor { sample_time, .. } | ModelConfig::DoubleIntegrator { sample_time, .. } => *sample_time,
        }
    }
}

/// A named Halton-filled obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub name: String,
    pub bases: Vec<u32>,
    pub count: usize,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    pub skip: u64,
    pub shape: ObstacleShape,
}

impl ObstacleConfig {
    pub fn halton(&self) -> HaltonConfig {
        HaltonConfig {
            bases: self.bases.clone(),
            count: self.count,
            box_min: self.box_min.clone(),
            box_max: self.box_max.clone(),
            skip: self.skip,
            shape: self.shape,
        }
    }

    pub fn generate(&self) -> Result<PointCloud> {
        Ok(generate_cloud(&self.halton())?.with_id(self.name.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub initial_state: Vec<f64>,
    pub waypoints: Vec<Vec<f64>>,
    pub stop_radius: f64,
    pub max_sim_time: f64,
    /// Plant steps per OCP solve; in between, the stored plan is replayed.
    pub control_every: usize,
    pub metric: Metric,
    pub euclidean_scaling: EuclideanScaling,
    /// Consecutive unconverged solves tolerated before the run aborts.
    pub max_consecutive_failures: usize,
    /// Outer-iteration budget of warm-started solves. The first solve of a
    /// run uses `solver.max_outer`.
    pub max_outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelConfig,
    pub nmpc: NmpcConfig,
    pub solver: SolverConfig,
    pub lidar: LidarConfig,
    pub obstacles: Vec<ObstacleConfig>,
    pub mission: MissionConfig,
}

/// Prefixes the key of a parameter error with its section path.
pub(crate) fn within(prefix: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { key, message } => Error::InvalidParameter {
            key: format!("{prefix}.{key}"),
            message,
        },
        other => other,
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let model = self.model.build().map_err(|e| within("model", e))?;
        let (n, m, p) = (model.state_dim(), model.input_dim(), model.output_dim());
        self.nmpc.validate(n, m, p).map_err(|e| within("nmpc", e))?;
        self.solver.validate().map_err(|e| within("solver", e))?;
        self.lidar.validate().map_err(|e| within("lidar", e))?;
        for (i, obs) in self.obstacles.iter().enumerate() {
            let prefix = format!("obstacles.{i}");
            obs.halton().validate().map_err(|e| within(&prefix, e))?;
            if obs.box_min.len() != p {
                return Err(Error::invalid(format!("{prefix}.box_min"), format!("obstacles live in {p} dimensions")));
            }
            if self.obstacles[..i].iter().any(|o| o.name == obs.name) {
                return Err(Error::invalid(format!("{prefix}.name"), format!("duplicate name {:?}", obs.name)));
            }
        }
        let ms = &self.mission;
        if ms.initial_state.len() != n {
            return Err(Error::invalid("mission.initial_state", format!("expected {n} entries, found {}", ms.initial_state.len())));
        }
        for (i, v) in ms.initial_state.iter().enumerate() {
            if !(self.nmpc.state_lower[i] <= *v && *v <= self.nmpc.state_upper[i]) {
                return Err(Error::invalid(
                    "mission.initial_state",
                    format!("entry {i} = {v} is outside [{}, {}]", self.nmpc.state_lower[i], self.nmpc.state_upper[i]),
                ));
            }
        }
        if ms.waypoints.is_empty() {
            return Err(Error::invalid("mission.waypoints", "at least one waypoint is required"));
        }
        if let Some((i, w)) = ms.waypoints.iter().enumerate().find(|(_, w)| w.len() != p || w.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("mission.waypoints", format!("waypoint {i} must have {p} finite entries, found {w:?}")));
        }
        if !(ms.stop_radius > 0.0) {
            return Err(Error::invalid("mission.stop_radius", "must be positive"));
        }
        if !(ms.max_sim_time > 0.0 && ms.max_sim_time.is_finite()) {
            return Err(Error::invalid("mission.max_sim_time", "must be positive and finite"));
        }
        if ms.max_outer == 0 {
            return Err(Error::invalid("mission.max_outer", "must be at least 1"));
        }
        if ms.control_every == 0 || ms.control_every > self.nmpc.horizon {
            return Err(Error::invalid("mission.control_every", format!("must lie in 1..={}", self.nmpc.horizon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    TimeLimit,
    Aborted,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::TimeLimit => "time_limit",
            Outcome::Aborted => "aborted",
        }
    }
}

/// What the controller did at a plant step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Solved(SolveStatus),
    /// Replayed the stored plan without solving.
    Held,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Solved(s) => s.as_str(),
            StepKind::Held => "held",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub time: f64,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    /// Points inside the sensing radius, per obstacle.
    pub sensed: Vec<usize>,
    /// True Euclidean distance to each full cloud.
    pub clearance: Vec<f64>,
    /// Smoothed distance to the sensed part of each cloud; NaN when nothing is sensed.
    pub smoothed: Vec<f64>,
    pub target: Vec<f64>,
    pub waypoint: usize,
    pub kind: StepKind,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub obstacle_names: Vec<String>,
    pub output_dim: usize,
    pub sample_time: f64,
    pub waypoints: Vec<Vec<f64>>,
    pub rows: Vec<LogRow>,
    /// State after the last logged step.
    pub final_state: Vec<f64>,
    pub outcome: Outcome,
    pub abort_reason: Option<String>,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

impl TrajectoryLog {
    /// Column names: `time`, `x_0..`, `u_0..`, then `sensed_<name>`,
    /// `clearance_<name>`, `smoothed_<name>` per obstacle, `target_0..`,
    /// `waypoint`, `status`, `outer_iterations`, `inner_iterations`,
    /// `objective`.
    pub fn header(&self) -> Vec<String> {
        let (n, m) = self.rows.first().map_or((self.final_state.len(), 0), |r| (r.state.len(), r.input.len()));
        let mut h = vec!["time".to_string()];
        h.extend((0..n).map(|i| format!("x_{i}")));
        h.extend((0..m).map(|i| format!("u_{i}")));
        for name in &self.obstacle_names {
            h.push(format!("sensed_{name}"));
            h.push(format!("clearance_{name}"));
            h.push(format!("smoothed_{name}"));
        }
        h.extend((0..self.output_dim).map(|i| format!("target_{i}")));
        h.extend(["waypoint", "status", "outer_iterations", "inner_iterations", "objective"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.rows {
            let mut rec: Vec<String> = vec![fmt(r.time)];
            rec.extend(r.state.iter().map(|v| fmt(*v)));
            rec.extend(r.input.iter().map(|v| fmt(*v)));
            for k in 0..self.obstacle_names.len() {
                rec.push(r.sensed[k].to_string());
                rec.push(fmt(r.clearance[k]));
                rec.push(fmt(r.smoothed[k]));
            }
            rec.extend(r.target.iter().map(|v| fmt(*v)));
            rec.push(r.waypoint.to_string());
            rec.push(r.kind.as_str().to_string());
            rec.push(r.outer_iterations.to_string());
            rec.push(r.inner_iterations.to_string());
            rec.push(fmt(r.objective));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Builds the distance fields the controller sees at one step.
fn sensed_fields(sensed: &[PointCloud], cfg: &ScenarioConfig) -> Result<Vec<Box<dyn DistanceField>>> {
    sensed
        .iter()
        .map(|c| -> Result<Box<dyn DistanceField>> {
            Ok(match cfg.mission.metric {
                Metric::Smoothed => Box::new(SmoothedObstacle {
                    cloud: precompute(c.clone(), &cfg.nmpc.smoothing)?,
                    params: cfg.nmpc.smoothing,
                }),
                Metric::Euclidean => Box::new(EuclideanObstacle {
                    cloud: c.clone(),
                    scaling: cfg.mission.euclidean_scaling,
                }),
            })
        })
        .collect()
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    let ts = model.sample_time();
    let clouds: Vec<PointCloud> = cfg.obstacles.iter().map(|o| o.generate()).collect::<Result<_>>()?;
    let ms = &cfg.mission;
    let steps = (ms.max_sim_time / ts).round() as usize;

    let mut log = TrajectoryLog {
        obstacle_names: cfg.obstacles.iter().map(|o| o.name.clone()).collect(),
        output_dim: model.output_dim(),
        sample_time: ts,
        waypoints: ms.waypoints.clone(),
        rows: Vec::with_capacity(steps),
        final_state: ms.initial_state.clone(),
        outcome: Outcome::TimeLimit,
        abort_reason: None,
    };
    let mut x = ms.initial_state.clone();
    let mut wp = 0;
    let mut plan: Option<OcpSolution> = None;
    let warm_solver = SolverConfig { max_outer: ms.max_outer, ..cfg.solver };
    let mut failures = 0;

    for k in 0..steps {
        let time = k as f64 * ts;
        let y = output(&model, &x);
        while wp < ms.waypoints.len() && squared_distance(&y, &ms.waypoints[wp]).sqrt() < ms.stop_radius {
            info!("waypoint {wp} reached at t = {time:.2} s");
            wp += 1;
        }
        if wp == ms.waypoints.len() {
            log.outcome = Outcome::Completed;
            break;
        }
        let target = &ms.waypoints[wp];

        let sensed = lidar_scan(&clouds, &y, &cfg.lidar);
        let mut sensed_counts = vec![0; clouds.len()];
        let mut smoothed = vec![f64::NAN; clouds.len()];
        for c in &sensed {
            let idx = clouds.iter().position(|o| o.id() == c.id()).expect("scan keeps obstacle ids");
            sensed_counts[idx] = c.len();
            smoothed[idx] = precompute(c.clone(), &cfg.nmpc.smoothing)?.evaluate(&y, &cfg.nmpc.smoothing, None);
        }
        let clearance: Vec<f64> = clouds.iter().map(|c| euclidean_baseline_distance(c, &y).0).collect();

        let solve_now = plan.is_none() || k % ms.control_every == 0;
        let (kind, outer, inner, objective);
        if solve_now {
            let fields = sensed_fields(&sensed, cfg)?;
            let prob = build_problem(&cfg.nmpc, &model, &x, target, &fields, plan.as_ref())?;
            let budget = if plan.is_some() { warm_solver } else { cfg.solver };
            let sol = solve_warm(&prob, &budget, prob.initial_guess(), prob.warm_start())?;
            debug!(
                "t={time:.2} status={} outer={} inner={} objective={:.6e} residual={:.2e}",
                sol.status.as_str(),
                sol.iterations.len(),
                sol.inner_iterations,
                sol.objective,
                sol.residual_norm()
            );
            match sol.status {
                SolveStatus::InfeasibleBounds => {
                    log.outcome = Outcome::Aborted;
                    log.abort_reason = Some(format!("infeasible bounds at t = {time}"));
                    break;
                }
                SolveStatus::Converged => failures = 0,
                SolveStatus::MaxIter => {
                    failures += 1;
                    warn!("solver did not converge at t = {time:.2} s (residual {:.2e})", sol.residual_norm());
                }
            }
            kind = StepKind::Solved(sol.status);
            outer = sol.iterations.len();
            inner = sol.inner_iterations;
            objective = sol.objective;
            plan = Some(OcpSolution { layout: prob.layout(), solution: sol });
        } else {
            plan = plan.map(|p| p.shifted());
            kind = StepKind::Held;
            outer = 0;
            inner = 0;
            objective = f64::NAN;
        }
        let u = plan.as_ref().expect("a plan exists after the first step").first_input().to_vec();

        log.rows.push(LogRow {
            time,
            state: x.clone(),
            input: u.clone(),
            sensed: sensed_counts,
            clearance,
            smoothed,
            target: target.clone(),
            waypoint: wp,
            kind,
            outer_iterations: outer,
            inner_iterations: inner,
            objective,
        });

        x = match rk4_step(&model, &x, &u) {
            Ok(next) => next,
            Err(e) => {
                log.outcome = Outcome::Aborted;
                log.abort_reason = Some(format!("plant step failed at t = {time}: {e}"));
                break;
            }
        };
        log.final_state = x.clone();
        if failures > ms.max_consecutive_failures {
            log.outcome = Outcome::Aborted;
            log.abort_reason = Some(format!("{failures} consecutive unconverged solves at t = {time}"));
            break;
        }
    }
    if log.outcome == Outcome::TimeLimit {
        // the last propagated state may already sit on the final waypoint
        let y = output(&model, &log.final_state);
        if wp + 1 == ms.waypoints.len() && squared_distance(&y, &ms.waypoints[wp]).sqrt() < ms.stop_radius {
            log.outcome = Outcome::Completed;
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointSummary {
    pub index: usize,
    pub target: Vec<f64>,
    pub reached: bool,
    /// Time the waypoint was reached; NaN when it was not.
    pub reached_at: f64,
    /// Time spent on this waypoint (until reached or the run ended).
    pub time_to_target: f64,
    /// Output distance to the target when its segment ended.
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub outcome: Outcome,
    pub steps: usize,
    pub duration: f64,
    /// Minimum true Euclidean clearance over time and obstacles; infinite without obstacles.
    pub min_clearance: f64,
    /// `sum_k |u_{k+1} - u_k|_1`.
    pub input_total_variation: f64,
    pub solves: usize,
    pub non_converged: usize,
    pub waypoints: Vec<WaypointSummary>,
}

pub fn metrics(log: &TrajectoryLog) -> Summary {
    let p = log.output_dim;
    let min_clearance = log.rows.iter().flat_map(|r| r.clearance.iter().copied()).fold(f64::INFINITY, f64::min);
    let input_total_variation = log
        .rows
        .windows(2)
        .map(|w| w[0].input.iter().zip(&w[1].input).map(|(a, b)| (b - a).abs()).sum::<f64>())
        .sum();
    let solves = log.rows.iter().filter(|r| matches!(r.kind, StepKind::Solved(_))).count();
    let non_converged = log.rows.iter().filter(|r| matches!(r.kind, StepKind::Solved(s) if s != SolveStatus::Converged)).count();
    let end_time = log.rows.last().map_or(0.0, |r| r.time + log.sample_time);

    let mut waypoints = Vec::with_capacity(log.waypoints.len());
    let mut segment_start = 0.0;
    for (i, target) in log.waypoints.iter().enumerate() {
        // first row logged after the switch, or the end of the run
        let switch = log.rows.iter().find(|r| r.waypoint > i);
        let reached_state = match switch {
            Some(r) => Some((r.time, &r.state)),
            None if log.outcome == Outcome::Completed && i + 1 == log.waypoints.len() => Some((end_time, &log.final_state)),
            None => None,
        };
        let active = log.rows.iter().any(|r| r.waypoint == i) || reached_state.is_some();
        let (reached, reached_at, state) = match reached_state {
            Some((t, s)) => (true, t, s),
            None => (false, f64::NAN, &log.final_state),
        };
        let final_error = if active || i == 0 {
            squared_distance(&state[..p], target).sqrt()
        } else {
            f64::NAN
        };
        let stop = if reached { reached_at } else { end_time };
        waypoints.push(WaypointSummary {
            index: i,
            target: target.clone(),
            reached,
            reached_at,
            time_to_target: if active { stop - segment_start } else { f64::NAN },
            final_error,
        });
        if reached {
            segment_start = reached_at;
        }
    }

    Summary {
        outcome: log.outcome.clone(),
        steps: log.rows.len(),
        duration: end_time,
        min_clearance,
        input_total_variation,
        solves,
        non_converged,
        waypoints,
    }
}
