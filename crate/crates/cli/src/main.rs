use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use cloudmpc::cloud::save_cloud;
use cloudmpc::dynamics::{output, rk4_step, SystemModel};
use cloudmpc::gradcheck::{run_checks, GRADIENT_TOLERANCE};
use cloudmpc::scenario::{load_scenario, parse_scenario, resolved_toml};
use cloudmpc::sim::{metrics, run_scenario, LogRow, Metric, Outcome, ScenarioConfig, StepKind, Summary, TrajectoryLog};
use cloudmpc::solver::SolveStatus;

const EXIT_CONFIG: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_GRADIENT: u8 = 3;

const TRAJECTORY: &str = "trajectory.csv";
const SUMMARY: &str = "summary.toml";
const RESOLVED: &str = "resolved_config.toml";

/// Tracking NMPC with smooth point-cloud obstacle avoidance.
#[derive(Parser)]
#[command(name = "cloudmpc", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,

    /// Override a configuration value, e.g. `--set nmpc.barrier.mu=1e4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory [default: $CLOUDMPC_OUT_DIR/<scenario name>, or out/<scenario name>].
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trajectory, summary and resolved config.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a scenario with the smoothed and the Euclidean metric and report the differences.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Finite-difference audit of every analytic derivative at the scenario's parameters.
    CheckGradients {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Central-difference step (relative to max(1, |z|)).
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Write the scenario's obstacle clouds as text files.
    GenCloud {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Recompute the summary of a finished run directory.
    Metrics {
        /// Directory written by `run` (needs trajectory.csv and resolved_config.toml).
        run_dir: PathBuf,
    },
}

/// Errors that map to a specific exit code.
enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(args: &ScenarioArgs) -> std::result::Result<ScenarioConfig, Failure> {
    load_scenario(&args.scenario, &args.overrides)
        .with_context(|| format!("cannot load scenario {}", args.scenario.display()))
        .map_err(Failure::Config)
}

fn out_dir(out: &OutArgs, cfg: &ScenarioConfig) -> PathBuf {
    out.out.clone().unwrap_or_else(|| {
        let base = std::env::var_os("CLOUDMPC_OUT_DIR").map_or_else(|| PathBuf::from("out"), PathBuf::from);
        base.join(&cfg.name)
    })
}

fn write_run(dir: &Path, cfg: &ScenarioConfig, log: &TrajectoryLog) -> Result<Summary> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let file = fs::File::create(dir.join(TRAJECTORY))?;
    log.write_csv(std::io::BufWriter::new(file))?;
    let summary = metrics(log);
    fs::write(dir.join(SUMMARY), toml::to_string(&summary)?)?;
    fs::write(dir.join(RESOLVED), resolved_toml(cfg)?)?;
    Ok(summary)
}

fn report(label: &str, s: &Summary, log: &TrajectoryLog) {
    println!(
        "{label}: {} after {:.2} s, min clearance {:.4} m, TV(u) {:.4}, {} of {} solves unconverged",
        s.outcome.as_str(),
        s.duration,
        s.min_clearance,
        s.input_total_variation,
        s.non_converged,
        s.solves
    );
    if let Some(reason) = &log.abort_reason {
        println!("{label}: aborted: {reason}");
    }
}

fn cmd_run(scenario: &ScenarioArgs, out: &OutArgs) -> std::result::Result<u8, Failure> {
    let cfg = load(scenario)?;
    let dir = out_dir(out, &cfg);
    info!("running {} into {}", cfg.name, dir.display());
    let log = run_scenario(&cfg).map_err(anyhow::Error::from)?;
    let summary = write_run(&dir, &cfg, &log)?;
    report(&cfg.name, &summary, &log);
    Ok(if summary.outcome == Outcome::Completed { 0 } else { EXIT_ABORT })
}

#[derive(serde::Serialize)]
struct DeltaEntry {
    metric: &'static str,
    outcome: Outcome,
    input_total_variation: f64,
    min_clearance: f64,
    non_converged: usize,
    time_to_target: Vec<f64>,
}

#[derive(serde::Serialize)]
struct DeltaReport {
    smoothed: DeltaEntry,
    euclidean: DeltaEntry,
    /// smoothed minus euclidean
    delta_input_total_variation: f64,
    delta_min_clearance: f64,
    delta_non_converged: i64,
}

fn entry(metric: Metric, s: &Summary) -> DeltaEntry {
    DeltaEntry {
        metric: metric.as_str(),
        outcome: s.outcome.clone(),
        input_total_variation: s.input_total_variation,
        min_clearance: s.min_clearance,
        non_converged: s.non_converged,
        time_to_target: s.waypoints.iter().map(|w| w.time_to_target).collect(),
    }
}

fn cmd_compare(scenario: &ScenarioArgs, out: &OutArgs) -> std::result::Result<u8, Failure> {
    let base = load(scenario)?;
    let dir = out_dir(out, &base);
    let mut summaries = Vec::new();
    for metric in [Metric::Smoothed, Metric::Euclidean] {
        let mut cfg = base.clone();
        cfg.mission.metric = metric;
        let log = run_scenario(&cfg).map_err(anyhow::Error::from)?;
        let summary = write_run(&dir.join(metric.as_str()), &cfg, &log)?;
        report(metric.as_str(), &summary, &log);
        summaries.push(summary);
    }
    let (s, e) = (&summaries[0], &summaries[1]);
    let delta = DeltaReport {
        smoothed: entry(Metric::Smoothed, s),
        euclidean: entry(Metric::Euclidean, e),
        delta_input_total_variation: s.input_total_variation - e.input_total_variation,
        delta_min_clearance: s.min_clearance - e.min_clearance,
        delta_non_converged: s.non_converged as i64 - e.non_converged as i64,
    };
    fs::write(dir.join("delta.toml"), toml::to_string(&delta).map_err(anyhow::Error::from)?).map_err(anyhow::Error::from)?;
    println!(
        "TV(u) smoothed {:.4} vs euclidean {:.4}; unconverged {} vs {}",
        s.input_total_variation, e.input_total_variation, s.non_converged, e.non_converged
    );
    let ok = summaries.iter().all(|s| s.outcome == Outcome::Completed);
    Ok(if ok { 0 } else { EXIT_ABORT })
}

fn cmd_check(scenario: &ScenarioArgs, step: f64) -> std::result::Result<u8, Failure> {
    let cfg = load(scenario)?;
    let results = run_checks(&cfg, step).map_err(anyhow::Error::from)?;
    let mut code = 0;
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<10} {:>4} samples  max rel err {:.3e}  {verdict}", r.suite, r.samples, r.max_relative_error);
        if !r.passed() {
            println!("  worst: {}", r.worst);
            code = EXIT_GRADIENT;
        }
    }
    if code != 0 {
        println!("tolerance {GRADIENT_TOLERANCE:e} exceeded");
    }
    Ok(code)
}

fn cmd_gen_cloud(scenario: &ScenarioArgs, out: &OutArgs) -> std::result::Result<u8, Failure> {
    let cfg = load(scenario)?;
    let dir = out_dir(out, &cfg);
    fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
    for obs in &cfg.obstacles {
        let cloud = obs.generate().map_err(anyhow::Error::from)?;
        let path = dir.join(format!("{}.cloud", obs.name));
        save_cloud(&cloud, &path).map_err(anyhow::Error::from)?;
        println!("{}: {} points -> {}", obs.name, cloud.len(), path.display());
    }
    Ok(0)
}

fn parse_row(rec: &csv::StringRecord, n: usize, m: usize, obstacles: usize, p: usize) -> Result<LogRow> {
    let mut it = rec.iter();
    let mut next = || it.next().context("short row");
    let time = next()?.parse()?;
    let state = (0..n).map(|_| Ok(next()?.parse()?)).collect::<Result<Vec<f64>>>()?;
    let input = (0..m).map(|_| Ok(next()?.parse()?)).collect::<Result<Vec<f64>>>()?;
    let (mut sensed, mut clearance, mut smoothed) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..obstacles {
        sensed.push(next()?.parse()?);
        clearance.push(next()?.parse()?);
        smoothed.push(next()?.parse()?);
    }
    let target = (0..p).map(|_| Ok(next()?.parse()?)).collect::<Result<Vec<f64>>>()?;
    let waypoint = next()?.parse()?;
    let kind = match next()? {
        "converged" => StepKind::Solved(SolveStatus::Converged),
        "max_iter" => StepKind::Solved(SolveStatus::MaxIter),
        "infeasible_bounds" => StepKind::Solved(SolveStatus::InfeasibleBounds),
        "held" => StepKind::Held,
        other => anyhow::bail!("unknown status {other:?}"),
    };
    Ok(LogRow {
        time,
        state,
        input,
        sensed,
        clearance,
        smoothed,
        target,
        waypoint,
        kind,
        outer_iterations: next()?.parse()?,
        inner_iterations: next()?.parse()?,
        objective: next()?.parse()?,
    })
}

fn cmd_metrics(run_dir: &Path) -> std::result::Result<u8, Failure> {
    let text = fs::read_to_string(run_dir.join(RESOLVED))
        .with_context(|| format!("cannot read {}", run_dir.join(RESOLVED).display()))
        .map_err(Failure::Config)?;
    let cfg = parse_scenario(&text, &[]).context("invalid resolved config").map_err(Failure::Config)?;
    let model = cfg.model.build().map_err(anyhow::Error::from)?;
    let (n, m, p) = (model.state_dim(), model.input_dim(), model.output_dim());
    let mut reader = csv::Reader::from_path(run_dir.join(TRAJECTORY)).map_err(anyhow::Error::from)?;
    let rows: Vec<LogRow> = reader
        .records()
        .map(|r| parse_row(&r?, n, m, cfg.obstacles.len(), p))
        .collect::<Result<_>>()?;

    // the run's last state is one plant step past the last row
    let final_state = match rows.last() {
        Some(r) => rk4_step(&model, &r.state, &r.input).map_err(anyhow::Error::from)?,
        None => cfg.mission.initial_state.clone(),
    };
    let last_wp = cfg.mission.waypoints.len() - 1;
    let y = output(&model, &final_state);
    let at_goal = rows.last().is_none_or(|r| r.waypoint == last_wp)
        && y.iter().zip(&cfg.mission.waypoints[last_wp]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < cfg.mission.stop_radius;
    let full = (cfg.mission.max_sim_time / model.sample_time()).round() as usize;
    let outcome = if at_goal {
        Outcome::Completed
    } else if rows.len() < full {
        Outcome::Aborted
    } else {
        Outcome::TimeLimit
    };
    let log = TrajectoryLog {
        obstacle_names: cfg.obstacles.iter().map(|o| o.name.clone()).collect(),
        output_dim: p,
        sample_time: model.sample_time(),
        waypoints: cfg.mission.waypoints.clone(),
        rows,
        final_state,
        outcome,
        abort_reason: None,
    };
    print!("{}", toml::to_string(&metrics(&log)).map_err(anyhow::Error::from)?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Run { scenario, out } => cmd_run(scenario, out),
        Command::Compare { scenario, out } => cmd_compare(scenario, out),
        Command::CheckGradients { scenario, step } => cmd_check(scenario, *step),
        Command::GenCloud { scenario, out } => cmd_gen_cloud(scenario, out),
        Command::Metrics { run_dir } => cmd_metrics(run_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
