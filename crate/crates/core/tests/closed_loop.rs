use std::path::PathBuf;

use cloudmpc::cloud::{lidar_scan, LidarConfig, PointCloud};
use cloudmpc::scenario::{load_scenario, parse_scenario, resolved_toml};
use cloudmpc::sim::{metrics, run_scenario, Metric, Outcome, ScenarioConfig};
use proptest::prelude::*;

fn load(name: &str, overrides: &[&str]) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    load_scenario(path, &overrides).unwrap()
}

#[test]
fn sensed_counts_follow_the_current_position() {
    let cfg = load("desk_double_integrator", &["mission.max_sim_time=3.0"]);
    let clouds: Vec<PointCloud> = cfg.obstacles.iter().map(|o| o.generate().unwrap()).collect();
    let log = run_scenario(&cfg).unwrap();
    let r2 = cfg.lidar.radius * cfg.lidar.radius;
    let mut seen_change = false;
    for (k, row) in log.rows.iter().enumerate() {
        let y = &row.state[..3];
        for (i, cloud) in clouds.iter().enumerate() {
            let expected = cloud
                .points()
                .filter(|p| p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2)
                .count();
            assert_eq!(row.sensed[i], expected, "step {k}, obstacle {i}");
            if k > 0 && log.rows[k - 1].sensed[i] != expected {
                seen_change = true;
            }
        }
    }
    assert!(seen_change, "the run never changed what it senses");
}

#[test]
fn larger_penalty_weight_keeps_more_clearance() {
    let mut clearances = Vec::new();
    for mu in ["1e3", "1e4", "5e4"] {
        let cfg = load("desk_double_integrator", &[&format!("nmpc.barrier.mu={mu}")]);
        let s = metrics(&run_scenario(&cfg).unwrap());
        clearances.push(s.min_clearance);
    }
    assert!(clearances.windows(2).all(|w| w[1] >= w[0]), "{clearances:?}");
}

#[test]
fn runs_are_deterministic() {
    let cfg = load("desk_quadrotor", &["mission.max_sim_time=0.5"]);
    let a = run_scenario(&cfg).unwrap().to_csv_string().unwrap();
    let b = run_scenario(&cfg).unwrap().to_csv_string().unwrap();
    assert_eq!(a, b);
    let replay = parse_scenario(&resolved_toml(&cfg).unwrap(), &[]).unwrap();
    assert_eq!(replay, cfg);
    assert_eq!(run_scenario(&replay).unwrap().to_csv_string().unwrap(), a);
}

#[test]
fn metrics_agree_without_obstacles() {
    let mut cfg = load("unobstructed", &[]);
    let mut logs = Vec::new();
    for metric in [Metric::Smoothed, Metric::Euclidean] {
        cfg.mission.metric = metric;
        logs.push(run_scenario(&cfg).unwrap());
    }
    assert_eq!(logs[0].outcome, Outcome::Completed);
    assert_eq!(logs[0].rows.len(), logs[1].rows.len());
    for (a, b) in logs[0].rows.iter().zip(&logs[1].rows) {
        assert_eq!(a.state, b.state);
        assert_eq!(a.input, b.input);
    }
}

proptest! {
    #[test]
    fn lidar_keeps_exactly_the_points_in_range(
        coords in prop::collection::vec(-5.0f64..5.0, 3..150),
        center in prop::array::uniform3(-5.0f64..5.0),
        radius in 0.1f64..6.0,
    ) {
        let n = coords.len() / 3 * 3;
        let cloud = PointCloud::from_flat("c", 3, coords[..n].to_vec()).unwrap();
        let scans = lidar_scan(std::slice::from_ref(&cloud), &center, &LidarConfig { radius });
        let inside: Vec<&[f64]> = cloud
            .points()
            .filter(|p| p.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius)
            .collect();
        if inside.is_empty() {
            prop_assert!(scans.is_empty());
        } else {
            prop_assert_eq!(scans.len(), 1);
            prop_assert_eq!(scans[0].id(), "c");
            let kept: Vec<&[f64]> = scans[0].points().collect();
            prop_assert_eq!(kept, inside);
        }
    }
}
