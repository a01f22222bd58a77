//! Scenario files.
//!
//! A scenario is a TOML document with the sections `model`, `nmpc`
//! (`nmpc.smoothing`, `nmpc.barrier`), `solver`, `lidar`, `obstacles` (array
//! of tables) and `mission`. Every key is optional: missing keys take the
//! defaults of the selected `model.kind`, which for the quadrotor are the
//! full-scale mission settings. Overrides are `dotted.key=value` strings
//! applied after the file, with array elements addressed by index
//! (`obstacles.0.count=200`).

use std::fs;
use std::path::Path;

use toml::{Table, Value};

use crate::cloud::{LidarConfig, ObstacleShape};
use crate::dynamics::QuadrotorParams;
use crate::error::{Error, Result};
use crate::nmpc::{double_integrator_defaults, quadrotor_defaults};
use crate::sim::{EuclideanScaling, Metric, MissionConfig, ModelConfig, ObstacleConfig, ScenarioConfig};
use crate::solver::SolverConfig;

const MAX_SUGGESTIONS: usize = 3;

/// Defaults for a quadrotor scenario: 35-step horizon at 10 ms, the
/// full-scale bounds and weights, and the two-waypoint mission from
/// (22, -22, 0).
pub fn quadrotor_scenario() -> ScenarioConfig {
    let mut initial_state = vec![0.0; 12];
    initial_state[..3].copy_from_slice(&[22.0, -22.0, 0.0]);
    ScenarioConfig {
        name: "quadrotor".into(),
        model: ModelConfig::Quadrotor {
            sample_time: 0.01,
            params: QuadrotorParams::default(),
        },
        nmpc: quadrotor_defaults(),
        solver: SolverConfig::default(),
        lidar: LidarConfig { radius: 3.0 },
        obstacles: Vec::new(),
        mission: MissionConfig {
            initial_state,
            waypoints: vec![vec![-12.0, 18.0, 11.0], vec![-21.0, 18.0, 0.0]],
            stop_radius: 0.3,
            max_sim_time: 200.0,
            control_every: 1,
            metric: Metric::Smoothed,
            euclidean_scaling: EuclideanScaling::Squared,
            max_consecutive_failures: 10,
            max_outer: 5,
        },
    }
}

/// Defaults for a `dim`-axis double integrator sharing the quadrotor's
/// position box.
pub fn double_integrator_scenario(dim: usize) -> ScenarioConfig {
    let base = quadrotor_scenario();
    let mut initial_state = base.mission.initial_state[..dim].to_vec();
    initial_state.extend(std::iter::repeat(0.0).take(dim));
    ScenarioConfig {
        name: "double_integrator".into(),
        model: ModelConfig::DoubleIntegrator { sample_time: 0.01, dim },
        nmpc: double_integrator_defaults(dim),
        mission: MissionConfig {
            initial_state,
            waypoints: base.mission.waypoints.iter().map(|w| w[..dim].to_vec()).collect(),
            ..base.mission
        },
        ..base
    }
}

fn obstacle_template() -> Value {
    Value::try_from(ObstacleConfig {
        name: String::new(),
        bases: vec![2, 3, 5],
        count: 400,
        box_min: vec![0.0; 3],
        box_max: vec![1.0; 3],
        skip: 20,
        shape: ObstacleShape::Box,
    })
    .expect("obstacle defaults serialize")
}

fn leaf_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Table(t) => {
            for (k, child) in t {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_paths(child, &path, out);
            }
        }
        Value::Array(a) if a.iter().all(Value::is_table) && !a.is_empty() => {
            for (i, child) in a.iter().enumerate() {
                leaf_paths(child, &format!("{prefix}.{i}"), out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn unknown_key(key: &str, tree: &Value) -> Error {
    let mut paths = Vec::new();
    leaf_paths(tree, "", &mut paths);
    let mut scored: Vec<(f64, String)> = paths.into_iter().map(|p| (strsim::jaro_winkler(key, &p), p)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Error::UnknownKey {
        key: key.to_string(),
        suggestions: scored.into_iter().take(MAX_SUGGESTIONS).map(|(_, p)| p).collect(),
    }
}

/// Lays `user` over `base`, rejecting keys that `base` does not know.
fn merge(base: &mut Value, user: Value, path: &str, root: &Value) -> Result<()> {
    match (base, user) {
        (Value::Table(bt), Value::Table(ut)) => {
            for (k, uv) in ut {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match bt.get_mut(&k) {
                    Some(bv) => merge(bv, uv, &child, root)?,
                    None => return Err(unknown_key(&child, root)),
                }
            }
            Ok(())
        }
        (b @ Value::Array(_), Value::Array(ua)) if path == "obstacles" => {
            let template = obstacle_template();
            let mut items = Vec::with_capacity(ua.len());
            for (i, item) in ua.into_iter().enumerate() {
                let mut filled = template.clone();
                merge(&mut filled, item, &format!("obstacles.{i}"), &template)?;
                items.push(filled);
            }
            *b = Value::Array(items);
            Ok(())
        }
        (b, uv) => {
            *b = uv;
            Ok(())
        }
    }
}

fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed table has the key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let snapshot = tree.clone();
    let mut node = tree;
    for seg in key.split('.') {
        node = match node {
            Value::Table(t) => t.get_mut(seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| unknown_key(key, &snapshot))?;
    }
    if matches!(node, Value::Table(_)) && !matches!(value, Value::Table(_)) {
        return Err(Error::Config(format!("`{key}` is a section, not a value")));
    }
    // integers are accepted where the default holds a float
    *node = match (&*node, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    Ok(())
}

fn override_for<'a>(overrides: &'a [(String, Value)], key: &str) -> Option<&'a Value> {
    overrides.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v)
}

/// Parses a scenario document and applies `key=value` overrides.
pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let user: Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let overrides: Vec<(String, Value)> = overrides.iter().map(|s| parse_override(s)).collect::<Result<_>>()?;

    let model = user.get("model").and_then(Value::as_table);
    let kind = override_for(&overrides, "model.kind")
        .or_else(|| model.and_then(|m| m.get("kind")))
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| Error::invalid("model.kind", "must be a string")))
        .transpose()?
        .unwrap_or_else(|| "quadrotor".to_string());
    let defaults = match kind.as_str() {
        "quadrotor" => quadrotor_scenario(),
        "double_integrator" => {
            let dim = override_for(&overrides, "model.dim")
                .or_else(|| model.and_then(|m| m.get("dim")))
                .map(|v| v.as_integer().ok_or_else(|| Error::invalid("model.dim", "must be an integer")))
                .transpose()?
                .unwrap_or(3);
            if !(1..=3).contains(&dim) {
                return Err(Error::invalid("model.dim", format!("{dim} is outside 1..=3")));
            }
            double_integrator_scenario(dim as usize)
        }
        other => {
            return Err(Error::invalid(
                "model.kind",
                format!("unknown model {other:?}; expected \"quadrotor\" or \"double_integrator\""),
            ))
        }
    };

    let mut tree = Value::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))?;
    let root = tree.clone();
    merge(&mut tree, Value::Table(user), "", &root)?;
    for (key, value) in overrides {
        set_path(&mut tree, &key, value)?;
    }
    let cfg: ScenarioConfig = tree.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>, overrides: &[String]) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_scenario(&text, overrides).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Complete TOML rendering of a scenario; parsing it back yields the same
/// configuration.
pub fn resolved_toml(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
name = "desk"

[model]
kind = "double_integrator"
dim = 2
sample_time = 0.05

[nmpc]
horizon = 10

[[obstacles]]
name = "pillar"
count = 50
box_min = [1.0, -0.5]
box_max = [2.0, 0.5]
bases = [2, 3]

[mission]
initial_state = [0.0, 0.0, 0.0, 0.0]
waypoints = [[3.0, 0.0]]
"#;

    #[test]
    fn empty_document_gives_the_quadrotor_mission() {
        let cfg = parse_scenario("", &[]).unwrap();
        assert_eq!(cfg, quadrotor_scenario());
        assert_eq!(cfg.nmpc.horizon, 35);
        assert_eq!(cfg.nmpc.barrier.mu, 5e4);
        assert_eq!(cfg.nmpc.t_w, vec![1000.0; 3]);
        assert_eq!(cfg.model.sample_time(), 0.01);
    }

    #[test]
    fn partial_sections_fill_from_model_defaults() {
        let cfg = parse_scenario(DESK, &[]).unwrap();
        assert_eq!(cfg.nmpc.horizon, 10);
        assert_eq!(cfg.nmpc.q.len(), 4);
        assert_eq!(cfg.obstacles[0].skip, 20);
        assert_eq!(cfg.obstacles[0].shape, ObstacleShape::Box);
        assert_eq!(cfg.mission.stop_radius, 0.3);
        assert_eq!(cfg.model, ModelConfig::DoubleIntegrator { sample_time: 0.05, dim: 2 });
    }

    #[test]
    fn overrides_reach_nested_and_indexed_keys() {
        let cfg = parse_scenario(
            DESK,
            &["nmpc.barrier.mu=1e3".into(), "obstacles.0.count=20".into(), "mission.metric=euclidean".into(), "nmpc.smoothing.eta=1".into()],
        )
        .unwrap();
        assert_eq!(cfg.nmpc.barrier.mu, 1e3);
        assert_eq!(cfg.obstacles[0].count, 20);
        assert_eq!(cfg.mission.metric, Metric::Euclidean);
        assert_eq!(cfg.nmpc.smoothing.eta, 1.0);
    }

    #[test]
    fn lambda_out_of_range_names_the_key() {
        let err = parse_scenario(DESK, &["nmpc.lambda=1.5".into()]).unwrap_err().to_string();
        assert!(err.contains("nmpc.lambda") && err.contains("(0, 1)"), "{err}");
    }

    #[test]
    fn unknown_keys_list_close_matches() {
        let err = parse_scenario(DESK, &["nmpc.barier.mu=1".into()]).unwrap_err();
        match err {
            Error::UnknownKey { key, suggestions } => {
                assert_eq!(key, "nmpc.barier.mu");
                assert!(suggestions.contains(&"nmpc.barrier.mu".to_string()), "{suggestions:?}");
            }
            other => panic!("{other}"),
        }
        let err = parse_scenario("[mission]\nstop_radus = 1.0\n", &[]).unwrap_err().to_string();
        assert!(err.contains("mission.stop_radius"), "{err}");
        let err = parse_scenario(DESK, &["obstacles.0.cnt=3".into()]).unwrap_err().to_string();
        assert!(err.contains("obstacles.0.count"), "{err}");
    }

    #[test]
    fn bad_sections_are_reported_with_paths() {
        let err = parse_scenario(DESK, &["mission.waypoints=[]".into()]).unwrap_err().to_string();
        assert!(err.contains("mission.waypoints"), "{err}");
        let err = parse_scenario(DESK, &["obstacles.0.box_min=[3.0, 0.0]".into()]).unwrap_err().to_string();
        assert!(err.contains("obstacles.0"), "{err}");
        let err = parse_scenario("[model]\nkind = \"blimp\"\n", &[]).unwrap_err().to_string();
        assert!(err.contains("model.kind"), "{err}");
        assert!(parse_scenario(DESK, &["nmpc.lambda".into()]).is_err());
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let cfg = parse_scenario(DESK, &["nmpc.smoothing.sigma=0.7".into()]).unwrap();
        let text = resolved_toml(&cfg).unwrap();
        assert_eq!(parse_scenario(&text, &[]).unwrap(), cfg);
        let quad = quadrotor_scenario();
        assert_eq!(parse_scenario(&resolved_toml(&quad).unwrap(), &[]).unwrap(), quad);
    }
}
