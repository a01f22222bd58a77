//! Obstacle point clouds: storage, Halton generation, virtual LiDAR cropping
//! and a plain-text file format.
//!
//! The text format holds one point per line as whitespace-separated decimals.
//! Blank lines and lines starting with `#` are ignored, except for an optional
//! `# id: <name>` line which carries the obstacle identifier.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite set of points in output space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    id: String,
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    /// Builds a cloud from individual points. All points must share a
    /// dimension and be finite.
    pub fn new(id: impl Into<String>, points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyCloud)?;
        let dim = first.len();
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(id, dim, coords)
    }

    /// Builds a cloud from a flat row-major coordinate buffer.
    pub fn from_flat(id: impl Into<String>, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("points", "non-finite coordinate"));
        }
        Ok(Self {
            id: id.into(),
            dim,
            coords,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Radical inverse of `index` in `base`: the base-`base` digits of `index`
/// mirrored across the radix point.
pub fn halton_value(index: u64, base: u32) -> f64 {
    let base_u = u64::from(base);
    let inv = 1.0 / f64::from(base);
    let mut scale = inv;
    let mut value = 0.0;
    let mut i = index;
    while i > 0 {
        value += scale * (i % base_u) as f64;
        i /= base_u;
        scale *= inv;
    }
    value
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Volume filled by a Halton obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleShape {
    /// The whole axis-aligned box.
    #[default]
    Box,
    /// The ellipsoid inscribed in the box, filled by rejection.
    Ellipsoid,
}

fn default_skip() -> u64 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaltonConfig {
    pub bases: Vec<u32>,
    pub count: usize,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    #[serde(default = "default_skip")]
    pub skip: u64,
    #[serde(default)]
    pub shape: ObstacleShape,
}

impl HaltonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bases.is_empty() {
            return Err(Error::invalid("bases", "at least one base is required"));
        }
        for (i, &b) in self.bases.iter().enumerate() {
            if !is_prime(b) {
                return Err(Error::invalid("bases", format!("{b} is not prime")));
            }
            if self.bases[..i].contains(&b) {
                return Err(Error::invalid("bases", format!("{b} is repeated")));
            }
        }
        if self.count == 0 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        let dim = self.bases.len();
        for (key, v) in [("box_min", &self.box_min), ("box_max", &self.box_max)] {
            if v.len() != dim {
                return Err(Error::invalid(
                    key,
                    format!("expected {dim} components (one per base), found {}", v.len()),
                ));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(key, "non-finite component"));
            }
        }
        if self.box_min.iter().zip(&self.box_max).any(|(lo, hi)| lo >= hi) {
            return Err(Error::invalid("box_min", "must be below box_max componentwise"));
        }
        Ok(())
    }

    fn sample(&self, index: u64, out: &mut Vec<f64>) {
        out.clear();
        for ((&b, lo), hi) in self.bases.iter().zip(&self.box_min).zip(&self.box_max) {
            out.push(lo + halton_value(index, b) * (hi - lo));
        }
    }

    fn inside_shape(&self, p: &[f64]) -> bool {
        match self.shape {
            ObstacleShape::Box => true,
            ObstacleShape::Ellipsoid => {
                let r2: f64 = p
                    .iter()
                    .zip(self.box_min.iter().zip(&self.box_max))
                    .map(|(c, (lo, hi))| {
                        let half = 0.5 * (hi - lo);
                        let t = (c - 0.5 * (hi + lo)) / half;
                        t * t
                    })
                    .sum();
                r2 <= 1.0
            }
        }
    }
}

// An inscribed ellipsoid holds pi/6 of a 3-D box; this bounds the rejection loop
// generously for any dimension we support.
const MAX_REJECTION_FACTOR: u64 = 64;

/// Fills the configured volume with `count` Halton points, starting at
/// sequence index `skip + 1`.
pub fn generate_cloud(cfg: &HaltonConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let dim = cfg.bases.len();
    let mut coords = Vec::with_capacity(cfg.count * dim);
    let mut p = Vec::with_capacity(dim);
    let mut index = cfg.skip;
    let limit = cfg.skip + MAX_REJECTION_FACTOR * cfg.count as u64;
    while coords.len() < cfg.count * dim {
        index += 1;
        if index > limit {
            return Err(Error::invalid("shape", "rejection sampling did not fill the shape"));
        }
        cfg.sample(index, &mut p);
        if cfg.inside_shape(&p) {
            coords.extend_from_slice(&p);
        }
    }
    PointCloud::from_flat("", dim, coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarConfig {
    pub radius: f64,
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::invalid("radius", "must be positive"));
        }
        Ok(())
    }
}

/// Crops every cloud to the points within `cfg.radius` of `center`. Clouds
/// with nothing in range are dropped; order and ids are preserved.
pub fn lidar_scan(clouds: &[PointCloud], center: &[f64], cfg: &LidarConfig) -> Vec<PointCloud> {
    let r2 = cfg.radius * cfg.radius;
    clouds
        .iter()
        .filter_map(|cloud| {
            let coords: Vec<f64> = cloud
                .points()
                .filter(|p| squared_distance(p, center) <= r2)
                .flatten()
                .copied()
                .collect();
            if coords.is_empty() {
                None
            } else {
                Some(PointCloud {
                    id: cloud.id.clone(),
                    dim: cloud.dim,
                    coords,
                })
            }
        })
        .collect()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_cloud(cloud))?;
    Ok(())
}

pub fn format_cloud(cloud: &PointCloud) -> String {
    let mut out = String::new();
    if !cloud.id.is_empty() {
        let _ = writeln!(out, "# id: {}", cloud.id);
    }
    for p in cloud.points() {
        let row: Vec<String> = p.iter().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_cloud(&text, path)
}

pub fn parse_cloud(text: &str, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut dim = None;
    let mut coords = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(name) = comment.trim().strip_prefix("id:") {
                id = name.trim().to_string();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| err(line_no, format!("bad number `{tok}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|c| !c.is_finite()) {
            return Err(err(line_no, "non-finite coordinate".into()));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(err(
                    line_no,
                    format!("dimension mismatch: expected {d} coordinates, found {}", row.len()),
                ))
            }
            _ => {}
        }
        coords.extend(row);
    }
    let dim = dim.ok_or_else(|| err(text.lines().count().max(1), "no points in file".into()))?;
    PointCloud::from_flat(id, dim, coords)
}
