//! Synthetic urban scene: building boxes, candidate sites, line-of-sight and
//! an analytic channel-gain model standing in for a ray-traced map.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("could only place {placed} of {wanted} {what} after {attempts} attempts")]
    Placement {
        what: &'static str,
        placed: usize,
        wanted: usize,
        attempts: usize,
    },
    #[error("distance between site and point is zero")]
    ZeroDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Axis-aligned building standing on the ground (`z` from 0 to `height`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub height: f64,
}

impl Building {
    fn footprint_overlaps(&self, other: &Building, gap: f64) -> bool {
        self.x_min < other.x_max + gap
            && other.x_min < self.x_max + gap
            && self.y_min < other.y_max + gap
            && other.y_min < self.y_max + gap
    }

    fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Parameter interval `[t0, t1]` over which `a + t (b - a)` lies in the
    /// closed box, or `None`.
    fn clip(&self, a: &Point3, b: &Point3) -> Option<(f64, f64)> {
        let lo = [self.x_min, self.y_min, 0.0];
        let hi = [self.x_max, self.y_max, self.height];
        let origin = [a.x, a.y, a.z];
        let dir = [b.x - a.x, b.y - a.y, b.z - a.z];
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for axis in 0..3 {
            if dir[axis] == 0.0 {
                if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                    return None;
                }
            } else {
                let ta = (lo[axis] - origin[axis]) / dir[axis];
                let tb = (hi[axis] - origin[axis]) / dir[axis];
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some((t0, t1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bounds: Bounds,
    pub buildings: Vec<Building>,
    pub sites: Vec<Point3>,
    pub seed: u64,
}

impl Scene {
    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.sites.is_empty() {
            return Err(SceneError::InvalidConfig("scene has no candidate sites".into()));
        }
        for (k, s) in self.sites.iter().enumerate() {
            if !self.bounds.contains(s.x, s.y) {
                return Err(SceneError::InvalidConfig(format!("site {k} outside bounds")));
            }
            if self
                .buildings
                .iter()
                .any(|b| b.footprint_contains(s.x, s.y) && s.z <= b.height)
            {
                return Err(SceneError::InvalidConfig(format!("site {k} inside a building")));
            }
        }
        if let Some(b) = self.buildings.iter().find(|b| !(b.height > 0.0)) {
            return Err(SceneError::InvalidConfig(format!(
                "building height must be positive, got {}",
                b.height
            )));
        }
        Ok(())
    }
}

/// Knobs for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub bounds: Bounds,
    #[serde(default = "default_building_count")]
    pub building_count: usize,
    #[serde(default = "default_footprint_min")]
    pub footprint_min: f64,
    #[serde(default = "default_footprint_max")]
    pub footprint_max: f64,
    #[serde(default = "default_height_min")]
    pub height_min: f64,
    #[serde(default = "default_height_max")]
    pub height_max: f64,
    /// Minimum clearance between building footprints.
    #[serde(default = "default_building_gap")]
    pub building_gap: f64,
    /// Number of candidate sites (K).
    pub sites: usize,
    #[serde(default = "default_bs_height")]
    pub bs_height: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_building_count() -> usize {
    40
}
fn default_footprint_min() -> f64 {
    15.0
}
fn default_footprint_max() -> f64 {
    45.0
}
fn default_height_min() -> f64 {
    20.0
}
fn default_height_max() -> f64 {
    90.0
}
fn default_building_gap() -> f64 {
    5.0
}
fn default_bs_height() -> f64 {
    25.0
}
fn default_max_attempts() -> usize {
    10_000
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let b = &self.bounds;
        if !(b.x_max > b.x_min && b.y_max > b.y_min) {
            return Err(SceneError::InvalidConfig("scene.bounds is empty".into()));
        }
        if self.sites == 0 {
            return Err(SceneError::InvalidConfig("scene.sites must be at least 1".into()));
        }
        let ranges = [
            ("scene.footprint", self.footprint_min, self.footprint_max),
            ("scene.height", self.height_min, self.height_max),
        ];
        for (name, lo, hi) in ranges {
            if !(lo > 0.0 && hi >= lo) {
                return Err(SceneError::InvalidConfig(format!(
                    "{name} range must be positive and ordered, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.bs_height > 0.0) {
            return Err(SceneError::InvalidConfig("scene.bs_height must be positive".into()));
        }
        if self.building_gap < 0.0 {
            return Err(SceneError::InvalidConfig("scene.building_gap must be >= 0".into()));
        }
        Ok(())
    }
}

/// Deterministic scene: non-overlapping buildings, then sites on free ground.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene, SceneError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let b = config.bounds;

    let mut buildings: Vec<Building> = Vec::with_capacity(config.building_count);
    let mut attempts = 0;
    while buildings.len() < config.building_count {
        if attempts >= config.max_attempts {
            return Err(SceneError::Placement {
                what: "buildings",
                placed: buildings.len(),
                wanted: config.building_count,
                attempts,
            });
        }
        attempts += 1;
        let w = rng.gen_range(config.footprint_min..=config.footprint_max);
        let d = rng.gen_range(config.footprint_min..=config.footprint_max);
        if w >= b.width() || d >= b.height() {
            continue;
        }
        let x = rng.gen_range(b.x_min..=b.x_max - w);
        let y = rng.gen_range(b.y_min..=b.y_max - d);
        let height = rng.gen_range(config.height_min..=config.height_max);
        let candidate = Building {
            x_min: x,
            y_min: y,
            x_max: x + w,
            y_max: y + d,
            height,
        };
        if buildings
            .iter()
            .all(|o| !o.footprint_overlaps(&candidate, config.building_gap))
        {
            buildings.push(candidate);
        }
    }

    let mut sites = Vec::with_capacity(config.sites);
    attempts = 0;
    while sites.len() < config.sites {
        if attempts >= config.max_attempts {
            return Err(SceneError::Placement {
                what: "sites",
                placed: sites.len(),
                wanted: config.sites,
                attempts,
            });
        }
        attempts += 1;
        let x = rng.gen_range(b.x_min..=b.x_max);
        let y = rng.gen_range(b.y_min..=b.y_max);
        if buildings.iter().any(|bd| bd.footprint_contains(x, y)) {
            continue;
        }
        sites.push(Point3::new(x, y, config.bs_height));
    }

    Ok(Scene {
        bounds: b,
        buildings,
        sites,
        seed: config.seed,
    })
}

/// Whether the open segment `from -> to` misses every building.
/// Grazing a face or edge counts as blocked.
pub fn los_visible(from: &Point3, to: &Point3, scene: &Scene) -> bool {
    scene.buildings.iter().all(|b| match b.clip(from, to) {
        Some((t0, t1)) => t1 <= 0.0 || t0 >= 1.0,
        None => true,
    })
}

/// Building faces crossed by the open segment `from -> to`.
pub fn walls_crossed(from: &Point3, to: &Point3, scene: &Scene) -> usize {
    scene
        .buildings
        .iter()
        .filter_map(|b| b.clip(from, to))
        .filter(|&(t0, t1)| !(t1 <= 0.0 || t0 >= 1.0))
        .map(|(t0, t1)| usize::from(t0 > 0.0) + usize::from(t1 < 1.0))
        .sum()
}

/// Free-space gain with a per-wall NLoS penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    pub wavelength: f64,
    /// Fixed NLoS penalty, dB.
    pub nlos_base_db: f64,
    /// Additional penalty per crossed wall, dB.
    pub per_wall_db: f64,
}

impl GainModel {
    pub fn new(wavelength: f64) -> Self {
        Self {
            wavelength,
            nlos_base_db: 20.0,
            per_wall_db: 10.0,
        }
    }

    pub fn free_space(&self, distance: f64) -> f64 {
        (self.wavelength / (4.0 * PI * distance)).powi(2)
    }
}

/// Linear channel power gain between `site` and `point`.
pub fn point_gain(
    site: &Point3,
    point: &Point3,
    scene: &Scene,
    model: &GainModel,
) -> Result<(f64, bool), SceneError> {
    let d = site.distance(point);
    if d == 0.0 {
        return Err(SceneError::ZeroDistance);
    }
    let fs = model.free_space(d);
    if los_visible(site, point, scene) {
        Ok((fs, true))
    } else {
        let walls = walls_crossed(site, point, scene) as f64;
        let penalty_db = model.nlos_base_db + model.per_wall_db * walls;
        Ok((fs * 10f64.powf(-penalty_db / 10.0), false))
    }
}
