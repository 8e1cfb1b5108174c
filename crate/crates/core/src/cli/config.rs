//! Scenario configuration: one JSON file, dB/dBm at the boundary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ckm::{
    build_all_maps, coarse_stats, fine_stats, ChannelMap, LosRule, ReductionParams, SampleLattice,
    StatsGrid,
};
use crate::grid::{CoarseSpec, GridSpec};
use crate::ilp::ExternalSolver;
use crate::metrics::{CostWeights, RadioParams};
use crate::planner::PlanConfig;
use crate::scene::{Bounds, GainModel, Scene, SceneConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Field { path: String, msg: String },
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
}

impl ConfigError {
    pub fn field(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Field {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    /// Edge length of a fine cell, also its height.
    pub cell_size: f64,
    pub altitude: f64,
    #[serde(default)]
    pub origin_x: f64,
    #[serde(default)]
    pub origin_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSection {
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub noise_dbm: f64,
    pub carrier_hz: f64,
    pub rcs_m2: f64,
    pub sense_threshold_dbm: f64,
    pub sinr_threshold_db: f64,
    /// Big-M constant; the per-instance safe bound when absent.
    #[serde(default)]
    pub big_m: Option<f64>,
}

impl RadioSection {
    pub fn params(&self) -> Result<RadioParams, ConfigError> {
        RadioParams::from_db(
            self.tx_power_dbm,
            self.tx_gain_db,
            self.noise_dbm,
            self.carrier_hz,
            self.rcs_m2,
            self.sense_threshold_dbm,
            self.sinr_threshold_db,
            self.big_m,
        )
        .map_err(|e| ConfigError::field("radio", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub nlos_base_db: f64,
    pub per_wall_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            nlos_base_db: 20.0,
            per_wall_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub trim_fraction: f64,
    pub los_rule: LosRule,
    /// Use trimmed extrema on the fine layer too.
    pub fine_trimmed: bool,
    pub max_ao_iterations: usize,
    pub coarse_node_budget: u64,
    pub block_node_budget: u64,
    pub deployment_node_budget: u64,
    pub random_trials_per_size: usize,
    pub corridor_search_budget: u64,
    /// Seed of the random-deployment baseline.
    pub random_seed: u64,
    /// Hand every model to this MILP solver instead of the built-in one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_solver: Option<ExternalSolver>,
    /// Write every assembled model here as MPS.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_dump_dir: Option<PathBuf>,
}

impl Default for PlanSection {
    fn default() -> Self {
        let base = PlanConfig::new(CostWeights::default(), placeholder_radio());
        Self {
            alpha1: 0.5,
            alpha2: 0.5,
            trim_fraction: base.trim_fraction,
            los_rule: LosRule::All,
            fine_trimmed: false,
            max_ao_iterations: base.max_ao_iterations,
            coarse_node_budget: base.coarse_node_budget,
            block_node_budget: base.block_node_budget,
            deployment_node_budget: base.deployment_node_budget,
            random_trials_per_size: base.random_trials_per_size,
            corridor_search_budget: base.corridor_search_budget,
            random_seed: 0,
            external_solver: None,
            model_dump_dir: None,
        }
    }
}

fn placeholder_radio() -> RadioParams {
    RadioParams {
        tx_power: 1.0,
        tx_gain: 2.0,
        noise: 1.0,
        wavelength: 1.0,
        rcs: 1.0,
        sense_threshold: 1.0,
        sinr_threshold: 1.0,
        big_m: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scene: SceneConfig,
    pub grid: GridSection,
    pub coarse: CoarseSection,
    #[serde(default)]
    pub lattice: SampleLattice,
    pub radio: RadioSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub plan: PlanSection,
}

/// Echo-reachable sensing threshold used by the shipped presets. With the
/// corridor 125 m above the masts a single site returns at most about
/// -85 dBm, so a -75 dBm threshold would need ten sites stacked overhead.
pub const DEFAULT_SENSE_THRESHOLD_DBM: f64 = -95.0;
/// Sensing threshold of the small desk scene.
pub const DESK_SENSE_THRESHOLD_DBM: f64 = -100.0;

impl ScenarioConfig {
    /// Full-size setup: 500 m x 500 m, 30 sites, 100x100 cells of 5 m,
    /// 10x10 coarse cells, corridor at 150 m, 1 GHz carrier.
    pub fn full_scale() -> Self {
        Self {
            scene: SceneConfig {
                bounds: Bounds {
                    x_min: 0.0,
                    y_min: 0.0,
                    x_max: 500.0,
                    y_max: 500.0,
                },
                building_count: 40,
                footprint_min: 15.0,
                footprint_max: 45.0,
                height_min: 20.0,
                height_max: 90.0,
                building_gap: 5.0,
                sites: 30,
                bs_height: 25.0,
                seed: 0,
                max_attempts: 10_000,
            },
            grid: GridSection {
                n: 100,
                cell_size: 5.0,
                altitude: 150.0,
                origin_x: 0.0,
                origin_y: 0.0,
            },
            coarse: CoarseSection { m: 10 },
            lattice: SampleLattice::default(),
            radio: RadioSection {
                tx_power_dbm: 30.0,
                tx_gain_db: 12.0,
                noise_dbm: -110.0,
                carrier_hz: 1e9,
                rcs_m2: 1.0,
                sense_threshold_dbm: DEFAULT_SENSE_THRESHOLD_DBM,
                sinr_threshold_db: 3.0,
                big_m: None,
            },
            channel: ChannelSection::default(),
            plan: PlanSection::default(),
        }
    }

    /// Desk-scale variant: 24x24 cells of 20 m, 6x6 coarse, 8 sites.
    pub fn desk(seed: u64) -> Self {
        let mut c = Self::full_scale();
        c.scene.bounds.x_max = 240.0;
        c.scene.bounds.y_max = 240.0;
        c.scene.sites = 8;
        c.scene.building_count = 15;
        c.scene.height_max = 60.0;
        c.scene.seed = seed;
        c.grid.n = 24;
        c.grid.cell_size = 10.0;
        c.radio.sense_threshold_dbm = DESK_SENSE_THRESHOLD_DBM;
        c.coarse.m = 6;
        c.plan.random_seed = seed;
        c
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            // Name the missing field itself rather than its parent.
            if let Some(rest) = inner.strip_prefix("missing field `") {
                let field = rest.split('`').next().unwrap_or_default();
                let full = if path == "." || path.is_empty() {
                    field.to_string()
                } else {
                    format!("{path}.{field}")
                };
                ConfigError::field(full, "missing field")
            } else {
                ConfigError::field(if path.is_empty() { ".".into() } else { path }, inner)
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scene
            .validate()
            .map_err(|e| ConfigError::field("scene", e.to_string()))?;
        self.grid_spec()?;
        self.coarse_spec()?;
        self.lattice
            .validate()
            .map_err(|e| ConfigError::field("lattice", e.to_string()))?;
        self.plan_config()?;
        let ext_x = self.grid.origin_x + self.grid.n as f64 * self.grid.cell_size;
        let ext_y = self.grid.origin_y + self.grid.n as f64 * self.grid.cell_size;
        let b = &self.scene.bounds;
        if self.grid.origin_x < b.x_min || self.grid.origin_y < b.y_min || ext_x > b.x_max + 1e-9 || ext_y > b.y_max + 1e-9 {
            return Err(ConfigError::field("grid", "grid extends outside scene.bounds"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let g = &self.grid;
        GridSpec::new(g.origin_x, g.origin_y, g.altitude, g.n, g.cell_size, g.cell_size, g.cell_size)
            .map_err(|e| ConfigError::field("grid", e.to_string()))
    }

    pub fn coarse_spec(&self) -> Result<CoarseSpec, ConfigError> {
        CoarseSpec::new(&self.grid_spec()?, self.coarse.m).map_err(|e| ConfigError::field("coarse.m", e.to_string()))
    }

    pub fn gain_model(&self) -> Result<GainModel, ConfigError> {
        let radio = self.radio.params()?;
        Ok(GainModel {
            wavelength: radio.wavelength,
            nlos_base_db: self.channel.nlos_base_db,
            per_wall_db: self.channel.per_wall_db,
        })
    }

    pub fn plan_config(&self) -> Result<PlanConfig, ConfigError> {
        let p = &self.plan;
        let weights =
            CostWeights::new(p.alpha1, p.alpha2).map_err(|e| ConfigError::field("plan.alpha1", e.to_string()))?;
        let mut cfg = PlanConfig::new(weights, self.radio.params()?);
        cfg.trim_fraction = p.trim_fraction;
        cfg.max_ao_iterations = p.max_ao_iterations;
        cfg.coarse_node_budget = p.coarse_node_budget;
        cfg.block_node_budget = p.block_node_budget;
        cfg.deployment_node_budget = p.deployment_node_budget;
        cfg.random_trials_per_size = p.random_trials_per_size;
        cfg.corridor_search_budget = p.corridor_search_budget;
        cfg.external_solver = p.external_solver.clone();
        cfg.model_dump_dir = p.model_dump_dir.clone();
        cfg.validate().map_err(|e| ConfigError::field("plan", e.to_string()))?;
        Ok(cfg)
    }
}

/// Everything the planners read, derived from a scene and its channel maps.
#[derive(Debug, Clone)]
pub struct Instance {
    pub grid: GridSpec,
    pub coarse: CoarseSpec,
    pub coarse_stats: StatsGrid,
    pub fine_stats: StatsGrid,
    pub plan: PlanConfig,
}

impl Instance {
    pub fn from_maps(config: &ScenarioConfig, scene: &Scene, maps: &[ChannelMap]) -> Result<Self, ConfigError> {
        let grid = config.grid_spec()?;
        let coarse = config.coarse_spec()?;
        let plan = config.plan_config()?;
        if maps.len() != scene.sites.len() {
            return Err(ConfigError::field(
                "scene.sites",
                format!("{} channel maps for {} sites", maps.len(), scene.sites.len()),
            ));
        }
        let red = ReductionParams {
            trim_fraction: plan.trim_fraction,
            los_rule: config.plan.los_rule,
            radio: &plan.radio,
        };
        let coarse_stats = coarse_stats(maps, scene, &config.lattice, &coarse, &red);
        let fine_red = ReductionParams {
            trim_fraction: if config.plan.fine_trimmed { plan.trim_fraction } else { 0.0 },
            ..red
        };
        let fine_stats = fine_stats(maps, scene, &grid, &config.lattice, &fine_red);
        Ok(Self {
            grid,
            coarse,
            coarse_stats,
            fine_stats,
            plan,
        })
    }

    /// Generates the scene, builds every channel map and reduces them.
    pub fn generate(config: &ScenarioConfig) -> Result<(Scene, Vec<ChannelMap>, Self), ConfigError> {
        let scene = crate::scene::generate_scene(&config.scene).map_err(|e| ConfigError::field("scene", e.to_string()))?;
        let maps = build_all_maps(&scene, &config.grid_spec()?, &config.lattice, &config.gain_model()?)
            .map_err(|e| ConfigError::field("scene", e.to_string()))?;
        let inst = Self::from_maps(config, &scene, &maps)?;
        Ok((scene, maps, inst))
    }
}
