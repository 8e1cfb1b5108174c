//! Pipeline verbs: scene generation, CKM build, planning, export, sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bundle::{
    corridor_csv, default_range, deployment_csv, heatmap_csv, heatmap_pgm, CellMetrics, ExportKind, InputDigests,
    ResultBundle, Timings, TOOL_NAME, TOOL_VERSION,
};
use super::config::{ChannelSection, Instance, ScenarioConfig};
use crate::ckm::{build_all_maps, ChannelMap, SampleLattice};
use crate::grid::GridSpec;
use crate::planner::{baseline_astar, baseline_random, plan_joint, Method, PlanResult, PlanStatus};
use crate::scene::{generate_scene, Scene};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn to_pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

pub fn load_scene(path: &Path) -> Result<(Scene, String)> {
    let bytes = read_file(path)?;
    let scene: Scene =
        serde_json::from_slice(&bytes).with_context(|| format!("{} is not a scene file", path.display()))?;
    scene.validate()?;
    Ok((scene, sha256_hex(&bytes)))
}

/// Generates the configured scene and writes it as JSON.
pub fn cmd_scene_gen(config: &ScenarioConfig, out: &Path) -> Result<Scene> {
    let scene = generate_scene(&config.scene)?;
    write_file(out, to_pretty_json(&scene).as_bytes())?;
    info!(
        "scene with {} buildings and {} sites written to {}",
        scene.buildings.len(),
        scene.sites.len(),
        out.display()
    );
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CkmEntry {
    pub site: usize,
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// What a CKM directory was built from, with per-file digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkmManifest {
    pub tool: String,
    pub version: String,
    pub scene_sha256: String,
    pub grid: GridSpec,
    pub lattice: SampleLattice,
    pub carrier_hz: f64,
    pub channel: ChannelSection,
    pub files: Vec<CkmEntry>,
}

impl CkmManifest {
    /// Errors when `config` would sample a different channel.
    fn check_matches(&self, config: &ScenarioConfig, scene_sha256: &str) -> Result<()> {
        ensure!(
            self.scene_sha256 == scene_sha256,
            "CKM directory was built from a different scene; rebuild it"
        );
        ensure!(
            self.grid == config.grid_spec()?
                && self.lattice == config.lattice
                && self.carrier_hz == config.radio.carrier_hz
                && self.channel == config.channel,
            "CKM directory was built with different grid, lattice or channel settings; rebuild it"
        );
        Ok(())
    }
}

pub fn ckm_file_name(site: usize) -> String {
    format!("site_{site:03}.ckm")
}

/// Builds one CKM file per site plus `manifest.json` in `out_dir`.
pub fn cmd_ckm_build(scene_path: &Path, config: &ScenarioConfig, out_dir: &Path) -> Result<CkmManifest> {
    let (scene, scene_sha256) = load_scene(scene_path)?;
    let grid = config.grid_spec()?;
    let maps = build_all_maps(&scene, &grid, &config.lattice, &config.gain_model()?)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut files = Vec::with_capacity(maps.len());
    for (k, map) in maps.iter().enumerate() {
        let bytes = map.to_bytes();
        let file = ckm_file_name(k);
        write_file(&out_dir.join(&file), &bytes)?;
        files.push(CkmEntry {
            site: k,
            file,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = CkmManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        scene_sha256,
        grid,
        lattice: config.lattice,
        carrier_hz: config.radio.carrier_hz,
        channel: config.channel.clone(),
        files,
    };
    write_file(&out_dir.join(MANIFEST_FILE), to_pretty_json(&manifest).as_bytes())?;
    info!("{} channel maps written to {}", maps.len(), out_dir.display());
    Ok(manifest)
}

/// Reads and checks every map listed in the manifest of `dir`.
pub fn load_ckm_dir(dir: &Path) -> Result<(CkmManifest, String, Vec<ChannelMap>)> {
    let raw = read_file(&dir.join(MANIFEST_FILE))?;
    let manifest: CkmManifest = serde_json::from_slice(&raw).context("malformed CKM manifest")?;
    let mut maps = Vec::with_capacity(manifest.files.len());
    for (k, entry) in manifest.files.iter().enumerate() {
        ensure!(entry.site == k, "manifest lists site {} at position {k}", entry.site);
        let bytes = read_file(&dir.join(&entry.file))?;
        ensure!(
            sha256_hex(&bytes) == entry.sha256,
            "checksum mismatch for {}",
            entry.file
        );
        let map = ChannelMap::read_from(bytes.as_slice()).with_context(|| format!("cannot decode {}", entry.file))?;
        ensure!(map.site_index as usize == k, "{} holds site {}", entry.file, map.site_index);
        maps.push(map);
    }
    Ok((manifest, sha256_hex(&raw), maps))
}

/// Loaded planning inputs.
pub struct Workspace {
    pub config: ScenarioConfig,
    pub scene: Scene,
    pub maps: Vec<ChannelMap>,
    pub instance: Instance,
    pub digests: InputDigests,
    pub load_ms: f64,
}

impl Workspace {
    pub fn load(scene_path: &Path, ckm_dir: &Path, config: ScenarioConfig) -> Result<Self> {
        let t0 = Instant::now();
        let (scene, scene_sha256) = load_scene(scene_path)?;
        let (manifest, manifest_sha256, maps) = load_ckm_dir(ckm_dir)?;
        manifest.check_matches(&config, &scene_sha256)?;
        let instance = Instance::from_maps(&config, &scene, &maps)?;
        Ok(Self {
            config,
            scene,
            maps,
            instance,
            digests: InputDigests {
                scene_sha256,
                manifest_sha256,
            },
            load_ms: t0.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Re-derives the instance after a config change that leaves the
    /// channel maps valid (thresholds, weights, budgets).
    pub fn reconfigure(&mut self, config: ScenarioConfig) -> Result<()> {
        self.instance = Instance::from_maps(&config, &self.scene, &self.maps)?;
        self.config = config;
        Ok(())
    }

    pub fn run(&self, method: Method, seed: u64) -> Result<PlanResult> {
        let inst = &self.instance;
        let r = match method {
            Method::Joint => plan_joint(&inst.coarse_stats, &inst.fine_stats, &inst.coarse, &inst.plan)?,
            Method::Astar => baseline_astar(&inst.fine_stats, &inst.plan)?,
            Method::Random => baseline_random(&inst.fine_stats, &inst.plan, seed)?,
        };
        Ok(r)
    }
}

/// Runs one planner and assembles its bundle.
pub fn cmd_plan(ws: &Workspace, method: Method, with_timings: bool) -> Result<ResultBundle> {
    let t0 = Instant::now();
    let result = ws.run(method, ws.config.plan.random_seed)?;
    let plan_ms = t0.elapsed().as_secs_f64() * 1e3;
    let cell_metrics = result
        .deployment
        .as_ref()
        .map(|d| CellMetrics::compute(&ws.instance.fine_stats, d, &ws.instance.plan.radio));
    info!(
        "{method:?}: {:?}, length {:?}, sites {:?}",
        result.status, result.corridor_length, result.deployed_sites
    );
    Ok(ResultBundle {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        method,
        status: result.status,
        config: ws.config.clone(),
        inputs: ws.digests.clone(),
        result,
        cell_metrics,
        timings: with_timings.then_some(Timings {
            load_ms: ws.load_ms,
            plan_ms,
            total_ms: ws.load_ms + plan_ms,
        }),
    })
}

/// Process exit code for a finished plan.
pub fn exit_code(status: PlanStatus) -> u8 {
    match status {
        PlanStatus::Feasible => 0,
        PlanStatus::Infeasible => 2,
        PlanStatus::BudgetExhausted => 3,
    }
}

/// Writes the export `kind` of `bundle`; returns the files written.
pub fn cmd_export(
    bundle: &ResultBundle,
    kind: ExportKind,
    out: &Path,
    pgm: bool,
    range: Option<(f64, f64)>,
    scene: Option<&Scene>,
) -> Result<Vec<PathBuf>> {
    let mut written = vec![out.to_path_buf()];
    match kind {
        ExportKind::CorridorCsv => write_file(out, corridor_csv(bundle)?.as_bytes())?,
        ExportKind::DeploymentCsv => write_file(out, deployment_csv(bundle, scene)?.as_bytes())?,
        ExportKind::SinrHeatmap | ExportKind::SensingHeatmap => {
            let (csv, flags) = heatmap_csv(bundle, kind)?;
            write_file(out, csv.as_bytes())?;
            let flag_path = out.with_extension("corridor.txt");
            write_file(&flag_path, flags.as_bytes())?;
            written.push(flag_path);
            if pgm {
                let (lo, hi) = range.unwrap_or_else(|| default_range(kind));
                let pgm_path = out.with_extension("pgm");
                write_file(&pgm_path, &heatmap_pgm(bundle, kind, lo, hi)?)?;
                written.push(pgm_path);
            }
        }
    }
    Ok(written)
}

pub fn load_bundle(path: &Path) -> Result<ResultBundle> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ResultBundle::from_json(&text).with_context(|| format!("{} is not a result bundle", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Sensing threshold in dBm.
    Eps1,
    /// SINR threshold in dB.
    Eps2,
}

/// One (threshold, method) cell of a sweep table. Averages are over the
/// feasible runs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub method: Method,
    pub runs: usize,
    pub feasible: usize,
    pub mean_sites: Option<f64>,
    pub mean_length: Option<f64>,
    pub mean_cost: Option<f64>,
}

pub fn apply_threshold(config: &mut ScenarioConfig, param: SweepParam, value: f64) {
    match param {
        SweepParam::Eps1 => config.radio.sense_threshold_dbm = value,
        SweepParam::Eps2 => config.radio.sinr_threshold_db = value,
    }
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?} in range")))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        bail!("range must be start:stop:step, got {spec:?}");
    };
    ensure!(step > 0.0 && stop >= start, "range {spec:?} is empty");
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|t| start + step * t as f64).collect())
}

/// Runs every method at every threshold value. The random baseline runs
/// `realizations` times with consecutive seeds.
pub fn cmd_sweep(
    ws: &mut Workspace,
    param: SweepParam,
    values: &[f64],
    methods: &[Method],
    realizations: usize,
) -> Result<Vec<SweepRow>> {
    ensure!(realizations > 0, "need at least one random realization");
    let base = ws.config.clone();
    let mut rows = Vec::new();
    for &value in values {
        let mut cfg = base.clone();
        apply_threshold(&mut cfg, param, value);
        cfg.validate()?;
        ws.reconfigure(cfg)?;
        for &method in methods {
            let runs = if method == Method::Random { realizations } else { 1 };
            let seed0 = ws.config.plan.random_seed;
            let results: Vec<PlanResult> = (0..runs)
                .into_par_iter()
                .map(|r| ws.run(method, seed0 + r as u64))
                .collect::<Result<_>>()?;
            let ok: Vec<&PlanResult> = results.iter().filter(|r| r.is_feasible()).collect();
            let mean = |f: &dyn Fn(&PlanResult) -> f64| {
                (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            rows.push(SweepRow {
                param,
                value,
                method,
                runs,
                feasible: ok.len(),
                mean_sites: mean(&|r| r.deployed_sites.unwrap_or_default() as f64),
                mean_length: mean(&|r| r.corridor_length.unwrap_or_default() as f64),
                mean_cost: mean(&|r| r.final_cost.unwrap_or_default()),
            });
            info!("{param:?}={value}: {method:?} feasible {}/{runs}", ok.len());
        }
    }
    ws.reconfigure(base)?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
    let mut out = String::from("param,value,method,runs,feasible,mean_sites,mean_length,mean_cost\n");
    for r in rows {
        let param = match r.param {
            SweepParam::Eps1 => "eps1_dbm",
            SweepParam::Eps2 => "eps2_db",
        };
        let method = match r.method {
            Method::Joint => "joint",
            Method::Astar => "astar",
            Method::Random => "random",
        };
        out.push_str(&format!(
            "{param},{},{method},{},{},{},{},{}\n",
            r.value,
            r.runs,
            r.feasible,
            opt(r.mean_sites),
            opt(r.mean_length),
            opt(r.mean_cost)
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}
