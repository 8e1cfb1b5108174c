//! Result bundle and the file exports derived from it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::ckm::StatsGrid;
use crate::grid::{extract_path, CellIndex, GridSpec};
use crate::metrics::{best_worst_case_sinr, linear_to_db, sensing_power, watts_to_dbm, Deployment, RadioParams};
use crate::planner::{Method, PlanResult, PlanStatus};
use crate::scene::Scene;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wall-clock durations in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    pub plan_ms: f64,
    pub total_ms: f64,
}

/// Digests of the inputs a plan was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub scene_sha256: String,
    pub manifest_sha256: String,
}

/// Per-fine-cell worst-case values under the plan's deployment, row-major
/// with row `i = 1` first. `None` marks cells with no usable signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub side: usize,
    pub sinr_db: Vec<Option<f64>>,
    pub sensing_dbm: Vec<Option<f64>>,
}

impl CellMetrics {
    pub fn compute(stats: &StatsGrid, deployment: &Deployment, radio: &RadioParams) -> Self {
        let side = stats.side;
        let finite = |v: f64| v.is_finite().then_some(v);
        let mut sinr_db = Vec::with_capacity(side * side);
        let mut sensing_dbm = Vec::with_capacity(side * side);
        for o in 0..side * side {
            let st = stats.at(CellIndex::from_offset(o, side));
            sinr_db.push(finite(linear_to_db(best_worst_case_sinr(
                st,
                stats.use_trimmed,
                deployment,
                radio,
            ))));
            sensing_dbm.push(finite(watts_to_dbm(sensing_power(st, stats.use_trimmed, deployment))));
        }
        Self {
            side,
            sinr_db,
            sensing_dbm,
        }
    }
}

/// Everything one `plan` run produced, re-runnable from `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub tool: String,
    pub version: String,
    pub method: Method,
    pub status: PlanStatus,
    pub config: ScenarioConfig,
    pub inputs: InputDigests,
    pub result: PlanResult,
    pub cell_metrics: Option<CellMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl ResultBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportKind {
    CorridorCsv,
    SinrHeatmap,
    SensingHeatmap,
    DeploymentCsv,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("bundle has no {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Corridor cells in walk order with their centre coordinates.
pub fn corridor_csv(bundle: &ResultBundle) -> Result<String, ExportError> {
    let mask = bundle.result.fine_mask.as_ref().ok_or(ExportError::Missing("fine corridor"))?;
    let path = extract_path(mask).map_err(|e| ExportError::Invalid(e.to_string()))?;
    let grid = grid_of(bundle)?;
    let mut out = String::from("step,i,j,x,y,z\n");
    for (t, c) in path.iter().enumerate() {
        let b = grid.cell_region(*c).map_err(|e| ExportError::Invalid(e.to_string()))?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t + 1,
            c.i,
            c.j,
            (b.x_min + b.x_max) / 2.0,
            (b.y_min + b.y_max) / 2.0,
            (b.z_min + b.z_max) / 2.0
        );
    }
    Ok(out)
}

/// One row per candidate site.
pub fn deployment_csv(bundle: &ResultBundle, scene: Option<&Scene>) -> Result<String, ExportError> {
    let dep = bundle.result.deployment.as_ref().ok_or(ExportError::Missing("deployment"))?;
    let mut out = String::from(if scene.is_some() { "site,deployed,x,y,z\n" } else { "site,deployed\n" });
    for k in 0..dep.len() {
        let _ = write!(out, "{},{}", k, u8::from(dep.is_deployed(k)));
        if let Some(s) = scene {
            let p = s.sites.get(k).ok_or_else(|| ExportError::Invalid(format!("scene has no site {k}")))?;
            let _ = write!(out, ",{},{},{}", p.x, p.y, p.z);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Heatmap of `kind` as an N x N CSV (row `i = 1` first) plus the corridor
/// flags as a 0/1 matrix in the same layout.
pub fn heatmap_csv(bundle: &ResultBundle, kind: ExportKind) -> Result<(String, String), ExportError> {
    let (m, values) = heatmap_values(bundle, kind)?;
    let mut out = String::new();
    for i in 1..=m.side {
        let row: Vec<String> = (1..=m.side)
            .map(|j| match values[CellIndex::new(i, j).offset(m.side)] {
                Some(v) => format!("{v:.4}"),
                None => "-inf".to_string(),
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let flags = bundle
        .result
        .fine_mask
        .as_ref()
        .map(|f| f.to_text())
        .unwrap_or_else(|| ("0".repeat(m.side) + "\n").repeat(m.side));
    Ok((out, flags))
}

/// Binary PGM, north at the top, `lo..hi` dB mapped linearly onto 0..255.
pub fn heatmap_pgm(bundle: &ResultBundle, kind: ExportKind, lo: f64, hi: f64) -> Result<Vec<u8>, ExportError> {
    if !(hi > lo) {
        return Err(ExportError::Invalid(format!("empty dB range {lo}..{hi}")));
    }
    let (m, values) = heatmap_values(bundle, kind)?;
    let mut out = format!("P5\n{} {}\n255\n", m.side, m.side).into_bytes();
    for i in (1..=m.side).rev() {
        for j in 1..=m.side {
            let px = match values[CellIndex::new(i, j).offset(m.side)] {
                Some(v) => ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8,
                None => 0,
            };
            out.push(px);
        }
    }
    Ok(out)
}

/// Default dB window of each heatmap kind.
pub fn default_range(kind: ExportKind) -> (f64, f64) {
    match kind {
        ExportKind::SinrHeatmap => (-10.0, 20.0),
        _ => (-120.0, -80.0),
    }
}

fn heatmap_values(bundle: &ResultBundle, kind: ExportKind) -> Result<(&CellMetrics, &[Option<f64>]), ExportError> {
    let m = bundle.cell_metrics.as_ref().ok_or(ExportError::Missing("cell metrics"))?;
    let values = match kind {
        ExportKind::SinrHeatmap => &m.sinr_db,
        ExportKind::SensingHeatmap => &m.sensing_dbm,
        other => return Err(ExportError::Invalid(format!("{other:?} is not a heatmap"))),
    };
    Ok((m, values))
}

fn grid_of(bundle: &ResultBundle) -> Result<GridSpec, ExportError> {
    bundle
        .config
        .grid_spec()
        .map_err(|e| ExportError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CorridorMask;
    use crate::planner::PlanResult;

    fn bundle(side: usize) -> ResultBundle {
        let mut config = ScenarioConfig::desk(0);
        config.grid.n = side;
        config.coarse.m = 2;
        let cells: Vec<CellIndex> = (1..=side)
            .map(|j| CellIndex::new(1, j))
            .chain((2..=side).map(|i| CellIndex::new(i, side)))
            .collect();
        let mut result = PlanResult::empty(Method::Astar);
        result.fine_mask = Some(CorridorMask::from_cells(side, &cells));
        result.deployment = Some(Deployment::from_sites(4, &[1, 3]));
        let n = side * side;
        ResultBundle {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            method: Method::Astar,
            status: PlanStatus::Feasible,
            config,
            inputs: InputDigests {
                scene_sha256: String::new(),
                manifest_sha256: String::new(),
            },
            result,
            cell_metrics: Some(CellMetrics {
                side,
                sinr_db: (0..n).map(|o| Some(o as f64 - 10.0)).collect(),
                sensing_dbm: vec![None; n],
            }),
            timings: None,
        }
    }

    #[test]
    fn heatmap_shapes() {
        let b = bundle(20);
        let (csv, flags) = heatmap_csv(&b, ExportKind::SinrHeatmap).unwrap();
        assert_eq!(csv.lines().count(), 20);
        assert!(csv.lines().all(|l| l.split(',').count() == 20));
        assert_eq!(flags.lines().count(), 20);
        let pgm = heatmap_pgm(&b, ExportKind::SinrHeatmap, -10.0, 20.0).unwrap();
        let header = b"P5\n20 20\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 400);
        // Last image row is i = 1: values -10..9 dB.
        assert_eq!(pgm[header.len() + 380], 0);
        let (sense, _) = heatmap_csv(&b, ExportKind::SensingHeatmap).unwrap();
        assert!(sense.lines().next().unwrap().starts_with("-inf,"));
    }

    #[test]
    fn corridor_rows_follow_the_walk() {
        let b = bundle(20);
        let csv = corridor_csv(&b).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 39);
        assert!(rows[0].starts_with("1,1,1,"));
        assert!(rows[19].starts_with("20,1,20,"));
        assert!(rows[38].starts_with("39,20,20,"));
    }

    #[test]
    fn deployment_rows() {
        let csv = deployment_csv(&bundle(4), None).unwrap();
        assert_eq!(csv, "site,deployed\n0,0\n1,1\n2,0\n3,1\n");
    }

    #[test]
    fn bad_range_and_kind() {
        let b = bundle(4);
        assert!(heatmap_pgm(&b, ExportKind::SinrHeatmap, 1.0, 1.0).is_err());
        assert!(heatmap_csv(&b, ExportKind::CorridorCsv).is_err());
    }
}
