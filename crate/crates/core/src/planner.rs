//! Corridor and deployment planning: the coarse joint program, fine-layer
//! alternating optimisation, and the two comparison baselines.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::path::PathBuf;

use log::{debug, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ckm::StatsGrid;
use crate::grid::{
    extract_path, neighbors4, segment_endpoints, validate_corridor, CellIndex, CoarseSpec,
    CorridorMask, GridError, SegmentEndpoints, Side,
};
use crate::ilp::{
    export_mps, solve, solve_external, ExternalSolver, IlpError, IlpModel, LinExpr, Sense,
    SolveOptions, SolveResult, SolveStatus, Var,
};
use crate::metrics::{
    cell_feasible, meets, safe_big_m, solution_cost, verify_solution, CellFeasibility,
    CostWeights, Deployment, RadioParams, VerificationReport, MIN_LOS_SITES,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid plan configuration: {0}")]
    Config(String),
    #[error("Big-M {configured:e} is below the safe bound {required:e} for this instance")]
    BigMTooSmall { configured: f64, required: f64 },
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub weights: CostWeights,
    pub radio: RadioParams,
    pub trim_fraction: f64,
    pub max_ao_iterations: usize,
    pub coarse_node_budget: u64,
    pub block_node_budget: u64,
    pub deployment_node_budget: u64,
    /// Deployments sampled per size by the random baseline.
    pub random_trials_per_size: usize,
    /// Search-node budget of one shortest-corridor query.
    pub corridor_search_budget: u64,
    /// Hand every model to this solver instead of the built-in one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_solver: Option<ExternalSolver>,
    /// Write every assembled model here as MPS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_dump_dir: Option<PathBuf>,
}

impl PlanConfig {
    pub fn new(weights: CostWeights, radio: RadioParams) -> Self {
        Self {
            weights,
            radio,
            trim_fraction: 0.10,
            max_ao_iterations: 10,
            coarse_node_budget: 2_000_000,
            block_node_budget: 200_000,
            deployment_node_budget: 2_000_000,
            random_trials_per_size: 50,
            corridor_search_budget: 2_000_000,
            external_solver: None,
            model_dump_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        self.radio
            .validate()
            .map_err(|e| PlanError::Config(e.to_string()))?;
        CostWeights::new(self.weights.alpha1, self.weights.alpha2)
            .map_err(|e| PlanError::Config(e.to_string()))?;
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(PlanError::Config(format!(
                "trim_fraction must lie in [0, 0.5), got {}",
                self.trim_fraction
            )));
        }
        if self.max_ao_iterations == 0 {
            return Err(PlanError::Config("max_ao_iterations must be at least 1".into()));
        }
        let budgets = [
            ("coarse_node_budget", self.coarse_node_budget),
            ("block_node_budget", self.block_node_budget),
            ("deployment_node_budget", self.deployment_node_budget),
            ("random_trials_per_size", self.random_trials_per_size as u64),
            ("corridor_search_budget", self.corridor_search_budget),
        ];
        for (name, b) in budgets {
            if b == 0 {
                return Err(PlanError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Big-M for `stats`: the configured value when it is safe, otherwise the
/// instance's safe bound.
pub fn resolve_big_m(stats: &StatsGrid, radio: &RadioParams) -> Result<f64, PlanError> {
    let required = safe_big_m(stats, radio);
    match radio.big_m {
        Some(z) if z < required * (1.0 - 1e-12) => {
            warn!("configured Big-M {z:e} is unsafe here (needs at least {required:e})");
            Err(PlanError::BigMTooSmall {
                configured: z,
                required,
            })
        }
        Some(z) => Ok(z),
        None => Ok(required.max(f64::MIN_POSITIVE)),
    }
}

fn dump_model(config: &PlanConfig, model: &IlpModel) {
    if let Some(dir) = &config.model_dump_dir {
        let path = dir.join(format!("{}.mps", model.name));
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, export_mps(model))) {
            warn!("could not dump {}: {e}", path.display());
        }
    }
}

fn run_model(model: &IlpModel, budget: u64, config: &PlanConfig) -> Result<SolveResult, PlanError> {
    dump_model(config, model);
    match &config.external_solver {
        Some(ext) => {
            let dir = tempfile_dir(&model.name)?;
            let r = solve_external(model, ext, &dir);
            let _ = std::fs::remove_dir_all(&dir);
            Ok(r?)
        }
        None => Ok(solve(model, SolveOptions::with_budget(budget))),
    }
}

fn tempfile_dir(name: &str) -> Result<PathBuf, PlanError> {
    let dir = std::env::temp_dir().join(format!("aircorridor-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(IlpError::from)?;
    Ok(dir)
}

/// Record of one solver call, kept for the result bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemRecord {
    pub name: String,
    pub status: SolveStatus,
    pub nodes: u64,
    pub objective: Option<f64>,
}

impl SubproblemRecord {
    fn from_result(name: impl Into<String>, r: &SolveResult) -> Self {
        Self {
            name: name.into(),
            status: r.status,
            nodes: r.nodes,
            objective: r.objective,
        }
    }
}

/// The coarse joint program with its variable families.
#[derive(Debug, Clone)]
pub struct P2Model {
    pub model: IlpModel,
    pub side: usize,
    pub sites: usize,
    pub big_m: f64,
    /// Corridor indicators, row-major.
    pub b: Vec<Var>,
    pub delta: Vec<Var>,
    /// SINR indicators, indexed `k * side^2 + cell offset`.
    pub z: Vec<Var>,
    /// Products `B * delta`, same indexing as `z`.
    pub w: Vec<Var>,
}

impl P2Model {
    pub fn z(&self, k: usize, cell: CellIndex) -> Var {
        self.z[k * self.side * self.side + cell.offset(self.side)]
    }

    pub fn w(&self, k: usize, cell: CellIndex) -> Var {
        self.w[k * self.side * self.side + cell.offset(self.side)]
    }

    pub fn b(&self, cell: CellIndex) -> Var {
        self.b[cell.offset(self.side)]
    }
}

fn add_corridor_rows(
    model: &mut IlpModel,
    side: usize,
    var: impl Fn(CellIndex) -> Var,
    departure: CellIndex,
    destination: CellIndex,
) -> Result<(), PlanError> {
    for o in 0..side * side {
        let c = CellIndex::from_offset(o, side);
        let nbrs = LinExpr::sum(neighbors4(c, side).into_iter().map(&var));
        if c == departure || c == destination {
            if departure != destination {
                model.add_constraint(format!("link_lo_{}_{}", c.i, c.j), nbrs.clone(), Sense::Ge, 1.0)?;
            }
        } else {
            let mut lo = nbrs.clone();
            lo.push(var(c), -2.0);
            model.add_constraint(format!("link_lo_{}_{}", c.i, c.j), lo, Sense::Ge, 0.0)?;
        }
        model.add_constraint(format!("link_hi_{}_{}", c.i, c.j), nbrs, Sense::Le, 2.0)?;
    }
    for i in 1..=side {
        let row = LinExpr::sum((1..=side).map(|j| var(CellIndex::new(i, j))));
        model.add_constraint(format!("row_{i}"), row, Sense::Ge, 1.0)?;
    }
    for j in 1..=side {
        let col = LinExpr::sum((1..=side).map(|i| var(CellIndex::new(i, j))));
        model.add_constraint(format!("col_{j}"), col, Sense::Ge, 1.0)?;
    }
    for (tag, a) in [("depart", departure), ("arrive", destination)] {
        model.add_constraint(tag, LinExpr::new().term(var(a), 1.0), Sense::Eq, 1.0)?;
    }
    Ok(())
}

/// Coarse joint program over `stats` (one entry per coarse cell and site).
///
/// Besides the corridor, radio and linearisation rows it carries the valid
/// length cut `sum B >= 2M - 1`, which every admissible corridor satisfies.
pub fn build_p2(stats: &StatsGrid, config: &PlanConfig) -> Result<P2Model, PlanError> {
    let m = stats.side;
    let kk = stats.sites;
    let radio = &config.radio;
    let big_m = resolve_big_m(stats, radio)?;
    let trimmed = stats.use_trimmed;
    let mut model = IlpModel::new("p2");
    let cells: Vec<CellIndex> = (0..m * m).map(|o| CellIndex::from_offset(o, m)).collect();
    let b: Vec<Var> = cells
        .iter()
        .map(|c| model.add_binary(format!("B_{}_{}", c.i, c.j)))
        .collect::<Result<_, _>>()?;
    let delta: Vec<Var> = (1..=kk)
        .map(|k| model.add_binary(format!("delta_{k}")))
        .collect::<Result<_, _>>()?;
    let mut z = Vec::with_capacity(kk * m * m);
    for k in 1..=kk {
        for c in &cells {
            z.push(model.add_binary(format!("z_{k}_{}_{}", c.i, c.j))?);
        }
    }
    let mut w = Vec::with_capacity(kk * m * m);
    for k in 1..=kk {
        for c in &cells {
            w.push(model.add_binary(format!("w_{k}_{}_{}", c.i, c.j))?);
        }
    }
    let bv = |c: CellIndex| b[c.offset(m)];
    add_corridor_rows(&mut model, m, bv, CellIndex::new(1, 1), CellIndex::new(m, m))?;
    model.add_constraint("length_cut", LinExpr::sum(b.iter().copied()), Sense::Ge, (2 * m - 1) as f64)?;

    let eps1 = radio.sense_threshold;
    let eps2 = radio.sinr_threshold;
    for c in &cells {
        let o = c.offset(m);
        let site_stats = stats.at(*c);
        let tag = format!("{}_{}", c.i, c.j);
        // Sensing and LoS coverage.
        let mut sense: LinExpr = (0..kk).map(|k| (delta[k], site_stats[k].echo(trimmed))).collect();
        sense.push(b[o], -eps1);
        model.add_constraint(format!("sense_{tag}"), sense, Sense::Ge, 0.0)?;
        let mut los: LinExpr = (0..kk)
            .filter(|&k| site_stats[k].los_indicator(trimmed))
            .map(|k| (delta[k], 1.0))
            .collect();
        los.push(b[o], -(MIN_LOS_SITES as f64));
        model.add_constraint(format!("los_{tag}"), los, Sense::Ge, 0.0)?;
        // At least one satisfied site per active cell.
        let mut any: LinExpr = (0..kk).map(|k| (z[k * m * m + o], 1.0)).collect();
        any.push(b[o], -1.0);
        model.add_constraint(format!("zcover_{tag}"), any, Sense::Ge, 0.0)?;
        for k in 0..kk {
            let zk = z[k * m * m + o];
            let wk = w[k * m * m + o];
            let kt = format!("{}_{tag}", k + 1);
            model.add_constraint(
                format!("zsite_{kt}"),
                LinExpr::new().term(zk, 1.0).term(delta[k], -1.0),
                Sense::Le,
                0.0,
            )?;
            // zeta*z + eps2*(P*sum_{k'!=k} hmax*w + sigma^2*B) - P*G*hmin*delta <= zeta
            let mut row = LinExpr::new().term(zk, big_m);
            for (k2, st) in site_stats.iter().enumerate() {
                if k2 != k {
                    row.push(w[k2 * m * m + o], eps2 * radio.tx_power * st.interfering_gain(trimmed));
                }
            }
            row.push(b[o], eps2 * radio.noise);
            row.push(
                delta[k],
                -radio.tx_power * radio.tx_gain * site_stats[k].serving_gain(trimmed),
            );
            model.add_constraint(format!("sinr_{kt}"), row, Sense::Le, big_m)?;
            // McCormick envelope of w = B * delta.
            model.add_constraint(
                format!("mc1_{kt}"),
                LinExpr::new().term(wk, 1.0).term(b[o], -1.0),
                Sense::Le,
                0.0,
            )?;
            model.add_constraint(
                format!("mc2_{kt}"),
                LinExpr::new().term(wk, 1.0).term(delta[k], -1.0),
                Sense::Le,
                0.0,
            )?;
            model.add_constraint(
                format!("mc3_{kt}"),
                LinExpr::new().term(wk, 1.0).term(b[o], -1.0).term(delta[k], -1.0),
                Sense::Ge,
                -1.0,
            )?;
            model.add_constraint(format!("mc4_{kt}"), LinExpr::new().term(wk, 1.0), Sense::Ge, 0.0)?;
        }
    }
    let mut obj: LinExpr = b.iter().map(|&v| (v, config.weights.alpha1)).collect();
    for &d in &delta {
        obj.push(d, config.weights.alpha2);
    }
    model.set_objective(obj)?;
    Ok(P2Model {
        model,
        side: m,
        sites: kk,
        big_m,
        b,
        delta,
        z,
        w,
    })
}

/// Reduces a valid mask to the simple path between its anchors, dropping
/// detached cycles. `None` when no such path exists.
pub fn path_component(mask: &CorridorMask) -> Option<CorridorMask> {
    let side = mask.side();
    let start = mask.departure;
    let goal = mask.destination;
    if !mask.get(start) || !mask.get(goal) {
        return None;
    }
    let mut prev: Option<CellIndex> = None;
    let mut cur = start;
    let mut cells = vec![start];
    while cur != goal {
        let next: Vec<CellIndex> = neighbors4(cur, side)
            .into_iter()
            .filter(|n| mask.get(*n) && Some(*n) != prev)
            .collect();
        if next.len() != 1 || cells.len() > mask.count() {
            return None;
        }
        prev = Some(cur);
        cur = next[0];
        cells.push(cur);
    }
    let mut out = CorridorMask::from_cells(side, &cells);
    out.departure = start;
    out.destination = goal;
    extract_path(&out).ok().map(|_| out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSolution {
    pub status: SolveStatus,
    pub mask: Option<CorridorMask>,
    pub deployment: Option<Deployment>,
    pub objective: Option<f64>,
    pub record: SubproblemRecord,
}

/// Solves the coarse joint program.
pub fn solve_coarse(stats: &StatsGrid, config: &PlanConfig) -> Result<CoarseSolution, PlanError> {
    let p2 = build_p2(stats, config)?;
    let r = run_model(&p2.model, config.coarse_node_budget, config)?;
    let record = SubproblemRecord::from_result("p2", &r);
    debug!("coarse solve: {:?} after {} nodes", r.status, r.nodes);
    let Some(assign) = &r.assignment else {
        return Ok(CoarseSolution {
            status: r.status,
            mask: None,
            deployment: None,
            objective: None,
            record,
        });
    };
    let m = p2.side;
    let active: Vec<CellIndex> = (0..m * m)
        .filter(|&o| assign[p2.b[o].0])
        .map(|o| CellIndex::from_offset(o, m))
        .collect();
    let raw = CorridorMask::from_cells(m, &active);
    let mask = path_component(&raw)
        .ok_or_else(|| GridError::NotASimplePath("coarse solution has no anchor-to-anchor path".into()))?;
    let sites: Vec<usize> = (0..p2.sites).filter(|&k| assign[p2.delta[k].0]).collect();
    let deployment = Deployment::from_sites(p2.sites, &sites);
    let objective = Some(solution_cost(&mask, &deployment, &config.weights));
    Ok(CoarseSolution {
        status: r.status,
        mask: Some(mask),
        deployment: Some(deployment),
        objective,
        record,
    })
}

/// Per-cell predicate outcomes under a fixed deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityGrid {
    pub side: usize,
    pub cells: Vec<CellFeasibility>,
}

impl FeasibilityGrid {
    pub fn ok(&self, cell: CellIndex) -> bool {
        self.cells[cell.offset(self.side)].all()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.all()).collect()
    }
}

pub fn feasible_cell_mask(deployment: &Deployment, stats: &StatsGrid, radio: &RadioParams) -> FeasibilityGrid {
    let side = stats.side;
    let cells = (0..side * side)
        .into_par_iter()
        .map(|o| cell_feasible(stats.at(CellIndex::from_offset(o, side)), stats.use_trimmed, deployment, radio))
        .collect();
    FeasibilityGrid { side, cells }
}

/// One block's corridor subproblem, with local row-major variables.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub model: IlpModel,
    pub block: CellIndex,
    pub endpoints: SegmentEndpoints,
    pub factor: usize,
    pub vars: Vec<Var>,
}

impl BlockModel {
    pub fn local(&self, c: CellIndex) -> Var {
        self.vars[c.offset(self.factor)]
    }
}

/// Corridor subproblem for coarse block `block`.
///
/// Beyond the neighbour band, interval coverage and endpoint rows, cells on
/// the edges shared with the neighbouring path blocks are closed except for
/// the start/destination midpoints, and start/destination take exactly one
/// in-block neighbour. Together these keep the stitched fine corridor valid
/// across block boundaries.
pub fn build_p3_1(
    block: CellIndex,
    endpoints: SegmentEndpoints,
    feas: &FeasibilityGrid,
    coarse: &CoarseSpec,
) -> Result<BlockModel, PlanError> {
    let f = coarse.factor;
    let mut model = IlpModel::new(format!("p3_1_{}_{}", block.i, block.j));
    let mut vars = Vec::with_capacity(f * f);
    for o in 0..f * f {
        let g = coarse.to_global(block, CellIndex::from_offset(o, f));
        vars.push(model.add_binary(format!("A_{}_{}", g.i, g.j))?);
    }
    let var = |c: CellIndex| vars[c.offset(f)];
    let (s, d) = (endpoints.start, endpoints.dest);
    for o in 0..f * f {
        let c = CellIndex::from_offset(o, f);
        let tag = format!("{}_{}", c.i, c.j);
        let nbrs = LinExpr::sum(neighbors4(c, f).into_iter().map(var));
        if s != d && (c == s || c == d) {
            model.add_constraint(format!("link_end_{tag}"), nbrs.clone(), Sense::Eq, 1.0)?;
        } else if c != s {
            let mut lo = nbrs.clone();
            lo.push(var(c), -2.0);
            model.add_constraint(format!("link_lo_{tag}"), lo, Sense::Ge, 0.0)?;
        }
        model.add_constraint(format!("link_hi_{tag}"), nbrs, Sense::Le, 2.0)?;
        let shared_edge = [endpoints.entry, endpoints.exit]
            .into_iter()
            .flatten()
            .any(|side: Side| side.contains(c, f));
        let closed = !feas.ok(coarse.to_global(block, c)) || (shared_edge && c != s && c != d);
        if closed {
            model.add_constraint(format!("closed_{tag}"), LinExpr::new().term(var(c), 1.0), Sense::Le, 0.0)?;
        }
    }
    for i in s.i.min(d.i)..=s.i.max(d.i) {
        let row = LinExpr::sum((1..=f).map(|j| var(CellIndex::new(i, j))));
        model.add_constraint(format!("row_{i}"), row, Sense::Ge, 1.0)?;
    }
    for j in s.j.min(d.j)..=s.j.max(d.j) {
        let col = LinExpr::sum((1..=f).map(|i| var(CellIndex::new(i, j))));
        model.add_constraint(format!("col_{j}"), col, Sense::Ge, 1.0)?;
    }
    model.add_constraint("start", LinExpr::new().term(var(s), 1.0), Sense::Eq, 1.0)?;
    model.add_constraint("dest", LinExpr::new().term(var(d), 1.0), Sense::Eq, 1.0)?;
    model.add_constraint(
        "length_cut",
        LinExpr::sum(vars.iter().copied()),
        Sense::Ge,
        (s.manhattan(d) + 1) as f64,
    )?;
    model.set_objective(LinExpr::sum(vars.iter().copied()))?;
    Ok(BlockModel {
        model,
        block,
        endpoints,
        factor: f,
        vars,
    })
}

/// Local sub-path cells (start to dest) from a block assignment, dropping
/// detached cycles.
fn block_path(bm: &BlockModel, assign: &[bool]) -> Option<Vec<CellIndex>> {
    let f = bm.factor;
    let active: Vec<CellIndex> = (0..f * f)
        .filter(|&o| assign[bm.vars[o].0])
        .map(|o| CellIndex::from_offset(o, f))
        .collect();
    let mut mask = CorridorMask::from_cells(f, &active);
    mask.departure = bm.endpoints.start;
    mask.destination = bm.endpoints.dest;
    let path = path_component(&mask)?;
    extract_path(&path).ok()
}

/// Deployment subproblem for a fixed corridor.
#[derive(Debug, Clone)]
pub struct DeployModel {
    pub model: IlpModel,
    pub delta: Vec<Var>,
}

/// Deployment program over the active cells of `mask`.
///
/// SINR indicators are only created for sites that could reach the SINR
/// threshold at the cell even without interference; the others would be
/// forced to zero anyway.
pub fn build_p3_2(mask: &CorridorMask, stats: &StatsGrid, config: &PlanConfig) -> Result<DeployModel, PlanError> {
    let kk = stats.sites;
    let radio = &config.radio;
    let big_m = resolve_big_m(stats, radio)?;
    let trimmed = stats.use_trimmed;
    let eps2 = radio.sinr_threshold;
    let mut model = IlpModel::new("p3_2");
    let delta: Vec<Var> = (1..=kk)
        .map(|k| model.add_binary(format!("delta_{k}")))
        .collect::<Result<_, _>>()?;
    for c in mask.active_cells() {
        let site_stats = stats.at(c);
        let tag = format!("{}_{}", c.i, c.j);
        let sense: LinExpr = (0..kk).map(|k| (delta[k], site_stats[k].echo(trimmed))).collect();
        model.add_constraint(format!("sense_{tag}"), sense, Sense::Ge, radio.sense_threshold)?;
        let los: LinExpr = (0..kk)
            .filter(|&k| site_stats[k].los_indicator(trimmed))
            .map(|k| (delta[k], 1.0))
            .collect();
        model.add_constraint(format!("los_{tag}"), los, Sense::Ge, MIN_LOS_SITES as f64)?;
        let mut any = LinExpr::new();
        for k in 0..kk {
            let signal = radio.tx_power * radio.tx_gain * site_stats[k].serving_gain(trimmed);
            if !meets(signal / radio.noise, eps2) {
                continue;
            }
            let zk = model.add_binary(format!("z_{}_{tag}", k + 1))?;
            any.push(zk, 1.0);
            model.add_constraint(
                format!("zsite_{}_{tag}", k + 1),
                LinExpr::new().term(zk, 1.0).term(delta[k], -1.0),
                Sense::Le,
                0.0,
            )?;
            let mut row = LinExpr::new().term(zk, big_m);
            for (k2, st) in site_stats.iter().enumerate() {
                if k2 != k {
                    row.push(delta[k2], eps2 * radio.tx_power * st.interfering_gain(trimmed));
                }
            }
            row.push(delta[k], -signal);
            model.add_constraint(format!("sinr_{}_{tag}", k + 1), row, Sense::Le, big_m - eps2 * radio.noise)?;
        }
        model.add_constraint(format!("zcover_{tag}"), any, Sense::Ge, 1.0)?;
    }
    model.set_objective(LinExpr::sum(delta.iter().copied()))?;
    Ok(DeployModel { model, delta })
}

fn solve_deployment(
    mask: &CorridorMask,
    stats: &StatsGrid,
    config: &PlanConfig,
) -> Result<(Option<Deployment>, SubproblemRecord), PlanError> {
    let dm = build_p3_2(mask, stats, config)?;
    let r = run_model(&dm.model, config.deployment_node_budget, config)?;
    let record = SubproblemRecord::from_result("p3_2", &r);
    let dep = r.assignment.as_ref().map(|a| {
        let sites: Vec<usize> = (0..dm.delta.len()).filter(|&k| a[dm.delta[k].0]).collect();
        Deployment::from_sites(dm.delta.len(), &sites)
    });
    Ok((dep, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Feasible,
    Infeasible,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Joint,
    Astar,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub method: Method,
    pub status: PlanStatus,
    /// Why the plan is not feasible, when it is not.
    pub failure: Option<String>,
    pub coarse_mask: Option<CorridorMask>,
    pub coarse_deployment: Option<Deployment>,
    pub fine_mask: Option<CorridorMask>,
    pub deployment: Option<Deployment>,
    /// Total cost after every half-step (joint) or once (baselines).
    pub cost_history: Vec<f64>,
    pub final_cost: Option<f64>,
    pub corridor_length: Option<usize>,
    pub deployed_sites: Option<usize>,
    pub iterations: usize,
    pub subproblems: Vec<SubproblemRecord>,
    pub verification: Option<VerificationReport>,
}

impl PlanResult {
    pub fn empty(method: Method) -> Self {
        Self {
            method,
            status: PlanStatus::Infeasible,
            failure: None,
            coarse_mask: None,
            coarse_deployment: None,
            fine_mask: None,
            deployment: None,
            cost_history: Vec::new(),
            final_cost: None,
            corridor_length: None,
            deployed_sites: None,
            iterations: 0,
            subproblems: Vec::new(),
            verification: None,
        }
    }

    fn fail(mut self, why: impl Into<String>) -> Self {
        self.status = if self.budget_hit() {
            PlanStatus::BudgetExhausted
        } else {
            PlanStatus::Infeasible
        };
        self.failure = Some(why.into());
        self
    }

    fn budget_hit(&self) -> bool {
        self.subproblems
            .iter()
            .any(|s| s.status == SolveStatus::BudgetExhausted)
    }

    /// Fills the final fields and runs the verifier.
    fn finish(
        mut self,
        mask: CorridorMask,
        deployment: Deployment,
        stats: &StatsGrid,
        config: &PlanConfig,
    ) -> Self {
        let report = verify_solution(&mask, &deployment, stats, &config.radio);
        self.final_cost = Some(solution_cost(&mask, &deployment, &config.weights));
        self.corridor_length = Some(mask.count());
        self.deployed_sites = Some(deployment.count());
        self.status = if !report.ok {
            self.failure = Some("final plan failed verification".into());
            PlanStatus::Infeasible
        } else if self.budget_hit() {
            PlanStatus::BudgetExhausted
        } else {
            PlanStatus::Feasible
        };
        self.fine_mask = Some(mask);
        self.deployment = Some(deployment);
        self.verification = Some(report);
        self
    }

    pub fn is_feasible(&self) -> bool {
        self.verification.as_ref().is_some_and(|v| v.ok)
    }
}

/// Outcome of one block solve: global sub-path cells, or `None`.
struct BlockOutcome {
    cells: Option<Vec<CellIndex>>,
    record: SubproblemRecord,
}

fn solve_block(
    block: CellIndex,
    coarse_path: &[CellIndex],
    feas: &FeasibilityGrid,
    coarse: &CoarseSpec,
    config: &PlanConfig,
) -> Result<BlockOutcome, PlanError> {
    let ends = segment_endpoints(coarse_path, block, coarse.factor)?;
    let bm = build_p3_1(block, ends, feas, coarse)?;
    let r = run_model(&bm.model, config.block_node_budget, config)?;
    let cells = r
        .assignment
        .as_ref()
        .and_then(|a| block_path(&bm, a))
        .map(|local| local.into_iter().map(|c| coarse.to_global(block, c)).collect());
    Ok(BlockOutcome {
        cells,
        record: SubproblemRecord::from_result(bm.model.name.clone(), &r),
    })
}

fn assemble(side: usize, blocks: &[Vec<CellIndex>]) -> CorridorMask {
    let cells: Vec<CellIndex> = blocks.iter().flatten().copied().collect();
    CorridorMask::from_cells(side, &cells)
}

/// Fine-layer alternating optimisation seeded with a coarse solution.
///
/// Each round re-solves every block for the shortest sub-path under the
/// current deployment (keeping the previous sub-path where a block fails or
/// gets longer), then re-optimises the deployment on the stitched corridor,
/// accepting it only when the total cost does not rise.
pub fn alternate_optimize(
    coarse_solution: &CoarseSolution,
    coarse: &CoarseSpec,
    fine: &StatsGrid,
    config: &PlanConfig,
) -> Result<PlanResult, PlanError> {
    let mut result = PlanResult::empty(Method::Joint);
    result.coarse_mask = coarse_solution.mask.clone();
    result.coarse_deployment = coarse_solution.deployment.clone();
    result.subproblems.push(coarse_solution.record.clone());
    let (Some(cmask), Some(cdep)) = (&coarse_solution.mask, &coarse_solution.deployment) else {
        return Ok(result.fail("coarse problem has no solution"));
    };
    let coarse_path = extract_path(cmask)?;
    let n = coarse.m * coarse.factor;
    let mut deployment = cdep.clone();
    let mut blocks: Vec<Option<Vec<CellIndex>>> = vec![None; coarse_path.len()];
    let mut current: Option<CorridorMask> = None;

    for it in 1..=config.max_ao_iterations {
        result.iterations = it;
        let feas = feasible_cell_mask(&deployment, fine, &config.radio);
        let outcomes: Vec<Result<BlockOutcome, PlanError>> = coarse_path
            .par_iter()
            .map(|&b| solve_block(b, &coarse_path, &feas, coarse, config))
            .collect();
        let mut failed = Vec::new();
        for (t, outcome) in outcomes.into_iter().enumerate() {
            let outcome = outcome?;
            result.subproblems.push(outcome.record);
            match (outcome.cells, &blocks[t]) {
                (Some(new), Some(old)) if new.len() > old.len() => {}
                (Some(new), _) => blocks[t] = Some(new),
                (None, Some(_)) => {}
                (None, None) => failed.push(coarse_path[t]),
            }
        }
        if !failed.is_empty() {
            let list: Vec<String> = failed.iter().map(|c| c.to_string()).collect();
            return Ok(result.fail(format!(
                "no feasible fine sub-path in coarse cells {} under the coarse deployment",
                list.join(", ")
            )));
        }
        let stitched: Vec<Vec<CellIndex>> = blocks.iter().map(|b| b.clone().expect("filled above")).collect();
        let mask = assemble(n, &stitched);
        debug_assert!(validate_corridor(&mask).ok);
        let path_cost = solution_cost(&mask, &deployment, &config.weights);
        result.cost_history.push(path_cost);

        let (candidate, record) = solve_deployment(&mask, fine, config)?;
        result.subproblems.push(record);
        let next = match candidate {
            Some(d) if solution_cost(&mask, &d, &config.weights) <= path_cost => d,
            _ => deployment.clone(),
        };
        result
            .cost_history
            .push(solution_cost(&mask, &next, &config.weights));
        let converged = current.as_ref() == Some(&mask) && next == deployment;
        deployment = next;
        current = Some(mask);
        if converged {
            break;
        }
    }
    let mask = current.expect("at least one iteration ran");
    Ok(result.finish(mask, deployment, fine, config))
}

/// Coarse solve followed by fine-layer alternating optimisation.
pub fn plan_joint(
    coarse_stats: &StatsGrid,
    fine_stats: &StatsGrid,
    coarse: &CoarseSpec,
    config: &PlanConfig,
) -> Result<PlanResult, PlanError> {
    config.validate()?;
    let cs = solve_coarse(coarse_stats, config)?;
    alternate_optimize(&cs, coarse, fine_stats, config)
}

/// Shortest 4-connected path between opposite corners of an open grid.
pub fn astar_path(side: usize) -> Vec<CellIndex> {
    let start = CellIndex::new(1, 1);
    let goal = CellIndex::new(side, side);
    let h = |c: CellIndex| c.manhattan(goal);
    let mut g = vec![usize::MAX; side * side];
    let mut parent: Vec<Option<CellIndex>> = vec![None; side * side];
    let mut open = BinaryHeap::new();
    g[start.offset(side)] = 0;
    // Ties broken toward deeper nodes, then lower row-major offset.
    open.push(Reverse((h(start), Reverse(0usize), start.offset(side))));
    while let Some(Reverse((_, Reverse(gc), o))) = open.pop() {
        let c = CellIndex::from_offset(o, side);
        if gc > g[o] {
            continue;
        }
        if c == goal {
            break;
        }
        for nb in neighbors4(c, side) {
            let no = nb.offset(side);
            if gc + 1 < g[no] {
                g[no] = gc + 1;
                parent[no] = Some(c);
                open.push(Reverse((gc + 1 + h(nb), Reverse(gc + 1), no)));
            }
        }
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[cur.offset(side)] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    path
}

/// Shortest-path baseline: an obstacle-free A* corridor, then the optimal
/// deployment for it.
pub fn baseline_astar(fine: &StatsGrid, config: &PlanConfig) -> Result<PlanResult, PlanError> {
    config.validate()?;
    let mut result = PlanResult::empty(Method::Astar);
    let path = astar_path(fine.side);
    let mask = CorridorMask::from_cells(fine.side, &path);
    let (dep, record) = solve_deployment(&mask, fine, config)?;
    result.subproblems.push(record);
    result.iterations = 1;
    match dep {
        Some(d) => {
            result.cost_history.push(solution_cost(&mask, &d, &config.weights));
            Ok(result.finish(mask, d, fine, config))
        }
        None => {
            result.fine_mask = Some(mask);
            Ok(result.fail("no deployment covers the shortest path"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorridorSearch {
    Found,
    NoPath,
    BudgetExhausted,
}

/// Shortest valid corridor from `(1,1)` to `(side,side)` through the open
/// cells of `open` (row-major).
///
/// Iterative-deepening depth-first search with the obstacle-aware BFS
/// distance as heuristic; every extension keeps the partial corridor
/// chordless and every cell at two or fewer active neighbours.
pub fn shortest_valid_corridor(
    open: &[bool],
    side: usize,
    budget: u64,
) -> (CorridorSearch, Option<Vec<CellIndex>>) {
    let start = CellIndex::new(1, 1);
    let goal = CellIndex::new(side, side);
    if !open[start.offset(side)] || !open[goal.offset(side)] {
        return (CorridorSearch::NoPath, None);
    }
    // Plain BFS distance to the goal over open cells.
    let mut dist = vec![usize::MAX; side * side];
    let mut q = VecDeque::new();
    dist[goal.offset(side)] = 0;
    q.push_back(goal);
    while let Some(c) = q.pop_front() {
        let dc = dist[c.offset(side)];
        for nb in neighbors4(c, side) {
            let o = nb.offset(side);
            if open[o] && dist[o] == usize::MAX {
                dist[o] = dc + 1;
                q.push_back(nb);
            }
        }
    }
    if dist[start.offset(side)] == usize::MAX {
        return (CorridorSearch::NoPath, None);
    }

    struct Dfs<'a> {
        side: usize,
        open: &'a [bool],
        dist: &'a [usize],
        goal: CellIndex,
        active: Vec<bool>,
        count: Vec<u8>,
        path: Vec<CellIndex>,
        nodes: u64,
        budget: u64,
        next_bound: usize,
    }

    impl Dfs<'_> {
        fn can_extend(&self, nb: CellIndex, last: CellIndex) -> bool {
            let o = nb.offset(self.side);
            if !self.open[o] || self.active[o] || self.dist[o] == usize::MAX {
                return false;
            }
            neighbors4(nb, self.side).into_iter().all(|x| {
                let xo = x.offset(self.side);
                if self.active[xo] {
                    x == last
                } else {
                    self.count[xo] < 2
                }
            })
        }

        fn set(&mut self, c: CellIndex, on: bool) {
            let o = c.offset(self.side);
            self.active[o] = on;
            for x in neighbors4(c, self.side) {
                let xo = x.offset(self.side);
                if on {
                    self.count[xo] += 1;
                } else {
                    self.count[xo] -= 1;
                }
            }
            if on {
                self.path.push(c);
            } else {
                self.path.pop();
            }
        }

        /// `Some(true)` found, `Some(false)` exhausted this bound, `None` out of budget.
        fn search(&mut self, bound: usize) -> Option<bool> {
            self.nodes += 1;
            if self.nodes > self.budget {
                return None;
            }
            let last = *self.path.last().expect("path starts non-empty");
            let f = self.path.len() + self.dist[last.offset(self.side)];
            if f > bound {
                self.next_bound = self.next_bound.min(f);
                return Some(false);
            }
            if last == self.goal {
                return Some(true);
            }
            let mut nbrs = neighbors4(last, self.side);
            nbrs.sort_by_key(|c| self.dist[c.offset(self.side)]);
            for nb in nbrs {
                if self.can_extend(nb, last) {
                    self.set(nb, true);
                    match self.search(bound)? {
                        true => return Some(true),
                        false => self.set(nb, false),
                    }
                }
            }
            Some(false)
        }
    }

    let mut dfs = Dfs {
        side,
        open,
        dist: &dist,
        goal,
        active: vec![false; side * side],
        count: vec![0; side * side],
        path: Vec::new(),
        nodes: 0,
        budget,
        next_bound: usize::MAX,
    };
    dfs.set(start, true);
    let mut bound = 1 + dist[start.offset(side)];
    loop {
        dfs.next_bound = usize::MAX;
        match dfs.search(bound) {
            None => return (CorridorSearch::BudgetExhausted, None),
            Some(true) => return (CorridorSearch::Found, Some(dfs.path.clone())),
            Some(false) if dfs.next_bound == usize::MAX => return (CorridorSearch::NoPath, None),
            Some(false) => bound = dfs.next_bound,
        }
    }
}

/// Random-deployment baseline: for growing deployment sizes, draw random
/// site subsets and keep the first one that admits a valid corridor.
pub fn baseline_random(fine: &StatsGrid, config: &PlanConfig, seed: u64) -> Result<PlanResult, PlanError> {
    config.validate()?;
    let mut result = PlanResult::empty(Method::Random);
    let kk = fine.sites;
    let side = fine.side;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut search_budget_hit = false;
    for size in 1..=kk {
        for _ in 0..config.random_trials_per_size {
            result.iterations += 1;
            let sites = sample(&mut rng, kk, size).into_vec();
            let dep = Deployment::from_sites(kk, &sites);
            let feas = feasible_cell_mask(&dep, fine, &config.radio);
            let (outcome, path) = shortest_valid_corridor(&feas.mask(), side, config.corridor_search_budget);
            if outcome == CorridorSearch::BudgetExhausted {
                search_budget_hit = true;
            }
            if let Some(path) = path {
                let mask = CorridorMask::from_cells(side, &path);
                result.cost_history.push(solution_cost(&mask, &dep, &config.weights));
                return Ok(result.finish(mask, dep, fine, config));
            }
        }
    }
    let why = "no sampled deployment admits a valid corridor";
    let mut result = result.fail(why);
    if search_budget_hit {
        result.status = PlanStatus::BudgetExhausted;
    }
    Ok(result)
}
