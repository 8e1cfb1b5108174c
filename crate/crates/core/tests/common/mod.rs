//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use aircorridor::ckm::{CellChannelStats, StatsGrid};
use aircorridor::grid::{CellIndex, CorridorMask};
use aircorridor::ilp::{solve, IlpModel, LinExpr, Sense, SolveOptions, SolveStatus};
use aircorridor::metrics::{CostWeights, Deployment, RadioParams};
use aircorridor::planner::{P2Model, PlanConfig};
use rand::Rng;

/// Random 0-1 program with small dyadic coefficients, so feasibility is
/// decided exactly in floating point.
pub fn random_ilp<R: Rng>(rng: &mut R, n: usize) -> IlpModel {
    let mut m = IlpModel::new("rand");
    let vars: Vec<_> = (0..n).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
    let rows = rng.gen_range(1..=8);
    let coef = |rng: &mut R| f64::from(rng.gen_range(-8i32..=8)) / 4.0;
    for r in 0..rows {
        let mut e = LinExpr::new();
        for &v in &vars {
            if rng.gen_bool(0.5) {
                let c = coef(rng);
                if c != 0.0 {
                    e.push(v, c);
                }
            }
        }
        let lo: f64 = e.terms.iter().map(|t| t.1.min(0.0)).sum();
        let hi: f64 = e.terms.iter().map(|t| t.1.max(0.0)).sum();
        let rhs = (rng.gen_range(lo..=hi.max(lo + 0.25)) * 4.0).round() / 4.0;
        let sense = match rng.gen_range(0..10) {
            0 => Sense::Eq,
            1..=4 => Sense::Ge,
            _ => Sense::Le,
        };
        m.add_constraint(format!("r{r}"), e, sense, rhs).unwrap();
    }
    let mut obj = LinExpr::new();
    for &v in &vars {
        obj.push(v, f64::from(rng.gen_range(-10i32..=10)));
    }
    m.set_objective(obj).unwrap();
    m
}

/// Exhaustive optimum: smallest objective over all 2^n assignments, ties
/// broken by the first assignment found.
pub fn enumerate(model: &IlpModel) -> Option<(f64, Vec<bool>)> {
    let n = model.num_vars();
    assert!(n <= 24, "enumeration is exponential");
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut x = vec![false; n];
    for bits in 0u64..(1 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = bits >> i & 1 == 1;
        }
        let ok = model.constraints().iter().all(|c| {
            let lhs: f64 = c.expr.terms.iter().filter(|t| x[t.0 .0]).map(|t| t.1).sum();
            match c.sense {
                Sense::Le => lhs <= c.rhs + 1e-9,
                Sense::Ge => lhs >= c.rhs - 1e-9,
                Sense::Eq => (lhs - c.rhs).abs() <= 1e-9,
            }
        });
        if !ok {
            continue;
        }
        let obj: f64 = model.objective().terms.iter().filter(|t| x[t.0 .0]).map(|t| t.1).sum();
        if best.as_ref().is_none_or(|b| obj < b.0 - 1e-12) {
            best = Some((obj, x.clone()));
        }
    }
    best
}

pub fn radio() -> RadioParams {
    RadioParams {
        tx_power: 1.0,
        tx_gain: 15.85,
        noise: 1e-14,
        wavelength: 0.3,
        rcs: 1.0,
        sense_threshold: 3e-12,
        sinr_threshold: 2.0,
        big_m: None,
    }
}

pub fn plan_config(radio: RadioParams) -> PlanConfig {
    PlanConfig::new(CostWeights::new(0.5, 0.5).unwrap(), radio)
}

/// Random per-(cell, site) statistics; `los_rate` is the LoS probability.
pub fn random_stats<R: Rng>(rng: &mut R, side: usize, sites: usize, los_rate: f64, trimmed: bool) -> StatsGrid {
    let mut cells = Vec::with_capacity(side * side * sites);
    for _ in 0..side * side * sites {
        let h_min = 10f64.powf(rng.gen_range(-9.0..-7.0));
        let h_max = h_min * rng.gen_range(1.0..3.0);
        let h_min_trim = h_min * rng.gen_range(1.0..1.2);
        let h_max_trim = (h_max / rng.gen_range(1.0..1.2)).max(h_min_trim);
        let los = rng.gen_bool(los_rate);
        let los_trim = los || rng.gen_bool(0.5);
        let echo = 10f64.powf(rng.gen_range(-13.0..-11.0));
        cells.push(CellChannelStats {
            h_min,
            h_max,
            h_min_trim,
            h_max_trim,
            los,
            echo_min: if los { echo } else { 0.0 },
            los_trim,
            echo_min_trim: if los_trim { echo * rng.gen_range(1.0..1.3) } else { 0.0 },
        });
    }
    StatsGrid::new(side, sites, trimmed, cells)
}

/// Radio predicates of one cell, restated from the definitions: summed echo,
/// LoS site count, and the best serving site's worst-case SINR.
pub fn cell_ok(stats: &StatsGrid, cell: CellIndex, dep: &Deployment, r: &RadioParams) -> (bool, bool, bool) {
    let t = stats.use_trimmed;
    let st = stats.at(cell);
    let on: Vec<usize> = (0..stats.sites).filter(|&k| dep.is_deployed(k)).collect();
    let los = |k: usize| if t { st[k].los_trim } else { st[k].los };
    let echo: f64 = on
        .iter()
        .filter(|&&k| los(k))
        .map(|&k| if t { st[k].echo_min_trim } else { st[k].echo_min })
        .sum();
    let los_n = on.iter().filter(|&&k| los(k)).count();
    let best = on
        .iter()
        .map(|&k| {
            let hmin = if t { st[k].h_min_trim } else { st[k].h_min };
            let interf: f64 = on
                .iter()
                .filter(|&&b| b != k)
                .map(|&b| r.tx_power * if t { st[b].h_max_trim } else { st[b].h_max })
                .sum();
            r.tx_power * r.tx_gain * hmin / (interf + r.noise)
        })
        .fold(0.0, f64::max);
    (echo >= r.sense_threshold, los_n >= 3, best >= r.sinr_threshold)
}

pub fn cell_all_ok(stats: &StatsGrid, cell: CellIndex, dep: &Deployment, r: &RadioParams) -> bool {
    let (a, b, c) = cell_ok(stats, cell, dep, r);
    a && b && c
}

/// Corridor rules restated: anchors on, neighbour band, cap of two on every
/// cell, every row and column touched.
pub fn corridor_ok(mask: &CorridorMask) -> bool {
    let n = mask.side();
    let on = |i: usize, j: usize| i >= 1 && j >= 1 && i <= n && j <= n && mask.get(CellIndex::new(i, j));
    if !on(1, 1) || !on(n, n) {
        return false;
    }
    for i in 1..=n {
        for j in 1..=n {
            let k = [(i + 1, j), (i.wrapping_sub(1), j), (i, j + 1), (i, j.wrapping_sub(1))]
                .iter()
                .filter(|&&(a, b)| on(a, b))
                .count();
            if k > 2 {
                return false;
            }
            let anchor = (i, j) == (1, 1) || (i, j) == (n, n);
            if on(i, j) && k < if anchor { 1 } else { 2 } {
                return false;
            }
        }
    }
    (1..=n).all(|i| (1..=n).any(|j| on(i, j))) && (1..=n).all(|j| (1..=n).any(|i| on(i, j)))
}

pub fn mask_from_bits(side: usize, bits: u64) -> CorridorMask {
    let cells: Vec<CellIndex> = (0..side * side)
        .filter(|o| bits >> o & 1 == 1)
        .map(|o| CellIndex::from_offset(o, side))
        .collect();
    CorridorMask::from_cells(side, &cells)
}

/// Brute-force joint optimum over every valid mask and deployment:
/// `alpha1 * cells + alpha2 * sites`, or `None` when nothing is feasible.
pub fn brute_force_joint(stats: &StatsGrid, r: &RadioParams, w: &CostWeights) -> Option<f64> {
    let side = stats.side;
    assert!(side * side <= 16 && stats.sites <= 10);
    let mut best: Option<f64> = None;
    for bits in 0u64..(1 << (side * side)) {
        let mask = mask_from_bits(side, bits);
        if !corridor_ok(&mask) {
            continue;
        }
        for d in 0u64..(1 << stats.sites) {
            let dep = Deployment::from_bits(stats.sites, d);
            if mask.active_cells().all(|c| cell_all_ok(stats, c, &dep, r)) {
                let cost = w.alpha1 * mask.count() as f64 + w.alpha2 * dep.count() as f64;
                if best.is_none_or(|b| cost < b) {
                    best = Some(cost);
                }
            }
        }
    }
    best
}

/// Whether the coarse program admits the given corridor and deployment:
/// both families fixed by equality rows, the rest left to the solver.
pub fn p2_admits(p2: &P2Model, mask: &CorridorMask, dep: &Deployment) -> bool {
    let mut m = p2.model.clone();
    for o in 0..p2.side * p2.side {
        let c = CellIndex::from_offset(o, p2.side);
        let v = f64::from(u8::from(mask.get(c)));
        m.add_constraint(format!("fix_b{o}"), LinExpr::new().term(p2.b[o], 1.0), Sense::Eq, v)
            .unwrap();
    }
    for k in 0..p2.sites {
        let v = f64::from(u8::from(dep.is_deployed(k)));
        m.add_constraint(format!("fix_d{k}"), LinExpr::new().term(p2.delta[k], 1.0), Sense::Eq, v)
            .unwrap();
    }
    match solve(&m, SolveOptions::default()).status {
        SolveStatus::Optimal => true,
        SolveStatus::Infeasible => false,
        s => panic!("fixed model ended with {s:?}"),
    }
}

/// Mask with the given cells of a `side` grid.
pub fn mask_of_cells(side: usize, cells: &[(usize, usize)]) -> CorridorMask {
    let cells: Vec<CellIndex> = cells.iter().map(|&(i, j)| CellIndex::new(i, j)).collect();
    CorridorMask::from_cells(side, &cells)
}

/// Fewest cells of a path from `s` to `d` through `open` cells of a
/// `side` grid such that no cell of the grid, on or off the path, touches
/// more than two path cells and the path has no chords. Plain depth-first
/// enumeration with a length bound.
pub fn shortest_chordless(side: usize, open: &dyn Fn(usize, usize) -> bool, s: (usize, usize), d: (usize, usize)) -> Option<usize> {
    if !open(s.0, s.1) || !open(d.0, d.1) {
        return None;
    }
    if s == d {
        return Some(1);
    }
    let nbrs = |(i, j): (usize, usize)| {
        let mut v = Vec::new();
        if i > 1 {
            v.push((i - 1, j));
        }
        if i < side {
            v.push((i + 1, j));
        }
        if j > 1 {
            v.push((i, j - 1));
        }
        if j < side {
            v.push((i, j + 1));
        }
        v
    };
    fn go(
        path: &mut Vec<(usize, usize)>,
        d: (usize, usize),
        side: usize,
        open: &dyn Fn(usize, usize) -> bool,
        nbrs: &dyn Fn((usize, usize)) -> Vec<(usize, usize)>,
        best: &mut Option<usize>,
    ) {
        let last = *path.last().unwrap();
        if last == d {
            let ok = (1..=side).all(|i| {
                (1..=side).all(|j| nbrs((i, j)).iter().filter(|c| path.contains(c)).count() <= 2)
            });
            if ok && best.is_none_or(|b| path.len() < b) {
                *best = Some(path.len());
            }
            return;
        }
        if best.is_some_and(|b| path.len() + 1 >= b) {
            return;
        }
        for nb in nbrs(last) {
            if !open(nb.0, nb.1) || path.contains(&nb) {
                continue;
            }
            // A second path neighbour would be a chord.
            if nbrs(nb).iter().filter(|c| path.contains(c)).count() != 1 {
                continue;
            }
            path.push(nb);
            go(path, d, side, open, nbrs, best);
            path.pop();
        }
    }
    let mut best = None;
    go(&mut vec![s], d, side, open, &nbrs, &mut best);
    best
}

/// Radar-equation echo power, assembled term by term in decibels.
pub fn echo_oracle(r: &RadioParams, d: f64) -> f64 {
    let db = 10.0 * r.tx_power.log10() + 10.0 * r.tx_gain.log10() + 20.0 * r.wavelength.log10() + 10.0 * r.rcs.log10()
        - 30.0 * (4.0 * std::f64::consts::PI).log10()
        - 40.0 * d.log10();
    10f64.powf(db / 10.0)
}

/// Random radio parameters over a wide range of magnitudes.
pub fn random_radio<R: Rng>(rng: &mut R) -> RadioParams {
    RadioParams {
        tx_power: 10f64.powf(rng.gen_range(-2.0..2.0)),
        tx_gain: 10f64.powf(rng.gen_range(0.1..3.0)),
        noise: 10f64.powf(rng.gen_range(-15.0..-11.0)),
        wavelength: 10f64.powf(rng.gen_range(-2.0..0.5)),
        rcs: 10f64.powf(rng.gen_range(-2.0..2.0)),
        sense_threshold: 10f64.powf(rng.gen_range(-14.0..-10.0)),
        sinr_threshold: 10f64.powf(rng.gen_range(-1.0..1.5)),
        big_m: None,
    }
}

/// Worst-case SINR of site `k`, summing interference in reverse site order.
pub fn sinr_oracle(stats: &[CellChannelStats], trimmed: bool, k: usize, dep: &Deployment, r: &RadioParams) -> f64 {
    if !dep.is_deployed(k) {
        return 0.0;
    }
    let hmin = if trimmed { stats[k].h_min_trim } else { stats[k].h_min };
    let mut interf = 0.0;
    for b in (0..stats.len()).rev() {
        if b != k && dep.is_deployed(b) {
            interf += r.tx_power * if trimmed { stats[b].h_max_trim } else { stats[b].h_max };
        }
    }
    r.tx_power * r.tx_gain * hmin / (interf + r.noise)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
