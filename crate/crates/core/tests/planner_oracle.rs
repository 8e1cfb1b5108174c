mod common;

use aircorridor::cli::config::{Instance, ScenarioConfig};
use aircorridor::grid::{segment_endpoints, validate_corridor, CellIndex, CoarseSpec, GridSpec};
use aircorridor::ilp::{solve, SolveOptions, SolveStatus};
use aircorridor::metrics::{verify_solution, CellFeasibility, Deployment};
use aircorridor::planner::{
    build_p2, build_p3_1, build_p3_2, plan_joint, shortest_valid_corridor, solve_coarse, CorridorSearch,
    FeasibilityGrid, PlanStatus,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn staircase<R: Rng>(rng: &mut R, m: usize) -> Vec<CellIndex> {
    let mut c = CellIndex::new(1, 1);
    let mut out = vec![c];
    while c != CellIndex::new(m, m) {
        let down = c.j == m || (c.i < m && rng.gen_bool(0.5));
        c = if down { CellIndex::new(c.i + 1, c.j) } else { CellIndex::new(c.i, c.j + 1) };
        out.push(c);
    }
    out
}

#[test]
fn coarse_optimum_matches_brute_force() {
    let r = common::radio();
    let cfg = common::plan_config(r);
    let (mut feasible, mut infeasible) = (0, 0);
    for seed in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 2 + (seed as usize % 2);
        let sites = 3;
        let stats = common::random_stats(&mut rng, side, sites, 0.9, true);
        let truth = common::brute_force_joint(&stats, &r, &cfg.weights);
        let got = solve_coarse(&stats, &cfg).unwrap();
        match truth {
            None => {
                infeasible += 1;
                assert_eq!(got.status, SolveStatus::Infeasible, "seed {seed}");
            }
            Some(best) => {
                feasible += 1;
                assert_eq!(got.status, SolveStatus::Optimal, "seed {seed}");
                let obj = got.objective.unwrap();
                assert!((obj - best).abs() < 1e-9, "seed {seed}: {obj} vs {best}");
                let (mask, dep) = (got.mask.unwrap(), got.deployment.unwrap());
                assert!(common::corridor_ok(&mask), "seed {seed}");
                assert!(mask.active_cells().all(|c| common::cell_all_ok(&stats, c, &dep, &r)));
            }
        }
    }
    assert!(feasible >= 10 && infeasible >= 5, "{feasible} feasible, {infeasible} infeasible");
}

#[test]
fn big_m_rows_admit_exactly_the_feasible_pairs() {
    let r = common::radio();
    let cfg = common::plan_config(r);
    let mut admitted = 0;
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let side = if seed < 3 { 2 } else { 3 };
        let stats = common::random_stats(&mut rng, side, 3, 0.9, true);
        let p2 = build_p2(&stats, &cfg).unwrap();
        for bits in 0u64..(1 << (side * side)) {
            let mask = common::mask_from_bits(side, bits);
            for d in 0u64..8 {
                let dep = Deployment::from_bits(3, d);
                let native = common::corridor_ok(&mask)
                    && mask.active_cells().all(|c| common::cell_all_ok(&stats, c, &dep, &r));
                assert_eq!(common::p2_admits(&p2, &mask, &dep), native, "seed {seed} mask {bits:b} dep {d:b}");
                admitted += usize::from(native);
            }
        }
    }
    assert!(admitted > 0);
}

/// Runs one block model and the path oracle on the same inputs.
fn block_case(seed: u64, m: usize, f: usize) -> (Option<f64>, Option<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m * f;
    let grid = GridSpec::new(0.0, 0.0, 150.0, n, 5.0, 5.0, 5.0).unwrap();
    let coarse = CoarseSpec::new(&grid, m).unwrap();
    let path = staircase(&mut rng, m);
    let t = rng.gen_range(0..path.len());
    let block = path[t];
    let cells: Vec<CellFeasibility> = (0..n * n)
        .map(|_| {
            let ok = rng.gen_bool(0.8);
            CellFeasibility {
                sensing_ok: ok,
                los_ok: true,
                sinr_ok: true,
            }
        })
        .collect();
    let feas = FeasibilityGrid { side: n, cells };
    let ends = segment_endpoints(&path, block, f).unwrap();
    let bm = build_p3_1(block, ends, &feas, &coarse).unwrap();
    let got = solve(&bm.model, SolveOptions::default());

    // Cells on an edge facing the previous or next path block stay closed
    // unless they are the endpoints.
    let touching: Vec<CellIndex> = [t.checked_sub(1), Some(t + 1)]
        .into_iter()
        .flatten()
        .filter_map(|u| path.get(u).copied())
        .collect();
    let open = |i: usize, j: usize| {
        let g = coarse.to_global(block, CellIndex::new(i, j));
        if !feas.ok(g) {
            return false;
        }
        let endpoint = (i, j) == (ends.start.i, ends.start.j) || (i, j) == (ends.dest.i, ends.dest.j);
        let on_shared = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dj)| {
            let (gi, gj) = (g.i as i64 + di, g.j as i64 + dj);
            gi >= 1
                && gj >= 1
                && gi <= n as i64
                && gj <= n as i64
                && touching.contains(&coarse.block_of(CellIndex::new(gi as usize, gj as usize)))
        });
        endpoint || !on_shared
    };
    let truth = common::shortest_chordless(f, &open, (ends.start.i, ends.start.j), (ends.dest.i, ends.dest.j));
    assert_ne!(got.status, SolveStatus::BudgetExhausted);
    (got.objective, truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    // With four or five sites partial deployments can meet the LoS rule, so
    // the SINR rows decide between deployments of the same corridor.
    #[test]
    fn big_m_rows_with_partial_deployments(seed in any::<u64>(), sites in 4usize..=5, sinr in 0.5f64..8.0, trimmed in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = common::radio();
        r.sinr_threshold = sinr;
        r.sense_threshold = 1e-13;
        let cfg = common::plan_config(r);
        let stats = common::random_stats(&mut rng, 2, sites, 0.9, trimmed);
        let p2 = build_p2(&stats, &cfg).unwrap();
        for mask in [common::mask_of_cells(2, &[(1, 1), (1, 2), (2, 2)]), common::mask_of_cells(2, &[(1, 1), (2, 1), (2, 2)])] {
            for d in 0u64..(1 << sites) {
                let dep = Deployment::from_bits(sites, d);
                let native = mask.active_cells().all(|c| common::cell_all_ok(&stats, c, &dep, &r));
                prop_assert_eq!(common::p2_admits(&p2, &mask, &dep), native, "mask {} dep {:b}", mask.to_text(), d);
            }
        }
    }

    #[test]
    fn block_subpath_is_the_shortest_chordless_path(seed in any::<u64>(), m in 2usize..=3, f in 1usize..=5) {
        let (got, truth) = block_case(seed, m, f);
        prop_assert_eq!(got, truth.map(|t| t as f64));
    }

    #[test]
    fn deployment_model_matches_enumeration(seed in any::<u64>(), sites in 3usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = common::radio();
        let cfg = common::plan_config(r);
        let side = 4;
        let stats = common::random_stats(&mut rng, side, sites, 0.8, false);
        let path = staircase(&mut rng, side);
        let mask = aircorridor::grid::CorridorMask::from_cells(side, &path);
        let dm = build_p3_2(&mask, &stats, &cfg).unwrap();
        let got = solve(&dm.model, SolveOptions::default());
        let truth = (0u64..1 << sites)
            .map(|b| Deployment::from_bits(sites, b))
            .filter(|d| mask.active_cells().all(|c| common::cell_all_ok(&stats, c, d, &r)))
            .map(|d| d.count())
            .min();
        prop_assert_eq!(got.objective, truth.map(|t| t as f64));
        if let Some(a) = &got.assignment {
            let sel: Vec<usize> = (0..sites).filter(|&k| a[dm.delta[k].0]).collect();
            let d = Deployment::from_sites(sites, &sel);
            prop_assert!(mask.active_cells().all(|c| common::cell_all_ok(&stats, c, &d, &r)));
        }
    }

    #[test]
    fn corridor_search_matches_enumeration(seed in any::<u64>(), n in 2usize..=5, rate in 0.6f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let open: Vec<bool> = (0..n * n).map(|_| rng.gen_bool(rate)).collect();
        let (status, path) = shortest_valid_corridor(&open, n, u64::MAX);
        let truth = common::shortest_chordless(n, &|i, j| open[(i - 1) * n + j - 1], (1, 1), (n, n));
        match truth {
            None => prop_assert_eq!(status, CorridorSearch::NoPath),
            Some(len) => {
                prop_assert_eq!(status, CorridorSearch::Found);
                let path = path.unwrap();
                prop_assert_eq!(path.len(), len);
                let mask = aircorridor::grid::CorridorMask::from_cells(n, &path);
                prop_assert!(validate_corridor(&mask).ok);
                prop_assert!(path.iter().all(|c| open[c.offset(n)]));
            }
        }
    }
}

#[test]
fn block_oracle_sees_open_and_blocked_cases() {
    let (mut solved, mut blocked) = (0, 0);
    for seed in 0..200 {
        let (got, _) = block_case(seed, 3, 4);
        if got.is_some() {
            solved += 1;
        } else {
            blocked += 1;
        }
    }
    assert!(solved >= 50 && blocked >= 5, "{solved} solved, {blocked} blocked");
}

#[test]
fn alternating_optimisation_never_raises_cost() {
    for seed in 0..3 {
        let (_, _, inst) = Instance::generate(&ScenarioConfig::desk(seed)).unwrap();
        let r = plan_joint(&inst.coarse_stats, &inst.fine_stats, &inst.coarse, &inst.plan).unwrap();
        assert!(r.iterations >= 1 && r.iterations <= inst.plan.max_ao_iterations);
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0] + 1e-12), "seed {seed}: {:?}", r.cost_history);
        if r.status == PlanStatus::Feasible {
            let mask = r.fine_mask.as_ref().unwrap();
            let dep = r.deployment.as_ref().unwrap();
            assert!(validate_corridor(mask).ok);
            let report = verify_solution(mask, dep, &inst.fine_stats, &inst.plan.radio);
            assert!(report.ok, "seed {seed}");
            assert_eq!(r.final_cost, r.cost_history.last().copied());
        }
        let again = plan_joint(&inst.coarse_stats, &inst.fine_stats, &inst.coarse, &inst.plan).unwrap();
        assert_eq!(again.fine_mask, r.fine_mask);
        assert_eq!(again.deployment, r.deployment);
    }
}
