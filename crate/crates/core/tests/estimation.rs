use goodset::candidates::{build_explicit_grid, build_range_grid, CandidateGrid, DiscreteDist, RangeConvention, Sampler};
use goodset::dynsys::{simulate, ModelKind, PeakTarget, StateVector};
use goodset::estimator::{
    estimate_g_presample, exhaustive_scan, rejection_estimate, CandidateEvaluator, SummarySpec, TrajectoryFit,
    WorkerPool, DEFAULT_SCAN_LIMIT,
};
use goodset::fitness::{BandReference, DayWindow, FitnessRule, FitnessSpec};
use proptest::prelude::*;

fn initial() -> StateVector {
    StateVector(vec![0.95, 0.05, 0.0])
}

fn z3() -> CandidateGrid {
    let b = build_range_grid(0.1, 0.5, 0.001, RangeConvention::Closed).unwrap();
    let g = build_range_grid(0.0, 0.2, 0.001, RangeConvention::HalfOpen).unwrap();
    build_explicit_grid(vec![("beta".into(), b), ("gamma".into(), g)]).unwrap()
}

fn z1() -> CandidateGrid {
    let b = build_range_grid(0.0, 1.0, 0.001, RangeConvention::HalfOpen).unwrap();
    let g = build_range_grid(0.0, 0.5, 0.001, RangeConvention::HalfOpen).unwrap();
    build_explicit_grid(vec![("beta".into(), b), ("gamma".into(), g)]).unwrap()
}

fn fit(r: f64) -> TrajectoryFit {
    TrajectoryFit {
        kind: ModelKind::Sir,
        population: 1.0,
        fixed_params: vec![],
        initial: initial(),
        start_time: 1,
        observed: simulate(ModelKind::Sir, &[0.25, 1.0 / 21.0], 1.0, initial(), 1, 9).unwrap(),
        fitness: FitnessSpec {
            rule: FitnessRule::PointwiseRelativeBand {
                r,
                reference: BandReference::Candidate,
            },
            window: DayWindow::new(1, 10).unwrap(),
            components: vec![0, 1, 2],
        },
        summary: Some(SummarySpec {
            peak: PeakTarget::Level(1),
            through_day: 100,
        }),
    }
}

#[test]
fn z3_scan_counts() {
    let grid = z3();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let pool = WorkerPool::new(2).unwrap();
    let tight = exhaustive_scan(&grid, &sampler, &fit(0.05), DEFAULT_SCAN_LIMIT, &pool).unwrap();
    assert_eq!(tight.p, 68);
    assert_eq!(tight.g, 68.0 / 80_200.0);
    let loose = exhaustive_scan(&grid, &sampler, &fit(0.1), DEFAULT_SCAN_LIMIT, &pool).unwrap();
    assert_eq!(loose.p, 263);
    assert!((loose.g - 0.0032793).abs() < 1e-7);
}

#[test]
fn good_set_statistics_on_z3() {
    let grid = z3();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let pool = WorkerPool::new(1).unwrap();
    let scan = exhaustive_scan(&grid, &sampler, &fit(0.05), DEFAULT_SCAN_LIMIT, &pool).unwrap();
    let k = scan.good.len() as f64;
    let beta = scan.good.iter().map(|a| a.params[0]).sum::<f64>() / k;
    let gamma = scan.good.iter().map(|a| a.params[1]).sum::<f64>() / k;
    assert!((beta - 0.2502).abs() < 5e-4, "{beta}");
    assert!((gamma - 0.04788).abs() < 5e-5, "{gamma}");
    for a in &scan.good {
        let d = a.summary.as_ref().unwrap().peak_day;
        assert!((23..=25).contains(&d), "peak {d}");
    }
}

#[test]
fn rejection_is_sound_and_idempotent() {
    let grid = z3();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let pool = WorkerPool::new(3).unwrap();
    let evaluator = fit(0.1);
    let scan = exhaustive_scan(&grid, &sampler, &evaluator, DEFAULT_SCAN_LIMIT, &pool).unwrap();
    let good = scan.good_indices();
    let set = rejection_estimate(&grid, &sampler, 29_921, 11, &evaluator, &pool).unwrap();
    assert!(!set.is_empty());
    for a in &set.accepted {
        assert!(good.binary_search(&a.index).is_ok());
        let again = evaluator.evaluate(&grid.index_to_param(a.index).unwrap(), true).unwrap();
        assert!(again.fit);
        assert_eq!(again.summary, a.summary);
    }
}

#[test]
fn worker_count_never_changes_the_good_set() {
    let grid = z3();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let runs: Vec<_> = [1, 2, 5]
        .iter()
        .map(|&w| {
            let pool = WorkerPool::new(w).unwrap();
            rejection_estimate(&grid, &sampler, 40_000, 3, &fit(0.1), &pool).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn occupancy_matches_expectation() {
    let grid = z3();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let pool = WorkerPool::new(2).unwrap();
    let evaluator = fit(0.05);
    let (n, seeds) = (20_000u64, 30u64);
    let card = grid.cardinality() as f64;
    let pi = 1.0 - (1.0 - 1.0 / card).powf(n as f64);
    let mean = (0..seeds)
        .map(|s| rejection_estimate(&grid, &sampler, n, s, &evaluator, &pool).unwrap().n_distinct_good as f64)
        .sum::<f64>()
        / seeds as f64;
    let sigma = (68.0 * pi * (1.0 - pi) / seeds as f64).sqrt();
    assert!((mean - 68.0 * pi).abs() <= 5.0 * sigma, "{mean} vs {}", 68.0 * pi);
}

#[test]
fn presample_estimates_good_mass() {
    let grid = z1();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let pool = WorkerPool::new(2).unwrap();
    let g_hat = estimate_g_presample(&grid, &sampler, 1_000_000, 5, &fit(0.05), &pool).unwrap();
    let g = 0.000136f64;
    let sigma = (g * (1.0 - g) / 1e6).sqrt();
    assert!((g_hat - g).abs() <= 5.0 * sigma, "{g_hat}");
}

#[test]
fn scan_guard_refuses_large_grids() {
    let grid = z1();
    let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
    let pool = WorkerPool::new(1).unwrap();
    let err = exhaustive_scan(&grid, &sampler, &fit(0.05), 100_000, &pool).unwrap_err();
    assert!(matches!(err, goodset::Error::GuardExceeded { cardinality: 500_000, limit: 100_000 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accepted_entries_refit(seed in any::<u64>(), r in 0.03f64..0.2) {
        let grid = z3();
        let sampler = Sampler::new(&grid, &DiscreteDist::Uniform).unwrap();
        let pool = WorkerPool::new(2).unwrap();
        let evaluator = fit(r);
        let set = rejection_estimate(&grid, &sampler, 3_000, seed, &evaluator, &pool).unwrap();
        prop_assert!(set.n_distinct_good <= set.n_sampled);
        prop_assert_eq!(set.accepted.iter().map(|a| a.multiplicity).sum::<u64>(), set.n_accepted_draws);
        for a in &set.accepted {
            prop_assert!(evaluator.evaluate(&a.params, false).unwrap().fit);
        }
    }
}
