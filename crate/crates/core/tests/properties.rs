//! Invariants checked on random tables, samples and populations.

mod common;

use mnar_bounds::baselines::{normal_cdf, Baseline};
use mnar_bounds::causal::{ate_bounds, ate_shadow_bounds, ArmTables};
use mnar_bounds::diagnostics::spectrum;
use mnar_bounds::expansion::{estimate, ExpansionConfig, KappaRule};
use mnar_bounds::shadow::{aggregate_shadow_bounds, ShadowOptions};
use mnar_bounds::simlab::dgp::illustrative_config;
use mnar_bounds::simlab::ConditionalSpec;
use mnar_bounds::simlab::Dgp;
use mnar_bounds::tables::{identity_weights, StratumEntry};
use mnar_bounds::{base_bounds, estimate_tables, stratified_bounds, PopulationTables, UnitRecord};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use common::{mean, random_dgp, random_table, simplex};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn population(rng: &mut ChaCha8Rng, k: usize, m: usize, m_f: usize) -> PopulationTables {
    let weights = simplex(rng, k);
    let strata = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| StratumEntry { id: format!("s{i}"), table: random_table(rng, m, m_f, (0.05, 1.0)), weight: w })
        .collect();
    PopulationTables::new(strata).unwrap()
}

/// A sampled single-stratum population from a random DGP.
fn sampled(seed: u64, n: usize) -> (Dgp, PopulationTables) {
    let mut r = rng(seed);
    let m = r.gen_range(2..=5);
    let m_f = r.gen_range(1..=4);
    let dgp = random_dgp(&mut r, m, m_f, (0.1, 0.95));
    let records = dgp.generate(n, seed, 0);
    let pop = estimate_tables(&records, m, m_f).unwrap();
    (dgp, pop)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn width_law(seed in any::<u64>(), m in 1usize..=8, m_f in 1usize..=3) {
        let t = random_table(&mut rng(seed), m, m_f, (0.0, 1.0));
        let iv = base_bounds(&t);
        prop_assert!((iv.width() - (m as f64 - 1.0) * t.p_r0()).abs() <= 1e-12);
        prop_assert!(iv.lo >= 1.0 - 1e-12 && iv.hi <= m as f64 + 1e-12);
    }

    #[test]
    fn stratification_is_a_no_op(seed in any::<u64>(), k in 1usize..=5, m in 1usize..=6, m_f in 1usize..=3) {
        let pop = population(&mut rng(seed), k, m, m_f);
        let s = stratified_bounds(&pop, &identity_weights(m)).unwrap();
        let b = base_bounds(&pop.pooled());
        prop_assert!((s.lo - b.lo).abs() <= 1e-10 && (s.hi - b.hi).abs() <= 1e-10);
    }

    #[test]
    fn shadow_nested_in_base_with_gap(seed in any::<u64>(), k in 1usize..=3, m in 2usize..=5, m_f in 1usize..=4) {
        let pop = population(&mut rng(seed), k, m, m_f);
        let base = stratified_bounds(&pop, &identity_weights(m)).unwrap();
        let shad = aggregate_shadow_bounds(&pop, &ShadowOptions::default()).unwrap();
        let s = &shad.aggregate;
        prop_assert!(base.lo <= s.lo + 1e-8 && s.lo <= s.hi + 1e-8 && s.hi <= base.hi + 1e-8);
        prop_assert!(base.hi - s.hi >= shad.gap_lb_upper - 1e-8);
        prop_assert!(s.lo - base.lo >= shad.gap_lb_lower - 1e-8);
    }

    #[test]
    fn full_rank_collapses(seed in any::<u64>(), m in 2usize..=4, extra in 0usize..=2) {
        let t = random_table(&mut rng(seed), m, m + extra, (0.05, 1.0));
        let sigma_min = spectrum(t.alpha()).unwrap().sigma_min;
        prop_assume!(sigma_min > 1e-6);
        let shad = aggregate_shadow_bounds(&PopulationTables::single(t), &ShadowOptions::default()).unwrap();
        prop_assert!(shad.aggregate.width() <= 1e-6, "width {}", shad.aggregate.width());
    }

    #[test]
    fn table_entries_ignore_record_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dgp = random_dgp(&mut r, 4, 3, (0.1, 0.9));
        let mut records = dgp.generate(500, seed, 0);
        for (i, rec) in records.iter_mut().enumerate() {
            rec.stratum = Some(if i % 3 == 0 { "a" } else { "b" }.to_string());
        }
        let before = estimate_tables(&records, 4, 3).unwrap();
        records.shuffle(&mut r);
        prop_assert_eq!(before, estimate_tables(&records, 4, 3).unwrap());
    }

    #[test]
    fn baselines_agree_without_missingness(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dgp = random_dgp(&mut r, 5, 5, (1.0, 1.0));
        let records = dgp.generate(300, seed, 0);
        let ys: Vec<f64> = records.iter().map(|x| x.y.unwrap() as f64).collect();
        let sample_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        for b in [Baseline::Cca, Baseline::NaiveImpute, Baseline::Ppi, Baseline::PatternMixture] {
            prop_assert!((b.run(&records).unwrap().value - sample_mean).abs() <= 1e-12, "{:?}", b);
        }
    }

    #[test]
    fn ate_separates_and_nests(seed in any::<u64>(), m in 2usize..=5, m_f in 1usize..=3) {
        let mut r = rng(seed);
        let arm0 = random_table(&mut r, m, m_f, (0.05, 1.0));
        let arm1 = random_table(&mut r, m, m_f, (0.05, 1.0));
        let (b0, b1) = (base_bounds(&arm0), base_bounds(&arm1));
        let arms = ArmTables::new(arm0, arm1).unwrap();
        let ate = ate_bounds(&arms);
        prop_assert!((ate.lo - (b1.lo - b0.hi)).abs() <= 1e-8);
        prop_assert!((ate.hi - (b1.hi - b0.lo)).abs() <= 1e-8);
        let shad = ate_shadow_bounds(&arms, &ShadowOptions::default()).unwrap();
        prop_assert!(shad.is_within(&ate, 1e-8));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn expansion_feasible_boxed_and_monotone_in_kappa(seed in any::<u64>(), n in 50usize..3000) {
        let (dgp, pop) = sampled(seed, n);
        let m = dgp.m() as f64;
        let narrow = estimate(&pop, &ExpansionConfig::with_kappa(KappaRule::Constant(0.5))).unwrap();
        let wide = estimate(&pop, &ExpansionConfig::with_kappa(KappaRule::Constant(1.0))).unwrap();
        for report in [&narrow, &wide] {
            for s in &report.per_stratum {
                prop_assert!(s.status.iter().all(|st| *st == mnar_bounds::lp::LpStatus::Optimal));
            }
            prop_assert!(report.aggregate.lo >= 1.0 - 1e-9 && report.aggregate.hi <= m + 1e-9);
        }
        prop_assert!(narrow.aggregate.is_within(&wide.aggregate, 1e-9));
    }
}

#[test]
fn normal_cdf_matches_statrs() {
    let oracle = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for i in 0..=16_000 {
        let z = -8.0 + i as f64 * 1e-3;
        worst = worst.max((normal_cdf(z) - oracle.cdf(z)).abs());
    }
    assert!(worst <= 1e-7, "worst {worst:e}");
}

#[test]
fn baselines_consistent_under_mcar() {
    // Imputation from F is only consistent when F is unbiased for Y, so those two
    // baselines get an exact predictor.
    let exact_f = nalgebra::DMatrix::identity(5, 5);
    for seed in [1u64, 2, 3] {
        let mut r = rng(seed);
        let p = simplex(&mut r, 5);
        let noisy_f = common::stochastic(&mut r, 5, 4);
        let truth = mean(&p);
        let cases = [
            (noisy_f, &[Baseline::Cca, Baseline::Ppi, Baseline::PatternMixture, Baseline::Heckman][..]),
            (exact_f.clone(), &[Baseline::NaiveImpute, Baseline::LlmRaw][..]),
        ];
        for (f, baselines) in cases {
            let dgp = Dgp::new(p.clone(), f, vec![0.6; 5]).unwrap();
            let records = dgp.generate(100_000, seed, 0);
            for &b in baselines {
                let est = b.run(&records).unwrap();
                let tol = 4.0 * est.stderr.max(1e-3);
                assert!((est.value - truth).abs() <= tol, "{b:?} seed {seed}: {} vs {truth} (4se {tol})", est.value);
            }
        }
    }
}

#[test]
fn empirical_tables_converge() {
    let mut r = rng(17);
    let dgp = random_dgp(&mut r, 5, 3, (0.1, 0.9));
    let exact = dgp.exact_table();
    let pop = estimate_tables(&dgp.generate(1_000_000, 17, 0), 5, 3).unwrap();
    let est = pop.pooled();
    let cell = (est.alpha() - exact.alpha()).abs().max();
    let beta = est.beta().iter().zip(exact.beta()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(cell.max(beta) < 5e-3, "{cell} {beta}");
}

/// Hausdorff distance between two intervals.
fn hausdorff(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

#[test]
fn expansion_consistent_on_illustrative_populations() {
    for (spec, seed) in [(ConditionalSpec::PartialIdPreset, 3u64), (ConditionalSpec::PointIdPreset, 3)] {
        let cfg = illustrative_config(spec.clone(), 1_000_000, seed);
        let dgp = cfg.resolve().unwrap();
        let oracle = aggregate_shadow_bounds(&dgp.exact_tables(), &ShadowOptions::default()).unwrap().aggregate;
        let records: Vec<UnitRecord> = dgp.generate(cfg.n, cfg.seed, 0);
        let pop = estimate_tables(&records, 5, 5).unwrap();
        let est = estimate(&pop, &ExpansionConfig::default()).unwrap().aggregate;
        let d = hausdorff((est.lo, est.hi), (oracle.lo, oracle.hi));
        assert!(d <= 0.1, "{spec:?}: estimate [{}, {}] vs oracle [{}, {}]", est.lo, est.hi, oracle.lo, oracle.hi);
        assert!(est.contains(3.0, 0.0));
    }
}
