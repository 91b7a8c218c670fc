// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::Rng;
use sncp::cov_change::vech_transform;
use sncp::dgp::{gen_gaussian, CovarianceSpec, GaussianSampler, MeanChangeSpec};
use sncp::seeding::rng_from_seed;
use sncp::segmentation::{calibrate_threshold, draw_intervals};
use sncp::single_cp::{frobenius_jackknife, FrobeniusVariant};
use sncp::{adjusted_rand_index, ks_statistic, t_n_statistic, KsVariant, SampleMatrix, WbsConfig};

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

fn labels(cps: &[usize], n: usize) -> Vec<usize> {
    (1..=n).map(|t| cps.iter().filter(|&&c| c < t).count()).collect()
}

/// Hubert–Arabie index from the pair-counting contingency table.
fn ari_oracle(truth: &[usize], est: &[usize], n: usize) -> f64 {
    let (a, b) = (labels(truth, n), labels(est, n));
    let (ra, rb) = (truth.len() + 1, est.len() + 1);
    let mut table = vec![vec![0u64; rb]; ra];
    for t in 0..n {
        table[a[t]][b[t]] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..rb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / choose2(n as u64);
    (index - expected) / (0.5 * (rows + cols) - expected)
}

#[test]
fn ari_matches_contingency_formula() {
    let got = adjusted_rand_index(&[30, 60, 90], &[31, 60, 89], 120).unwrap();
    assert!((got - ari_oracle(&[30, 60, 90], &[31, 60, 89], 120)).abs() <= 1e-12);
    assert!(got < 1.0 && got > 0.9);
}

proptest! {
    #[test]
    fn ari_random_partitions(
        truth in prop::collection::btree_set(1usize..59, 1..5),
        est in prop::collection::btree_set(1usize..59, 1..5),
    ) {
        let truth: Vec<usize> = truth.into_iter().collect();
        let est: Vec<usize> = est.into_iter().collect();
        let got = adjusted_rand_index(&truth, &est, 60).unwrap();
        prop_assert!((got - ari_oracle(&truth, &est, 60)).abs() <= 1e-12);
        let swapped = adjusted_rand_index(&est, &truth, 60).unwrap();
        prop_assert!((got - swapped).abs() <= 1e-12);
    }
}

#[test]
fn intervals_are_uniform_over_feasible_pairs() {
    let n = 20;
    let draws = 100_000;
    let iv = draw_intervals(n, draws, 5, 77).unwrap();
    let hi = n - 4;
    let feasible: Vec<(usize, usize)> = (0..=hi)
        .flat_map(|s| (s + 5..=hi).map(move |e| (s, e)))
        .collect();
    assert_eq!(feasible.len(), 78);
    let mut counts = std::collections::HashMap::new();
    for x in &iv {
        *counts.entry(*x).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), feasible.len());
    let expected = draws as f64 / feasible.len() as f64;
    let chi2: f64 = feasible
        .iter()
        .map(|k| {
            let o = *counts.get(k).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    // 77 degrees of freedom; 99.99% point is about 128
    assert!(chi2 < 128.0, "chi2 = {chi2}");
}

#[test]
fn vech_mean_is_vech_of_covariance() {
    let p = 4;
    let cov = CovarianceSpec::ar1(0.5, p);
    let x = gen_gaussian(20_000, &cov, &MeanChangeSpec::none(), 5).unwrap();
    let z = vech_transform(&x).unwrap();
    let m = z.data.mean();
    let sigma = cov.matrix();
    let mut idx = 0;
    for c in 0..p {
        for r in c..p {
            assert!((m[idx] - sigma[r * p + c]).abs() < 0.05, "entry ({r},{c})");
            idx += 1;
        }
    }
}

#[test]
fn vech_statistic_ignores_coordinate_order() {
    let x = gen_gaussian(60, &CovarianceSpec::ar1(0.3, 5), &MeanChangeSpec::none(), 9).unwrap();
    let perm = [3, 0, 4, 1, 2];
    let a = t_n_statistic(&vech_transform(&x).unwrap().data).unwrap().0;
    let b = t_n_statistic(&vech_transform(&x.permute_columns(&perm)).unwrap().data).unwrap().0;
    assert!((a - b).abs() <= 1e-9 * a);
}

#[test]
fn ar1_sampler_reproduces_covariance() {
    let p = 5;
    let cov = CovarianceSpec::ar1(0.6, p);
    let x = GaussianSampler::new(&cov).unwrap().sample(50_000, &mut rng_from_seed(13));
    let sigma = cov.matrix();
    let n = x.n() as f64;
    for i in 0..p {
        for j in 0..p {
            let s: f64 = x.rows().map(|r| r[i] * r[j]).sum::<f64>() / n;
            assert!((s - sigma[i * p + j]).abs() < 0.03, "({i},{j}): {s}");
        }
    }
}

#[test]
fn calibration_is_thread_count_independent() {
    let cfg = WbsConfig {
        intervals: 50,
        calibration_reps: 50,
        master_seed: 21,
        ..WbsConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| calibrate_threshold(60, 10, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn threshold_grows_with_level() {
    let base = WbsConfig {
        intervals: 50,
        calibration_reps: 100,
        master_seed: 2,
        ..WbsConfig::default()
    };
    let hi = calibrate_threshold(60, 10, &WbsConfig { level: 0.95, ..base.clone() }).unwrap();
    let lo = calibrate_threshold(60, 10, &WbsConfig { level: 0.80, ..base }).unwrap();
    assert!(hi > lo && hi.is_finite() && lo >= 0.0);
}

#[test]
fn jackknife_floor_on_constant_halves() {
    // every leave-two-out residual vanishes, so the raw estimate is exactly 0
    let rows: Vec<[f64; 2]> = (0..8).map(|i| if i < 4 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    let s = SampleMatrix::from_rows(&rows).unwrap();
    for variant in [FrobeniusVariant::PrePostAverage, FrobeniusVariant::DemeanedFull] {
        let est = frobenius_jackknife(&s, variant).unwrap();
        assert_eq!(est.khat, 4);
        assert!(est.clamped);
        assert!(est.value > 0.0 && est.value < 1e-12);
    }
}

#[test]
fn jackknife_is_nonnegative_on_random_blocks() {
    let mut rng = rng_from_seed(31);
    for _ in 0..2000 {
        let n = rng.random_range(8..=12);
        let data: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0f64..1.0).powi(3)).collect();
        let s = SampleMatrix::from_row_major(n, 2, data).unwrap();
        if let Ok(est) = frobenius_jackknife(&s, FrobeniusVariant::PrePostAverage) {
            assert!(!est.clamped && est.value > 0.0);
        }
    }
}

#[test]
fn ks_inf_is_scaled_cusum_maximum() {
    let x = gen_gaussian(30, &CovarianceSpec::identity(4), &MeanChangeSpec::none(), 3).unwrap();
    let ks = ks_statistic(&x, KsVariant::KsInf, Some(2.0)).unwrap();
    let n = 30;
    let mut best = 0.0f64;
    for k in 2..=n - 3 {
        let d = sncp::segment_stats::d_stat_bruteforce(&x.slice_rows(0, n), 0, k, n);
        if let Ok(d) = d {
            best = best.max(d.abs());
        }
    }
    assert!((ks.value - best / 2.0).abs() <= 1e-9 * ks.value.max(1e-12));
}
