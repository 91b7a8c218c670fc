// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use sncp::multi_cp::{scan_statistic, GridKind, ScanGrid};
use sncp::segment_stats::d_stat_bruteforce;
use sncp::{t_n_statistic, PrefixGram, SampleMatrix, SegmentKernel, SegmentSummaries};

fn sample_strategy(n: std::ops::Range<usize>) -> impl Strategy<Value = SampleMatrix<f64>> {
    (n, prop::sample::select(vec![1usize, 2, 5])).prop_flat_map(|(n, p)| {
        prop::collection::vec(-3.0..3.0f64, n * p)
            .prop_map(move |data| SampleMatrix::from_row_major(n, p, data).unwrap())
    })
}

fn close(a: f64, b: f64, tol: f64, scale: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(scale)
}

fn all_triples(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |a| {
        (a + 2..=n).flat_map(move |b| (b + 2..=n).map(move |c| (a, b, c)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_matches_quadruple_sum(s in sample_strategy(8..15)) {
        let sums = SegmentSummaries::new(&s);
        let gram = PrefixGram::new(&s);
        for (a, b, c) in all_triples(s.n()) {
            let bf = d_stat_bruteforce(&s, a, b, c).unwrap();
            prop_assert!(close(sums.d_stat(a, b, c).unwrap(), bf, 1e-9, 1e-6));
            prop_assert!(close(gram.d_stat(a, b, c).unwrap(), bf, 1e-9, 1e-6));
        }
    }

    #[test]
    fn d_is_shift_invariant(s in sample_strategy(8..20), c in -50.0..50.0f64) {
        let shift = vec![c; s.p()];
        let k0 = SegmentSummaries::new(&s);
        let k1 = SegmentSummaries::new(&s.affine(1.0, &shift));
        for (a, b, e) in all_triples(s.n()).step_by(7) {
            prop_assert!(close(k1.d_stat(a, b, e).unwrap(), k0.d_stat(a, b, e).unwrap(), 1e-9, 1e-3));
        }
    }

    #[test]
    fn d_and_w_scale_as_powers(s in sample_strategy(8..20), lambda in 0.1..10.0f64) {
        let zero = vec![0.0; s.p()];
        let k0 = SegmentSummaries::new(&s);
        let k1 = SegmentSummaries::new(&s.affine(lambda, &zero));
        let n = s.n();
        for split in 2..=n - 2 {
            let d0 = k0.d_stat(0, split, n).unwrap();
            prop_assert!(close(k1.d_stat(0, split, n).unwrap(), lambda.powi(2) * d0, 1e-10, 1e-12));
            let w0 = k0.w_normalizer(0, split, n).unwrap();
            prop_assert!(close(k1.w_normalizer(0, split, n).unwrap(), lambda.powi(4) * w0, 1e-10, 1e-12));
        }
    }

    #[test]
    fn time_reversal_mirrors_d(s in sample_strategy(8..20)) {
        let n = s.n();
        let fwd = SegmentSummaries::new(&s);
        let rev = SegmentSummaries::new(&s.reversed());
        for k in 2..=n - 2 {
            prop_assert!(close(rev.d_stat(0, n - k, n).unwrap(), fwd.d_stat(0, k, n).unwrap(), 1e-9, 1e-6));
        }
    }

    #[test]
    fn normalizer_matches_bruteforce_composition(s in sample_strategy(8..15)) {
        let n = s.n();
        let k = SegmentSummaries::new(&s);
        for split in 2..=n - 2 {
            let mut acc = 0.0;
            for t in 2..split.saturating_sub(1) {
                acc += d_stat_bruteforce(&s, 0, t, split).unwrap().powi(2);
            }
            if split + 4 <= n {
                for t in split + 2..=n - 2 {
                    acc += d_stat_bruteforce(&s, split - 1, t, n).unwrap().powi(2);
                }
            }
            prop_assert!(close(k.w_normalizer(0, split, n).unwrap(), acc / n as f64, 1e-9, 1e-9));
            prop_assert!(close(k.v_normalizer(0, split, n).unwrap(), acc / n as f64, 1e-9, 1e-9));
        }
    }

    #[test]
    fn statistics_are_affine_invariant(
        s in sample_strategy(40..41),
        lambda in 0.2..5.0f64,
        c in -10.0..10.0f64,
    ) {
        let shift: Vec<f64> = (0..s.p()).map(|j| c + j as f64).collect();
        let perm: Vec<usize> = (0..s.p()).rev().collect();
        let y = s.affine(lambda, &shift).permute_columns(&perm);
        let (a, _) = t_n_statistic(&s).unwrap();
        let (b, _) = t_n_statistic(&y).unwrap();
        prop_assert!(close(b, a, 1e-9, 0.0));
        for kind in [GridKind::Full, GridKind::Discretized] {
            let g = ScanGrid::new(40, 0.1, kind).unwrap();
            let a = scan_statistic(&s, &g).unwrap().value;
            let b = scan_statistic(&y, &g).unwrap().value;
            prop_assert!(close(b, a, 1e-9, 0.0));
        }
    }
}
