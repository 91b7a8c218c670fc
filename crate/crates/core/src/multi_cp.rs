// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scan statistics `T_n*` (full grid) and `T_n⋄` (discretized grid) that
//! stay powerful when the number of change points is unknown.
//!
//! Pairs are 1-based positions `(k1, k2)` with `(k1/n, k2/n)` in
//! `Ω(ε) = {(t1, t2) ∈ [ε, 1-ε]²: t2 - t1 >= ε}`. A forward pair `(l1, l2)`
//! tests a split after `l1` within `1..=l2`; a backward pair `(m1, m2)` tests a
//! split after `m2` within `m1..=n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_values::{builtin_table, QuantileTable, StatisticKind};
use crate::error::{Error, Result};
use crate::sample::SampleMatrix;
use crate::scalar::Scalar;
use crate::segment_stats::{SegmentEvaluator, SegmentKernel};
use crate::single_cp::{check_not_constant, expect_kind, ScanArgmax, TestOutcome};

/// Default trimming parameter.
pub const DEFAULT_EPSILON: f64 = 0.1;

const GRID_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Full,
    Discretized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanGrid {
    pub n: usize,
    pub epsilon: f64,
    pub kind: GridKind,
    pub pairs_forward: Vec<(usize, usize)>,
    pub pairs_backward: Vec<(usize, usize)>,
}

/// Points of `G_ε = {jε/2 : j ∈ ℤ} ∩ [0, 1]`.
pub fn grid_points(epsilon: f64) -> Vec<f64> {
    let half = epsilon / 2.0;
    let count = (1.0 / half + GRID_TOL).floor() as usize;
    (0..=count).map(|j| j as f64 * half).collect()
}

/// Whether `(k1/n, k2/n)` lies in `Ω(ε)`.
pub fn in_omega(k1: usize, k2: usize, n: usize, epsilon: f64) -> bool {
    let nf = n as f64;
    let lo = epsilon * nf - GRID_TOL;
    let hi = (1.0 - epsilon) * nf + GRID_TOL;
    k1 < k2 && (k1 as f64) >= lo && (k2 as f64) <= hi && ((k2 - k1) as f64) >= lo
}

impl ScanGrid {
    pub fn new(n: usize, epsilon: f64, kind: GridKind) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.25) {
            return Err(Error::invalid(format!(
                "epsilon must lie in (0, 1/4), got {epsilon}"
            )));
        }
        if (n as f64) * epsilon < 4.0 {
            return Err(Error::invalid(format!(
                "n * epsilon must be >= 4, got {n} * {epsilon}"
            )));
        }
        let full: Vec<(usize, usize)> = (1..=n)
            .flat_map(|k1| (k1 + 1..=n).map(move |k2| (k1, k2)))
            .filter(|&(k1, k2)| in_omega(k1, k2, n, epsilon))
            .collect();
        let (pairs_forward, pairs_backward) = match kind {
            GridKind::Full => (full.clone(), full),
            GridKind::Discretized => {
                // ⌊t·n⌋ ∨ 1 for t on the grid
                let marks: Vec<usize> = grid_points(epsilon)
                    .iter()
                    .map(|t| ((t * n as f64 + GRID_TOL).floor() as usize).max(1))
                    .collect();
                let fwd = full.iter().copied().filter(|(_, k2)| marks.contains(k2)).collect();
                let bwd = full.iter().copied().filter(|(k1, _)| marks.contains(k1)).collect();
                (fwd, bwd)
            }
        };
        Ok(Self {
            n,
            epsilon,
            kind,
            pairs_forward,
            pairs_backward,
        })
    }
}

/// Same as [`ScanGrid::new`].
pub fn build_grid(n: usize, epsilon: f64, kind: GridKind) -> Result<ScanGrid> {
    ScanGrid::new(n, epsilon, kind)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanValue {
    pub value: f64,
    pub argmax: ScanArgmax,
}

/// Largest ratio over `pairs`; ties resolve to the earliest pair.
fn best_pair<T: Scalar, K: SegmentKernel<T>>(
    kernel: &K,
    pairs: &[(usize, usize)],
    segment: impl Fn(usize, usize) -> (usize, usize, usize) + Sync,
) -> Option<(T, usize)> {
    let n = T::of_usize(kernel.n());
    pairs
        .par_iter()
        .enumerate()
        .filter_map(|(idx, &(a, b))| {
            let (start, split, end) = segment(a, b);
            let w = kernel.normalizer_sum(start, split, end) / n;
            if !(w > T::zero()) {
                return None;
            }
            let d = kernel.d_unchecked(start, split, end);
            Some((d * d / w, idx))
        })
        .reduce_with(|x, y| {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                y
            } else {
                x
            }
        })
}

/// Scan statistic over `grid`: forward maximum of `D(l1; 1, l2)² / W_n(l1; 1, l2)`
/// plus backward maximum of `D(m2; m1, n)² / W_n(m2; m1, n)`. Pairs with a
/// vanishing normalizer are skipped.
pub fn scan_statistic<T: Scalar>(sample: &SampleMatrix<T>, grid: &ScanGrid) -> Result<ScanValue> {
    if grid.n != sample.n() {
        return Err(Error::Shape(format!(
            "grid built for n = {}, sample has n = {}",
            grid.n,
            sample.n()
        )));
    }
    check_not_constant(sample)?;
    let kernel = SegmentEvaluator::new(sample);
    scan_on(&kernel, grid)
}

pub(crate) fn scan_on<T: Scalar, K: SegmentKernel<T>>(kernel: &K, grid: &ScanGrid) -> Result<ScanValue> {
    let n = grid.n;
    let fwd = best_pair(kernel, &grid.pairs_forward, |l1, l2| (0, l1, l2));
    let bwd = best_pair(kernel, &grid.pairs_backward, |m1, m2| (m1 - 1, m2, n));
    match (fwd, bwd) {
        (Some((fv, fi)), Some((bv, bi))) => Ok(ScanValue {
            value: (fv + bv).as_f64(),
            argmax: ScanArgmax {
                forward: grid.pairs_forward[fi],
                forward_value: fv.as_f64(),
                backward: grid.pairs_backward[bi],
                backward_value: bv.as_f64(),
            },
        }),
        (None, _) => Err(Error::degenerate("every forward-scan normalizer is zero")),
        (_, None) => Err(Error::degenerate("every backward-scan normalizer is zero")),
    }
}

fn scan_test<T: Scalar>(
    sample: &SampleMatrix<T>,
    epsilon: f64,
    kind: GridKind,
    alpha: f64,
    table: &QuantileTable,
) -> Result<TestOutcome> {
    let expected = match kind {
        GridKind::Full => StatisticKind::TStar,
        GridKind::Discretized => StatisticKind::TDiamond,
    };
    expect_kind(table, expected)?;
    if let Some(eps) = table.epsilon {
        if (eps - epsilon).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "quantile table calibrated at epsilon = {eps}, test uses {epsilon}"
            )));
        }
    }
    let grid = ScanGrid::new(sample.n(), epsilon, kind)?;
    let s = scan_statistic(sample, &grid)?;
    TestOutcome::decide(s.value, alpha, table, None, Some(s.argmax))
}

/// `T_n*` test; the full scan has no built-in quantiles, so a simulated
/// table is required.
pub fn t_n_star<T: Scalar>(
    sample: &SampleMatrix<T>,
    epsilon: f64,
    alpha: f64,
    table: &QuantileTable,
) -> Result<TestOutcome> {
    scan_test(sample, epsilon, GridKind::Full, alpha, table)
}

/// `T_n⋄` test with the built-in quantiles (available for ε = 0.1 only).
pub fn t_n_diamond<T: Scalar>(
    sample: &SampleMatrix<T>,
    epsilon: f64,
    alpha: f64,
) -> Result<TestOutcome> {
    let table = builtin_table(StatisticKind::TDiamond)?;
    scan_test(sample, epsilon, GridKind::Discretized, alpha, &table)
}

pub fn t_n_diamond_with_table<T: Scalar>(
    sample: &SampleMatrix<T>,
    epsilon: f64,
    alpha: f64,
    table: &QuantileTable,
) -> Result<TestOutcome> {
    scan_test(sample, epsilon, GridKind::Discretized, alpha, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{gen_gaussian, CovarianceSpec, MeanChangeSpec};

    #[test]
    fn full_grid_size_matches_enumeration() {
        let grid = ScanGrid::new(100, 0.1, GridKind::Full).unwrap();
        let mut count = 0;
        for k1 in 10..=90 {
            for k2 in k1 + 1..=90 {
                if k2 - k1 >= 10 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 2556);
        assert_eq!(grid.pairs_forward.len(), count);
        assert_eq!(grid.pairs_backward.len(), count);
    }

    #[test]
    fn epsilon_bounds() {
        assert!(ScanGrid::new(100, 0.3, GridKind::Full).is_err());
        assert!(ScanGrid::new(100, 0.25, GridKind::Full).is_err());
        assert!(ScanGrid::new(100, 0.2, GridKind::Full).is_ok());
        assert!(ScanGrid::new(100, 0.0, GridKind::Full).is_err());
        assert!(ScanGrid::new(30, 0.1, GridKind::Full).is_err());
    }

    #[test]
    fn twenty_one_grid_points() {
        let g = grid_points(0.1);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert!((g[20] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discretized_grid_is_a_subset_on_the_mark_lattice() {
        let full = ScanGrid::new(100, 0.1, GridKind::Full).unwrap();
        let disc = ScanGrid::new(100, 0.1, GridKind::Discretized).unwrap();
        assert!(disc.pairs_forward.iter().all(|p| full.pairs_forward.contains(p)));
        assert!(disc.pairs_backward.iter().all(|p| full.pairs_backward.contains(p)));
        assert!(disc.pairs_forward.iter().all(|&(_, k2)| k2 % 5 == 0));
        assert!(disc.pairs_backward.iter().all(|&(k1, _)| k1 % 5 == 0));
        // t2 ∈ {0.2, ..., 0.9}: 15 marks, l1 ranges over 10..=k2-10
        let expected: usize = (4..=18).map(|j| 5 * j - 19).sum();
        assert_eq!(disc.pairs_forward.len(), expected);
        assert_eq!(disc.pairs_backward.len(), expected);
    }

    #[test]
    fn larger_epsilon_shrinks_grids() {
        let a = ScanGrid::new(100, 0.1, GridKind::Full).unwrap();
        let b = ScanGrid::new(100, 0.15, GridKind::Full).unwrap();
        assert!(b.pairs_forward.iter().all(|p| a.pairs_forward.contains(p)));
        assert!(b.pairs_forward.len() < a.pairs_forward.len());
        // the discretized marks move with epsilon, so only the size shrinks
        let a = ScanGrid::new(100, 0.1, GridKind::Discretized).unwrap();
        let b = ScanGrid::new(100, 0.15, GridKind::Discretized).unwrap();
        assert!(b.pairs_forward.len() < a.pairs_forward.len());
        assert!(b.pairs_backward.len() < a.pairs_backward.len());
    }

    #[test]
    fn diamond_never_exceeds_star() {
        let cov = CovarianceSpec::identity(5);
        let full = ScanGrid::new(60, 0.1, GridKind::Full).unwrap();
        let disc = ScanGrid::new(60, 0.1, GridKind::Discretized).unwrap();
        for seed in 0..20 {
            let s = gen_gaussian(60, &cov, &MeanChangeSpec::none(), seed).unwrap();
            let star = scan_statistic(&s, &full).unwrap().value;
            let diamond = scan_statistic(&s, &disc).unwrap().value;
            assert!(diamond <= star, "seed {seed}: {diamond} > {star}");
        }
    }

    #[test]
    fn diamond_builtin_critical_values() {
        let s = gen_gaussian(100, &CovarianceSpec::identity(10), &MeanChangeSpec::none(), 1).unwrap();
        assert_eq!(t_n_diamond(&s, 0.1, 0.05).unwrap().critical_value, 10410.19);
        assert_eq!(t_n_diamond(&s, 0.1, 0.01).unwrap().critical_value, 14603.51);
        assert!(t_n_diamond(&s, 0.15, 0.05).is_err());
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let s = SampleMatrix::from_rows(&vec![[0.5_f64, 0.5]; 50]).unwrap();
        assert!(t_n_diamond(&s, 0.1, 0.05).unwrap_err().is_degenerate());
    }
}
