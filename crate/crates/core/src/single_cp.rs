// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-normalized single change point test and Kolmogorov–Smirnov type
//! comparators with jackknife estimates of `‖Σ‖_F²`.

use serde::{Deserialize, Serialize};

use crate::critical_values::{builtin_table, QuantileTable, StatisticKind, TableInfo};
use crate::error::{Error, Result};
use crate::sample::SampleMatrix;
use crate::scalar::Scalar;
use crate::segment_stats::{SegmentEvaluator, SegmentKernel};

/// Location of the maximizing pairs of a scan statistic (0-based half-open
/// boundaries: the forward term splits `0..l2` at `l1`, the backward term
/// splits `m1-1..n` at `m2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanArgmax {
    pub forward: (usize, usize),
    pub forward_value: f64,
    pub backward: (usize, usize),
    pub backward_value: f64,
}

/// Result of a hypothesis test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Estimated change location `k`: the change happens between
    /// observations `k` and `k + 1` (1-based), i.e. before row `k` (0-based).
    pub argmax_k: Option<usize>,
    pub scan: Option<ScanArgmax>,
    pub calibration: TableInfo,
}

impl TestOutcome {
    pub(crate) fn decide(
        statistic: f64,
        alpha: f64,
        table: &QuantileTable,
        argmax_k: Option<usize>,
        scan: Option<ScanArgmax>,
    ) -> Result<Self> {
        let critical_value = table.critical_value(alpha)?;
        Ok(Self {
            statistic,
            critical_value,
            alpha,
            reject: statistic > critical_value,
            argmax_k,
            scan,
            calibration: table.info(),
        })
    }
}

pub(crate) fn expect_kind(table: &QuantileTable, kind: StatisticKind) -> Result<()> {
    if table.kind != kind {
        return Err(Error::invalid(format!(
            "quantile table is for {:?}, expected {kind:?}",
            table.kind
        )));
    }
    Ok(())
}

/// Maximum of `D(start, split, end)² / (normalizer_sum / denom_len)` over
/// `split` in `lo..=hi`, skipping splits with a zero normalizer. Returns the
/// smallest maximizing split, or `None` if every normalizer vanished.
pub(crate) fn max_sn_ratio<T: Scalar, K: SegmentKernel<T> + ?Sized>(
    kernel: &K,
    start: usize,
    end: usize,
    lo: usize,
    hi: usize,
    denom_len: usize,
) -> Option<(T, usize)> {
    let len = T::of_usize(denom_len);
    let mut best: Option<(T, usize)> = None;
    for split in lo..=hi {
        let w = kernel.normalizer_sum(start, split, end) / len;
        if !(w > T::zero()) {
            continue;
        }
        let d = kernel.d_unchecked(start, split, end);
        let r = d * d / w;
        if best.is_none_or(|(b, _)| r > b) {
            best = Some((r, split));
        }
    }
    best
}

pub(crate) fn check_not_constant<T: Scalar>(sample: &SampleMatrix<T>) -> Result<()> {
    if sample.is_constant() {
        return Err(Error::degenerate(
            "all observations are identical; every normalizer is zero",
        ));
    }
    Ok(())
}

/// `T_n` and its smallest maximizing `k` (`2 <= k <= n - 3`).
pub fn t_n_statistic<T: Scalar>(sample: &SampleMatrix<T>) -> Result<(T, usize)> {
    let n = sample.n();
    if n < 6 {
        return Err(Error::invalid(format!("T_n needs n >= 6, got n = {n}")));
    }
    check_not_constant(sample)?;
    let kernel = SegmentEvaluator::new(sample);
    t_n_on(&kernel, 0, n)
        .ok_or_else(|| Error::degenerate("every self-normalizer W_n(k; 1, n) is zero"))
}

/// `T_n` computed on the sub-sample `start..end` of a kernel, as if that
/// sub-sample were the whole data set.
pub(crate) fn t_n_on<T: Scalar, K: SegmentKernel<T> + ?Sized>(
    kernel: &K,
    start: usize,
    end: usize,
) -> Option<(T, usize)> {
    let len = end - start;
    max_sn_ratio(kernel, start, end, start + 2, end - 3, len).map(|(v, s)| (v, s - start))
}

/// `T_n` test at level `alpha` using the built-in quantiles of its limit.
pub fn t_n<T: Scalar>(sample: &SampleMatrix<T>, alpha: f64) -> Result<TestOutcome> {
    t_n_with_table(sample, alpha, &builtin_table(StatisticKind::T)?)
}

/// `T_n` test with caller-supplied critical values.
pub fn t_n_with_table<T: Scalar>(
    sample: &SampleMatrix<T>,
    alpha: f64,
    table: &QuantileTable,
) -> Result<TestOutcome> {
    expect_kind(table, StatisticKind::T)?;
    let (value, k) = t_n_statistic(sample)?;
    TestOutcome::decide(value.as_f64(), alpha, table, Some(k), None)
}

/// Which jackknife estimate of `‖Σ‖_F²` to form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrobeniusVariant {
    /// Average of separate estimates before and after `k̂`.
    PrePostAverage,
    /// One estimate on the sample demeaned separately on each side of `k̂`.
    DemeanedFull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusEstimate {
    /// Estimate of `‖Σ‖_F²`; always positive.
    pub value: f64,
    pub variant: FrobeniusVariant,
    pub khat: usize,
    /// Set when the raw estimate was not positive and `value` is a floor.
    pub clamped: bool,
}

/// Leave-two-out jackknife estimate of `tr(Σ²)` from rows `rows` of `sample`:
/// `1/(m(m-1)) Σ_{j1≠j2} [X_{j1}ᵀ(X_{j2} − X̄_{(j1,j2)})]·[X_{j2}ᵀ(X_{j1} − X̄_{(j1,j2)})]`,
/// with `X̄_{(j1,j2)}` the block mean without `j1` and `j2`.
fn jackknife_trace<T: Scalar>(rows: &[&[T]]) -> f64 {
    let m = rows.len();
    let p = rows[0].len();
    let dot = |a: &[T], b: &[T]| -> f64 { a.iter().zip(b).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum() };
    let mut total = vec![0.0f64; p];
    for r in rows {
        for (t, &v) in total.iter_mut().zip(r.iter()) {
            *t += v.as_f64();
        }
    }
    let gram: Vec<f64> = (0..m * m)
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            if j < i {
                0.0
            } else {
                dot(rows[i], rows[j])
            }
        })
        .collect();
    let g = |i: usize, j: usize| if i <= j { gram[i * m + j] } else { gram[j * m + i] };
    let s: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&total).map(|(&x, &t)| x.as_f64() * t).sum())
        .collect();
    let denom = (m - 2) as f64;
    let mut acc = 0.0;
    for j1 in 0..m {
        for j2 in 0..m {
            if j1 == j2 {
                continue;
            }
            let g12 = g(j1, j2);
            let a = g12 - (s[j1] - g(j1, j1) - g12) / denom;
            let b = g12 - (s[j2] - g(j2, j2) - g12) / denom;
            acc += a * b;
        }
    }
    acc / (m as f64 * (m as f64 - 1.0))
}

/// `argmax_{k = 2..n-3} D(k; 1, n)²`, smallest index on ties.
pub fn khat<T: Scalar>(sample: &SampleMatrix<T>) -> Result<usize> {
    let n = sample.n();
    if n < 6 {
        return Err(Error::invalid(format!("k-hat needs n >= 6, got n = {n}")));
    }
    let kernel = SegmentEvaluator::new(sample);
    let mut best = (T::neg_infinity(), 2);
    for k in 2..=n - 3 {
        let d = kernel.d_unchecked(0, k, n);
        if d * d > best.0 {
            best = (d * d, k);
        }
    }
    Ok(best.1)
}

/// Jackknife estimate of `‖Σ‖_F²` around the un-normalized change location `k̂`.
pub fn frobenius_jackknife<T: Scalar>(
    sample: &SampleMatrix<T>,
    variant: FrobeniusVariant,
) -> Result<FrobeniusEstimate> {
    let n = sample.n();
    if n < 8 {
        return Err(Error::invalid(format!(
            "jackknife estimate needs n >= 8, got n = {n}"
        )));
    }
    let k = khat(sample)?;
    if k < 4 {
        return Err(Error::SegmentTooShort {
            segment: "pre-break",
            len: k,
            min: 4,
        });
    }
    if n - k < 4 {
        return Err(Error::SegmentTooShort {
            segment: "post-break",
            len: n - k,
            min: 4,
        });
    }
    let rows: Vec<&[T]> = sample.rows().collect();
    let raw = match variant {
        FrobeniusVariant::PrePostAverage => {
            0.5 * (jackknife_trace(&rows[..k]) + jackknife_trace(&rows[k..]))
        }
        FrobeniusVariant::DemeanedFull => {
            let pre = sample.slice_rows(0, k).centered();
            let post = sample.slice_rows(k, n).centered();
            let demeaned: Vec<&[T]> = pre.rows().chain(post.rows()).collect();
            jackknife_trace(&demeaned)
        }
    };
    let mean_sq: f64 = sample
        .rows()
        .map(|r| r.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let floor = (f64::EPSILON * mean_sq * mean_sq).max(f64::MIN_POSITIVE);
    let clamped = !(raw > 0.0);
    Ok(FrobeniusEstimate {
        value: if clamped { floor } else { raw },
        variant,
        khat: k,
        clamped,
    })
}

/// Kolmogorov–Smirnov type statistic variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsVariant {
    /// Normalized by the pre/post averaged jackknife estimate.
    Ks1,
    /// Normalized by the demeaned full-sample jackknife estimate.
    Ks2,
    /// Normalized by the true `‖Σ‖_F` (infeasible).
    KsInf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsStatistic {
    pub value: f64,
    pub argmax_k: usize,
    pub sigma_f: f64,
    pub frobenius: Option<FrobeniusEstimate>,
}

/// `max_k |D(k; 1, n)| / (n³ ‖Σ‖_F)` with `‖Σ‖_F` estimated or supplied.
pub fn ks_statistic<T: Scalar>(
    sample: &SampleMatrix<T>,
    variant: KsVariant,
    sigma_f_true: Option<f64>,
) -> Result<KsStatistic> {
    let n = sample.n();
    let (sigma_f, frobenius) = match variant {
        KsVariant::KsInf => {
            let s = sigma_f_true
                .ok_or_else(|| Error::invalid("ks_inf requires the true Frobenius norm"))?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("Frobenius norm must be positive, got {s}")));
            }
            (s, None)
        }
        KsVariant::Ks1 | KsVariant::Ks2 => {
            let v = if variant == KsVariant::Ks1 {
                FrobeniusVariant::PrePostAverage
            } else {
                FrobeniusVariant::DemeanedFull
            };
            let est = frobenius_jackknife(sample, v)?;
            (est.value.sqrt(), Some(est))
        }
    };
    if n < 2 {
        return Err(Error::invalid(format!("KS statistic needs n >= 2, got n = {n}")));
    }
    let kernel = SegmentEvaluator::new(sample);
    let mut best = (0.0f64, 1usize);
    for k in 1..n {
        let d = kernel.d_unchecked(0, k, n).as_f64().abs();
        if d > best.0 {
            best = (d, k);
        }
    }
    Ok(KsStatistic {
        value: best.0 / sigma_f,
        argmax_k: best.1,
        sigma_f,
        frobenius,
    })
}

/// KS type test; `table` must hold quantiles of the identically normalized
/// statistic under the null (kind [`StatisticKind::KsRef`]).
pub fn ks_test<T: Scalar>(
    sample: &SampleMatrix<T>,
    variant: KsVariant,
    sigma_f_true: Option<f64>,
    alpha: f64,
    table: &QuantileTable,
) -> Result<TestOutcome> {
    expect_kind(table, StatisticKind::KsRef)?;
    let s = ks_statistic(sample, variant, sigma_f_true)?;
    TestOutcome::decide(s.value, alpha, table, Some(s.argmax_k), None)
}
