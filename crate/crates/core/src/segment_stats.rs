// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segment-level U-statistic quantities.
//!
//! All indices are 0-based and half-open. A query `(start, split, end)`
//! compares the left segment `start..split` against the right segment
//! `split..end`. In the 1-based closed notation `D(k; l, m)` used in the
//! literature this corresponds to `start = l - 1`, `split = k`, `end = m`;
//! [`from_one_based`] performs that mapping.
//!
//! `D` is returned divided by `n³` and the normalizers divided by `n⁶`, where
//! `n` is the length of the full sample the summaries were built from. Ratio
//! statistics are unaffected by this scaling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sample::SampleMatrix;
use crate::scalar::Scalar;

/// Largest `n` accepted by [`d_stat_bruteforce`].
pub const BRUTEFORCE_MAX_N: usize = 40;

/// Largest `n` for which [`SegmentEvaluator::new`] materializes a prefix Gram matrix.
pub const GRAM_MAX_N: usize = 4096;

/// Maps the 1-based closed triple `(k, l, m)` to `(start, split, end)`,
/// checking `1 <= l <= k < m <= n`.
pub fn from_one_based(k: usize, l: usize, m: usize, n: usize) -> Result<(usize, usize, usize)> {
    if l < 1 {
        return Err(Error::IndexOrder(format!("1 <= l failed (l = {l})")));
    }
    if l > k {
        return Err(Error::IndexOrder(format!("l <= k failed (l = {l}, k = {k})")));
    }
    if k >= m {
        return Err(Error::IndexOrder(format!("k < m failed (k = {k}, m = {m})")));
    }
    if m > n {
        return Err(Error::IndexOrder(format!("m <= n failed (m = {m}, n = {n})")));
    }
    Ok((l - 1, k, m))
}

fn check_order(start: usize, split: usize, end: usize, n: usize) -> Result<()> {
    if start >= split {
        return Err(Error::IndexOrder(format!(
            "start < split failed (start = {start}, split = {split})"
        )));
    }
    if split >= end {
        return Err(Error::IndexOrder(format!(
            "split < end failed (split = {split}, end = {end})"
        )));
    }
    if end > n {
        return Err(Error::IndexOrder(format!("end <= n failed (end = {end}, n = {n})")));
    }
    Ok(())
}

/// Source of segment sums sufficient to evaluate `D` in closed form.
///
/// Implementors supply inner products of segment sums; everything else is
/// derived here.
pub trait SegmentKernel<T: Scalar>: Sync {
    /// Length of the underlying sample.
    fn n(&self) -> usize;

    /// `C(a..b)ᵀ C(c..d)` where `C(a..b) = Σ_{a <= i < b} Y_i`.
    fn cross(&self, a: usize, b: usize, c: usize, d: usize) -> T;

    /// `Σ_{a <= i < b} ‖Y_i‖²`.
    fn sqnorm_sum(&self, a: usize, b: usize) -> T;

    /// Scaled `D` without index validation. Zero unless both sides hold at
    /// least two points.
    fn d_unchecked(&self, start: usize, split: usize, end: usize) -> T {
        if split < start + 2 || end < split + 2 {
            return T::zero();
        }
        let n = T::of_usize(self.n());
        let n3 = n * n * n;
        let n1 = T::of_usize(split - start);
        let n2 = T::of_usize(end - split);
        let one = T::one();
        // 2P(a, b) = ‖C(a, b)‖² − Σ ‖Y_i‖²
        let two_p_left = self.cross(start, split, start, split) - self.sqnorm_sum(start, split);
        let two_p_right = self.cross(split, end, split, end) - self.sqnorm_sum(split, end);
        let between = self.cross(start, split, split, end);
        let two = one + one;
        (n2 * (n2 - one) * two_p_left + n1 * (n1 - one) * two_p_right
            - two * (n1 - one) * (n2 - one) * between)
            / n3
    }

    /// `D / n³` for the split `start..split | split..end`.
    fn d_stat(&self, start: usize, split: usize, end: usize) -> Result<T> {
        check_order(start, split, end, self.n())?;
        Ok(self.d_unchecked(start, split, end))
    }

    /// Sum of squared sub-sample statistics shared by the `W` and `V`
    /// normalizers, scaled by `1/n⁶`.
    ///
    /// Left part: `D(start, t, split)` for `t` in `start+2 ..= split-2`.
    /// Right part: `D(split-1, t, end)` for `t` in `split+2 ..= end-2`; the
    /// right sub-sample starts one point early, at the last point of the
    /// left segment.
    fn normalizer_sum(&self, start: usize, split: usize, end: usize) -> T {
        let mut acc = T::zero();
        if split >= start + 4 {
            for t in start + 2..=split - 2 {
                let d = self.d_unchecked(start, t, split);
                acc = acc + d * d;
            }
        }
        if end >= split + 4 && split >= 1 {
            for t in split + 2..=end - 2 {
                let d = self.d_unchecked(split - 1, t, end);
                acc = acc + d * d;
            }
        }
        acc
    }

    /// `W / n⁶` with the `1/n` prefactor of the full sample.
    fn w_normalizer(&self, start: usize, split: usize, end: usize) -> Result<T> {
        check_order(start, split, end, self.n())?;
        Ok(self.normalizer_sum(start, split, end) / T::of_usize(self.n()))
    }

    /// `V / n⁶` with the `1/(end - start)` prefactor of the sub-sample.
    fn v_normalizer(&self, start: usize, split: usize, end: usize) -> Result<T> {
        check_order(start, split, end, self.n())?;
        Ok(self.normalizer_sum(start, split, end) / T::of_usize(end - start))
    }

    /// Unscaled two-sample U-statistic `G_n(k)` for `2 <= k <= n - 2`.
    fn g_diag(&self, k: usize) -> Result<T> {
        let n = self.n();
        if k < 2 || k + 2 > n {
            return Err(Error::invalid(format!(
                "g_diag needs 2 <= k <= n - 2, got k = {k} with n = {n}"
            )));
        }
        let nf = T::of_usize(n);
        let kf = T::of_usize(k);
        let rf = T::of_usize(n - k);
        let one = T::one();
        let d = self.d_unchecked(0, k, n);
        // D/n³ · n³ / [k(k−1)(n−k)(n−k−1)], grouped to stay in range
        Ok(d * (nf / kf) * (nf / (kf - one)) * (nf / (rf * (rf - one))))
    }
}

/// Prefix sums of the observations and of their squared norms.
///
/// `O(np)` memory; each [`SegmentKernel::cross`] costs `O(p)`.
#[derive(Clone, Debug)]
pub struct SegmentSummaries<T> {
    n: usize,
    p: usize,
    cum_sum: Vec<T>,
    cum_sqnorm: Vec<T>,
}

impl<T: Scalar> SegmentSummaries<T> {
    pub fn new(sample: &SampleMatrix<T>) -> Self {
        let (n, p) = (sample.n(), sample.p());
        let mut cum_sum = vec![T::zero(); (n + 1) * p];
        let mut cum_sqnorm = vec![T::zero(); n + 1];
        for (t, row) in sample.rows().enumerate() {
            let (prev, next) = cum_sum.split_at_mut((t + 1) * p);
            let prev = &prev[t * p..];
            let mut sq = T::zero();
            for j in 0..p {
                next[j] = prev[j] + row[j];
                sq = sq + row[j] * row[j];
            }
            cum_sqnorm[t + 1] = cum_sqnorm[t] + sq;
        }
        Self {
            n,
            p,
            cum_sum,
            cum_sqnorm,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `Σ_{i < t} Y_i`, for `t` in `0..=n`.
    pub fn cum_sum(&self, t: usize) -> &[T] {
        &self.cum_sum[t * self.p..(t + 1) * self.p]
    }

    /// `Σ_{i < t} ‖Y_i‖²` for every `t` in `0..=n`.
    pub fn cum_sqnorm(&self) -> &[T] {
        &self.cum_sqnorm
    }
}

impl<T: Scalar> SegmentKernel<T> for SegmentSummaries<T> {
    fn n(&self) -> usize {
        self.n
    }

    fn cross(&self, a: usize, b: usize, c: usize, d: usize) -> T {
        let (sa, sb) = (self.cum_sum(a), self.cum_sum(b));
        let (sc, sd) = (self.cum_sum(c), self.cum_sum(d));
        (0..self.p)
            .map(|j| (sb[j] - sa[j]) * (sd[j] - sc[j]))
            .sum()
    }

    fn sqnorm_sum(&self, a: usize, b: usize) -> T {
        self.cum_sqnorm[b] - self.cum_sqnorm[a]
    }
}

/// Gram matrix of the prefix sums of the column-centered sample.
///
/// `O(n² p)` to build and `O(n²)` memory, after which every
/// [`SegmentKernel::cross`] is four lookups. Centering leaves every `D` value
/// unchanged and keeps the prefix sums small.
#[derive(Clone, Debug)]
pub struct PrefixGram<T> {
    n: usize,
    gram: Vec<T>,
    cum_sqnorm: Vec<T>,
}

impl<T: Scalar> PrefixGram<T> {
    pub fn new(sample: &SampleMatrix<T>) -> Self {
        let centered = sample.centered();
        let summ = SegmentSummaries::new(&centered);
        let n = summ.n;
        let stride = n + 1;
        let mut gram = vec![T::zero(); stride * stride];
        gram.par_chunks_mut(stride).enumerate().for_each(|(a, row)| {
            let sa = summ.cum_sum(a);
            for (b, g) in row.iter_mut().enumerate().skip(a) {
                let sb = summ.cum_sum(b);
                *g = sa.iter().zip(sb).map(|(&x, &y)| x * y).sum();
            }
        });
        for a in 0..stride {
            for b in 0..a {
                gram[a * stride + b] = gram[b * stride + a];
            }
        }
        Self {
            n,
            gram,
            cum_sqnorm: summ.cum_sqnorm,
        }
    }

    #[inline]
    fn g(&self, a: usize, b: usize) -> T {
        self.gram[a * (self.n + 1) + b]
    }
}

impl<T: Scalar> SegmentKernel<T> for PrefixGram<T> {
    fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn cross(&self, a: usize, b: usize, c: usize, d: usize) -> T {
        self.g(b, d) - self.g(b, c) - self.g(a, d) + self.g(a, c)
    }

    #[inline]
    fn sqnorm_sum(&self, a: usize, b: usize) -> T {
        self.cum_sqnorm[b] - self.cum_sqnorm[a]
    }
}

/// Kernel used by the test statistics: a [`PrefixGram`] when it fits in
/// memory, plain [`SegmentSummaries`] of the centered sample otherwise.
#[derive(Clone, Debug)]
pub enum SegmentEvaluator<T> {
    Gram(PrefixGram<T>),
    Summaries(SegmentSummaries<T>),
}

impl<T: Scalar> SegmentEvaluator<T> {
    pub fn new(sample: &SampleMatrix<T>) -> Self {
        if sample.n() <= GRAM_MAX_N {
            Self::Gram(PrefixGram::new(sample))
        } else {
            Self::Summaries(SegmentSummaries::new(&sample.centered()))
        }
    }
}

impl<T: Scalar> SegmentKernel<T> for SegmentEvaluator<T> {
    fn n(&self) -> usize {
        match self {
            Self::Gram(g) => g.n(),
            Self::Summaries(s) => s.n(),
        }
    }

    #[inline]
    fn cross(&self, a: usize, b: usize, c: usize, d: usize) -> T {
        match self {
            Self::Gram(g) => g.cross(a, b, c, d),
            Self::Summaries(s) => s.cross(a, b, c, d),
        }
    }

    #[inline]
    fn sqnorm_sum(&self, a: usize, b: usize) -> T {
        match self {
            Self::Gram(g) => g.sqnorm_sum(a, b),
            Self::Summaries(s) => s.sqnorm_sum(a, b),
        }
    }
}

/// `D / n³` by the literal quadruple sum over `j1 != j3` in the left segment
/// and `j2 != j4` in the right segment. `O(n⁴ p)`; limited to
/// `n <= BRUTEFORCE_MAX_N`.
pub fn d_stat_bruteforce<T: Scalar>(
    sample: &SampleMatrix<T>,
    start: usize,
    split: usize,
    end: usize,
) -> Result<T> {
    let n = sample.n();
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::SizeGuard {
            n,
            max: BRUTEFORCE_MAX_N,
        });
    }
    check_order(start, split, end, n)?;
    let mut acc = T::zero();
    for j1 in start..split {
        for j3 in start..split {
            if j1 == j3 {
                continue;
            }
            for j2 in split..end {
                for j4 in split..end {
                    if j2 == j4 {
                        continue;
                    }
                    let (y1, y2, y3, y4) =
                        (sample.row(j1), sample.row(j2), sample.row(j3), sample.row(j4));
                    let h: T = (0..sample.p())
                        .map(|c| (y1[c] - y2[c]) * (y3[c] - y4[c]))
                        .sum();
                    acc = acc + h;
                }
            }
        }
    }
    let nf = T::of_usize(n);
    Ok(acc / (nf * nf * nf))
}
