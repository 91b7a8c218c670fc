// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiple change point estimation: self-normalized wild binary
//! segmentation, plain binary segmentation with `T_n`, and the adjusted Rand
//! index for scoring estimates.
//!
//! Intervals `(s, e)` are 0-based and closed, covering observations `s..=e`,
//! with `s, e` in `0..=n-4`. Reported change locations are split points: a
//! location `τ` separates rows `..τ` from rows `τ..` (0-based), which is the
//! 1-based index of the last observation before the change.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_values::{builtin_table, empirical_quantile, StatisticKind};
use crate::dgp::{CovarianceSpec, GaussianSampler};
use crate::error::{Error, Result};
use crate::sample::SampleMatrix;
use crate::scalar::Scalar;
use crate::seeding::{domain_seed, replicate_rng, rng_from_seed};
use crate::segment_stats::{SegmentEvaluator, SegmentKernel};
use crate::single_cp::{max_sn_ratio, t_n_on};

/// Shortest segment (in observations) BS will test.
pub const BS_MIN_LEN: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WbsConfig {
    /// Number of random intervals `M`.
    pub intervals: usize,
    /// Null replications `R` used to calibrate the threshold.
    pub calibration_reps: usize,
    /// Quantile of the null maxima used as threshold.
    pub level: f64,
    /// Recursion stops on intervals with fewer observations than this.
    pub min_len: usize,
    /// Smallest `e - s` of a random interval; 5 keeps every interval with
    /// `e - s > 4`.
    pub min_span: usize,
    pub master_seed: u64,
}

impl Default for WbsConfig {
    fn default() -> Self {
        Self {
            intervals: 1000,
            calibration_reps: 200,
            level: 0.95,
            min_len: 5,
            min_span: 5,
            master_seed: 0,
        }
    }
}

impl WbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(Error::invalid("WBS needs at least one interval"));
        }
        if self.calibration_reps == 0 {
            return Err(Error::invalid("WBS calibration needs at least one replication"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.min_len < 5 {
            return Err(Error::invalid(format!("min_len must be >= 5, got {}", self.min_len)));
        }
        if self.min_span < 5 {
            return Err(Error::invalid(format!("min_span must be >= 5, got {}", self.min_span)));
        }
        Ok(())
    }
}

/// One estimated change point with the evidence that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub location: usize,
    /// Detecting interval as half-open rows `start..end`.
    pub interval: (usize, usize),
    pub statistic: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangePointSet {
    /// Sorted by location.
    pub detections: Vec<Detection>,
}

impl ChangePointSet {
    pub fn locations(&self) -> Vec<usize> {
        self.detections.iter().map(|d| d.location).collect()
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    fn push_sorted(&mut self, mut detections: Vec<Detection>) {
        self.detections.append(&mut detections);
        self.detections.sort_by_key(|d| d.location);
    }
}

/// `Q(s, e)` on closed rows `s..=e`: maximum over `b = s+2..=e-2` of
/// `D(b; s, e)² / V(b; s, e)` with the split after row `b`. Returns the value
/// and the smallest maximizing `b`.
pub fn q_interval<T: Scalar, K: SegmentKernel<T>>(kernel: &K, s: usize, e: usize) -> Result<(T, usize)> {
    if e >= kernel.n() {
        return Err(Error::IndexOrder(format!("e < n failed (e = {e}, n = {})", kernel.n())));
    }
    if e < s + 4 {
        return Err(Error::invalid(format!(
            "Q(s, e) needs e - s >= 4 for a nonempty range, got ({s}, {e})"
        )));
    }
    q_unchecked(kernel, s, e).ok_or_else(|| {
        Error::degenerate(format!("every normalizer V(b; {s}, {e}) is zero"))
    })
}

fn q_unchecked<T: Scalar, K: SegmentKernel<T> + ?Sized>(kernel: &K, s: usize, e: usize) -> Option<(T, usize)> {
    let (start, end) = (s, e + 1);
    max_sn_ratio(kernel, start, end, s + 3, e - 1, end - start).map(|(v, split)| (v, split - 1))
}

/// `M` random intervals `(s, e)` with `s, e` uniform on `0..=n-4` (ordered
/// as min/max), kept only when `e - s >= min_span`.
pub fn draw_intervals(n: usize, m: usize, min_span: usize, master_seed: u64) -> Result<Vec<(usize, usize)>> {
    let min_span = min_span.max(5);
    if n < min_span + 4 {
        return Err(Error::invalid(format!(
            "drawing intervals with e - s >= {min_span} needs n >= {}, got {n}",
            min_span + 4
        )));
    }
    let mut rng = rng_from_seed(domain_seed(master_seed, "wbs-intervals"));
    let hi = n - 4;
    let mut out = Vec::with_capacity(m);
    let cap = 1000 * m.max(1);
    let mut draws = 0;
    while out.len() < m {
        if draws >= cap {
            return Err(Error::invalid(format!(
                "interval sampler exceeded {cap} draws for n = {n}"
            )));
        }
        draws += 1;
        let a = rng.random_range(0..=hi);
        let b = rng.random_range(0..=hi);
        let (s, e) = (a.min(b), a.max(b));
        if e - s >= min_span {
            out.push((s, e));
        }
    }
    Ok(out)
}

/// Threshold `ξ_n`: the `level` quantile of `max_m Q(s_m, e_m)` over `R`
/// i.i.d. `N(0, I_p)` samples of length `n`, using the same intervals as
/// [`wbs_with_threshold`] draws for this seed.
pub fn calibrate_threshold(n: usize, p: usize, config: &WbsConfig) -> Result<f64> {
    config.validate()?;
    let intervals = draw_intervals(n, config.intervals, config.min_span, config.master_seed)?;
    let sampler = GaussianSampler::new(&CovarianceSpec::identity(p))?;
    let calib_seed = domain_seed(config.master_seed, "wbs-calibration");
    let mut maxima: Vec<f64> = (0..config.calibration_reps)
        .into_par_iter()
        .map(|i| {
            let sample = sampler.sample(n, &mut replicate_rng(calib_seed, i as u64));
            let kernel = SegmentEvaluator::new(&sample);
            intervals
                .iter()
                .filter_map(|&(s, e)| q_unchecked(&kernel, s, e).map(|(v, _)| v))
                .fold(0.0f64, f64::max)
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    Ok(empirical_quantile(&maxima, config.level))
}

/// Wild binary segmentation with a threshold calibrated for this sample's
/// `(n, p)`.
pub fn wbs<T: Scalar>(sample: &SampleMatrix<T>, config: &WbsConfig) -> Result<ChangePointSet> {
    let threshold = calibrate_threshold(sample.n(), sample.p(), config)?;
    wbs_with_threshold(sample, config, threshold)
}

/// Wild binary segmentation against a given threshold, starting from the
/// root interval `(0, n-4)`.
pub fn wbs_with_threshold<T: Scalar>(
    sample: &SampleMatrix<T>,
    config: &WbsConfig,
    threshold: f64,
) -> Result<ChangePointSet> {
    config.validate()?;
    let n = sample.n();
    let intervals = draw_intervals(n, config.intervals, config.min_span, config.master_seed)?;
    let kernel = SegmentEvaluator::new(sample);
    // Q never depends on the recursion, so evaluate every interval once.
    let scores: Vec<Option<(f64, usize)>> = intervals
        .par_iter()
        .map(|&(s, e)| q_unchecked(&kernel, s, e).map(|(v, b)| (v.as_f64(), b)))
        .collect();
    let mut found = Vec::new();
    let mut stack = vec![(0usize, n - 4)];
    while let Some((s, e)) = stack.pop() {
        if e < s || e - s + 1 < config.min_len {
            continue;
        }
        let best = intervals
            .iter()
            .zip(&scores)
            .enumerate()
            .filter(|(_, (&(sm, em), _))| s <= sm && em <= e && em - sm >= config.min_span)
            .filter_map(|(idx, (_, score))| score.map(|(v, b)| (v, b, idx)))
            .fold(None::<(f64, usize, usize)>, |acc, cur| match acc {
                Some(a) if a.0 >= cur.0 => Some(a),
                _ => Some(cur),
            });
        let Some((value, b0, idx)) = best else {
            continue;
        };
        if value > threshold {
            let (sm, em) = intervals[idx];
            found.push(Detection {
                location: b0 + 1,
                interval: (sm, em + 1),
                statistic: value,
                threshold,
            });
            stack.push((b0 + 1, e));
            stack.push((s, b0));
        }
    }
    let mut out = ChangePointSet::default();
    out.push_sorted(found);
    Ok(out)
}

/// Binary segmentation: test `T_n` on a segment at level `alpha` and, on
/// rejection, split at its maximizer and recurse on both halves.
pub fn binary_segmentation<T: Scalar>(sample: &SampleMatrix<T>, alpha: f64) -> Result<ChangePointSet> {
    let n = sample.n();
    if n < BS_MIN_LEN {
        return Err(Error::invalid(format!("binary segmentation needs n >= 6, got {n}")));
    }
    let critical = builtin_table(StatisticKind::T)?.critical_value(alpha)?;
    let kernel = SegmentEvaluator::new(sample);
    let mut found = Vec::new();
    let mut stack = vec![(0usize, n)];
    while let Some((start, end)) = stack.pop() {
        if end - start < BS_MIN_LEN {
            continue;
        }
        let Some((value, k)) = t_n_on(&kernel, start, end) else {
            continue;
        };
        let value = value.as_f64();
        if value > critical {
            let location = start + k;
            found.push(Detection {
                location,
                interval: (start, end),
                statistic: value,
                threshold: critical,
            });
            stack.push((location, end));
            stack.push((start, location));
        }
    }
    let mut out = ChangePointSet::default();
    out.push_sorted(found);
    Ok(out)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

fn segment_labels(locations: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut locs = locations.to_vec();
    locs.sort_unstable();
    locs.dedup();
    if let Some(&bad) = locs.iter().find(|&&l| l == 0 || l >= n) {
        return Err(Error::invalid(format!(
            "change location {bad} outside [1, {}]",
            n.saturating_sub(1)
        )));
    }
    let mut labels = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 0..n {
        if seg < locs.len() && t == locs[seg] {
            seg += 1;
        }
        labels.push(seg);
    }
    Ok(labels)
}

/// Adjusted (corrected) Rand index between the segmentations induced by two
/// sets of change locations in `1..n`. An empty estimate scores 0 unless the
/// truth is empty too.
pub fn adjusted_rand_index(truth: &[usize], estimate: &[usize], n: usize) -> Result<f64> {
    let a = segment_labels(truth, n)?;
    let b = segment_labels(estimate, n)?;
    let (ra, rb) = (a[n - 1] + 1, b[n - 1] + 1);
    if rb == 1 || ra == 1 {
        return Ok(if ra == rb { 1.0 } else { 0.0 });
    }
    let size = ra.max(rb);
    let mut table = vec![0usize; size * size];
    for (&i, &j) in a.iter().zip(&b) {
        table[i * size + j] += 1;
    }
    let sum_ij: f64 = table.iter().map(|&c| choose2(c)).sum();
    let rows: f64 = (0..size)
        .map(|i| choose2(table[i * size..(i + 1) * size].iter().sum()))
        .sum();
    let cols: f64 = (0..size)
        .map(|j| choose2((0..size).map(|i| table[i * size + j]).sum()))
        .sum();
    let expected = rows * cols / choose2(n);
    let max_index = 0.5 * (rows + cols);
    Ok((sum_ij - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{gen_gaussian, MeanChangeSpec};
    use crate::segment_stats::SegmentSummaries;

    #[test]
    fn intervals_are_feasible_and_deterministic() {
        let a = draw_intervals(50, 500, 5, 3).unwrap();
        assert!(a.iter().all(|&(s, e)| e - s > 4 && e <= 46));
        assert_eq!(a, draw_intervals(50, 500, 5, 3).unwrap());
        let small = draw_intervals(10, 50, 5, 1).unwrap();
        assert!(small.iter().all(|&(s, e)| e - s > 4 && e <= 6));
        assert!(draw_intervals(8, 5, 5, 1).is_err());
    }

    #[test]
    fn q_on_full_span_matches_t_n_ratio() {
        let s = gen_gaussian(30, &CovarianceSpec::identity(4), &MeanChangeSpec::none(), 2).unwrap();
        let kernel = SegmentSummaries::new(&s);
        let (q, b) = q_interval(&kernel, 0, 29).unwrap();
        // the same ratio with the W normalizer, which coincides on the full span
        let mut best = (f64::NEG_INFINITY, 0);
        for split in 3..=28 {
            let d = kernel.d_stat(0, split, 30).unwrap();
            let w = kernel.w_normalizer(0, split, 30).unwrap();
            if d * d / w > best.0 {
                best = (d * d / w, split - 1);
            }
        }
        assert!((q - best.0).abs() <= 1e-12 * best.0);
        assert_eq!(b, best.1);
    }

    #[test]
    fn q_on_constant_segment_is_degenerate() {
        let mut rows = vec![[1.0_f64, 2.0]; 30];
        for (i, r) in rows.iter_mut().enumerate().skip(15) {
            r[0] = (i as f64).sin();
        }
        let s = SampleMatrix::from_rows(&rows).unwrap();
        let kernel = SegmentSummaries::new(&s);
        assert!(q_interval(&kernel, 0, 12).unwrap_err().is_degenerate());
        assert!(q_interval(&kernel, 0, 3).is_err());
        assert!(q_interval(&kernel, 14, 29).is_ok());
    }

    #[test]
    fn ari_edge_cases() {
        let truth = [30, 60, 90];
        assert_eq!(adjusted_rand_index(&truth, &truth, 120).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&truth, &[], 120).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[], &[], 120).unwrap(), 1.0);
        assert!(adjusted_rand_index(&truth, &[0], 120).is_err());
        assert!(adjusted_rand_index(&truth, &[120], 120).is_err());
    }

    #[test]
    fn ari_is_symmetric() {
        let a = adjusted_rand_index(&[30, 60, 90], &[31, 60, 89], 120).unwrap();
        let b = adjusted_rand_index(&[31, 60, 89], &[30, 60, 90], 120).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.9 && a < 1.0);
    }

    #[test]
    fn bs_on_null_data_is_mostly_empty() {
        let cov = CovarianceSpec::identity(20);
        let empty = (0..40)
            .filter(|&seed| {
                let s = gen_gaussian(80, &cov, &MeanChangeSpec::none(), seed).unwrap();
                binary_segmentation(&s, 0.05).unwrap().is_empty()
            })
            .count();
        assert!(empty >= 34, "{empty} of 40 empty");
    }

    #[test]
    fn config_validation() {
        let mut c = WbsConfig::default();
        assert!(c.validate().is_ok());
        c.level = 1.0;
        assert!(c.validate().is_err());
        c = WbsConfig {
            intervals: 0,
            ..WbsConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
