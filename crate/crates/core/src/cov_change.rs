// SPDX-License-Identifier: MIT OR Apache-2.0

//! Covariance change tests through the half-vectorization `Z_i = vech(X_i X_iᵀ)`:
//! a change in `Cov(X)` is a change in the mean of `Z` when `E[X] = 0`.
//!
//! The input is assumed centered; nothing here demeans it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_cp::t_n_diamond;
use crate::sample::SampleMatrix;
use crate::scalar::Scalar;
use crate::single_cp::{t_n, TestOutcome};

/// Largest source dimension accepted by [`vech_transform`].
pub const MAX_SOURCE_P: usize = 300;

/// Number of lower-triangular entries of a `p × p` matrix.
pub const fn vech_width(p: usize) -> usize {
    p * (p + 1) / 2
}

/// `(row, col)` of vech position `idx`, column-major lower triangle:
/// `(0,0), (1,0), …, (p-1,0), (1,1), …, (p-1,p-1)`.
pub fn vech_position(idx: usize, p: usize) -> (usize, usize) {
    let mut rest = idx;
    for c in 0..p {
        let len = p - c;
        if rest < len {
            return (c + rest, c);
        }
        rest -= len;
    }
    panic!("vech index {idx} out of range for p = {p}");
}

#[derive(Clone, Debug, PartialEq)]
pub struct VechSample<T> {
    pub data: SampleMatrix<T>,
    pub source_p: usize,
}

impl<T: Scalar> VechSample<T> {
    /// Rebuilds `X_i X_iᵀ` (row-major `p × p`) from row `i`.
    pub fn reconstruct(&self, i: usize) -> Vec<T> {
        let p = self.source_p;
        let mut out = vec![T::zero(); p * p];
        for (idx, &v) in self.data.row(i).iter().enumerate() {
            let (r, c) = vech_position(idx, p);
            out[r * p + c] = v;
            out[c * p + r] = v;
        }
        out
    }
}

pub fn vech_transform<T: Scalar>(sample: &SampleMatrix<T>) -> Result<VechSample<T>> {
    let p = sample.p();
    if p > MAX_SOURCE_P {
        return Err(Error::invalid(format!(
            "vech of p = {p} gives {} columns per row; reduce the dimension below {MAX_SOURCE_P}",
            vech_width(p)
        )));
    }
    let width = vech_width(p);
    let mut data = Vec::with_capacity(sample.n() * width);
    for row in sample.rows() {
        for c in 0..p {
            for r in c..p {
                data.push(row[r] * row[c]);
            }
        }
    }
    Ok(VechSample {
        data: SampleMatrix::from_row_major(sample.n(), width, data)?,
        source_p: p,
    })
}

/// Mean-change statistic applied to the transformed sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovStatistic {
    TN,
    TNDiamond { epsilon: f64 },
}

/// Covariance change test: `vech` transform, then the chosen mean test with
/// its usual critical values.
pub fn cov_change_test<T: Scalar>(
    sample: &SampleMatrix<T>,
    statistic: CovStatistic,
    alpha: f64,
) -> Result<TestOutcome> {
    let z = vech_transform(sample)?;
    match statistic {
        CovStatistic::TN => t_n(&z.data, alpha),
        CovStatistic::TNDiamond { epsilon } => t_n_diamond(&z.data, epsilon, alpha),
    }
}
