// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

use crate::critical_values::StatisticKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("index order violated: {0}")]
    IndexOrder(String),

    #[error("brute-force evaluation limited to n <= {max}, got n = {n}; use d_stat instead")]
    SizeGuard { n: usize, max: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{segment} segment has {len} points, at least {min} required")]
    SegmentTooShort {
        segment: &'static str,
        len: usize,
        min: usize,
    },

    #[error("quantile table has no entry for probability {probability}")]
    MissingQuantile { probability: f64 },

    #[error("no built-in quantile table for {0:?}; simulate one with simulate_table")]
    NoBuiltinTable(StatisticKind),

    #[error("quantile table not found: {}", .0.display())]
    CacheNotFound(PathBuf),

    #[error("malformed quantile table file: {0}")]
    CacheFormat(String),

    #[error("quantile table version {found} is not supported (expected {expected})")]
    CacheVersion { found: u32, expected: u32 },

    #[error("quantile table checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    CacheChecksum { stored: u64, computed: u64 },

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("experiment design: {0}")]
    Design(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidParameter(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Self::Degenerate(msg.into())
    }

    /// True for errors caused by a sample on which the statistic is undefined.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::Degenerate(_))
    }
}
