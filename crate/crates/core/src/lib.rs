// SPDX-License-Identifier: MIT OR Apache-2.0

//! Self-normalized U-statistic change point tests for high-dimensional means
//! and covariances, with scan statistics for multiple changes, wild binary
//! segmentation and a simulation harness.
//!
//! Public indices are 0-based and half-open: `(start, split, end)` compares
//! rows `start..split` against `split..end`.

pub mod bench;
pub mod cov_change;
pub mod critical_values;
pub mod dgp;
pub mod error;
pub mod multi_cp;
pub mod sample;
pub mod scalar;
pub mod seeding;
pub mod segment_stats;
pub mod segmentation;
pub mod single_cp;

pub use cov_change::{cov_change_test, vech_transform, CovStatistic, VechSample};
pub use critical_values::{
    builtin_table, load_table, simulate_table, Provenance, QuantileTable, StatisticKind, TableInfo,
};
pub use dgp::{CovarianceKind, CovarianceSpec, Delta, MeanChangeSpec, MeanModel};
pub use error::{Error, Result};
pub use multi_cp::{scan_statistic, t_n_diamond, t_n_star, GridKind, ScanGrid};
pub use sample::SampleMatrix;
pub use scalar::Scalar;
pub use segment_stats::{PrefixGram, SegmentEvaluator, SegmentKernel, SegmentSummaries};
pub use segmentation::{
    adjusted_rand_index, binary_segmentation, wbs, ChangePointSet, Detection, WbsConfig,
};
pub use single_cp::{ks_statistic, ks_test, t_n, t_n_statistic, KsVariant, TestOutcome};

pub type Sample = SampleMatrix<f64>;
pub type Sample32 = SampleMatrix<f32>;
pub type Summaries64 = SegmentSummaries<f64>;
pub type Summaries32 = SegmentSummaries<f32>;
pub type Gram64 = PrefixGram<f64>;
pub type Gram32 = PrefixGram<f32>;
