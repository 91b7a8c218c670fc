// SPDX-License-Identifier: MIT OR Apache-2.0

//! Declarative simulation designs and a seeded, parallel experiment runner.
//!
//! Designs are TOML documents:
//!
//! ```toml
//! id = "ar1-size"
//! replications = 500
//! master_seed = 7
//!
//! [experiment]
//! type = "rejection"          # rejection | cov_change | segmentation
//! test = "t_n"                # t_n | t_n_star | t_n_diamond | ks1 | ks2 | ks_inf
//! n = 200
//! p = 100
//! alpha = 0.05
//! covariance = { kind = "ar1", rho = 0.5 }
//! mean = { model = "m1", delta = 0.2 }
//! ```
//!
//! `cov_change` designs take `n`, `p`, `pre` and `post` covariances,
//! `break_frac` and `statistic` (`t_n` or `t_n_diamond`). `segmentation`
//! designs take `n`, `p`, `sigma`, a `signal` (`dense`/`sparse` three-step
//! means, or an explicit `mean`) and `method` (`wbs` or `bs`).

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cov_change::vech_transform;
use crate::critical_values::{
    builtin_table, simulate_table, QuantileTable, StatisticKind, DEFAULT_PROBABILITIES,
};
use crate::dgp::{
    gen_cov_change_with, gen_gaussian_with, CovarianceKind, CovarianceSpec, Delta, GaussianSampler,
    MeanChangeSpec,
};
use crate::error::{Error, Result};
use crate::multi_cp::{scan_statistic, GridKind, ScanGrid, DEFAULT_EPSILON};
use crate::seeding::{domain_seed, replicate_rng};
use crate::segmentation::{
    adjusted_rand_index, binary_segmentation, calibrate_threshold, wbs_with_threshold, WbsConfig,
};
use crate::single_cp::{ks_statistic, t_n_statistic, KsVariant};

fn default_alpha() -> f64 {
    0.05
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_calibration_reps() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

fn default_break() -> f64 {
    0.5
}

fn default_mean() -> MeanChangeSpec {
    MeanChangeSpec::none()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanTest {
    TN,
    TNStar,
    TNDiamond,
    Ks1,
    Ks2,
    KsInf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovTest {
    TN,
    TNDiamond,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionDesign {
    pub test: MeanTest,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub covariance: CovarianceKind,
    #[serde(default = "default_mean")]
    pub mean: MeanChangeSpec,
    /// Replications for on-demand null tables (`t_n_star`, KS tests).
    #[serde(default = "default_calibration_reps")]
    pub calibration_reps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovChangeDesign {
    pub statistic: CovTest,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub pre: CovarianceKind,
    pub post: CovarianceKind,
    #[serde(default = "default_break")]
    pub break_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Signal {
    /// Three changes at `⌊n/4⌋·{1,2,3}` with jumps `±2k·1_p`.
    Dense { k: f64 },
    /// As `Dense` but only the first `s` coordinates move.
    Sparse { k: f64, s: usize },
    Mean { mean: MeanChangeSpec },
}

impl Signal {
    pub fn mean_spec(&self, n: usize, p: usize) -> Result<MeanChangeSpec> {
        Ok(match self {
            Signal::Dense { k } => MeanChangeSpec::three_step(n, Delta::Constant(2.0 * k)),
            Signal::Sparse { k, s } => {
                if *s > p {
                    return Err(Error::Design(format!("sparsity {s} exceeds p = {p}")));
                }
                let theta = (0..p).map(|j| if j < *s { 2.0 * k } else { 0.0 }).collect();
                MeanChangeSpec::three_step(n, Delta::Vector(theta))
            }
            Signal::Mean { mean } => mean.clone(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationMethod {
    Wbs,
    Bs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDesign {
    pub method: SegmentationMethod,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub signal: Signal,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub intervals: Option<usize>,
    #[serde(default)]
    pub calibration_reps: Option<usize>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Smallest `e - s` of a random WBS interval.
    #[serde(default)]
    pub min_span: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Experiment {
    Rejection(RejectionDesign),
    CovChange(CovChangeDesign),
    Segmentation(SegmentationDesign),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub id: String,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    pub experiment: Experiment,
}

impl Design {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Design(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = match &self.experiment {
            Experiment::Rejection(d) => (d.n, d.p),
            Experiment::CovChange(d) => (d.n, d.p),
            Experiment::Segmentation(d) => (d.n, d.p),
        };
        if n < 9 || p == 0 {
            return Err(Error::Design(format!("need n >= 9 and p >= 1, got n = {n}, p = {p}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportBody {
    Rejection {
        rate: f64,
        rejections: usize,
        critical_value: f64,
        failures: usize,
    },
    Segmentation {
        true_count: usize,
        exact_fraction: f64,
        /// Mean squared error of the estimated number of change points.
        mse: f64,
        mean_ari: f64,
        /// Histogram of `N̂ - N`.
        count_error: BTreeMap<i64, usize>,
        threshold: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub design: Design,
    pub replications: usize,
    pub master_seed: u64,
    pub result: ReportBody,
    /// Excluded from reproducibility comparisons.
    pub wall_time_ms: u128,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two-column `metric,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut row = |k: &str, v: String| out.push_str(&format!("{k},{v}\n"));
        row("id", self.design.id.clone());
        row("replications", self.replications.to_string());
        row("master_seed", self.master_seed.to_string());
        match &self.result {
            ReportBody::Rejection {
                rate,
                rejections,
                critical_value,
                failures,
            } => {
                row("rejection_rate", rate.to_string());
                row("rejections", rejections.to_string());
                row("critical_value", critical_value.to_string());
                row("failures", failures.to_string());
            }
            ReportBody::Segmentation {
                true_count,
                exact_fraction,
                mse,
                mean_ari,
                count_error,
                threshold,
            } => {
                row("true_count", true_count.to_string());
                row("exact_fraction", exact_fraction.to_string());
                row("mse", mse.to_string());
                row("mean_ari", mean_ari.to_string());
                if let Some(t) = threshold {
                    row("threshold", t.to_string());
                }
                for (d, c) in count_error {
                    row(&format!("count_error[{d}]"), c.to_string());
                }
            }
        }
        out
    }
}

/// Runs `design` for `replications` seeded replicates. `threads = None`
/// uses the global rayon pool; results do not depend on the thread count.
pub fn run_experiment(
    design: &Design,
    replications: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<ExperimentReport> {
    design.validate()?;
    if replications == 0 {
        return Err(Error::Design("replications must be positive".into()));
    }
    let started = Instant::now();
    let body = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Design(e.to_string()))?
            .install(|| run_body(&design.experiment, replications, master_seed)),
        None => run_body(&design.experiment, replications, master_seed),
    }?;
    Ok(ExperimentReport {
        design: design.clone(),
        replications,
        master_seed,
        result: body,
        wall_time_ms: started.elapsed().as_millis(),
    })
}

fn run_body(exp: &Experiment, reps: usize, seed: u64) -> Result<ReportBody> {
    match exp {
        Experiment::Rejection(d) => run_rejection(d, reps, seed),
        Experiment::CovChange(d) => run_cov_change(d, reps, seed),
        Experiment::Segmentation(d) => run_segmentation(d, reps, seed),
    }
}

fn rejection_body(outcomes: Vec<Result<f64>>, critical_value: f64) -> Result<ReportBody> {
    let mut rejections = 0;
    let mut failures = 0;
    let total = outcomes.len();
    for o in outcomes {
        match o {
            Ok(v) if v > critical_value => rejections += 1,
            Ok(_) => {}
            Err(Error::SegmentTooShort { .. }) | Err(Error::Degenerate(_)) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ReportBody::Rejection {
        rate: rejections as f64 / total as f64,
        rejections,
        critical_value,
        failures,
    })
}

fn null_table(kind: StatisticKind, eps: Option<f64>, n: usize, p: usize, reps: usize, seed: u64) -> Result<QuantileTable> {
    simulate_table(
        kind,
        eps,
        n,
        p,
        reps,
        domain_seed(seed, "bench-null-table"),
        &DEFAULT_PROBABILITIES,
    )
}

fn run_rejection(d: &RejectionDesign, reps: usize, seed: u64) -> Result<ReportBody> {
    let cov = CovarianceSpec::new(d.covariance.clone(), d.p);
    let sampler = GaussianSampler::new(&cov)?;
    let sigma_f = cov.frobenius_norm();
    let (table, grid) = match d.test {
        MeanTest::TN => (builtin_table(StatisticKind::T)?, None),
        MeanTest::TNDiamond => (
            builtin_table(StatisticKind::TDiamond)?,
            Some(ScanGrid::new(d.n, d.epsilon, GridKind::Discretized)?),
        ),
        MeanTest::TNStar => (
            null_table(StatisticKind::TStar, Some(d.epsilon), d.n, d.p, d.calibration_reps, seed)?,
            Some(ScanGrid::new(d.n, d.epsilon, GridKind::Full)?),
        ),
        MeanTest::Ks1 | MeanTest::Ks2 | MeanTest::KsInf => (
            null_table(StatisticKind::KsRef, None, d.n, d.p, d.calibration_reps, seed)?,
            None,
        ),
    };
    if d.test == MeanTest::TNDiamond && (d.epsilon - 0.1).abs() > 1e-12 {
        return Err(Error::Design("built-in T_n⋄ quantiles exist for epsilon = 0.1 only".into()));
    }
    let critical = table.critical_value(d.alpha)?;
    let outcomes: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let sample = gen_gaussian_with(&sampler, d.n, &d.mean, &mut replicate_rng(seed, i as u64))?;
            match d.test {
                MeanTest::TN => t_n_statistic(&sample).map(|(v, _)| v),
                MeanTest::TNStar | MeanTest::TNDiamond => {
                    scan_statistic(&sample, grid.as_ref().expect("scan grid")).map(|s| s.value)
                }
                MeanTest::Ks1 => ks_statistic(&sample, KsVariant::Ks1, None).map(|s| s.value),
                MeanTest::Ks2 => ks_statistic(&sample, KsVariant::Ks2, None).map(|s| s.value),
                MeanTest::KsInf => {
                    ks_statistic(&sample, KsVariant::KsInf, Some(sigma_f)).map(|s| s.value)
                }
            }
        })
        .collect();
    rejection_body(outcomes, critical)
}

fn run_cov_change(d: &CovChangeDesign, reps: usize, seed: u64) -> Result<ReportBody> {
    let pre = GaussianSampler::new(&CovarianceSpec::new(d.pre.clone(), d.p))?;
    let post = GaussianSampler::new(&CovarianceSpec::new(d.post.clone(), d.p))?;
    let (table, grid) = match d.statistic {
        CovTest::TN => (builtin_table(StatisticKind::T)?, None),
        CovTest::TNDiamond => (
            builtin_table(StatisticKind::TDiamond)?,
            Some(ScanGrid::new(d.n, d.epsilon, GridKind::Discretized)?),
        ),
    };
    let critical = table.critical_value(d.alpha)?;
    let outcomes: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let x = gen_cov_change_with(&pre, &post, d.n, d.break_frac, &mut replicate_rng(seed, i as u64))?;
            let z = vech_transform(&x)?.data;
            match &grid {
                None => t_n_statistic(&z).map(|(v, _)| v),
                Some(g) => scan_statistic(&z, g).map(|s| s.value),
            }
        })
        .collect();
    rejection_body(outcomes, critical)
}

fn run_segmentation(d: &SegmentationDesign, reps: usize, seed: u64) -> Result<ReportBody> {
    let mean = d.signal.mean_spec(d.n, d.p)?;
    let truth = mean.model.change_points(d.n);
    let sampler = GaussianSampler::new(&CovarianceSpec::diagonal(d.sigma * d.sigma, d.p))?;
    let config = WbsConfig {
        intervals: d.intervals.unwrap_or(WbsConfig::default().intervals),
        calibration_reps: d.calibration_reps.unwrap_or(WbsConfig::default().calibration_reps),
        level: d.level,
        min_span: d.min_span.unwrap_or(WbsConfig::default().min_span),
        master_seed: domain_seed(seed, "bench-wbs"),
        ..WbsConfig::default()
    };
    let threshold = match d.method {
        SegmentationMethod::Wbs => Some(calibrate_threshold(d.n, d.p, &config)?),
        SegmentationMethod::Bs => None,
    };
    let estimates: Vec<Result<Vec<usize>>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let sample = gen_gaussian_with(&sampler, d.n, &mean, &mut replicate_rng(seed, i as u64))?;
            let set = match threshold {
                Some(t) => wbs_with_threshold(&sample, &config, t)?,
                None => binary_segmentation(&sample, d.alpha)?,
            };
            Ok(set.locations())
        })
        .collect();
    let mut count_error = BTreeMap::new();
    let (mut exact, mut sq, mut ari) = (0usize, 0.0, 0.0);
    for est in estimates {
        let est = est?;
        let diff = est.len() as i64 - truth.len() as i64;
        *count_error.entry(diff).or_insert(0) += 1;
        exact += usize::from(diff == 0);
        sq += (diff * diff) as f64;
        ari += adjusted_rand_index(&truth, &est, d.n)?;
    }
    let r = reps as f64;
    Ok(ReportBody::Segmentation {
        true_count: truth.len(),
        exact_fraction: exact as f64 / r,
        mse: sq / r,
        mean_ari: ari / r,
        count_error,
        threshold,
    })
}
