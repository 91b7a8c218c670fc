// SPDX-License-Identifier: MIT OR Apache-2.0

//! Quantile tables of pivotal null distributions: frozen constants for the
//! limits of `T_n` and `T_n⋄` (ε = 0.1), seeded Monte Carlo simulation for
//! everything else, and a binary on-disk cache.
//!
//! # Cache file layout
//!
//! All integers and floats little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `b"SNCPQTBL"`                     |
//! | 8      | 4    | format version (`u32`, currently 1)     |
//! | 12     | 1    | statistic kind (0 T, 1 T*, 2 T⋄, 3 KS)  |
//! | 13     | 1    | provenance (0 built-in, 1 simulated)    |
//! | 14     | 2    | reserved, zero                          |
//! | 16     | 8    | ε (`f64`, NaN when not applicable)      |
//! | 24     | 8    | simulation n (`u64`)                    |
//! | 32     | 8    | simulation p (`u64`)                    |
//! | 40     | 8    | replications (`u64`)                    |
//! | 48     | 8    | master seed (`u64`)                     |
//! | 56     | 8    | number of quantile pairs `q` (`u64`)    |
//! | 64     | 16q  | `(probability, value)` pairs of `f64`   |
//! | 64+16q | 8    | checksum (`u64`)                        |
//!
//! The checksum is the first 8 bytes (little-endian) of the SHA-256 digest
//! of every preceding byte.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgp::{CovarianceSpec, GaussianSampler};
use crate::error::{Error, Result};
use crate::multi_cp::{scan_statistic, GridKind, ScanGrid};
use crate::seeding::replicate_rng;
use crate::single_cp::{ks_statistic, t_n_statistic, KsVariant};

/// Default simulation size for on-demand tables.
pub const DEFAULT_SIM_N: usize = 500;
pub const DEFAULT_SIM_P: usize = 50;
pub const DEFAULT_PROBABILITIES: [f64; 5] = [0.80, 0.90, 0.95, 0.99, 0.995];

const MAGIC: &[u8; 8] = b"SNCPQTBL";
const FORMAT_VERSION: u32 = 1;
const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// Single change point statistic `T_n`.
    T,
    /// Full scan `T_n*`.
    TStar,
    /// Discretized scan `T_n⋄`.
    TDiamond,
    /// Reference law of the KS type statistics.
    KsRef,
}

impl StatisticKind {
    fn code(self) -> u8 {
        match self {
            Self::T => 0,
            Self::TStar => 1,
            Self::TDiamond => 2,
            Self::KsRef => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Self::T,
            1 => Self::TStar,
            2 => Self::TDiamond,
            3 => Self::KsRef,
            _ => return Err(Error::CacheFormat(format!("unknown statistic kind {code}"))),
        })
    }

    fn needs_epsilon(self) -> bool {
        matches!(self, Self::TStar | Self::TDiamond)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Builtin,
    Simulated,
}

/// Table metadata without the quantiles, carried by every test outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub kind: StatisticKind,
    pub epsilon: Option<f64>,
    pub sim_n: usize,
    pub sim_p: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub provenance: Provenance,
}

/// Empirical quantiles of a null distribution, strictly increasing in both
/// probability and value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub kind: StatisticKind,
    pub epsilon: Option<f64>,
    quantiles: Vec<(f64, f64)>,
    pub sim_n: usize,
    pub sim_p: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub provenance: Provenance,
}

impl QuantileTable {
    pub fn new(info: TableInfo, quantiles: Vec<(f64, f64)>) -> Result<Self> {
        if quantiles.is_empty() {
            return Err(Error::invalid("quantile table must not be empty"));
        }
        for &(prob, value) in &quantiles {
            if !(prob > 0.0 && prob < 1.0) || !value.is_finite() {
                return Err(Error::invalid(format!(
                    "invalid quantile entry ({prob}, {value})"
                )));
            }
        }
        if quantiles.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
            return Err(Error::invalid(
                "quantiles must be strictly increasing in probability and value",
            ));
        }
        Ok(Self {
            kind: info.kind,
            epsilon: info.epsilon,
            quantiles,
            sim_n: info.sim_n,
            sim_p: info.sim_p,
            replications: info.replications,
            master_seed: info.master_seed,
            provenance: info.provenance,
        })
    }

    pub fn info(&self) -> TableInfo {
        TableInfo {
            kind: self.kind,
            epsilon: self.epsilon,
            sim_n: self.sim_n,
            sim_p: self.sim_p,
            replications: self.replications,
            master_seed: self.master_seed,
            provenance: self.provenance,
        }
    }

    /// `(probability, value)` pairs in increasing order.
    pub fn quantiles(&self) -> &[(f64, f64)] {
        &self.quantiles
    }

    /// Stored quantile at `probability`; no interpolation.
    pub fn quantile(&self, probability: f64) -> Result<f64> {
        self.quantiles
            .iter()
            .find(|(q, _)| (q - probability).abs() < PROB_TOL)
            .map(|&(_, v)| v)
            .ok_or(Error::MissingQuantile { probability })
    }

    /// Critical value of a level-`alpha` test, the `1 - alpha` quantile.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        self.quantile(1.0 - alpha)
    }
}

/// Frozen quantiles of the limits of `T_n` and of `T_n⋄` at ε = 0.1
/// (10000 Monte Carlo replications each).
pub fn builtin_table(kind: StatisticKind) -> Result<QuantileTable> {
    let (epsilon, values) = match kind {
        StatisticKind::T => (None, [603.72, 881.78, 1177.45, 2026.28, 2443.27]),
        StatisticKind::TDiamond => (
            Some(0.1),
            [7226.18, 8762.45, 10410.19, 14603.51, 16608.86],
        ),
        other => return Err(Error::NoBuiltinTable(other)),
    };
    let info = TableInfo {
        kind,
        epsilon,
        sim_n: 0,
        sim_p: 0,
        replications: 10_000,
        master_seed: 0,
        provenance: Provenance::Builtin,
    };
    QuantileTable::new(
        info,
        DEFAULT_PROBABILITIES.iter().copied().zip(values).collect(),
    )
}

/// Type-1 empirical quantile: the order statistic at 1-based index `⌈q·R⌉`.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let r = sorted.len();
    let idx = ((q * r as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[idx.min(r) - 1]
}

/// Parameters of a simulated table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub kind: StatisticKind,
    pub epsilon: Option<f64>,
    pub sim_n: usize,
    pub sim_p: usize,
    pub replications: usize,
    pub master_seed: u64,
}

impl SimulationSpec {
    fn validate(&self) -> Result<()> {
        if self.sim_n < 100 {
            return Err(Error::invalid(format!("sim_n must be >= 100, got {}", self.sim_n)));
        }
        if self.replications < 500 {
            return Err(Error::invalid(format!(
                "replications must be >= 500, got {}",
                self.replications
            )));
        }
        if self.sim_p == 0 {
            return Err(Error::invalid("sim_p must be positive"));
        }
        if self.kind.needs_epsilon() && self.epsilon.is_none() {
            return Err(Error::invalid(format!("{:?} requires epsilon", self.kind)));
        }
        Ok(())
    }
}

/// Simulated null draws of the statistic described by `spec`, one per
/// replicate, in replicate order. The null is `N(0, cov)` i.i.d.
///
/// Does not apply the size guards of [`simulate_table`].
pub fn simulate_statistics(spec: &SimulationSpec, cov: &CovarianceSpec) -> Result<Vec<f64>> {
    if cov.p != spec.sim_p {
        return Err(Error::Shape(format!(
            "null covariance has p = {}, simulation p = {}",
            cov.p, spec.sim_p
        )));
    }
    let sampler = GaussianSampler::new(cov)?;
    let grid = match spec.kind {
        StatisticKind::TStar | StatisticKind::TDiamond => {
            let kind = if spec.kind == StatisticKind::TStar {
                GridKind::Full
            } else {
                GridKind::Discretized
            };
            let eps = spec
                .epsilon
                .ok_or_else(|| Error::invalid("scan statistics require epsilon"))?;
            Some(ScanGrid::new(spec.sim_n, eps, kind)?)
        }
        _ => None,
    };
    let sigma_f = cov.frobenius_norm();
    (0..spec.replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(spec.master_seed, i as u64);
            let sample = sampler.sample(spec.sim_n, &mut rng);
            match spec.kind {
                StatisticKind::T => t_n_statistic(&sample).map(|(v, _)| v),
                StatisticKind::TStar | StatisticKind::TDiamond => {
                    let grid = grid.as_ref().expect("grid built for scan kinds");
                    scan_statistic(&sample, grid).map(|s| s.value)
                }
                StatisticKind::KsRef => {
                    ks_statistic(&sample, KsVariant::KsInf, Some(sigma_f)).map(|s| s.value)
                }
            }
        })
        .collect()
}

/// Empirical quantile table of `spec.kind` under an `N(0, cov)` null.
pub fn simulate_table_under(
    spec: &SimulationSpec,
    cov: &CovarianceSpec,
    probabilities: &[f64],
) -> Result<QuantileTable> {
    spec.validate()?;
    let mut draws = simulate_statistics(spec, cov)?;
    draws.sort_by(f64::total_cmp);
    let mut probs = probabilities.to_vec();
    probs.sort_by(f64::total_cmp);
    let quantiles = probs
        .iter()
        .map(|&q| (q, empirical_quantile(&draws, q)))
        .collect();
    QuantileTable::new(
        TableInfo {
            kind: spec.kind,
            epsilon: if spec.kind.needs_epsilon() {
                spec.epsilon
            } else {
                None
            },
            sim_n: spec.sim_n,
            sim_p: spec.sim_p,
            replications: spec.replications,
            master_seed: spec.master_seed,
            provenance: Provenance::Simulated,
        },
        quantiles,
    )
}

/// Empirical quantile table of `kind` under an i.i.d. standard normal null.
/// Deterministic in `master_seed` for any thread count.
pub fn simulate_table(
    kind: StatisticKind,
    epsilon: Option<f64>,
    sim_n: usize,
    sim_p: usize,
    replications: usize,
    master_seed: u64,
    probabilities: &[f64],
) -> Result<QuantileTable> {
    let spec = SimulationSpec {
        kind,
        epsilon,
        sim_n,
        sim_p,
        replications,
        master_seed,
    };
    simulate_table_under(&spec, &CovarianceSpec::identity(sim_p), probabilities)
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Binary encoding described in the module docs.
pub fn encode_table(table: &QuantileTable) -> Vec<u8> {
    let mut buf = Vec::with_capacity(72 + 16 * table.quantiles.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(table.kind.code());
    buf.push(match table.provenance {
        Provenance::Builtin => 0,
        Provenance::Simulated => 1,
    });
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&table.epsilon.unwrap_or(f64::NAN).to_le_bytes());
    for v in [
        table.sim_n as u64,
        table.sim_p as u64,
        table.replications as u64,
        table.master_seed,
        table.quantiles.len() as u64,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &(q, v) in &table.quantiles {
        buf.extend_from_slice(&q.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

pub fn decode_table(bytes: &[u8]) -> Result<QuantileTable> {
    const HEADER: usize = 64;
    if bytes.len() < HEADER + 8 {
        return Err(Error::CacheFormat(format!(
            "file too short ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::CacheFormat("bad magic".into()));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let body_len = bytes.len() - 8;
    let stored = u64_at(body_len);
    let computed = checksum(&bytes[..body_len]);
    if stored != computed {
        return Err(Error::CacheChecksum { stored, computed });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::CacheVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let kind = StatisticKind::from_code(bytes[12])?;
    let provenance = match bytes[13] {
        0 => Provenance::Builtin,
        1 => Provenance::Simulated,
        other => return Err(Error::CacheFormat(format!("unknown provenance {other}"))),
    };
    let eps = f64_at(16);
    let count = u64_at(56) as usize;
    if body_len != HEADER + 16 * count {
        return Err(Error::CacheFormat(format!(
            "expected {count} quantile pairs, payload has {} bytes",
            body_len - HEADER
        )));
    }
    let quantiles = (0..count)
        .map(|i| (f64_at(HEADER + 16 * i), f64_at(HEADER + 16 * i + 8)))
        .collect();
    QuantileTable::new(
        TableInfo {
            kind,
            epsilon: if eps.is_nan() { None } else { Some(eps) },
            sim_n: u64_at(24) as usize,
            sim_p: u64_at(32) as usize,
            replications: u64_at(40) as usize,
            master_seed: u64_at(48),
            provenance,
        },
        quantiles,
    )
    .map_err(|e| Error::CacheFormat(e.to_string()))
}

pub fn cache_table(table: &QuantileTable, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_table(table))?;
    Ok(())
}

pub fn load_table(path: impl AsRef<Path>) -> Result<QuantileTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::CacheNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_table(&bytes)
}
