// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gaussian data-generating processes used by the simulation designs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::SampleMatrix;
use crate::seeding::{rng_from_seed, Rng};

/// Covariance structure of the innovations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    /// `σ² I`.
    Diagonal { variance: f64 },
    /// `σ_ij = ρ^{|i-j|}`.
    Ar1 { rho: f64 },
    /// Unit diagonal, 0.5 on the first off-diagonal, 0.25 on the second.
    Banded,
    /// Unit diagonal, `ρ` everywhere else.
    CompoundSymmetric { rho: f64 },
    /// Row-major `p × p` matrix.
    Custom { matrix: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    #[serde(flatten)]
    pub kind: CovarianceKind,
    pub p: usize,
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, p: usize) -> Self {
        Self { kind, p }
    }

    pub fn identity(p: usize) -> Self {
        Self::new(CovarianceKind::Identity, p)
    }

    pub fn diagonal(variance: f64, p: usize) -> Self {
        Self::new(CovarianceKind::Diagonal { variance }, p)
    }

    pub fn ar1(rho: f64, p: usize) -> Self {
        Self::new(CovarianceKind::Ar1 { rho }, p)
    }

    pub fn banded(p: usize) -> Self {
        Self::new(CovarianceKind::Banded, p)
    }

    pub fn compound_symmetric(rho: f64, p: usize) -> Self {
        Self::new(CovarianceKind::CompoundSymmetric { rho }, p)
    }

    /// Entry `(i, j)` of the covariance matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lag = i.abs_diff(j);
        match &self.kind {
            CovarianceKind::Identity => f64::from(u8::from(lag == 0)),
            CovarianceKind::Diagonal { variance } => {
                if lag == 0 {
                    *variance
                } else {
                    0.0
                }
            }
            CovarianceKind::Ar1 { rho } => rho.powi(lag as i32),
            CovarianceKind::Banded => match lag {
                0 => 1.0,
                1 => 0.5,
                2 => 0.25,
                _ => 0.0,
            },
            CovarianceKind::CompoundSymmetric { rho } => {
                if lag == 0 {
                    1.0
                } else {
                    *rho
                }
            }
            CovarianceKind::Custom { matrix } => matrix[i * self.p + j],
        }
    }

    /// Dense row-major matrix.
    pub fn matrix(&self) -> Vec<f64> {
        let p = self.p;
        (0..p * p).map(|idx| self.entry(idx / p, idx % p)).collect()
    }

    /// `‖Σ‖_F`.
    pub fn frobenius_norm(&self) -> f64 {
        self.matrix().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.p, self.p, &self.matrix());
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("covariance dimension p must be positive"));
        }
        match &self.kind {
            CovarianceKind::Diagonal { variance } if !(*variance >= 0.0 && variance.is_finite()) => {
                Err(Error::invalid(format!("diagonal variance must be >= 0, got {variance}")))
            }
            CovarianceKind::Ar1 { rho } if !(rho.abs() < 1.0) => {
                Err(Error::invalid(format!("AR(1) coefficient must satisfy |rho| < 1, got {rho}")))
            }
            CovarianceKind::CompoundSymmetric { rho } if !(*rho < 1.0 && rho.is_finite()) => Err(
                Error::invalid(format!("compound symmetric rho must be < 1, got {rho}")),
            ),
            CovarianceKind::Custom { matrix } if matrix.len() != self.p * self.p => {
                Err(Error::Shape(format!(
                    "custom covariance needs {} entries, got {}",
                    self.p * self.p,
                    matrix.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
enum Factor {
    Identity,
    Scaled(f64),
    /// Causal recursion `x_1 = z_1`, `x_j = ρ x_{j-1} + √(1-ρ²) z_j`.
    Ar1 { rho: f64, innovation_sd: f64 },
    /// `x_j = a w + b z_j` with a shared factor `w`.
    Equicorrelated { shared: f64, own: f64 },
    /// Lower Cholesky factor, row-major.
    Dense(Vec<f64>),
}

/// Draws `N(0, Σ)` vectors through a fixed factorization of `Σ`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    p: usize,
    factor: Factor,
}

impl GaussianSampler {
    pub fn new(spec: &CovarianceSpec) -> Result<Self> {
        spec.validate()?;
        let factor = match &spec.kind {
            CovarianceKind::Identity => Factor::Identity,
            CovarianceKind::Diagonal { variance } => Factor::Scaled(variance.sqrt()),
            CovarianceKind::Ar1 { rho } => Factor::Ar1 {
                rho: *rho,
                innovation_sd: (1.0 - rho * rho).sqrt(),
            },
            CovarianceKind::CompoundSymmetric { rho } if *rho >= 0.0 => Factor::Equicorrelated {
                shared: rho.sqrt(),
                own: (1.0 - rho).sqrt(),
            },
            _ => {
                let m = DMatrix::from_row_slice(spec.p, spec.p, &spec.matrix());
                let chol = m.cholesky().ok_or_else(|| {
                    Error::Factorization("matrix is not positive definite".into())
                })?;
                let l = chol.l();
                let mut dense = vec![0.0; spec.p * spec.p];
                for i in 0..spec.p {
                    for j in 0..=i {
                        dense[i * spec.p + j] = l[(i, j)];
                    }
                }
                Factor::Dense(dense)
            }
        };
        Ok(Self { p: spec.p, factor })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Fills `out` (length `p`) with one draw, using `z` (length `p`) as scratch.
    pub fn draw_into(&self, rng: &mut Rng, z: &mut [f64], out: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let shared = match self.factor {
            Factor::Equicorrelated { .. } => rng.sample::<f64, _>(StandardNormal),
            _ => 0.0,
        };
        self.apply(z, shared, out);
    }

    fn apply(&self, z: &[f64], shared: f64, out: &mut [f64]) {
        match &self.factor {
            Factor::Identity => out.copy_from_slice(z),
            Factor::Scaled(sd) => out.iter_mut().zip(z).for_each(|(o, &v)| *o = sd * v),
            Factor::Ar1 { rho, innovation_sd } => {
                let mut prev = 0.0;
                for (j, (o, &v)) in out.iter_mut().zip(z).enumerate() {
                    prev = if j == 0 { v } else { rho * prev + innovation_sd * v };
                    *o = prev;
                }
            }
            Factor::Equicorrelated { shared: a, own: b } => {
                out.iter_mut().zip(z).for_each(|(o, &v)| *o = a * shared + b * v)
            }
            Factor::Dense(l) => {
                let p = self.p;
                for i in 0..p {
                    out[i] = l[i * p..i * p + i + 1]
                        .iter()
                        .zip(&z[..=i])
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
        }
    }

    /// `n × p` sample of i.i.d. draws.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> SampleMatrix<f64> {
        let p = self.p;
        let mut data = vec![0.0; n * p];
        let mut z = vec![0.0; p];
        for row in data.chunks_exact_mut(p) {
            self.draw_into(rng, &mut z, row);
        }
        SampleMatrix::from_row_major(n, p, data).expect("gaussian draws are finite")
    }
}

/// Mean path shape; the mean at time `t` (1-based) is `c_t · δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MeanModel {
    None,
    /// `1{t/n > 1/2}`.
    M1,
    /// `1{t/n > 1/3} − 1{t/n > 2/3}`.
    M2,
    /// `1{t/n > 1/4} − 1{3/4 >= t/n > 1/2}`.
    M3,
    /// `Σ_j jumps[j] · 1{t/n > breakpoints[j]}`.
    Custom {
        breakpoints: Vec<f64>,
        jumps: Vec<f64>,
    },
}

impl MeanModel {
    /// Coefficient `c_t` for 1-based time `t` in a series of length `n`.
    pub fn coefficient(&self, t: usize, n: usize) -> f64 {
        let r = t as f64 / n as f64;
        let ind = |b: bool| f64::from(u8::from(b));
        match self {
            MeanModel::None => 0.0,
            MeanModel::M1 => ind(r > 0.5),
            MeanModel::M2 => ind(r > 1.0 / 3.0) - ind(r > 2.0 / 3.0),
            MeanModel::M3 => ind(r > 0.25) - ind(r <= 0.75 && r > 0.5),
            MeanModel::Custom { breakpoints, jumps } => breakpoints
                .iter()
                .zip(jumps)
                .map(|(&b, &j)| j * ind(r > b))
                .sum(),
        }
    }

    /// Number of true change points for a series of length `n`.
    pub fn change_points(&self, n: usize) -> Vec<usize> {
        (1..n)
            .filter(|&t| self.coefficient(t + 1, n) != self.coefficient(t, n))
            .collect()
    }
}

/// Mean shift vector `δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Delta {
    /// `value · 1_p`.
    Constant(f64),
    Vector(Vec<f64>),
}

impl Delta {
    pub fn to_vec(&self, p: usize) -> Result<Vec<f64>> {
        match self {
            Delta::Constant(v) => Ok(vec![*v; p]),
            Delta::Vector(v) if v.len() == p => Ok(v.clone()),
            Delta::Vector(v) => Err(Error::Shape(format!(
                "shift vector has length {}, expected {p}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanChangeSpec {
    #[serde(flatten)]
    pub model: MeanModel,
    pub delta: Delta,
}

impl MeanChangeSpec {
    pub fn none() -> Self {
        Self {
            model: MeanModel::None,
            delta: Delta::Constant(0.0),
        }
    }

    pub fn new(model: MeanModel, delta: Delta) -> Self {
        Self { model, delta }
    }

    /// Three change points at `q, 2q, 3q` with `q = ⌊n/4⌋` and jumps
    /// `+θ, −θ, +θ`.
    pub fn three_step(n: usize, theta: Delta) -> Self {
        let q = (n / 4) as f64;
        let nf = n as f64;
        Self {
            model: MeanModel::Custom {
                breakpoints: vec![q / nf, 2.0 * q / nf, 3.0 * q / nf],
                jumps: vec![1.0, -1.0, 1.0],
            },
            delta: theta,
        }
    }
}

/// `n` rows of `N(μ_t, Σ)` with `μ_t` from `mean`.
pub fn gen_gaussian(
    n: usize,
    cov: &CovarianceSpec,
    mean: &MeanChangeSpec,
    seed: u64,
) -> Result<SampleMatrix<f64>> {
    let sampler = GaussianSampler::new(cov)?;
    gen_gaussian_with(&sampler, n, mean, &mut rng_from_seed(seed))
}

/// As [`gen_gaussian`] with a prebuilt sampler and caller-owned generator.
pub fn gen_gaussian_with(
    sampler: &GaussianSampler,
    n: usize,
    mean: &MeanChangeSpec,
    rng: &mut Rng,
) -> Result<SampleMatrix<f64>> {
    let p = sampler.p();
    let delta = mean.delta.to_vec(p)?;
    let mut data = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for (i, row) in data.chunks_exact_mut(p).enumerate() {
        sampler.draw_into(rng, &mut z, row);
        let c = mean.model.coefficient(i + 1, n);
        if c != 0.0 {
            row.iter_mut().zip(&delta).for_each(|(v, d)| *v += c * d);
        }
    }
    SampleMatrix::from_row_major(n, p, data)
}

/// Zero-mean Gaussian rows with covariance `pre` for `t <= ⌊break_frac·n⌋`
/// and `post` afterwards.
pub fn gen_cov_change(
    n: usize,
    pre: &CovarianceSpec,
    post: &CovarianceSpec,
    break_frac: f64,
    seed: u64,
) -> Result<SampleMatrix<f64>> {
    if pre.p != post.p {
        return Err(Error::Shape(format!(
            "pre and post dimensions differ ({} vs {})",
            pre.p, post.p
        )));
    }
    if !(0.0..=1.0).contains(&break_frac) {
        return Err(Error::invalid(format!("break fraction must lie in [0, 1], got {break_frac}")));
    }
    let (a, b) = (GaussianSampler::new(pre)?, GaussianSampler::new(post)?);
    gen_cov_change_with(&a, &b, n, break_frac, &mut rng_from_seed(seed))
}

pub fn gen_cov_change_with(
    pre: &GaussianSampler,
    post: &GaussianSampler,
    n: usize,
    break_frac: f64,
    rng: &mut Rng,
) -> Result<SampleMatrix<f64>> {
    let p = pre.p();
    let cut = (break_frac * n as f64).floor() as usize;
    let mut data = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for (i, row) in data.chunks_exact_mut(p).enumerate() {
        let s = if i < cut { pre } else { post };
        s.draw_into(rng, &mut z, row);
    }
    SampleMatrix::from_row_major(n, p, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_symmetric_entries() {
        let c = CovarianceSpec::compound_symmetric(0.5, 3);
        assert_eq!(c.matrix(), vec![1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn banded_entries() {
        let c = CovarianceSpec::banded(5);
        assert_eq!(c.entry(0, 0), 1.0);
        assert_eq!(c.entry(0, 1), 0.5);
        assert_eq!(c.entry(3, 1), 0.25);
        assert_eq!(c.entry(0, 3), 0.0);
    }

    #[test]
    fn all_builtin_covariances_are_psd() {
        for spec in [
            CovarianceSpec::identity(30),
            CovarianceSpec::diagonal(0.8, 30),
            CovarianceSpec::ar1(0.5, 30),
            CovarianceSpec::ar1(0.8, 30),
            CovarianceSpec::banded(30),
            CovarianceSpec::compound_symmetric(0.5, 30),
        ] {
            assert!(spec.min_eigenvalue() >= -1e-8, "{spec:?}");
        }
    }

    #[test]
    fn non_psd_custom_matrix_fails_to_factor() {
        let spec = CovarianceSpec::new(
            CovarianceKind::Custom {
                matrix: vec![1.0, 2.0, 2.0, 1.0],
            },
            2,
        );
        assert!(matches!(GaussianSampler::new(&spec), Err(Error::Factorization(_))));
    }

    #[test]
    fn mean_models_match_definitions() {
        let n = 12;
        let m1: Vec<f64> = (1..=n).map(|t| MeanModel::M1.coefficient(t, n)).collect();
        assert_eq!(&m1[..6], &[0.0; 6]);
        assert_eq!(&m1[6..], &[1.0; 6]);
        let m2: Vec<f64> = (1..=n).map(|t| MeanModel::M2.coefficient(t, n)).collect();
        assert_eq!(m2, vec![0., 0., 0., 0., 1., 1., 1., 1., 0., 0., 0., 0.]);
        let m3: Vec<f64> = (1..=n).map(|t| MeanModel::M3.coefficient(t, n)).collect();
        assert_eq!(m3, vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 1., 1., 1.]);
        assert_eq!(MeanModel::M3.change_points(n), vec![3, 6, 9]);
        let three = MeanChangeSpec::three_step(120, Delta::Constant(1.0));
        assert_eq!(three.model.change_points(120), vec![30, 60, 90]);
    }

    #[test]
    fn zero_shift_is_seed_paired_with_null() {
        let cov = CovarianceSpec::ar1(0.5, 7);
        let a = gen_gaussian(20, &cov, &MeanChangeSpec::none(), 9).unwrap();
        let b = gen_gaussian(
            20,
            &cov,
            &MeanChangeSpec::new(MeanModel::M1, Delta::Constant(0.0)),
            9,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_pre_post_matches_gen_gaussian() {
        let cov = CovarianceSpec::diagonal(0.8, 4);
        let a = gen_cov_change(30, &cov, &cov, 0.5, 3).unwrap();
        let b = gen_gaussian(30, &cov, &MeanChangeSpec::none(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_length_shift_vector_is_rejected() {
        let mean = MeanChangeSpec::new(MeanModel::M1, Delta::Vector(vec![1.0; 3]));
        assert!(gen_gaussian(10, &CovarianceSpec::identity(4), &mean, 0).is_err());
    }
}
