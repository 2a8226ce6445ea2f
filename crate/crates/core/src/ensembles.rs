//! Random-vector laws under study, with exact knowledge of their moments
//! where closed forms exist.
//!
//! Every listed law except `hG` is isotropic by construction: centered with
//! identity covariance. `hG` keeps the identity covariance but loses
//! log-concavity, which is exactly why it is here.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::{adaptive_simpson, open_unit};
use crate::mcmc::{self, IsotropizationResult, Polytope};
use crate::seeding;

/// Default number of draws in a Monte Carlo moment reference sample.
pub const REFERENCE_SAMPLE_SIZE: usize = 1_000_000;

/// Description of a random-vector law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleSpec {
    /// `n` i.i.d. standard normals.
    Gaussian { dim: usize },
    /// `n` i.i.d. symmetric exponentials with density `(1/sqrt 2) e^{-sqrt2 |s|}`.
    Exponential { dim: usize },
    /// Uniform on the cube `[-sqrt3, sqrt3]^n`.
    Cube { dim: usize },
    /// Uniform in the Euclidean ball of radius `sqrt(n+2)`.
    Ball { dim: usize },
    /// Uniform on a convex polytope, pushed through an isotropizing map.
    Polytope {
        dim: usize,
        polytope: Polytope,
        isotropization: Option<IsotropizationResult>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        burn_in: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thin: Option<usize>,
    },
    /// `h * G` with `h` standard normal independent of the standard Gaussian
    /// vector `G`. Identity covariance, not log-concave.
    #[serde(rename = "hG")]
    HG { dim: usize },
    /// `T * Y` for a wrapped isotropic law `Y`; covariance `T T^*`.
    Anisotropic {
        dim: usize,
        cov_factor: Vec<Vec<f64>>,
        base: Box<EnsembleSpec>,
    },
}

impl EnsembleSpec {
    pub fn dim(&self) -> usize {
        match self {
            EnsembleSpec::Gaussian { dim }
            | EnsembleSpec::Exponential { dim }
            | EnsembleSpec::Cube { dim }
            | EnsembleSpec::Ball { dim }
            | EnsembleSpec::Polytope { dim, .. }
            | EnsembleSpec::HG { dim }
            | EnsembleSpec::Anisotropic { dim, .. } => *dim,
        }
    }

    /// Whether the law is log-concave. False for `hG`; a polytope counts once
    /// it has been isotropized (an affine image of a uniform law on a convex
    /// body stays log-concave).
    pub fn log_concave(&self) -> bool {
        match self {
            EnsembleSpec::HG { .. } => false,
            EnsembleSpec::Anisotropic { base, .. } => base.log_concave(),
            _ => true,
        }
    }

    /// Whether the covariance matrix is the identity.
    pub fn identity_covariance(&self) -> bool {
        match self {
            EnsembleSpec::Anisotropic { .. } => false,
            EnsembleSpec::Polytope { isotropization, .. } => isotropization.is_some(),
            _ => true,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            EnsembleSpec::Gaussian { .. } => "gaussian",
            EnsembleSpec::Exponential { .. } => "exponential",
            EnsembleSpec::Cube { .. } => "cube",
            EnsembleSpec::Ball { .. } => "ball",
            EnsembleSpec::Polytope { .. } => "polytope",
            EnsembleSpec::HG { .. } => "hG",
            EnsembleSpec::Anisotropic { .. } => "anisotropic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::Config("ensemble dimension must be positive".into()));
        }
        match self {
            EnsembleSpec::Polytope {
                dim,
                polytope,
                isotropization,
                ..
            } => {
                if polytope.dim() != *dim {
                    return Err(Error::Config(format!(
                        "polytope dimension {} does not match spec dimension {dim}",
                        polytope.dim()
                    )));
                }
                polytope.validate()?;
                if let Some(iso) = isotropization {
                    if iso.shift.len() != *dim {
                        return Err(Error::Config(
                            "isotropization shift dimension mismatch".into(),
                        ));
                    }
                }
                Ok(())
            }
            EnsembleSpec::Anisotropic {
                dim,
                cov_factor,
                base,
            } => {
                if base.dim() != *dim {
                    return Err(Error::Config(format!(
                        "wrapped spec dimension {} does not match {dim}",
                        base.dim()
                    )));
                }
                if cov_factor.len() != *dim || cov_factor.iter().any(|r| r.len() != *dim) {
                    return Err(Error::Config("cov_factor must be an n x n matrix".into()));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn cov_factor_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            EnsembleSpec::Anisotropic {
                dim, cov_factor, ..
            } => Some(DMatrix::from_fn(*dim, *dim, |i, j| cov_factor[i][j])),
            _ => None,
        }
    }

    /// Stable 64-bit fingerprint of the spec, used to derive default oracle
    /// seeds.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serialization cannot fail");
        seeding::hash_bytes(json.as_bytes())
    }
}

/// The `n x N` matrix whose columns are the sampled vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    spec: EnsembleSpec,
    seed: u64,
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn from_parts(spec: EnsembleSpec, seed: u64, data: DMatrix<f64>) -> Self {
        SampleMatrix { spec, seed, data }
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row dimension `n`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Column count `N`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.data.column(i).into_owned()
    }

    /// Writes one column per line, comma-separated coordinates.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for col in self.data.column_iter() {
            let line: Vec<String> = col.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// One draw from the law using the provided stream.
pub fn sample_vector(spec: &EnsembleSpec, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let n = spec.dim();
    match spec {
        EnsembleSpec::Gaussian { .. } => Ok(DVector::from_fn(n, |_, _| StandardNormal.sample(rng))),
        EnsembleSpec::Exponential { .. } => Ok(DVector::from_fn(n, |_, _| {
            symmetric_exponential_inverse_cdf(open_unit(rng))
        })),
        EnsembleSpec::Cube { .. } => {
            let half = 3.0f64.sqrt();
            Ok(DVector::from_fn(n, |_, _| {
                (2.0 * open_unit(rng) - 1.0) * half
            }))
        }
        EnsembleSpec::Ball { .. } => {
            let radius = ((n + 2) as f64).sqrt();
            let mut direction = DVector::from_fn(n, |_, _| {
                let g: f64 = StandardNormal.sample(rng);
                g
            });
            let norm = direction.norm();
            if norm > 0.0 {
                direction /= norm;
            }
            let r = radius * open_unit(rng).powf(1.0 / n as f64);
            Ok(direction * r)
        }
        EnsembleSpec::HG { .. } => {
            let h: f64 = StandardNormal.sample(rng);
            Ok(DVector::from_fn(n, |_, _| {
                let g: f64 = StandardNormal.sample(rng);
                h * g
            }))
        }
        EnsembleSpec::Anisotropic { base, .. } => {
            let t = spec
                .cov_factor_matrix()
                .expect("anisotropic carries a factor");
            let y = sample_vector(base, rng)?;
            Ok(t * y)
        }
        EnsembleSpec::Polytope {
            polytope,
            isotropization,
            burn_in,
            ..
        } => {
            let iso = isotropization.as_ref().ok_or_else(|| {
                Error::SamplerNotInitialized("polytope spec carries no isotropization map".into())
            })?;
            let burn = burn_in.unwrap_or_else(|| mcmc::default_burn_in(n));
            let mut x = DVector::from_column_slice(&polytope.interior_point);
            for _ in 0..burn.max(1) {
                x = mcmc::hit_and_run_step(polytope, &x, rng)?;
            }
            Ok(iso.apply(&x))
        }
    }
}

/// Inverse cdf of the density `(1/sqrt 2) e^{-sqrt2 |s|}` at `u` in (0, 1).
fn symmetric_exponential_inverse_cdf(u: f64) -> f64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    if u < 0.5 {
        (2.0 * u).ln() / sqrt2
    } else {
        -(2.0 * (1.0 - u)).ln() / sqrt2
    }
}

/// `N` independent columns with per-column sub-streams derived from the seed,
/// so the result is identical no matter how the work is scheduled.
pub fn sample_matrix(spec: &EnsembleSpec, count: usize, seed: u64) -> Result<SampleMatrix> {
    if count == 0 {
        return Err(Error::Precondition("sample count must be >= 1".into()));
    }
    spec.validate()?;
    if matches!(spec, EnsembleSpec::Polytope { .. }) {
        return mcmc::sample_polytope_matrix(spec, count, seed);
    }
    let n = spec.dim();
    let columns: Vec<DVector<f64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::stream(seed, i as u64);
            sample_vector(spec, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = DMatrix::zeros(n, count);
    for (i, col) in columns.iter().enumerate() {
        data.set_column(i, col);
    }
    Ok(SampleMatrix::from_parts(spec.clone(), seed, data))
}

/// A directional absolute moment `E |<X, y>|^p`, flagged when it comes from a
/// Monte Carlo reference rather than a closed form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub estimated: bool,
    pub std_error: Option<f64>,
}

impl MomentEstimate {
    fn exact(value: f64) -> Self {
        MomentEstimate {
            value,
            estimated: false,
            std_error: None,
        }
    }
}

/// Absolute moment of the standard normal, `E |Z|^p`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    2.0f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// `E (|Z| ^ B)^p` for a standard normal truncated at level `B`.
fn gaussian_truncated_abs_moment(p: f64, level: f64) -> f64 {
    let phi = |s: f64| (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // All mass of s^p phi(s) lives well inside [0, 12 + 2p].
    let upper = level.min(12.0 + 2.0 * p);
    let body = adaptive_simpson(&|s: f64| s.powf(p) * phi(s), 0.0, upper, 1e-12);
    let tail_prob = 2.0 * (1.0 - normal_cdf(level));
    let tail = if tail_prob > 0.0 {
        level.powf(p) * tail_prob
    } else {
        0.0
    };
    2.0 * body + tail
}

/// Supplies `E |<X, y>|^p` for a law: closed form for the Gaussian, a cached
/// Monte Carlo reference sample for everything else. The reference sample is
/// drawn once at construction and is read-only afterwards.
pub struct MomentOracle {
    spec: EnsembleSpec,
    reference: Option<DMatrix<f64>>,
}

impl MomentOracle {
    pub fn new(spec: &EnsembleSpec, reference_size: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let reference = match spec {
            EnsembleSpec::Gaussian { .. } => None,
            _ => Some(sample_matrix(spec, reference_size, seed)?.data().clone()),
        };
        Ok(MomentOracle {
            spec: spec.clone(),
            reference,
        })
    }

    /// An oracle with the default reference size and a seed derived from the
    /// spec itself.
    pub fn with_defaults(spec: &EnsembleSpec) -> Result<Self> {
        Self::new(spec, REFERENCE_SAMPLE_SIZE, spec.fingerprint())
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn reference_size(&self) -> usize {
        self.reference.as_ref().map_or(0, |r| r.ncols())
    }

    /// `E |<X, y>|^p` for unit `y`.
    pub fn moment(&self, y: &DVector<f64>, p: f64) -> Result<MomentEstimate> {
        self.check_inputs(y, p)?;
        match &self.reference {
            None => Ok(MomentEstimate::exact(gaussian_abs_moment(p))),
            Some(reference) => Ok(mc_moment(reference, y, |s| s.abs().powf(p))),
        }
    }

    /// `E (|<X, y>| ^ B)^p` for unit `y` and truncation level `B`.
    pub fn truncated_moment(&self, y: &DVector<f64>, p: f64, level: f64) -> Result<MomentEstimate> {
        self.check_inputs(y, p)?;
        match &self.reference {
            None => Ok(MomentEstimate::exact(gaussian_truncated_abs_moment(
                p, level,
            ))),
            Some(reference) => Ok(mc_moment(reference, y, |s| s.abs().min(level).powf(p))),
        }
    }

    /// Ambient gradient of `y -> E |<X, y>|^p` (zero tangentially for the
    /// direction-independent Gaussian law).
    pub fn moment_gradient(&self, y: &DVector<f64>, p: f64) -> Result<DVector<f64>> {
        self.check_inputs(y, p)?;
        match &self.reference {
            None => Ok(y * (gaussian_abs_moment(p) * p)),
            Some(reference) => {
                let proj = reference.transpose() * y;
                let count = reference.ncols() as f64;
                let weights = DVector::from_iterator(
                    proj.len(),
                    proj.iter()
                        .map(|&s| p * s.abs().powf(p - 1.0) * s.signum() / count),
                );
                Ok(reference * weights)
            }
        }
    }

    fn check_inputs(&self, y: &DVector<f64>, p: f64) -> Result<()> {
        if p < 1.0 {
            return Err(Error::Domain(format!(
                "moment order p must be >= 1, got {p}"
            )));
        }
        if y.len() != self.spec.dim() {
            return Err(Error::Precondition(format!(
                "direction dimension {} does not match ensemble dimension {}",
                y.len(),
                self.spec.dim()
            )));
        }
        if (y.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(
                "direction must be a unit vector".into(),
            ));
        }
        Ok(())
    }
}

fn mc_moment<F: Fn(f64) -> f64>(
    reference: &DMatrix<f64>,
    y: &DVector<f64>,
    f: F,
) -> MomentEstimate {
    let proj = reference.transpose() * y;
    let count = proj.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &s in proj.iter() {
        let v = f(s);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / count;
    let variance = (sum_sq / count - mean * mean).max(0.0);
    MomentEstimate {
        value: mean,
        estimated: true,
        std_error: Some((variance / count).sqrt()),
    }
}

/// `E |<X, y>|^p` with a one-off default oracle; prefer building a
/// [`MomentOracle`] when evaluating many directions.
pub fn true_moment(spec: &EnsembleSpec, y: &DVector<f64>, p: f64) -> Result<MomentEstimate> {
    MomentOracle::with_defaults(spec)?.moment(y, p)
}
