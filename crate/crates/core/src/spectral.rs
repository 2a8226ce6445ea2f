//! Empirical covariance matrices, Gram spectra, Marchenko-Pastur references,
//! and operator norms from l2 into lp.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensembles::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Above this dimension the deviation switches from a full symmetric
/// decomposition to iterative extreme-eigenvalue computation.
pub const DENSE_EIGEN_LIMIT: usize = 2048;

/// Relative tolerance of the iterative extreme-eigenvalue path.
pub const ITERATIVE_TOL: f64 = 1e-10;

/// Spectrum of the Gram matrix `A A*` together with the scaled extremes and
/// the covariance deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// Eigenvalues of `A A*`, sorted ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_min_over_n_samples: f64,
    pub lambda_max_over_n_samples: f64,
    /// `max |eig((1/N) A A* - Id)|`.
    pub deviation: f64,
    /// Aspect ratio `beta = n / N`.
    pub beta: f64,
}

impl SpectrumSummary {
    /// Writes one eigenvalue per line.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for v in &self.eigenvalues {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

/// The empirical covariance `(1/N) sum_i X_i X_i^T`, symmetrized to machine
/// precision.
pub fn empirical_covariance(m: &SampleMatrix) -> DMatrix<f64> {
    let data = m.data();
    let count = m.len() as f64;
    let mut cov = data * data.transpose() / count;
    for i in 0..cov.nrows() {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

fn deviation_matrix(m: &SampleMatrix) -> DMatrix<f64> {
    let mut dev = empirical_covariance(m);
    for i in 0..dev.nrows() {
        dev[(i, i)] -= 1.0;
    }
    dev
}

/// `||Sigma_hat - Id||`: dense path below [`DENSE_EIGEN_LIMIT`], iterative
/// above it.
pub fn covariance_deviation(m: &SampleMatrix) -> f64 {
    if m.dim() <= DENSE_EIGEN_LIMIT {
        covariance_deviation_dense(m)
    } else {
        covariance_deviation_iterative(m)
    }
}

/// Deviation by full symmetric eigendecomposition.
pub fn covariance_deviation_dense(m: &SampleMatrix) -> f64 {
    let dev = deviation_matrix(m);
    linalg::extreme_abs_eigenpair_dense(&dev).0.abs()
}

/// Deviation by shifted power iteration on the deviation matrix and its
/// negation.
pub fn covariance_deviation_iterative(m: &SampleMatrix) -> f64 {
    let dev = deviation_matrix(m);
    linalg::extreme_abs_eigenpair_power(&dev, ITERATIVE_TOL)
        .0
        .abs()
}

/// Extreme eigenpair of `Sigma_hat - Id` (signed eigenvalue of largest
/// magnitude plus its direction).
pub fn deviation_eigenpair(m: &SampleMatrix) -> (f64, DVector<f64>) {
    let dev = deviation_matrix(m);
    if m.dim() <= DENSE_EIGEN_LIMIT {
        linalg::extreme_abs_eigenpair_dense(&dev)
    } else {
        linalg::extreme_abs_eigenpair_power(&dev, ITERATIVE_TOL)
    }
}

/// Eigenvalues of `A A*` (always the `n x n` side) with the scaled extremes.
pub fn gram_spectrum(m: &SampleMatrix) -> SpectrumSummary {
    let data = m.data();
    let gram = data * data.transpose();
    let eigenvalues: Vec<f64> = {
        let ev = linalg::symmetric_eigenvalues_sorted(&gram);
        ev.iter().map(|&v| v.max(0.0)).collect()
    };
    let count = m.len() as f64;
    let n = m.dim();
    let lambda_min = eigenvalues[0] / count;
    let lambda_max = eigenvalues[n - 1] / count;
    let deviation = eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max((v / count - 1.0).abs()));
    SpectrumSummary {
        eigenvalues,
        lambda_min_over_n_samples: lambda_min,
        lambda_max_over_n_samples: lambda_max,
        deviation,
        beta: n as f64 / count,
    }
}

/// Support edges `((1 - sqrt(beta))^2, (1 + sqrt(beta))^2)` of the
/// Marchenko-Pastur law.
pub fn mp_edges(beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    let s = beta.sqrt();
    Ok(((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s)))
}

/// Marchenko-Pastur density with ratio `beta` at `x`.
pub fn mp_density(x: f64, beta: f64) -> f64 {
    let s = beta.sqrt();
    let lo = (1.0 - s) * (1.0 - s);
    let hi = (1.0 + s) * (1.0 + s);
    if x <= lo || x >= hi || x <= 0.0 {
        return 0.0;
    }
    ((hi - x) * (x - lo)).sqrt() / (2.0 * std::f64::consts::PI * beta * x)
}

/// Marchenko-Pastur cdf by adaptive quadrature of the density, absolute
/// tolerance 1e-8.
pub fn mp_cdf(x: f64, beta: f64) -> Result<f64> {
    let (lo, hi) = mp_edges(beta)?;
    if x <= lo {
        return Ok(0.0);
    }
    if x >= hi {
        return Ok(1.0);
    }
    let val = linalg::adaptive_simpson(&|t: f64| mp_density(t, beta), lo, x, 1e-9);
    Ok(val.clamp(0.0, 1.0))
}

/// Kolmogorov distance between the empirical cdf of the scaled spectrum and
/// the Marchenko-Pastur cdf at the summary's aspect ratio.
pub fn esd_distance(summary: &SpectrumSummary) -> Result<f64> {
    let beta = summary.beta;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }
    let n = summary.eigenvalues.len() as f64;
    let count = summary.eigenvalues.len() as f64 / beta;
    let mut distance = 0.0f64;
    for (i, &ev) in summary.eigenvalues.iter().enumerate() {
        let x = ev / count;
        let f = mp_cdf(x, beta)?;
        distance = distance.max((f - i as f64 / n).abs());
        distance = distance.max((f - (i as f64 + 1.0) / n).abs());
    }
    Ok(distance)
}

/// How an operator-norm value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Exact,
    HeuristicLower,
}

/// Norm of `Gamma : l2^n -> lp^N`, where `Gamma` has the sample vectors as
/// rows. Exact for p = 2 (top singular value) and p = infinity (largest row
/// norm); a certified lower bound from multistart sphere ascent otherwise.
pub fn ell2_to_ellp_norm(m: &SampleMatrix, p: f64) -> Result<(f64, NormMethod)> {
    if p < 1.0 {
        return Err(Error::Domain(format!("p must be >= 1, got {p}")));
    }
    if p == 2.0 {
        return Ok((linalg::operator_norm(m.data()), NormMethod::Exact));
    }
    if p.is_infinite() {
        let max_row = (0..m.len())
            .map(|i| m.column(i).norm())
            .fold(0.0f64, f64::max);
        return Ok((max_row, NormMethod::Exact));
    }
    let gamma = m.data().transpose();
    let dim = m.dim();
    let objective = |y: &DVector<f64>| {
        let image = &gamma * y;
        image
            .iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    };
    let gamma2 = gamma.clone();
    let gradient = move |y: &DVector<f64>| {
        let image = &gamma2 * y;
        let norm = image
            .iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p);
        if norm <= 0.0 {
            return DVector::zeros(y.len());
        }
        let weights = DVector::from_iterator(
            image.len(),
            image
                .iter()
                .map(|&v| v.abs().powf(p - 1.0) * v.signum() * norm.powf(1.0 - p)),
        );
        gamma2.transpose() * weights
    };
    let out = linalg::sphere_ascent(
        dim,
        objective,
        gradient,
        32,
        m.seed() ^ p.to_bits(),
        1e-10,
        400,
    );
    Ok((out.value, NormMethod::HeuristicLower))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_matrix, EnsembleSpec};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn matrix_from(data: DMatrix<f64>) -> SampleMatrix {
        let spec = EnsembleSpec::Gaussian { dim: data.nrows() };
        SampleMatrix::from_parts(spec, 0, data)
    }

    #[test]
    fn covariance_of_basis_columns() {
        let m = matrix_from(dmatrix![1.0, 0.0; 0.0, 1.0]);
        let cov = empirical_covariance(&m);
        assert_relative_eq!(cov[(0, 0)], 0.5);
        assert_relative_eq!(cov[(1, 1)], 0.5);
        assert_relative_eq!(cov[(0, 1)], 0.0);
        // Deviation of (1/n) Id is 1 - 1/n.
        assert_relative_eq!(covariance_deviation(&m), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn covariance_of_repeated_column() {
        let data = DMatrix::from_fn(3, 4, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let m = matrix_from(data);
        let cov = empirical_covariance(&m);
        assert_relative_eq!(cov[(0, 0)], 1.0);
        assert_eq!(cov.iter().filter(|v| v.abs() > 1e-15).count(), 1);
    }

    #[test]
    fn deviation_of_scaled_and_zero_columns() {
        let data = dmatrix![2.0f64.sqrt(), 0.0; 0.0, 0.0];
        let m = matrix_from(data);
        assert_relative_eq!(covariance_deviation(&m), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn large_gaussian_deviation_is_small() {
        let spec = EnsembleSpec::Gaussian { dim: 5 };
        let m = sample_matrix(&spec, 200_000, 17).unwrap();
        assert!(covariance_deviation(&m) <= 0.02);
    }

    #[test]
    fn deviation_matches_random_probe_sup() {
        // Staged random probing: uniform exploration first, then shrinking
        // clouds around the running best. 1e5 probes total, no eigensolver.
        let specs = [
            EnsembleSpec::Gaussian { dim: 4 },
            EnsembleSpec::Gaussian { dim: 8 },
        ];
        for spec in &specs {
            let dim = spec.dim();
            for trial in 0..50 {
                let m = sample_matrix(spec, 16, 100 + trial).unwrap();
                let dev = covariance_deviation(&m);
                let cov = empirical_covariance(&m);
                let mut rng = crate::seeding::rng(trial);
                let mut sup = 0.0f64;
                // The two signed quadratics each have a single maximal basin,
                // so refinement around the running best cannot be trapped.
                for sign in [1.0, -1.0] {
                    let eval = |y: &DVector<f64>| sign * ((y.transpose() * &cov * y)[(0, 0)] - 1.0);
                    let mut best = linalg::random_unit_vector(dim, &mut rng);
                    let mut track = eval(&best);
                    for &sigma in &[f64::INFINITY, 0.3, 0.1, 0.03, 0.01] {
                        for _ in 0..10_000 {
                            let y = if sigma.is_infinite() {
                                linalg::random_unit_vector(dim, &mut rng)
                            } else {
                                let mut y =
                                    &best + linalg::random_unit_vector(dim, &mut rng) * sigma;
                                y /= y.norm();
                                y
                            };
                            let q = eval(&y);
                            if q > track {
                                track = q;
                                best = y;
                            }
                        }
                    }
                    sup = sup.max(track.abs());
                }
                assert!(sup <= dev + 1e-9);
                assert!(dev - sup <= 1e-3, "dev {dev} probe sup {sup}");
            }
        }
    }

    #[test]
    fn iterative_path_agrees_with_dense() {
        let spec = EnsembleSpec::Exponential { dim: 6 };
        for trial in 0..10 {
            let m = sample_matrix(&spec, 12, trial).unwrap();
            let dense = covariance_deviation_dense(&m);
            let iterative = covariance_deviation_iterative(&m);
            assert_relative_eq!(dense, iterative, epsilon = 1e-8);
        }
    }

    #[test]
    fn gram_spectrum_of_orthogonal_columns() {
        let data = dmatrix![2.0, 0.0; 0.0, 3.0];
        let m = matrix_from(data);
        let summary = gram_spectrum(&m);
        assert_relative_eq!(summary.eigenvalues[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(summary.eigenvalues[1], 9.0, epsilon = 1e-12);
        assert_relative_eq!(summary.beta, 1.0);
    }

    #[test]
    fn gram_spectrum_of_zero_matrix() {
        let m = matrix_from(DMatrix::zeros(3, 5));
        let summary = gram_spectrum(&m);
        assert!(summary.eigenvalues.iter().all(|&v| v == 0.0));
        assert_relative_eq!(summary.deviation, 1.0);
    }

    #[test]
    fn trace_identity_holds() {
        let spec = EnsembleSpec::Cube { dim: 5 };
        let m = sample_matrix(&spec, 40, 3).unwrap();
        let summary = gram_spectrum(&m);
        let trace: f64 = summary.eigenvalues.iter().sum();
        let norms: f64 = (0..m.len()).map(|i| m.column(i).norm_squared()).sum();
        assert_relative_eq!(trace, norms, max_relative = 1e-8);
    }

    #[test]
    fn deviation_is_rotation_invariant() {
        let spec = EnsembleSpec::Gaussian { dim: 4 };
        let m = sample_matrix(&spec, 10, 21).unwrap();
        let dev = covariance_deviation(&m);
        // Random rotation from the QR of a Gaussian matrix.
        let mut rng = crate::seeding::rng(55);
        let g = DMatrix::from_fn(4, 4, |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
        });
        let q = g.qr().q();
        let rotated = matrix_from(&q * m.data());
        assert_relative_eq!(covariance_deviation(&rotated), dev, max_relative = 1e-8);
    }

    #[test]
    fn mp_edges_values() {
        assert_eq!(mp_edges(1.0).unwrap(), (0.0, 4.0));
        let (lo, hi) = mp_edges(0.25).unwrap();
        assert_relative_eq!(lo, 0.25, epsilon = 1e-12);
        assert_relative_eq!(hi, 2.25, epsilon = 1e-12);
        let (lo, hi) = mp_edges(0.1).unwrap();
        assert_relative_eq!(lo, 0.4675, epsilon = 1e-4);
        assert_relative_eq!(hi, 1.7325, epsilon = 1e-4);
        assert!(mp_edges(0.0).is_err());
        assert!(mp_edges(1.5).is_err());
    }

    #[test]
    fn mp_cdf_total_mass() {
        for &beta in &[0.1, 0.5, 1.0] {
            let (_, hi) = mp_edges(beta).unwrap();
            let total = mp_cdf(hi, beta).unwrap();
            assert_relative_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn esd_distance_point_mass() {
        // All eigenvalues equal to N: the empirical cdf is a step at 1.
        let n = 10;
        let count = 20.0;
        let summary = SpectrumSummary {
            eigenvalues: vec![count; n],
            lambda_min_over_n_samples: 1.0,
            lambda_max_over_n_samples: 1.0,
            deviation: 0.0,
            beta: 0.5,
        };
        assert!(esd_distance(&summary).unwrap() >= 0.5);
    }

    #[test]
    fn esd_distance_at_mp_quantiles() {
        // Eigenvalues placed exactly at the quantiles i/(n+1).
        let beta = 0.5;
        let n = 40;
        let count = n as f64 / beta;
        let (lo, hi) = mp_edges(beta).unwrap();
        let mut eigenvalues = Vec::with_capacity(n);
        for i in 1..=n {
            let target = i as f64 / (n as f64 + 1.0);
            // Bisection for the quantile.
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if mp_cdf(mid, beta).unwrap() < target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            eigenvalues.push(0.5 * (a + b) * count);
        }
        let summary = SpectrumSummary {
            eigenvalues,
            lambda_min_over_n_samples: 0.0,
            lambda_max_over_n_samples: 0.0,
            deviation: 0.0,
            beta,
        };
        let d = esd_distance(&summary).unwrap();
        assert!(d <= 1.0 / (n as f64 + 1.0) + 1e-6, "distance {d}");
    }

    #[test]
    fn gaussian_spectrum_near_mp_edges() {
        let spec = EnsembleSpec::Gaussian { dim: 200 };
        let m = sample_matrix(&spec, 2000, 31).unwrap();
        let summary = gram_spectrum(&m);
        assert!((summary.lambda_min_over_n_samples - 0.4675).abs() <= 0.1);
        assert!((summary.lambda_max_over_n_samples - 1.7325).abs() <= 0.1);
    }

    #[test]
    fn ellp_norm_exact_cases() {
        let m = matrix_from(DMatrix::identity(3, 3));
        let (v2, m2) = ell2_to_ellp_norm(&m, 2.0).unwrap();
        assert_relative_eq!(v2, 1.0, epsilon = 1e-10);
        assert_eq!(m2, NormMethod::Exact);
        let (vinf, minf) = ell2_to_ellp_norm(&m, f64::INFINITY).unwrap();
        assert_relative_eq!(vinf, 1.0, epsilon = 1e-10);
        assert_eq!(minf, NormMethod::Exact);
    }

    #[test]
    fn ellp_norm_single_row_is_row_norm() {
        // One sample vector r: y -> <r, y> maps into a single coordinate, so
        // the norm is |r| for every p.
        let data = dmatrix![3.0; 4.0];
        let m = matrix_from(data);
        for &p in &[1.0, 1.7, 2.0, 3.0, f64::INFINITY] {
            let (v, _) = ell2_to_ellp_norm(&m, p).unwrap();
            assert_relative_eq!(v, 5.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn ellp_heuristic_respects_comparison_bounds() {
        let spec = EnsembleSpec::Gaussian { dim: 4 };
        let m = sample_matrix(&spec, 12, 9).unwrap();
        let (v2, _) = ell2_to_ellp_norm(&m, 2.0).unwrap();
        let count = m.len() as f64;
        for &p in &[1.0, 1.5] {
            let (vp, method) = ell2_to_ellp_norm(&m, p).unwrap();
            assert_eq!(method, NormMethod::HeuristicLower);
            assert!(vp <= count.powf(1.0 / p - 0.5) * v2 + 1e-9);
        }
        for &p in &[3.0, 6.0] {
            let (vp, _) = ell2_to_ellp_norm(&m, p).unwrap();
            assert!(vp <= v2 + 1e-9);
        }
    }
}
