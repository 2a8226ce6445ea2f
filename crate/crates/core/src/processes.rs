//! Empirical moment deviation processes over the sphere, truncation
//! machinery, psi_1-norm estimation, and the Bernstein tail evaluator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ensembles::{MomentOracle, SampleMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seeding;
use crate::spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessMethod {
    /// Closed via the symmetric eigenproblem (p = 2, identity covariance).
    ExactP2,
    /// Multistart projected-gradient ascent; a lower bound on the supremum.
    Multistart,
    /// Supremum over an explicit probe set.
    Net,
}

/// Supremum of the centered empirical p-th moment process over the sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentProcessResult {
    pub p: f64,
    pub sup_value: f64,
    pub argmax: Vec<f64>,
    pub method: ProcessMethod,
    pub truncation: Option<f64>,
}

const ASCENT_RESTARTS: usize = 32;
const ASCENT_GRAD_TOL: f64 = 1e-8;
const ASCENT_MAX_ITERS: usize = 600;

/// `sup_y |(1/N) sum_i |<X_i, y>|^p - E |<X, y>|^p|`. Exact through the
/// eigenproblem for `p = 2` on identity-covariance laws; otherwise a
/// multistart ascent lower bound with the expectation supplied by the oracle.
pub fn p_moment_deviation(
    sample: &SampleMatrix,
    p: f64,
    oracle: &MomentOracle,
) -> Result<MomentProcessResult> {
    if p < 1.0 {
        return Err(Error::Domain(format!("moment order must be >= 1, got {p}")));
    }
    if p == 2.0 && sample.spec().identity_covariance() {
        let (value, vector) = spectral::deviation_eigenpair(sample);
        return Ok(MomentProcessResult {
            p,
            sup_value: value.abs(),
            argmax: vector.iter().copied().collect(),
            method: ProcessMethod::ExactP2,
            truncation: None,
        });
    }

    let dim = sample.dim();
    let count = sample.len() as f64;
    let data = sample.data().clone();
    let oracle_objective = |y: &DVector<f64>| -> f64 {
        let emp = (data.transpose() * y)
            .iter()
            .map(|s| s.abs().powf(p))
            .sum::<f64>()
            / count;
        let expected = oracle.moment(y, p).expect("validated inputs").value;
        emp - expected
    };
    let data_grad = sample.data().clone();
    let gradient = |y: &DVector<f64>| -> DVector<f64> {
        let proj = data_grad.transpose() * y;
        let weights = DVector::from_iterator(
            proj.len(),
            proj.iter()
                .map(|&s| p * s.abs().powf(p - 1.0) * s.signum() / count),
        );
        let emp_grad = &data_grad * weights;
        let exp_grad = oracle.moment_gradient(y, p).expect("validated inputs");
        let h = {
            let emp = (data_grad.transpose() * y)
                .iter()
                .map(|s| s.abs().powf(p))
                .sum::<f64>()
                / count;
            emp - oracle.moment(y, p).expect("validated inputs").value
        };
        (emp_grad - exp_grad) * h.signum()
    };
    let objective = |y: &DVector<f64>| oracle_objective(y).abs();

    let seed = seeding::derive_seed(sample.seed(), &[p.to_bits(), 0x9a5c]);
    let out = linalg::sphere_ascent(
        dim,
        objective,
        gradient,
        ASCENT_RESTARTS,
        seed,
        ASCENT_GRAD_TOL,
        ASCENT_MAX_ITERS,
    );
    Ok(MomentProcessResult {
        p,
        sup_value: out.value,
        argmax: out.argmax.iter().copied().collect(),
        method: ProcessMethod::Multistart,
        truncation: None,
    })
}

/// Evaluates the centered p-th moment process at one direction.
pub fn process_at(
    sample: &SampleMatrix,
    y: &DVector<f64>,
    p: f64,
    oracle: &MomentOracle,
) -> Result<f64> {
    let count = sample.len() as f64;
    let emp = (sample.data().transpose() * y)
        .iter()
        .map(|s| s.abs().powf(p))
        .sum::<f64>()
        / count;
    Ok(emp - oracle.moment(y, p)?.value)
}

/// Supremum of the truncated centered process over an explicit probe set.
pub fn truncated_deviation(
    sample: &SampleMatrix,
    p: f64,
    level: f64,
    probes: &[DVector<f64>],
    oracle: &MomentOracle,
) -> Result<MomentProcessResult> {
    if p < 1.0 {
        return Err(Error::Domain(format!("moment order must be >= 1, got {p}")));
    }
    if level <= 1.0 {
        return Err(Error::Domain(format!(
            "truncation level must exceed 1, got {level}"
        )));
    }
    if probes.is_empty() {
        return Err(Error::Precondition("probe set must be nonempty".into()));
    }
    let count = sample.len() as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_dir = probes[0].clone();
    for y in probes {
        let emp = (sample.data().transpose() * y)
            .iter()
            .map(|s| s.abs().min(level).powf(p))
            .sum::<f64>()
            / count;
        let expected = oracle.truncated_moment(y, p, level)?.value;
        let value = (emp - expected).abs();
        if value > best {
            best = value;
            best_dir = y.clone();
        }
    }
    Ok(MomentProcessResult {
        p,
        sup_value: best,
        argmax: best_dir.iter().copied().collect(),
        method: ProcessMethod::Net,
        truncation: Some(level),
    })
}

/// The three pieces of the truncation split at one direction: the full
/// centered process equals `truncated + empirical_tail - expected_tail`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSplit {
    pub full: f64,
    pub truncated: f64,
    pub empirical_tail: f64,
    pub expected_tail: f64,
}

/// Computes the split identity terms on one probe direction, all against the
/// same oracle reference so the identity is exact.
pub fn deviation_split(
    sample: &SampleMatrix,
    y: &DVector<f64>,
    p: f64,
    level: f64,
    oracle: &MomentOracle,
) -> Result<DeviationSplit> {
    if level <= 1.0 {
        return Err(Error::Domain(format!(
            "truncation level must exceed 1, got {level}"
        )));
    }
    let count = sample.len() as f64;
    let proj = sample.data().transpose() * y;
    let emp_full = proj.iter().map(|s| s.abs().powf(p)).sum::<f64>() / count;
    let emp_trunc = proj.iter().map(|s| s.abs().min(level).powf(p)).sum::<f64>() / count;
    let emp_tail = proj
        .iter()
        .map(|&s| {
            if s.abs() >= level {
                s.abs().powf(p) - level.powf(p)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / count;
    let exp_full = oracle.moment(y, p)?.value;
    let exp_trunc = oracle.truncated_moment(y, p, level)?.value;
    let exp_tail = exp_full - exp_trunc;
    Ok(DeviationSplit {
        full: emp_full - exp_full,
        truncated: emp_trunc - exp_trunc,
        empirical_tail: emp_tail,
        expected_tail: exp_tail,
    })
}

/// Indices exceeding the truncation level along `y`, with the squared mass
/// they carry. `level * sqrt(|E_B|)` never exceeds the root of that mass.
pub fn exceedance_set(sample: &SampleMatrix, y: &DVector<f64>, level: f64) -> (Vec<usize>, f64) {
    let proj = sample.data().transpose() * y;
    let mut indices = Vec::new();
    let mut mass = 0.0;
    for (i, &s) in proj.iter().enumerate() {
        if s.abs() >= level {
            indices.push(i);
            mass += s * s;
        }
    }
    (indices, mass)
}

/// A psi_1-norm estimate from samples of `|Y|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psi1Estimate {
    pub value: f64,
    pub samples_used: usize,
    /// Remaining bisection interval at termination.
    pub bracket: (f64, f64),
    /// Set when the root ran into a bracket edge instead of converging.
    pub at_bracket_edge: bool,
}

const PSI1_MIN_SAMPLES: usize = 1000;
const PSI1_TOL: f64 = 1e-6;

/// Estimates `inf { C > 0 : E exp(|Y|/C) <= 2 }` by monotone bisection of the
/// empirical mean over `[max|Y|/50, 50 max|Y|]`.
pub fn psi1_estimate(samples: &[f64]) -> Result<Psi1Estimate> {
    if samples.len() < PSI1_MIN_SAMPLES {
        return Err(Error::Precondition(format!(
            "psi_1 estimation needs at least {PSI1_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let max_abs = samples.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if max_abs == 0.0 {
        return Ok(Psi1Estimate {
            value: 0.0,
            samples_used: samples.len(),
            bracket: (0.0, 0.0),
            at_bracket_edge: false,
        });
    }
    let mean_exp = |c: f64| -> f64 {
        samples.iter().map(|&v| (v.abs() / c).exp()).sum::<f64>() / samples.len() as f64
    };
    let mut lo = max_abs / 50.0;
    let mut hi = 50.0 * max_abs;
    // The mean decreases in C; the root sits inside the bracket unless the
    // sample is so light that even the lower edge undershoots 2.
    if mean_exp(lo) < 2.0 {
        return Ok(Psi1Estimate {
            value: lo,
            samples_used: samples.len(),
            bracket: (lo, hi),
            at_bracket_edge: true,
        });
    }
    if mean_exp(hi) > 2.0 {
        return Ok(Psi1Estimate {
            value: hi,
            samples_used: samples.len(),
            bracket: (lo, hi),
            at_bracket_edge: true,
        });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = mean_exp(mid);
        if (v - 2.0).abs() <= PSI1_TOL {
            break;
        }
        if v > 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Psi1Estimate {
        value: mid,
        samples_used: samples.len(),
        bracket: (lo, hi),
        at_bracket_edge: false,
    })
}

/// Bernstein's inequality bound `exp(-tau^2 N / (2 (sigma^2 + a tau / 3)))`,
/// clamped to `[0, 1]`.
pub fn bernstein_tail(sigma_sq: f64, bound: f64, count: usize, tau: f64) -> Result<f64> {
    if sigma_sq < 0.0 {
        return Err(Error::Domain("variance proxy must be nonnegative".into()));
    }
    if bound <= 0.0 {
        return Err(Error::Domain("range bound must be positive".into()));
    }
    if count == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    if tau < 0.0 {
        return Err(Error::Domain("deviation must be nonnegative".into()));
    }
    let value = (-(tau * tau * count as f64) / (2.0 * (sigma_sq + bound * tau / 3.0))).exp();
    Ok(value.clamp(0.0, 1.0))
}

/// `(E |Y|^p)^{1/p} / (p psi_1)`: the empirical handle on the moment growth
/// of sub-exponential variables.
pub fn moment_psi1_ratio(samples: &[f64], p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::Domain("moment order must be >= 1".into()));
    }
    let psi = psi1_estimate(samples)?;
    if psi.value == 0.0 {
        return Err(Error::Domain(
            "psi_1 vanished (all-zero sample); ratio undefined".into(),
        ));
    }
    let pf = p as f64;
    let moment = samples.iter().map(|&v| v.abs().powf(pf)).sum::<f64>() / samples.len() as f64;
    Ok(moment.powf(1.0 / pf) / (pf * psi.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_matrix, sample_vector, EnsembleSpec};
    use approx::assert_relative_eq;

    #[test]
    fn one_dimensional_p2_process() {
        let spec = EnsembleSpec::Gaussian { dim: 1 };
        let m = sample_matrix(&spec, 50, 3).unwrap();
        let oracle = MomentOracle::new(&spec, 10, 0).unwrap();
        let out = p_moment_deviation(&m, 2.0, &oracle).unwrap();
        let expect = (m.data().iter().map(|v| v * v).sum::<f64>() / 50.0 - 1.0).abs();
        assert_relative_eq!(out.sup_value, expect, max_relative = 1e-10);
        assert_eq!(out.method, ProcessMethod::ExactP2);
    }

    #[test]
    fn gaussian_large_sample_p2_is_small() {
        let spec = EnsembleSpec::Gaussian { dim: 5 };
        let m = sample_matrix(&spec, 300_000, 8).unwrap();
        let oracle = MomentOracle::new(&spec, 10, 0).unwrap();
        let out = p_moment_deviation(&m, 2.0, &oracle).unwrap();
        assert!(out.sup_value <= 0.02);
    }

    #[test]
    fn multistart_matches_exact_p2() {
        // Force the multistart path by evaluating p = 2 through an
        // anisotropy-free wrapper comparison: run ascent with p = 2 on the
        // gaussian closed-form oracle and compare against the eigen path.
        let spec = EnsembleSpec::Gaussian { dim: 4 };
        let oracle = MomentOracle::new(&spec, 10, 0).unwrap();
        for seed in 0..25 {
            let m = sample_matrix(&spec, 9, seed).unwrap();
            let exact = p_moment_deviation(&m, 2.0, &oracle).unwrap();
            // Re-run through the ascent machinery directly.
            let count = m.len() as f64;
            let data = m.data().clone();
            let objective = move |y: &DVector<f64>| {
                ((data.transpose() * y).iter().map(|s| s * s).sum::<f64>() / count - 1.0).abs()
            };
            let data2 = m.data().clone();
            let gradient = move |y: &DVector<f64>| {
                let proj = data2.transpose() * y;
                let h = proj.iter().map(|s| s * s).sum::<f64>() / count - 1.0;
                let weights =
                    DVector::from_iterator(proj.len(), proj.iter().map(|&s| 2.0 * s / count));
                (&data2 * weights - y * 2.0) * h.signum()
            };
            let ascent = linalg::sphere_ascent(4, objective, gradient, 32, seed, 1e-10, 600);
            assert_relative_eq!(ascent.value, exact.sup_value, epsilon = 1e-4);
        }
    }

    #[test]
    fn evaluating_process_at_argmax_reproduces_sup() {
        let spec = EnsembleSpec::Exponential { dim: 3 };
        let m = sample_matrix(&spec, 40, 5).unwrap();
        let oracle = MomentOracle::new(&spec, 50_000, 1).unwrap();
        let out = p_moment_deviation(&m, 3.0, &oracle).unwrap();
        assert_eq!(out.method, ProcessMethod::Multistart);
        let y = DVector::from_vec(out.argmax.clone());
        let direct = process_at(&m, &y, 3.0, &oracle).unwrap().abs();
        assert_relative_eq!(direct, out.sup_value, max_relative = 1e-6);
    }

    #[test]
    fn truncation_far_out_is_inactive() {
        let spec = EnsembleSpec::Cube { dim: 3 };
        let m = sample_matrix(&spec, 100, 2).unwrap();
        let oracle = MomentOracle::new(&spec, 50_000, 3).unwrap();
        let mut rng = seeding::rng(4);
        let probes: Vec<DVector<f64>> = (0..10)
            .map(|_| linalg::random_unit_vector(3, &mut rng))
            .collect();
        let wide = truncated_deviation(&m, 2.0, 1e9, &probes, &oracle).unwrap();
        // Cube coordinates are bounded by sqrt(3) < 1e9, so truncation is a
        // no-op for the empirical part; compare to the plain process sup over
        // the same probes.
        let mut plain = f64::NEG_INFINITY;
        for y in &probes {
            plain = plain.max(process_at(&m, y, 2.0, &oracle).unwrap().abs());
        }
        assert_relative_eq!(wide.sup_value, plain, max_relative = 1e-9);
    }

    #[test]
    fn truncation_below_all_data_is_deterministic() {
        // Level below every |<X_i, y>|: the empirical truncated part is
        // exactly level^p.
        let data = nalgebra::DMatrix::from_element(1, 10, 5.0);
        let m = SampleMatrix::from_parts(EnsembleSpec::Gaussian { dim: 1 }, 0, data);
        let oracle = MomentOracle::new(&EnsembleSpec::Gaussian { dim: 1 }, 10, 0).unwrap();
        let y = DVector::from_vec(vec![1.0]);
        let level = 2.0;
        let split = deviation_split(&m, &y, 2.0, level, &oracle).unwrap();
        let expected_emp_trunc =
            level * level - oracle.truncated_moment(&y, 2.0, level).unwrap().value;
        assert_relative_eq!(split.truncated, expected_emp_trunc, max_relative = 1e-12);
    }

    #[test]
    fn split_identity_holds() {
        let spec = EnsembleSpec::Exponential { dim: 4 };
        let m = sample_matrix(&spec, 60, 9).unwrap();
        let oracle = MomentOracle::new(&spec, 40_000, 2).unwrap();
        let mut rng = seeding::rng(11);
        for _ in 0..5 {
            let y = linalg::random_unit_vector(4, &mut rng);
            let split = deviation_split(&m, &y, 2.5, 1.5, &oracle).unwrap();
            let recombined = split.truncated + split.empirical_tail - split.expected_tail;
            assert_relative_eq!(split.full, recombined, max_relative = 1e-6);
        }
    }

    #[test]
    fn exceedance_mass_inequality() {
        let spec = EnsembleSpec::Exponential { dim: 5 };
        let m = sample_matrix(&spec, 200, 6).unwrap();
        let mut rng = seeding::rng(8);
        for _ in 0..10 {
            let y = linalg::random_unit_vector(5, &mut rng);
            let level = 1.5;
            let (indices, mass) = exceedance_set(&m, &y, level);
            assert!(level * (indices.len() as f64).sqrt() <= mass.sqrt() + 1e-12);
        }
    }

    #[test]
    fn psi1_of_constant_sample() {
        let samples = vec![3.0; 2000];
        let est = psi1_estimate(&samples).unwrap();
        assert_relative_eq!(est.value, 3.0 / 2.0f64.ln(), max_relative = 1e-4);
        assert!(!est.at_bracket_edge);
    }

    #[test]
    fn psi1_of_symmetric_exponential() {
        let spec = EnsembleSpec::Exponential { dim: 1 };
        let m = sample_matrix(&spec, 1_000_000, 13).unwrap();
        let samples: Vec<f64> = m.data().iter().copied().collect();
        let est = psi1_estimate(&samples).unwrap();
        assert!(
            (est.value - std::f64::consts::SQRT_2).abs() <= 0.05,
            "psi1 {} vs sqrt(2)",
            est.value
        );
    }

    #[test]
    fn psi1_of_standard_normal_in_range() {
        let spec = EnsembleSpec::Gaussian { dim: 1 };
        let m = sample_matrix(&spec, 1_000_000, 14).unwrap();
        let samples: Vec<f64> = m.data().iter().copied().collect();
        let est = psi1_estimate(&samples).unwrap();
        assert!(est.value >= 1.0 && est.value <= 1.6, "psi1 {}", est.value);
    }

    #[test]
    fn psi1_edge_cases() {
        assert!(psi1_estimate(&[1.0; 10]).is_err());
        let zeros = vec![0.0; 2000];
        let est = psi1_estimate(&zeros).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn psi1_is_positively_homogeneous() {
        let spec = EnsembleSpec::Exponential { dim: 1 };
        let m = sample_matrix(&spec, 20_000, 15).unwrap();
        let samples: Vec<f64> = m.data().iter().copied().collect();
        let scaled: Vec<f64> = samples.iter().map(|v| v * 2.5).collect();
        let a = psi1_estimate(&samples).unwrap().value;
        let b = psi1_estimate(&scaled).unwrap().value;
        assert_relative_eq!(b, 2.5 * a, max_relative = 1e-4);
    }

    #[test]
    fn bernstein_values_and_monotonicity() {
        assert_eq!(bernstein_tail(1.0, 1.0, 10, 0.0).unwrap(), 1.0);
        let v = bernstein_tail(1.0, 1.0, 100, 0.5).unwrap();
        assert_relative_eq!(v, (-75.0f64 / 7.0).exp(), max_relative = 1e-12);
        let mut prev = 1.0;
        for k in 1..20 {
            let tau = k as f64 * 0.1;
            let b = bernstein_tail(1.0, 1.0, 50, tau).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        let mut prev = 1.0;
        for count in [10, 100, 1000] {
            let b = bernstein_tail(1.0, 1.0, count, 0.3).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        assert!(bernstein_tail(-1.0, 1.0, 10, 0.1).is_err());
    }

    #[test]
    fn moment_ratio_of_constant_sample() {
        let samples = vec![7.0; 2000];
        let r = moment_psi1_ratio(&samples, 1).unwrap();
        assert_relative_eq!(r, 2.0f64.ln(), max_relative = 1e-4);
    }

    #[test]
    fn moment_ratio_of_exponential_p2() {
        let spec = EnsembleSpec::Exponential { dim: 1 };
        let m = sample_matrix(&spec, 1_000_000, 16).unwrap();
        let samples: Vec<f64> = m.data().iter().copied().collect();
        let r = moment_psi1_ratio(&samples, 2).unwrap();
        // (E Y^2)^{1/2} = 1 and psi_1 = sqrt 2, so the ratio is 1/(2 sqrt 2).
        assert!((r - 1.0 / (2.0 * std::f64::consts::SQRT_2)).abs() < 0.02);
    }

    #[test]
    fn moment_ratios_stay_below_one_with_slack() {
        let mut rng = seeding::rng(21);
        for spec in [
            EnsembleSpec::Gaussian { dim: 1 },
            EnsembleSpec::Exponential { dim: 1 },
        ] {
            let mut samples = Vec::with_capacity(200_000);
            for _ in 0..200_000 {
                samples.push(sample_vector(&spec, &mut rng).unwrap()[0]);
            }
            for p in 1..=8 {
                let r = moment_psi1_ratio(&samples, p).unwrap();
                assert!(r <= 1.1, "p = {p}: ratio {r}");
            }
        }
    }
}
