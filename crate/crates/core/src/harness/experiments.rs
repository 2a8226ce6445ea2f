//! Per-trial measurement for each named experiment.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::{CampaignContext, ExperimentId, GridPoint};
use crate::bounds;
use crate::chaining::{self, NetSpec};
use crate::ensembles::{sample_matrix, EnsembleSpec, SampleMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::processes;
use crate::restricted::{self, SearchMode};
use crate::spectral;

type Stats = BTreeMap<String, f64>;

fn stats(pairs: &[(&str, f64)]) -> Stats {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Runs one trial of the experiment at a resolved grid point and derived
/// seed, returning the measured statistics.
pub fn run_trial(
    id: ExperimentId,
    ensemble: &EnsembleSpec,
    point: &GridPoint,
    seed: u64,
    ctx: &CampaignContext,
) -> Result<Stats> {
    let count = point.count();
    match id {
        ExperimentId::CovarianceApproximation | ExperimentId::GaussianBaseline => {
            let eps = point.eps.unwrap_or(1.0);
            let sample = sample_matrix(ensemble, count, seed)?;
            let deviation = spectral::covariance_deviation(&sample);
            Ok(stats(&[
                ("deviation", deviation),
                ("epsilon", eps),
                ("event", f64::from(deviation > eps)),
            ]))
        }
        ExperimentId::TwoSidedBand => {
            let sample = sample_matrix(ensemble, count, seed)?;
            let summary = spectral::gram_spectrum(&sample);
            let width = bounds::band_width_base(point.n, count);
            let required = (summary.lambda_max_over_n_samples - 1.0)
                .abs()
                .max((summary.lambda_min_over_n_samples - 1.0).abs())
                / width;
            Ok(stats(&[
                ("lambda_min_over_N", summary.lambda_min_over_n_samples),
                ("lambda_max_over_N", summary.lambda_max_over_n_samples),
                ("band_constant_required", required),
            ]))
        }
        ExperimentId::MpDistance => {
            let sample = sample_matrix(ensemble, count, seed)?;
            let summary = spectral::gram_spectrum(&sample);
            let distance = spectral::esd_distance(&summary)?;
            Ok(stats(&[
                ("esd_distance", distance),
                ("beta", summary.beta),
                ("lambda_min_over_N", summary.lambda_min_over_n_samples),
                ("lambda_max_over_N", summary.lambda_max_over_n_samples),
            ]))
        }
        ExperimentId::RestrictedNormSweep => {
            let m = point.m.expect("validated");
            let sample = sample_matrix(ensemble, count, seed)?;
            let mode = if restricted::a_m(&sample, m, SearchMode::Exact).is_ok() {
                SearchMode::Exact
            } else {
                SearchMode::Heuristic
            };
            let result = restricted::a_m(&sample, m, mode)?;
            let base = bounds::norm_bound_base(point.n, count, m);
            Ok(stats(&[
                ("a_m", result.value),
                ("norm_base", base),
                ("required_C", result.value / base),
                ("exact", f64::from(mode == SearchMode::Exact)),
            ]))
        }
        ExperimentId::MaxColumnTail => {
            let k = point.t.unwrap_or(1.0);
            let sample = sample_matrix(ensemble, count, seed)?;
            let max_norm = (0..count)
                .map(|i| sample.column(i).norm())
                .fold(0.0f64, f64::max);
            let threshold = ctx.constants.leading * k * (point.n as f64).sqrt();
            Ok(stats(&[
                ("max_column_norm", max_norm),
                ("threshold", threshold),
                ("event", f64::from(max_norm >= threshold)),
                ("bound", (-k * (point.n as f64).sqrt()).exp()),
            ]))
        }
        ExperimentId::ExpLowerTail => {
            let t = point.t.unwrap_or(1.0);
            let sample = sample_matrix(ensemble, count, seed)?;
            let a_full = linalg::operator_norm(sample.data());
            let threshold = t * (point.n as f64).sqrt();
            Ok(stats(&[
                ("a_full", a_full),
                ("threshold", threshold),
                ("event", f64::from(a_full >= threshold)),
                (
                    "bound",
                    (-std::f64::consts::SQRT_2 * t * (point.n as f64).sqrt()).exp(),
                ),
            ]))
        }
        ExperimentId::HgGrowth => {
            let sample = sample_matrix(ensemble, count, seed)?;
            let cov = spectral::empirical_covariance(&sample);
            let eigenvalues = linalg::symmetric_eigenvalues_sorted(&cov);
            let lambda_max = eigenvalues[eigenvalues.len() - 1];
            let deviation = eigenvalues
                .iter()
                .fold(0.0f64, |acc, &v| acc.max((v - 1.0).abs()));
            let growth = (point.n as f64 / count as f64) * (count as f64).ln();
            Ok(stats(&[
                ("deviation", deviation),
                ("lambda_max", lambda_max),
                ("growth_term", growth),
            ]))
        }
        ExperimentId::PMomentProcess => {
            let p = point.p.expect("validated");
            let oracle = ctx
                .oracle
                .as_ref()
                .ok_or_else(|| Error::Config("p-moment-process needs a moment oracle".into()))?;
            let sample = sample_matrix(ensemble, count, seed)?;
            let result = processes::p_moment_deviation(&sample, p, oracle)?;
            let s = point.t.unwrap_or(1.0);
            let t = point.t.unwrap_or(1.0);
            let rhs = bounds::prop_rhs(point.n, count, p, s, t, &ctx.constants).unwrap_or(f64::NAN);
            let threshold = point
                .eps
                .and_then(|eps| {
                    bounds::sample_complexity(eps, t, p, &ctx.constants)
                        .ok()
                        .map(|sc| sc.threshold(point.n))
                })
                .unwrap_or(f64::NAN);
            Ok(stats(&[
                ("deviation_p", result.sup_value),
                ("prop_rhs", rhs),
                ("threshold_N", threshold),
                (
                    "exact",
                    f64::from(result.method == processes::ProcessMethod::ExactP2),
                ),
            ]))
        }
        ExperimentId::SubsetSum => {
            let sample = sample_matrix(ensemble, count, seed)?;
            let mode = if count <= restricted::SUBSET_ENUMERATION_LIMIT {
                SearchMode::Exact
            } else {
                SearchMode::Heuristic
            };
            let result = restricted::best_subset_sum(&sample, mode)?;
            Ok(stats(&[
                ("subset_value", result.value),
                ("subset_size", result.indices.len() as f64),
                ("subset_ratio", result.ratio),
                ("exact", f64::from(mode == SearchMode::Exact)),
            ]))
        }
        ExperimentId::ChainingTailSpotcheck => chaining_tail_trial(ensemble, point, seed, ctx),
    }
}

/// Monte Carlo spot-check of the bilinear chaining tail: enumerate every
/// support of size at most m, every net coefficient vector on it, and every
/// inner subset; compare the supremum against `psi alpha L A_m` with the
/// smallest admissible `L`.
fn chaining_tail_trial(
    ensemble: &EnsembleSpec,
    point: &GridPoint,
    seed: u64,
    ctx: &CampaignContext,
) -> Result<Stats> {
    let count = point.count();
    let m = point.m.expect("validated");
    let eps = point.eps.expect("validated");
    let alpha = 1.0;
    let sample = sample_matrix(ensemble, count, seed)?;

    // Smallest L the tail statement admits.
    let level =
        2.0 * m as f64 * (12.0 * std::f64::consts::E * count as f64 / (m as f64 * eps)).ln();
    let a_m_value = restricted::a_m(&sample, m, SearchMode::Exact)?.value;
    let threshold = ctx.constants.psi * alpha * level * a_m_value;

    // Shared nets per support size (deterministic across trials).
    let mut nets = Vec::with_capacity(m);
    for k in 1..=m {
        let spec = NetSpec::new(k, eps, alpha)?;
        nets.push(chaining::build_net(&spec, 0xAB ^ k as u64)?);
    }

    let mut sup = 0.0f64;
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for k in 1..=m {
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            supports.push(comb.clone());
            // Advance the combination lexicographically.
            let mut i = k;
            let mut advanced = false;
            while i > 0 {
                i -= 1;
                if comb[i] < count - (k - i) {
                    comb[i] += 1;
                    for j in i + 1..k {
                        comb[j] = comb[j - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    for support in &supports {
        let k = support.len();
        let net = &nets[k - 1];
        for z_local in &net.points {
            let mut z = DVector::<f64>::zeros(count);
            for (slot, &col) in support.iter().enumerate() {
                z[col] = z_local[slot];
            }
            // All subsets of the support.
            for mask in 0u32..(1u32 << k) {
                let subset: Vec<usize> = (0..k)
                    .filter(|&b| mask & (1 << b) != 0)
                    .map(|b| support[b])
                    .collect();
                let value = chaining_statistic_fast(&sample, &z, support, &subset);
                sup = sup.max(value);
            }
        }
    }
    Ok(stats(&[
        ("statistic_sup", sup),
        ("threshold", threshold),
        ("event", f64::from(sup > threshold)),
        ("level", level),
        ("bound", (-level / 2.0).exp()),
        ("a_m", a_m_value),
    ]))
}

/// Same value as `chaining::chaining_statistic` without the precondition
/// sweep, for the hot enumeration loop.
fn chaining_statistic_fast(
    sample: &SampleMatrix,
    z: &DVector<f64>,
    support: &[usize],
    subset: &[usize],
) -> f64 {
    let n = sample.dim();
    let mut rest = DVector::<f64>::zeros(n);
    for &j in support {
        if !subset.contains(&j) {
            rest += sample.column(j) * z[j];
        }
    }
    let mut total = 0.0;
    for &i in subset {
        total += (sample.column(i) * z[i]).dot(&rest).abs();
    }
    total
}
