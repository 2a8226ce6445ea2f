//! Closed-form bound evaluators and the calibration routine fitting the
//! smallest leading constant that covers observed data.
//!
//! Every evaluator takes its absolute constants explicitly: the theory leaves
//! them unspecified, so calibration against experiment records is the only
//! empirical handle on them. Logarithms are natural throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The knobs of the bound family: leading and exponent constants, confidence
/// parameters, and the psi_1 proxy (2 for symmetric laws).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    #[serde(rename = "C")]
    pub leading: f64,
    #[serde(rename = "c")]
    pub exponent: f64,
    #[serde(rename = "K")]
    pub confidence: f64,
    pub t: f64,
    pub s: f64,
    pub psi: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            leading: 1.0,
            exponent: 1.0,
            confidence: 1.0,
            t: 1.0,
            s: 1.0,
            psi: 2.0,
        }
    }
}

impl BoundConstants {
    pub fn with_leading(leading: f64) -> Self {
        BoundConstants {
            leading,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.leading < 0.0 || self.exponent < 0.0 || self.psi < 0.0 {
            return Err(Error::Domain("constants must be nonnegative".into()));
        }
        if self.confidence < 1.0 || self.t < 1.0 || self.s < 1.0 {
            return Err(Error::Domain(
                "confidence parameters K, t, s must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// `C K (sqrt n + sqrt m log(2N/m))`, the restricted-norm benchmark.
pub fn norm_bound(n: usize, count: usize, m: usize, consts: &BoundConstants) -> f64 {
    consts.leading * consts.confidence * norm_bound_base(n, count, m)
}

/// The restricted-norm benchmark at unit constants.
pub fn norm_bound_base(n: usize, count: usize, m: usize) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    nf.sqrt() + mf.sqrt() * (2.0 * count as f64 / mf).ln()
}

/// Refined variant replacing `log(2N/m)` by `log(2N/max{n, m})`.
pub fn norm_bound_refined(n: usize, count: usize, m: usize, consts: &BoundConstants) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    let denom = n.max(m) as f64;
    consts.leading * consts.confidence * (nf.sqrt() + mf.sqrt() * (2.0 * count as f64 / denom).ln())
}

/// Two-sided band `1 -/+ C sqrt(n/N) log(2N/n)` for the empirical second
/// moment over the sphere.
pub fn two_sided_band(n: usize, count: usize, consts: &BoundConstants) -> Result<(f64, f64)> {
    if n > count {
        return Err(Error::Domain(format!(
            "band requires n <= N, got n = {n}, N = {count}"
        )));
    }
    let width = consts.leading * band_width_base(n, count);
    Ok((1.0 - width, 1.0 + width))
}

/// Band half-width at unit leading constant.
pub fn band_width_base(n: usize, count: usize) -> f64 {
    let nf = n as f64;
    let cf = count as f64;
    (nf / cf).sqrt() * (2.0 * cf / nf).ln()
}

/// Sample-size threshold `N >= coefficient * n^dim_exponent` guaranteeing the
/// p-th moment process stays below eps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub coefficient: f64,
    pub dim_exponent: f64,
}

impl SampleComplexity {
    pub fn threshold(&self, n: usize) -> f64 {
        self.coefficient * (n as f64).powf(self.dim_exponent)
    }
}

/// Per-regime sample-complexity coefficient:
/// `C t^4 eps^-2 log^2(2 t^2 eps^-2)` at p = 2 (dimension factor n),
/// `C_p t^(2p) eps^-2 log^(2p-2)(2 t^2 eps^-2)` for p > 2 (factor n^(p/2)),
/// `C t^(2p) eps^-2 log^(2p-2)(2 t^(2p) eps^-2)` for p in [1, 2) (factor n).
pub fn sample_complexity(
    eps: f64,
    t: f64,
    p: f64,
    consts: &BoundConstants,
) -> Result<SampleComplexity> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if t < 1.0 {
        return Err(Error::Domain(format!("t must be >= 1, got {t}")));
    }
    if p < 1.0 {
        return Err(Error::Domain(format!("p must be >= 1, got {p}")));
    }
    let inv_eps_sq = eps.powi(-2);
    let coefficient = if p >= 2.0 {
        let log_arg = 2.0 * t * t * inv_eps_sq;
        consts.leading * t.powf(2.0 * p) * inv_eps_sq * log_arg.ln().powf(2.0 * p - 2.0)
    } else {
        let log_arg = 2.0 * t.powf(2.0 * p) * inv_eps_sq;
        consts.leading * t.powf(2.0 * p) * inv_eps_sq * log_arg.ln().powf(2.0 * p - 2.0)
    };
    Ok(SampleComplexity {
        coefficient,
        dim_exponent: (p / 2.0).max(1.0),
    })
}

/// Three-term deviation bound for the p-th moment process:
/// `C^{p-1} t s^{p-1} p log^{p-1}(2N/n) sqrt(n/N) + C^p s^p n^{p/2} / N +
///  C^p p^p (n / 2N)^s`.
pub fn prop_rhs(
    n: usize,
    count: usize,
    p: f64,
    s: f64,
    t: f64,
    consts: &BoundConstants,
) -> Result<f64> {
    let nf = n as f64;
    let cf = count as f64;
    if n > count {
        return Err(Error::Domain(format!(
            "requires n <= N, got n = {n}, N = {count}"
        )));
    }
    if cf > nf.sqrt().exp() {
        return Err(Error::Domain(format!(
            "requires N <= exp(sqrt n), got N = {count} with n = {n}"
        )));
    }
    if s < 1.0 || t < 1.0 {
        return Err(Error::Domain("s and t must be >= 1".into()));
    }
    let c = consts.leading;
    let log_term = (2.0 * cf / nf).ln();
    let first =
        c.powf(p - 1.0) * t * s.powf(p - 1.0) * p * log_term.powf(p - 1.0) * (nf / cf).sqrt();
    let second = c.powf(p) * s.powf(p) * nf.powf(p / 2.0) / cf;
    let third = c.powf(p) * p.powf(p) * (nf / (2.0 * cf)).powf(s);
    Ok(first + second + third)
}

/// Deterministic part of the level-l restricted-norm bound:
/// `C psi K ((m/2^l) log(48 e N 2^l / m) + sqrt m log(2N/m))`.
pub fn techn_bound(m: usize, count: usize, l: usize, consts: &BoundConstants) -> Result<f64> {
    let max_l = (m as f64).log2().floor() as usize;
    if l > max_l {
        return Err(Error::Domain(format!(
            "level l = {l} out of range [0, log2 m = {max_l}]"
        )));
    }
    let mf = m as f64;
    let cf = count as f64;
    let scale = 2.0f64.powi(l as i32);
    let head = (mf / scale) * (48.0 * std::f64::consts::E * cf * scale / mf).ln();
    let tail = mf.sqrt() * (2.0 * cf / mf).ln();
    Ok(consts.leading * consts.psi * consts.confidence * (head + tail))
}

/// The largest admissible level `l` with
/// `(2m/2^l) log(12 e N 2^l / m) >= sqrt m log(2N/m)`, giving the collapsed
/// single-term form of the bound.
pub fn techn_select_level(m: usize, count: usize) -> usize {
    let mf = m as f64;
    let cf = count as f64;
    let target = mf.sqrt() * (2.0 * cf / mf).ln();
    let max_l = mf.log2().floor() as usize;
    let mut best = 0;
    for l in 0..=max_l {
        let scale = 2.0f64.powi(l as i32);
        let lhs = (2.0 * mf / scale) * (12.0 * std::f64::consts::E * cf * scale / mf).ln();
        if lhs >= target {
            best = l;
        }
    }
    best
}

/// Norm bound from l2 into lp: `C_p (N^{1/p} + sqrt n)` for p >= 2 and
/// `C (N^{1/p} + N^{1/p - 1/2} sqrt n)` for p in [1, 2).
pub fn ellp_bound(n: usize, count: usize, p: f64, consts: &BoundConstants) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::Domain(format!("p must be >= 1, got {p}")));
    }
    let nf = n as f64;
    let cf = count as f64;
    let n_pow = if p.is_infinite() {
        1.0
    } else {
        cf.powf(1.0 / p)
    };
    if p >= 2.0 {
        Ok(consts.leading * (n_pow + nf.sqrt()))
    } else {
        Ok(consts.leading * (n_pow + cf.powf(1.0 / p - 0.5) * nf.sqrt()))
    }
}

/// One observed statistic paired with its bound value at unit leading
/// constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundObservation {
    pub observed: f64,
    pub base: f64,
}

/// The smallest leading constant covering all observations, with the range it
/// was fitted over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub constant: f64,
    pub observations: usize,
    pub worst_index: usize,
}

/// Fits the smallest `C` such that `observed <= C * base` for every record.
pub fn calibrate(observations: &[BoundObservation]) -> Result<Calibration> {
    if observations.len() < 10 {
        return Err(Error::Precondition(format!(
            "calibration needs at least 10 observations, got {}",
            observations.len()
        )));
    }
    let mut constant = 0.0f64;
    let mut worst = 0usize;
    for (i, obs) in observations.iter().enumerate() {
        if obs.base <= 0.0 {
            return Err(Error::Domain(format!(
                "observation {i} has nonpositive base bound {}",
                obs.base
            )));
        }
        let required = obs.observed / obs.base;
        if required > constant {
            constant = required;
            worst = i;
        }
    }
    Ok(Calibration {
        constant,
        observations: observations.len(),
        worst_index: worst,
    })
}
