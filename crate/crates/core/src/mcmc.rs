//! Uniform sampling from convex polytopes by hit-and-run, plus the affine
//! isotropization used to put a body into isotropic position.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleSpec, SampleMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seeding;

/// Relative margin keeping chain states away from the boundary.
const BOUNDARY_MARGIN: f64 = 1e-12;

/// Eigenvalue floor below which an estimated covariance is treated as
/// degenerate.
const EIGENVALUE_FLOOR: f64 = 1e-10;

/// A bounded convex polytope `{x : Ax <= b}` with a known strictly interior
/// point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub interior_point: Vec<f64>,
}

impl Polytope {
    /// Validates strict interiority of the reference point and a bounded-body
    /// heuristic (finite chords along every coordinate direction).
    pub fn validate(&self) -> Result<()> {
        let n = self.interior_point.len();
        if self.a.len() != self.b.len() {
            return Err(Error::Config(format!(
                "constraint count mismatch: {} rows vs {} bounds",
                self.a.len(),
                self.b.len()
            )));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "constraint row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        let x = DVector::from_column_slice(&self.interior_point);
        let (a, b) = self.as_matrices();
        let slack = &b - &a * &x;
        if slack.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config(
                "interior_point is not strictly inside the polytope".into(),
            ));
        }
        for i in 0..n {
            let mut d = DVector::zeros(n);
            d[i] = 1.0;
            chord(&a, &b, &x, &d)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.interior_point.len()
    }

    pub fn as_matrices(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.a.len();
        let n = self.dim();
        let a = DMatrix::from_fn(m, n, |i, j| self.a[i][j]);
        let b = DVector::from_column_slice(&self.b);
        (a, b)
    }

    /// Membership check `Ax <= b` with a tiny slack for roundoff.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        let (a, b) = self.as_matrices();
        let lhs = &a * x;
        lhs.iter().zip(b.iter()).all(|(l, r)| *l <= r + 1e-9)
    }

    /// Axis-aligned box `[lo, hi]^n` helper.
    pub fn axis_box(lo: f64, hi: f64, n: usize) -> Polytope {
        let mut a = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            a.push(row.clone());
            b.push(hi);
            row[i] = -1.0;
            a.push(row);
            b.push(-lo);
        }
        Polytope {
            a,
            b,
            interior_point: vec![0.5 * (lo + hi); n],
        }
    }

    /// The simplex `{x >= 0, sum x <= 1}`.
    pub fn simplex(n: usize) -> Polytope {
        let mut a = Vec::with_capacity(n + 1);
        let mut b = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = -1.0;
            a.push(row);
            b.push(0.0);
        }
        a.push(vec![1.0; n]);
        b.push(1.0);
        Polytope {
            a,
            b,
            interior_point: vec![1.0 / (2.0 * n as f64); n],
        }
    }
}

/// Chord `{t : x + t d in K}` as `(t_min, t_max)`. Errors if the polytope is
/// unbounded along the sampled direction.
fn chord(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<(f64, f64)> {
    let slack = b - a * x;
    let rate = a * d;
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for i in 0..slack.len() {
        let r = rate[i];
        if r.abs() < 1e-300 {
            continue;
        }
        let t = slack[i] / r;
        if r > 0.0 {
            t_max = t_max.min(t);
        } else {
            t_min = t_min.max(t);
        }
    }
    if !t_min.is_finite() || !t_max.is_finite() {
        return Err(Error::UnboundedDirection);
    }
    Ok((t_min, t_max))
}

/// One hit-and-run transition: uniform direction, uniform point on the chord,
/// clamped strictly inside by a relative margin.
pub fn hit_and_run_step(
    poly: &Polytope,
    x: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let (a, b) = poly.as_matrices();
    hit_and_run_step_with(&a, &b, x, rng)
}

fn hit_and_run_step_with(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let d = linalg::random_unit_vector(x.len(), rng);
    let (t_min, t_max) = chord(a, b, x, &d)?;
    let span = t_max - t_min;
    let u = linalg::open_unit(rng);
    let t = (t_min + u * span)
        .max(t_min + BOUNDARY_MARGIN * span)
        .min(t_max - BOUNDARY_MARGIN * span);
    Ok(x + d * t)
}

/// `N` near-independent uniform draws: per-batch chains with their own
/// sub-streams, each discarding `burn_in` steps and recording every `thin`-th
/// state afterwards.
pub fn sample_polytope(
    poly: &Polytope,
    count: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if thin < 1 {
        return Err(Error::Precondition("thin must be >= 1".into()));
    }
    if count == 0 {
        return Err(Error::Precondition("count must be >= 1".into()));
    }
    poly.validate()?;
    let n = poly.dim();
    let (a, b) = poly.as_matrices();
    let start = DVector::from_column_slice(&poly.interior_point);

    // Chain layout depends only on the request, never on thread count.
    let chains = count.clamp(1, 8);
    let per_chain = count.div_ceil(chains);
    let columns: Vec<Vec<DVector<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<Vec<DVector<f64>>> {
            let mut rng = seeding::stream(seed, c as u64);
            let mut x = start.clone();
            for _ in 0..burn_in {
                x = hit_and_run_step_with(&a, &b, &x, &mut rng)?;
            }
            let want = per_chain.min(count - (c * per_chain).min(count));
            let mut out = Vec::with_capacity(want);
            while out.len() < want {
                for _ in 0..thin {
                    x = hit_and_run_step_with(&a, &b, &x, &mut rng)?;
                }
                out.push(x.clone());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = DMatrix::zeros(n, count);
    let mut col = 0;
    for chain in columns {
        for x in chain {
            if col < count {
                data.set_column(col, &x);
                col += 1;
            }
        }
    }
    Ok(data)
}

/// Default burn-in for a chain on an `n`-dimensional body.
pub fn default_burn_in(n: usize) -> usize {
    1000 * n
}

/// Default thinning stride for an `n`-dimensional body.
pub fn default_thin(n: usize) -> usize {
    n * n
}

/// An affine isotropizing change of variables `x -> map * (x - shift)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropizationResult {
    pub shift: Vec<f64>,
    pub map: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub condition_number: f64,
    /// Residual after each iteration, for convergence diagnostics.
    pub residual_history: Vec<f64>,
}

impl IsotropizationResult {
    pub fn identity(n: usize) -> Self {
        let mut map = vec![vec![0.0; n]; n];
        for (i, row) in map.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        IsotropizationResult {
            shift: vec![0.0; n],
            map,
            residual: 0.0,
            iterations: 0,
            condition_number: 1.0,
            residual_history: Vec::new(),
        }
    }

    pub fn map_matrix(&self) -> DMatrix<f64> {
        let n = self.shift.len();
        DMatrix::from_fn(n, n, |i, j| self.map[i][j])
    }

    pub fn shift_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.shift)
    }

    /// Applies the transform to one point.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.map_matrix() * (x - self.shift_vector())
    }

    /// Applies the transform to every column of a sample.
    pub fn apply_columns(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let map = self.map_matrix();
        let shift = self.shift_vector();
        let mut out = map * data;
        let offset = &self.map_matrix() * shift;
        for mut col in out.column_iter_mut() {
            col -= &offset;
        }
        out
    }
}

/// Per-iteration estimation sample size: the baseline `100 n` scaled up so
/// the covariance estimator noise (about `2 sqrt(n/M)`) sits well below the
/// requested tolerance, otherwise the stopping test could never certify it.
pub fn isotropize_sample_size(n: usize, tol: f64) -> usize {
    let base = 100 * n;
    let needed = (16.0 * n as f64 / (tol * tol)).ceil() as usize;
    base.max(needed)
}

/// Iteratively estimates a whitening affine map: sample a batch of points,
/// fit mean and covariance, compose with the inverse square root, and stop
/// once the covariance residual drops below `tol`.
pub fn isotropize(
    poly: &Polytope,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<IsotropizationResult> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!("tol must lie in (0, 1), got {tol}")));
    }
    poly.validate()?;
    let n = poly.dim();
    let sample_size = isotropize_sample_size(n, tol);
    let burn_in = default_burn_in(n);
    let thin = default_thin(n);

    // Composed transform x -> l * x + c.
    let mut linear = DMatrix::<f64>::identity(n, n);
    let mut offset = DVector::<f64>::zeros(n);
    let mut best_residual = f64::INFINITY;
    let mut residual_history = Vec::new();

    for iter in 0..max_iter {
        let raw = sample_polytope(
            poly,
            sample_size,
            burn_in,
            thin,
            seeding::derive_seed(seed, &[iter as u64]),
        )?;
        let mut transformed = &linear * &raw;
        for mut col in transformed.column_iter_mut() {
            col += &offset;
        }
        let mean = transformed.column_mean();
        let mut centered = transformed;
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let cov = (&centered * centered.transpose()) / sample_size as f64;
        let residual = {
            let mut dev = cov.clone();
            for i in 0..n {
                dev[(i, i)] -= 1.0;
            }
            linalg::symmetric_eigenvalues_sorted(&dev)
                .iter()
                .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        };
        best_residual = best_residual.min(residual);
        residual_history.push(residual);
        if residual <= tol {
            let (shift, condition_number) = finish_transform(&linear, &offset)?;
            return Ok(IsotropizationResult {
                shift,
                map: matrix_rows(&linear),
                residual,
                iterations: iter + 1,
                condition_number,
                residual_history,
            });
        }
        let whitener = linalg::inverse_sqrt_spd(&cov, EIGENVALUE_FLOOR)?;
        offset = &whitener * (&offset - &mean);
        linear = whitener * linear;
    }
    Err(Error::IsotropizationFailed {
        tol,
        iterations: max_iter,
        best_residual,
    })
}

/// Converts the composed `(l, c)` pair to the `(shift, map)` form, reporting
/// the condition number of the map.
fn finish_transform(linear: &DMatrix<f64>, offset: &DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let svd = linear.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v));
    if smin <= 0.0 || !smin.is_finite() {
        return Err(Error::CovarianceNotInvertible {
            min_eigenvalue: smin,
        });
    }
    let inv = linear
        .clone()
        .lu()
        .solve(&(-offset))
        .ok_or(Error::CovarianceNotInvertible {
            min_eigenvalue: 0.0,
        })?;
    Ok((inv.as_slice().to_vec(), smax / smin))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds a fully resolved polytope ensemble spec: isotropizes the body and
/// attaches the resulting affine map so downstream sampling is isotropic.
pub fn resolve_polytope_spec(
    poly: Polytope,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EnsembleSpec> {
    let iso = isotropize(&poly, tol, max_iter, seed)?;
    let dim = poly.dim();
    Ok(EnsembleSpec::Polytope {
        dim,
        polytope: poly,
        isotropization: Some(iso),
        burn_in: None,
        thin: None,
    })
}

/// Convenience wrapper returning samples as a [`SampleMatrix`] for an
/// (optionally isotropized) polytope spec.
pub fn sample_polytope_matrix(
    spec: &EnsembleSpec,
    count: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    match spec {
        EnsembleSpec::Polytope {
            polytope,
            isotropization,
            burn_in,
            thin,
            ..
        } => {
            let n = polytope.dim();
            let burn = burn_in.unwrap_or_else(|| default_burn_in(n));
            let stride = thin.unwrap_or_else(|| default_thin(n));
            let raw = sample_polytope(polytope, count, burn, stride, seed)?;
            let data = match isotropization {
                Some(iso) => iso.apply_columns(&raw),
                None => {
                    return Err(Error::SamplerNotInitialized(
                        "polytope spec carries no isotropization map".into(),
                    ))
                }
            };
            Ok(SampleMatrix::from_parts(spec.clone(), seed, data))
        }
        _ => Err(Error::Precondition(
            "spec is not a polytope ensemble".into(),
        )),
    }
}
