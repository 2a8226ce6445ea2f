//! Shared dense linear algebra and optimization helpers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeding;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
/// Columns of the returned matrix are the matching eigenvectors.
pub fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, sorted ascending.
pub fn symmetric_eigenvalues_sorted(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

/// Signed eigenvalue of largest magnitude with its eigenvector, via a full
/// decomposition.
pub fn extreme_abs_eigenpair_dense(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (values, vectors) = symmetric_eigen_sorted(m);
    let n = values.len();
    if values[0].abs() >= values[n - 1].abs() {
        (values[0], vectors.column(0).into_owned())
    } else {
        (values[n - 1], vectors.column(n - 1).into_owned())
    }
}

/// Largest eigenvalue and eigenvector of a symmetric matrix by shifted power
/// iteration. The Gershgorin shift makes the iterated operator positive
/// semidefinite so the iteration converges to the top of the spectrum.
pub fn top_eigenpair_power(m: &DMatrix<f64>, rel_tol: f64) -> (f64, DVector<f64>) {
    let n = m.nrows();
    let shift = gershgorin_bound(m);
    // Deterministic start with energy in every coordinate.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.37 * ((i as f64) + 1.0).sin());
    v /= v.norm();
    let mut lambda = 0.0f64;
    let scale = shift.max(1e-300);
    for _ in 0..20_000 {
        let mut w = m * &v;
        w.axpy(shift, &v, 1.0);
        let norm = w.norm();
        if norm == 0.0 {
            // v is in the kernel of m + shift*I; eigenvalue -shift.
            return (-shift, v);
        }
        w /= norm;
        let new_lambda = w.dot(&(m * &w));
        let done = (new_lambda - lambda).abs() <= rel_tol * scale;
        v = w;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    (lambda, v)
}

/// Eigenvalue of largest magnitude via power iteration on the matrix and its
/// negation.
pub fn extreme_abs_eigenpair_power(m: &DMatrix<f64>, rel_tol: f64) -> (f64, DVector<f64>) {
    let (top, v_top) = top_eigenpair_power(m, rel_tol);
    let (bottom_neg, v_bottom) = top_eigenpair_power(&(-m), rel_tol);
    let bottom = -bottom_neg;
    if top.abs() >= bottom.abs() {
        (top, v_top)
    } else {
        (bottom, v_bottom)
    }
}

fn gershgorin_bound(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut bound = 0.0f64;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)].abs();
        }
        bound = bound.max(row);
    }
    bound
}

/// Top singular value of a rectangular matrix together with the right singular
/// vector, computed on the smaller Gram side.
pub fn top_singular(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return (0.0, DVector::zeros(cols));
    }
    if cols <= rows {
        let gram = a.transpose() * a;
        let (values, vectors) = symmetric_eigen_sorted(&gram);
        let v = vectors.column(cols - 1).into_owned();
        (values[cols - 1].max(0.0).sqrt(), v)
    } else {
        let gram = a * a.transpose();
        let (values, vectors) = symmetric_eigen_sorted(&gram);
        let sigma = values[rows - 1].max(0.0).sqrt();
        let u = vectors.column(rows - 1);
        if sigma > 0.0 {
            let mut v = a.transpose() * u;
            let norm = v.norm();
            if norm > 0.0 {
                v /= norm;
            }
            (sigma, v)
        } else {
            (0.0, DVector::zeros(cols))
        }
    }
}

/// Top singular value only.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    top_singular(a).0
}

/// Inverse symmetric square root with an eigenvalue floor. Errors out if any
/// eigenvalue falls below the floor, which flags degenerate covariance.
pub fn inverse_sqrt_spd(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = symmetric_eigen_sorted(m);
    if values[0] < floor {
        return Err(Error::CovarianceNotInvertible {
            min_eigenvalue: values[0],
        });
    }
    let inv_sqrt = DMatrix::from_diagonal(&values.map(|v| 1.0 / v.sqrt()));
    Ok(&vectors * inv_sqrt * vectors.transpose())
}

/// Outcome of a sphere ascent run.
pub struct SphereAscent {
    pub value: f64,
    pub argmax: DVector<f64>,
}

/// Maximizes `objective` over the unit sphere by projected gradient ascent
/// with step halving and multistart. `gradient` returns the ambient gradient;
/// its radial component is projected away before stepping.
pub fn sphere_ascent<F, G>(
    dim: usize,
    objective: F,
    gradient: G,
    restarts: usize,
    seed: u64,
    grad_tol: f64,
    max_iters: usize,
) -> SphereAscent
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut best = SphereAscent {
        value: f64::NEG_INFINITY,
        argmax: DVector::zeros(dim),
    };
    for r in 0..restarts {
        let mut rng = seeding::stream(seed, r as u64);
        let mut y = random_unit_vector(dim, &mut rng);
        if r == 0 {
            // One canonical start so the search is never worse than e_1.
            y = DVector::zeros(dim);
            y[0] = 1.0;
        }
        let mut value = objective(&y);
        let mut step = 0.5;
        for _ in 0..max_iters {
            let g = gradient(&y);
            let tangent = &g - &y * g.dot(&y);
            let gnorm = tangent.norm();
            if gnorm <= grad_tol {
                break;
            }
            let mut advanced = false;
            while step > 1e-14 {
                let mut candidate = &y + &tangent * (step / gnorm.max(1e-300));
                let norm = candidate.norm();
                if norm > 0.0 {
                    candidate /= norm;
                }
                let cand_value = objective(&candidate);
                if cand_value > value {
                    y = candidate;
                    value = cand_value;
                    step *= 1.5;
                    advanced = true;
                    break;
                }
                step *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        if value > best.value {
            best = SphereAscent { value, argmax: y };
        }
    }
    best
}

/// Uniform random point on the unit sphere.
pub fn random_unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| {
            let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            g
        });
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Uniform draw from the open interval (0, 1), safe to pass through logs.
pub fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    // Seed the recursion from uniform panels so localized integrands are not
    // missed by the first three probe points.
    let panels = 16;
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let hi = lo + width;
        let flo = f(lo);
        let fhi = f(hi);
        let (whole, m, fm) = simpson(f, lo, flo, hi, fhi);
        total += recurse(f, lo, flo, hi, fhi, whole, m, fm, panel_tol, 44);
    }
    total
}
