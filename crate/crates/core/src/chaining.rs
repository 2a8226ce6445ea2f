//! Constructive chaining machinery: covering nets of truncated balls, the
//! dyadic support decomposition of a sparse sphere vector, the bilinear
//! chaining statistic, and the net-to-sphere transfer constants.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg::open_unit;
use crate::seeding;

/// Guard on `(3/eps)^m`, the covering-number budget of a single net.
pub const NET_SIZE_CAP: f64 = 1e7;

/// Cloud points per admissible net point when seeding the greedy build.
const CLOUD_FACTOR: f64 = 100.0;

/// Parameters of a covering net of `B_2^m` intersected with `alpha B_inf^m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Dimension `m` of the covered body.
    pub dim: usize,
    /// Covering radius target in the Euclidean metric.
    pub eps: f64,
    /// Sup-norm cap of the body.
    pub alpha: f64,
}

impl NetSpec {
    pub fn new(dim: usize, eps: f64, alpha: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain(format!("eps must lie in (0, 1], got {eps}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(NetSpec { dim, eps, alpha })
    }

    /// `(3/eps)^m`, the covering-number budget.
    pub fn cardinality_cap(&self) -> f64 {
        (3.0 / self.eps).powi(self.dim as i32)
    }
}

/// A finite covering of `B_2^m ∩ alpha B_inf^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub spec: NetSpec,
    pub points: Vec<DVector<f64>>,
}

impl Net {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the nearest net point, with its index.
    pub fn nearest(&self, x: &DVector<f64>) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (x - p).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Writes one point per line, comma-separated coordinates.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for p in &self.points {
            let line: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Uniform-ish point of the truncated ball by rejection from the sup-norm box.
fn body_point(spec: &NetSpec, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let side = spec.alpha.min(1.0);
    loop {
        let x = DVector::from_fn(spec.dim, |_, _| (2.0 * open_unit(rng) - 1.0) * side);
        if x.norm() <= 1.0 {
            return x;
        }
    }
}

/// Builds a covering net by greedy farthest-point insertion over a dense
/// random cloud, then repairs any residual gaps found by fresh probes. Every
/// inserted point sits farther than `eps` from the rest of the net, which
/// keeps the cardinality below `(3/eps)^m` by the standard packing argument.
pub fn build_net(spec: &NetSpec, seed: u64) -> Result<Net> {
    let cap = spec.cardinality_cap();
    if cap > NET_SIZE_CAP {
        return Err(Error::NetBudget {
            estimate: cap,
            cap: NET_SIZE_CAP,
        });
    }
    if spec.dim == 0 {
        return Ok(Net {
            spec: *spec,
            points: vec![DVector::zeros(0)],
        });
    }
    let mut rng = seeding::stream(seed, 0);
    let cloud_size = ((CLOUD_FACTOR * cap) as usize).clamp(1000, NET_SIZE_CAP as usize);
    let cloud: Vec<DVector<f64>> = (0..cloud_size)
        .map(|_| body_point(spec, &mut rng))
        .collect();

    // The origin always belongs to the body.
    let mut points = vec![DVector::zeros(spec.dim)];
    let mut dist: Vec<f64> = cloud.iter().map(|x| x.norm()).collect();
    loop {
        let (idx, &far) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("cloud nonempty");
        if far <= spec.eps {
            break;
        }
        let new_point = cloud[idx].clone();
        for (d, x) in dist.iter_mut().zip(cloud.iter()) {
            *d = d.min((x - &new_point).norm());
        }
        points.push(new_point);
    }

    // Repair pass: any fresh probe farther than eps keeps the pairwise
    // separation invariant when inserted.
    let mut probe_rng = seeding::stream(seed, 1);
    let probes = (20 * cloud_size).min(200_000);
    for _ in 0..probes {
        let x = body_point(spec, &mut probe_rng);
        let far = points
            .iter()
            .map(|p| (&x - p).norm())
            .fold(f64::INFINITY, f64::min);
        if far > spec.eps {
            points.push(x);
        }
    }

    if points.len() as f64 > cap {
        return Err(Error::NetBudget {
            estimate: points.len() as f64,
            cap,
        });
    }
    Ok(Net {
        spec: *spec,
        points,
    })
}

/// Checks the covering property probabilistically: `probes` fresh body points
/// must all sit within `eps` of the net. Returns the largest observed
/// distance.
pub fn verify_covering(net: &Net, probes: usize, seed: u64) -> f64 {
    if net.spec.dim == 0 {
        return 0.0;
    }
    let mut rng = seeding::stream(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = body_point(&net.spec, &mut rng);
        worst = worst.max(net.nearest(&x).1);
    }
    worst
}

/// Dyadic split of a sparse sphere vector's support by coordinate magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicDecomposition {
    /// Number of dyadic levels beyond the head block.
    pub level_count: usize,
    /// Index sets `E_0, ..., E_l` (disjoint, may be empty).
    pub levels: Vec<Vec<usize>>,
    /// Cardinalities `a_k = |E_k|`.
    pub cardinalities: Vec<usize>,
    /// Sup-norm caps per level: 1 for the head block, `sqrt(2^k / m)` after.
    pub infinity_caps: Vec<f64>,
    /// Whether the single-level condition held (then `level_count = 0`).
    pub single_level: bool,
    /// Support budget the split was computed for.
    pub m: usize,
}

/// Left side of the level-count condition at level `l`.
pub fn level_condition_lhs(m: usize, count: usize, l: usize) -> f64 {
    let mf = m as f64;
    let scale = 2.0f64.powi(l as i32);
    (mf / scale) * (48.0 * std::f64::consts::E * scale * count as f64 / mf).ln()
}

/// Smallest `l >= 0` with `(m/2^l) log(48 e 2^l N / m) <= sqrt(n)`.
pub fn smallest_level(m: usize, count: usize, ambient_dim: usize) -> usize {
    let target = (ambient_dim as f64).sqrt();
    let mut l = 0usize;
    while level_condition_lhs(m, count, l) > target {
        l += 1;
        if l > 128 {
            break;
        }
    }
    l
}

/// Splits the support of a unit vector `z` (at most `m` nonzero coordinates
/// out of `N = z.len()`) into magnitude-ordered dyadic blocks. With the
/// single-level condition satisfied the whole support is one block; otherwise
/// block `k` holds the coordinates ranked in `(m/2^k, m/2^(k-1)]` and the head
/// block the top `m/2^l` (possibly empty).
pub fn dyadic_decompose(
    z: &DVector<f64>,
    m: usize,
    ambient_dim: usize,
) -> Result<DyadicDecomposition> {
    let count = z.len();
    if (z.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition("z must be a unit vector".into()));
    }
    let support: Vec<usize> = (0..count).filter(|&i| z[i] != 0.0).collect();
    if support.len() > m || m > count {
        return Err(Error::Precondition(format!(
            "need |supp z| <= m <= N, got {} / {m} / {count}",
            support.len()
        )));
    }

    let mut ranked = support.clone();
    ranked.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));

    let l = smallest_level(m, count, ambient_dim);
    if l == 0 {
        return Ok(DyadicDecomposition {
            level_count: 0,
            levels: vec![ranked.clone()],
            cardinalities: vec![ranked.len()],
            infinity_caps: vec![1.0],
            single_level: true,
            m,
        });
    }

    // Rank boundaries b_k = floor(m / 2^k); level k covers ranks
    // (b_k, b_{k-1}], the head block covers ranks [1, b_l].
    let boundary = |k: usize| m / 2usize.pow(k as u32);
    let take = |lo: usize, hi: usize| -> Vec<usize> {
        ranked
            .iter()
            .copied()
            .skip(lo)
            .take(hi.saturating_sub(lo))
            .collect()
    };
    let mut levels = Vec::with_capacity(l + 1);
    levels.push(take(0, boundary(l)));
    for k in 1..=l {
        levels.push(take(boundary(k), boundary(k - 1)));
    }
    let cardinalities: Vec<usize> = levels.iter().map(|e| e.len()).collect();
    let mut infinity_caps = vec![1.0];
    for k in 1..=l {
        infinity_caps.push((2.0f64.powi(k as i32) / m as f64).sqrt().min(1.0));
    }
    Ok(DyadicDecomposition {
        level_count: l,
        levels,
        cardinalities,
        infinity_caps,
        single_level: false,
        m,
    })
}

impl DyadicDecomposition {
    /// The net parameters the chaining construction assigns to level `k`:
    /// `(1/4, 1)` for the head block, `(2^-k, sqrt(2^k/m))` afterwards.
    pub fn level_net_spec(&self, k: usize) -> Result<NetSpec> {
        if k >= self.levels.len() {
            return Err(Error::Config(format!(
                "level {k} out of range ({} levels)",
                self.levels.len()
            )));
        }
        if k == 0 {
            NetSpec::new(self.cardinalities[0], 0.25, 1.0)
        } else {
            NetSpec::new(
                self.cardinalities[k],
                2.0f64.powi(-(k as i32)),
                self.infinity_caps[k],
            )
        }
    }
}

/// Squared distance between `z` and its per-level nearest-net-point
/// concatenation. With nets built at the construction parameters this stays
/// below 0.4.
pub fn net_approximation_error(
    z: &DVector<f64>,
    decomposition: &DyadicDecomposition,
    nets: &[Net],
) -> Result<f64> {
    if nets.len() != decomposition.levels.len() {
        return Err(Error::Config(format!(
            "got {} nets for {} levels",
            nets.len(),
            decomposition.levels.len()
        )));
    }
    let mut error = 0.0;
    for (k, level) in decomposition.levels.iter().enumerate() {
        let net = &nets[k];
        if net.spec.dim != level.len() {
            return Err(Error::Config(format!(
                "net at level {k} covers dimension {}, level has {} coordinates",
                net.spec.dim,
                level.len()
            )));
        }
        if level.is_empty() {
            continue;
        }
        let local = DVector::from_iterator(level.len(), level.iter().map(|&i| z[i]));
        let (_, dist) = net.nearest(&local);
        error += dist * dist;
    }
    if error >= 0.4 {
        return Err(Error::Domain(format!(
            "net approximation error {error} reached the 0.4 budget; nets too coarse"
        )));
    }
    Ok(error)
}

/// The bilinear chaining statistic
/// `sum_{i in E} |<z_i X_i, sum_{j in F\E} z_j X_j>|`.
pub fn chaining_statistic(
    sample: &SampleMatrix,
    z: &DVector<f64>,
    support: &[usize],
    subset: &[usize],
) -> Result<f64> {
    let count = sample.len();
    if z.len() != count {
        return Err(Error::Precondition(
            "coefficient vector length must match the column count".into(),
        ));
    }
    if support.iter().any(|&i| i >= count) {
        return Err(Error::Precondition("support index out of range".into()));
    }
    if subset.iter().any(|&i| !support.contains(&i)) {
        return Err(Error::Precondition("E must be a subset of F".into()));
    }
    for i in 0..count {
        if z[i] != 0.0 && !support.contains(&i) {
            return Err(Error::Precondition(
                "coefficients must be supported on F".into(),
            ));
        }
    }
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
    Ok(total)
}

/// Transfer constants for moving a two-sided bound from a `c * eps`-net of the
/// sphere to the whole sphere. Returns `c' * eps`, where
/// `c' = 2 c1 (1 + c1)` and `c1` is the larger of the two one-sided factors.
pub fn net_to_sphere_transfer(sup_on_net: f64, eps: f64, c: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!(
            "net fineness constant must lie in (0, 1), got {c}"
        )));
    }
    if sup_on_net > eps {
        return Err(Error::Precondition(format!(
            "transfer assumes the net supremum ({sup_on_net}) is at most eps ({eps})"
        )));
    }
    let upper = (1.0 + 5.0 * c - 3.0 * c * c) / (2.0 * (1.0 - c));
    let lower = (2.0 + c + 3.0 * c * c - 3.0 * c * c * c) / (2.0 * (1.0 - c));
    let c1 = upper.max(lower);
    Ok(2.0 * c1 * (1.0 + c1) * eps)
}
