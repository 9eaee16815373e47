//! Gromov δ-hyperbolicity of finite metric spaces.
//!
//! For a base point `w` the Gromov product matrix is
//! `M[i][j] = ½(d(i,w) + d(j,w) - d(i,j))`, and
//! `δ_w = max_{i,j} ((M ⊗ M)[i][j] - M[i][j])` with the max-min product
//! `(M ⊗ M)[i][j] = max_k min(M[i][k], M[k][j])`.
//!
//! Large sets are estimated by averaging over seeded random subsets.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeo::{self, Curvature};

pub const DEFAULT_BATCH_SIZE: usize = 1500;
pub const DEFAULT_BATCHES: usize = 3;

/// Sets at most this large also get the exhaustive four-point δ.
pub const FOUR_POINT_LIMIT: usize = 256;

/// Dense symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a distance function evaluated once per unordered pair.
    pub fn from_fn(n: usize, mut dist: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = dist(i, j);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::invalid(format!("distance ({i},{j}) = {v} is invalid")));
                }
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(Self { n, d })
    }

    /// Validate explicit rows. Asymmetry up to `1e-9` relative is tolerated
    /// and resolved in favor of the upper triangle.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::invalid(format!(
                "distance matrix row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is nonzero")));
            }
            for j in i + 1..n {
                let (a, b) = (row[j], rows[j][i]);
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn diameter(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            d: self.d.iter().map(|v| v * s).collect(),
        }
    }

    /// Restriction to the given indices, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let n = idx.len();
        let mut d = vec![0.0; n * n];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                d[a * n + b] = self.get(i, j);
            }
        }
        Self { n, d }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// Points are projected into the ball (with `eps`) before measuring.
    Hyperbolic { curvature: Curvature, eps: f64 },
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let dim = points.first().map_or(0, Vec::len);
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points contain non-finite coordinates"));
    }
    Ok(())
}

fn prepared(points: &[Vec<f64>], metric: Metric) -> Result<Vec<Vec<f64>>> {
    match metric {
        Metric::Euclidean => Ok(points.to_vec()),
        Metric::Hyperbolic { curvature, eps } => points
            .iter()
            .map(|p| hypergeo::project_to_ball(p, curvature, eps).map(|b| b.into_coords()))
            .collect(),
    }
}

fn metric_fn(metric: Metric) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |a, b| match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Hyperbolic { curvature, .. } => hypergeo::distance_raw(a, b, curvature),
    }
}

/// Exact pairwise distances under `metric`.
pub fn pairwise_distances(points: &[Vec<f64>], metric: Metric) -> Result<DistanceMatrix> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    check_points(points)?;
    let pts = prepared(points, metric)?;
    let f = metric_fn(metric);
    DistanceMatrix::from_fn(pts.len(), |i, j| f(&pts[i], &pts[j]))
}

/// Gromov product matrix for `base`, clamped to `[0, min(M[i][i], M[j][j])]`
/// so that rounding cannot break the bounds every Gromov product obeys.
fn gromov_products(dm: &DistanceMatrix, base: usize) -> Vec<f64> {
    let n = dm.len();
    let to_base = dm.row(base);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = 0.5 * (to_base[i] + to_base[j] - dm.get(i, j));
            m[i * n + j] = v.max(0.0).min(to_base[i].min(to_base[j]));
        }
    }
    m
}

/// δ of the max-min product construction at a fixed base point.
pub fn gromov_delta(dm: &DistanceMatrix, base: usize) -> Result<f64> {
    let n = dm.len();
    if base >= n {
        return Err(Error::invalid(format!("base index {base} out of range for {n} points")));
    }
    let m = gromov_products(dm, base);
    let row_max: Vec<f64> = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().copied().fold(0.0, f64::max))
        .collect();
    let delta = (0..n)
        .into_par_iter()
        .map(|i| {
            let mi = &m[i * n..(i + 1) * n];
            let mut worst = 0.0f64;
            for j in i..n {
                let mj = &m[j * n..(j + 1) * n];
                let bound = row_max[i].min(row_max[j]);
                let mut best = f64::NEG_INFINITY;
                for k in 0..n {
                    best = best.max(mi[k].min(mj[k]));
                    if best >= bound {
                        break;
                    }
                }
                worst = worst.max(best - mi[j]);
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(delta)
}

/// Exhaustive four-point δ: max over quadruples of `(S_max - S_mid)/2`
/// where the `S` are the three pairings' distance sums. `O(n⁴)`.
pub fn four_point_delta(dm: &DistanceMatrix) -> f64 {
    let n = dm.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            for j in i + 1..n {
                let dij = dm.get(i, j);
                for k in j + 1..n {
                    let (dik, djk) = (dm.get(i, k), dm.get(j, k));
                    let rk = dm.row(k);
                    for l in k + 1..n {
                        let s1 = dij + rk[l];
                        let s2 = dik + dm.get(j, l);
                        let s3 = dm.get(i, l) + djk;
                        let (hi, mid) = top_two(s1, s2, s3);
                        worst = worst.max(0.5 * (hi - mid));
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[inline]
fn top_two(a: f64, b: f64, c: f64) -> (f64, f64) {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if c >= hi {
        (c, hi)
    } else {
        (hi, lo.max(c))
    }
}

/// Index with the largest distance sum, lowest index on ties.
pub fn max_distance_sum_base(dm: &DistanceMatrix) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..dm.len() {
        let s: f64 = dm.row(i).iter().sum();
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    /// Mean δ over batches.
    pub delta: f64,
    /// Mean subset diameter over batches.
    pub diameter: f64,
    /// Mean over batches of `2δ / diameter`.
    pub delta_rel: f64,
    /// Base point of the first batch, as an index into the input.
    pub base_point: usize,
    pub batches: usize,
    pub samples_per_batch: usize,
    /// True when the input was smaller than the batch size and δ was
    /// computed once on all points.
    pub exact: bool,
    /// Mean exhaustive four-point δ, present when batches are small enough.
    pub four_point_delta: Option<f64>,
}

/// Sampled δ over an explicit distance matrix.
pub fn sampled_delta_matrix(
    dm: &DistanceMatrix,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<DeltaReport> {
    sampled_delta_with(dm.len(), batch_size, n_batches, seed, |idx| Ok(dm.subset(idx)))
}

/// Sampled δ of a point set under `metric`.
pub fn sampled_delta(
    points: &[Vec<f64>],
    metric: Metric,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<DeltaReport> {
    check_points(points)?;
    let pts = prepared(points, metric)?;
    let f = metric_fn(metric);
    sampled_delta_with(pts.len(), batch_size, n_batches, seed, |idx| {
        DistanceMatrix::from_fn(idx.len(), |a, b| f(&pts[idx[a]], &pts[idx[b]]))
    })
}

fn sampled_delta_with(
    n: usize,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
    subset: impl Fn(&[usize]) -> Result<DistanceMatrix>,
) -> Result<DeltaReport> {
    if batch_size < 4 {
        return Err(Error::invalid(format!("batch size must be at least 4, got {batch_size}")));
    }
    if n_batches == 0 {
        return Err(Error::invalid("need at least one batch"));
    }
    if n < 4 {
        return Err(Error::invalid(format!("need at least 4 points, got {n}")));
    }

    let exact = n <= batch_size;
    let batches: Vec<Vec<usize>> = if exact {
        vec![(0..n).collect()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_batches)
            .map(|_| {
                let mut idx = index::sample(&mut rng, n, batch_size).into_vec();
                idx.sort_unstable();
                idx
            })
            .collect()
    };

    let mut delta = 0.0;
    let mut diameter = 0.0;
    let mut delta_rel = 0.0;
    let mut four_point = 0.0;
    let mut base_point = 0;
    let with_four_point = batches[0].len() <= FOUR_POINT_LIMIT;
    for (b, idx) in batches.iter().enumerate() {
        let dm = subset(idx)?;
        let base = max_distance_sum_base(&dm);
        if b == 0 {
            base_point = idx[base];
        }
        let d = gromov_delta(&dm, base)?;
        let diam = dm.diameter();
        delta += d;
        diameter += diam;
        delta_rel += if diam > 0.0 { 2.0 * d / diam } else { 0.0 };
        if with_four_point {
            four_point += four_point_delta(&dm);
        }
    }
    let k = batches.len() as f64;
    Ok(DeltaReport {
        delta: delta / k,
        diameter: diameter / k,
        delta_rel: delta_rel / k,
        base_point,
        batches: batches.len(),
        samples_per_batch: batches[0].len(),
        exact,
        four_point_delta: with_four_point.then(|| four_point / k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn square() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ]
    }

    /// Center 0 joined to leaves 1..=3 by unit edges.
    fn star() -> DistanceMatrix {
        DistanceMatrix::from_fn(4, |i, j| if i == 0 || j == 0 { 1.0 } else { 2.0 }).unwrap()
    }

    /// Brute force over all triples at a fixed base, straight from the
    /// Gromov-product definition.
    fn brute_delta_at(dm: &DistanceMatrix, w: usize) -> f64 {
        let n = dm.len();
        let gp = |x: usize, y: usize| 0.5 * (dm.get(x, w) + dm.get(y, w) - dm.get(x, y));
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    worst = worst.max(gp(x, z).min(gp(z, y)) - gp(x, y));
                }
            }
        }
        worst
    }

    #[test]
    fn pairwise_examples() {
        let dm = pairwise_distances(&[vec![1.0, 2.0], vec![1.0, 2.0]], Metric::Euclidean).unwrap();
        assert_eq!(dm.get(0, 1), 0.0);
        let dm = pairwise_distances(&square(), Metric::Euclidean).unwrap();
        let s2 = 2f64.sqrt();
        let off = [
            dm.get(0, 1),
            dm.get(0, 2),
            dm.get(0, 3),
            dm.get(1, 2),
            dm.get(1, 3),
            dm.get(2, 3),
        ];
        assert_eq!(off, [1.0, s2, 1.0, 1.0, s2, 1.0]);
        assert!(pairwise_distances(&[vec![0.0]], Metric::Euclidean).is_err());
    }

    #[test]
    fn hyperbolic_matrix_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let metric = Metric::Hyperbolic {
            curvature: Curvature::from_k(-0.14).unwrap(),
            eps: 1e-5,
        };
        let dm = pairwise_distances(&pts, metric).unwrap();
        let p = prepared(&pts, metric).unwrap();
        let f = metric_fn(metric);
        for i in 0..64 {
            assert_eq!(dm.get(i, i), 0.0);
            for j in 0..64 {
                assert!((dm.get(i, j) - f(&p[j], &p[i])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn delta_ground_truths() {
        let two = DistanceMatrix::from_fn(2, |_, _| 3.0).unwrap();
        assert_eq!(gromov_delta(&two, 0).unwrap(), 0.0);

        let star = star();
        assert_eq!(brute_delta_at(&star, 0), 0.0);
        for base in 0..4 {
            assert!(gromov_delta(&star, base).unwrap().abs() < 1e-9);
        }
        assert_eq!(four_point_delta(&star), 0.0);

        let sq = pairwise_distances(&square(), Metric::Euclidean).unwrap();
        let brute = brute_delta_at(&sq, 0);
        let d = gromov_delta(&sq, 0).unwrap();
        assert!((brute - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((d - brute).abs() < 1e-12);
        assert!((d - 0.414214).abs() < 1e-6);

        assert!(gromov_delta(&sq, 4).is_err());
    }

    #[test]
    fn three_point_sets_are_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let pts: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let dm = pairwise_distances(&pts, Metric::Euclidean).unwrap();
            for base in 0..3 {
                assert_eq!(gromov_delta(&dm, base).unwrap(), 0.0);
            }
        }
        // collinear, where rounding is most likely to bite
        let dm = pairwise_distances(
            &[vec![0.1], vec![0.7], vec![0.3]],
            Metric::Euclidean,
        )
        .unwrap();
        for base in 0..3 {
            assert_eq!(gromov_delta(&dm, base).unwrap(), 0.0);
        }
    }

    #[test]
    fn max_min_matches_brute_force_and_four_point_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(4..30);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let dm = pairwise_distances(&pts, Metric::Euclidean).unwrap();
            let fp = four_point_delta(&dm);
            for base in [0, n - 1, max_distance_sum_base(&dm)] {
                let d = gromov_delta(&dm, base).unwrap();
                assert!((d - brute_delta_at(&dm, base)).abs() < 1e-12);
                assert!(d <= fp + 1e-12, "{d} > {fp}");
            }
        }
    }

    #[test]
    fn scale_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let dm = pairwise_distances(&pts, Metric::Euclidean).unwrap();
        let base = sampled_delta_matrix(&dm, 16, 3, 9).unwrap();
        for s in [0.5, 2.5, 1000.0] {
            let r = sampled_delta_matrix(&dm.scaled(s), 16, 3, 9).unwrap();
            assert!((r.delta - s * base.delta).abs() <= 1e-12 * s.max(1.0));
            assert!((r.delta_rel - base.delta_rel).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampled_protocol() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let a = sampled_delta(&pts, Metric::Euclidean, 20, 4, 7).unwrap();
        let b = sampled_delta(&pts, Metric::Euclidean, 20, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.batches, a.samples_per_batch, a.exact), (4, 20, false));
        assert!(a.delta <= a.diameter && a.delta_rel >= 0.0);
        assert!(a.four_point_delta.is_some());

        let full = sampled_delta(&pts, Metric::Euclidean, 1500, 3, 7).unwrap();
        let dm = pairwise_distances(&pts, Metric::Euclidean).unwrap();
        let exact = gromov_delta(&dm, max_distance_sum_base(&dm)).unwrap();
        assert!(full.exact);
        assert_eq!(full.batches, 1);
        assert_eq!(full.delta, exact);

        assert!(sampled_delta(&pts, Metric::Euclidean, 3, 1, 0).is_err());
        assert!(sampled_delta(&pts, Metric::Euclidean, 10, 0, 0).is_err());
        assert!(sampled_delta(&pts[..3], Metric::Euclidean, 10, 1, 0).is_err());
    }

    #[test]
    fn tree_metric_sampling_is_zero() {
        // path-graph distances are a tree metric
        let n = 60;
        let dm = DistanceMatrix::from_fn(n, |i, j| (j as f64 - i as f64).abs()).unwrap();
        for seed in 0..5 {
            let r = sampled_delta_matrix(&dm, 12, 3, seed).unwrap();
            assert!(r.delta.abs() < 1e-9);
        }
    }

    #[test]
    fn from_rows_validation() {
        assert!(DistanceMatrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(vec![vec![1.0]]).is_err());
        assert!(DistanceMatrix::from_rows(vec![vec![0.0, 1.0]]).is_err());
        let dm = DistanceMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(dm.get(1, 0), 1.0);
    }
}
