//! Chamfer distances between point clouds.
//!
//! Euclidean variants use an exact KD-tree; the hyperbolic variant searches
//! exhaustively because Euclidean pruning bounds do not carry over to the
//! ball metric. Per-point minima are computed in parallel and summed
//! sequentially in index order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeo::{self, Curvature};

pub type Point3 = [f64; 3];

/// A nonempty, finite, ordered set of 3-D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("point {i} has non-finite coordinates")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChamferVariant {
    /// Mean nearest-neighbor distance.
    L1,
    /// Mean squared nearest-neighbor distance (no final square root).
    L2,
}

#[inline]
pub(crate) fn sq_dist(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact Euclidean nearest-neighbor index (KD-tree).
///
/// Ties are broken towards the lowest point index.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NnIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        let points = cloud.points.clone();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        build_node(&points, &mut order, 0, points.len(), &mut nodes);
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point to `q` as `(index, squared distance)`.
    pub fn nearest(&self, q: &Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Point3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = sq_dist(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(
    points: &[Point3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let axis = (0..3)
        .map(|a| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][a]), hi.max(points[i][a]))
            });
            (a, hi - lo)
        })
        .fold((0, f64::NEG_INFINITY), |acc, (a, s)| if s > acc.1 { (a, s) } else { acc })
        .0;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[slice[mid]][axis];
    nodes.push(Node::Leaf { start, end }); // placeholder
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Build an index over `cloud`.
pub fn build_index(cloud: &PointCloud) -> Result<NnIndex> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot index an empty cloud"));
    }
    Ok(NnIndex::build(cloud))
}

/// Squared nearest-neighbor distance of every query point, in query order.
pub fn nn_sq_distances(queries: &PointCloud, index: &NnIndex) -> Vec<f64> {
    queries
        .points
        .par_iter()
        .map(|q| index.nearest(q).1)
        .collect()
}

/// Mean in index order.
pub(crate) fn ordered_mean(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

fn directed_term(sq: &[f64], variant: ChamferVariant) -> f64 {
    match variant {
        ChamferVariant::L1 => {
            let d: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
            ordered_mean(&d)
        }
        ChamferVariant::L2 => ordered_mean(sq),
    }
}

/// Euclidean Chamfer distance (sum of both directed mean terms).
pub fn chamfer_distance(x: &PointCloud, y: &PointCloud, variant: ChamferVariant) -> Result<f64> {
    let ix = build_index(x)?;
    let iy = build_index(y)?;
    let xy = directed_term(&nn_sq_distances(x, &iy), variant);
    let yx = directed_term(&nn_sq_distances(y, &ix), variant);
    Ok(xy + yx)
}

fn project_cloud(cloud: &PointCloud, curv: Curvature, eps: f64) -> Result<Vec<Vec<f64>>> {
    cloud
        .points
        .iter()
        .map(|p| hypergeo::project_to_ball(p, curv, eps).map(|b| b.into_coords()))
        .collect()
}

/// Index of the ball point in `candidates` closest to `q` under the geodesic
/// metric, together with that distance. Lowest index wins ties.
fn hyperbolic_nearest(q: &[f64], candidates: &[Vec<f64>], curv: Curvature) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, y) in candidates.iter().enumerate() {
        let d = hypergeo::distance_raw(q, y, curv);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn hyper_nn(from: &[Vec<f64>], to: &[Vec<f64>], curv: Curvature) -> Vec<(usize, f64)> {
    from.par_iter()
        .map(|q| hyperbolic_nearest(q, to, curv))
        .collect()
}

/// Chamfer distance whose per-point metric is the Poincaré-ball geodesic
/// distance. Both clouds are projected into the ball first.
pub fn hyper_chamfer(x: &PointCloud, y: &PointCloud, curv: Curvature, eps: f64) -> Result<f64> {
    let px = project_cloud(x, curv, eps)?;
    let py = project_cloud(y, curv, eps)?;
    let xy: Vec<f64> = hyper_nn(&px, &py, curv).into_iter().map(|(_, d)| d).collect();
    let yx: Vec<f64> = hyper_nn(&py, &px, curv).into_iter().map(|(_, d)| d).collect();
    Ok(ordered_mean(&xy) + ordered_mean(&yx))
}

/// Gradient of [`hyper_chamfer`] with respect to every raw input point,
/// holding the nearest-neighbor assignment fixed.
pub fn hyper_chamfer_grad(
    x: &PointCloud,
    y: &PointCloud,
    curv: Curvature,
    eps: f64,
) -> Result<(Vec<Point3>, Vec<Point3>)> {
    let px = project_cloud(x, curv, eps)?;
    let py = project_cloud(y, curv, eps)?;
    let mut gx_ball = vec![[0.0; 3]; px.len()];
    let mut gy_ball = vec![[0.0; 3]; py.len()];

    let wx = 1.0 / px.len() as f64;
    for (j, (k, _)) in hyper_nn(&px, &py, curv).into_iter().enumerate() {
        let (da, db) = hypergeo::distance_grad(&px[j], &py[k], curv);
        for a in 0..3 {
            gx_ball[j][a] += wx * da[a];
            gy_ball[k][a] += wx * db[a];
        }
    }
    let wy = 1.0 / py.len() as f64;
    for (k, (j, _)) in hyper_nn(&py, &px, curv).into_iter().enumerate() {
        let (db, da) = hypergeo::distance_grad(&py[k], &px[j], curv);
        for a in 0..3 {
            gy_ball[k][a] += wy * db[a];
            gx_ball[j][a] += wy * da[a];
        }
    }

    let pull = |raw: &[Point3], g: Vec<Point3>| -> Vec<Point3> {
        raw.iter()
            .zip(g)
            .map(|(p, g)| {
                let v = hypergeo::projection_vjp(p, curv, eps, &g);
                [v[0], v[1], v[2]]
            })
            .collect()
    };
    Ok((pull(x.points(), gx_ball), pull(y.points(), gy_ball)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[Point3]) -> PointCloud {
        PointCloud::new(pts.to_vec()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-scale..scale),
                        rng.random_range(-scale..scale),
                        rng.random_range(-scale..scale),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    fn brute_nearest(pts: &[Point3], q: &Point3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d = sq_dist(q, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn brute_chamfer(x: &PointCloud, y: &PointCloud, variant: ChamferVariant) -> f64 {
        let term = |a: &PointCloud, b: &PointCloud| {
            let mut acc = 0.0;
            for q in a.points() {
                let d = brute_nearest(b.points(), q).1;
                acc += match variant {
                    ChamferVariant::L1 => d.sqrt(),
                    ChamferVariant::L2 => d,
                };
            }
            acc / a.len() as f64
        };
        term(x, y) + term(y, x)
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0, f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn single_point_index() {
        let idx = build_index(&cloud(&[[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(idx.nearest(&[-5.0, 0.0, 9.0]).0, 0);
        assert_eq!(idx.nearest(&[1.0, 2.0, 3.0]), (0, 0.0));
    }

    #[test]
    fn index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_cloud(&mut rng, 2048, 1.0);
        let idx = build_index(&data).unwrap();
        for _ in 0..1024 {
            let q = [
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            ];
            assert_eq!(idx.nearest(&q), brute_nearest(data.points(), &q));
        }
    }

    #[test]
    fn index_breaks_ties_towards_lowest_index() {
        let pts = vec![[1.0, 0.0, 0.0]; 40];
        let mut pts2 = pts.clone();
        pts2.extend([[-1.0, 0.0, 0.0]; 40]);
        let idx = build_index(&cloud(&pts2)).unwrap();
        assert_eq!(idx.nearest(&[0.0, 0.0, 0.0]), (0, 1.0));
        assert_eq!(idx.nearest(&[-0.5, 0.0, 0.0]).0, 40);
    }

    #[test]
    fn chamfer_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_cloud(&mut rng, 64, 1.0);
        for v in [ChamferVariant::L1, ChamferVariant::L2] {
            assert_eq!(chamfer_distance(&x, &x, v).unwrap(), 0.0);
        }
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b, ChamferVariant::L1).unwrap(), 2.0);
        assert_eq!(chamfer_distance(&a, &b, ChamferVariant::L2).unwrap(), 2.0);
    }

    #[test]
    fn chamfer_matches_brute_force_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x = random_cloud(&mut rng, 128, 1.0);
            let y = random_cloud(&mut rng, 128, 1.0);
            for v in [ChamferVariant::L1, ChamferVariant::L2] {
                let fast = chamfer_distance(&x, &y, v).unwrap();
                assert_eq!(fast.to_bits(), brute_chamfer(&x, &y, v).to_bits());
                assert_eq!(fast.to_bits(), chamfer_distance(&y, &x, v).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn hyper_chamfer_examples() {
        let c = Curvature::from_k(-0.14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_cloud(&mut rng, 50, 1.0);
        assert_eq!(hyper_chamfer(&x, &x, c, 1e-5).unwrap(), 0.0);

        let a = cloud(&[[0.1, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0, 0.0]]);
        let s = 0.14f64.sqrt();
        let oracle = 2.0 * (2.0 / s) * (s * 0.1).atanh();
        let d = hyper_chamfer(&a, &b, c, 1e-5).unwrap();
        assert!((d - oracle).abs() < 1e-14);
        assert!((d - 0.40019).abs() < 1e-5);
    }

    #[test]
    fn hyper_chamfer_is_symmetric_bit_exact() {
        let c = Curvature::from_k(-0.14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let x = random_cloud(&mut rng, 40, 1.5);
            let y = random_cloud(&mut rng, 70, 1.5);
            let xy = hyper_chamfer(&x, &y, c, 1e-5).unwrap();
            let yx = hyper_chamfer(&y, &x, c, 1e-5).unwrap();
            assert_eq!(xy.to_bits(), yx.to_bits());
        }
    }

    #[test]
    fn hyper_chamfer_euclidean_limit_tightens() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_cloud(&mut rng, 60, 0.28);
        let y = random_cloud(&mut rng, 60, 0.28);
        let l1 = chamfer_distance(&x, &y, ChamferVariant::L1).unwrap();
        let mut last = f64::INFINITY;
        for c in [1e-4, 1e-6, 1e-8] {
            let curv = Curvature::from_magnitude(c).unwrap();
            let h = hyper_chamfer(&x, &y, curv, 1e-5).unwrap();
            let rel = (h - 2.0 * l1).abs() / (2.0 * l1);
            assert!(rel < 1e-3);
            assert!(rel < last);
            last = rel;
        }
    }

    #[test]
    fn hyper_chamfer_grad_single_pair() {
        let c = Curvature::from_k(-0.14).unwrap();
        let x = cloud(&[[0.3, -0.2, 0.5]]);
        let y = cloud(&[[-0.4, 0.1, 0.2]]);
        let (gx, gy) = hyper_chamfer_grad(&x, &y, c, 1e-5).unwrap();
        let h = 1e-6;
        for a in 0..3 {
            let mut xp = x.points()[0];
            let mut xm = xp;
            xp[a] += h;
            xm[a] -= h;
            let fd = (hyper_chamfer(&cloud(&[xp]), &y, c, 1e-5).unwrap()
                - hyper_chamfer(&cloud(&[xm]), &y, c, 1e-5).unwrap())
                / (2.0 * h);
            assert!((gx[0][a] - fd).abs() < 1e-7);
            let mut yp = y.points()[0];
            let mut ym = yp;
            yp[a] += h;
            ym[a] -= h;
            let fd = (hyper_chamfer(&x, &cloud(&[yp]), c, 1e-5).unwrap()
                - hyper_chamfer(&x, &cloud(&[ym]), c, 1e-5).unwrap())
                / (2.0 * h);
            assert!((gy[0][a] - fd).abs() < 1e-7);
        }
    }
}
