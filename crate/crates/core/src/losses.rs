//! Part–whole training objectives and their analytic gradients.
//!
//! * `L_Z` is a hinge on hyperbolic norms: a part should sit closer to the
//!   ball's center than its whole by a margin `γ/N`, where `N` is the part's
//!   point count and `γ` comes from an adaptive [`MarginHead`].
//! * `L_T` is a triplet hinge on tangent-space distances at the origin
//!   between a whole, one of its parts and a part of another category.
//! * The composite objective adds an externally supplied scalar `L_N`.
//!
//! Embeddings are free Euclidean vectors; each loss projects them into the
//! ball first. Gradients treat the projection as the identity inside the
//! clipping radius and use the exact Jacobian of the rescaling outside it.
//! Hinges contribute nothing at their kink.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergeo::{self, BallPoint, Curvature};

pub const DEFAULT_GAMMA0: f64 = 1000.0;
pub const DEFAULT_MARGIN_EPS: f64 = 4.0;

/// The head's pre-activation is clamped to this range, which keeps
/// `sigmoid` strictly inside `(0, 1)` in double precision.
const LOGIT_LIMIT: f64 = 30.0;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single affine layer producing the adaptive margin
/// `γ = γ₀ · sigmoid(weights · [p; w] + bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub gamma0: f64,
}

impl MarginHead {
    /// Zero-initialized head over features of total length `input_dim`;
    /// its margin starts at `γ₀/2`.
    pub fn zeros(input_dim: usize, gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(Error::invalid(format!("gamma0 must be positive, got {gamma0}")));
        }
        Ok(Self {
            weights: vec![0.0; input_dim],
            bias: 0.0,
            gamma0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn logit(&self, p: &[f64], w: &[f64]) -> Result<f64> {
        if p.len() + w.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: p.len() + w.len(),
            });
        }
        let (wp, ww) = self.weights.split_at(p.len());
        Ok(hypergeo::dot(wp, p) + hypergeo::dot(ww, w) + self.bias)
    }
}

/// Margin for the pair `(p_feat, w_feat)`, strictly inside `(0, γ₀)`.
pub fn adaptive_margin(p_feat: &[f64], w_feat: &[f64], head: &MarginHead) -> Result<f64> {
    let a = head.logit(p_feat, w_feat)?;
    Ok(head.gamma0 * sigmoid(a.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)))
}

/// Scalar used to rank embeddings by depth in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Geodesic distance from the origin.
    #[default]
    Hyperbolic,
    /// Plain Euclidean norm of the ball coordinates (ablation).
    Euclidean,
}

impl NormKind {
    pub fn eval(self, x: &[f64], curv: Curvature) -> f64 {
        match self {
            NormKind::Hyperbolic => hypergeo::hyperbolic_norm_raw(x, curv),
            NormKind::Euclidean => hypergeo::norm(x),
        }
    }

    fn grad(self, x: &[f64], curv: Curvature) -> Vec<f64> {
        match self {
            NormKind::Hyperbolic => hypergeo::hyperbolic_norm_grad(x, curv),
            NormKind::Euclidean => {
                let r = hypergeo::norm(x);
                if r == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().map(|v| v / r).collect()
                }
            }
        }
    }
}

/// Distance used inside the triplet hinge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletDistance {
    /// Euclidean distance between origin log-map images.
    #[default]
    Tangent,
    /// Geodesic distance between the ball points themselves.
    Geodesic,
}

fn check_same_curvature(points: &[&BallPoint]) -> Result<Curvature> {
    let c = points[0].curvature();
    for p in &points[1..] {
        if p.curvature() != c {
            return Err(Error::CurvatureMismatch(c.k(), p.curvature().k()));
        }
    }
    Ok(c)
}

/// `max(0, -‖W‖ + ‖P‖ + γ/N)` with hyperbolic norms.
pub fn reg_loss(part: &BallPoint, whole: &BallPoint, gamma: f64, n_points: usize) -> Result<f64> {
    reg_loss_with(part, whole, gamma, n_points, NormKind::Hyperbolic)
}

pub fn reg_loss_with(
    part: &BallPoint,
    whole: &BallPoint,
    gamma: f64,
    n_points: usize,
    norm: NormKind,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if n_points == 0 {
        return Err(Error::invalid("n_points must be at least 1"));
    }
    let c = check_same_curvature(&[part, whole])?;
    Ok(reg_hinge(
        norm.eval(part.coords(), c),
        norm.eval(whole.coords(), c),
        gamma,
        n_points,
    ))
}

/// The hinge on precomputed norms.
pub fn reg_hinge(part_norm: f64, whole_norm: f64, gamma: f64, n_points: usize) -> f64 {
    (-whole_norm + part_norm + gamma / n_points as f64).max(0.0)
}

/// `max(0, d(W, P⁺) - d(W, P⁻) + ε)` over tangent vectors at the origin.
pub fn triplet_loss(
    w_pos: &BallPoint,
    p_pos: &BallPoint,
    p_neg: &BallPoint,
    margin_eps: f64,
) -> Result<f64> {
    triplet_loss_with(w_pos, p_pos, p_neg, margin_eps, TripletDistance::Tangent)
}

pub fn triplet_loss_with(
    w_pos: &BallPoint,
    p_pos: &BallPoint,
    p_neg: &BallPoint,
    margin_eps: f64,
    distance: TripletDistance,
) -> Result<f64> {
    if !(margin_eps > 0.0) {
        return Err(Error::invalid(format!("margin_eps must be positive, got {margin_eps}")));
    }
    let c = check_same_curvature(&[w_pos, p_pos, p_neg])?;
    let d = |a: &BallPoint, b: &BallPoint| pair_distance(a.coords(), b.coords(), c, distance);
    Ok(triplet_hinge(d(w_pos, p_pos), d(w_pos, p_neg), margin_eps))
}

/// The hinge on precomputed distances.
pub fn triplet_hinge(d_pos: f64, d_neg: f64, margin_eps: f64) -> f64 {
    (d_pos - d_neg + margin_eps).max(0.0)
}

/// Distance between two ball points as used by the triplet hinge.
pub fn pair_distance(a: &[f64], b: &[f64], curv: Curvature, kind: TripletDistance) -> f64 {
    match kind {
        TripletDistance::Tangent => {
            let va = hypergeo::log_map_origin_raw(a, curv);
            let vb = hypergeo::log_map_origin_raw(b, curv);
            euclid(&va, &vb)
        }
        TripletDistance::Geodesic => hypergeo::distance_raw(a, b, curv),
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_z: f64,
    pub l_t: f64,
    pub l_n: f64,
    pub total: f64,
}

/// Compose `L = L_N + L_Z + L_T`.
pub fn total_loss(l_z: f64, l_t: f64, l_n_external: f64) -> LossReport {
    LossReport {
        l_z,
        l_t,
        l_n: l_n_external,
        total: l_n_external + l_z + l_t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub curvature: Curvature,
    pub eps: f64,
    pub margin_eps: f64,
    pub reg_norm: NormKind,
    pub triplet_distance: TripletDistance,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            curvature: Curvature::default(),
            eps: hypergeo::DEFAULT_EPS,
            margin_eps: DEFAULT_MARGIN_EPS,
            reg_norm: NormKind::Hyperbolic,
            triplet_distance: TripletDistance::Tangent,
        }
    }
}

/// A (part, whole) pair for `L_Z`, by embedding row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTerm {
    pub part: usize,
    pub whole: usize,
    pub n_points: usize,
}

/// A (whole, same-object part, other-category part) triplet for `L_T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletTerm {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub pairs: Vec<PairTerm>,
    pub triplets: Vec<TripletTerm>,
}

impl Batch {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.triplets.is_empty()
    }
}

/// Gradients for every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: Vec<Vec<f64>>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

impl Gradients {
    fn zeros(n: usize, dim: usize, head_dim: usize) -> Self {
        Self {
            embeddings: vec![vec![0.0; dim]; n],
            head_weights: vec![0.0; head_dim],
            head_bias: 0.0,
        }
    }

    /// Every gradient entry, embeddings first, then head weights, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.embeddings.iter().flatten().copied().collect();
        out.extend_from_slice(&self.head_weights);
        out.push(self.head_bias);
        out
    }

    pub fn scale(&mut self, s: f64) {
        for row in &mut self.embeddings {
            row.iter_mut().for_each(|v| *v *= s);
        }
        self.head_weights.iter_mut().for_each(|v| *v *= s);
        self.head_bias *= s;
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

fn check_batch(batch: &Batch, embeddings: &[Vec<f64>], head: &MarginHead) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::invalid("embeddings have inconsistent dimensions"));
    }
    if head.input_dim() != 2 * dim {
        return Err(Error::DimensionMismatch {
            expected: 2 * dim,
            got: head.input_dim(),
        });
    }
    let n = embeddings.len();
    let in_range = batch
        .pairs
        .iter()
        .flat_map(|p| [p.part, p.whole])
        .chain(batch.triplets.iter().flat_map(|t| [t.anchor, t.positive, t.negative]))
        .all(|i| i < n);
    if !in_range {
        return Err(Error::invalid("batch refers to an embedding that does not exist"));
    }
    if batch.pairs.iter().any(|p| p.n_points == 0) {
        return Err(Error::invalid("pair with zero points"));
    }
    Ok(dim)
}

/// Losses and exact gradients of `mean(L_Z) + mean(L_T)` for a batch.
///
/// `embeddings` are the raw Euclidean parameters; the margin head reads
/// them directly as its part/whole features.
pub fn loss_gradients(
    batch: &Batch,
    embeddings: &[Vec<f64>],
    head: &MarginHead,
    cfg: &LossConfig,
) -> Result<(LossReport, Gradients)> {
    let dim = check_batch(batch, embeddings, head)?;
    let curv = cfg.curvature;
    let eps = cfg.eps;
    let mut grads = Gradients::zeros(embeddings.len(), dim, head.input_dim());
    let ball: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| hypergeo::project_to_ball(e, curv, eps).map(BallPoint::into_coords))
        .collect::<Result<_>>()?;

    let mut l_z = 0.0;
    if !batch.pairs.is_empty() {
        let w = 1.0 / batch.pairs.len() as f64;
        for pair in &batch.pairs {
            let (p_raw, w_raw) = (&embeddings[pair.part], &embeddings[pair.whole]);
            let (p, wh) = (&ball[pair.part], &ball[pair.whole]);
            let a = head.logit(p_raw, w_raw)?;
            let s = sigmoid(a.clamp(-LOGIT_LIMIT, LOGIT_LIMIT));
            let n = pair.n_points as f64;
            let value = reg_hinge(
                cfg.reg_norm.eval(p, curv),
                cfg.reg_norm.eval(wh, curv),
                head.gamma0 * s,
                pair.n_points,
            );
            l_z += value;
            if value <= 0.0 {
                continue;
            }
            let gp = hypergeo::projection_vjp(p_raw, curv, eps, &cfg.reg_norm.grad(p, curv));
            let gw = hypergeo::projection_vjp(w_raw, curv, eps, &cfg.reg_norm.grad(wh, curv));
            axpy(&mut grads.embeddings[pair.part], w, &gp);
            axpy(&mut grads.embeddings[pair.whole], -w, &gw);

            if a.abs() < LOGIT_LIMIT {
                let dmargin = w * head.gamma0 * s * (1.0 - s) / n;
                let (hp, hw) = head.weights.split_at(dim);
                axpy(&mut grads.embeddings[pair.part], dmargin, hp);
                axpy(&mut grads.embeddings[pair.whole], dmargin, hw);
                let (gwp, gww) = grads.head_weights.split_at_mut(dim);
                axpy(gwp, dmargin, p_raw);
                axpy(gww, dmargin, w_raw);
                grads.head_bias += dmargin;
            }
        }
        l_z /= batch.pairs.len() as f64;
    }

    let mut l_t = 0.0;
    if !batch.triplets.is_empty() {
        let w = 1.0 / batch.triplets.len() as f64;
        let tangent: Vec<Vec<f64>> = match cfg.triplet_distance {
            TripletDistance::Tangent => ball
                .iter()
                .map(|b| hypergeo::log_map_origin_raw(b, curv))
                .collect(),
            TripletDistance::Geodesic => Vec::new(),
        };
        for t in &batch.triplets {
            let value = match cfg.triplet_distance {
                TripletDistance::Tangent => triplet_tangent(t, &tangent, embeddings, &ball, cfg, w, &mut grads),
                TripletDistance::Geodesic => triplet_geodesic(t, embeddings, &ball, cfg, w, &mut grads),
            };
            l_t += value;
        }
        l_t /= batch.triplets.len() as f64;
    }

    Ok((total_loss(l_z, l_t, 0.0), grads))
}

fn unit_diff(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let d = euclid(a, b);
    if d == 0.0 {
        (0.0, vec![0.0; a.len()])
    } else {
        (d, a.iter().zip(b).map(|(x, y)| (x - y) / d).collect())
    }
}

fn pull_tangent(raw: &[f64], ball: &[f64], cfg: &LossConfig, g: &[f64]) -> Vec<f64> {
    let through_log = hypergeo::log_map_origin_vjp(ball, cfg.curvature, g);
    hypergeo::projection_vjp(raw, cfg.curvature, cfg.eps, &through_log)
}

fn triplet_tangent(
    t: &TripletTerm,
    tangent: &[Vec<f64>],
    embeddings: &[Vec<f64>],
    ball: &[Vec<f64>],
    cfg: &LossConfig,
    w: f64,
    grads: &mut Gradients,
) -> f64 {
    let (va, vp, vn) = (&tangent[t.anchor], &tangent[t.positive], &tangent[t.negative]);
    let (dp, up) = unit_diff(va, vp);
    let (dn, un) = unit_diff(va, vn);
    let value = triplet_hinge(dp, dn, cfg.margin_eps);
    if value <= 0.0 {
        return value;
    }
    let g_anchor: Vec<f64> = up.iter().zip(&un).map(|(a, b)| a - b).collect();
    let g_pos: Vec<f64> = up.iter().map(|v| -v).collect();
    for (idx, g) in [(t.anchor, g_anchor), (t.positive, g_pos), (t.negative, un)] {
        let pulled = pull_tangent(&embeddings[idx], &ball[idx], cfg, &g);
        axpy(&mut grads.embeddings[idx], w, &pulled);
    }
    value
}

fn triplet_geodesic(
    t: &TripletTerm,
    embeddings: &[Vec<f64>],
    ball: &[Vec<f64>],
    cfg: &LossConfig,
    w: f64,
    grads: &mut Gradients,
) -> f64 {
    let curv = cfg.curvature;
    let (a, p, n) = (&ball[t.anchor], &ball[t.positive], &ball[t.negative]);
    let dp = hypergeo::distance_raw(a, p, curv);
    let dn = hypergeo::distance_raw(a, n, curv);
    let value = triplet_hinge(dp, dn, cfg.margin_eps);
    if value <= 0.0 {
        return value;
    }
    let (ga_p, gp) = hypergeo::distance_grad(a, p, curv);
    let (ga_n, gn) = hypergeo::distance_grad(a, n, curv);
    let g_anchor: Vec<f64> = ga_p.iter().zip(&ga_n).map(|(x, y)| x - y).collect();
    let g_neg: Vec<f64> = gn.iter().map(|v| -v).collect();
    for (idx, g) in [(t.anchor, g_anchor), (t.positive, gp), (t.negative, g_neg)] {
        let pulled = hypergeo::projection_vjp(&embeddings[idx], curv, cfg.eps, &g);
        axpy(&mut grads.embeddings[idx], w, &pulled);
    }
    value
}

/// Largest per-coordinate disagreement between `analytic` and a central
/// difference of `f` at `point`, relative to `max(1, |fd|)`.
///
/// Callers are responsible for keeping `point` away from hinge kinks; the
/// usual procedure is to resample or perturb the margin by `1e-3` first.
pub fn grad_check(
    f: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    point: &[f64],
    h: f64,
) -> Result<f64> {
    if !(h > 1e-9 && h < 1e-3) {
        return Err(Error::invalid(format!("step h must lie in (1e-9, 1e-3), got {h}")));
    }
    if analytic.len() != point.len() {
        return Err(Error::DimensionMismatch {
            expected: point.len(),
            got: analytic.len(),
        });
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c014() -> Curvature {
        Curvature::from_k(-0.14).unwrap()
    }

    fn bp(coords: &[f64]) -> BallPoint {
        BallPoint::new(coords.to_vec(), c014()).unwrap()
    }

    #[test]
    fn margin_examples() {
        let head = MarginHead::zeros(6, 1000.0).unwrap();
        let m = adaptive_margin(&[1.0, 2.0, 3.0], &[-4.0, 5.0, 6.0], &head).unwrap();
        assert_eq!(m, 500.0);

        let mut head = MarginHead::zeros(2, 1000.0).unwrap();
        head.weights = vec![1.0, 1.0];
        let mut last = 0.0;
        for s in [0.0, 1.0, 10.0, 100.0, 1e6] {
            let m = adaptive_margin(&[s], &[s], &head).unwrap();
            assert!(m >= last && m < 1000.0);
            last = m;
        }
        assert!(last > 999.999);

        assert!(adaptive_margin(&[1.0], &[1.0, 2.0], &head).is_err());
        assert!(MarginHead::zeros(2, 0.0).is_err());
    }

    #[test]
    fn margin_range_and_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let d = 3;
            let mut head = MarginHead::zeros(2 * d, 1000.0).unwrap();
            head.weights.iter_mut().for_each(|w| *w = rng.random_range(-2.0..2.0));
            head.bias = rng.random_range(-5.0..5.0);
            let scale = if rng.random_bool(0.3) { 1e3 } else { 1.0 };
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
            let m = adaptive_margin(&p, &w, &head).unwrap();
            assert!(m > 0.0 && m < 1000.0, "{m}");

            let dp: Vec<f64> = (0..d).map(|_| rng.random_range(-0.1..0.1)).collect();
            let p2: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + b).collect();
            let m2 = adaptive_margin(&p2, &w, &head).unwrap();
            let bound = 1000.0 * 0.25 * hypergeo::norm(&head.weights) * hypergeo::norm(&dp);
            assert!((m - m2).abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn reg_loss_examples() {
        let c = c014();
        // points with hyperbolic norms exactly 1.0, 1.2 and 2.0
        let at_norm = |h: f64| {
            let r = (h * c.sqrt_c() / 2.0).tanh() / c.sqrt_c();
            bp(&[r, 0.0])
        };
        let (n1, n12, n2) = (at_norm(1.0), at_norm(1.2), at_norm(2.0));
        assert_eq!(reg_loss(&n1, &n2, 0.5, 1).unwrap(), 0.0);
        assert!((reg_loss(&n12, &n1, 0.3, 1).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(reg_loss(&n1, &n1, 3.0, 10).unwrap(), 0.3);
        assert!(reg_loss(&n1, &n1, 0.0, 1).is_err());
        assert!(reg_loss(&n1, &n1, 1.0, 0).is_err());

        assert_eq!(reg_hinge(1.0, 2.0, 0.5, 1), 0.0);
        assert!((reg_hinge(1.2, 1.0, 0.3, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triplet_examples() {
        assert_eq!(triplet_hinge(1.0, 3.0, 4.0), 2.0);
        assert_eq!(triplet_hinge(0.1, 10.0, 4.0), 0.0);
        let w = bp(&[0.5, 0.1]);
        let p = bp(&[-0.3, 0.2]);
        assert_eq!(triplet_loss(&w, &p, &p, 4.0).unwrap(), 4.0);
        assert_eq!(
            triplet_loss_with(&w, &p, &p, 4.0, TripletDistance::Geodesic).unwrap(),
            4.0
        );
        assert!(triplet_loss(&w, &p, &p, 0.0).is_err());

        let other = BallPoint::new(vec![0.1, 0.0], Curvature::from_magnitude(1.0).unwrap()).unwrap();
        assert!(triplet_loss(&w, &p, &other, 4.0).is_err());
    }

    #[test]
    fn triplet_exactly_zero_when_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = c014();
        for _ in 0..2000 {
            let pts: Vec<BallPoint> = (0..3)
                .map(|_| {
                    let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
                    hypergeo::project_to_ball(&v, c, 1e-5).unwrap()
                })
                .collect();
            let dp = pair_distance(pts[0].coords(), pts[1].coords(), c, TripletDistance::Tangent);
            let dn = pair_distance(pts[0].coords(), pts[2].coords(), c, TripletDistance::Tangent);
            let l = triplet_loss(&pts[0], &pts[1], &pts[2], 0.5).unwrap();
            assert!(l >= 0.0);
            if dp + 0.5 <= dn {
                assert_eq!(l, 0.0);
            }
        }
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 0.0, 0.0).total, 0.0);
        assert_eq!(total_loss(0.5, 2.0, 0.0).total, 2.5);
        let r = total_loss(0.5, 2.0, 1.25);
        assert_eq!(r.total, 3.75);
        assert_eq!(r.total, r.l_n + r.l_z + r.l_t);
    }

    #[test]
    fn reg_loss_monotone_in_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let pn = rng.random_range(0.0..5.0);
            let wn = rng.random_range(0.0..5.0);
            let g = rng.random_range(0.1..3.0);
            let h = 1e-4;
            if reg_hinge(pn, wn, g, 1) > 2.0 * h {
                assert!(reg_hinge(pn + h, wn, g, 1) >= reg_hinge(pn, wn, g, 1));
                assert!(reg_hinge(pn, wn + h, g, 1) <= reg_hinge(pn, wn, g, 1));
            }
        }
    }

    fn simple_cfg() -> LossConfig {
        LossConfig {
            curvature: c014(),
            ..LossConfig::default()
        }
    }

    #[test]
    fn inactive_hinges_give_zero_gradients() {
        let cfg = simple_cfg();
        // part at origin, whole near the boundary; negative far from anchor
        let emb = vec![
            vec![0.0, 0.0],
            vec![2.6, 0.0],
            vec![2.6, 0.0],
            vec![-2.6, 0.0],
        ];
        let head = MarginHead::zeros(4, 1.0).unwrap();
        let batch = Batch {
            pairs: vec![PairTerm {
                part: 0,
                whole: 1,
                n_points: 10,
            }],
            triplets: vec![TripletTerm {
                anchor: 1,
                positive: 2,
                negative: 3,
            }],
        };
        let (report, g) = loss_gradients(&batch, &emb, &head, &cfg).unwrap();
        assert_eq!(report.total, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_active_pair_sign_structure() {
        let cfg = simple_cfg();
        let emb = vec![vec![0.5, 0.2], vec![0.1, -0.1]];
        let head = MarginHead::zeros(4, 1.0).unwrap();
        let batch = Batch {
            pairs: vec![PairTerm {
                part: 0,
                whole: 1,
                n_points: 1,
            }],
            triplets: vec![],
        };
        let (_, g) = loss_gradients(&batch, &emb, &head, &cfg).unwrap();
        let c = cfg.curvature;
        let gp = hypergeo::hyperbolic_norm_grad(&emb[0], c);
        let gw = hypergeo::hyperbolic_norm_grad(&emb[1], c);
        // zero head weights: margin contributes nothing to embedding grads
        for i in 0..2 {
            assert!((g.embeddings[0][i] - gp[i]).abs() < 1e-15);
            assert!((g.embeddings[1][i] + gw[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for seed in 0..100u64 {
            let mut cfg = simple_cfg();
            if seed % 2 == 1 {
                cfg.triplet_distance = TripletDistance::Geodesic;
            }
            if seed % 3 == 2 {
                cfg.reg_norm = NormKind::Euclidean;
            }
            let dim = 3;
            let n = 6;
            let r = 0.7 * cfg.curvature.ball_radius() / (dim as f64).sqrt();
            let emb: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-r..r)).collect())
                .collect();
            let mut head = MarginHead::zeros(2 * dim, 1000.0).unwrap();
            head.weights.iter_mut().for_each(|w| *w = rng.random_range(-0.3..0.3));
            head.bias = rng.random_range(-1.0..1.0);
            let batch = Batch {
                pairs: vec![
                    PairTerm { part: 0, whole: 1, n_points: 300 },
                    PairTerm { part: 2, whole: 1, n_points: 700 },
                    PairTerm { part: 3, whole: 4, n_points: 500 },
                ],
                triplets: vec![
                    TripletTerm { anchor: 1, positive: 0, negative: 5 },
                    TripletTerm { anchor: 4, positive: 3, negative: 2 },
                ],
            };
            let (_, g) = loss_gradients(&batch, &emb, &head, &cfg).unwrap();

            let unpack = |x: &[f64]| -> (Vec<Vec<f64>>, MarginHead) {
                let e = x[..n * dim].chunks(dim).map(<[f64]>::to_vec).collect();
                let mut h = head.clone();
                h.weights = x[n * dim..n * dim + 2 * dim].to_vec();
                h.bias = x[n * dim + 2 * dim];
                (e, h)
            };
            let eval = |x: &[f64]| {
                let (e, h) = unpack(x);
                loss_gradients(&batch, &e, &h, &cfg).unwrap().0.total
            };
            // skip configurations sitting within reach of a hinge kink
            let near_kink = |x: &[f64]| {
                let (e, h) = unpack(x);
                let c = cfg.curvature;
                batch.pairs.iter().any(|p| {
                    let m = adaptive_margin(&e[p.part], &e[p.whole], &h).unwrap();
                    let v = -cfg.reg_norm.eval(&e[p.whole], c)
                        + cfg.reg_norm.eval(&e[p.part], c)
                        + m / p.n_points as f64;
                    v.abs() < 1e-3
                }) || batch.triplets.iter().any(|t| {
                    let dp = pair_distance(&e[t.anchor], &e[t.positive], c, cfg.triplet_distance);
                    let dn = pair_distance(&e[t.anchor], &e[t.negative], c, cfg.triplet_distance);
                    (dp - dn + cfg.margin_eps).abs() < 1e-3
                })
            };
            let mut x: Vec<f64> = emb.iter().flatten().copied().collect();
            x.extend_from_slice(&head.weights);
            x.push(head.bias);
            if near_kink(&x) {
                continue;
            }
            let err = grad_check(eval, &g.flatten(), &x, 1e-6).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
            checked += 1;
        }
        assert!(checked > 80);
    }

    #[test]
    fn grad_check_on_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1] * x[1] + x[2];
        let x = [0.7, -1.3, 2.0];
        let analytic = [6.0 * x[0] + x[1], x[0] - 4.0 * x[1], 1.0];
        assert!(grad_check(f, &analytic, &x, 1e-5).unwrap() < 1e-10);
        assert!(grad_check(f, &analytic, &x, 1e-2).is_err());
        assert!(grad_check(f, &analytic, &x, 1e-10).is_err());
    }

    #[test]
    fn grad_check_on_geodesic_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = c014();
        let r = 0.8 * c.ball_radius() / 3f64.sqrt();
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-r..r)).collect();
            let (gx, gy) = hypergeo::distance_grad(&x[..3], &x[3..], c);
            let analytic: Vec<f64> = gx.into_iter().chain(gy).collect();
            let f = |p: &[f64]| {
                let a = BallPoint::new(p[..3].to_vec(), c).unwrap();
                let b = BallPoint::new(p[3..].to_vec(), c).unwrap();
                hypergeo::geodesic_distance(&a, &b).unwrap()
            };
            assert!(grad_check(f, &analytic, &x, 1e-6).unwrap() < 1e-5);
        }
    }
}
