//! Poincaré-ball geometry.
//!
//! The ball of curvature `k < 0` is the open set `{x : ‖x‖ < 1/√c}` with
//! `c = |k|`. Everything here works in `f64`: `artanh` near the boundary
//! amplifies rounding error and single precision is not enough for the
//! gradient checks in [`crate::losses`].
//!
//! The forward maps (projection, Möbius addition, log map at the origin,
//! geodesic distance) are paired with the vector-Jacobian products the
//! trainer needs. The distance gradient is derived from the `arcosh` form
//! of the metric, not by differentiating the Möbius expression, so that
//! finite differences of [`geodesic_distance`] check an independent route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default boundary margin used by [`project_to_ball`].
pub const DEFAULT_EPS: f64 = 1e-5;

/// Curvature used by the reference training setup (`k = -0.14`).
pub const DEFAULT_K: f64 = -0.14;

/// Negative sectional curvature of a Poincaré ball.
///
/// Stored as the magnitude `c = |k| > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    c: f64,
}

impl Curvature {
    /// Build from the signed curvature `k < 0`.
    pub fn from_k(k: f64) -> Result<Self> {
        if !k.is_finite() || k >= 0.0 {
            return Err(Error::invalid(format!(
                "curvature k must be finite and negative, got {k}"
            )));
        }
        Ok(Self { c: -k })
    }

    /// Build from the magnitude `c = |k| > 0`.
    pub fn from_magnitude(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::invalid(format!(
                "curvature magnitude must be finite and positive, got {c}"
            )));
        }
        Ok(Self { c })
    }

    pub fn k(&self) -> f64 {
        -self.c
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sqrt_c(&self) -> f64 {
        self.c.sqrt()
    }

    /// `1/√c`.
    pub fn ball_radius(&self) -> f64 {
        1.0 / self.c.sqrt()
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Self { c: -DEFAULT_K }
    }
}

/// A point strictly inside the Poincaré ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

impl BallPoint {
    /// Wrap coordinates that already lie inside the ball.
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ball point has non-finite coordinates"));
        }
        if curvature.c() * norm_sq(&coords) >= 1.0 {
            return Err(Error::invalid(format!(
                "point of norm {} lies outside the ball of radius {}",
                norm(&coords),
                curvature.ball_radius()
            )));
        }
        Ok(Self { coords, curvature })
    }

    pub fn origin(dim: usize, curvature: Curvature) -> Self {
        Self {
            coords: vec![0.0; dim],
            curvature,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Möbius negation, which coincides with coordinate negation.
    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|v| -v).collect(),
            curvature: self.curvature,
        }
    }

    /// Euclidean norm of the coordinates.
    pub fn euclidean_norm(&self) -> f64 {
        norm(&self.coords)
    }
}

/// A vector in the tangent space at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(pub Vec<f64>);

impl TangentVector {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::invalid(format!("eps must lie in (0, 0.1), got {eps}")));
    }
    Ok(())
}

/// Largest norm a projected point may have: `(1 - eps) / √c`.
pub fn projection_bound(curv: Curvature, eps: f64) -> f64 {
    (1.0 - eps) * curv.ball_radius()
}

/// Map a Euclidean vector into the ball.
///
/// Points with `‖x‖ < (1-eps)/√c` are returned unchanged; all others are
/// rescaled onto that radius. The clipped branch nudges the result below
/// the bound when rounding lands on it, which makes the map idempotent
/// bit for bit.
pub fn project_to_ball(x: &[f64], curv: Curvature, eps: f64) -> Result<BallPoint> {
    check_eps(eps)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot project a non-finite vector"));
    }
    Ok(BallPoint {
        coords: project_raw(x, curv, eps),
        curvature: curv,
    })
}

pub(crate) fn project_raw(x: &[f64], curv: Curvature, eps: f64) -> Vec<f64> {
    let bound = projection_bound(curv, eps);
    let r = norm(x);
    if r < bound {
        return x.to_vec();
    }
    let scale = bound / r;
    let mut p: Vec<f64> = x.iter().map(|v| v * scale).collect();
    while norm(&p) >= bound {
        for v in p.iter_mut() {
            *v *= 1.0 - f64::EPSILON;
        }
    }
    p
}

/// True when `x` would be rescaled by [`project_to_ball`].
pub fn is_clipped(x: &[f64], curv: Curvature, eps: f64) -> bool {
    norm(x) >= projection_bound(curv, eps)
}

/// `J^T u` for the projection map at the raw input `x`.
///
/// Identity inside the bound; the Jacobian of `x ↦ b·x/‖x‖` when clipped.
pub fn projection_vjp(x: &[f64], curv: Curvature, eps: f64, upstream: &[f64]) -> Vec<f64> {
    let bound = projection_bound(curv, eps);
    let r = norm(x);
    if r < bound {
        return upstream.to_vec();
    }
    let radial = dot(x, upstream) / (r * r);
    let scale = bound / r;
    upstream
        .iter()
        .zip(x)
        .map(|(u, xi)| scale * (u - radial * xi))
        .collect()
}

fn mobius_add_raw(z: &[f64], x: &[f64], c: f64) -> Vec<f64> {
    let zx = dot(z, x);
    let zz = norm_sq(z);
    let xx = norm_sq(x);
    let denom = 1.0 + 2.0 * c * zx + c * c * zz * xx;
    let a = (1.0 + 2.0 * c * zx + c * xx) / denom;
    let b = (1.0 - c * zz) / denom;
    z.iter().zip(x).map(|(zi, xi)| a * zi + b * xi).collect()
}

fn check_pair(a: &BallPoint, b: &BallPoint) -> Result<()> {
    if a.curvature != b.curvature {
        return Err(Error::CurvatureMismatch(a.curvature.k(), b.curvature.k()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Möbius addition `z ⊕ x`.
pub fn mobius_add(z: &BallPoint, x: &BallPoint) -> Result<BallPoint> {
    check_pair(z, x)?;
    let curv = z.curvature;
    let mut coords = mobius_add_raw(&z.coords, &x.coords, curv.c());
    if curv.c() * norm_sq(&coords) >= 1.0 {
        coords = project_raw(&coords, curv, DEFAULT_EPS);
    }
    Ok(BallPoint {
        coords,
        curvature: curv,
    })
}

/// `artanh(t)/t`, continuous at 0.
fn artanh_ratio(t: f64) -> f64 {
    if t < 1e-4 {
        1.0 + t * t / 3.0
    } else {
        t.atanh() / t
    }
}

/// Logarithmic map at the origin: `artanh(√c‖x‖)/(√c‖x‖) · x`.
pub fn log_map_origin(x: &BallPoint) -> TangentVector {
    TangentVector(log_map_origin_raw(&x.coords, x.curvature))
}

pub(crate) fn log_map_origin_raw(x: &[f64], curv: Curvature) -> Vec<f64> {
    let f = artanh_ratio(curv.sqrt_c() * norm(x));
    x.iter().map(|v| f * v).collect()
}

/// `J^T u` for the origin log map at `x` (the Jacobian is symmetric).
pub fn log_map_origin_vjp(x: &[f64], curv: Curvature, upstream: &[f64]) -> Vec<f64> {
    let c = curv.c();
    let s = curv.sqrt_c();
    let r = norm(x);
    let t = s * r;
    // v = f(r) x  ⇒  J = f I + (f'(r)/r) x xᵀ
    let (f, fprime_over_r) = if t < 1e-3 {
        (
            1.0 + t * t / 3.0 + t.powi(4) / 5.0,
            2.0 * c / 3.0 + 4.0 * c * c * r * r / 5.0,
        )
    } else {
        let g = t.atanh() / s;
        let gprime = 1.0 / (1.0 - c * r * r);
        (g / r, (gprime * r - g) / (r * r * r))
    };
    let xu = dot(x, upstream);
    upstream
        .iter()
        .zip(x)
        .map(|(u, xi)| f * u + fprime_over_r * xu * xi)
        .collect()
}

/// Geodesic distance `2/√c · artanh(√c ‖(-x) ⊕ y‖)`.
///
/// The Möbius norm is evaluated through the identity
/// `‖(-x) ⊕ y‖² = ‖x - y‖² / (1 - 2c⟨x,y⟩ + c²‖x‖²‖y‖²)`, which is symmetric
/// in its arguments bit for bit and exactly zero on coincident points.
pub fn geodesic_distance(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_pair(x, y)?;
    Ok(distance_raw(&x.coords, &y.coords, x.curvature))
}

pub(crate) fn distance_raw(x: &[f64], y: &[f64], curv: Curvature) -> f64 {
    let c = curv.c();
    let s = curv.sqrt_c();
    let denom = 1.0 - 2.0 * c * dot(x, y) + c * c * (norm_sq(x) * norm_sq(y));
    let arg = s * (dist_sq(x, y) / denom).sqrt();
    assert!(
        arg < 1.0,
        "artanh argument {arg} left the unit interval; inputs were not valid ball points"
    );
    2.0 / s * arg.atanh()
}

/// Gradients of the geodesic distance with respect to `x` and `y`.
///
/// Uses `d = arcosh(1 + 2c‖x-y‖²/((1-c‖x‖²)(1-c‖y‖²)))/√c`; zero at `x = y`.
pub fn distance_grad(x: &[f64], y: &[f64], curv: Curvature) -> (Vec<f64>, Vec<f64>) {
    let c = curv.c();
    let s = curv.sqrt_c();
    let delta = dist_sq(x, y);
    if delta == 0.0 {
        return (vec![0.0; x.len()], vec![0.0; y.len()]);
    }
    let alpha = 1.0 - c * norm_sq(x);
    let beta = 1.0 - c * norm_sq(y);
    let t = 2.0 * c * delta / (alpha * beta);
    let outer = 4.0 * c / (alpha * beta * s * (t * (2.0 + t)).sqrt());
    let gx = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| outer * ((xi - yi) + c * delta / alpha * xi))
        .collect();
    let gy = y
        .iter()
        .zip(x)
        .map(|(yi, xi)| outer * ((yi - xi) + c * delta / beta * yi))
        .collect();
    (gx, gy)
}

/// Geodesic distance from the origin.
pub fn hyperbolic_norm(x: &BallPoint) -> f64 {
    hyperbolic_norm_raw(&x.coords, x.curvature)
}

pub(crate) fn hyperbolic_norm_raw(x: &[f64], curv: Curvature) -> f64 {
    let s = curv.sqrt_c();
    let arg = s * norm(x);
    assert!(arg < 1.0, "point of norm {} outside the ball", norm(x));
    2.0 / s * arg.atanh()
}

/// Gradient of [`hyperbolic_norm`]: `2/(1 - c‖x‖²) · x/‖x‖`, zero at the origin.
pub fn hyperbolic_norm_grad(x: &[f64], curv: Curvature) -> Vec<f64> {
    let r2 = norm_sq(x);
    if r2 == 0.0 {
        return vec![0.0; x.len()];
    }
    let scale = 2.0 / ((1.0 - curv.c() * r2) * r2.sqrt());
    x.iter().map(|v| scale * v).collect()
}

/// Conformal factor `λ(z) = 2/(1 - c‖z‖²)`.
pub fn conformal_factor(z: &BallPoint) -> f64 {
    2.0 / (1.0 - z.curvature.c() * norm_sq(&z.coords))
}
