//! Finite-difference audit of every analytic gradient in the crate.
//!
//! Each case draws, from its own seeded stream, one configuration for each
//! of the three differentiable objectives: a single-pair hyperbolic
//! Chamfer distance, the part/whole regularizer including the margin head,
//! and the triplet hinge. Hinge configurations are redrawn until the hinge
//! is at least [`KINK_GAP`] away from its kink; raw inputs are kept well
//! away from the projection radius, on either side of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chamfer::{hyper_chamfer, hyper_chamfer_grad, PointCloud};
use crate::error::{Error, Result};
use crate::hypergeo::{self, Curvature};
use crate::losses::{
    self, Batch, LossConfig, MarginHead, NormKind, PairTerm, TripletDistance, TripletTerm,
};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_CASES: usize = 100;
/// Failure threshold used by the command-line check.
pub const CLI_TOLERANCE: f64 = 1e-4;
/// Minimum hinge value accepted for a configuration.
pub const KINK_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    HyperCd,
    Reg,
    Triplet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub objective: Objective,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub n_cases: usize,
    pub step: f64,
    pub max_rel_error: f64,
    pub worst: CaseResult,
    pub max_hypercd: f64,
    pub max_reg: f64,
    pub max_triplet: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub n_cases: usize,
    pub step: f64,
    pub curvature: Curvature,
    /// Negate every analytic gradient; the suite must then fail.
    pub inject_sign_flip: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_cases: DEFAULT_CASES,
            step: DEFAULT_STEP,
            curvature: Curvature::default(),
            inject_sign_flip: false,
        }
    }
}

/// Raw vector whose norm is at most 0.9 of `bound`, or, when `clipped`,
/// between 1.1 and 1.5 times it.
fn raw_vector(rng: &mut ChaCha8Rng, dim: usize, bound: f64, clipped: bool) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = hypergeo::norm(&dir).max(1e-3);
    let r = if clipped {
        bound * rng.random_range(1.1..1.5)
    } else {
        bound * rng.random_range(0.05..0.9)
    };
    dir.iter().map(|v| v * r / n).collect()
}

fn flip(g: Vec<f64>, on: bool) -> Vec<f64> {
    if on {
        g.into_iter().map(|v| -v).collect()
    } else {
        g
    }
}

fn check_hypercd(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let curv = cfg.curvature;
    let clipped = rng.random_bool(0.25);
    let eps = if clipped { 0.05 } else { hypergeo::DEFAULT_EPS };
    let bound = hypergeo::projection_bound(curv, eps);
    let x = raw_vector(rng, 3, bound, clipped);
    let y = raw_vector(rng, 3, bound, false);
    let clouds = |v: &[f64]| -> Result<(PointCloud, PointCloud)> {
        Ok((
            PointCloud::new(vec![[v[0], v[1], v[2]]])?,
            PointCloud::new(vec![[v[3], v[4], v[5]]])?,
        ))
    };
    let point: Vec<f64> = x.iter().chain(&y).copied().collect();
    let (cx, cy) = clouds(&point)?;
    let (gx, gy) = hyper_chamfer_grad(&cx, &cy, curv, eps)?;
    let analytic: Vec<f64> = gx[0].iter().chain(&gy[0]).copied().collect();
    let f = |v: &[f64]| {
        let (a, b) = clouds(v).expect("finite perturbation");
        hyper_chamfer(&a, &b, curv, eps).expect("valid clouds")
    };
    losses::grad_check(f, &flip(analytic, cfg.inject_sign_flip), &point, cfg.step)
}

/// Parameters `[embeddings…, head weights…, bias]` of a small problem.
struct Problem {
    batch: Batch,
    embeddings: Vec<Vec<f64>>,
    head: MarginHead,
    loss: LossConfig,
}

impl Problem {
    fn params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.embeddings.iter().flatten().copied().collect();
        v.extend(&self.head.weights);
        v.push(self.head.bias);
        v
    }

    fn unpack(&self, v: &[f64]) -> (Vec<Vec<f64>>, MarginHead) {
        let dim = self.embeddings[0].len();
        let n = self.embeddings.len() * dim;
        let emb = v[..n].chunks(dim).map(<[f64]>::to_vec).collect();
        let mut head = self.head.clone();
        head.weights = v[n..v.len() - 1].to_vec();
        head.bias = v[v.len() - 1];
        (emb, head)
    }

    fn total(&self, v: &[f64]) -> f64 {
        let (emb, head) = self.unpack(v);
        losses::loss_gradients(&self.batch, &emb, &head, &self.loss)
            .expect("valid problem")
            .0
            .total
    }

    fn check(&self, cfg: &GradcheckConfig) -> Result<f64> {
        let (_, grads) =
            losses::loss_gradients(&self.batch, &self.embeddings, &self.head, &self.loss)?;
        losses::grad_check(
            |v| self.total(v),
            &flip(grads.flatten(), cfg.inject_sign_flip),
            &self.params(),
            cfg.step,
        )
    }
}

const MAX_REDRAWS: usize = 10_000;

fn check_reg(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let dim = rng.random_range(2..=6);
    let reg_norm = if rng.random_bool(0.5) {
        NormKind::Hyperbolic
    } else {
        NormKind::Euclidean
    };
    let loss = LossConfig {
        curvature: cfg.curvature,
        reg_norm,
        ..LossConfig::default()
    };
    let bound = hypergeo::projection_bound(cfg.curvature, loss.eps);
    for _ in 0..MAX_REDRAWS {
        let mut head = MarginHead::zeros(2 * dim, losses::DEFAULT_GAMMA0)?;
        head.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        head.bias = rng.random_range(-1.0..1.0);
        let clipped = rng.random_bool(0.25);
        let embeddings = vec![
            raw_vector(rng, dim, bound, false),
            raw_vector(rng, dim, bound, clipped),
        ];
        let p = Problem {
            batch: Batch {
                pairs: vec![PairTerm {
                    part: 0,
                    whole: 1,
                    n_points: rng.random_range(200..=2000),
                }],
                triplets: Vec::new(),
            },
            embeddings,
            head,
            loss,
        };
        if p.total(&p.params()) >= KINK_GAP {
            return p.check(cfg);
        }
    }
    Err(Error::Numerical("could not draw an active regularizer case".into()))
}

fn check_triplet(rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64> {
    let dim = rng.random_range(2..=6);
    let triplet_distance = if rng.random_bool(0.5) {
        TripletDistance::Tangent
    } else {
        TripletDistance::Geodesic
    };
    // finite differences lose accuracy near the boundary, so clipped
    // cases use a wider margin
    let clipped = rng.random_bool(0.25);
    let loss = LossConfig {
        curvature: cfg.curvature,
        triplet_distance,
        eps: if clipped { 0.05 } else { hypergeo::DEFAULT_EPS },
        ..LossConfig::default()
    };
    let bound = hypergeo::projection_bound(cfg.curvature, loss.eps);
    for _ in 0..MAX_REDRAWS {
        let which = rng.random_range(0..3);
        let embeddings: Vec<Vec<f64>> = (0..3)
            .map(|i| raw_vector(rng, dim, bound, clipped && i == which))
            .collect();
        let p = Problem {
            batch: Batch {
                pairs: Vec::new(),
                triplets: vec![TripletTerm {
                    anchor: 0,
                    positive: 1,
                    negative: 2,
                }],
            },
            embeddings,
            head: MarginHead::zeros(2 * dim, losses::DEFAULT_GAMMA0)?,
            loss,
        };
        if p.total(&p.params()) >= KINK_GAP {
            return p.check(cfg);
        }
    }
    Err(Error::Numerical("could not draw an active triplet case".into()))
}

/// Run the suite and report the largest relative error per objective.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.n_cases == 0 {
        return Err(Error::invalid("n_cases must be at least 1"));
    }
    let mut maxima = [0.0f64; 3];
    let mut worst = CaseResult {
        case: 0,
        objective: Objective::HyperCd,
        rel_error: -1.0,
    };
    for case in 0..cfg.n_cases {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(case as u64);
        let errors = [
            (Objective::HyperCd, check_hypercd(&mut rng, cfg)?),
            (Objective::Reg, check_reg(&mut rng, cfg)?),
            (Objective::Triplet, check_triplet(&mut rng, cfg)?),
        ];
        for (k, (objective, e)) in errors.into_iter().enumerate() {
            if e.is_nan() {
                return Err(Error::Numerical(format!("case {case}: {objective:?} produced NaN")));
            }
            maxima[k] = maxima[k].max(e);
            if e > worst.rel_error {
                worst = CaseResult {
                    case,
                    objective,
                    rel_error: e,
                };
            }
        }
    }
    Ok(GradcheckReport {
        seed: cfg.seed,
        n_cases: cfg.n_cases,
        step: cfg.step,
        max_rel_error: worst.rel_error,
        worst,
        max_hypercd: maxima[0],
        max_reg: maxima[1],
        max_triplet: maxima[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_deterministic() {
        let cfg = GradcheckConfig {
            n_cases: DEFAULT_CASES,
            ..Default::default()
        };
        let a = run(&cfg).unwrap();
        assert!(a.max_rel_error < 1e-5, "{a:?}");
        assert_eq!(a, run(&cfg).unwrap());
    }

    #[test]
    fn sign_flip_is_caught() {
        let cfg = GradcheckConfig {
            n_cases: 3,
            inject_sign_flip: true,
            ..Default::default()
        };
        assert!(run(&cfg).unwrap().max_rel_error > CLI_TOLERANCE);
    }

    #[test]
    fn zero_cases_rejected() {
        let cfg = GradcheckConfig {
            n_cases: 0,
            ..Default::default()
        };
        assert!(run(&cfg).is_err());
    }
}
