//! Desk-scale embedding trainer.
//!
//! Every manifest sample owns a free Euclidean vector; together with the
//! [`MarginHead`] they are fitted by Adam on `mean(L_Z) + mean(L_T)`. The
//! part/whole regularizer pulls parts towards the ball's center and pushes
//! wholes outwards, while the triplet term clusters objects by category.
//!
//! One epoch visits every (part, whole) pair once as a triplet with a
//! freshly drawn negative; triplets are processed in mini-batches, and each
//! step also includes the regularizer over all pairs. The per-epoch
//! [`LossReport`] is measured after the epoch on a fixed monitor set drawn
//! at initialization, so the curve is a function of the parameters alone.
//!
//! A fifth of the (anchor, negative) combinations, chosen by a seeded hash,
//! never appears during training and is used to score triplet accuracy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierdata::{HierarchyManifest, Role};
use crate::hypergeo::{self, Curvature};
use crate::losses::{
    self, Batch, Gradients, LossConfig, LossReport, MarginHead, NormKind, PairTerm,
    TripletDistance, TripletTerm,
};

/// Learning rate used by the full-scale reconstruction setup.
pub const REFERENCE_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_triplets: usize,
    pub learning_rate: f64,
    pub gamma0: f64,
    pub margin_eps: f64,
    pub dim: usize,
    pub seed: u64,
    pub curvature: Curvature,
    pub eps: f64,
    pub reg_norm: NormKind,
    pub triplet_distance: TripletDistance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_triplets: 32,
            learning_rate: 1e-3,
            gamma0: losses::DEFAULT_GAMMA0,
            margin_eps: losses::DEFAULT_MARGIN_EPS,
            dim: 16,
            seed: 42,
            curvature: Curvature::default(),
            eps: hypergeo::DEFAULT_EPS,
            reg_norm: NormKind::Hyperbolic,
            triplet_distance: TripletDistance::Tangent,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_triplets == 0 {
            return Err(Error::invalid("batch_triplets must be at least 1"));
        }
        // zero is accepted: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.dim < 2 {
            return Err(Error::invalid(format!("dim must be at least 2, got {}", self.dim)));
        }
        if !(self.margin_eps > 0.0) {
            return Err(Error::invalid("margin_eps must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 0.1) {
            return Err(Error::invalid("eps must lie in (0, 0.1)"));
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            curvature: self.curvature,
            eps: self.eps,
            margin_eps: self.margin_eps,
            reg_norm: self.reg_norm,
            triplet_distance: self.triplet_distance,
        }
    }
}

/// Adam moments over the flattened parameter vector
/// (embeddings row-major, then head weights, then head bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// Apply one update to `state` in place.
    pub fn apply(&mut self, state: &mut EmbeddingState, grads: &Gradients) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        let params = state
            .table
            .iter_mut()
            .flatten()
            .chain(state.head.weights.iter_mut())
            .chain(std::iter::once(&mut state.head.bias));
        let g = grads
            .embeddings
            .iter()
            .flatten()
            .chain(grads.head_weights.iter())
            .chain(std::iter::once(&grads.head_bias));
        for (((p, g), m), v) in params.zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / b1t;
            let vhat = *v / b2t;
            *p -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

/// Trainable parameters plus the settings needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub ids: Vec<String>,
    pub table: Vec<Vec<f64>>,
    pub head: MarginHead,
    pub curvature: Curvature,
    pub eps: f64,
    pub step: u64,
    pub split_seed: u64,
    pub triplet_distance: TripletDistance,
}

impl EmbeddingState {
    pub fn dim(&self) -> usize {
        self.table.first().map_or(0, Vec::len)
    }

    pub fn n_params(&self) -> usize {
        self.table.len() * self.dim() + self.head.input_dim() + 1
    }

    /// Ball coordinates of sample `i`.
    pub fn ball_coords(&self, i: usize) -> Vec<f64> {
        hypergeo::project_raw(&self.table[i], self.curvature, self.eps)
    }

    pub fn hyperbolic_norm(&self, i: usize) -> f64 {
        hypergeo::hyperbolic_norm_raw(&self.ball_coords(i), self.curvature)
    }

    /// Re-project every embedding that reached the clipping radius.
    pub fn guard(&mut self) {
        for row in &mut self.table {
            if hypergeo::is_clipped(row, self.curvature, self.eps) {
                *row = hypergeo::project_raw(row, self.curvature, self.eps);
            }
        }
    }

    fn check_manifest(&self, manifest: &HierarchyManifest) -> Result<()> {
        if self.ids.len() != manifest.len()
            || self.ids.iter().zip(manifest.samples()).any(|(a, s)| *a != s.id)
        {
            return Err(Error::invalid("embedding state does not match the manifest"));
        }
        Ok(())
    }
}

/// Seeded Gaussian embeddings with RMS norm 0.01 and a zero head.
pub fn init_state(manifest: &HierarchyManifest, cfg: &TrainConfig) -> Result<EmbeddingState> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 0.01 / (cfg.dim as f64).sqrt())
        .map_err(|e| Error::invalid(e.to_string()))?;
    let table = manifest
        .samples()
        .iter()
        .map(|_| (0..cfg.dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let mut state = EmbeddingState {
        ids: manifest.samples().iter().map(|s| s.id.clone()).collect(),
        table,
        head: MarginHead::zeros(2 * cfg.dim, cfg.gamma0)?,
        curvature: cfg.curvature,
        eps: cfg.eps,
        step: 0,
        split_seed: cfg.seed,
        triplet_distance: cfg.triplet_distance,
    };
    state.guard();
    Ok(state)
}

/// FNV-1a, stable across platforms and compiler versions.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Whether the (anchor, negative) combination is reserved for evaluation.
pub fn is_held_out(seed: u64, anchor_id: &str, negative_id: &str) -> bool {
    fnv1a(&[&seed.to_le_bytes(), anchor_id.as_bytes(), negative_id.as_bytes()]) % 5 == 0
}

/// Index structure over the manifest used for sampling.
#[derive(Debug, Clone)]
pub struct SamplingPools {
    pub pairs: Vec<PairTerm>,
    /// For each pair, the parts of other categories usable as negatives.
    pub negatives: Vec<Vec<usize>>,
}

impl SamplingPools {
    pub fn build(manifest: &HierarchyManifest, split_seed: u64) -> Result<Self> {
        let samples = manifest.samples();
        let mut pairs = Vec::new();
        for (whole, parts) in manifest.objects() {
            for p in parts {
                pairs.push(PairTerm {
                    part: p,
                    whole,
                    n_points: samples[p].n_points,
                });
            }
        }
        if pairs.is_empty() {
            return Err(Error::invalid("manifest has no (part, whole) pairs"));
        }
        let mut negatives = Vec::with_capacity(pairs.len());
        for pair in &pairs {
            let anchor = &samples[pair.whole];
            let pool: Vec<usize> = samples
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    s.role == Role::Part
                        && s.category != anchor.category
                        && !is_held_out(split_seed, &anchor.id, &s.id)
                })
                .map(|(i, _)| i)
                .collect();
            if pool.is_empty() {
                return Err(Error::invalid(format!(
                    "no negatives available for {}: triplet mining needs parts from at least 2 categories",
                    anchor.id
                )));
            }
            negatives.push(pool);
        }
        Ok(Self { pairs, negatives })
    }

    /// One triplet per pair, in pair order, with uniformly drawn negatives.
    pub fn draw_triplets(&self, rng: &mut ChaCha8Rng) -> Vec<TripletTerm> {
        self.pairs
            .iter()
            .zip(&self.negatives)
            .map(|(p, pool)| TripletTerm {
                anchor: p.whole,
                positive: p.part,
                negative: pool[rng.random_range(0..pool.len())],
            })
            .collect()
    }
}

/// One optimizer step on `batch`: gradients, Adam update, projection guard.
pub fn train_step(
    state: &mut EmbeddingState,
    adam: &mut Adam,
    batch: &Batch,
    cfg: &LossConfig,
) -> Result<LossReport> {
    let (report, grads) = losses::loss_gradients(batch, &state.table, &state.head, cfg)?;
    adam.apply(state, &grads);
    state.guard();
    state.step += 1;
    Ok(report)
}

fn divergence_error(state: &EmbeddingState, epoch: usize) -> Error {
    let culprit = state
        .table
        .iter()
        .position(|row| row.iter().any(|v| !v.is_finite()))
        .map(|i| state.ids[i].clone())
        .unwrap_or_else(|| "margin head".to_string());
    Error::Numerical(format!(
        "loss became non-finite in epoch {epoch}; offending sample: {culprit}"
    ))
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: EmbeddingState,
    pub losses: Vec<LossReport>,
}

/// Fit embeddings and margin head, recording one [`LossReport`] per epoch.
pub fn train(
    mut state: EmbeddingState,
    manifest: &HierarchyManifest,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    state.check_manifest(manifest)?;
    let pools = SamplingPools::build(manifest, state.split_seed)?;
    let loss_cfg = cfg.loss_config();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let monitor = Batch {
        pairs: pools.pairs.clone(),
        triplets: pools.draw_triplets(&mut rng),
    };
    let mut adam = Adam::new(state.n_params(), cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut triplets = pools.draw_triplets(&mut rng);
        triplets.shuffle(&mut rng);
        for chunk in triplets.chunks(cfg.batch_triplets) {
            let batch = Batch {
                pairs: pools.pairs.clone(),
                triplets: chunk.to_vec(),
            };
            let report = train_step(&mut state, &mut adam, &batch, &loss_cfg)?;
            if !report.total.is_finite() {
                return Err(divergence_error(&state, epoch));
            }
        }
        let (report, _) =
            losses::loss_gradients(&monitor, &state.table, &state.head, &loss_cfg)?;
        if !report.total.is_finite() || state.table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(divergence_error(&state, epoch));
        }
        curve.push(report);
    }
    Ok(TrainOutcome {
        state,
        losses: curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyEval {
    /// Fraction of (part, whole) pairs where the part has the smaller norm.
    pub norm_order_rate: f64,
    /// Fraction of objects whose norms increase along `P₁, …, W`.
    pub chain_order_rate: f64,
    /// Fraction of held-out triplets with `d(W, P⁺) < d(W, P⁻)`.
    pub triplet_accuracy: f64,
    pub n_pairs: usize,
    pub n_heldout_triplets: usize,
}

/// Score how well the embedding reflects the part–whole hierarchy.
pub fn evaluate_hierarchy(state: &EmbeddingState, manifest: &HierarchyManifest) -> Result<HierarchyEval> {
    state.check_manifest(manifest)?;
    let samples = manifest.samples();
    let ball: Vec<Vec<f64>> = (0..samples.len()).map(|i| state.ball_coords(i)).collect();
    let norms: Vec<f64> = ball
        .iter()
        .map(|b| hypergeo::hyperbolic_norm_raw(b, state.curvature))
        .collect();

    let objects = manifest.objects();
    let (mut ordered, mut n_pairs, mut chains) = (0usize, 0usize, 0usize);
    for (&whole, parts) in &objects {
        for &p in parts {
            n_pairs += 1;
            if norms[p] < norms[whole] {
                ordered += 1;
            }
        }
        let mut chain: Vec<usize> = parts.clone();
        chain.sort_by_key(|&p| samples[p].n_points);
        chain.push(whole);
        if chain.windows(2).all(|w| norms[w[0]] < norms[w[1]]) {
            chains += 1;
        }
    }

    let dist = |a: usize, b: usize| {
        losses::pair_distance(&ball[a], &ball[b], state.curvature, state.triplet_distance)
    };
    let part_ids: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].role == Role::Part)
        .collect();
    let (mut correct, mut total) = (0usize, 0usize);
    for (&whole, parts) in &objects {
        let anchor = &samples[whole];
        let negatives: Vec<(usize, f64)> = part_ids
            .iter()
            .filter(|&&n| {
                samples[n].category != anchor.category
                    && is_held_out(state.split_seed, &anchor.id, &samples[n].id)
            })
            .map(|&n| (n, dist(whole, n)))
            .collect();
        for &p in parts {
            let d_pos = dist(whole, p);
            for &(_, d_neg) in &negatives {
                total += 1;
                if d_pos < d_neg {
                    correct += 1;
                }
            }
        }
    }

    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(HierarchyEval {
        norm_order_rate: frac(ordered, n_pairs),
        chain_order_rate: frac(chains, objects.len()),
        triplet_accuracy: frac(correct, total),
        n_pairs,
        n_heldout_triplets: total,
    })
}

/// One sample placed in the unit disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint {
    pub id: String,
    pub category: String,
    pub role: Role,
    pub n_points: usize,
    pub hnorm: f64,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Rescale a 2-D embedding from the ball of radius `1/√c` to the unit disk.
pub fn export_disk(state: &EmbeddingState, manifest: &HierarchyManifest) -> Result<Vec<DiskPoint>> {
    if state.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "disk export needs a 2-D embedding, this one has dim {}; train with dim = 2",
            state.dim()
        )));
    }
    state.check_manifest(manifest)?;
    let s = state.curvature.sqrt_c();
    Ok(manifest
        .samples()
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let b = state.ball_coords(i);
            let (x, y) = (b[0] * s, b[1] * s);
            DiskPoint {
                id: rec.id.clone(),
                category: rec.category.clone(),
                role: rec.role,
                n_points: rec.n_points,
                hnorm: hypergeo::hyperbolic_norm_raw(&b, state.curvature),
                x,
                y,
                radius: (x * x + y * y).sqrt(),
            }
        })
        .collect())
}
