//! Reconstruction metrics: accuracy, completeness, Chamfer distance,
//! precision, recall and F-score at a distance threshold.
//!
//! Distances are Euclidean norms of point offsets, the same convention as
//! the L1 Chamfer distance, so `cd` agrees with
//! [`chamfer_distance`](crate::chamfer::chamfer_distance) under
//! [`ChamferVariant::L1`](crate::chamfer::ChamferVariant::L1).

use serde::{Deserialize, Serialize};

use crate::chamfer::{build_index, nn_sq_distances, ordered_mean, PointCloud};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub comp: f64,
    pub cd: f64,
    pub prec: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

fn fraction_below(dists: &[f64], threshold: f64) -> f64 {
    dists.iter().filter(|&&d| d < threshold).count() as f64 / dists.len() as f64
}

/// Harmonic mean of precision and recall, zero when both are zero.
pub fn f_score(prec: f64, recall: f64) -> f64 {
    if prec + recall == 0.0 {
        0.0
    } else {
        2.0 * prec * recall / (prec + recall)
    }
}

/// Compare a predicted cloud against ground truth.
///
/// A point counts towards precision (recall) when its nearest neighbor in
/// the other cloud is strictly closer than `threshold`.
pub fn evaluate(pred: &PointCloud, gt: &PointCloud, threshold: f64) -> Result<MetricsReport> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let gt_index = build_index(gt)?;
    let pred_index = build_index(pred)?;
    let to_gt: Vec<f64> = nn_sq_distances(pred, &gt_index)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let to_pred: Vec<f64> = nn_sq_distances(gt, &pred_index)
        .into_iter()
        .map(f64::sqrt)
        .collect();

    let acc = ordered_mean(&to_gt);
    let comp = ordered_mean(&to_pred);
    let prec = fraction_below(&to_gt, threshold);
    let recall = fraction_below(&to_pred, threshold);
    Ok(MetricsReport {
        acc,
        comp,
        cd: acc + comp,
        prec,
        recall,
        f1: f_score(prec, recall),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamfer::{chamfer_distance, ChamferVariant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.to_vec()).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| [rng.random(), rng.random(), rng.random()])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_clouds_are_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_cloud(&mut rng, 100);
        for t in [1e-6, 0.1, 10.0] {
            let r = evaluate(&x, &x, t).unwrap();
            assert_eq!((r.acc, r.comp, r.cd), (0.0, 0.0, 0.0));
            assert_eq!((r.prec, r.recall, r.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn shifted_grid_scores_zero() {
        let t = 0.1;
        let gt: Vec<[f64; 3]> = (0..5)
            .flat_map(|i| (0..5).map(move |j| [i as f64, j as f64, 0.0]))
            .collect();
        let pred: Vec<[f64; 3]> = gt.iter().map(|p| [p[0] + 2.0 * t, p[1], p[2]]).collect();
        let r = evaluate(&cloud(&pred), &cloud(&gt), t).unwrap();
        assert_eq!((r.prec, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_versus_one_example() {
        let r = evaluate(
            &cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            &cloud(&[[0.0, 0.0, 0.0]]),
            0.5,
        )
        .unwrap();
        assert_eq!(r.acc, 0.5);
        assert_eq!(r.comp, 0.0);
        assert_eq!(r.prec, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_threshold() {
        let x = cloud(&[[0.0; 3]]);
        assert!(evaluate(&x, &x, 0.0).is_err());
        assert!(evaluate(&x, &x, -1.0).is_err());
        assert!(evaluate(&x, &x, f64::NAN).is_err());
    }

    #[test]
    fn role_swap_and_chamfer_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = random_cloud(&mut rng, 200);
            let y = random_cloud(&mut rng, 150);
            let a = evaluate(&x, &y, 0.05).unwrap();
            let b = evaluate(&y, &x, 0.05).unwrap();
            assert_eq!(a.acc.to_bits(), b.comp.to_bits());
            assert_eq!(a.prec.to_bits(), b.recall.to_bits());
            let cd = chamfer_distance(&x, &y, ChamferVariant::L1).unwrap();
            assert!((a.cd - cd).abs() <= 1e-12);
        }
    }

    #[test]
    fn precision_recall_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_cloud(&mut rng, 300);
        let y = random_cloud(&mut rng, 300);
        let mut last = (0.0, 0.0);
        for i in 1..40 {
            let r = evaluate(&x, &y, i as f64 * 0.005).unwrap();
            assert!(r.prec >= last.0 && r.recall >= last.1);
            last = (r.prec, r.recall);
        }
    }
}
