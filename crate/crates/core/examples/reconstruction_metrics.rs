//! Accuracy, completeness, precision, recall and F-score of a noisy
//! reconstruction at several thresholds.
//!
//! Run with `cargo run --release --example reconstruction_metrics`.

use hyperpc::chamfer::PointCloud;
use hyperpc::hierdata::{sample_primitive, Primitive};
use hyperpc::metrics::evaluate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> hyperpc::Result<()> {
    let gt = sample_primitive(Primitive::Cylinder { radius: 0.3, height: 1.0 }, 4000, 7)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    // keep only the upper half: completeness suffers, accuracy does not
    let pred = PointCloud::new(
        gt.points()
            .iter()
            .filter(|p| p[2] > 0.0)
            .map(|p| [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng), p[2] + noise.sample(&mut rng)])
            .collect(),
    )?;

    for t in [0.01, 0.02, 0.05, 0.1] {
        let r = evaluate(&pred, &gt, t)?;
        println!(
            "t={t:<5} acc={:.4} comp={:.4} cd={:.4} prec={:.3} recall={:.3} f1={:.3}",
            r.acc, r.comp, r.cd, r.prec, r.recall, r.f1
        );
    }
    Ok(())
}
