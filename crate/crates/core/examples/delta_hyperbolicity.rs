//! Gromov δ of a tree, a square and random Euclidean and hyperbolic points.
//!
//! Run with `cargo run --release --example delta_hyperbolicity`.

use hyperpc::hyperbolicity::{
    four_point_delta, gromov_delta, max_distance_sum_base, sampled_delta, DistanceMatrix, Metric,
};
use hyperpc::hypergeo::{self, Curvature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hyperpc::Result<()> {
    // star tree: hub 0 with three leaves on edges of length 1, 2, 3
    let edge = [0.0, 1.0, 2.0, 3.0];
    let tree = DistanceMatrix::from_fn(4, |i, j| if i == j { 0.0 } else if i == 0 || j == 0 { edge[i + j] } else { edge[i] + edge[j] })?;
    println!("star tree: delta = {}", gromov_delta(&tree, 0)?);

    let s = std::f64::consts::SQRT_2;
    let square = DistanceMatrix::from_rows(vec![
        vec![0.0, 1.0, s, 1.0],
        vec![1.0, 0.0, 1.0, s],
        vec![s, 1.0, 0.0, 1.0],
        vec![1.0, s, 1.0, 0.0],
    ])?;
    let base = max_distance_sum_base(&square);
    println!(
        "unit square: delta = {:.9} (four-point {:.9})",
        gromov_delta(&square, base)?,
        four_point_delta(&square)
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Vec<f64>> = (0..2000)
        .map(|_| (0..8).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let euclid = sampled_delta(&points, Metric::Euclidean, 500, 3, 42)?;
    let hyper = sampled_delta(
        &points,
        Metric::Hyperbolic { curvature: Curvature::from_magnitude(1.0)?, eps: hypergeo::DEFAULT_EPS },
        500,
        3,
        42,
    )?;
    println!("random cube, Euclidean: delta_rel = {:.4}", euclid.delta_rel);
    println!("random cube, hyperbolic: delta_rel = {:.4}", hyper.delta_rel);
    Ok(())
}
