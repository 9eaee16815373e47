//! The adaptive margin, the part/whole regularizer and the triplet hinge on
//! hand-placed points.
//!
//! Run with `cargo run --example loss_terms`.

use hyperpc::hypergeo::{self, BallPoint, Curvature};
use hyperpc::losses::{adaptive_margin, reg_loss, total_loss, triplet_loss, MarginHead};

fn main() -> hyperpc::Result<()> {
    let curv = Curvature::default();
    let part = BallPoint::new(vec![0.2, 0.1], curv)?;
    let whole = BallPoint::new(vec![1.6, 0.9], curv)?;
    let other = BallPoint::new(vec![-1.5, 0.8], curv)?;

    let head = MarginHead::zeros(4, 1000.0)?;
    let gamma = adaptive_margin(part.coords(), whole.coords(), &head)?;
    println!("margin at a zero head: {gamma}");
    println!(
        "norms: part {:.4}, whole {:.4}",
        hypergeo::hyperbolic_norm(&part),
        hypergeo::hyperbolic_norm(&whole)
    );

    for n in [10, 100, 1000] {
        println!("L_Z(part, whole) with N = {n:>4}: {:.4}", reg_loss(&part, &whole, gamma, n)?);
    }
    println!("L_Z with roles swapped, N = 1000: {:.4}", reg_loss(&whole, &part, gamma, 1000)?);

    let lt_good = triplet_loss(&whole, &part, &other, 4.0)?;
    let lt_bad = triplet_loss(&whole, &other, &part, 4.0)?;
    println!("L_T, correct negative: {lt_good:.4}; swapped: {lt_bad:.4}");
    let report = total_loss(reg_loss(&part, &whole, gamma, 1000)?, lt_good, 0.0);
    println!("{report:?}");
    Ok(())
}
