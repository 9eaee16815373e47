//! Compare every analytic gradient against central finite differences.
//!
//! Run with `cargo run --release --example gradient_check`.

use hyperpc::gradcheck::{run, GradcheckConfig};

fn main() -> hyperpc::Result<()> {
    let report = run(&GradcheckConfig::default())?;
    println!("{} cases, step {:e}", report.n_cases, report.step);
    println!("  hyperbolic Chamfer  max rel error {:.3e}", report.max_hypercd);
    println!("  part/whole loss     max rel error {:.3e}", report.max_reg);
    println!("  triplet loss        max rel error {:.3e}", report.max_triplet);
    println!("worst: {:?}", report.worst);

    let flipped = run(&GradcheckConfig { n_cases: 5, inject_sign_flip: true, ..Default::default() })?;
    println!("with negated gradients the worst error is {:.3}", flipped.max_rel_error);
    Ok(())
}
