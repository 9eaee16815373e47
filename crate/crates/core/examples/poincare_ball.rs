//! Basic Poincaré-ball operations at the default curvature.
//!
//! Run with `cargo run --example poincare_ball`.

use hyperpc::hypergeo::{self, BallPoint, Curvature};

fn main() -> hyperpc::Result<()> {
    let curv = Curvature::default();
    println!("k = {}, ball radius 1/sqrt(c) = {:.6}", curv.k(), curv.ball_radius());

    // anything outside the ball is pulled onto radius (1 - eps)/sqrt(c)
    let far = hypergeo::project_to_ball(&[10.0, 0.0, 0.0], curv, hypergeo::DEFAULT_EPS)?;
    println!("projected (10,0,0) -> norm {:.9}", far.euclidean_norm());

    let x = BallPoint::new(vec![0.3, -0.2, 0.1], curv)?;
    let y = BallPoint::new(vec![-0.5, 0.4, 0.0], curv)?;
    let sum = hypergeo::mobius_add(&x, &y)?;
    println!("x (+) y = {:?}", sum.coords());
    println!("(-x) (+) x = {:?}", hypergeo::mobius_add(&x.neg(), &x)?.coords());

    let d = hypergeo::geodesic_distance(&x, &y)?;
    println!("d(x, y) = {d:.9}, d(y, x) = {:.9}", hypergeo::geodesic_distance(&y, &x)?);
    println!("hyperbolic norm of x = {:.9}", hypergeo::hyperbolic_norm(&x));
    println!("log_0(x) = {:?}", hypergeo::log_map_origin(&x).coords());

    // as c -> 0 the metric flattens to twice the Euclidean distance
    for c in [1.0, 1e-2, 1e-4, 1e-6] {
        let flat = Curvature::from_magnitude(c)?;
        let a = BallPoint::new(vec![0.3, -0.2, 0.1], flat)?;
        let b = BallPoint::new(vec![-0.1, 0.2, 0.25], flat)?;
        let euclid = 2.0 * hypergeo::norm(&[0.4, -0.4, -0.15]);
        let rel = (hypergeo::geodesic_distance(&a, &b)? - euclid).abs() / euclid;
        println!("c = {c:e}: relative gap to 2|x - y| = {rel:.3e}");
    }
    Ok(())
}
