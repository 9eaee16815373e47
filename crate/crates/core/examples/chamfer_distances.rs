//! Euclidean and hyperbolic Chamfer distances between two sampled shapes.
//!
//! Run with `cargo run --release --example chamfer_distances`.

use hyperpc::chamfer::{chamfer_distance, hyper_chamfer, hyper_chamfer_grad, ChamferVariant, PointCloud};
use hyperpc::hierdata::{sample_primitive, Primitive};
use hyperpc::hypergeo::{self, Curvature};

fn shifted(cloud: &PointCloud, dx: f64) -> hyperpc::Result<PointCloud> {
    PointCloud::new(cloud.points().iter().map(|p| [p[0] + dx, p[1], p[2]]).collect())
}

fn main() -> hyperpc::Result<()> {
    let disk = sample_primitive(Primitive::Disk { radius: 0.5 }, 2048, 1)?;
    let boxy = sample_primitive(Primitive::Box { sx: 0.8, sy: 0.8, sz: 0.1 }, 2048, 2)?;
    let curv = Curvature::default();

    println!("{:>8} {:>12} {:>12} {:>12}", "shift", "L1", "L2", "hyper");
    for dx in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let moved = shifted(&boxy, dx)?;
        println!(
            "{dx:>8.2} {:>12.6} {:>12.6} {:>12.6}",
            chamfer_distance(&disk, &moved, ChamferVariant::L1)?,
            chamfer_distance(&disk, &moved, ChamferVariant::L2)?,
            hyper_chamfer(&disk, &moved, curv, hypergeo::DEFAULT_EPS)?,
        );
    }

    let (gx, _) = hyper_chamfer_grad(&disk, &boxy, curv, hypergeo::DEFAULT_EPS)?;
    let gnorm: f64 = gx.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    println!("|grad wrt disk points| = {gnorm:.6}");
    Ok(())
}
