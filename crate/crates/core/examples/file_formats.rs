//! Write and read XYZ and PLY clouds and a distance matrix.
//!
//! Run with `cargo run --example file_formats`.

use hyperpc::chamfer::PointCloud;
use hyperpc::io;

fn main() -> hyperpc::Result<()> {
    let dir = std::env::temp_dir().join("hyperpc_formats");
    let cloud = PointCloud::new(vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2.5e-8, 7.0]])?;

    let xyz = dir.join("cloud.xyz");
    io::write_xyz(&xyz, &cloud, &["two points".to_string()])?;
    let back = io::read_cloud(&xyz)?;
    println!("xyz round trip exact: {}", back == cloud);
    print!("{}", io::read_text(&xyz)?);

    let ply = dir.join("cloud.ply");
    io::write_text(
        &ply,
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
         property float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n\
         0 0 0\n1 1 1\n",
    )?;
    println!("ply vertices: {:?}", io::read_cloud(&ply)?.points());

    let bad = dir.join("bad.xyz");
    io::write_text(&bad, "0 0 0\n1 one 2\n")?;
    println!("malformed file: {}", io::read_cloud(&bad).unwrap_err());

    let dm = dir.join("path.dm");
    io::write_text(&dm, "# three points on a line\n0 1 2\n1 0 1\n2 1 0\n")?;
    println!("distance matrix diameter: {}", io::read_distance_matrix(&dm)?.diameter());
    Ok(())
}
