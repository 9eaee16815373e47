//! Generate the part/whole dataset and write it to disk.
//!
//! Run with `cargo run --release --example synthetic_hierarchy -- [OUT_DIR]`.

use std::path::PathBuf;

use hyperpc::chamfer::{chamfer_distance, ChamferVariant};
use hyperpc::hierdata::{generate_dataset, DatasetConfig, Role};
use hyperpc::io;

fn main() -> hyperpc::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hyperpc_dataset"));
    let cfg = DatasetConfig::default();
    let manifest = generate_dataset(&cfg)?;
    println!("{} samples in {} categories", manifest.len(), manifest.categories().len());

    let first = &manifest.samples()[..4];
    for s in first {
        println!("  {:<18} {:?} {:>5} points, parent {:?}", s.id, s.role, s.n_points, s.parent_id);
    }

    let wholes: Vec<_> = manifest.samples().iter().filter(|s| s.role == Role::Whole).collect();
    let (mut intra, mut inter) = ((0.0, 0), (0.0, 0));
    for (i, a) in wholes.iter().enumerate().step_by(7) {
        for b in wholes.iter().skip(i + 1).step_by(5) {
            let d = chamfer_distance(&a.cloud, &b.cloud, ChamferVariant::L1)?;
            let slot = if a.category == b.category { &mut intra } else { &mut inter };
            slot.0 += d;
            slot.1 += 1;
        }
    }
    println!(
        "mean whole-to-whole L1 Chamfer: same category {:.4}, different {:.4}",
        intra.0 / intra.1 as f64,
        inter.0 / inter.1 as f64
    );

    let path = io::write_dataset(&manifest, &out, Some(serde_json::to_value(cfg)?))?;
    println!("wrote {}", path.display());
    Ok(())
}
