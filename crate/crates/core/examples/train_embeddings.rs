//! Train hierarchy embeddings, compare against the Euclidean-norm ablation
//! and render a 2-D disk figure.
//!
//! Run with `cargo run --release --example train_embeddings -- [OUT.svg]`.

use std::path::PathBuf;

use hyperpc::embedopt::{evaluate_hierarchy, export_disk, init_state, train, TrainConfig};
use hyperpc::hierdata::{generate_dataset, DatasetConfig, Role};
use hyperpc::hyperbolicity::{sampled_delta, Metric, DEFAULT_BATCHES, DEFAULT_BATCH_SIZE};
use hyperpc::losses::NormKind;
use hyperpc::{io, svg};

fn main() -> hyperpc::Result<()> {
    let svg_path: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hyperpc_disk.svg"));
    let manifest = generate_dataset(&DatasetConfig::default())?;

    for reg_norm in [NormKind::Hyperbolic, NormKind::Euclidean] {
        let cfg = TrainConfig { reg_norm, ..TrainConfig::default() };
        let start = init_state(&manifest, &cfg)?;
        let out = train(start.clone(), &manifest, &cfg)?;
        let before = evaluate_hierarchy(&start, &manifest)?;
        let after = evaluate_hierarchy(&out.state, &manifest)?;
        let metric = Metric::Hyperbolic { curvature: cfg.curvature, eps: cfg.eps };
        let d0 = sampled_delta(&start.table, metric, DEFAULT_BATCH_SIZE, DEFAULT_BATCHES, cfg.seed)?;
        let d1 = sampled_delta(&out.state.table, metric, DEFAULT_BATCH_SIZE, DEFAULT_BATCHES, cfg.seed)?;
        println!("{reg_norm:?} norm in the regularizer");
        println!(
            "  loss {:.4} -> {:.4}",
            out.losses[0].total,
            out.losses.last().expect("at least one epoch").total
        );
        println!(
            "  norm order {:.3} -> {:.3}, chains {:.3} -> {:.3}, held-out triplets {:.3} -> {:.3}",
            before.norm_order_rate,
            after.norm_order_rate,
            before.chain_order_rate,
            after.chain_order_rate,
            before.triplet_accuracy,
            after.triplet_accuracy
        );
        println!("  delta_rel {:.4} -> {:.4}", d0.delta_rel, d1.delta_rel);
    }

    let cfg = TrainConfig { dim: 2, ..TrainConfig::default() };
    let out = train(init_state(&manifest, &cfg)?, &manifest, &cfg)?;
    let disk = export_disk(&out.state, &manifest)?;
    let mean_radius = |role: Role| {
        let r: Vec<f64> = disk.iter().filter(|p| p.role == role).map(|p| p.radius).collect();
        r.iter().sum::<f64>() / r.len() as f64
    };
    println!(
        "2-D run: mean disk radius of parts {:.3}, of wholes {:.3}",
        mean_radius(Role::Part),
        mean_radius(Role::Whole)
    );
    io::write_text(&svg_path, &svg::render_disk(&disk, &serde_json::to_string(&cfg)?))?;
    println!("wrote {}", svg_path.display());
    Ok(())
}
