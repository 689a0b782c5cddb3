//! Trains stripe, context and refiner networks in order with checkpoints,
//! then shows that a second run resumes every stage and that removing the
//! refiner checkpoint retrains only the refiner.
//!
//! cargo run --release --example train_pipeline -- [checkpoint_dir]

use std::path::PathBuf;

use mergenet::segnet::NetworkKind;
use mergenet::synth::{generate_samples, SceneParams};
use mergenet::training::{train_mergenet, CheckpointLayout, TrainConfig, TrainReport};

fn summary(report: &TrainReport) {
    for s in &report.stages {
        match s.epochs.last() {
            Some(last) if !s.resumed => println!(
                "  {:>8}: trained, best epoch {:>2} of {:>2}, final train loss {:.4} val loss {:.4}",
                s.stage.name(),
                s.best_epoch,
                s.stopping_epoch,
                last.train_loss,
                last.val_loss
            ),
            _ => println!("  {:>8}: reused checkpoint from epoch {}", s.stage.name(), s.best_epoch),
        }
    }
}

fn main() -> mergenet::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MERGENET_LOG", "info")).init();
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mergenet-train"));
    let gen = |seed, n| -> mergenet::error::Result<Vec<_>> {
        Ok(generate_samples(&SceneParams { rng_seed: seed, ..SceneParams::default() }, n)?
            .into_iter()
            .map(|s| s.sample)
            .collect())
    };
    let train = gen(1, 8)?;
    let val = gen(2, 4)?;
    let config = TrainConfig {
        stripe_width: 16,
        max_epochs: 12,
        patience: 4,
        stripe_channels: vec![8, 16],
        context_channels: vec![8, 16],
        refiner_channels: vec![8, 16],
        seed: 5,
        ..TrainConfig::default()
    };

    println!("first run");
    let (bundle, report) = train_mergenet(&config, &train, &val, Some(&dir))?;
    summary(&report);

    println!("second run");
    let (again, report) = train_mergenet(&config, &train, &val, Some(&dir))?;
    summary(&report);
    println!("  bundle identical: {}", again == bundle);

    std::fs::remove_file(CheckpointLayout::new(&dir).stage_path(NetworkKind::Refiner))
        .map_err(|e| mergenet::error::Error::InvalidInput(e.to_string()))?;
    println!("after deleting the refiner checkpoint");
    let (_, report) = train_mergenet(&config, &train, &val, Some(&dir))?;
    summary(&report);
    println!("checkpoints in {}", dir.display());
    Ok(())
}
