//! Trains a tiny model, scores it on held-out scenes and writes the
//! detection-rate-versus-distance curve.
//!
//! cargo run --release --example evaluate -- [curve.csv]

use std::path::PathBuf;

use mergenet::metrics::{evaluate_dataset, evaluate_predictions, write_curve_csv, MetricsConfig, MetricsReport};
use mergenet::synth::{generate_samples, SceneParams};
use mergenet::training::{train_mergenet, TrainConfig};

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "undefined".into())
}

fn print_rates(name: &str, r: &MetricsReport) {
    println!("{name}: pdr {} idr {} pfp {} ifp {}", fmt(r.pdr), fmt(r.idr), fmt(r.pfp), fmt(r.ifp));
}

fn main() -> mergenet::error::Result<()> {
    let csv = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mergenet-curve.csv"));
    let gen = |seed, n| -> mergenet::error::Result<Vec<_>> {
        Ok(generate_samples(&SceneParams { rng_seed: seed, ..SceneParams::default() }, n)?
            .into_iter()
            .map(|s| s.sample)
            .collect())
    };
    let (train, val, test) = (gen(100, 8)?, gen(200, 4)?, gen(300, 8)?);
    let config = TrainConfig {
        stripe_width: 16,
        max_epochs: 15,
        patience: 5,
        stripe_channels: vec![8, 16],
        context_channels: vec![8, 16],
        refiner_channels: vec![8, 16],
        ..TrainConfig::default()
    };
    let (bundle, _) = train_mergenet(&config, &train, &val, None)?;
    let metrics = MetricsConfig::default();

    let oracle: Vec<_> = test.iter().map(|s| s.labels.clone()).collect();
    let perfect = evaluate_predictions(&oracle, &test, &metrics)?;
    print_rates("ground truth as prediction", &perfect);

    let report = evaluate_dataset(&bundle, &test, &metrics)?;
    print_rates("trained model", &report);
    println!("{} ground-truth instances", report.instances.len());
    for p in &report.curve {
        println!("  distance <= {:5.1}: cumulative idr {}", p.distance, fmt(p.cumulative_idr));
    }
    write_curve_csv(&csv, &report.curve)?;
    println!("curve written to {}", csv.display());
    Ok(())
}
