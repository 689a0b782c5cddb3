//! Trains the three networks on synthetic scenes and compares the stripe
//! network, the context network and the merged output on held-out scenes.
//!
//! cargo run --release --example component_comparison -- [seed] [train_scenes] [max_epochs] [channels]

use std::time::Instant;

use mergenet::metrics::{evaluate_components, MetricsReport, MetricsConfig};
use mergenet::synth::{generate_samples, SceneParams};
use mergenet::training::{train_mergenet, TrainConfig};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> mergenet::error::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MERGENET_LOG", "info")).init();
    let seed = arg(1, 1);
    let n_train = arg(2, 32) as usize;
    let epochs = arg(3, 60) as usize;
    let ch = arg(4, 8) as usize;

    let gen = |base: u64, n| -> mergenet::error::Result<Vec<_>> {
        Ok(generate_samples(&SceneParams { rng_seed: base, ..SceneParams::default() }, n)?
            .into_iter()
            .map(|s| s.sample)
            .collect())
    };
    let base = seed * 1_000_000;
    let train = gen(base, n_train)?;
    let val = gen(base + 100_000, 8)?;
    let test = gen(base + 200_000, 32)?;
    let config = TrainConfig {
        stripe_width: 16,
        max_epochs: epochs,
        patience: 10,
        stripe_channels: vec![ch, 2 * ch, 2 * ch],
        context_channels: vec![ch, 2 * ch, 2 * ch],
        refiner_channels: vec![ch, 2 * ch],
        seed,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let (bundle, report) = train_mergenet(&config, &train, &val, None)?;
    println!("trained in {:.1?}", start.elapsed());
    for s in &report.stages {
        println!("  {:>8}: best epoch {} of {}", s.stage.name(), s.best_epoch, s.stopping_epoch);
    }

    let r = evaluate_components(&bundle, &test, &MetricsConfig::default())?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    println!("{:>9} {:>6} {:>6} {:>7} {:>7}", "network", "PDR", "IDR", "PFP", "IFP");
    let rows: [(&str, &MetricsReport); 3] = [("stripe", &r.stripe), ("context", &r.context), ("mergenet", &r.mergenet)];
    for (name, m) in rows {
        println!("{name:>9} {:>6} {:>6} {:>7} {:>7}", fmt(m.pdr), fmt(m.idr), fmt(m.pfp), fmt(m.ifp));
    }
    Ok(())
}
