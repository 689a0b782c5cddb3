//! Generates a small synthetic split on disk, reloads it and prints the
//! class balance and derived class weights.
//!
//! cargo run --example synth_dataset -- [out_dir] [count]

use std::path::PathBuf;

use mergenet::scene::{compute_class_weights, ClassCounts, ClassLabel, SplitTag};
use mergenet::synth::{generate_dataset, read_instances, SceneParams};

fn main() -> mergenet::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mergenet-synth"));
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let params = SceneParams {
        rng_seed: 7,
        ..SceneParams::default()
    };
    let index = generate_dataset(&params, count, &root, SplitTag::Train)?;
    println!("{} frames under {}", index.len(), index.split_dir().display());

    let mut counts = ClassCounts::default();
    for sample in index.load_all()? {
        counts.add_labels(&sample.labels);
    }
    let weights = compute_class_weights(&index)?;
    for (class, fraction) in ClassLabel::ALL.iter().zip(counts.fractions()) {
        println!(
            "{:>9}: {:6.2}% of pixels, weight {:.3}",
            class.name(),
            100.0 * fraction,
            weights.get(*class)
        );
    }

    let records = read_instances(&index.split_dir().join("instances.json"))?;
    for frame in records.iter().take(3) {
        for inst in &frame.instances {
            println!(
                "frame {} obstacle {} bbox {:?} mean disparity {:.3}",
                frame.frame_id, inst.instance_id, inst.bbox, inst.mean_disparity
            );
        }
    }
    Ok(())
}
