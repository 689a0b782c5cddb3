//! Builds randomly initialised stripe, context and refiner networks and
//! runs the full pipeline on one synthetic frame.

use mergenet::scene::ClassLabel;
use mergenet::segnet::{mergenet_stages, predict_labels, MergeNetBundle, NetworkKind, NetworkParams};
use mergenet::synth::{generate_samples, SceneParams};

fn main() -> mergenet::error::Result<()> {
    let sample = generate_samples(&SceneParams::default(), 1)?.remove(0).sample;
    let net = |kind: NetworkKind, seed| NetworkParams::init(kind.architecture(&[8, 16]), seed);
    let bundle = MergeNetBundle::new(
        net(NetworkKind::Stripe, 1)?,
        net(NetworkKind::Context, 2)?,
        net(NetworkKind::Refiner, 3)?,
        16,
    )?;
    for kind in NetworkKind::ALL {
        let p = bundle.network(kind);
        println!("{:>8}: {} weights, fingerprint {}", kind.name(), p.num_weights(), p.fingerprint());
    }

    let stages = mergenet_stages(&bundle, &sample.frame)?;
    for (name, prob) in [("stripe", &stages.stripe), ("context", &stages.context), ("refined", &stages.refined)] {
        let labels = predict_labels(prob);
        let counts = labels.counts();
        let worst = prob
            .grid()
            .data()
            .chunks(3)
            .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        println!(
            "{name:>8}: {}x{} road {} off-road {} obstacle {} (max |sum p - 1| = {worst:.1e})",
            prob.height(),
            prob.width(),
            counts.get(ClassLabel::Road),
            counts.get(ClassLabel::OffRoad),
            counts.get(ClassLabel::Obstacle)
        );
    }
    Ok(())
}
