//! Cuts a scene into vertical stripes, checks that they reassemble exactly,
//! and shows how the balanced sampler favours obstacle-rich stripes.

use mergenet::scene::{reassemble_frame, split_into_stripes, ClassLabel};
use mergenet::synth::{generate_samples, SceneParams};
use mergenet::training::BalancedStripeSampler;

fn main() -> mergenet::error::Result<()> {
    let samples: Vec<_> = generate_samples(&SceneParams::default(), 4)?
        .into_iter()
        .map(|s| s.sample)
        .collect();
    let stripe_width = 16;

    let first = &samples[0];
    let stripes = split_into_stripes(&first.frame, Some(&first.labels), stripe_width)?;
    let (frame, labels) = reassemble_frame(&stripes)?;
    println!(
        "{} stripes of width {}; reassembled frame identical: {}",
        stripes.len(),
        stripe_width,
        frame == first.frame && labels.as_ref() == Some(&first.labels)
    );

    let mut sampler = BalancedStripeSampler::from_samples(&samples, stripe_width, 11)?;
    let probs = sampler.probabilities().to_vec();
    let mut hits = vec![0usize; probs.len()];
    let draws = 20_000;
    for _ in 0..draws {
        hits[sampler.draw_index()] += 1;
    }
    println!("stripe  obstacle_px  p(closed form)  p(empirical)");
    for (i, s) in sampler.stripes().iter().enumerate().take(12) {
        let obstacle = s
            .labels
            .as_ref()
            .map(|l| l.counts().get(ClassLabel::Obstacle))
            .unwrap_or(0);
        println!(
            "{:>6}  {:>11}  {:>14.4}  {:>12.4}",
            i,
            obstacle,
            probs[i],
            hits[i] as f64 / draws as f64
        );
    }
    Ok(())
}
