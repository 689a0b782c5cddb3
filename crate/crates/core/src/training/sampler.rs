use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::{
    compute_class_weights, split_into_stripes, ClassCounts, ClassWeights, DatasetIndex, Sample,
    Stripe, NUM_CLASSES,
};

/// Draws labeled stripes with replacement, each with probability
/// proportional to its class-weighted pixel mass `Σ_c w_c · n_c`.
///
/// Under this scheme every class contributes the same expected number of
/// pixels per draw. The stream depends only on the stripes and the seed.
#[derive(Debug, Clone)]
pub struct BalancedStripeSampler {
    stripes: Vec<Stripe>,
    probabilities: Vec<f64>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl BalancedStripeSampler {
    /// `stripes` must carry labels.
    pub fn new(stripes: Vec<Stripe>, weights: &ClassWeights, seed: u64) -> Result<Self> {
        if stripes.is_empty() {
            return Err(Error::InvalidInput("cannot sample from an empty dataset".into()));
        }
        let mut mass = Vec::with_capacity(stripes.len());
        for s in &stripes {
            let labels = s.labels.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("stripe {} of frame {} has no labels", s.index, s.frame.frame_id))
            })?;
            let counts = labels.counts();
            mass.push((0..NUM_CLASSES).map(|c| weights.0[c] * counts.0[c] as f64).sum::<f64>());
        }
        let total: f64 = mass.iter().sum();
        let dist = WeightedIndex::new(&mass)
            .map_err(|e| Error::InvalidInput(format!("stripe sampling weights: {e}")))?;
        Ok(BalancedStripeSampler {
            probabilities: mass.iter().map(|m| m / total).collect(),
            stripes,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Stripes of every sample, weighted with the class weights of the samples.
    pub fn from_samples(samples: &[Sample], stripe_width: usize, seed: u64) -> Result<Self> {
        let mut counts = ClassCounts::default();
        for s in samples {
            counts.add_labels(&s.labels);
        }
        let weights = ClassWeights::from_counts(&counts)?;
        Self::new(stripes_of(samples, stripe_width)?, &weights, seed)
    }

    pub fn from_index(index: &DatasetIndex, stripe_width: usize, seed: u64) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::InvalidInput("cannot sample from an empty dataset".into()));
        }
        let weights = compute_class_weights(index)?;
        let samples = index.load_all()?;
        Self::new(stripes_of(&samples, stripe_width)?, &weights, seed)
    }

    pub fn len(&self) -> usize {
        self.stripes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stripes.is_empty()
    }

    pub fn stripes(&self) -> &[Stripe] {
        &self.stripes
    }

    /// Closed-form draw probability of each stripe.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Position of the next drawn stripe in [`Self::stripes`].
    pub fn draw_index(&mut self) -> usize {
        self.dist.sample(&mut self.rng)
    }
}

impl Iterator for BalancedStripeSampler {
    type Item = Stripe;

    fn next(&mut self) -> Option<Stripe> {
        let i = self.draw_index();
        Some(self.stripes[i].clone())
    }
}

/// All labeled stripes of a sample list, frame by frame, left to right.
pub fn stripes_of(samples: &[Sample], stripe_width: usize) -> Result<Vec<Stripe>> {
    let mut out = Vec::new();
    for s in samples {
        out.extend(
            split_into_stripes(&s.frame, Some(&s.labels), stripe_width)
                .map_err(|e| e.in_frame(&s.frame.frame_id))?,
        );
    }
    Ok(out)
}
