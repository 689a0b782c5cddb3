//! Losses, balanced stripe sampling and the staged training procedure.

pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod pipeline;
pub mod sampler;
pub mod stage;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene::{ClassWeights, Sample};
use crate::segnet::{Architecture, NetworkKind};

pub use gradcheck::{gradient_check, loss_and_gradient, GradCheckReport};
pub use loss::{loss_and_logit_grad, weighted_cross_entropy, PROB_EPS};
pub use optim::Adam;
pub use pipeline::{load_stage_checkpoint, train_mergenet, train_single_stage, CheckpointLayout};
pub use sampler::{stripes_of, BalancedStripeSampler};
pub use stage::{train_stage, Upstream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_stripe: usize,
    pub batch_context: usize,
    pub batch_refiner: usize,
    pub max_epochs: usize,
    /// Epochs without a strictly lower validation loss before stopping.
    pub patience: usize,
    pub seed: u64,
    pub stripe_width: usize,
    pub stripe_channels: Vec<usize>,
    pub context_channels: Vec<usize>,
    pub refiner_channels: Vec<usize>,
    /// Loss weights for the context and refiner stages; computed from the
    /// training labels when absent.
    pub class_weights: Option<ClassWeights>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_stripe: 32,
            batch_context: 4,
            batch_refiner: 4,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            stripe_width: 32,
            stripe_channels: NetworkKind::Stripe.default_channels().to_vec(),
            context_channels: NetworkKind::Context.default_channels().to_vec(),
            refiner_channels: NetworkKind::Refiner.default_channels().to_vec(),
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.batch_stripe == 0 || self.batch_context == 0 || self.batch_refiner == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.stripe_width == 0 {
            return bad("stripe width must be positive".into());
        }
        if let Some(w) = &self.class_weights {
            if w.0.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(format!("class weights must be positive, got {:?}", w.0));
            }
        }
        for kind in NetworkKind::ALL {
            self.architecture(kind).validate()?;
        }
        Ok(())
    }

    pub fn channels(&self, kind: NetworkKind) -> &[usize] {
        match kind {
            NetworkKind::Stripe => &self.stripe_channels,
            NetworkKind::Context => &self.context_channels,
            NetworkKind::Refiner => &self.refiner_channels,
        }
    }

    pub fn batch_size(&self, kind: NetworkKind) -> usize {
        match kind {
            NetworkKind::Stripe => self.batch_stripe,
            NetworkKind::Context => self.batch_context,
            NetworkKind::Refiner => self.batch_refiner,
        }
    }

    pub fn architecture(&self, kind: NetworkKind) -> Architecture {
        kind.architecture(self.channels(kind))
    }

    /// Seed for one stage's initialization and batch order.
    pub fn stage_seed(&self, kind: NetworkKind) -> u64 {
        let k = match kind {
            NetworkKind::Stripe => 1,
            NetworkKind::Context => 2,
            NetworkKind::Refiner => 3,
        };
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
    }

    /// Digest of the settings that influence one stage's result.
    pub fn stage_digest(&self, kind: NetworkKind) -> String {
        let relevant = serde_json::json!({
            "stage": kind.name(),
            "learning_rate": self.learning_rate,
            "batch": self.batch_size(kind),
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "stripe_width": self.stripe_width,
            "channels": self.channels(kind),
            "class_weights": self.class_weights,
        });
        hex_digest(relevant.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: NetworkKind,
    pub epochs: Vec<EpochLosses>,
    /// Epoch whose parameters were kept; 0 when loaded from a checkpoint.
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopping_epoch: usize,
    pub checkpoint: Option<String>,
    /// True when the stage was reused from an existing checkpoint.
    pub resumed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
    pub bundle: Option<String>,
}

impl TrainReport {
    pub fn stage(&self, kind: NetworkKind) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content digest of a sample list (ids, pixels and labels).
pub fn dataset_digest(samples: &[Sample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.frame.frame_id.as_bytes());
        h.update((s.frame.height() as u64).to_le_bytes());
        h.update((s.frame.width() as u64).to_le_bytes());
        for v in s.frame.rgb().data().iter().chain(s.frame.disparity().data()) {
            h.update(v.to_le_bytes());
        }
        h.update(s.labels.codes());
    }
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}
