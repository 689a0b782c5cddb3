use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_and_logit_grad, weighted_cross_entropy};
use super::optim::Adam;
use super::sampler::{stripes_of, BalancedStripeSampler};
use super::{EpochLosses, StageReport, TrainConfig};
use crate::error::{Error, Result};
use crate::scene::{ClassCounts, ClassWeights, LabelMap, Sample};
use crate::segnet::{
    context_forward, refiner_input, rgb_tensor, rgbd_tensor, stripe_map, Mode, NetworkKind,
    NetworkParams, ProbMap, Tensor,
};

/// Frozen upstream networks whose eval-mode outputs feed the refiner.
#[derive(Debug, Clone, Copy)]
pub struct Upstream<'a> {
    pub stripe: &'a NetworkParams,
    pub context: &'a NetworkParams,
}

struct Examples {
    inputs: Vec<Tensor>,
    labels: Vec<LabelMap>,
}

enum Plan {
    /// Stripe stage: balanced draws with replacement. Batch-norm statistics
    /// are re-estimated from a copy that always starts from the same seed.
    Balanced {
        sampler: BalancedStripeSampler,
        stats_sampler: BalancedStripeSampler,
    },
    /// Full frames: reshuffled every epoch, statistics over the fixed order.
    Shuffle { rng: ChaCha8Rng },
}

impl Plan {
    fn epoch_batches(&mut self, n: usize, batch: usize) -> Vec<Vec<usize>> {
        match self {
            Plan::Balanced { sampler, .. } => draw_batches(sampler, n, batch),
            Plan::Shuffle { rng } => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                order.chunks(batch).map(<[usize]>::to_vec).collect()
            }
        }
    }

    fn stats_batches(&self, n: usize, batch: usize) -> Vec<Vec<usize>> {
        match self {
            Plan::Balanced { stats_sampler, .. } => draw_batches(&mut stats_sampler.clone(), n, batch),
            Plan::Shuffle { .. } => {
                let order: Vec<usize> = (0..n).collect();
                order.chunks(batch).map(<[usize]>::to_vec).collect()
            }
        }
    }
}

fn draw_batches(sampler: &mut BalancedStripeSampler, n: usize, batch: usize) -> Vec<Vec<usize>> {
    (0..n.div_ceil(batch))
        .map(|_| (0..batch).map(|_| sampler.draw_index()).collect())
        .collect()
}

fn frame_examples(samples: &[Sample], input: impl Fn(&Sample) -> Result<Tensor>) -> Result<Examples> {
    let mut inputs = Vec::with_capacity(samples.len());
    for s in samples {
        inputs.push(input(s).map_err(|e| e.in_frame(&s.frame.frame_id))?);
    }
    Ok(Examples {
        inputs,
        labels: samples.iter().map(|s| s.labels.clone()).collect(),
    })
}

fn stripe_examples(samples: &[Sample], stripe_width: usize) -> Result<Examples> {
    let stripes = stripes_of(samples, stripe_width)?;
    Ok(Examples {
        inputs: stripes.iter().map(|s| rgbd_tensor(&s.frame)).collect(),
        labels: stripes.into_iter().map(|s| s.labels.expect("labeled stripe")).collect(),
    })
}

/// Refiner input `(y_s, y_c)` for one frame from frozen eval-mode networks.
pub fn refiner_example(upstream: Upstream<'_>, sample: &Sample, stripe_width: usize) -> Result<Tensor> {
    let y_s = stripe_map(upstream.stripe, &sample.frame, stripe_width)?;
    let y_c = context_forward(upstream.context, &sample.frame, Mode::Eval)?;
    refiner_input(&y_s, &y_c)
}

fn class_weights_of(samples: &[Sample]) -> Result<ClassWeights> {
    let mut counts = ClassCounts::default();
    for s in samples {
        counts.add_labels(&s.labels);
    }
    ClassWeights::from_counts(&counts)
}

/// Pixel-averaged eval-mode loss over a set of examples.
fn eval_loss(params: &NetworkParams, ex: &Examples, weights: &ClassWeights) -> Result<f64> {
    let mut sum = 0.0;
    let mut pixels = 0usize;
    for (x, l) in ex.inputs.iter().zip(&ex.labels) {
        let (logits, _) = params.encdec_forward(x, Mode::Eval)?;
        let n = l.as_slice().len();
        sum += weighted_cross_entropy(&ProbMap::from_logits(&logits), l, weights)? * n as f64;
        pixels += n;
    }
    Ok(sum / pixels as f64)
}

/// Replaces the running statistics with the average train-mode batch
/// statistics over a fixed pass of the training data.
fn reestimate_running_stats(params: &mut NetworkParams, ex: &Examples, batches: &[Vec<usize>]) -> Result<()> {
    let mut acc: Option<Vec<(Vec<f64>, Vec<f64>)>> = None;
    for batch in batches {
        let xs: Vec<Tensor> = batch.iter().map(|&i| ex.inputs[i].clone()).collect();
        let (_, cache) = params.forward_cached(&xs, Mode::Train)?;
        let stats = cache.batch_stats();
        match &mut acc {
            None => acc = Some(stats),
            Some(a) => {
                for ((am, av), (m, v)) in a.iter_mut().zip(stats) {
                    am.iter_mut().zip(m).for_each(|(x, y)| *x += y);
                    av.iter_mut().zip(v).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let mut acc = acc.ok_or_else(|| Error::InvalidInput("no training batches".into()))?;
    let k = batches.len() as f64;
    for (m, v) in &mut acc {
        m.iter_mut().for_each(|x| *x /= k);
        v.iter_mut().for_each(|x| *x /= k);
    }
    params.set_running_stats(&acc)
}

/// Trains one network and returns the parameters of its best validation
/// epoch. The refiner stage needs the frozen upstream networks.
pub fn train_stage(
    kind: NetworkKind,
    config: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    upstream: Option<Upstream<'_>>,
) -> Result<(NetworkParams, StageReport)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{kind} stage needs training and validation frames (got {} and {})",
            train.len(),
            val.len()
        )));
    }
    let seed = config.stage_seed(kind);
    let batch = config.batch_size(kind);
    let sw = config.stripe_width;
    let (train_ex, val_ex, weights, mut plan) = match kind {
        NetworkKind::Stripe => {
            let sampler = BalancedStripeSampler::from_samples(train, sw, seed)?;
            let train_ex = Examples {
                inputs: sampler.stripes().iter().map(|s| rgbd_tensor(&s.frame)).collect(),
                labels: sampler.stripes().iter().map(|s| s.labels.clone().expect("labeled")).collect(),
            };
            let stats_sampler = BalancedStripeSampler::from_samples(train, sw, !seed)?;
            (
                train_ex,
                stripe_examples(val, sw)?,
                ClassWeights::uniform(),
                Plan::Balanced {
                    sampler,
                    stats_sampler,
                },
            )
        }
        NetworkKind::Context | NetworkKind::Refiner => {
            let weights = match config.class_weights {
                Some(w) => w,
                None => class_weights_of(train)?,
            };
            let (train_ex, val_ex) = if kind == NetworkKind::Context {
                let f = |s: &Sample| Ok(rgb_tensor(&s.frame));
                (frame_examples(train, f)?, frame_examples(val, f)?)
            } else {
                let up = upstream.ok_or_else(|| {
                    Error::InvalidInput("refiner stage needs trained stripe and context networks".into())
                })?;
                let f = |s: &Sample| refiner_example(up, s, sw);
                (frame_examples(train, f)?, frame_examples(val, f)?)
            };
            (
                train_ex,
                val_ex,
                weights,
                Plan::Shuffle {
                    rng: ChaCha8Rng::seed_from_u64(seed),
                },
            )
        }
    };

    let mut params = NetworkParams::init(config.architecture(kind), seed)?;
    let mut adam = Adam::new(params.num_weights(), config.learning_rate);
    let stats_batches = plan.stats_batches(train_ex.inputs.len(), batch);
    let diverged = |epoch, loss| Error::Diverged {
        stage: kind.name().to_string(),
        epoch,
        loss,
    };

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, NetworkParams)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let batches = plan.epoch_batches(train_ex.inputs.len(), batch);
        let mut loss_sum = 0.0;
        for idx in &batches {
            let xs: Vec<Tensor> = idx.iter().map(|&i| train_ex.inputs[i].clone()).collect();
            let ls: Vec<&LabelMap> = idx.iter().map(|&i| &train_ex.labels[i]).collect();
            let (logits, cache) = params.forward_cached(&xs, Mode::Train)?;
            let (loss, dlogits) = loss_and_logit_grad(&logits, &ls, &weights)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, loss));
            }
            let grads = params.backward(&cache, &dlogits);
            adam.step(&mut params.weights, &grads);
            loss_sum += loss;
        }
        let train_loss = loss_sum / batches.len() as f64;
        reestimate_running_stats(&mut params, &train_ex, &stats_batches)?;
        let val_loss = eval_loss(&params, &val_ex, &weights)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged(epoch, if train_loss.is_finite() { val_loss } else { train_loss }));
        }
        debug!("{kind} epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        epochs.push(EpochLosses {
            epoch,
            train_loss,
            val_loss,
        });
        match &best {
            Some((b, _, _)) if val_loss >= *b => stale += 1,
            _ => {
                best = Some((val_loss, epoch, params.clone()));
                stale = 0;
            }
        }
        if stale >= config.patience {
            break;
        }
    }
    let (best_loss, best_epoch, best_params) = best.expect("at least one epoch");
    let stopping_epoch = epochs.len();
    info!("{kind} stage: best validation loss {best_loss:.6} at epoch {best_epoch}, stopped after {stopping_epoch}");
    Ok((
        best_params,
        StageReport {
            stage: kind,
            epochs,
            best_epoch,
            stopping_epoch,
            checkpoint: None,
            resumed: false,
        },
    ))
}
