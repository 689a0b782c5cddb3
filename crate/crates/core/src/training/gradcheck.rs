//! Finite-difference verification of the analytic parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::loss_and_logit_grad;
use crate::error::{Error, Result};
use crate::scene::{ClassLabel, ClassWeights, LabelMap, NUM_CLASSES};
use crate::segnet::{Architecture, Mode, NetworkKind, NetworkParams, ProbMap, Tensor};

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so that parameters with
/// near-zero gradient are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;
/// Reseed when any ReLU input is closer to its kink than this.
pub const KINK_MARGIN: f64 = 1e-5;
pub const CHECKED_PARAMS: usize = 64;
const INPUT_SIZE: usize = 8;
const MAX_RESEEDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub stage: NetworkKind,
    pub n_params: usize,
    pub n_checked: usize,
    /// Parameters skipped because a `±h` step changed a ReLU or pooling decision.
    pub n_skipped: usize,
    /// Whole draws discarded because an activation sat at a ReLU kink.
    pub reseeds: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Loss and parameter gradient for a batch.
pub fn loss_and_gradient(
    params: &NetworkParams,
    inputs: &[Tensor],
    labels: &[&LabelMap],
    weights: &ClassWeights,
    mode: Mode,
) -> Result<(f64, Vec<f64>)> {
    let (logits, cache) = params.forward_cached(inputs, mode)?;
    let (loss, dlogits) = loss_and_logit_grad(&logits, labels, weights)?;
    Ok((loss, params.backward(&cache, &dlogits)))
}

fn loss_and_pattern(
    params: &NetworkParams,
    inputs: &[Tensor],
    labels: &[&LabelMap],
    weights: &ClassWeights,
) -> Result<(f64, Vec<u32>)> {
    let (logits, cache) = params.forward_cached(inputs, Mode::Eval)?;
    let (loss, _) = loss_and_logit_grad(&logits, labels, weights)?;
    Ok((loss, cache.activation_pattern()))
}

fn random_input(kind: NetworkKind, rng: &mut ChaCha8Rng) -> Tensor {
    let n = INPUT_SIZE * INPUT_SIZE;
    match kind {
        NetworkKind::Refiner => {
            let mut planes = Vec::new();
            for _ in 0..2 {
                let z = Tensor::from_vec(
                    NUM_CLASSES,
                    INPUT_SIZE,
                    INPUT_SIZE,
                    (0..NUM_CLASSES * n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                );
                planes.push(ProbMap::from_logits(&z).to_tensor());
            }
            Tensor::concat_channels(&[&planes[0], &planes[1]])
        }
        _ => {
            let c = kind.input_channels();
            Tensor::from_vec(c, INPUT_SIZE, INPUT_SIZE, (0..c * n).map(|_| rng.gen_range(0.0..1.0)).collect())
        }
    }
}

/// Random weights plus batch-norm parameters and running statistics near
/// the statistics of `inputs`, so that activations are neither all dead
/// nor all saturated.
fn random_params(arch: &Architecture, inputs: &[Tensor], rng: &mut ChaCha8Rng) -> Result<NetworkParams> {
    let mut params = NetworkParams::init(arch.clone(), rng.gen())?;
    for bn in params.batch_norms() {
        for c in 0..bn.channels {
            params.weights[bn.gamma_offset + c] = rng.gen_range(0.5..1.5);
            params.weights[bn.beta_offset + c] = rng.gen_range(-0.3..0.3);
        }
    }
    for b in params.head_bias_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let (_, cache) = params.forward_cached(inputs, Mode::Train)?;
    let stats: Vec<(Vec<f64>, Vec<f64>)> = cache
        .batch_stats()
        .into_iter()
        .map(|(m, v)| {
            let m = m
                .iter()
                .zip(&v)
                .map(|(m, v)| m + rng.gen_range(-0.1..0.1) * v.sqrt())
                .collect();
            let v = v.iter().map(|v| v * rng.gen_range(0.8..1.2)).collect();
            (m, v)
        })
        .collect();
    params.set_running_stats(&stats)?;
    Ok(params)
}

/// Compares analytic gradients of the weighted cross-entropy against central
/// differences with step [`FD_STEP`] on [`CHECKED_PARAMS`] random
/// parameters, with batch norm in eval mode on a batch of two 8×8 inputs.
pub fn gradient_check(kind: NetworkKind, arch: &Architecture, seed: u64) -> Result<GradCheckReport> {
    if arch.input_channels() != kind.input_channels() {
        return Err(Error::Structure(format!(
            "{kind} network needs {} input channels, architecture has {}",
            kind.input_channels(),
            arch.input_channels()
        )));
    }
    let weights = ClassWeights([0.7, 1.3, 2.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reseeds = 0;
    loop {
        if reseeds > MAX_RESEEDS {
            return Err(Error::InvalidInput(format!(
                "no kink-free parameter draw for {kind} after {MAX_RESEEDS} attempts"
            )));
        }
        let inputs: Vec<Tensor> = (0..2).map(|_| random_input(kind, &mut rng)).collect();
        let labels: Vec<LabelMap> = (0..2)
            .map(|_| {
                let codes: Vec<u8> = (0..INPUT_SIZE * INPUT_SIZE).map(|_| rng.gen_range(0..3)).collect();
                LabelMap::from_codes(INPUT_SIZE, INPUT_SIZE, &codes).expect("valid codes")
            })
            .collect();
        let label_refs: Vec<&LabelMap> = labels.iter().collect();
        let mut params = random_params(arch, &inputs, &mut rng)?;

        let (_, base_cache) = params.forward_cached(&inputs, Mode::Eval)?;
        if base_cache.min_abs_preactivation() < KINK_MARGIN {
            reseeds += 1;
            continue;
        }
        let base_pattern = base_cache.activation_pattern();
        let (_, grads) = loss_and_gradient(&params, &inputs, &label_refs, &weights, Mode::Eval)?;

        let n_params = params.weights.len();
        let mut report = GradCheckReport {
            stage: kind,
            n_params,
            n_checked: 0,
            n_skipped: 0,
            reseeds,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        while report.n_checked < CHECKED_PARAMS.min(n_params) {
            if report.n_skipped > 20 * CHECKED_PARAMS {
                break;
            }
            let k = rng.gen_range(0..n_params);
            let w0 = params.weights[k];
            params.weights[k] = w0 + FD_STEP;
            let (lp, pp) = loss_and_pattern(&params, &inputs, &label_refs, &weights)?;
            params.weights[k] = w0 - FD_STEP;
            let (lm, pm) = loss_and_pattern(&params, &inputs, &label_refs, &weights)?;
            params.weights[k] = w0;
            if pp != base_pattern || pm != base_pattern {
                report.n_skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let analytic = grads[k];
            let abs = (numeric - analytic).abs();
            let rel = abs / numeric.abs().max(analytic.abs()).max(REL_ERROR_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.n_checked += 1;
        }
        if report.n_checked < CHECKED_PARAMS.min(n_params) {
            reseeds += 1;
            continue;
        }
        return Ok(report);
    }
}

/// Gradient at a frozen prediction that already matches the labels: the head
/// bias strongly favors `class` and every label is `class`.
pub fn gradient_at_perfect_prediction(kind: NetworkKind, arch: &Architecture, class: ClassLabel, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor> = (0..2).map(|_| random_input(kind, &mut rng)).collect();
    let mut params = random_params(arch, &inputs, &mut rng)?;
    for (c, b) in params.head_bias_mut().iter_mut().enumerate() {
        *b = if c == class.index() { 60.0 } else { -60.0 };
    }
    let labels = LabelMap::filled(INPUT_SIZE, INPUT_SIZE, class);
    let (_, grads) = loss_and_gradient(
        &params,
        &inputs,
        &[&labels, &labels],
        &ClassWeights([0.7, 1.3, 2.1]),
        Mode::Eval,
    )?;
    Ok(grads)
}
