use crate::error::{Error, Result};
use crate::scene::{ClassWeights, LabelMap, NUM_CLASSES};
use crate::segnet::{ProbMap, Tensor};

/// Probabilities are clamped to `[PROB_EPS, 1]` before the logarithm.
pub const PROB_EPS: f64 = 1e-7;

fn check_shapes(h: usize, w: usize, labels: &LabelMap) -> Result<()> {
    if (h, w) != (labels.height(), labels.width()) {
        return Err(Error::Structure(format!(
            "prediction is {h}x{w} but labels are {}x{}",
            labels.height(),
            labels.width()
        )));
    }
    Ok(())
}

/// Mean over pixels of `weight(label) * -ln p(label)`.
pub fn weighted_cross_entropy(prob: &ProbMap, labels: &LabelMap, weights: &ClassWeights) -> Result<f64> {
    check_shapes(prob.height(), prob.width(), labels)?;
    let data = prob.grid().data();
    let mut sum = 0.0;
    for (i, &l) in labels.as_slice().iter().enumerate() {
        let p = data[i * NUM_CLASSES + l.index()].max(PROB_EPS);
        sum += weights.get(l) * -p.ln();
    }
    Ok(sum / labels.as_slice().len() as f64)
}

/// Loss over a batch of logit maps together with its gradient with respect
/// to every logit. The loss is averaged over all pixels of the batch.
pub fn loss_and_logit_grad(
    logits: &[Tensor],
    labels: &[&LabelMap],
    weights: &ClassWeights,
) -> Result<(f64, Vec<Tensor>)> {
    if logits.len() != labels.len() {
        return Err(Error::Structure(format!(
            "{} predictions for {} label maps",
            logits.len(),
            labels.len()
        )));
    }
    let n_total: usize = labels.iter().map(|l| l.as_slice().len()).sum();
    let inv_n = 1.0 / n_total as f64;
    let mut sum = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (z, l) in logits.iter().zip(labels) {
        check_shapes(z.height, z.width, l)?;
        let prob = ProbMap::from_logits(z);
        let p = prob.grid().data();
        let plane = z.plane_len();
        let mut g = Tensor::zeros(NUM_CLASSES, z.height, z.width);
        for (i, &label) in l.as_slice().iter().enumerate() {
            let t = label.index();
            let w = weights.get(label);
            let pt = p[i * NUM_CLASSES + t];
            sum += w * -pt.max(PROB_EPS).ln();
            // Below the clamp the loss is flat in the logits.
            if pt < PROB_EPS {
                continue;
            }
            for c in 0..NUM_CLASSES {
                let onehot = if c == t { 1.0 } else { 0.0 };
                g.data[c * plane + i] = w * inv_n * (p[i * NUM_CLASSES + c] - onehot);
            }
        }
        grads.push(g);
    }
    Ok((sum * inv_n, grads))
}
