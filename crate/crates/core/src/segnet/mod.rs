//! Stripe, context and refiner networks and their composition.
//!
//! ```text
//! frame ──split──► stripes ──stripe net (shared weights)──► reassemble ──► y_s ─┐
//!   └──── rgb ──────────────── context net ─────────────────────────────► y_c ─┴─► refiner ─► output
//! ```

pub mod checkpoint;
pub mod layers;
pub mod network;

use crate::error::{Error, Result};
use crate::grid::{reassemble_stripes, Grid};
use crate::scene::{split_into_stripes, ClassLabel, LabelMap, RgbdFrame, Stripe, NUM_CLASSES};

pub use layers::{Mode, Tensor};
pub use network::{
    architecture_fingerprint, Architecture, EncoderDecoderConfig, ForwardCache, NetworkKind,
    NetworkParams,
};

/// Per-pixel class probabilities, `H × W × 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap(Grid<f64>);

impl ProbMap {
    /// Validates shape and per-pixel normalization (within 1e-5).
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if grid.channels() != NUM_CLASSES {
            return Err(Error::Structure(format!(
                "probability map needs {NUM_CLASSES} channels, got {}",
                grid.channels()
            )));
        }
        for p in grid.data().chunks(NUM_CLASSES) {
            let s: f64 = p.iter().sum();
            if p.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidInput(format!(
                    "pixel probabilities {p:?} are not a distribution"
                )));
            }
        }
        Ok(ProbMap(grid))
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        ProbMap(Grid::filled(height, width, NUM_CLASSES, 1.0 / NUM_CLASSES as f64))
    }

    /// Probability 1 on the given label at every pixel.
    pub fn one_hot(labels: &LabelMap) -> Self {
        let mut g = Grid::filled(labels.height(), labels.width(), NUM_CLASSES, 0.0);
        for r in 0..labels.height() {
            for c in 0..labels.width() {
                g.set(r, c, labels.get(r, c).index(), 1.0);
            }
        }
        ProbMap(g)
    }

    /// Numerically stable per-pixel softmax of `3 × H × W` logits.
    pub fn from_logits(logits: &Tensor) -> Self {
        assert_eq!(logits.channels, NUM_CLASSES, "logit channels");
        let (h, w) = (logits.height, logits.width);
        let n = h * w;
        let mut data = Vec::with_capacity(n * NUM_CLASSES);
        for i in 0..n {
            let z = [logits.data[i], logits.data[n + i], logits.data[2 * n + i]];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e = z.map(|v| (v - m).exp());
            let s: f64 = e.iter().sum();
            data.extend(e.iter().map(|v| v / s));
        }
        ProbMap(Grid::from_vec(h, w, NUM_CLASSES, data).expect("softmax buffer"))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn probs(&self, row: usize, col: usize) -> &[f64] {
        self.0.pixel(row, col)
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }

    /// `3 × H × W` tensor view for feeding a downstream network.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w) = (self.height(), self.width());
        let n = h * w;
        let mut t = Tensor::zeros(NUM_CLASSES, h, w);
        for (i, p) in self.0.data().chunks(NUM_CLASSES).enumerate() {
            for (c, &v) in p.iter().enumerate() {
                t.data[c * n + i] = v;
            }
        }
        t
    }
}

fn planar(h: usize, w: usize, sources: &[(&[f32], usize, usize)]) -> Tensor {
    let channels: usize = sources.iter().map(|s| s.2).sum();
    let n = h * w;
    let mut t = Tensor::zeros(channels, h, w);
    let mut base = 0;
    for &(data, stride, count) in sources {
        for i in 0..n {
            for c in 0..count {
                t.data[(base + c) * n + i] = data[i * stride + c] as f64;
            }
        }
        base += count;
    }
    t
}

/// `4 × H × W` tensor: rgb channels followed by disparity.
pub fn rgbd_tensor(frame: &RgbdFrame) -> Tensor {
    planar(
        frame.height(),
        frame.width(),
        &[(frame.rgb().data(), 3, 3), (frame.disparity().data(), 1, 1)],
    )
}

pub fn rgb_tensor(frame: &RgbdFrame) -> Tensor {
    planar(frame.height(), frame.width(), &[(frame.rgb().data(), 3, 3)])
}

/// Channel-stacks the stripe and context outputs, stripe first.
pub fn refiner_input(y_s: &ProbMap, y_c: &ProbMap) -> Result<Tensor> {
    if (y_s.height(), y_s.width()) != (y_c.height(), y_c.width()) {
        return Err(Error::Structure(format!(
            "stripe map is {}x{} but context map is {}x{}",
            y_s.height(),
            y_s.width(),
            y_c.height(),
            y_c.width()
        )));
    }
    Ok(Tensor::concat_channels(&[&y_s.to_tensor(), &y_c.to_tensor()]))
}

fn expect_dual(params: &NetworkParams) -> Result<()> {
    match params.architecture() {
        Architecture::DualBranch { .. } => Ok(()),
        _ => Err(Error::InvalidInput(
            "stripe network needs separate rgb and disparity branches".into(),
        )),
    }
}

pub fn stripe_forward(params: &NetworkParams, stripe: &Stripe, mode: Mode) -> Result<ProbMap> {
    expect_dual(params)?;
    let (mut logits, _) =
        params.forward_cached(std::slice::from_ref(&rgbd_tensor(&stripe.frame)), mode)?;
    Ok(ProbMap::from_logits(&logits.remove(0)))
}

/// Runs a batch of stripes; in eval mode identical to one call per stripe.
pub fn stripe_forward_batch(params: &NetworkParams, stripes: &[Stripe], mode: Mode) -> Result<Vec<ProbMap>> {
    expect_dual(params)?;
    let inputs: Vec<Tensor> = stripes.iter().map(|s| rgbd_tensor(&s.frame)).collect();
    Ok(params
        .forward(&inputs, mode)?
        .iter()
        .map(ProbMap::from_logits)
        .collect())
}

pub fn context_forward(params: &NetworkParams, frame: &RgbdFrame, mode: Mode) -> Result<ProbMap> {
    let (logits, _) = params.encdec_forward(&rgb_tensor(frame), mode)?;
    Ok(ProbMap::from_logits(&logits))
}

pub fn refiner_forward(params: &NetworkParams, y_s: &ProbMap, y_c: &ProbMap, mode: Mode) -> Result<ProbMap> {
    let (logits, _) = params.encdec_forward(&refiner_input(y_s, y_c)?, mode)?;
    Ok(ProbMap::from_logits(&logits))
}

/// Stripe network applied to every stripe of a frame (eval mode), with the
/// per-stripe outputs placed back side by side.
pub fn stripe_map(params: &NetworkParams, frame: &RgbdFrame, stripe_width: usize) -> Result<ProbMap> {
    let stripes = split_into_stripes(frame, None, stripe_width)?;
    let maps = stripe_forward_batch(params, &stripes, Mode::Eval)?;
    let parts = stripes
        .iter()
        .zip(maps)
        .map(|(s, m)| (s.index, m.into_grid()))
        .collect();
    Ok(ProbMap(reassemble_stripes(parts)?))
}

/// The three trained networks plus the stripe width they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeNetBundle {
    pub stripe: NetworkParams,
    pub context: NetworkParams,
    pub refiner: NetworkParams,
    pub stripe_width: usize,
}

impl MergeNetBundle {
    pub fn new(
        stripe: NetworkParams,
        context: NetworkParams,
        refiner: NetworkParams,
        stripe_width: usize,
    ) -> Result<Self> {
        expect_dual(&stripe)?;
        if context.architecture().input_channels() != NetworkKind::Context.input_channels() {
            return Err(Error::Structure("context network must take 3 rgb channels".into()));
        }
        if refiner.architecture().input_channels() != NetworkKind::Refiner.input_channels() {
            return Err(Error::Structure(format!(
                "refiner must take {} channels",
                NetworkKind::Refiner.input_channels()
            )));
        }
        if stripe_width == 0 || !stripe_width.is_multiple_of(stripe.architecture().divisor()) {
            return Err(Error::Structure(format!(
                "stripe width {stripe_width} incompatible with the stripe network depth"
            )));
        }
        Ok(MergeNetBundle {
            stripe,
            context,
            refiner,
            stripe_width,
        })
    }

    pub fn network(&self, kind: NetworkKind) -> &NetworkParams {
        match kind {
            NetworkKind::Stripe => &self.stripe,
            NetworkKind::Context => &self.context,
            NetworkKind::Refiner => &self.refiner,
        }
    }
}

/// Outputs of every stage for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs {
    pub stripe: ProbMap,
    pub context: ProbMap,
    pub refined: ProbMap,
}

pub fn mergenet_stages(bundle: &MergeNetBundle, frame: &RgbdFrame) -> Result<StageOutputs> {
    let stripe = stripe_map(&bundle.stripe, frame, bundle.stripe_width)?;
    let context = context_forward(&bundle.context, frame, Mode::Eval)?;
    let refined = refiner_forward(&bundle.refiner, &stripe, &context, Mode::Eval)?;
    Ok(StageOutputs {
        stripe,
        context,
        refined,
    })
}

/// Full pipeline: refiner over (reassembled stripe output, context output).
pub fn mergenet_forward(bundle: &MergeNetBundle, frame: &RgbdFrame) -> Result<ProbMap> {
    Ok(mergenet_stages(bundle, frame)?.refined)
}

/// Per-pixel argmax; ties go to the lowest class code.
pub fn predict_labels(prob: &ProbMap) -> LabelMap {
    let grid = prob.grid();
    let labels: Vec<ClassLabel> = grid
        .data()
        .chunks(NUM_CLASSES)
        .map(|p| {
            let mut best = 0;
            for c in 1..NUM_CLASSES {
                if p[c] > p[best] {
                    best = c;
                }
            }
            ClassLabel::ALL[best]
        })
        .collect();
    LabelMap::from_grid(Grid::from_vec(grid.height(), grid.width(), 1, labels).expect("label buffer"))
        .expect("single channel")
}
