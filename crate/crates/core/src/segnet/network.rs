//! SegNet-style encoder-decoder networks over a flat parameter vector.
//!
//! Every encoder stage is conv → batch norm → ReLU → 2×2 max-pool (indices
//! recorded); every decoder stage is max-unpool with the mirrored indices →
//! conv → batch norm → ReLU. A 1×1 head maps the decoded features to three
//! class logits. The dual-branch variant runs two such trunks on disjoint
//! input channel ranges and feeds their concatenated features to one head.

use std::fmt;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{
    bn_backward, bn_forward, conv_backward, conv_forward, max_pool2, max_pool2_backward,
    max_unpool2, max_unpool2_backward, relu_backward, relu_forward, BnCache, BnSpec, ConvSpec,
    Mode, Tensor,
};
use crate::error::{Error, Result};
use crate::scene::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDecoderConfig {
    pub n_stages: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub n_classes: usize,
}

impl EncoderDecoderConfig {
    pub fn new(in_channels: usize, channels: &[usize]) -> Self {
        EncoderDecoderConfig {
            n_stages: channels.len(),
            channels: channels.to_vec(),
            kernel_size: 3,
            in_channels,
            n_classes: NUM_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::InvalidInput("n_stages must be at least 1".into()));
        }
        if self.channels.len() != self.n_stages {
            return Err(Error::InvalidInput(format!(
                "{} channel entries for {} stages",
                self.channels.len(),
                self.n_stages
            )));
        }
        if self.channels.contains(&0) || self.in_channels == 0 {
            return Err(Error::InvalidInput("channel counts must be positive".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "kernel size {} must be odd",
                self.kernel_size
            )));
        }
        if self.n_classes != NUM_CLASSES {
            return Err(Error::InvalidInput(format!(
                "n_classes must be {NUM_CLASSES}, got {}",
                self.n_classes
            )));
        }
        Ok(())
    }
}

impl fmt::Display for EncoderDecoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "in{}:k{}:s{}:c{}",
            self.in_channels,
            self.kernel_size,
            self.n_stages,
            self.channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("-")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// One trunk over all input channels.
    Single(EncoderDecoderConfig),
    /// RGB trunk over channels 0..3 and disparity trunk over channel 3.
    DualBranch {
        rgb: EncoderDecoderConfig,
        disparity: EncoderDecoderConfig,
    },
}

impl Architecture {
    pub fn trunk_configs(&self) -> Vec<&EncoderDecoderConfig> {
        match self {
            Architecture::Single(c) => vec![c],
            Architecture::DualBranch { rgb, disparity } => vec![rgb, disparity],
        }
    }

    pub fn input_channels(&self) -> usize {
        self.trunk_configs().iter().map(|c| c.in_channels).sum()
    }

    /// Spatial dims must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << self
            .trunk_configs()
            .iter()
            .map(|c| c.n_stages)
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.trunk_configs() {
            c.validate()?;
        }
        if let Architecture::DualBranch { rgb, disparity } = self {
            if rgb.in_channels != 3 || disparity.in_channels != 1 {
                return Err(Error::InvalidInput(
                    "dual-branch network needs a 3-channel rgb and a 1-channel disparity trunk"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Stable description used for fingerprints.
    pub fn describe(&self) -> String {
        match self {
            Architecture::Single(c) => format!("single[{c}]"),
            Architecture::DualBranch { rgb, disparity } => {
                format!("dual[rgb={rgb}|disparity={disparity}]")
            }
        }
    }
}

/// The three networks of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Stripe,
    Context,
    Refiner,
}

impl NetworkKind {
    pub const ALL: [NetworkKind; 3] = [NetworkKind::Stripe, NetworkKind::Context, NetworkKind::Refiner];

    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Stripe => "stripe",
            NetworkKind::Context => "context",
            NetworkKind::Refiner => "refiner",
        }
    }

    /// Input channel count: RGBD for stripes, RGB for context, two stacked
    /// probability maps for the refiner.
    pub fn input_channels(self) -> usize {
        match self {
            NetworkKind::Stripe => 4,
            NetworkKind::Context => 3,
            NetworkKind::Refiner => 2 * NUM_CLASSES,
        }
    }

    pub fn architecture(self, channels: &[usize]) -> Architecture {
        match self {
            NetworkKind::Stripe => Architecture::DualBranch {
                rgb: EncoderDecoderConfig::new(3, channels),
                disparity: EncoderDecoderConfig::new(1, channels),
            },
            _ => Architecture::Single(EncoderDecoderConfig::new(self.input_channels(), channels)),
        }
    }

    pub fn default_channels(self) -> &'static [usize] {
        match self {
            NetworkKind::Stripe | NetworkKind::Context => &[16, 32, 64, 64],
            NetworkKind::Refiner => &[16, 32],
        }
    }

    pub fn default_architecture(self) -> Architecture {
        self.architecture(self.default_channels())
    }

    /// Two stages of at most 8 channels, for gradient checks.
    pub fn micro_architecture(self) -> Architecture {
        self.architecture(&[4, 8])
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stripe" => Ok(NetworkKind::Stripe),
            "context" => Ok(NetworkKind::Context),
            "refiner" => Ok(NetworkKind::Refiner),
            other => Err(Error::InvalidInput(format!("unknown network `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    conv: ConvSpec,
    bn: BnSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TrunkLayout {
    inputs: Range<usize>,
    enc: Vec<Block>,
    /// Decoder blocks in execution order (innermost first).
    dec: Vec<Block>,
    out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    trunks: Vec<TrunkLayout>,
    head: ConvSpec,
    n_weights: usize,
    n_stats: usize,
}

struct Allocator {
    weights: usize,
    stats: usize,
}

impl Allocator {
    fn block(&mut self, cin: usize, cout: usize, k: usize) -> Block {
        let conv = self.conv(cin, cout, k);
        let bn = BnSpec {
            channels: cout,
            gamma_offset: self.weights,
            beta_offset: self.weights + cout,
            mean_offset: self.stats,
            var_offset: self.stats + cout,
        };
        self.weights += 2 * cout;
        self.stats += 2 * cout;
        Block { conv, bn }
    }

    fn conv(&mut self, cin: usize, cout: usize, k: usize) -> ConvSpec {
        let spec = ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            weight_offset: self.weights,
            bias_offset: self.weights + cout * cin * k * k,
        };
        self.weights += cout * cin * k * k + cout;
        spec
    }
}

impl Layout {
    fn new(arch: &Architecture) -> Layout {
        let mut alloc = Allocator {
            weights: 0,
            stats: 0,
        };
        let mut trunks = Vec::new();
        let mut first_channel = 0;
        for cfg in arch.trunk_configs() {
            let k = cfg.kernel_size;
            let c = &cfg.channels;
            let enc = (0..cfg.n_stages)
                .map(|i| {
                    let cin = if i == 0 { cfg.in_channels } else { c[i - 1] };
                    alloc.block(cin, c[i], k)
                })
                .collect();
            let dec = (0..cfg.n_stages)
                .rev()
                .map(|i| {
                    let cout = if i == 0 { c[0] } else { c[i - 1] };
                    alloc.block(c[i], cout, k)
                })
                .collect();
            trunks.push(TrunkLayout {
                inputs: first_channel..first_channel + cfg.in_channels,
                enc,
                dec,
                out_channels: c[0],
            });
            first_channel += cfg.in_channels;
        }
        let features: usize = trunks.iter().map(|t| t.out_channels).sum();
        let head = alloc.conv(features, NUM_CLASSES, 1);
        Layout {
            trunks,
            head,
            n_weights: alloc.weights,
            n_stats: alloc.stats,
        }
    }

    fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.trunks
            .iter()
            .flat_map(|t| t.enc.iter().chain(t.dec.iter()))
    }
}

/// Learnable weights and batch-norm running statistics of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    layout: Layout,
    pub weights: Vec<f64>,
    pub running_stats: Vec<f64>,
}

impl NetworkParams {
    /// All weights and statistics zero except unit running variances.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut params = NetworkParams {
            weights: vec![0.0; layout.n_weights],
            running_stats: vec![0.0; layout.n_stats],
            arch,
            layout,
        };
        let blocks: Vec<Block> = params.layout.blocks().copied().collect();
        for b in blocks {
            params.running_stats[b.bn.var_offset..b.bn.var_offset + b.bn.channels].fill(1.0);
        }
        Ok(params)
    }

    /// He-normal convolution weights, zero biases, unit BN scale.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut params = NetworkParams::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<Block> = params.layout.blocks().copied().collect();
        let mut convs: Vec<ConvSpec> = blocks.iter().map(|b| b.conv).collect();
        convs.push(params.layout.head);
        for conv in convs {
            let std = (2.0 / conv.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut params.weights[conv.weight_offset..conv.weight_offset + conv.weight_len()]
            {
                *w = normal.sample(&mut rng);
            }
        }
        for b in blocks {
            params.weights[b.bn.gamma_offset..b.bn.gamma_offset + b.bn.channels].fill(1.0);
        }
        Ok(params)
    }

    pub fn from_parts(arch: Architecture, weights: Vec<f64>, running_stats: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if weights.len() != layout.n_weights || running_stats.len() != layout.n_stats {
            return Err(Error::Structure(format!(
                "architecture {} needs {} weights and {} statistics, got {} and {}",
                arch.describe(),
                layout.n_weights,
                layout.n_stats,
                weights.len(),
                running_stats.len()
            )));
        }
        Ok(NetworkParams {
            arch,
            layout,
            weights,
            running_stats,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_weights(&self) -> usize {
        self.layout.n_weights
    }

    /// Hex digest of the architecture; equal fingerprints mean the
    /// parameter vectors are interchangeable.
    pub fn fingerprint(&self) -> String {
        architecture_fingerprint(&self.arch)
    }

    /// Hex digest of architecture, weights and running statistics.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.arch.describe().as_bytes());
        for v in self.weights.iter().chain(&self.running_stats) {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Batch-norm placements in forward order.
    pub fn batch_norms(&self) -> Vec<BnSpec> {
        self.layout.blocks().map(|b| b.bn).collect()
    }

    /// Head bias slice, mostly useful for constructing fixed predictions.
    pub fn head_bias_mut(&mut self) -> &mut [f64] {
        let head = self.layout.head;
        &mut self.weights[head.bias_offset..head.bias_offset + head.out_channels]
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let need = self.arch.input_channels();
        if x.channels != need {
            return Err(Error::Structure(format!(
                "network expects {need} input channels, got {}",
                x.channels
            )));
        }
        let d = self.arch.divisor();
        if x.height == 0 || x.width == 0 || !x.height.is_multiple_of(d) || !x.width.is_multiple_of(d) {
            return Err(Error::Structure(format!(
                "input {}x{} is not divisible by {d} in both dimensions",
                x.height, x.width
            )));
        }
        Ok(())
    }

    /// Logits for every input. Inputs must share a shape in train mode.
    pub fn forward(&self, inputs: &[Tensor], mode: Mode) -> Result<Vec<Tensor>> {
        match mode {
            // Eval mode has no cross-sample coupling; run samples one by one
            // so batching cannot change any output.
            Mode::Eval => inputs
                .iter()
                .map(|x| Ok(self.forward_cached(std::slice::from_ref(x), mode)?.0.remove(0)))
                .collect(),
            Mode::Train => Ok(self.forward_cached(inputs, mode)?.0),
        }
    }

    /// Single-input forward returning `(logits, decoded features)`.
    pub fn encdec_forward(&self, input: &Tensor, mode: Mode) -> Result<(Tensor, Tensor)> {
        let (mut logits, mut cache) = self.forward_cached(std::slice::from_ref(input), mode)?;
        Ok((logits.remove(0), cache.features.remove(0)))
    }

    /// Forward pass that keeps everything backward needs.
    pub fn forward_cached(&self, inputs: &[Tensor], mode: Mode) -> Result<(Vec<Tensor>, ForwardCache)> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        for x in inputs {
            self.check_input(x)?;
            if mode == Mode::Train && (x.height, x.width) != (inputs[0].height, inputs[0].width) {
                return Err(Error::Structure("train-mode batch with mixed shapes".into()));
            }
        }
        let mut trunk_caches = Vec::with_capacity(self.layout.trunks.len());
        let mut trunk_outputs = Vec::with_capacity(self.layout.trunks.len());
        for trunk in &self.layout.trunks {
            let xs: Vec<Tensor> = inputs
                .iter()
                .map(|x| x.channel_range(trunk.inputs.start, trunk.inputs.end))
                .collect();
            let (out, cache) = self.trunk_forward(trunk, xs, mode);
            trunk_outputs.push(out);
            trunk_caches.push(cache);
        }
        let features: Vec<Tensor> = (0..inputs.len())
            .map(|n| {
                let parts: Vec<&Tensor> = trunk_outputs.iter().map(|t| &t[n]).collect();
                Tensor::concat_channels(&parts)
            })
            .collect();
        let logits = features
            .iter()
            .map(|f| conv_forward(&self.weights, &self.layout.head, f))
            .collect();
        Ok((
            logits,
            ForwardCache {
                mode,
                trunks: trunk_caches,
                features,
            },
        ))
    }

    fn block_forward(&self, block: &Block, xs: Vec<Tensor>, mode: Mode) -> (Vec<Tensor>, BlockCache) {
        let zs: Vec<Tensor> = xs
            .iter()
            .map(|x| conv_forward(&self.weights, &block.conv, x))
            .collect();
        let (mut outs, bn) = bn_forward(&self.weights, &self.running_stats, &block.bn, &zs, mode);
        let mut min_abs = f64::INFINITY;
        for o in &mut outs {
            for v in &o.data {
                min_abs = min_abs.min(v.abs());
            }
            relu_forward(o);
        }
        (
            outs.clone(),
            BlockCache {
                conv_in: xs,
                bn,
                out: outs,
                min_abs_preactivation: min_abs,
            },
        )
    }

    fn trunk_forward(&self, trunk: &TrunkLayout, xs: Vec<Tensor>, mode: Mode) -> (Vec<Tensor>, TrunkCache) {
        let mut cur = xs;
        let mut enc = Vec::with_capacity(trunk.enc.len());
        for block in &trunk.enc {
            let (outs, cache) = self.block_forward(block, cur, mode);
            let mut pooled = Vec::with_capacity(outs.len());
            let mut indices = Vec::with_capacity(outs.len());
            for o in &outs {
                let (p, idx) = max_pool2(o);
                pooled.push(p);
                indices.push(idx);
            }
            let (h, w) = (outs[0].height, outs[0].width);
            enc.push(EncoderCache {
                block: cache,
                indices,
                unpooled: (h, w),
            });
            cur = pooled;
        }
        let mut dec = Vec::with_capacity(trunk.dec.len());
        for (j, block) in trunk.dec.iter().enumerate() {
            let mirror = &enc[trunk.enc.len() - 1 - j];
            let (h, w) = mirror.unpooled;
            let up: Vec<Tensor> = cur
                .iter()
                .zip(&mirror.indices)
                .map(|(x, idx)| max_unpool2(x, idx, h, w))
                .collect();
            let (outs, cache) = self.block_forward(block, up, mode);
            dec.push(cache);
            cur = outs;
        }
        (cur, TrunkCache { enc, dec })
    }

    /// Parameter gradient of `Σ dlogits · logits` for a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[Tensor]) -> Vec<f64> {
        let mut grads = vec![0.0; self.layout.n_weights];
        let dfeatures: Vec<Tensor> = cache
            .features
            .iter()
            .zip(dlogits)
            .map(|(f, d)| conv_backward(&self.weights, &self.layout.head, f, d, &mut grads))
            .collect();
        let mut start = 0;
        for (trunk, tc) in self.layout.trunks.iter().zip(&cache.trunks) {
            let d: Vec<Tensor> = dfeatures
                .iter()
                .map(|df| df.channel_range(start, start + trunk.out_channels))
                .collect();
            start += trunk.out_channels;
            self.trunk_backward(trunk, tc, d, cache.mode, &mut grads);
        }
        grads
    }

    fn block_backward(
        &self,
        block: &Block,
        cache: &BlockCache,
        mut dys: Vec<Tensor>,
        mode: Mode,
        grads: &mut [f64],
    ) -> Vec<Tensor> {
        for (d, o) in dys.iter_mut().zip(&cache.out) {
            relu_backward(o, d);
        }
        let dzs = bn_backward(&self.weights, &block.bn, &cache.bn, &dys, mode, grads);
        cache
            .conv_in
            .iter()
            .zip(&dzs)
            .map(|(x, dz)| conv_backward(&self.weights, &block.conv, x, dz, grads))
            .collect()
    }

    fn trunk_backward(
        &self,
        trunk: &TrunkLayout,
        cache: &TrunkCache,
        dfeatures: Vec<Tensor>,
        mode: Mode,
        grads: &mut [f64],
    ) {
        let mut d = dfeatures;
        let n_enc = trunk.enc.len();
        for j in (0..trunk.dec.len()).rev() {
            let du = self.block_backward(&trunk.dec[j], &cache.dec[j], d, mode, grads);
            let mirror = &cache.enc[n_enc - 1 - j];
            let (h, w) = mirror.unpooled;
            d = du
                .iter()
                .zip(&mirror.indices)
                .map(|(g, idx)| max_unpool2_backward(g, idx, h / 2, w / 2))
                .collect();
        }
        for i in (0..n_enc).rev() {
            let ec = &cache.enc[i];
            let (h, w) = ec.unpooled;
            let dpre: Vec<Tensor> = d
                .iter()
                .zip(&ec.indices)
                .map(|(g, idx)| max_pool2_backward(g, idx, h, w))
                .collect();
            d = self.block_backward(&trunk.enc[i], &ec.block, dpre, mode, grads);
        }
    }

    /// Overwrites the running statistics with per-layer (mean, variance)
    /// pairs given in the same order as [`ForwardCache::batch_stats`].
    pub fn set_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
        let blocks: Vec<Block> = self.layout.blocks().copied().collect();
        if stats.len() != blocks.len() {
            return Err(Error::Structure(format!(
                "{} statistic pairs for {} batch-norm layers",
                stats.len(),
                blocks.len()
            )));
        }
        for (b, (mean, var)) in blocks.iter().zip(stats) {
            let c = b.bn.channels;
            self.running_stats[b.bn.mean_offset..b.bn.mean_offset + c].copy_from_slice(mean);
            self.running_stats[b.bn.var_offset..b.bn.var_offset + c].copy_from_slice(var);
        }
        Ok(())
    }
}

pub fn architecture_fingerprint(arch: &Architecture) -> String {
    let digest = Sha256::digest(arch.describe().as_bytes());
    hex(&digest[..8])
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
struct BlockCache {
    conv_in: Vec<Tensor>,
    bn: BnCache,
    out: Vec<Tensor>,
    min_abs_preactivation: f64,
}

#[derive(Debug, Clone)]
struct EncoderCache {
    block: BlockCache,
    indices: Vec<Vec<u32>>,
    unpooled: (usize, usize),
}

#[derive(Debug, Clone)]
struct TrunkCache {
    enc: Vec<EncoderCache>,
    dec: Vec<BlockCache>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    trunks: Vec<TrunkCache>,
    features: Vec<Tensor>,
}

impl ForwardCache {
    fn blocks(&self) -> impl Iterator<Item = &BlockCache> {
        self.trunks
            .iter()
            .flat_map(|t| t.enc.iter().map(|e| &e.block).chain(t.dec.iter()))
    }

    /// Train-mode batch (mean, variance) per batch-norm layer.
    pub fn batch_stats(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.blocks()
            .map(|b| b.bn.batch_stats.clone().expect("train-mode forward"))
            .collect()
    }

    /// Smallest |input| seen by any ReLU.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.blocks()
            .map(|b| b.min_abs_preactivation)
            .fold(f64::INFINITY, f64::min)
    }

    /// ReLU on/off pattern and pooling winners; two passes with equal
    /// patterns evaluate the same piecewise-smooth branch.
    pub fn activation_pattern(&self) -> Vec<u32> {
        let mut pattern = Vec::new();
        for t in &self.trunks {
            for e in &t.enc {
                for o in &e.block.out {
                    pattern.extend(o.data.iter().map(|&v| (v > 0.0) as u32));
                }
                for idx in &e.indices {
                    pattern.extend_from_slice(idx);
                }
            }
            for b in &t.dec {
                for o in &b.out {
                    pattern.extend(o.data.iter().map(|&v| (v > 0.0) as u32));
                }
            }
        }
        pattern
    }

    pub fn features(&self) -> &[Tensor] {
        &self.features
    }
}
