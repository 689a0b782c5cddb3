use std::path::{Path, PathBuf};

use log::{info, warn};

use super::stage::{train_stage, Upstream};
use super::{dataset_digest, hex_digest, StageReport, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::scene::Sample;
use crate::segnet::checkpoint::{load_network, save_bundle, save_network, CheckpointMeta};
use crate::segnet::{MergeNetBundle, NetworkKind, NetworkParams};

/// File names inside a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointLayout {
    pub dir: PathBuf,
}

impl CheckpointLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointLayout { dir: dir.into() }
    }

    pub fn stage_path(&self, kind: NetworkKind) -> PathBuf {
        self.dir.join(format!("{}.ckpt", kind.name()))
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.dir.join("mergenet.bundle")
    }
}

/// Digest a stage checkpoint must carry to be reused: training settings,
/// data, and for the refiner the exact upstream parameters.
fn resume_digest(
    kind: NetworkKind,
    config: &TrainConfig,
    data: &str,
    upstream: Option<Upstream<'_>>,
) -> String {
    let mut s = format!("{}|{data}", config.stage_digest(kind));
    if let Some(up) = upstream {
        s.push('|');
        s.push_str(&up.stripe.content_digest());
        s.push('|');
        s.push_str(&up.context.content_digest());
    }
    hex_digest(s.as_bytes())
}

/// Loads a stage checkpoint if it exists and was produced by the same
/// architecture and, when `digest` is given, the same settings.
pub fn load_stage_checkpoint(
    layout: &CheckpointLayout,
    kind: NetworkKind,
    config: &TrainConfig,
    digest: Option<&str>,
) -> Result<Option<(NetworkParams, CheckpointMeta)>> {
    let path = layout.stage_path(kind);
    if !path.exists() {
        return Ok(None);
    }
    let (name, params, meta) = load_network(&path)?;
    let expected = config.architecture(kind);
    if name != kind.name() || params.architecture() != &expected {
        warn!("{} holds `{name}` with a different architecture; ignoring it", path.display());
        return Ok(None);
    }
    if let Some(d) = digest {
        if meta.config_digest != d {
            info!("{} was trained with other settings or data; retraining", path.display());
            return Ok(None);
        }
    }
    Ok(Some((params, meta)))
}

fn save_stage(
    layout: &CheckpointLayout,
    kind: NetworkKind,
    config: &TrainConfig,
    params: &NetworkParams,
    report: &mut StageReport,
    digest: String,
) -> Result<()> {
    let path = layout.stage_path(kind);
    let meta = CheckpointMeta {
        stage: kind.name().to_string(),
        epoch: report.best_epoch,
        seed: config.seed,
        config_digest: digest,
    };
    save_network(&path, kind.name(), params, &meta)?;
    report.checkpoint = Some(path.display().to_string());
    Ok(())
}

fn bundle_meta(bundle: &MergeNetBundle, seed: u64) -> CheckpointMeta {
    let parts = format!(
        "{}|{}|{}",
        bundle.stripe.content_digest(),
        bundle.context.content_digest(),
        bundle.refiner.content_digest()
    );
    CheckpointMeta {
        stage: "bundle".into(),
        epoch: 0,
        seed,
        config_digest: hex_digest(parts.as_bytes()),
    }
}

/// Stripe, then context, then refiner. With a checkpoint directory every
/// finished stage is saved, matching checkpoints are reused, and the
/// assembled bundle is written at the end.
pub fn train_mergenet(
    config: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    checkpoint_dir: Option<&Path>,
) -> Result<(MergeNetBundle, TrainReport)> {
    config.validate()?;
    let layout = checkpoint_dir.map(CheckpointLayout::new);
    let mut data = dataset_digest(train);
    data.push_str(&dataset_digest(val));
    let mut report = TrainReport::default();
    let mut trained: Vec<NetworkParams> = Vec::new();
    for kind in NetworkKind::ALL {
        let upstream = (kind == NetworkKind::Refiner).then(|| Upstream {
            stripe: &trained[0],
            context: &trained[1],
        });
        let digest = resume_digest(kind, config, &data, upstream);
        let reused = match &layout {
            Some(l) => load_stage_checkpoint(l, kind, config, Some(&digest))?,
            None => None,
        };
        let params = match reused {
            Some((params, meta)) => {
                info!("{kind} stage: reusing checkpoint from epoch {}", meta.epoch);
                report.stages.push(StageReport {
                    stage: kind,
                    epochs: Vec::new(),
                    best_epoch: meta.epoch,
                    stopping_epoch: 0,
                    checkpoint: layout.as_ref().map(|l| l.stage_path(kind).display().to_string()),
                    resumed: true,
                });
                params
            }
            None => {
                let (params, mut stage_report) = train_stage(kind, config, train, val, upstream)?;
                if let Some(l) = &layout {
                    save_stage(l, kind, config, &params, &mut stage_report, digest)?;
                }
                report.stages.push(stage_report);
                params
            }
        };
        trained.push(params);
    }
    let refiner = trained.pop().expect("three stages");
    let context = trained.pop().expect("three stages");
    let stripe = trained.pop().expect("three stages");
    let bundle = MergeNetBundle::new(stripe, context, refiner, config.stripe_width)?;
    if let Some(l) = &layout {
        let path = l.bundle_path();
        save_bundle(&path, &bundle, &bundle_meta(&bundle, config.seed))?;
        report.bundle = Some(path.display().to_string());
    }
    Ok((bundle, report))
}

/// Retrains one stage unconditionally and saves its checkpoint. The
/// refiner stage loads the stripe and context checkpoints, which must
/// exist. Returns the bundle path when all three checkpoints are present.
pub fn train_single_stage(
    kind: NetworkKind,
    config: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    checkpoint_dir: &Path,
) -> Result<(StageReport, Option<PathBuf>)> {
    config.validate()?;
    let layout = CheckpointLayout::new(checkpoint_dir);
    let mut data = dataset_digest(train);
    data.push_str(&dataset_digest(val));
    let require = |k: NetworkKind| -> Result<NetworkParams> {
        let path = layout.stage_path(k);
        match load_stage_checkpoint(&layout, k, config, None)? {
            Some((p, _)) => Ok(p),
            None => Err(Error::InvalidInput(format!(
                "the {kind} stage needs a {k} checkpoint compatible with this config at {}; run `train --stage {k}` first",
                path.display()
            ))),
        }
    };
    let (stripe, context) = if kind == NetworkKind::Refiner {
        (Some(require(NetworkKind::Stripe)?), Some(require(NetworkKind::Context)?))
    } else {
        (None, None)
    };
    let upstream = match (&stripe, &context) {
        (Some(s), Some(c)) => Some(Upstream { stripe: s, context: c }),
        _ => None,
    };
    let digest = resume_digest(kind, config, &data, upstream);
    let (params, mut report) = train_stage(kind, config, train, val, upstream)?;
    save_stage(&layout, kind, config, &params, &mut report, digest)?;

    let mut nets = Vec::new();
    for k in NetworkKind::ALL {
        match load_stage_checkpoint(&layout, k, config, None)? {
            Some((p, _)) => nets.push(p),
            None => return Ok((report, None)),
        }
    }
    let refiner = nets.pop().expect("three networks");
    let context = nets.pop().expect("three networks");
    let stripe = nets.pop().expect("three networks");
    let bundle = MergeNetBundle::new(stripe, context, refiner, config.stripe_width)?;
    let path = layout.bundle_path();
    save_bundle(&path, &bundle, &bundle_meta(&bundle, config.seed))?;
    Ok((report, Some(path)))
}
