//! Command-line front end: `synth`, `train`, `infer`, `eval` and `curve`.
//!
//! Exit codes: 0 on success, 1 for user or configuration errors, 2 for
//! internal failures. A failure prints exactly one `error:` line on stderr.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use image::RgbImage;
use log::info;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_components, evaluate_predictions, write_curve_csv, ComponentReport, MetricsReport,
};
use crate::scene::{
    load_dataset, save_label_png, save_png, ClassCounts, ClassLabel, DatasetIndex, LabelMap,
    Sample, SplitTag,
};
use crate::segnet::checkpoint::load_bundle;
use crate::segnet::{mergenet_stages, predict_labels, MergeNetBundle, NetworkKind};
use crate::synth::generate_dataset;
use crate::training::{train_mergenet, train_single_stage, CheckpointLayout, TrainReport};

#[derive(Debug, Parser)]
#[command(name = "mergenet", version, about = "Small road obstacle segmentation with stripe, context and refiner networks")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed everywhere.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    All,
    Stripe,
    Context,
    Refiner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for SplitTag {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Val => SplitTag::Val,
            SplitArg::Test => SplitTag::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic split under the data root.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Train the networks on the train split, validating on the val split.
    Train {
        #[arg(long, value_enum, default_value = "all")]
        stage: StageArg,
    },
    /// Predict label maps and color overlays for frames of a split.
    Infer {
        /// Defaults to the bundle in the checkpoint directory.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Frame ids to process; all frames when omitted.
        #[arg(long = "frame")]
        frames: Vec<String>,
        /// Also write the stripe, context and refiner outputs.
        #[arg(long)]
        dump_stages: bool,
    },
    /// Score predictions on a split and write the report and curve.
    Eval {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also score the stripe and context networks alone.
        #[arg(long)]
        components: bool,
        /// Score the ground truth against itself; no bundle needed.
        #[arg(long, conflicts_with = "components")]
        oracle: bool,
    },
    /// Re-emit the detection curve CSV from a saved report.
    Curve {
        /// Defaults to the test-split report of `eval`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Defaults to `<split>_curve.csv` next to the report.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Fixed display palette: road blue, off-road green, obstacle red.
pub fn class_color(label: ClassLabel) -> [u8; 3] {
    match label {
        ClassLabel::Road => [0, 0, 255],
        ClassLabel::OffRoad => [0, 255, 0],
        ClassLabel::Obstacle => [255, 0, 0],
    }
}

pub fn color_overlay(labels: &LabelMap) -> RgbImage {
    let bytes: Vec<u8> = labels.as_slice().iter().flat_map(|&l| class_color(l)).collect();
    RgbImage::from_raw(labels.width() as u32, labels.height() as u32, bytes).expect("overlay size")
}

pub fn save_overlay(labels: &LabelMap, path: &Path) -> Result<()> {
    save_png(&color_overlay(labels), path)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("MERGENET_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Synth { count, split } => cmd_synth(&cfg, *count, (*split).into()),
        Command::Train { stage } => cmd_train(&cfg, *stage),
        Command::Infer {
            bundle,
            split,
            frames,
            dump_stages,
        } => cmd_infer(&cfg, bundle.as_deref(), (*split).into(), frames, *dump_stages),
        Command::Eval {
            bundle,
            split,
            components,
            oracle,
        } => cmd_eval(&cfg, bundle.as_deref(), (*split).into(), *components, *oracle),
        Command::Curve { report, csv } => cmd_curve(&cfg, report.as_deref(), csv.as_deref()),
    }
}

pub fn cmd_synth(cfg: &RunConfig, count: usize, split: SplitTag) -> Result<()> {
    let root = cfg.data_root();
    let index = generate_dataset(&cfg.scene_for_split(split), count, &root, split)?;
    let mut counts = ClassCounts::default();
    for s in index.load_all()? {
        counts.add_labels(&s.labels);
    }
    println!("{split}: {} frames in {}", index.len(), index.split_dir().display());
    if counts.total() > 0 {
        let f = counts.fractions();
        println!(
            "class pixel fractions: road {:.4} off_road {:.4} obstacle {:.4}",
            f[0], f[1], f[2]
        );
    }
    Ok(())
}

fn load_split(cfg: &RunConfig, split: SplitTag) -> Result<(DatasetIndex, Vec<Sample>)> {
    let index = load_dataset(&cfg.data_root(), split, cfg.scene.disparity_max)?;
    let samples = index.load_all()?;
    Ok((index, samples))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(cfg: &RunConfig, stage: StageArg) -> Result<()> {
    let (_, train) = load_split(cfg, SplitTag::Train)?;
    let (_, val) = load_split(cfg, SplitTag::Val)?;
    let dir = cfg.checkpoint_dir();
    let report = match stage {
        StageArg::All => train_mergenet(&cfg.train, &train, &val, Some(&dir))?.1,
        single => {
            let kind = match single {
                StageArg::Stripe => NetworkKind::Stripe,
                StageArg::Context => NetworkKind::Context,
                _ => NetworkKind::Refiner,
            };
            let (stage_report, bundle) = train_single_stage(kind, &cfg.train, &train, &val, &dir)?;
            TrainReport {
                stages: vec![stage_report],
                bundle: bundle.map(|p| p.display().to_string()),
            }
        }
    };
    let path = cfg.output_dir.join("train_report.json");
    write_text(&path, &report.to_json())?;
    for s in &report.stages {
        if s.resumed {
            println!("{}: reused checkpoint", s.stage);
        } else {
            println!("{}: best epoch {} of {}", s.stage, s.best_epoch, s.stopping_epoch);
        }
    }
    match &report.bundle {
        Some(b) => println!("bundle: {b}"),
        None => println!("bundle not written; some stage checkpoints are missing"),
    }
    println!("report: {}", path.display());
    Ok(())
}

/// Loads a bundle and checks it matches the configured architectures.
fn load_checked_bundle(cfg: &RunConfig, path: Option<&Path>) -> Result<MergeNetBundle> {
    let path = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| CheckpointLayout::new(cfg.checkpoint_dir()).bundle_path());
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "bundle {} not found; run `train` first",
            path.display()
        )));
    }
    let (bundle, _) = load_bundle(&path)?;
    for kind in NetworkKind::ALL {
        let expected = cfg.train.architecture(kind);
        if bundle.network(kind).architecture() != &expected {
            return Err(Error::Checkpoint {
                path,
                msg: format!(
                    "{kind} network fingerprint {} does not match the config ({})",
                    bundle.network(kind).fingerprint(),
                    crate::segnet::architecture_fingerprint(&expected)
                ),
            });
        }
    }
    if bundle.stripe_width != cfg.train.stripe_width {
        return Err(Error::Checkpoint {
            path,
            msg: format!(
                "bundle stripe width {} differs from the config ({})",
                bundle.stripe_width, cfg.train.stripe_width
            ),
        });
    }
    Ok(bundle)
}

pub fn cmd_infer(
    cfg: &RunConfig,
    bundle: Option<&Path>,
    split: SplitTag,
    frames: &[String],
    dump_stages: bool,
) -> Result<()> {
    let bundle = load_checked_bundle(cfg, bundle)?;
    let index = load_dataset(&cfg.data_root(), split, cfg.scene.disparity_max)?;
    let mut selected = Vec::new();
    if frames.is_empty() {
        selected.extend(0..index.len());
    } else {
        for id in frames {
            let i = index
                .entries
                .iter()
                .position(|e| &e.frame_id == id)
                .ok_or_else(|| Error::InvalidInput(format!("frame `{id}` not found in the {split} split")))?;
            selected.push(i);
        }
    }
    let out = cfg.output_dir.join("infer");
    for i in selected {
        let sample = index.load_sample(i)?;
        let id = &sample.frame.frame_id;
        let stages = mergenet_stages(&bundle, &sample.frame).map_err(|e| e.in_frame(id))?;
        let labels = predict_labels(&stages.refined);
        save_label_png(&labels, &out.join(format!("{id}_labels.png")))?;
        save_overlay(&labels, &out.join(format!("{id}_overlay.png")))?;
        if dump_stages {
            save_overlay(&predict_labels(&stages.stripe), &out.join(format!("{id}_stripe.png")))?;
            save_overlay(&predict_labels(&stages.context), &out.join(format!("{id}_context.png")))?;
            save_overlay(&labels, &out.join(format!("{id}_refiner.png")))?;
        }
        info!("wrote predictions for frame {id}");
    }
    println!("predictions written to {}", out.display());
    Ok(())
}

fn print_rates(name: &str, r: &MetricsReport) {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into());
    println!(
        "{name}: PDR {} IDR {} PFP {} IFP {}",
        f(r.pdr),
        f(r.idr),
        f(r.pfp),
        f(r.ifp)
    );
}

pub fn cmd_eval(
    cfg: &RunConfig,
    bundle: Option<&Path>,
    split: SplitTag,
    components: bool,
    oracle: bool,
) -> Result<()> {
    let (_, samples) = load_split(cfg, split)?;
    let out = cfg.output_dir.join("eval");
    let json = out.join(format!("{split}_metrics.json"));
    let csv = out.join(format!("{split}_curve.csv"));
    let report = if oracle {
        let preds: Vec<LabelMap> = samples.iter().map(|s| s.labels.clone()).collect();
        evaluate_predictions(&preds, &samples, &cfg.metrics)?
    } else {
        let bundle = load_checked_bundle(cfg, bundle)?;
        let all: ComponentReport = evaluate_components(&bundle, &samples, &cfg.metrics)?;
        if components {
            let path = out.join(format!("{split}_components.json"));
            write_text(&path, &all.to_json())?;
            print_rates("stripe", &all.stripe);
            print_rates("context", &all.context);
            println!("components: {}", path.display());
        }
        all.mergenet
    };
    write_text(&json, &report.to_json())?;
    write_curve_csv(&csv, &report.curve)?;
    print_rates("mergenet", &report);
    println!("report: {}", json.display());
    println!("curve: {}", csv.display());
    Ok(())
}

pub fn cmd_curve(cfg: &RunConfig, report: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let path = report
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("eval").join("test_metrics.json"));
    let text = fs::read_to_string(&path).map_err(|e| Error::Load {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    let saved: MetricsReport = match serde_json::from_str::<MetricsReport>(&text) {
        Ok(r) => r,
        Err(_) => {
            serde_json::from_str::<ComponentReport>(&text)
                .map_err(|e| Error::Load {
                    path: path.clone(),
                    msg: format!("neither a metrics nor a component report: {e}"),
                })?
                .mergenet
        }
    };
    let curve = saved.with_edges(&cfg.metrics.curve_edges).curve;
    let csv_path = csv.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let stem = stem.strip_suffix("_metrics").unwrap_or(stem);
        path.with_file_name(format!("{stem}_curve.csv"))
    });
    write_curve_csv(&csv_path, &curve)?;
    println!("distance,cumulative_idr");
    for p in &curve {
        println!(
            "{},{}",
            p.distance,
            p.cumulative_idr.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    println!("curve: {}", csv_path.display());
    Ok(())
}
