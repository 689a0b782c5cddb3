//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Unknown or repeated keys are errors that name the
//! line. Lists are comma separated. Relative paths resolve against
//! `output_dir`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{even_edges, MetricsConfig};
use crate::scene::{ClassWeights, SplitTag};
use crate::synth::SceneParams;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub data_root: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub seed: u64,
    pub scene: SceneParams,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub curve_bins: usize,
    pub curve_max_distance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            output_dir: PathBuf::from("out"),
            data_root: PathBuf::from("data"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            seed: 0,
            scene: SceneParams::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            curve_bins: 10,
            curve_max_distance: 20.0,
        };
        c.train.stripe_width = c.scene.stripe_width;
        c.sync();
        c
    }
}

pub const KEYS: &[&str] = &[
    "output_dir",
    "data_root",
    "checkpoint_dir",
    "seed",
    "height",
    "width",
    "stripe_width",
    "n_obstacles_min",
    "n_obstacles_max",
    "obstacle_size_min",
    "obstacle_size_max",
    "horizon",
    "road_top_width",
    "road_bottom_width",
    "road_center_jitter",
    "distractor_density",
    "disparity_far",
    "disparity_near",
    "disparity_max",
    "learning_rate",
    "batch_stripe",
    "batch_context",
    "batch_refiner",
    "max_epochs",
    "patience",
    "stripe_channels",
    "context_channels",
    "refiner_channels",
    "class_weights",
    "curve_bins",
    "curve_max_distance",
    "ifp_overlap_max",
    "min_instance_px",
    "baseline_constant",
];

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|p| parse_num(p.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    msg: format!("key `{key}` given twice"),
                });
            }
            cfg.set(key, value).map_err(|msg| Error::Config {
                line,
                msg: format!("key `{key}`: {msg}"),
            })?;
        }
        cfg.sync();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        RunConfig::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.scene;
        let t = &mut self.train;
        let m = &mut self.metrics;
        match key {
            "output_dir" => self.output_dir = PathBuf::from(v),
            "data_root" => self.data_root = PathBuf::from(v),
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(v),
            "seed" => self.seed = parse_num(v)?,
            "height" => s.height = parse_num(v)?,
            "width" => s.width = parse_num(v)?,
            "stripe_width" => {
                s.stripe_width = parse_num(v)?;
                t.stripe_width = s.stripe_width;
            }
            "n_obstacles_min" => s.n_obstacles.0 = parse_num(v)?,
            "n_obstacles_max" => s.n_obstacles.1 = parse_num(v)?,
            "obstacle_size_min" => s.obstacle_size.0 = parse_num(v)?,
            "obstacle_size_max" => s.obstacle_size.1 = parse_num(v)?,
            "horizon" => s.horizon = parse_num(v)?,
            "road_top_width" => s.road_top_width = parse_num(v)?,
            "road_bottom_width" => s.road_bottom_width = parse_num(v)?,
            "road_center_jitter" => s.road_center_jitter = parse_num(v)?,
            "distractor_density" => s.distractor_density = parse_num(v)?,
            "disparity_far" => s.disparity_far = parse_num(v)?,
            "disparity_near" => s.disparity_near = parse_num(v)?,
            "disparity_max" => s.disparity_max = parse_num(v)?,
            "learning_rate" => t.learning_rate = parse_num(v)?,
            "batch_stripe" => t.batch_stripe = parse_num(v)?,
            "batch_context" => t.batch_context = parse_num(v)?,
            "batch_refiner" => t.batch_refiner = parse_num(v)?,
            "max_epochs" => t.max_epochs = parse_num(v)?,
            "patience" => t.patience = parse_num(v)?,
            "stripe_channels" => t.stripe_channels = parse_list(v)?,
            "context_channels" => t.context_channels = parse_list(v)?,
            "refiner_channels" => t.refiner_channels = parse_list(v)?,
            "class_weights" => {
                t.class_weights = if v == "auto" {
                    None
                } else {
                    let w: Vec<f64> = parse_list(v)?;
                    let w: [f64; 3] = w
                        .try_into()
                        .map_err(|_| "expected `auto` or three comma-separated weights".to_string())?;
                    Some(ClassWeights(w))
                }
            }
            "curve_bins" => self.curve_bins = parse_num(v)?,
            "curve_max_distance" => self.curve_max_distance = parse_num(v)?,
            "ifp_overlap_max" => m.ifp_overlap_max = parse_num(v)?,
            "min_instance_px" => m.min_instance_px = parse_num(v)?,
            "baseline_constant" => m.baseline_constant = parse_num(v)?,
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    /// Propagates shared values (seed, curve edges) into the blocks.
    fn sync(&mut self) {
        self.train.seed = self.seed;
        self.metrics.curve_edges = even_edges(self.curve_max_distance, self.curve_bins);
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sync();
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.train.validate()?;
        self.metrics.validate()?;
        if self.curve_bins == 0 || !(self.curve_max_distance > 0.0) {
            return Err(Error::InvalidInput(
                "curve_bins and curve_max_distance must be positive".into(),
            ));
        }
        if !self.scene.width.is_multiple_of(self.train.stripe_width) {
            return Err(Error::InvalidInput(format!(
                "width {} is not divisible by stripe_width {}",
                self.scene.width, self.train.stripe_width
            )));
        }
        Ok(())
    }

    pub fn data_root(&self) -> PathBuf {
        self.output_dir.join(&self.data_root)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join(&self.checkpoint_dir)
    }

    /// Scene parameters for one split. Splits draw from disjoint seed ranges.
    pub fn scene_for_split(&self, split: SplitTag) -> SceneParams {
        let offset = match split {
            SplitTag::Train => 0,
            SplitTag::Val => 1 << 20,
            SplitTag::Test => 2 << 20,
        };
        SceneParams {
            rng_seed: self.seed.wrapping_mul(1 << 24).wrapping_add(offset),
            ..self.scene.clone()
        }
    }

    /// The configuration as parseable text.
    pub fn to_text(&self) -> String {
        let s = &self.scene;
        let t = &self.train;
        let m = &self.metrics;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("output_dir", self.output_dir.display().to_string());
        kv("data_root", self.data_root.display().to_string());
        kv("checkpoint_dir", self.checkpoint_dir.display().to_string());
        kv("seed", self.seed.to_string());
        kv("height", s.height.to_string());
        kv("width", s.width.to_string());
        kv("stripe_width", t.stripe_width.to_string());
        kv("n_obstacles_min", s.n_obstacles.0.to_string());
        kv("n_obstacles_max", s.n_obstacles.1.to_string());
        kv("obstacle_size_min", s.obstacle_size.0.to_string());
        kv("obstacle_size_max", s.obstacle_size.1.to_string());
        kv("horizon", s.horizon.to_string());
        kv("road_top_width", s.road_top_width.to_string());
        kv("road_bottom_width", s.road_bottom_width.to_string());
        kv("road_center_jitter", s.road_center_jitter.to_string());
        kv("distractor_density", s.distractor_density.to_string());
        kv("disparity_far", s.disparity_far.to_string());
        kv("disparity_near", s.disparity_near.to_string());
        kv("disparity_max", s.disparity_max.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("batch_stripe", t.batch_stripe.to_string());
        kv("batch_context", t.batch_context.to_string());
        kv("batch_refiner", t.batch_refiner.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("patience", t.patience.to_string());
        kv("stripe_channels", join(&t.stripe_channels));
        kv("context_channels", join(&t.context_channels));
        kv("refiner_channels", join(&t.refiner_channels));
        kv(
            "class_weights",
            t.class_weights.map(|w| join(&w.0)).unwrap_or_else(|| "auto".into()),
        );
        kv("curve_bins", self.curve_bins.to_string());
        kv("curve_max_distance", self.curve_max_distance.to_string());
        kv("ifp_overlap_max", m.ifp_overlap_max.to_string());
        kv("min_instance_px", m.min_instance_px.to_string());
        kv("baseline_constant", m.baseline_constant.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = RunConfig::parse("# header\n\nseed = 7   # trailing\nstripe_channels = 4, 8\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.train.stripe_channels, vec![4, 8]);
    }

    #[test]
    fn unknown_key_names_its_line() {
        match RunConfig::parse("seed = 1\nbogus = 2\n") {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_and_duplicates_fail() {
        assert!(matches!(RunConfig::parse("seed = x"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse("seed = 1\nseed = 2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(RunConfig::parse("class_weights = 1,2"), Err(Error::Config { .. })));
        assert!(matches!(RunConfig::parse("just words"), Err(Error::Config { .. })));
    }

    #[test]
    fn stripe_width_feeds_scene_and_training() {
        let c = RunConfig::parse("stripe_width = 8").unwrap();
        assert_eq!(c.scene.stripe_width, 8);
        assert_eq!(c.train.stripe_width, 8);
    }

    #[test]
    fn splits_use_distinct_seeds() {
        let c = RunConfig::default();
        let seeds: HashSet<u64> = [SplitTag::Train, SplitTag::Val, SplitTag::Test]
            .iter()
            .map(|&s| c.scene_for_split(s).rng_seed)
            .collect();
        assert_eq!(seeds.len(), 3);
    }
}
