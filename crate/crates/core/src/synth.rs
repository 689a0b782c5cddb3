//! Procedural road scenes with exact ground truth.
//!
//! Geometry: the ground is a plane whose disparity grows linearly from
//! `disparity_far` at the horizon row to `disparity_near` at the bottom edge;
//! the sky above the horizon has zero disparity. The road is a trapezoid on
//! that plane. Obstacles are upright rectangles standing on the road, so
//! their disparity is constant and slightly above the ground disparity of
//! their base row. Distractors (chalk marks on the road, grass patches off
//! it) only touch the color image.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scene::{
    disparity_from_code, disparity_to_code, load_dataset, rgb_from_u8, rgb_to_u8, split_paths,
    write_sample, ClassLabel, DatasetIndex, LabelMap, RgbdFrame, Sample, SplitTag,
};

const PLACEMENT_RETRIES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    /// Width the scenes must stay divisible by.
    pub stripe_width: usize,
    /// Inclusive range of obstacles per scene.
    pub n_obstacles: (usize, usize),
    /// Inclusive obstacle edge length range in pixels, for both dimensions.
    pub obstacle_size: (usize, usize),
    /// Horizon row as a fraction of the height.
    pub horizon: f64,
    /// Road width at the horizon, as a fraction of the frame width.
    pub road_top_width: f64,
    /// Road width at the bottom edge, as a fraction of the frame width.
    pub road_bottom_width: f64,
    /// Maximum horizontal shift of the road center, as a fraction of the width.
    pub road_center_jitter: f64,
    /// Per-slot probability of each chalk-mark or grass-patch distractor.
    pub distractor_density: f64,
    /// Ground disparity at the horizon row.
    pub disparity_far: f64,
    /// Ground disparity extrapolated to row `height`.
    pub disparity_near: f64,
    /// Integer code corresponding to normalized disparity 1.0 on disk.
    pub disparity_max: f64,
    pub rng_seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 64,
            width: 128,
            stripe_width: 16,
            n_obstacles: (1, 3),
            obstacle_size: (3, 7),
            horizon: 0.3,
            road_top_width: 0.2,
            road_bottom_width: 0.8,
            road_center_jitter: 0.1,
            distractor_density: 0.5,
            disparity_far: 0.05,
            disparity_near: 0.9,
            disparity_max: 65535.0,
            rng_seed: 0,
        }
    }
}

/// Ground-truth obstacle in one generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: usize,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [usize; 4],
    pub mean_disparity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInstances {
    pub frame_id: String,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub sample: Sample,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

impl Rect {
    /// False only when at least one empty row or column separates the boxes.
    fn touches(&self, other: &Rect) -> bool {
        let sep_x = self.x + self.w < other.x || other.x + other.w < self.x;
        let sep_y = self.y + self.h < other.y || other.y + other.h < self.y;
        !(sep_x || sep_y)
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.height == 0 || self.width == 0 {
            return bad("scene dimensions must be positive".into());
        }
        if self.stripe_width == 0 || !self.width.is_multiple_of(self.stripe_width) {
            return bad(format!(
                "scene width {} is not divisible by stripe width {}",
                self.width, self.stripe_width
            ));
        }
        if self.n_obstacles.0 > self.n_obstacles.1 {
            return bad(format!("empty obstacle count range {:?}", self.n_obstacles));
        }
        if self.obstacle_size.0 == 0 || self.obstacle_size.0 > self.obstacle_size.1 {
            return bad(format!("invalid obstacle size range {:?}", self.obstacle_size));
        }
        if !(0.0..1.0).contains(&self.horizon) {
            return bad(format!("horizon fraction {} outside [0, 1)", self.horizon));
        }
        for (name, v) in [
            ("road_top_width", self.road_top_width),
            ("road_bottom_width", self.road_bottom_width),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} outside (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.distractor_density) {
            return bad(format!(
                "distractor_density {} outside [0, 1]",
                self.distractor_density
            ));
        }
        if !(0.0 <= self.disparity_far && self.disparity_far < self.disparity_near)
            || self.disparity_near > 0.95
        {
            return bad(format!(
                "need 0 <= disparity_far < disparity_near <= 0.95, got {} and {}",
                self.disparity_far, self.disparity_near
            ));
        }
        if !(self.disparity_max >= 1.0 && self.disparity_max <= u16::MAX as f64) {
            return bad(format!("disparity_max {} outside [1, 65535]", self.disparity_max));
        }
        let ground_rows = self.height - self.horizon_row();
        let bottom_width = (self.road_bottom_width * self.width as f64) as usize;
        if self.obstacle_size.1 + 2 > ground_rows || self.obstacle_size.1 + 2 > bottom_width {
            return bad(format!(
                "obstacles up to {} px do not fit inside the road ({} rows, {} px wide)",
                self.obstacle_size.1, ground_rows, bottom_width
            ));
        }
        Ok(())
    }

    pub fn horizon_row(&self) -> usize {
        (self.horizon * self.height as f64).round() as usize
    }

    /// Planar-ground disparity for a row: zero above the horizon, linear below.
    pub fn ground_disparity(&self, row: usize) -> f64 {
        let hz = self.horizon_row();
        if row < hz {
            return 0.0;
        }
        let t = (row - hz) as f64 / (self.height - hz) as f64;
        self.disparity_far + (self.disparity_near - self.disparity_far) * t
    }

    /// Seed-shifted copy for scene `i` of a dataset.
    pub fn for_scene(&self, i: u64) -> SceneParams {
        SceneParams {
            rng_seed: self.rng_seed.wrapping_add(i),
            ..self.clone()
        }
    }
}

struct Road {
    center: f64,
    horizon: usize,
    top_half: f64,
    bottom_half: f64,
    height: usize,
}

impl Road {
    fn half_width(&self, row: usize) -> f64 {
        let t = (row - self.horizon) as f64 / (self.height - self.horizon) as f64;
        self.top_half + (self.bottom_half - self.top_half) * t
    }

    fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.horizon && (col as f64 + 0.5 - self.center).abs() <= self.half_width(row)
    }

    /// Columns `[lo, hi)` of the road on a row.
    fn span(&self, row: usize, width: usize) -> (usize, usize) {
        let hw = self.half_width(row);
        let lo = (self.center - hw - 0.5).ceil().max(0.0) as usize;
        let hi = ((self.center + hw - 0.5).floor() + 1.0).clamp(0.0, width as f64) as usize;
        (lo.min(hi), hi)
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    base.map(|v| v + rng.gen_range(-spread..=spread))
}

fn scale(c: [f64; 3], g: f64) -> [f64; 3] {
    c.map(|v| v * g)
}

const OBSTACLE_PALETTE: [[f64; 3]; 6] = [
    [0.45, 0.30, 0.15],
    [0.60, 0.15, 0.10],
    [0.15, 0.15, 0.18],
    [0.70, 0.60, 0.20],
    [0.80, 0.80, 0.75],
    [0.30, 0.35, 0.55],
];

/// Renders one scene as a pure function of `params`.
pub fn generate_scene(params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let (h, w) = (params.height, params.width);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);

    let hz = params.horizon_row();
    let road = Road {
        center: w as f64 / 2.0
            + rng.gen_range(-1.0..=1.0) * params.road_center_jitter * w as f64,
        horizon: hz,
        top_half: params.road_top_width * w as f64 / 2.0,
        bottom_half: params.road_bottom_width * w as f64 / 2.0,
        height: h,
    };

    let illum = rng.gen_range(0.75..=1.1);
    let road_color = scale(jitter(&mut rng, [0.42, 0.42, 0.44], 0.05), illum);
    let ground_color = scale(jitter(&mut rng, [0.28, 0.45, 0.20], 0.06), illum);
    let sky_color = jitter(&mut rng, [0.62, 0.74, 0.92], 0.05);

    let mut rgb = Grid::filled(h, w, 3, 0.0f64);
    let mut disparity = Grid::filled(h, w, 1, 0.0f64);
    let mut labels = LabelMap::filled(h, w, ClassLabel::OffRoad);
    for r in 0..h {
        let ground = params.ground_disparity(r);
        for c in 0..w {
            disparity.set(r, c, 0, ground);
            let color = if r < hz {
                sky_color
            } else if road.contains(r, c) {
                labels.set(r, c, ClassLabel::Road);
                road_color
            } else {
                ground_color
            };
            rgb.pixel_mut(r, c).copy_from_slice(&color);
        }
    }

    // Chalk marks: short stacks of bright bars painted on the road.
    for _ in 0..3 {
        if !rng.gen_bool(params.distractor_density) {
            continue;
        }
        let bars = rng.gen_range(2..=4);
        let bar_w = rng.gen_range(params.obstacle_size.0..=params.obstacle_size.1 * 2);
        let row0 = rng.gen_range(hz..h);
        let (lo, hi) = road.span(row0, w);
        if hi <= lo {
            continue;
        }
        let col0 = rng.gen_range(lo..hi);
        let chalk = jitter(&mut rng, [0.88, 0.88, 0.85], 0.04);
        for b in 0..bars {
            let r = row0 + 2 * b;
            for c in col0..(col0 + bar_w).min(w) {
                if r < h && labels.get(r, c) == ClassLabel::Road {
                    rgb.pixel_mut(r, c).copy_from_slice(&chalk);
                }
            }
        }
    }

    // Grass patches hugging the road boundary, off-road pixels only.
    for _ in 0..3 {
        if !rng.gen_bool(params.distractor_density) {
            continue;
        }
        let ph = rng.gen_range(params.obstacle_size.0..=params.obstacle_size.1);
        let pw = rng.gen_range(params.obstacle_size.0..=params.obstacle_size.1);
        let row0 = rng.gen_range(hz..h.saturating_sub(ph).max(hz + 1));
        let (lo, hi) = road.span(row0, w);
        let edge = if rng.gen_bool(0.5) { lo } else { hi };
        let col0 = (edge as i64 + rng.gen_range(-(pw as i64)..=1)).clamp(0, (w - 1) as i64) as usize;
        let base = OBSTACLE_PALETTE[rng.gen_range(0..3)];
        let patch = jitter(&mut rng, base, 0.05);
        for r in row0..(row0 + ph).min(h) {
            for c in col0..(col0 + pw).min(w) {
                if labels.get(r, c) == ClassLabel::OffRoad && r >= hz {
                    rgb.pixel_mut(r, c).copy_from_slice(&patch);
                }
            }
        }
    }

    // Obstacles.
    let n = rng.gen_range(params.n_obstacles.0..=params.n_obstacles.1);
    let mut rects: Vec<(Rect, f64)> = Vec::with_capacity(n);
    for k in 0..n {
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let ow = rng.gen_range(params.obstacle_size.0..=params.obstacle_size.1);
            let oh = rng.gen_range(params.obstacle_size.0..=params.obstacle_size.1);
            if hz + oh > h {
                continue;
            }
            let y = rng.gen_range(hz..=h - oh);
            // The road is convex, so the top row bounds every row of the box.
            let (lo, hi) = road.span(y, w);
            if hi < lo + ow {
                continue;
            }
            let x = rng.gen_range(lo..=hi - ow);
            let rect = Rect { x, y, w: ow, h: oh };
            let bottom = y + oh - 1;
            let (blo, bhi) = road.span(bottom, w);
            if x < blo || x + ow > bhi {
                continue;
            }
            if rects.iter().any(|(o, _)| o.touches(&rect)) {
                continue;
            }
            placed = Some(rect);
            break;
        }
        let rect = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place obstacle {} of {n} after {PLACEMENT_RETRIES} attempts",
                k + 1
            ))
        })?;
        let base = rect.y + rect.h - 1;
        let lift = rng.gen_range(0.01..=0.03);
        let d = (params.ground_disparity(base) + lift).min(1.0);
        let color = if rng.gen_bool(0.5) {
            road_color.map(|v| v * rng.gen_range(0.9..=1.1))
        } else {
            let base = OBSTACLE_PALETTE[rng.gen_range(0..OBSTACLE_PALETTE.len())];
            scale(jitter(&mut rng, base, 0.05), illum)
        };
        for r in rect.y..rect.y + rect.h {
            for c in rect.x..rect.x + rect.w {
                labels.set(r, c, ClassLabel::Obstacle);
                disparity.set(r, c, 0, d);
                rgb.pixel_mut(r, c).copy_from_slice(&color);
            }
        }
        rects.push((rect, d));
    }

    // Sensor noise on color only, then quantize to the on-disk encodings so a
    // written and re-read scene is identical to the in-memory one.
    let rgb: Vec<f32> = rgb
        .data()
        .iter()
        .map(|&v| {
            let noisy = (v + rng.gen_range(-0.03..=0.03)).clamp(0.0, 1.0) as f32;
            rgb_from_u8(rgb_to_u8(noisy))
        })
        .collect();
    let disparity: Vec<f32> = disparity
        .data()
        .iter()
        .map(|&v| {
            disparity_from_code(
                disparity_to_code(v as f32, params.disparity_max),
                params.disparity_max,
            )
        })
        .collect();

    let frame = RgbdFrame::new(
        format!("{:06}", 0),
        Grid::from_vec(h, w, 3, rgb)?,
        Grid::from_vec(h, w, 1, disparity)?,
    )?;

    rects.sort_by_key(|(r, _)| (r.y, r.x));
    let instances = rects
        .iter()
        .enumerate()
        .map(|(i, (r, _))| {
            let mut sum = 0.0;
            for row in r.y..r.y + r.h {
                for col in r.x..r.x + r.w {
                    sum += frame.disparity().get(row, col, 0) as f64;
                }
            }
            InstanceRecord {
                instance_id: i + 1,
                bbox: [r.x, r.y, r.w, r.h],
                mean_disparity: sum / (r.w * r.h) as f64,
            }
        })
        .collect();

    Ok(Scene {
        sample: Sample { frame, labels },
        instances,
    })
}

/// Generates scene `i` of a dataset (seed `rng_seed + i`, id `{i:06}`).
pub fn generate_indexed_scene(params: &SceneParams, i: usize) -> Result<Scene> {
    let mut scene = generate_scene(&params.for_scene(i as u64))?;
    scene.sample.frame.frame_id = format!("{i:06}");
    Ok(scene)
}

/// In-memory variant of [`generate_dataset`].
pub fn generate_samples(params: &SceneParams, count: usize) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| generate_indexed_scene(params, i))
        .collect()
}

/// Writes `count` scenes plus `instances.json` under `<root>/<split>` and
/// returns the freshly loaded index.
pub fn generate_dataset(
    params: &SceneParams,
    count: usize,
    root: &Path,
    split: SplitTag,
) -> Result<DatasetIndex> {
    params.validate()?;
    for dir in split_paths(root, split) {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let records: Vec<FrameInstances> = (0..count)
        .map(|i| {
            let scene = generate_indexed_scene(params, i)?;
            write_sample(root, split, &scene.sample, params.disparity_max)?;
            Ok(FrameInstances {
                frame_id: scene.sample.frame.frame_id.clone(),
                instances: scene.instances,
            })
        })
        .collect::<Result<_>>()?;
    write_instances(&root.join(split.as_str()).join("instances.json"), &records)?;
    load_dataset(root, split, params.disparity_max)
}

pub fn write_instances(path: &Path, records: &[FrameInstances]) -> Result<()> {
    let json = serde_json::to_string_pretty(records).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_instances(path: &Path) -> Result<Vec<FrameInstances>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
