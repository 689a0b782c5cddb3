//! RGBD frames, label maps, stripe decomposition and the on-disk dataset
//! layout.
//!
//! ```text
//! <root>/<split>/rgb/<frame_id>.png        8-bit RGB
//! <root>/<split>/disparity/<frame_id>.png  16-bit gray, code / disparity_max
//! <root>/<split>/labels/<frame_id>.png     8-bit gray, values 0/1/2
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reassemble_stripes, Grid};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ClassLabel {
    Road = 0,
    OffRoad = 1,
    Obstacle = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] =
        [ClassLabel::Road, ClassLabel::OffRoad, ClassLabel::Obstacle];

    pub fn from_code(code: u8) -> Option<ClassLabel> {
        match code {
            0 => Some(ClassLabel::Road),
            1 => Some(ClassLabel::OffRoad),
            2 => Some(ClassLabel::Obstacle),
            _ => None,
        }
    }

    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Road => "road",
            ClassLabel::OffRoad => "off_road",
            ClassLabel::Obstacle => "obstacle",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Registered color image and normalized disparity for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub frame_id: String,
    rgb: Grid<f32>,
    disparity: Grid<f32>,
}

impl RgbdFrame {
    pub fn new(frame_id: impl Into<String>, rgb: Grid<f32>, disparity: Grid<f32>) -> Result<Self> {
        if rgb.channels() != 3 || disparity.channels() != 1 {
            return Err(Error::InvalidInput(format!(
                "expected 3-channel rgb and 1-channel disparity, got {} and {}",
                rgb.channels(),
                disparity.channels()
            )));
        }
        if rgb.height() != disparity.height() || rgb.width() != disparity.width() {
            return Err(Error::InvalidInput(format!(
                "rgb is {}x{} but disparity is {}x{}",
                rgb.height(),
                rgb.width(),
                disparity.height(),
                disparity.width()
            )));
        }
        let in_range = |v: &f32| v.is_finite() && (0.0..=1.0).contains(v);
        if !rgb.data().iter().all(in_range) || !disparity.data().iter().all(in_range) {
            return Err(Error::InvalidInput(
                "frame values must be finite and within [0, 1]".into(),
            ));
        }
        Ok(RgbdFrame {
            frame_id: frame_id.into(),
            rgb,
            disparity,
        })
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn rgb(&self) -> &Grid<f32> {
        &self.rgb
    }

    pub fn disparity(&self) -> &Grid<f32> {
        &self.disparity
    }
}

/// Per-pixel class assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap(Grid<ClassLabel>);

impl LabelMap {
    pub fn filled(height: usize, width: usize, label: ClassLabel) -> Self {
        LabelMap(Grid::filled(height, width, 1, label))
    }

    pub fn from_grid(grid: Grid<ClassLabel>) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::Structure("label map must have one channel".into()));
        }
        Ok(LabelMap(grid))
    }

    pub fn from_codes(height: usize, width: usize, codes: &[u8]) -> Result<Self> {
        let labels = codes
            .iter()
            .map(|&c| {
                ClassLabel::from_code(c)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown label code {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelMap(Grid::from_vec(height, width, 1, labels)?))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> ClassLabel {
        self.0.get(row, col, 0)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, label: ClassLabel) {
        self.0.set(row, col, 0, label)
    }

    pub fn as_slice(&self) -> &[ClassLabel] {
        self.0.data()
    }

    pub fn grid(&self) -> &Grid<ClassLabel> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<ClassLabel> {
        self.0
    }

    pub fn codes(&self) -> Vec<u8> {
        self.0.data().iter().map(|l| l.code()).collect()
    }

    /// Binary mask of the given class.
    pub fn mask(&self, class: ClassLabel) -> Grid<bool> {
        self.0.map(|l| l == class)
    }

    pub fn counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        counts.add_labels(self);
        counts
    }
}

/// A vertical slice of a frame, tagged with its left-to-right position.
#[derive(Debug, Clone, PartialEq)]
pub struct Stripe {
    pub index: usize,
    pub frame: RgbdFrame,
    pub labels: Option<LabelMap>,
}

impl Stripe {
    pub fn width(&self) -> usize {
        self.frame.width()
    }
}

/// A frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frame: RgbdFrame,
    pub labels: LabelMap,
}

/// Cuts a frame (and optionally its labels) into `W / stripe_width` stripes.
pub fn split_into_stripes(
    frame: &RgbdFrame,
    labels: Option<&LabelMap>,
    stripe_width: usize,
) -> Result<Vec<Stripe>> {
    let width = frame.width();
    if stripe_width == 0 || !width.is_multiple_of(stripe_width) {
        return Err(Error::InvalidInput(format!(
            "frame width {width} is not divisible by stripe width {stripe_width}"
        )));
    }
    if let Some(l) = labels {
        if l.height() != frame.height() || l.width() != width {
            return Err(Error::Structure(format!(
                "labels are {}x{} but frame is {}x{}",
                l.height(),
                l.width(),
                frame.height(),
                width
            )));
        }
    }
    let k = width / stripe_width;
    Ok((0..k)
        .map(|j| {
            let start = j * stripe_width;
            Stripe {
                index: j,
                frame: RgbdFrame {
                    frame_id: frame.frame_id.clone(),
                    rgb: frame.rgb.columns(start, stripe_width),
                    disparity: frame.disparity.columns(start, stripe_width),
                },
                labels: labels.map(|l| LabelMap(l.0.columns(start, stripe_width))),
            }
        })
        .collect())
}

/// Inverse of [`split_into_stripes`] over whole stripes.
pub fn reassemble_frame(stripes: &[Stripe]) -> Result<(RgbdFrame, Option<LabelMap>)> {
    let frame_id = stripes
        .first()
        .map(|s| s.frame.frame_id.clone())
        .unwrap_or_default();
    let rgb = reassemble_stripes(stripes.iter().map(|s| (s.index, s.frame.rgb.clone())).collect())?;
    let disparity = reassemble_stripes(
        stripes
            .iter()
            .map(|s| (s.index, s.frame.disparity.clone()))
            .collect(),
    )?;
    let labels = if stripes.iter().all(|s| s.labels.is_some()) {
        let parts = stripes
            .iter()
            .map(|s| (s.index, s.labels.as_ref().unwrap().0.clone()))
            .collect();
        Some(LabelMap(reassemble_stripes(parts)?))
    } else {
        None
    };
    Ok((
        RgbdFrame {
            frame_id,
            rgb,
            disparity,
        },
        labels,
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts(pub [u64; NUM_CLASSES]);

impl ClassCounts {
    pub fn add_labels(&mut self, labels: &LabelMap) {
        for l in labels.as_slice() {
            self.0[l.index()] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn get(&self, class: ClassLabel) -> u64 {
        self.0[class.index()]
    }

    pub fn fractions(&self) -> [f64; NUM_CLASSES] {
        let total = self.total().max(1) as f64;
        self.0.map(|n| n as f64 / total)
    }
}

impl std::ops::AddAssign for ClassCounts {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

/// Per-class loss/sampling weights indexed by class code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights([1.0; NUM_CLASSES])
    }

    #[inline]
    pub fn get(&self, class: ClassLabel) -> f64 {
        self.0[class.index()]
    }

    /// `w_c = N_total / (|L| * N_c)`; uniform class frequencies give 1.
    pub fn from_counts(counts: &ClassCounts) -> Result<Self> {
        for class in ClassLabel::ALL {
            if counts.get(class) == 0 {
                return Err(Error::MissingClass {
                    class: class.name(),
                });
            }
        }
        let total = counts.total() as f64;
        Ok(ClassWeights(
            counts
                .0
                .map(|n| total / (NUM_CLASSES as f64 * n as f64)),
        ))
    }
}

/// Inverse-frequency class weights over every label map of the split.
pub fn compute_class_weights(index: &DatasetIndex) -> Result<ClassWeights> {
    let mut counts = ClassCounts::default();
    for entry in &index.entries {
        counts.add_labels(&load_labels(&entry.label_path)?);
    }
    ClassWeights::from_counts(&counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::InvalidInput(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub frame_id: String,
    pub rgb_path: PathBuf,
    pub disparity_path: PathBuf,
    pub label_path: PathBuf,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub split: SplitTag,
    pub disparity_max: f64,
    pub entries: Vec<DatasetEntry>,
    /// Non-fatal findings, e.g. an empty split.
    pub warnings: Vec<String>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root.join(self.split.as_str())
    }

    pub fn load_sample(&self, i: usize) -> Result<Sample> {
        let entry = &self.entries[i];
        let frame = load_frame(entry, self.disparity_max)
            .map_err(|e| e.in_frame(&entry.frame_id))?;
        let labels = load_labels(&entry.label_path).map_err(|e| e.in_frame(&entry.frame_id))?;
        Ok(Sample { frame, labels })
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.load_sample(i)).collect()
    }
}

pub fn split_paths(root: &Path, split: SplitTag) -> [PathBuf; 3] {
    let dir = root.join(split.as_str());
    [dir.join("rgb"), dir.join("disparity"), dir.join("labels")]
}

/// Indexes `<root>/<split>`, validating shapes and label codes eagerly.
pub fn load_dataset(root: &Path, split: SplitTag, disparity_max: f64) -> Result<DatasetIndex> {
    if !(disparity_max > 0.0) {
        return Err(Error::InvalidInput(format!(
            "disparity_max must be positive, got {disparity_max}"
        )));
    }
    let split_dir = root.join(split.as_str());
    if !split_dir.is_dir() {
        return Err(Error::Load {
            path: split_dir,
            msg: "split directory does not exist".into(),
        });
    }
    let [rgb_dir, disp_dir, label_dir] = split_paths(root, split);
    let mut ids = Vec::new();
    if rgb_dir.is_dir() {
        for item in fs::read_dir(&rgb_dir).map_err(|e| Error::io(&rgb_dir, e))? {
            let path = item.map_err(|e| Error::io(&rgb_dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
    }
    ids.sort();

    let mut index = DatasetIndex {
        root: root.to_path_buf(),
        split,
        disparity_max,
        entries: Vec::with_capacity(ids.len()),
        warnings: Vec::new(),
    };
    if ids.is_empty() {
        let msg = format!("split `{split}` under {} contains no frames", root.display());
        log::warn!("{msg}");
        index.warnings.push(msg);
        return Ok(index);
    }

    for id in ids {
        let file = format!("{id}.png");
        let rgb_path = rgb_dir.join(&file);
        let disparity_path = disp_dir.join(&file);
        let label_path = label_dir.join(&file);
        for p in [&disparity_path, &label_path] {
            if !p.is_file() {
                return Err(Error::Load {
                    path: p.clone(),
                    msg: format!("missing companion file for frame {id}"),
                });
            }
        }
        let (rw, rh) =
            image::image_dimensions(&rgb_path).map_err(|e| Error::image(&rgb_path, e))?;
        let (dw, dh) = image::image_dimensions(&disparity_path)
            .map_err(|e| Error::image(&disparity_path, e))?;
        let labels = load_labels(&label_path)?;
        let (lh, lw) = (labels.height(), labels.width());
        if (rw, rh) != (dw, dh) || (rw as usize, rh as usize) != (lw, lh) {
            return Err(Error::Load {
                path: rgb_path,
                msg: format!(
                    "shape mismatch: rgb {rw}x{rh}, disparity {dw}x{dh}, labels {lw}x{lh} (WxH)"
                ),
            });
        }
        index.entries.push(DatasetEntry {
            frame_id: id,
            rgb_path,
            disparity_path,
            label_path,
            height: rh as usize,
            width: rw as usize,
        });
    }
    Ok(index)
}

fn load_frame(entry: &DatasetEntry, disparity_max: f64) -> Result<RgbdFrame> {
    let rgb_img = image::open(&entry.rgb_path).map_err(|e| Error::image(&entry.rgb_path, e))?;
    let rgb_img = match rgb_img {
        image::DynamicImage::ImageRgb8(img) => img,
        other => {
            return Err(Error::Load {
                path: entry.rgb_path.clone(),
                msg: format!("expected 8-bit RGB, found {:?}", other.color()),
            })
        }
    };
    let disp_img = image::open(&entry.disparity_path)
        .map_err(|e| Error::image(&entry.disparity_path, e))?;
    let disp_img = match disp_img {
        image::DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::Load {
                path: entry.disparity_path.clone(),
                msg: format!("expected 16-bit gray, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = rgb_img.dimensions();
    let rgb: Vec<f32> = rgb_img.into_raw().into_iter().map(rgb_from_u8).collect();
    let mut disparity = Vec::with_capacity((w * h) as usize);
    for code in disp_img.into_raw() {
        let v = disparity_from_code(code, disparity_max);
        if v > 1.0 {
            return Err(Error::Load {
                path: entry.disparity_path.clone(),
                msg: format!("disparity code {code} exceeds disparity_max {disparity_max}"),
            });
        }
        disparity.push(v);
    }
    RgbdFrame::new(
        entry.frame_id.clone(),
        Grid::from_vec(h as usize, w as usize, 3, rgb)?,
        Grid::from_vec(h as usize, w as usize, 1, disparity)?,
    )
}

/// Reads an 8-bit label PNG, rejecting any code outside {0, 1, 2}.
pub fn load_labels(path: &Path) -> Result<LabelMap> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma8(img) => img,
        other => {
            return Err(Error::Load {
                path: path.to_path_buf(),
                msg: format!("expected 8-bit gray labels, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    if let Some(&bad) = raw.iter().find(|&&c| c as usize >= NUM_CLASSES) {
        return Err(Error::Load {
            path: path.to_path_buf(),
            msg: format!("unknown label code {bad}"),
        });
    }
    LabelMap::from_codes(h as usize, w as usize, &raw)
}

#[inline]
pub fn rgb_from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

#[inline]
pub fn rgb_to_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[inline]
pub fn disparity_from_code(code: u16, disparity_max: f64) -> f32 {
    (code as f64 / disparity_max) as f32
}

#[inline]
pub fn disparity_to_code(v: f32, disparity_max: f64) -> u16 {
    (v as f64 * disparity_max).round().clamp(0.0, u16::MAX as f64) as u16
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Writes one frame triple in the dataset layout.
pub fn write_sample(
    root: &Path,
    split: SplitTag,
    sample: &Sample,
    disparity_max: f64,
) -> Result<()> {
    let [rgb_dir, disp_dir, label_dir] = split_paths(root, split);
    let file = format!("{}.png", sample.frame.frame_id);
    let (h, w) = (sample.frame.height() as u32, sample.frame.width() as u32);

    let rgb_bytes: Vec<u8> = sample.frame.rgb.data().iter().map(|&v| rgb_to_u8(v)).collect();
    let rgb = RgbImage::from_raw(w, h, rgb_bytes).expect("rgb buffer size");
    save_png(&rgb, &rgb_dir.join(&file))?;

    let codes: Vec<u16> = sample
        .frame
        .disparity
        .data()
        .iter()
        .map(|&v| disparity_to_code(v, disparity_max))
        .collect();
    let disp: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, codes).expect("disparity buffer size");
    save_png(&disp, &disp_dir.join(&file))?;

    save_label_png(&sample.labels, &label_dir.join(&file))
}

pub fn save_label_png(labels: &LabelMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(labels.width() as u32, labels.height() as u32, labels.codes())
        .expect("label buffer size");
    save_png(&img, path)
}

pub fn save_png<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(h: usize, w: usize) -> RgbdFrame {
        let rgb = (0..h * w * 3).map(|i| (i % 251) as f32 / 250.0).collect();
        let disp = (0..h * w).map(|i| (i % 97) as f32 / 96.0).collect();
        RgbdFrame::new(
            "000000",
            Grid::from_vec(h, w, 3, rgb).unwrap(),
            Grid::from_vec(h, w, 1, disp).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn canonical_frame_splits_into_28_stripes() {
        let f = frame(256, 896);
        let stripes = split_into_stripes(&f, None, 32).unwrap();
        assert_eq!(stripes.len(), 28);
        for (j, s) in stripes.iter().enumerate() {
            assert_eq!(s.index, j);
            assert_eq!((s.frame.height(), s.frame.width()), (256, 32));
        }
    }

    #[test]
    fn single_stripe_is_the_frame() {
        let f = frame(256, 32);
        let stripes = split_into_stripes(&f, None, 32).unwrap();
        assert_eq!(stripes.len(), 1);
        assert_eq!(stripes[0].frame, f);
    }

    #[test]
    fn non_divisible_width_is_rejected() {
        let f = frame(256, 900);
        let err = split_into_stripes(&f, None, 32).unwrap_err().to_string();
        assert!(err.contains("900") && err.contains("32"), "{err}");
        assert!(split_into_stripes(&f, None, 0).is_err());
    }

    #[test]
    fn stripe_content_matches_frame_columns() {
        let f = frame(4, 12);
        let labels = LabelMap::from_codes(4, 12, &[0, 1, 2].repeat(16)).unwrap();
        let stripes = split_into_stripes(&f, Some(&labels), 4).unwrap();
        for s in &stripes {
            for r in 0..4 {
                for c in 0..4 {
                    let col = s.index * 4 + c;
                    assert_eq!(s.frame.rgb().pixel(r, c), f.rgb().pixel(r, col));
                    assert_eq!(s.frame.disparity().get(r, c, 0), f.disparity().get(r, col, 0));
                    assert_eq!(s.labels.as_ref().unwrap().get(r, c), labels.get(r, col));
                }
            }
        }
    }

    #[test]
    fn frame_validation() {
        let rgb = Grid::filled(2, 2, 3, 0.5f32);
        assert!(RgbdFrame::new("x", rgb.clone(), Grid::filled(2, 3, 1, 0.5)).is_err());
        assert!(RgbdFrame::new("x", rgb.clone(), Grid::filled(2, 2, 1, 1.5)).is_err());
        assert!(RgbdFrame::new("x", rgb, Grid::filled(2, 2, 1, f32::NAN)).is_err());
    }

    #[test]
    fn uniform_fractions_give_unit_weights() {
        let w = ClassWeights::from_counts(&ClassCounts([100, 100, 100])).unwrap();
        assert_eq!(w.0, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn skewed_fractions_give_inverse_weights() {
        // f = (0.50, 0.45, 0.05) -> 1 / (3 f)
        let w = ClassWeights::from_counts(&ClassCounts([1000, 900, 100])).unwrap();
        let expected = [2.0 / 3.0, 20.0 / 27.0, 20.0 / 3.0];
        for (a, b) in w.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn absent_class_is_an_error() {
        let err = ClassWeights::from_counts(&ClassCounts([10, 5, 0])).unwrap_err();
        assert!(matches!(err, Error::MissingClass { class: "obstacle" }));
    }

    #[test]
    fn codes_round_trip() {
        for c in 0..=255u8 {
            match ClassLabel::from_code(c) {
                Some(l) => assert_eq!(l.code(), c),
                None => assert!(c >= 3),
            }
        }
    }
}
