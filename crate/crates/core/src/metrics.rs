//! Pixel- and instance-level obstacle detection metrics.
//!
//! Counts are summed over all frames first and divided once at the end.
//! Undefined ratios (zero denominator) are `None` and serialize as `null`.

use std::ops::AddAssign;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scene::{ClassLabel, LabelMap, Sample};
use crate::segnet::{mergenet_stages, predict_labels, MergeNetBundle};

/// Connected components of a binary mask. Id 0 is background; components
/// are numbered `1..=count` in raster order of their first pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    ids: Grid<u32>,
    count: usize,
}

impl InstanceMap {
    pub fn ids(&self) -> &Grid<u32> {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn id(&self, row: usize, col: usize) -> u32 {
        self.ids.get(row, col, 0)
    }

    /// Pixel count of every component, indexed by `id - 1`.
    pub fn sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0; self.count];
        for &id in self.ids.data() {
            if id > 0 {
                sizes[id as usize - 1] += 1;
            }
        }
        sizes
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Two-pass labeling with union-find over edge-adjacent pixels.
pub fn connected_components_4(mask: &Grid<bool>) -> InstanceMap {
    let (h, w) = (mask.height(), mask.width());
    let mut provisional = vec![0u32; h * w];
    let mut parent: Vec<u32> = vec![0];
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c, 0) {
                continue;
            }
            let up = if r > 0 { provisional[(r - 1) * w + c] } else { 0 };
            let left = if c > 0 { provisional[r * w + c - 1] } else { 0 };
            provisional[r * w + c] = match (up, left) {
                (0, 0) => {
                    let id = parent.len() as u32;
                    parent.push(id);
                    id
                }
                (a, 0) | (0, a) => a,
                (a, b) => {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb) as usize] = ra.min(rb);
                    }
                    ra.min(rb)
                }
            };
        }
    }
    let mut dense = vec![0u32; parent.len()];
    let mut count = 0;
    let mut ids = vec![0u32; h * w];
    for i in 0..h * w {
        if provisional[i] == 0 {
            continue;
        }
        let root = find(&mut parent, provisional[i]) as usize;
        if dense[root] == 0 {
            count += 1;
            dense[root] = count;
        }
        ids[i] = dense[root];
    }
    InstanceMap {
        ids: Grid::from_vec(h, w, 1, ids).expect("mask shape"),
        count: count as usize,
    }
}

/// Raw counts behind the four rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    /// Obstacle pixels predicted as obstacle.
    pub cdp: u64,
    /// Ground-truth obstacle pixels.
    pub tp_obstacle: u64,
    /// Detected ground-truth instances.
    pub cdi: u64,
    /// Ground-truth instances.
    pub ti: u64,
    /// Non-obstacle pixels predicted as obstacle.
    pub idp: u64,
    /// Ground-truth non-obstacle pixels.
    pub tp_non_obstacle: u64,
    /// Predicted instances counted as false positives.
    pub idi: u64,
    /// Evaluated frames.
    pub d: u64,
}

impl AddAssign for MetricCounts {
    fn add_assign(&mut self, o: Self) {
        self.cdp += o.cdp;
        self.tp_obstacle += o.tp_obstacle;
        self.cdi += o.cdi;
        self.ti += o.ti;
        self.idp += o.idp;
        self.tp_non_obstacle += o.tp_non_obstacle;
        self.idi += o.idi;
        self.d += o.d;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricCounts {
    pub fn pdr(&self) -> Option<f64> {
        ratio(self.cdp, self.tp_obstacle)
    }

    pub fn idr(&self) -> Option<f64> {
        ratio(self.cdi, self.ti)
    }

    pub fn pfp(&self) -> Option<f64> {
        ratio(self.idp, self.tp_non_obstacle)
    }

    pub fn ifp(&self) -> Option<f64> {
        ratio(self.idi, self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Upper edges of the distance bins of the detection curve.
    pub curve_edges: Vec<f64>,
    /// A predicted instance is a false positive when at most this fraction
    /// of its pixels overlaps ground-truth obstacle. 0 means no overlap.
    pub ifp_overlap_max: f64,
    /// Instances smaller than this are ignored, both predicted and true.
    pub min_instance_px: u64,
    /// `distance = baseline_constant / disparity`.
    pub baseline_constant: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            curve_edges: even_edges(20.0, 10),
            ifp_overlap_max: 0.0,
            min_instance_px: 1,
            baseline_constant: 1.0,
        }
    }
}

/// `bins` evenly spaced upper edges ending at `max_distance`.
pub fn even_edges(max_distance: f64, bins: usize) -> Vec<f64> {
    (1..=bins).map(|i| max_distance * i as f64 / bins as f64).collect()
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ifp_overlap_max) {
            return Err(Error::InvalidInput(format!(
                "ifp_overlap_max must lie in [0, 1], got {}",
                self.ifp_overlap_max
            )));
        }
        if self.min_instance_px == 0 {
            return Err(Error::InvalidInput("min_instance_px must be at least 1".into()));
        }
        if !(self.baseline_constant > 0.0 && self.baseline_constant.is_finite()) {
            return Err(Error::InvalidInput("baseline_constant must be positive".into()));
        }
        if self.curve_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidInput("curve edges must be finite".into()));
        }
        Ok(())
    }
}

fn check_same(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Structure(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

/// `(CDP, TP)` for one frame.
pub fn pixel_detection_rate(pred: &LabelMap, gt: &LabelMap) -> Result<(u64, u64)> {
    check_same(pred, gt)?;
    let mut cdp = 0;
    let mut tp = 0;
    for (p, g) in pred.as_slice().iter().zip(gt.as_slice()) {
        if *g == ClassLabel::Obstacle {
            tp += 1;
            cdp += (*p == ClassLabel::Obstacle) as u64;
        }
    }
    Ok((cdp, tp))
}

/// `(IDP, TP_non_obstacle)` for one frame.
pub fn pixel_false_positives(pred: &LabelMap, gt: &LabelMap) -> Result<(u64, u64)> {
    check_same(pred, gt)?;
    let mut idp = 0;
    let mut tn = 0;
    for (p, g) in pred.as_slice().iter().zip(gt.as_slice()) {
        if *g != ClassLabel::Obstacle {
            tn += 1;
            idp += (*p == ClassLabel::Obstacle) as u64;
        }
    }
    Ok((idp, tn))
}

/// Pixel count and predicted-obstacle coverage of every instance.
fn coverage(instances: &InstanceMap, pred: &LabelMap) -> Vec<(u64, u64)> {
    let mut cov = vec![(0u64, 0u64); instances.count()];
    for (&id, &p) in instances.ids().data().iter().zip(pred.as_slice()) {
        if id > 0 {
            let e = &mut cov[id as usize - 1];
            e.0 += 1;
            e.1 += (p == ClassLabel::Obstacle) as u64;
        }
    }
    cov
}

/// An instance counts as detected when strictly more than half of its
/// pixels are predicted obstacle.
pub fn is_detected(size: u64, covered: u64) -> bool {
    2 * covered > size
}

/// `(CDI, TI)` for one frame, ignoring instances below `min_instance_px`.
pub fn instance_detection_rate(pred: &LabelMap, gt_instances: &InstanceMap, min_instance_px: u64) -> Result<(u64, u64)> {
    if (pred.height(), pred.width()) != (gt_instances.ids().height(), gt_instances.ids().width()) {
        return Err(Error::Structure("prediction and instance map differ in shape".into()));
    }
    let mut cdi = 0;
    let mut ti = 0;
    for (size, covered) in coverage(gt_instances, pred) {
        if size >= min_instance_px {
            ti += 1;
            cdi += is_detected(size, covered) as u64;
        }
    }
    Ok((cdi, ti))
}

/// Number of predicted obstacle instances in one frame that count as false
/// positives under `cfg.ifp_overlap_max`.
pub fn instance_false_positives(pred: &LabelMap, gt: &LabelMap, cfg: &MetricsConfig) -> Result<u64> {
    check_same(pred, gt)?;
    let pred_instances = connected_components_4(&pred.mask(ClassLabel::Obstacle));
    let mut fp = 0;
    for (size, overlap) in coverage(&pred_instances, gt) {
        if size >= cfg.min_instance_px && overlap as f64 <= cfg.ifp_overlap_max * size as f64 {
            fp += 1;
        }
    }
    Ok(fp)
}

/// IFP over a test set: false-positive instances per frame.
pub fn ifp_rate(false_positives: u64, frames: u64) -> Result<f64> {
    if frames == 0 {
        return Err(Error::InvalidInput("IFP needs at least one frame".into()));
    }
    Ok(false_positives as f64 / frames as f64)
}

/// Fraction of pixels whose predicted class equals the ground truth,
/// summed over all frames.
pub fn pixel_accuracy(preds: &[LabelMap], gts: &[&LabelMap]) -> Result<f64> {
    let (mut hit, mut total) = (0u64, 0u64);
    for (p, g) in preds.iter().zip(gts) {
        check_same(p, g)?;
        total += g.as_slice().len() as u64;
        hit += p.as_slice().iter().zip(g.as_slice()).filter(|(a, b)| a == b).count() as u64;
    }
    ratio(hit, total).ok_or_else(|| Error::InvalidInput("no pixels to score".into()))
}

/// One ground-truth instance with its detection outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub frame_id: String,
    pub instance_id: u32,
    pub size_px: u64,
    pub covered_px: u64,
    pub detected: bool,
    pub mean_disparity: f64,
    /// Infinite for zero disparity; stored as `null` in JSON.
    #[serde(deserialize_with = "null_as_infinity")]
    pub distance: f64,
}

fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub distance: f64,
    pub cumulative_idr: Option<f64>,
}

/// For each edge `D`, the detection rate over instances with distance `<= D`.
pub fn detection_vs_distance_curve(instances: &[(bool, f64)], edges: &[f64]) -> Vec<CurvePoint> {
    if instances.is_empty() {
        return Vec::new();
    }
    edges
        .iter()
        .map(|&edge| {
            let (mut hit, mut total) = (0u64, 0u64);
            for &(detected, distance) in instances {
                if distance <= edge {
                    total += 1;
                    hit += detected as u64;
                }
            }
            CurvePoint {
                distance: edge,
                cumulative_idr: ratio(hit, total),
            }
        })
        .collect()
}

/// Counts and instance records for one frame.
pub fn frame_metrics(
    frame_id: &str,
    pred: &LabelMap,
    gt: &LabelMap,
    gt_disparity: &Grid<f32>,
    cfg: &MetricsConfig,
) -> Result<(MetricCounts, Vec<InstanceRecord>)> {
    let (cdp, tp_obstacle) = pixel_detection_rate(pred, gt)?;
    let (idp, tp_non_obstacle) = pixel_false_positives(pred, gt)?;
    let idi = instance_false_positives(pred, gt, cfg)?;
    let gt_instances = connected_components_4(&gt.mask(ClassLabel::Obstacle));
    let cov = coverage(&gt_instances, pred);
    let mut disparity_sum = vec![0.0f64; gt_instances.count()];
    for (&id, &d) in gt_instances.ids().data().iter().zip(gt_disparity.data()) {
        if id > 0 {
            disparity_sum[id as usize - 1] += d as f64;
        }
    }
    let mut records = Vec::new();
    let (mut cdi, mut ti) = (0, 0);
    for (i, &(size, covered)) in cov.iter().enumerate() {
        if size < cfg.min_instance_px {
            continue;
        }
        let detected = is_detected(size, covered);
        ti += 1;
        cdi += detected as u64;
        let mean_disparity = disparity_sum[i] / size as f64;
        records.push(InstanceRecord {
            frame_id: frame_id.to_string(),
            instance_id: i as u32 + 1,
            size_px: size,
            covered_px: covered,
            detected,
            mean_disparity,
            distance: if mean_disparity > 0.0 {
                cfg.baseline_constant / mean_disparity
            } else {
                f64::INFINITY
            },
        });
    }
    Ok((
        MetricCounts {
            cdp,
            tp_obstacle,
            cdi,
            ti,
            idp,
            tp_non_obstacle,
            idi,
            d: 1,
        },
        records,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pdr: Option<f64>,
    pub idr: Option<f64>,
    pub pfp: Option<f64>,
    pub ifp: Option<f64>,
    pub counts: MetricCounts,
    pub curve: Vec<CurvePoint>,
    pub instances: Vec<InstanceRecord>,
}

impl MetricsReport {
    pub fn from_parts(counts: MetricCounts, instances: Vec<InstanceRecord>, cfg: &MetricsConfig) -> Self {
        let pairs: Vec<(bool, f64)> = instances.iter().map(|r| (r.detected, r.distance)).collect();
        MetricsReport {
            pdr: counts.pdr(),
            idr: counts.idr(),
            pfp: counts.pfp(),
            ifp: counts.ifp(),
            counts,
            curve: detection_vs_distance_curve(&pairs, &cfg.curve_edges),
            instances,
        }
    }

    /// Same counts and instances, curve recomputed over new edges.
    pub fn with_edges(&self, edges: &[f64]) -> Self {
        let pairs: Vec<(bool, f64)> = self.instances.iter().map(|r| (r.detected, r.distance)).collect();
        MetricsReport {
            curve: detection_vs_distance_curve(&pairs, edges),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores precomputed predictions against labeled samples.
pub fn evaluate_predictions(preds: &[LabelMap], samples: &[Sample], cfg: &MetricsConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    if preds.len() != samples.len() {
        return Err(Error::Structure(format!(
            "{} predictions for {} frames",
            preds.len(),
            samples.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty frame set".into()));
    }
    let mut counts = MetricCounts::default();
    let mut instances = Vec::new();
    for (pred, s) in preds.iter().zip(samples) {
        let id = &s.frame.frame_id;
        let (c, r) = frame_metrics(id, pred, &s.labels, s.frame.disparity(), cfg).map_err(|e| e.in_frame(id))?;
        counts += c;
        instances.extend(r);
    }
    Ok(MetricsReport::from_parts(counts, instances, cfg))
}

/// Full-pipeline predictions on every sample, scored.
pub fn evaluate_dataset(bundle: &MergeNetBundle, samples: &[Sample], cfg: &MetricsConfig) -> Result<MetricsReport> {
    Ok(evaluate_components(bundle, samples, cfg)?.mergenet)
}

/// Stripe-only, context-only and full-pipeline scores side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub stripe: MetricsReport,
    pub context: MetricsReport,
    pub mergenet: MetricsReport,
}

impl ComponentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate_components(bundle: &MergeNetBundle, samples: &[Sample], cfg: &MetricsConfig) -> Result<ComponentReport> {
    let mut stripe = Vec::with_capacity(samples.len());
    let mut context = Vec::with_capacity(samples.len());
    let mut merged = Vec::with_capacity(samples.len());
    for s in samples {
        let out = mergenet_stages(bundle, &s.frame).map_err(|e| e.in_frame(&s.frame.frame_id))?;
        stripe.push(predict_labels(&out.stripe));
        context.push(predict_labels(&out.context));
        merged.push(predict_labels(&out.refined));
    }
    Ok(ComponentReport {
        stripe: evaluate_predictions(&stripe, samples, cfg)?,
        context: evaluate_predictions(&context, samples, cfg)?,
        mergenet: evaluate_predictions(&merged, samples, cfg)?,
    })
}

/// Writes `distance,cumulative_idr`; undefined rates are left empty.
pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let io = |e: csv::Error| Error::Load {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["distance", "cumulative_idr"]).map_err(io)?;
    for p in curve {
        let idr = p.cumulative_idr.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([p.distance.to_string(), idr]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
