//! Pose-estimation metrics: MPJPE, Procrustes-aligned MPJPE, mean vertex
//! error, root-aligned bony-landmark error, body-dimension and joint-angle
//! mean absolute errors, and per-frame inference timing. Inputs are meters
//! and radians; position metrics report millimeters, angles degrees.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};

const M_TO_MM: f64 = 1000.0;

/// Predicted/target point sets (meters) with an optional root landmark used
/// by the root-aligned metric.
#[derive(Debug, Clone)]
pub struct PointSetPair {
    pub predicted: Vec<Vector3<f64>>,
    pub target: Vec<Vector3<f64>>,
    pub root_index: Option<usize>,
}

impl PointSetPair {
    pub fn new(predicted: Vec<Vector3<f64>>, target: Vec<Vector3<f64>>) -> PointSetPair {
        PointSetPair {
            predicted,
            target,
            root_index: None,
        }
    }

    pub fn with_root(mut self, root_index: usize) -> PointSetPair {
        self.root_index = Some(root_index);
        self
    }

    fn check_shapes(&self) -> Result<()> {
        if self.predicted.len() != self.target.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predicted points vs {} target points",
                self.predicted.len(),
                self.target.len()
            )));
        }
        if self.predicted.is_empty() {
            return Err(Error::InvalidArgument("empty point sets".into()));
        }
        Ok(())
    }
}

/// Mean per-joint position error, millimeters.
pub fn mpjpe(pair: &PointSetPair) -> Result<f64> {
    pair.check_shapes()?;
    let sum: f64 = pair
        .predicted
        .iter()
        .zip(&pair.target)
        .map(|(p, t)| (p - t).norm())
        .sum();
    Ok(M_TO_MM * sum / pair.predicted.len() as f64)
}

/// Mean vertex error: the same mean Euclidean distance, over mesh vertices.
pub fn mve(pair: &PointSetPair) -> Result<f64> {
    mpjpe(pair)
}

/// Alignment family for the Procrustes-aligned metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    /// Rotation + translation + uniform scale.
    #[default]
    Similarity,
    /// Rotation + translation only.
    Rigid,
}

/// MPJPE after the optimal closed-form alignment of `predicted` onto
/// `target` (similarity by default; see [`AlignMode`]).
pub fn pa_mpjpe(pair: &PointSetPair) -> Result<f64> {
    pa_mpjpe_with_mode(pair, AlignMode::Similarity)
}

pub fn pa_mpjpe_with_mode(pair: &PointSetPair, mode: AlignMode) -> Result<f64> {
    pair.check_shapes()?;
    let n = pair.predicted.len();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "Procrustes alignment needs at least 3 points".into(),
        ));
    }
    let mean = |pts: &[Vector3<f64>]| pts.iter().sum::<Vector3<f64>>() / n as f64;
    let pm = mean(&pair.predicted);
    let tm = mean(&pair.target);

    // Degenerate (collinear or coincident) sets leave the rotation
    // under-determined.
    for (name, pts, c) in [
        ("predicted", &pair.predicted, pm),
        ("target", &pair.target, tm),
    ] {
        let centered = DMatrix::from_fn(n, 3, |r, col| (pts[r] - c)[col]);
        let sv = centered.svd(false, false).singular_values;
        if sv[1] <= 1e-9 * sv[0].max(1e-12) {
            return Err(Error::InvalidArgument(format!(
                "{name} point set is degenerate (collinear)"
            )));
        }
    }

    let mut cross = Matrix3::zeros();
    let mut pred_ss = 0.0;
    for (p, t) in pair.predicted.iter().zip(&pair.target) {
        let ph = p - pm;
        let th = t - tm;
        cross += ph * th.transpose();
        pred_ss += ph.norm_squared();
    }
    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v_t.transpose() * correction * u.transpose();

    let scale = match mode {
        AlignMode::Similarity => {
            let trace = svd.singular_values[0] + svd.singular_values[1] + d * svd.singular_values[2];
            trace / pred_ss
        }
        AlignMode::Rigid => 1.0,
    };

    let aligned: Vec<Vector3<f64>> = pair
        .predicted
        .iter()
        .map(|p| rotation * (p - pm) * scale + tm)
        .collect();
    mpjpe(&PointSetPair::new(aligned, pair.target.clone()))
}

/// Mean per-bony-landmark position error: both sets are re-expressed
/// relative to the root landmark, then averaged Euclidean distance,
/// millimeters.
pub fn mpblpe(pair: &PointSetPair) -> Result<f64> {
    pair.check_shapes()?;
    let root = pair
        .root_index
        .ok_or_else(|| Error::InvalidArgument("mpblpe needs a root index".into()))?;
    if root >= pair.predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "root index {root} out of range for {} landmarks",
            pair.predicted.len()
        )));
    }
    let pr = pair.predicted[root];
    let tr = pair.target[root];
    let sum: f64 = pair
        .predicted
        .iter()
        .zip(&pair.target)
        .map(|(p, t)| ((p - pr) - (t - tr)).norm())
        .sum();
    Ok(M_TO_MM * sum / pair.predicted.len() as f64)
}

/// Which body-segment axis carries the longest dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisSelector {
    X,
    Y,
    Z,
    /// All three axes contribute (the pelvis rule).
    AllThree,
}

/// Map from segment name to its evaluated axis.
#[derive(Debug, Clone, Default)]
pub struct SegmentAxisRule(pub BTreeMap<String, AxisSelector>);

impl SegmentAxisRule {
    /// The full-body assignment: x for skull/toes/calcaneus, y for spine and
    /// the limbs, z for jaw/scapula/clavicle, all three for the pelvis.
    pub fn full_body() -> SegmentAxisRule {
        let mut m = BTreeMap::new();
        let mut put = |name: &str, a: AxisSelector| m.insert(name.to_string(), a);
        put("pelvis", AxisSelector::AllThree);
        put("skull", AxisSelector::X);
        put("toes_r", AxisSelector::X);
        put("toes_l", AxisSelector::X);
        put("calcn_r", AxisSelector::X);
        put("calcn_l", AxisSelector::X);
        put("jaw", AxisSelector::Z);
        put("scapula_r", AxisSelector::Z);
        put("scapula_l", AxisSelector::Z);
        put("clavicle_r", AxisSelector::Z);
        put("clavicle_l", AxisSelector::Z);
        for seg in [
            "lumbar",
            "thorax",
            "neck",
            "upper_arm_r",
            "forearm_r",
            "hand_r",
            "upper_arm_l",
            "forearm_l",
            "hand_l",
            "femur_r",
            "tibia_r",
            "femur_l",
            "tibia_l",
        ] {
            put(seg, AxisSelector::Y);
        }
        SegmentAxisRule(m)
    }
}

/// Mean absolute body-dimension error, millimeters: per segment the selected
/// axis (or all three for the pelvis rule) compares `scale · rest dimension`
/// between prediction and target; the mean runs over evaluated axis entries.
pub fn mae_body(
    pred_scales: &BTreeMap<String, Vector3<f64>>,
    target_scales: &BTreeMap<String, Vector3<f64>>,
    segment_dims_mm: &BTreeMap<String, Vector3<f64>>,
    rules: &SegmentAxisRule,
) -> Result<f64> {
    if pred_scales.len() != target_scales.len()
        || !pred_scales.keys().eq(target_scales.keys())
        || !pred_scales.keys().eq(segment_dims_mm.keys())
    {
        return Err(Error::DimensionMismatch(
            "scale and dimension maps must cover the same segments".into(),
        ));
    }
    let mut sum = 0.0;
    let mut entries = 0usize;
    for (name, pred) in pred_scales {
        let target = &target_scales[name];
        let dims = &segment_dims_mm[name];
        let rule = rules.0.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!("no axis rule for segment '{name}'"))
        })?;
        let axes: &[usize] = match rule {
            AxisSelector::X => &[0],
            AxisSelector::Y => &[1],
            AxisSelector::Z => &[2],
            AxisSelector::AllThree => &[0, 1, 2],
        };
        for &a in axes {
            sum += (pred[a] * dims[a] - target[a] * dims[a]).abs();
            entries += 1;
        }
    }
    if entries == 0 {
        return Err(Error::InvalidArgument("no evaluated segments".into()));
    }
    Ok(sum / entries as f64)
}

/// Mean absolute joint-angle error in degrees. No modular wrapping: BSK
/// coordinates are range-limited, not circular.
pub fn mae_angle(pred_q: &[f64], target_q: &[f64]) -> Result<f64> {
    if pred_q.len() != target_q.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted angles vs {} target angles",
            pred_q.len(),
            target_q.len()
        )));
    }
    if pred_q.is_empty() {
        return Err(Error::InvalidArgument("empty angle vectors".into()));
    }
    let sum: f64 = pred_q
        .iter()
        .zip(target_q)
        .map(|(a, b)| (a - b).abs().to_degrees())
        .sum();
    Ok(sum / pred_q.len() as f64)
}

/// A timed run over a number of frames.
#[derive(Debug, Clone, Copy)]
pub struct TimedRun {
    pub frames: usize,
    pub total: Duration,
}

impl TimedRun {
    /// Average inference time per frame, seconds.
    pub fn aiti(&self) -> Result<f64> {
        if self.frames == 0 {
            return Err(Error::InvalidArgument("timed run covered no frames".into()));
        }
        Ok(self.total.as_secs_f64() / self.frames as f64)
    }
}

/// Times `work` over `frames` frames with a wall clock.
pub fn time_run<F: FnOnce()>(frames: usize, work: F) -> TimedRun {
    let start = Instant::now();
    work();
    TimedRun {
        frames,
        total: start.elapsed(),
    }
}

/// Per-frame metric table plus aggregates; renders as key/value text or CSV.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub aggregates: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.aggregates {
            out.push_str(&format!("{k} = {}\n", crate::io::fmt_g9(*v)));
        }
        out.push('\n');
        out.push_str(&format!("frame {}\n", self.columns.join(" ")));
        for (t, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| crate::io::fmt_g9(*v)).collect();
            out.push_str(&format!("{t} {}\n", cells.join(" ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("frame,{}\n", self.columns.join(","));
        for (t, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| crate::io::fmt_g9(*v)).collect();
            out.push_str(&format!("{t},{}\n", cells.join(",")));
        }
        out
    }
}
