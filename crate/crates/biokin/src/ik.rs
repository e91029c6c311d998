//! Optimization-based kinematics over experimental markers: a per-segment
//! scale solve from a calibration posture, then per-frame inverse kinematics
//! by damped Gauss-Newton with joint-limit projection.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{fk_jacobian, forward_kinematics};
use crate::skeleton::{Pose, SkeletonModel};

/// One frame of experimental marker observations, keyed by marker name.
/// A marker absent from `visibility` counts as visible.
#[derive(Debug, Clone, Default)]
pub struct MarkerFrame {
    pub positions: BTreeMap<String, Vector3<f64>>,
    pub visibility: BTreeMap<String, bool>,
}

impl MarkerFrame {
    pub fn from_positions<I>(positions: I) -> MarkerFrame
    where
        I: IntoIterator<Item = (String, Vector3<f64>)>,
    {
        MarkerFrame {
            positions: positions.into_iter().collect(),
            visibility: BTreeMap::new(),
        }
    }

    pub fn visible_position(&self, name: &str) -> Option<&Vector3<f64>> {
        if self.visibility.get(name).copied().unwrap_or(true) {
            self.positions.get(name)
        } else {
            None
        }
    }

    pub fn visible_count(&self) -> usize {
        self.positions
            .keys()
            .filter(|n| self.visibility.get(*n).copied().unwrap_or(true))
            .count()
    }

    pub fn set_visible(&mut self, name: &str, visible: bool) {
        self.visibility.insert(name.to_string(), visible);
    }
}

/// Marker observations over a contiguous frame range.
#[derive(Debug, Clone, Default)]
pub struct MarkerFrameSequence {
    pub frames: Vec<MarkerFrame>,
}

/// Solver knobs for the per-frame IK fit.
#[derive(Debug, Clone)]
pub struct IkSettings {
    pub max_iterations: usize,
    /// Convergence threshold on the unweighted per-coordinate RMS residual,
    /// meters.
    pub residual_tol: f64,
    /// Convergence threshold on the accepted step norm, radians/meters.
    pub step_tol: f64,
    pub damping_init: f64,
    pub damping_factor: f64,
    pub joint_limit_mode: JointLimitMode,
    /// Optional nonnegative weight per marker name; missing names weigh 1.
    pub marker_weights: Option<BTreeMap<String, f64>>,
}

/// Joint limits are enforced by projection after every candidate step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JointLimitMode {
    #[default]
    Clamp,
}

impl Default for IkSettings {
    fn default() -> IkSettings {
        IkSettings {
            max_iterations: 100,
            residual_tol: 1e-6,
            step_tol: 1e-9,
            damping_init: 1e-3,
            damping_factor: 10.0,
            joint_limit_mode: JointLimitMode::Clamp,
            marker_weights: None,
        }
    }
}

impl IkSettings {
    fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0 && self.step_tol > 0.0 && self.damping_init > 0.0) {
            return Err(Error::InvalidArgument(
                "IK tolerances and initial damping must be positive".into(),
            ));
        }
        if self.damping_factor <= 1.0 {
            return Err(Error::InvalidArgument(
                "damping factor must exceed 1".into(),
            ));
        }
        if let Some(w) = &self.marker_weights {
            if let Some((name, _)) = w.iter().find(|(_, v)| **v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "negative or non-finite weight for marker '{name}'"
                )));
            }
        }
        Ok(())
    }
}

/// Result of one per-frame IK solve.
#[derive(Debug, Clone)]
pub struct IkSolution {
    pub pose: Pose,
    /// Unweighted RMS over the residual coordinates of the used markers,
    /// meters.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Why a segment kept its default scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScaleIssueKind {
    /// Fewer than two visible markers on the segment.
    InsufficientMarkers { visible: usize },
    /// The markers carry no lever arm along this axis (singular system).
    DegenerateAxis { axis: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleIssue {
    pub segment: usize,
    pub name: String,
    pub kind: ScaleIssueKind,
}

/// Per-segment scales plus the segments that kept their defaults.
#[derive(Debug, Clone)]
pub struct ScaleSolve {
    pub scales: Vec<Vector3<f64>>,
    pub issues: Vec<ScaleIssue>,
    /// Unweighted per-coordinate RMS over the visible matched markers at the
    /// solved scales, meters.
    pub rms_residual: f64,
}

/// Solves per-segment scales against a calibration frame at a known posture.
///
/// Segments are visited parents-first; at each one the marker residual is
/// linear in that segment's scale with a diagonal normal system (rotations
/// are orthonormal), so each axis solves independently. Segments with fewer
/// than two visible markers, or axes without lever arm, keep scale 1 and are
/// reported.
pub fn solve_scales(
    model: &SkeletonModel,
    calibration_frame: &MarkerFrame,
    calibration_pose: &Pose,
) -> Result<ScaleSolve> {
    if calibration_pose.coords.len() != model.total_dof() {
        return Err(Error::DimensionMismatch(format!(
            "calibration pose has {} coordinates, skeleton has {} DOF",
            calibration_pose.coords.len(),
            model.total_dof()
        )));
    }
    let visible: Vec<(usize, Vector3<f64>)> = model
        .markers()
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            calibration_frame
                .visible_position(&m.name)
                .map(|p| (i, *p))
        })
        .collect();
    if visible.is_empty() {
        return Err(Error::NoVisibleMarkers);
    }
    for (i, p) in &visible {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "calibration position of marker '{}'",
                model.markers()[*i].name
            )));
        }
    }

    let n = model.joints().len();
    let mut scales = vec![Vector3::repeat(1.0); n];
    let mut issues = Vec::new();
    for seg in 0..n {
        let seg_markers: Vec<(usize, Vector3<f64>)> = visible
            .iter()
            .filter(|(i, _)| model.markers()[*i].segment == seg)
            .cloned()
            .collect();
        if seg_markers.len() < 2 {
            issues.push(ScaleIssue {
                segment: seg,
                name: model.joints()[seg].name.clone(),
                kind: ScaleIssueKind::InsufficientMarkers {
                    visible: seg_markers.len(),
                },
            });
            continue;
        }
        // Ancestors are already solved; descendants do not move this frame.
        let staged = model.apply_scales(&scales)?;
        let fk = forward_kinematics(&staged, calibration_pose)?;
        let frame = &fk.frames[seg];

        let mut num = Vector3::<f64>::zeros();
        let mut den = Vector3::<f64>::zeros();
        for (mi, target) in &seg_markers {
            let local = model.markers()[*mi].local;
            let body = frame.rotation.transpose() * (target - frame.translation);
            for a in 0..3 {
                num[a] += local[a] * body[a];
                den[a] += local[a] * local[a];
            }
        }
        let mut s = Vector3::repeat(1.0);
        for a in 0..3 {
            if den[a] < 1e-12 {
                issues.push(ScaleIssue {
                    segment: seg,
                    name: model.joints()[seg].name.clone(),
                    kind: ScaleIssueKind::DegenerateAxis { axis: a },
                });
            } else {
                let est = num[a] / den[a];
                if est > 1e-6 {
                    s[a] = est;
                } else {
                    issues.push(ScaleIssue {
                        segment: seg,
                        name: model.joints()[seg].name.clone(),
                        kind: ScaleIssueKind::DegenerateAxis { axis: a },
                    });
                }
            }
        }
        scales[seg] = s;
    }

    let fk = forward_kinematics(&model.apply_scales(&scales)?, calibration_pose)?;
    let mut ss = 0.0;
    for (mi, target) in &visible {
        ss += (fk.marker_world[*mi] - target).norm_squared();
    }
    let rms_residual = (ss / (3.0 * visible.len() as f64)).sqrt();

    Ok(ScaleSolve {
        scales,
        issues,
        rms_residual,
    })
}

struct MatchedMarkers {
    indices: Vec<usize>,
    targets: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

fn match_markers(
    model: &SkeletonModel,
    frame: &MarkerFrame,
    settings: &IkSettings,
) -> Result<MatchedMarkers> {
    let mut indices = Vec::new();
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    for (i, m) in model.markers().iter().enumerate() {
        let Some(p) = frame.visible_position(&m.name) else {
            continue;
        };
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite(format!("position of marker '{}'", m.name)));
        }
        let w = settings
            .marker_weights
            .as_ref()
            .and_then(|ws| ws.get(&m.name))
            .copied()
            .unwrap_or(1.0);
        if w == 0.0 {
            continue; // zero weight excludes the marker entirely
        }
        indices.push(i);
        targets.push(*p);
        weights.push(w);
    }
    if indices.is_empty() {
        return Err(Error::NoVisibleMarkers);
    }
    Ok(MatchedMarkers {
        indices,
        targets,
        weights,
    })
}

fn residual(
    model: &SkeletonModel,
    pose: &Pose,
    matched: &MatchedMarkers,
) -> Result<(DVector<f64>, f64, f64)> {
    let fk = forward_kinematics(model, pose)?;
    let k = matched.indices.len();
    let mut r = DVector::zeros(3 * k);
    let mut cost = 0.0;
    let mut ss = 0.0;
    for (row, (&mi, target)) in matched.indices.iter().zip(&matched.targets).enumerate() {
        let d = fk.marker_world[mi] - target;
        for a in 0..3 {
            r[3 * row + a] = d[a];
        }
        ss += d.norm_squared();
        cost += matched.weights[row] * d.norm_squared();
    }
    let rms = (ss / (3.0 * k as f64)).sqrt();
    Ok((r, cost, rms))
}

/// Fits the pose of `model` to one marker frame by Levenberg-Marquardt,
/// starting from `init`. Invisible markers are masked out; every candidate
/// step is clamped into the joint limits before evaluation; damping grows on
/// rejected steps and shrinks on accepted ones. Deterministic.
pub fn solve_ik_frame(
    model: &SkeletonModel,
    frame: &MarkerFrame,
    init: &Pose,
    settings: &IkSettings,
) -> Result<IkSolution> {
    settings.validate()?;
    let matched = match_markers(model, frame, settings)?;
    if matched.indices.len() < model.total_dof() / 3 + 1 {
        log::warn!(
            "IK under-determined: {} visible markers for {} DOF",
            matched.indices.len(),
            model.total_dof()
        );
    }

    let dof = model.total_dof();
    let mut pose = model.clamp_pose(init)?;
    let (mut r, mut cost, mut rms) = residual(model, &pose, &matched)?;
    let mut lambda = settings.damping_init;
    let mut iterations = 0usize;
    let mut converged = rms <= settings.residual_tol;

    while !converged && iterations < settings.max_iterations {
        if !cost.is_finite() {
            return Err(Error::NonFinite(format!(
                "IK residual at iteration {iterations}"
            )));
        }
        let full_jac = fk_jacobian(model, &pose)?;
        // Weighted normal equations over the matched marker rows.
        let k = matched.indices.len();
        let mut jac = DMatrix::zeros(3 * k, dof + 3);
        for (row, &mi) in matched.indices.iter().enumerate() {
            let sw = matched.weights[row].sqrt();
            for a in 0..3 {
                for c in 0..dof + 3 {
                    jac[(3 * row + a, c)] = sw * full_jac[(3 * mi + a, c)];
                }
            }
        }
        let mut rw = r.clone();
        for (row, &w) in matched.weights.iter().enumerate() {
            let sw = w.sqrt();
            for a in 0..3 {
                rw[3 * row + a] *= sw;
            }
        }
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * rw;

        let mut accepted = false;
        while lambda <= 1e12 {
            let mut damped = a.clone();
            for d in 0..dof + 3 {
                damped[(d, d)] += lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= settings.damping_factor;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut cand = pose.clone();
            for c in 0..dof {
                cand.coords[c] += delta[c];
            }
            cand.root_translation += Vector3::new(delta[dof], delta[dof + 1], delta[dof + 2]);
            cand = model.clamp_pose(&cand)?;

            let (cr, ccost, crms) = residual(model, &cand, &matched)?;
            if ccost <= cost {
                // Accepted LM steps never increase the weighted objective.
                debug_assert!(ccost <= cost);
                let step = (&cand.coords - &pose.coords).norm_squared()
                    + (cand.root_translation - pose.root_translation).norm_squared();
                pose = cand;
                r = cr;
                cost = ccost;
                rms = crms;
                lambda = (lambda / settings.damping_factor).max(1e-15);
                accepted = true;
                if step.sqrt() < settings.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= settings.damping_factor;
        }
        iterations += 1;
        if rms <= settings.residual_tol {
            converged = true;
        }
        if !accepted {
            break; // damping exhausted; report the best pose found
        }
    }

    Ok(IkSolution {
        pose,
        rms_residual: rms,
        iterations,
        converged,
    })
}

/// Solves a whole sequence, warm-starting each frame from the previous
/// solution (frame 0 from `init`, or the zero pose). Failed frames are
/// reported with their index and do not disturb their neighbors.
pub fn solve_ik_sequence(
    model: &SkeletonModel,
    frames: &MarkerFrameSequence,
    init: Option<&Pose>,
    settings: &IkSettings,
) -> Vec<Result<IkSolution>> {
    let mut warm = init
        .cloned()
        .unwrap_or_else(|| Pose::zero(model.total_dof()));
    let mut out = Vec::with_capacity(frames.frames.len());
    for (t, frame) in frames.frames.iter().enumerate() {
        match solve_ik_frame(model, frame, &warm, settings) {
            Ok(sol) => {
                warm = sol.pose.clone();
                out.push(Ok(sol));
            }
            Err(e) => out.push(Err(e.at_frame(t))),
        }
    }
    out
}

/// Marker frame generated by forward kinematics of a model pose; the common
/// way tests and the data generator produce observations.
pub fn markers_from_pose(model: &SkeletonModel, pose: &Pose) -> Result<MarkerFrame> {
    let fk = forward_kinematics(model, pose)?;
    Ok(MarkerFrame::from_positions(
        model
            .markers()
            .iter()
            .zip(&fk.marker_world)
            .map(|(m, p)| (m.name.clone(), *p)),
    ))
}
