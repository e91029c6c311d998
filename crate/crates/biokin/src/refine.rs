//! 2D pose-informed refinement at inference time: a fixed-intrinsics
//! perspective camera, a confidence-weighted reprojection objective with a
//! pull-back regularizer toward the initial parameters, and plain
//! gradient-descent updates with optional backtracking.
//!
//! The refined variable is the pose-parameter vector itself (joint
//! coordinates plus root translation), standing in for latent query tokens;
//! any differentiable parameters-to-joints map can plug in through
//! [`PoseToJoints`].

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{fk_joint_jacobian, forward_kinematics};
use crate::skeleton::{Pose, SkeletonModel};

/// Perspective camera with fixed focal length and identity rotation; only the
/// translation varies.
#[derive(Debug, Clone)]
pub struct Camera {
    /// Focal length in pixels (default 5000).
    pub focal: f64,
    pub principal_point: Vector2<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Camera {
    fn default() -> Camera {
        Camera {
            focal: 5000.0,
            principal_point: Vector2::zeros(),
            translation: Vector3::zeros(),
        }
    }
}

/// `u = f·(x+Tx)/(z+Tz) + px`, `v` analogous. Errors name the first point at
/// or behind the camera plane.
pub fn project(points: &[Vector3<f64>], cam: &Camera) -> Result<Vec<Vector2<f64>>> {
    if cam.focal <= 0.0 {
        return Err(Error::InvalidArgument("camera focal must be positive".into()));
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = p + cam.translation;
            if c.z <= 0.0 {
                return Err(Error::BehindCamera {
                    index: i,
                    depth: c.z,
                });
            }
            Ok(Vector2::new(
                cam.focal * c.x / c.z + cam.principal_point.x,
                cam.focal * c.y / c.z + cam.principal_point.y,
            ))
        })
        .collect()
}

/// Jacobian of the projection of one point with respect to its camera-frame
/// position.
pub fn projection_jacobian(point: &Vector3<f64>, cam: &Camera) -> Matrix2x3<f64> {
    let c = point + cam.translation;
    let iz = 1.0 / c.z;
    Matrix2x3::new(
        cam.focal * iz,
        0.0,
        -cam.focal * c.x * iz * iz,
        0.0,
        cam.focal * iz,
        -cam.focal * c.y * iz * iz,
    )
}

/// A differentiable map from a parameter vector to 3D joint positions.
pub trait PoseToJoints {
    fn param_count(&self) -> usize;
    fn joint_positions(&self, theta: &DVector<f64>) -> Result<Vec<Vector3<f64>>>;
    /// Analytic Jacobian, `3·J × param_count`, rows grouped per joint.
    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// The skeleton path: parameters are `[q_r, root_translation]` and joints are
/// the forward-kinematics joint centers. Coordinates are left unclamped here;
/// the regularizer keeps them near their initial values.
impl PoseToJoints for SkeletonModel {
    fn param_count(&self) -> usize {
        self.total_dof() + 3
    }

    fn joint_positions(&self, theta: &DVector<f64>) -> Result<Vec<Vector3<f64>>> {
        Ok(forward_kinematics(self, &split_pose(self, theta)?)?.joint_world)
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        fk_joint_jacobian(self, &split_pose(self, theta)?)
    }
}

/// Skeleton path over the joint coordinates only: the root translation is
/// held at a fixed value, mirroring pose parameterizations that carry no
/// translation. Parameters are `q_r` alone.
pub struct FixedTranslationPath<'a> {
    pub model: &'a SkeletonModel,
    pub translation: Vector3<f64>,
}

impl PoseToJoints for FixedTranslationPath<'_> {
    fn param_count(&self) -> usize {
        self.model.total_dof()
    }

    fn joint_positions(&self, theta: &DVector<f64>) -> Result<Vec<Vector3<f64>>> {
        let pose = Pose::new(theta.clone(), self.translation);
        Ok(forward_kinematics(self.model, &pose)?.joint_world)
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pose = Pose::new(theta.clone(), self.translation);
        let full = fk_joint_jacobian(self.model, &pose)?;
        Ok(full.columns(0, self.model.total_dof()).into_owned())
    }
}

fn split_pose(model: &SkeletonModel, theta: &DVector<f64>) -> Result<Pose> {
    let dof = model.total_dof();
    if theta.len() != dof + 3 {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector has {} entries, skeleton path wants {}",
            theta.len(),
            dof + 3
        )));
    }
    Ok(Pose::new(
        theta.rows(0, dof).into_owned(),
        Vector3::new(theta[dof], theta[dof + 1], theta[dof + 2]),
    ))
}

#[derive(Debug, Clone)]
pub struct RefineSettings {
    /// Gradient step size η (η = 0 degenerates to a no-op update).
    pub step_size: f64,
    /// Total update count T.
    pub iterations: usize,
    /// Regularizer weight pulling the parameters toward their initial value.
    pub lambda_theta: f64,
    /// Optional per-joint confidences; zero drops a joint, absent means 1.
    pub keypoint_confidences: Option<Vec<f64>>,
    /// Halve a rejected step up to 20 times per iteration, carrying the
    /// accepted step into the next iteration; guarantees a non-increasing
    /// loss trace.
    pub backtracking: bool,
}

/// Iteration presets exercised by the evaluation grid.
pub const ITERATION_PRESETS: [usize; 4] = [1, 5, 10, 20];

const MAX_HALVINGS: usize = 20;

impl Default for RefineSettings {
    fn default() -> RefineSettings {
        RefineSettings {
            step_size: 1e-2,
            iterations: 10,
            lambda_theta: 1e-3,
            keypoint_confidences: None,
            backtracking: true,
        }
    }
}

impl RefineSettings {
    fn validate(&self) -> Result<()> {
        if self.step_size < 0.0 || !self.step_size.is_finite() {
            return Err(Error::InvalidArgument("step size must be nonnegative".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
        }
        if self.lambda_theta < 0.0 {
            return Err(Error::InvalidArgument(
                "regularizer weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn confidence(&self, joint: usize) -> f64 {
        self.keypoint_confidences
            .as_ref()
            .map_or(1.0, |c| c.get(joint).copied().unwrap_or(0.0))
    }
}

/// Parameters under refinement plus the recorded objective trace.
#[derive(Debug, Clone)]
pub struct RefineState {
    pub theta_prime: DVector<f64>,
    pub theta_init: DVector<f64>,
    pub loss_trace: Vec<f64>,
    step: f64,
}

impl RefineState {
    /// Builds the initial state and charges the trace with the starting
    /// objective.
    pub fn initial(
        theta_init: DVector<f64>,
        joints_2d: &[Vector2<f64>],
        model: &dyn PoseToJoints,
        cam: &Camera,
        settings: &RefineSettings,
    ) -> Result<RefineState> {
        settings.validate()?;
        let f0 = refine_objective(&theta_init, &theta_init, joints_2d, model, cam, settings)?;
        Ok(RefineState {
            theta_prime: theta_init.clone(),
            theta_init,
            loss_trace: vec![f0],
            // First backtracking attempt of the scaled search lands on the
            // natural unit step.
            step: 0.5,
        })
    }
}

/// Confidence-weighted squared pixel error over visible joints plus
/// `λ·‖θ' − θ_init‖²`.
pub fn refine_objective(
    theta_prime: &DVector<f64>,
    theta_init: &DVector<f64>,
    joints_2d: &[Vector2<f64>],
    model: &dyn PoseToJoints,
    cam: &Camera,
    settings: &RefineSettings,
) -> Result<f64> {
    let joints = model.joint_positions(theta_prime)?;
    if joints.len() != joints_2d.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} detected keypoints for {} model joints",
            joints_2d.len(),
            joints.len()
        )));
    }
    if (0..joints.len()).all(|j| settings.confidence(j) == 0.0) {
        return Err(Error::InvalidArgument("all joints invisible".into()));
    }
    let projected = project(&joints, cam)?;
    let mut data = 0.0;
    for (j, (p, y)) in projected.iter().zip(joints_2d).enumerate() {
        data += settings.confidence(j) * (p - y).norm_squared();
    }
    let delta = theta_prime - theta_init;
    Ok(data + settings.lambda_theta * delta.norm_squared())
}

fn refine_gradient(
    theta_prime: &DVector<f64>,
    theta_init: &DVector<f64>,
    joints_2d: &[Vector2<f64>],
    model: &dyn PoseToJoints,
    cam: &Camera,
    settings: &RefineSettings,
) -> Result<DVector<f64>> {
    let joints = model.joint_positions(theta_prime)?;
    let projected = project(&joints, cam)?;
    let jac = model.jacobian(theta_prime)?;
    let p = model.param_count();
    let mut grad = DVector::zeros(p);
    for (j, (pix, y)) in projected.iter().zip(joints_2d).enumerate() {
        let w = settings.confidence(j);
        if w == 0.0 {
            continue;
        }
        let pj = projection_jacobian(&joints[j], cam);
        let r = pix - y;
        // 2w · Jmodelᵀ Jπᵀ r, accumulated row by row.
        for c in 0..p {
            let dx = Vector3::new(jac[(3 * j, c)], jac[(3 * j + 1, c)], jac[(3 * j + 2, c)]);
            let duv = pj * dx;
            grad[c] += 2.0 * w * (duv.x * r.x + duv.y * r.y);
        }
    }
    grad += 2.0 * settings.lambda_theta * (theta_prime - theta_init);
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("refinement gradient".into()));
    }
    Ok(grad)
}

/// Gauss-Newton-scaled descent direction: solves
/// `(JᵀWJ + λI + μI)·p = ∇F/2` where `J` stacks the pixel Jacobians of the
/// visible joints. `p` points along the gradient reshaped by the local
/// curvature, so a unit step has Newton-like scale.
fn scaled_direction(
    theta_prime: &DVector<f64>,
    grad: &DVector<f64>,
    joints_2d: &[Vector2<f64>],
    model: &dyn PoseToJoints,
    cam: &Camera,
    settings: &RefineSettings,
) -> Result<DVector<f64>> {
    let joints = model.joint_positions(theta_prime)?;
    let jac = model.jacobian(theta_prime)?;
    let p = model.param_count();
    let mut h = DMatrix::from_diagonal_element(p, p, settings.lambda_theta);
    for j in 0..joints_2d.len().min(joints.len()) {
        let w = settings.confidence(j);
        if w == 0.0 {
            continue;
        }
        let pj = projection_jacobian(&joints[j], cam);
        // Rows of the pixel Jacobian for joint j across all parameters.
        let mut rows = DMatrix::zeros(2, p);
        for c in 0..p {
            let dx = Vector3::new(jac[(3 * j, c)], jac[(3 * j + 1, c)], jac[(3 * j + 2, c)]);
            let duv = pj * dx;
            rows[(0, c)] = duv.x;
            rows[(1, c)] = duv.y;
        }
        h += rows.transpose() * rows * w;
    }
    let mu = h.diagonal().amax().max(1.0) * 1e-10;
    for c in 0..p {
        h[(c, c)] += mu;
    }
    let half_grad = grad * 0.5;
    let diag = h.diagonal();
    match h.cholesky() {
        Some(chol) => Ok(chol.solve(&half_grad)),
        None => Ok(DVector::from_fn(p, |c, _| {
            half_grad[c] / diag[c].max(f64::MIN_POSITIVE)
        })),
    }
}

/// One update `θ' ← θ' − η∇F`, appending the new objective to the trace.
/// With backtracking, a rejected step halves up to 20 times and otherwise
/// leaves the parameters where they were.
pub fn refine_step(
    state: &RefineState,
    joints_2d: &[Vector2<f64>],
    model: &dyn PoseToJoints,
    cam: &Camera,
    settings: &RefineSettings,
) -> Result<RefineState> {
    let current = *state
        .loss_trace
        .last()
        .expect("state always carries the initial objective");
    let grad = refine_gradient(
        &state.theta_prime,
        &state.theta_init,
        joints_2d,
        model,
        cam,
        settings,
    )?;
    let mut next = state.clone();
    if settings.backtracking {
        // Curvature-scaled gradient direction; halving on increase keeps
        // the trace non-increasing.
        let dir = scaled_direction(&state.theta_prime, &grad, joints_2d, model, cam, settings)?;
        let probe = |eta: f64| -> Result<f64> {
            let cand = &state.theta_prime - &dir * eta;
            // A candidate that cannot be projected (joint at or behind the
            // camera plane) is simply a rejected step.
            match refine_objective(&cand, &state.theta_init, joints_2d, model, cam, settings) {
                Ok(f) => Ok(f),
                Err(Error::BehindCamera { .. }) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        };
        let mut eta = (state.step * 2.0).min(1.0);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let f = probe(eta)?;
            if f <= current {
                accepted = Some((f, eta));
                break;
            }
            eta *= 0.5;
        }
        if let Some((f, eta)) = accepted {
            next.theta_prime = &state.theta_prime - &dir * eta;
            next.loss_trace.push(f);
            next.step = eta;
        } else {
            next.loss_trace.push(current);
            next.step = eta;
        }
    } else {
        let cand = &state.theta_prime - &grad * settings.step_size;
        let f = refine_objective(&cand, &state.theta_init, joints_2d, model, cam, settings)?;
        next.theta_prime = cand;
        next.loss_trace.push(f);
    }
    Ok(next)
}

/// Runs `settings.iterations` refine steps from `theta_init`; the returned
/// trace holds the initial objective plus one entry per iteration.
pub fn refine(
    theta_init: DVector<f64>,
    joints_2d: &[Vector2<f64>],
    model: &dyn PoseToJoints,
    cam: &Camera,
    settings: &RefineSettings,
) -> Result<RefineState> {
    let mut state = RefineState::initial(theta_init, joints_2d, model, cam, settings)?;
    for _ in 0..settings.iterations {
        state = refine_step(&state, joints_2d, model, cam, settings)?;
    }
    Ok(state)
}

/// RMS pixel distance between a projection of the model at `theta` and the
/// detected keypoints; the evaluation quantity for refinement studies.
pub fn reprojection_rms(
    theta: &DVector<f64>,
    joints_2d: &[Vector2<f64>],
    model: &dyn PoseToJoints,
    cam: &Camera,
) -> Result<f64> {
    let projected = project(&model.joint_positions(theta)?, cam)?;
    if projected.len() != joints_2d.len() || projected.is_empty() {
        return Err(Error::DimensionMismatch("keypoint count mismatch".into()));
    }
    let ss: f64 = projected
        .iter()
        .zip(joints_2d)
        .map(|(p, y)| (p - y).norm_squared())
        .sum();
    Ok((ss / projected.len() as f64).sqrt())
}
