//! Rotation algebra and forward kinematics: maps joint coordinates, segment
//! scales, and local marker positions to world coordinates, with analytic
//! Jacobians for the solvers built on top.
//!
//! Frame convention: a child frame is `parent ∘ R(orientation) ∘ T(offset) ∘
//! R(dof coordinates)`; the root frame is `T(root_translation) ∘
//! R(orientation) ∘ R(dof coordinates)`. Offsets and marker locals are used
//! as stored — [`SkeletonModel::apply_scales`] bakes scales into them.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::skeleton::{JointSpec, Pose, SkeletonModel};

/// Rotation + translation pair; rows of the kinematic chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> RigidTransform {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Max-abs deviation of `RᵀR` from the identity; used by validity checks.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }
}

/// World frames and positions produced by one forward-kinematics pass.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub frames: Vec<RigidTransform>,
    pub joint_world: Vec<Vector3<f64>>,
    pub marker_world: Vec<Vector3<f64>>,
}

/// Rodrigues rotation for a scaled-axis vector; the zero vector yields the
/// identity.
pub fn axis_angle_to_matrix(aa: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = aa.norm_squared();
    let k = skew(aa);
    // sin(θ)/θ and (1-cos(θ))/θ² with series fallbacks near zero.
    let (a, b) = if theta2 < 1e-16 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Fixed-axis (extrinsic) X-Y-Z Euler rotation: rotate about world X, then
/// world Y, then world Z, i.e. `Rz · Ry · Rx`.
pub fn euler_fixed_xyz(angles: &Vector3<f64>) -> Matrix3<f64> {
    let rx = axis_angle_to_matrix(&Vector3::new(angles.x, 0.0, 0.0));
    let ry = axis_angle_to_matrix(&Vector3::new(0.0, angles.y, 0.0));
    let rz = axis_angle_to_matrix(&Vector3::new(0.0, 0.0, angles.z));
    rz * ry * rx
}

/// Product of per-axis rotations in listed order; zero DOF yields the
/// identity.
pub fn dof_rotation(joint: &JointSpec, coords: &[f64]) -> Result<Matrix3<f64>> {
    if coords.len() != joint.dof() {
        return Err(Error::DimensionMismatch(format!(
            "joint '{}' has {} DOF, got {} coordinates",
            joint.name,
            joint.dof(),
            coords.len()
        )));
    }
    let mut r = Matrix3::identity();
    for (axis, &c) in joint.dof_axes.iter().zip(coords) {
        r *= axis_angle_to_matrix(&(axis.into_inner() * c));
    }
    Ok(r)
}

fn pose_coords<'a>(model: &SkeletonModel, pose: &'a Pose) -> Result<&'a [f64]> {
    if pose.coords.len() != model.total_dof() {
        return Err(Error::DimensionMismatch(format!(
            "pose has {} coordinates, skeleton has {} DOF",
            pose.coords.len(),
            model.total_dof()
        )));
    }
    Ok(pose.coords.as_slice())
}

/// Evaluates every joint frame, joint position, and marker position.
pub fn forward_kinematics(model: &SkeletonModel, pose: &Pose) -> Result<FkResult> {
    let coords = pose_coords(model, pose)?;
    let mut frames: Vec<RigidTransform> = Vec::with_capacity(model.joints().len());
    for (i, joint) in model.joints().iter().enumerate() {
        let start = model.dof_start(i);
        let r_o = euler_fixed_xyz(&joint.orientation);
        let r_dof = dof_rotation(joint, &coords[start..start + joint.dof()])?;
        let frame = match joint.parent {
            None => RigidTransform {
                rotation: r_o * r_dof,
                translation: pose.root_translation,
            },
            Some(p) => {
                let parent = &frames[p];
                let oriented = parent.rotation * r_o;
                RigidTransform {
                    translation: parent.translation + oriented * joint.rest_offset,
                    rotation: oriented * r_dof,
                }
            }
        };
        frames.push(frame);
    }
    let joint_world = frames.iter().map(|f| f.translation).collect();
    let marker_world = model
        .markers()
        .iter()
        .map(|m| frames[m.segment].transform_point(&m.local))
        .collect();
    Ok(FkResult {
        frames,
        joint_world,
        marker_world,
    })
}

/// Per-coordinate rotation geometry shared by the Jacobian builders.
struct DofGeometry {
    /// World-frame rotation axis of every flat coordinate.
    world_axes: Vec<Vector3<f64>>,
    /// Rotation center (owning joint origin) of every flat coordinate.
    centers: Vec<Vector3<f64>>,
    /// Owning joint of every flat coordinate.
    owner: Vec<usize>,
    fk: FkResult,
}

fn dof_geometry(model: &SkeletonModel, pose: &Pose) -> Result<DofGeometry> {
    let coords = pose_coords(model, pose)?;
    let fk = forward_kinematics(model, pose)?;
    let dof = model.total_dof();
    let mut world_axes = Vec::with_capacity(dof);
    let mut centers = Vec::with_capacity(dof);
    let mut owner = Vec::with_capacity(dof);
    for (i, joint) in model.joints().iter().enumerate() {
        let start = model.dof_start(i);
        let base_rot = match joint.parent {
            None => euler_fixed_xyz(&joint.orientation),
            Some(p) => fk.frames[p].rotation * euler_fixed_xyz(&joint.orientation),
        };
        let origin = fk.frames[i].translation;
        // Axis k lives in the frame reached after axes 1..k-1 have rotated.
        let mut acc = base_rot;
        for (k, axis) in joint.dof_axes.iter().enumerate() {
            world_axes.push(acc * axis.into_inner());
            centers.push(origin);
            owner.push(i);
            acc *= axis_angle_to_matrix(&(axis.into_inner() * coords[start + k]));
        }
    }
    Ok(DofGeometry {
        world_axes,
        centers,
        owner,
        fk,
    })
}

/// True when `ancestor` is `joint` or one of its ancestors.
fn in_chain(model: &SkeletonModel, joint: usize, ancestor: usize) -> bool {
    let mut cur = Some(joint);
    while let Some(i) = cur {
        if i == ancestor {
            return true;
        }
        cur = model.joints()[i].parent;
    }
    false
}

/// Analytic Jacobian of all marker world positions with respect to
/// `(q_r, root_translation)`: shape `3·M × (DOF + 3)`. Scale derivatives are
/// intentionally excluded; see [`fk_scale_jacobians`].
pub fn fk_jacobian(model: &SkeletonModel, pose: &Pose) -> Result<DMatrix<f64>> {
    let geo = dof_geometry(model, pose)?;
    let dof = model.total_dof();
    let mut jac = DMatrix::zeros(3 * model.markers().len(), dof + 3);
    for (mi, marker) in model.markers().iter().enumerate() {
        let x = geo.fk.marker_world[mi];
        for c in 0..dof {
            if in_chain(model, marker.segment, geo.owner[c]) {
                let col = geo.world_axes[c].cross(&(x - geo.centers[c]));
                for r in 0..3 {
                    jac[(3 * mi + r, c)] = col[r];
                }
            }
        }
        for r in 0..3 {
            jac[(3 * mi + r, dof + r)] = 1.0;
        }
    }
    Ok(jac)
}

/// Analytic Jacobian of all joint positions with respect to
/// `(q_r, root_translation)`: shape `3·K × (DOF + 3)`. A joint's own
/// coordinates do not move its origin.
pub fn fk_joint_jacobian(model: &SkeletonModel, pose: &Pose) -> Result<DMatrix<f64>> {
    let geo = dof_geometry(model, pose)?;
    let dof = model.total_dof();
    let mut jac = DMatrix::zeros(3 * model.joints().len(), dof + 3);
    for (ji, joint) in model.joints().iter().enumerate() {
        let x = geo.fk.joint_world[ji];
        if let Some(parent) = joint.parent {
            for c in 0..dof {
                if in_chain(model, parent, geo.owner[c]) {
                    let col = geo.world_axes[c].cross(&(x - geo.centers[c]));
                    for r in 0..3 {
                        jac[(3 * ji + r, c)] = col[r];
                    }
                }
            }
        }
        for r in 0..3 {
            jac[(3 * ji + r, dof + r)] = 1.0;
        }
    }
    Ok(jac)
}

/// Jacobians of marker and joint world positions with respect to the
/// per-segment scale components (columns ordered `3·segment + axis`),
/// evaluated for scales applied on top of `model`'s current geometry.
/// Positions are affine in the scales, so these hold at any scale value.
pub fn fk_scale_jacobians(
    model: &SkeletonModel,
    pose: &Pose,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let fk = forward_kinematics(model, pose)?;
    let n = model.joints().len();

    // World displacement of joint j's offset per unit of its parent's scale
    // component: column a of (parent rotation ∘ orientation) times offset[a].
    let mut edge_cols: Vec<Matrix3<f64>> = Vec::with_capacity(n);
    for joint in model.joints() {
        match joint.parent {
            None => edge_cols.push(Matrix3::zeros()),
            Some(p) => {
                let oriented = fk.frames[p].rotation * euler_fixed_xyz(&joint.orientation);
                let mut m = Matrix3::zeros();
                for a in 0..3 {
                    m.set_column(a, &(oriented.column(a) * joint.rest_offset[a]));
                }
                edge_cols.push(m);
            }
        }
    }

    // d(joint origin)/d(scale): accumulate down the tree. A joint's origin
    // inherits its parent's sensitivity plus the offset edge owned by the
    // parent's segment.
    let mut joint_jac = DMatrix::zeros(3 * n, 3 * n);
    for (ji, joint) in model.joints().iter().enumerate() {
        if let Some(p) = joint.parent {
            for col in 0..3 * n {
                for r in 0..3 {
                    joint_jac[(3 * ji + r, col)] = joint_jac[(3 * p + r, col)];
                }
            }
            for a in 0..3 {
                for r in 0..3 {
                    joint_jac[(3 * ji + r, 3 * p + a)] += edge_cols[ji][(r, a)];
                }
            }
        }
    }

    let mut marker_jac = DMatrix::zeros(3 * model.markers().len(), 3 * n);
    for (mi, marker) in model.markers().iter().enumerate() {
        let s = marker.segment;
        for col in 0..3 * n {
            for r in 0..3 {
                marker_jac[(3 * mi + r, col)] = joint_jac[(3 * s + r, col)];
            }
        }
        let rot = &fk.frames[s].rotation;
        for a in 0..3 {
            for r in 0..3 {
                marker_jac[(3 * mi + r, 3 * s + a)] += rot[(r, a)] * marker.local[a];
            }
        }
    }
    Ok((marker_jac, joint_jac))
}
