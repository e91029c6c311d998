//! Oracles shared by the integration suites. Everything here is written
//! independently of the library's computation paths: the scene-graph
//! evaluator recurses over 4×4 homogeneous matrices, and the attention oracle
//! is a plain triple loop with its own interpolation.

#![allow(clippy::needless_range_loop)]

use biokin::attention::{FeatureMap, FeaturePyramid, QuerySet};
use biokin::skeleton::{Pose, SkeletonModel};
use nalgebra::{DMatrix, Matrix4, Vector3, Vector4};

fn rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0,
    )
}

fn rot_y(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        c, 0.0, s, 0.0, 0.0, 1.0, 0.0, 0.0, -s, 0.0, c, 0.0, 0.0, 0.0, 0.0, 1.0,
    )
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(
        c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    )
}

fn translate(v: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = v.x;
    m[(1, 3)] = v.y;
    m[(2, 3)] = v.z;
    m
}

/// Rotation about an arbitrary axis, assembled from a normalized quaternion.
fn rot_axis(axis: &Vector3<f64>, angle: f64) -> Matrix4<f64> {
    let half = 0.5 * angle;
    let (s, c) = half.sin_cos();
    let q = (c, axis.x * s, axis.y * s, axis.z * s);
    let (w, x, y, z) = q;
    Matrix4::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        0.0,
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        0.0,
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
        0.0,
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

/// Independent recursive scene-graph evaluation of a skeleton pose: returns
/// world joint and marker positions in model order.
pub fn scene_graph_positions(
    model: &SkeletonModel,
    pose: &Pose,
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let n = model.joints().len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut root = 0;
    for (i, j) in model.joints().iter().enumerate() {
        match j.parent {
            Some(p) => children[p].push(i),
            None => root = i,
        }
    }

    let mut joints = vec![Vector3::zeros(); n];
    let mut markers = vec![Vector3::zeros(); model.markers().len()];

    fn local_matrix(model: &SkeletonModel, pose: &Pose, i: usize) -> Matrix4<f64> {
        let joint = &model.joints()[i];
        // Fixed-axis X-Y-Z orientation: Rz·Ry·Rx.
        let orient = rot_z(joint.orientation.z) * rot_y(joint.orientation.y) * rot_x(joint.orientation.x);
        let mut m = match joint.parent {
            Some(_) => orient * translate(&joint.rest_offset),
            None => translate(&pose.root_translation) * orient,
        };
        let start = model.dof_start(i);
        for (k, axis) in joint.dof_axes.iter().enumerate() {
            m *= rot_axis(axis, pose.coords[start + k]);
        }
        m
    }

    fn visit(
        model: &SkeletonModel,
        pose: &Pose,
        children: &[Vec<usize>],
        i: usize,
        stack: Matrix4<f64>,
        joints: &mut [Vector3<f64>],
        markers: &mut [Vector3<f64>],
    ) {
        let world = stack * local_matrix(model, pose, i);
        // The joint origin precedes this joint's own DOF rotations, so it is
        // where the offset lands: recompute from the pre-DOF part.
        let joint = &model.joints()[i];
        let pre_dof = match joint.parent {
            Some(_) => {
                stack
                    * (rot_z(joint.orientation.z)
                        * rot_y(joint.orientation.y)
                        * rot_x(joint.orientation.x))
                    * translate(&joint.rest_offset)
            }
            None => translate(&pose.root_translation),
        };
        joints[i] = pre_dof.fixed_view::<3, 1>(0, 3).into_owned();
        for (mi, marker) in model.markers().iter().enumerate() {
            if marker.segment == i {
                let h = world * Vector4::new(marker.local.x, marker.local.y, marker.local.z, 1.0);
                markers[mi] = Vector3::new(h.x, h.y, h.z);
            }
        }
        for &c in &children[i] {
            visit(model, pose, children, c, world, joints, markers);
        }
    }

    visit(
        model,
        pose,
        &children,
        root,
        Matrix4::identity(),
        &mut joints,
        &mut markers,
    );
    (joints, markers)
}

/// Independent bilinear interpolation (zero padding outside the map).
pub fn naive_bilinear(map: &FeatureMap, point: [f64; 2]) -> Vec<f64> {
    let px = point[0] * (map.width - 1) as f64;
    let py = point[1] * (map.height - 1) as f64;
    let (x0, y0) = (px.floor() as i64, py.floor() as i64);
    let mut out = vec![0.0; map.channels];
    for (cx, cy) in [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)] {
        let wx = 1.0 - (px - cx as f64).abs();
        let wy = 1.0 - (py - cy as f64).abs();
        if wx <= 0.0 || wy <= 0.0 || cx < 0 || cy < 0 || cx >= map.width as i64 || cy >= map.height as i64
        {
            continue;
        }
        for (o, v) in out.iter_mut().zip(map.texel(cy as usize, cx as usize)) {
            *o += wx * wy * v;
        }
    }
    out
}

/// Brute-force deformable attention: triple loop, projection applied per
/// sample.
pub fn brute_force_dam(pyramid: &FeaturePyramid, qs: &QuerySet) -> DMatrix<f64> {
    let c = pyramid.channels();
    let k = qs.n_queries();
    let mut out = DMatrix::zeros(k, c);
    for q in 0..k {
        for s in 0..qs.levels {
            for m in 0..qs.points {
                let alpha = qs.weight(q, s, m);
                let d = qs.offset(q, s, m);
                let point = [
                    qs.reference_points[q][0] + d[0],
                    qs.reference_points[q][1] + d[1],
                ];
                let f = naive_bilinear(&pyramid.levels[s], point);
                for row in 0..c {
                    let mut v = 0.0;
                    for col in 0..c {
                        v += qs.projection[(row, col)] * f[col];
                    }
                    out[(q, row)] += alpha * v;
                }
            }
        }
    }
    out
}
