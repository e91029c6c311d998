//! Desk-scale parametric body mesh: linear shape blendshapes, joint
//! regression from vertices, linear blend skinning over a 24-joint kinematic
//! tree, and virtual-marker extraction. Licensed body assets are not bundled;
//! a procedurally generated synthetic body with the same tensor shapes ships
//! instead, and real assets load through the named-array container.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::io::ArrayContainer;
use crate::kinematics::axis_angle_to_matrix;
use crate::synth;

pub const SMPL_JOINTS: usize = 24;
pub const SMPL_SHAPES: usize = 10;
pub const DEFAULT_VIRTUAL_MARKERS: usize = 142;

/// Kinematic parents of the 24-joint tree (root first).
pub const SMPL_PARENTS: [i64; SMPL_JOINTS] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

/// Template geometry, skinning weights, shape directions, joint regressor,
/// kinematic tree, and the virtual-marker vertex list.
#[derive(Debug, Clone)]
pub struct BodyMesh {
    template: DMatrix<f64>,        // N×3
    skin_weights: DMatrix<f64>,    // N×K
    shape_dirs: Vec<DMatrix<f64>>, // B of N×3
    joint_regressor: DMatrix<f64>, // N×K
    parents: Vec<Option<usize>>,   // K
    virtual_marker_indices: Vec<usize>,
}

/// Pose (24 axis-angle rotations, global orientation first), shape, and
/// translation.
#[derive(Debug, Clone)]
pub struct SmplParams {
    pub theta: Vec<Vector3<f64>>,
    pub beta: DVector<f64>,
    pub translation: Vector3<f64>,
}

impl SmplParams {
    pub fn rest(shapes: usize) -> SmplParams {
        SmplParams {
            theta: vec![Vector3::zeros(); SMPL_JOINTS],
            beta: DVector::zeros(shapes),
            translation: Vector3::zeros(),
        }
    }
}

/// Posed vertices and joints produced by [`BodyMesh::skin`].
#[derive(Debug, Clone)]
pub struct SkinResult {
    pub vertices: DMatrix<f64>,
    pub joints: DMatrix<f64>,
}

impl BodyMesh {
    pub fn new(
        template: DMatrix<f64>,
        skin_weights: DMatrix<f64>,
        shape_dirs: Vec<DMatrix<f64>>,
        joint_regressor: DMatrix<f64>,
        parents: Vec<Option<usize>>,
        virtual_marker_indices: Vec<usize>,
    ) -> Result<BodyMesh> {
        let n = template.nrows();
        let k = parents.len();
        if template.ncols() != 3 {
            return Err(Error::DimensionMismatch("template must be N×3".into()));
        }
        if skin_weights.shape() != (n, k) {
            return Err(Error::DimensionMismatch(format!(
                "skin weights are {:?}, want ({n}, {k})",
                skin_weights.shape()
            )));
        }
        if joint_regressor.shape() != (n, k) {
            return Err(Error::DimensionMismatch(format!(
                "joint regressor is {:?}, want ({n}, {k})",
                joint_regressor.shape()
            )));
        }
        for (b, d) in shape_dirs.iter().enumerate() {
            if d.shape() != (n, 3) {
                return Err(Error::DimensionMismatch(format!(
                    "shape direction {b} is {:?}, want ({n}, 3)",
                    d.shape()
                )));
            }
        }
        for v in 0..n {
            let mut row = 0.0;
            for j in 0..k {
                let w = skin_weights[(v, j)];
                if w < 0.0 {
                    return Err(Error::Validation(format!(
                        "negative skin weight at vertex {v}, joint {j}"
                    )));
                }
                row += w;
            }
            if (row - 1.0).abs() > 1e-8 {
                return Err(Error::Validation(format!(
                    "skin weight row {v} sums to {row}, want 1"
                )));
            }
        }
        for j in 0..k {
            let col: f64 = (0..n).map(|v| joint_regressor[(v, j)]).sum();
            if (col - 1.0).abs() > 1e-8 {
                return Err(Error::Validation(format!(
                    "joint regressor column {j} sums to {col}, want 1"
                )));
            }
        }
        for (j, p) in parents.iter().enumerate() {
            match p {
                None if j != 0 => {
                    return Err(Error::Validation(format!("joint {j} has no parent")))
                }
                Some(p) if *p >= j => {
                    return Err(Error::Validation(format!(
                        "joint {j} parent {p} does not precede it"
                    )))
                }
                _ => {}
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for &i in &virtual_marker_indices {
            if i >= n {
                return Err(Error::Validation(format!(
                    "virtual marker index {i} out of range for {n} vertices"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::Validation(format!("duplicate virtual marker index {i}")));
            }
        }
        Ok(BodyMesh {
            template,
            skin_weights,
            shape_dirs,
            joint_regressor,
            parents,
            virtual_marker_indices,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.template.nrows()
    }

    pub fn n_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn n_shapes(&self) -> usize {
        self.shape_dirs.len()
    }

    pub fn template(&self) -> &DMatrix<f64> {
        &self.template
    }

    pub fn shape_dirs(&self) -> &[DMatrix<f64>] {
        &self.shape_dirs
    }

    pub fn skin_weights(&self) -> &DMatrix<f64> {
        &self.skin_weights
    }

    pub fn joint_regressor(&self) -> &DMatrix<f64> {
        &self.joint_regressor
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn virtual_marker_indices(&self) -> &[usize] {
        &self.virtual_marker_indices
    }

    /// Template plus the linear combination of shape directions.
    pub fn shape_vertices(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
        if beta.len() != self.shape_dirs.len() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries for {} shape directions",
                beta.len(),
                self.shape_dirs.len()
            )));
        }
        let mut v = self.template.clone();
        for (b, dir) in self.shape_dirs.iter().enumerate() {
            v += dir * beta[b];
        }
        Ok(v)
    }

    /// Shapes, regresses joints, poses the kinematic tree, and skins the
    /// vertices with blended relative transforms; translation is added last.
    pub fn skin(&self, params: &SmplParams) -> Result<SkinResult> {
        let k = self.n_joints();
        if params.theta.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} rotations for {k} joints",
                params.theta.len()
            )));
        }
        let finite = params.theta.iter().all(|t| t.iter().all(|c| c.is_finite()))
            && params.beta.iter().all(|c| c.is_finite())
            && params.translation.iter().all(|c| c.is_finite());
        if !finite {
            return Err(Error::NonFinite("skin parameters".into()));
        }

        let shaped = self.shape_vertices(&params.beta)?;
        let rest_joints = regress_joints(&shaped, &self.joint_regressor)?;
        let j = |i: usize| Vector3::new(rest_joints[(i, 0)], rest_joints[(i, 1)], rest_joints[(i, 2)]);

        // World rotations and the relative (rest-to-posed) translations.
        // rel[i] = world translation of joint i minus rot[i] * rest joint i,
        // accumulated so the rest pose yields exactly the identity transform.
        let mut rot: Vec<Matrix3<f64>> = Vec::with_capacity(k);
        let mut rel: Vec<Vector3<f64>> = Vec::with_capacity(k);
        let mut posed_joints = DMatrix::zeros(k, 3);
        for i in 0..k {
            let local = axis_angle_to_matrix(&params.theta[i]);
            match self.parents[i] {
                None => {
                    rot.push(local);
                    rel.push(j(i) - local * j(i));
                    for a in 0..3 {
                        posed_joints[(i, a)] = j(i)[a];
                    }
                }
                Some(p) => {
                    let world = rot[p] * local;
                    let joint_world = rel[p] + rot[p] * j(i);
                    rel.push(joint_world - world * j(i));
                    rot.push(world);
                    for a in 0..3 {
                        posed_joints[(i, a)] = joint_world[a];
                    }
                }
            }
        }

        let n = self.n_vertices();
        let mut vertices = DMatrix::zeros(n, 3);
        for v in 0..n {
            // Blend transforms first, then apply once.
            let mut brot = Matrix3::zeros();
            let mut btrans = Vector3::zeros();
            for i in 0..k {
                let w = self.skin_weights[(v, i)];
                if w != 0.0 {
                    brot += rot[i] * w;
                    btrans += rel[i] * w;
                }
            }
            let p = Vector3::new(shaped[(v, 0)], shaped[(v, 1)], shaped[(v, 2)]);
            let out = brot * p + btrans + params.translation;
            for a in 0..3 {
                vertices[(v, a)] = out[a];
            }
        }
        for i in 0..k {
            for a in 0..3 {
                posed_joints[(i, a)] += params.translation[a];
            }
        }
        Ok(SkinResult {
            vertices,
            joints: posed_joints,
        })
    }

    /// Serializes to the named-array container (`parents` stores -1 for the
    /// root).
    pub fn to_container(&self) -> ArrayContainer {
        let n = self.n_vertices();
        let k = self.n_joints();
        let b = self.n_shapes();
        let mut c = ArrayContainer::default();
        let flat = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.nrows() * m.ncols());
            for r in 0..m.nrows() {
                for col in 0..m.ncols() {
                    out.push(m[(r, col)]);
                }
            }
            out
        };
        c.insert("template", vec![n, 3], flat(&self.template)).unwrap();
        c.insert("skin_weights", vec![n, k], flat(&self.skin_weights)).unwrap();
        let mut dirs = Vec::with_capacity(n * 3 * b);
        for r in 0..n {
            for col in 0..3 {
                for d in self.shape_dirs.iter() {
                    dirs.push(d[(r, col)]);
                }
            }
        }
        c.insert("shape_dirs", vec![n, 3, b], dirs).unwrap();
        c.insert("joint_regressor", vec![n, k], flat(&self.joint_regressor)).unwrap();
        c.insert(
            "parents",
            vec![k],
            self.parents
                .iter()
                .map(|p| p.map_or(-1.0, |v| v as f64))
                .collect(),
        )
        .unwrap();
        c.insert(
            "marker_indices",
            vec![self.virtual_marker_indices.len()],
            self.virtual_marker_indices.iter().map(|&i| i as f64).collect(),
        )
        .unwrap();
        c
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<BodyMesh> {
        BodyMesh::from_container(&ArrayContainer::load(path)?)
    }

    pub fn from_container(c: &ArrayContainer) -> Result<BodyMesh> {
        let t = c.get("template")?;
        if t.shape.len() != 2 || t.shape[1] != 3 {
            return Err(Error::Validation("template must be N×3".into()));
        }
        let n = t.shape[0];
        let unflat = |a: &crate::io::NamedArray, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            if a.shape != vec![rows, cols] {
                return Err(Error::DimensionMismatch(format!(
                    "array shape {:?}, want [{rows}, {cols}]",
                    a.shape
                )));
            }
            Ok(DMatrix::from_fn(rows, cols, |r, col| a.data[r * cols + col]))
        };
        let parents_arr = c.get("parents")?;
        let k = parents_arr.shape.first().copied().unwrap_or(0);
        let parents: Vec<Option<usize>> = parents_arr
            .data
            .iter()
            .map(|&v| if v < 0.0 { None } else { Some(v as usize) })
            .collect();

        let template = unflat(t, n, 3)?;
        let skin_weights = unflat(c.get("skin_weights")?, n, k)?;
        let joint_regressor = unflat(c.get("joint_regressor")?, n, k)?;

        let dirs_arr = c.get("shape_dirs")?;
        if dirs_arr.shape.len() != 3 || dirs_arr.shape[0] != n || dirs_arr.shape[1] != 3 {
            return Err(Error::Validation(format!(
                "shape_dirs must be [N, 3, B], got {:?}",
                dirs_arr.shape
            )));
        }
        let b = dirs_arr.shape[2];
        let mut shape_dirs = vec![DMatrix::zeros(n, 3); b];
        for r in 0..n {
            for col in 0..3 {
                for (bi, d) in shape_dirs.iter_mut().enumerate() {
                    d[(r, col)] = dirs_arr.data[(r * 3 + col) * b + bi];
                }
            }
        }
        let marker_indices = c
            .get("marker_indices")?
            .data
            .iter()
            .map(|&v| v as usize)
            .collect();
        BodyMesh::new(
            template,
            skin_weights,
            shape_dirs,
            joint_regressor,
            parents,
            marker_indices,
        )
    }
}

/// `J = MW`: joint k is the regressor-weighted sum of vertices.
pub fn regress_joints(vertices: &DMatrix<f64>, regressor: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if vertices.ncols() != 3 || vertices.nrows() != regressor.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "vertices {:?} do not match regressor {:?}",
            vertices.shape(),
            regressor.shape()
        )));
    }
    Ok(regressor.transpose() * vertices)
}

/// Row gather of the virtual-marker vertices, in index order.
pub fn extract_virtual_markers(
    posed_vertices: &DMatrix<f64>,
    indices: &[usize],
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(indices.len(), 3);
    for (r, &i) in indices.iter().enumerate() {
        if i >= posed_vertices.nrows() {
            return Err(Error::InvalidArgument(format!(
                "virtual marker index {i} out of range for {} vertices",
                posed_vertices.nrows()
            )));
        }
        for a in 0..3 {
            out[(r, a)] = posed_vertices[(i, a)];
        }
    }
    Ok(out)
}

/// Evenly spread distinct vertex indices for `count` virtual markers.
pub fn uniform_marker_indices(n_vertices: usize, count: usize) -> Vec<usize> {
    let count = count.min(n_vertices);
    (0..count).map(|i| i * n_vertices / count).collect()
}

/// Deterministic procedural body with SMPL-shaped tensors: vertices ring the
/// bones of the 24-joint tree, skin weights split between a bone's joint and
/// its parent (quantized to 1/1024 so every row sums to exactly 1), and the
/// regressor averages each bone's vertices.
pub fn synthetic_body(seed: u64, n_vertices: usize) -> BodyMesh {
    let joints: [[f64; 3]; SMPL_JOINTS] = [
        [0.0, 0.0, 0.0],
        [0.08, -0.08, 0.0],
        [-0.08, -0.08, 0.0],
        [0.0, 0.11, 0.0],
        [0.09, -0.48, 0.0],
        [-0.09, -0.48, 0.0],
        [0.0, 0.23, 0.0],
        [0.1, -0.86, 0.0],
        [-0.1, -0.86, 0.0],
        [0.0, 0.34, 0.0],
        [0.11, -0.93, 0.1],
        [-0.11, -0.93, 0.1],
        [0.0, 0.53, 0.0],
        [0.07, 0.45, 0.0],
        [-0.07, 0.45, 0.0],
        [0.0, 0.62, 0.02],
        [0.17, 0.46, 0.0],
        [-0.17, 0.46, 0.0],
        [0.44, 0.44, 0.0],
        [-0.44, 0.44, 0.0],
        [0.7, 0.43, 0.0],
        [-0.7, 0.43, 0.0],
        [0.79, 0.43, 0.0],
        [-0.79, 0.43, 0.0],
    ];
    let parents: Vec<Option<usize>> = SMPL_PARENTS
        .iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect();

    let mut rng = synth::seeded_rng(seed);
    let mut template = DMatrix::zeros(n_vertices, 3);
    let mut weights = DMatrix::zeros(n_vertices, SMPL_JOINTS);
    let mut bone_of = vec![0usize; n_vertices];
    for v in 0..n_vertices {
        let bone = v % SMPL_JOINTS;
        bone_of[v] = bone;
        let anchor = Vector3::from_row_slice(&joints[bone]);
        let base = match parents[bone] {
            Some(p) => {
                let from = Vector3::from_row_slice(&joints[p]);
                let t = synth::uniform(&mut rng, 0.0, 1.0);
                from + (anchor - from) * t
            }
            None => anchor,
        };
        let radial = Vector3::new(
            synth::uniform(&mut rng, -1.0, 1.0),
            synth::uniform(&mut rng, -1.0, 1.0),
            synth::uniform(&mut rng, -1.0, 1.0),
        )
        .normalize()
            * synth::uniform(&mut rng, 0.03, 0.08);
        let p = base + radial;
        for a in 0..3 {
            template[(v, a)] = p[a];
        }
        match parents[bone] {
            Some(p) => {
                // Dyadic split keeps row sums exactly 1.
                let q = (synth::uniform(&mut rng, 0.25, 0.75) * 1024.0).round() / 1024.0;
                weights[(v, bone)] = q;
                weights[(v, p)] = 1.0 - q;
            }
            None => weights[(v, bone)] = 1.0,
        }
    }

    let mut regressor = DMatrix::zeros(n_vertices, SMPL_JOINTS);
    for j in 0..SMPL_JOINTS {
        let owners: Vec<usize> = (0..n_vertices).filter(|&v| bone_of[v] == j).collect();
        assert!(
            !owners.is_empty(),
            "need at least {SMPL_JOINTS} vertices per synthetic body"
        );
        // Dyadic-safe uniform average would need power-of-two counts; instead
        // normalize the column to sum exactly 1 by assigning the remainder to
        // the last owner.
        let w = 1.0 / owners.len() as f64;
        let mut acc = 0.0;
        for &v in &owners[..owners.len() - 1] {
            regressor[(v, j)] = w;
            acc += w;
        }
        regressor[(*owners.last().unwrap(), j)] = 1.0 - acc;
    }

    let mut shape_dirs = Vec::with_capacity(SMPL_SHAPES);
    for _ in 0..SMPL_SHAPES {
        let mut d = DMatrix::zeros(n_vertices, 3);
        for v in 0..n_vertices {
            for a in 0..3 {
                d[(v, a)] = synth::uniform(&mut rng, -0.02, 0.02);
            }
        }
        shape_dirs.push(d);
    }

    let markers = uniform_marker_indices(n_vertices, DEFAULT_VIRTUAL_MARKERS);
    BodyMesh::new(template, weights, shape_dirs, regressor, parents, markers)
        .expect("synthetic body satisfies the mesh invariants")
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // oracles transcribe formulas with explicit indices
mod tests {
    use super::*;

    fn body() -> BodyMesh {
        synthetic_body(7, 200)
    }

    #[test]
    fn default_body_has_full_scale_shapes() {
        let m = body();
        assert_eq!(m.n_joints(), 24);
        assert_eq!(m.n_shapes(), 10);
        assert_eq!(m.virtual_marker_indices().len(), 142);
    }

    #[test]
    fn zero_beta_returns_template_exactly() {
        let m = body();
        let v = m.shape_vertices(&DVector::zeros(10)).unwrap();
        assert_eq!(v, *m.template());
    }

    #[test]
    fn basis_beta_adds_one_direction() {
        let m = body();
        let mut beta = DVector::zeros(10);
        beta[0] = 1.0;
        let v = m.shape_vertices(&beta).unwrap();
        let mut expect = m.template().clone();
        expect += &m.shape_dirs[0];
        assert_eq!(v, expect);
    }

    #[test]
    fn shape_vertices_matches_per_vertex_loop() {
        let m = body();
        let mut rng = synth::seeded_rng(12);
        let beta = DVector::from_fn(10, |_, _| synth::uniform(&mut rng, -2.0, 2.0));
        let got = m.shape_vertices(&beta).unwrap();
        for v in 0..m.n_vertices() {
            for a in 0..3 {
                let mut expect = m.template()[(v, a)];
                for b in 0..10 {
                    expect += beta[b] * m.shape_dirs[b][(v, a)];
                }
                assert!((got[(v, a)] - expect).abs() < 1e-12);
            }
        }
        assert!(m.shape_vertices(&DVector::zeros(4)).is_err());
    }

    #[test]
    fn one_hot_regressor_column_picks_a_vertex() {
        let verts = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let mut reg = DMatrix::zeros(3, 2);
        reg[(2, 0)] = 1.0;
        for v in 0..3 {
            reg[(v, 1)] = 1.0 / 3.0;
        }
        let j = regress_joints(&verts, &reg).unwrap();
        assert_eq!(j[(0, 0)], 7.0);
        assert_eq!(j[(0, 2)], 9.0);
        // Uniform column: centroid.
        assert!((j[(1, 0)] - 4.0).abs() < 1e-12);
        assert!((j[(1, 1)] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn regress_joints_matches_double_loop() {
        let m = body();
        let mut rng = synth::seeded_rng(13);
        let verts = DMatrix::from_fn(m.n_vertices(), 3, |_, _| synth::uniform(&mut rng, -1.0, 1.0));
        let got = regress_joints(&verts, m.joint_regressor()).unwrap();
        for j in 0..m.n_joints() {
            for a in 0..3 {
                let mut expect = 0.0;
                for v in 0..m.n_vertices() {
                    expect += m.joint_regressor()[(v, j)] * verts[(v, a)];
                }
                assert!((got[(j, a)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rest_pose_is_an_exact_fixpoint() {
        let m = body();
        let mut rng = synth::seeded_rng(14);
        let mut params = SmplParams::rest(10);
        params.beta = DVector::from_fn(10, |_, _| synth::uniform(&mut rng, -1.5, 1.5));
        params.translation = Vector3::new(0.4, -0.1, 2.0);
        let shaped = m.shape_vertices(&params.beta).unwrap();
        let out = m.skin(&params).unwrap();
        for v in 0..m.n_vertices() {
            for a in 0..3 {
                assert_eq!(out.vertices[(v, a)], shaped[(v, a)] + params.translation[a]);
            }
        }
    }

    #[test]
    fn global_orientation_is_a_rigid_motion_about_the_root() {
        let m = body();
        let mut params = SmplParams::rest(10);
        let aa = Vector3::new(0.3, -0.8, 0.45);
        params.theta[0] = aa;
        params.translation = Vector3::new(0.1, 0.2, -0.3);
        let out = m.skin(&params).unwrap();

        let rest_joints = regress_joints(m.template(), m.joint_regressor()).unwrap();
        let root = Vector3::new(rest_joints[(0, 0)], rest_joints[(0, 1)], rest_joints[(0, 2)]);
        let r = axis_angle_to_matrix(&aa);
        for v in 0..m.n_vertices() {
            let p = Vector3::new(m.template()[(v, 0)], m.template()[(v, 1)], m.template()[(v, 2)]);
            let expect = r * (p - root) + root + params.translation;
            for a in 0..3 {
                assert!((out.vertices[(v, a)] - expect[a]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn skinning_matches_naive_per_vertex_oracle() {
        let m = synthetic_body(21, 50);
        let mut rng = synth::seeded_rng(15);
        let params = SmplParams {
            theta: (0..24)
                .map(|_| {
                    Vector3::new(
                        synth::uniform(&mut rng, -0.9, 0.9),
                        synth::uniform(&mut rng, -0.9, 0.9),
                        synth::uniform(&mut rng, -0.9, 0.9),
                    )
                })
                .collect(),
            beta: DVector::from_fn(10, |_, _| synth::uniform(&mut rng, -1.0, 1.0)),
            translation: Vector3::new(0.05, -0.3, 0.6),
        };
        let got = m.skin(&params).unwrap();

        // Naive oracle: build per-joint world transforms with 4×4 matrices,
        // then blend transformed points (not transforms).
        let shaped = m.shape_vertices(&params.beta).unwrap();
        let rest = regress_joints(&shaped, m.joint_regressor()).unwrap();
        let mut world: Vec<nalgebra::Matrix4<f64>> = Vec::new();
        for i in 0..24 {
            let r = axis_angle_to_matrix(&params.theta[i]);
            let j = Vector3::new(rest[(i, 0)], rest[(i, 1)], rest[(i, 2)]);
            let local_t = match m.parents()[i] {
                None => j,
                Some(p) => j - Vector3::new(rest[(p, 0)], rest[(p, 1)], rest[(p, 2)]),
            };
            let mut g = nalgebra::Matrix4::identity();
            g.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
            g.fixed_view_mut::<3, 1>(0, 3).copy_from(&local_t);
            let g = match m.parents()[i] {
                None => g,
                Some(p) => world[p] * g,
            };
            world.push(g);
        }
        for v in 0..m.n_vertices() {
            let p = Vector3::new(shaped[(v, 0)], shaped[(v, 1)], shaped[(v, 2)]);
            let mut acc = Vector3::zeros();
            for i in 0..24 {
                let w = m.skin_weights()[(v, i)];
                if w == 0.0 {
                    continue;
                }
                let j = Vector3::new(rest[(i, 0)], rest[(i, 1)], rest[(i, 2)]);
                let rot = world[i].fixed_view::<3, 3>(0, 0).into_owned();
                let t = world[i].fixed_view::<3, 1>(0, 3).into_owned();
                acc += (rot * (p - j) + t) * w;
            }
            let expect = acc + params.translation;
            for a in 0..3 {
                assert!(
                    (got.vertices[(v, a)] - expect[a]).abs() < 1e-10,
                    "vertex {v} axis {a}"
                );
            }
        }
        for i in 0..24 {
            let t = world[i].fixed_view::<3, 1>(0, 3).into_owned() + params.translation;
            for a in 0..3 {
                assert!((got.joints[(i, a)] - t[a]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gather_is_exact_and_checks_bounds() {
        let verts = DMatrix::from_fn(10, 3, |r, c| (r * 3 + c) as f64);
        let got = extract_virtual_markers(&verts, &[0, 5]).unwrap();
        assert_eq!(got.nrows(), 2);
        assert_eq!(got[(1, 2)], 17.0);
        assert!(extract_virtual_markers(&verts, &[10]).is_err());
    }

    #[test]
    fn gather_commutes_with_skinning() {
        let m = body();
        let mut rng = synth::seeded_rng(30);
        let params = SmplParams {
            theta: (0..24)
                .map(|_| {
                    Vector3::new(
                        synth::uniform(&mut rng, -0.5, 0.5),
                        synth::uniform(&mut rng, -0.5, 0.5),
                        synth::uniform(&mut rng, -0.5, 0.5),
                    )
                })
                .collect(),
            beta: DVector::zeros(10),
            translation: Vector3::zeros(),
        };
        let out = m.skin(&params).unwrap();
        let markers = extract_virtual_markers(&out.vertices, m.virtual_marker_indices()).unwrap();
        assert_eq!(markers.nrows(), 142);
        for (r, &i) in m.virtual_marker_indices().iter().enumerate() {
            for a in 0..3 {
                assert_eq!(markers[(r, a)], out.vertices[(i, a)]);
            }
        }
    }

    #[test]
    fn duplicate_marker_index_rejected_at_construction() {
        let m = body();
        let bad = BodyMesh::new(
            m.template().clone(),
            m.skin_weights().clone(),
            m.shape_dirs.clone(),
            m.joint_regressor().clone(),
            m.parents().to_vec(),
            vec![3, 3],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn container_round_trip_preserves_partition_of_unity() {
        let m = synthetic_body(99, 60);
        let c = m.to_container();
        let back = BodyMesh::from_container(&ArrayContainer::from_json(&c.to_json()).unwrap()).unwrap();
        assert_eq!(back.skin_weights(), m.skin_weights());
        assert_eq!(back.template(), m.template());
        for v in 0..back.n_vertices() {
            let row: f64 = (0..back.n_joints()).map(|j| back.skin_weights()[(v, j)]).sum();
            // Rows are dyadic; the round trip must not disturb the exact sum.
            assert_eq!(row, 1.0);
        }
    }
}
