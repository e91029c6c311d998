//! Biomechanical skeleton model: a tree of rigid bone segments with fixed
//! anatomical joint orientations, range-limited joint coordinates, per-segment
//! scales, and attached model markers.

use std::collections::BTreeSet;

use nalgebra::{DVector, Unit, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};

/// One bone segment and the joint connecting it to its parent.
///
/// `orientation` is a fixed-axis X-Y-Z Euler rotation (radians) giving the
/// anatomical orientation of this joint relative to its parent frame.
/// `rest_offset` is the translation from the parent joint to this joint,
/// expressed in the frame reached after applying `orientation`; it already
/// incorporates any scales baked in by [`SkeletonModel::apply_scales`].
#[derive(Debug, Clone)]
pub struct JointSpec {
    pub name: String,
    /// Index of the parent joint; `None` for the root. Parents always precede
    /// children in the joint list.
    pub parent: Option<usize>,
    pub orientation: Vector3<f64>,
    pub rest_offset: Vector3<f64>,
    /// Unit rotation axes in this joint's local frame, applied in order.
    pub dof_axes: Vec<Unit<Vector3<f64>>>,
    /// Per-axis motion range `[min, max]` in radians.
    pub dof_ranges: Vec<(f64, f64)>,
}

impl JointSpec {
    pub fn dof(&self) -> usize {
        self.dof_axes.len()
    }
}

/// A model marker rigidly attached to one segment.
#[derive(Debug, Clone)]
pub struct ModelMarker {
    pub name: String,
    pub segment: usize,
    /// Position in the owning segment's frame, meters. Scaled together with
    /// the segment by [`SkeletonModel::apply_scales`].
    pub local: Vector3<f64>,
}

/// A validated biomechanical skeleton: joint tree in topological order,
/// attached markers, and the cumulative per-segment scale record.
#[derive(Debug, Clone)]
pub struct SkeletonModel {
    name: String,
    joints: Vec<JointSpec>,
    markers: Vec<ModelMarker>,
    scales: Vec<Vector3<f64>>,
    dof_starts: Vec<usize>,
    total_dof: usize,
}

/// Joint coordinates (one scalar per DOF, skeleton order) plus root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub coords: DVector<f64>,
    pub root_translation: Vector3<f64>,
}

impl Pose {
    pub fn zero(dof: usize) -> Pose {
        Pose {
            coords: DVector::zeros(dof),
            root_translation: Vector3::zeros(),
        }
    }

    pub fn new(coords: DVector<f64>, root_translation: Vector3<f64>) -> Pose {
        Pose {
            coords,
            root_translation,
        }
    }
}

/// A segment that cannot be solved or used for IK because it carries fewer
/// markers than degrees of freedom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadinessIssue {
    pub segment: usize,
    pub name: String,
    pub dof: usize,
    pub markers: usize,
}

impl SkeletonModel {
    /// Builds a model from parts, validating the tree and reordering joints
    /// (and marker segment indices) so parents precede children.
    pub fn new(
        name: String,
        joints: Vec<JointSpec>,
        joint_parents: Vec<Option<String>>,
        markers: Vec<(String, String, Vector3<f64>)>,
    ) -> Result<SkeletonModel> {
        if joints.len() != joint_parents.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} joints but {} parent entries",
                joints.len(),
                joint_parents.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for j in &joints {
            if !seen.insert(j.name.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate segment name '{}'",
                    j.name
                )));
            }
        }
        let index_of = |n: &str| joints.iter().position(|j| j.name == n);

        let mut roots = 0usize;
        let mut parent_idx: Vec<Option<usize>> = Vec::with_capacity(joints.len());
        for (j, parent) in joints.iter().zip(&joint_parents) {
            match parent {
                None => {
                    roots += 1;
                    parent_idx.push(None);
                }
                Some(p) => {
                    if p == &j.name {
                        return Err(Error::Validation(format!(
                            "cycle: segment '{}' is its own parent",
                            j.name
                        )));
                    }
                    match index_of(p) {
                        Some(pi) => parent_idx.push(Some(pi)),
                        None => {
                            return Err(Error::Validation(format!(
                                "segment '{}' references unknown parent '{}'",
                                j.name, p
                            )))
                        }
                    }
                }
            }
        }
        if roots != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one root segment, found {roots}"
            )));
        }

        // Kahn's algorithm, stable in file order; leftovers mean a cycle.
        let n = joints.len();
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        loop {
            let before = order.len();
            for i in 0..n {
                if placed[i] {
                    continue;
                }
                let ready = match parent_idx[i] {
                    None => true,
                    Some(p) => placed[p],
                };
                if ready {
                    placed[i] = true;
                    order.push(i);
                }
            }
            if order.len() == n {
                break;
            }
            if order.len() == before {
                let stuck: Vec<&str> = (0..n)
                    .filter(|&i| !placed[i])
                    .map(|i| joints[i].name.as_str())
                    .collect();
                return Err(Error::Validation(format!(
                    "cycle among segments: {}",
                    stuck.join(", ")
                )));
            }
        }
        let mut new_index = vec![0usize; n];
        for (new_i, &old_i) in order.iter().enumerate() {
            new_index[old_i] = new_i;
        }

        let mut sorted: Vec<JointSpec> = order
            .iter()
            .map(|&old| {
                let mut j = joints[old].clone();
                j.parent = parent_idx[old].map(|p| new_index[p]);
                j
            })
            .collect();

        for j in &mut sorted {
            validate_joint(j)?;
        }
        if let Some(root) = sorted.first() {
            if root.rest_offset.norm() != 0.0 {
                return Err(Error::Validation(format!(
                    "root segment '{}' must have zero offset (root placement comes from the pose translation)",
                    root.name
                )));
            }
        }

        let mut marker_names = BTreeSet::new();
        let mut resolved = Vec::with_capacity(markers.len());
        for (mname, seg, local) in markers {
            if !marker_names.insert(mname.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate marker name '{mname}'"
                )));
            }
            let si = sorted
                .iter()
                .position(|j| j.name == seg)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "marker '{mname}' references unknown segment '{seg}'"
                    ))
                })?;
            resolved.push(ModelMarker {
                name: mname,
                segment: si,
                local,
            });
        }

        let mut dof_starts = Vec::with_capacity(n);
        let mut total = 0usize;
        for j in &sorted {
            dof_starts.push(total);
            total += j.dof();
        }

        Ok(SkeletonModel {
            name,
            scales: vec![Vector3::repeat(1.0); n],
            joints: sorted,
            markers: resolved,
            dof_starts,
            total_dof: total,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn markers(&self) -> &[ModelMarker] {
        &self.markers
    }

    /// Cumulative scales applied so far (all ones for a freshly loaded model).
    pub fn scales(&self) -> &[Vector3<f64>] {
        &self.scales
    }

    pub fn total_dof(&self) -> usize {
        self.total_dof
    }

    /// Index of joint `i`'s first coordinate in the flat pose vector.
    pub fn dof_start(&self, joint: usize) -> usize {
        self.dof_starts[joint]
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.name == name)
    }

    pub fn markers_on(&self, segment: usize) -> impl Iterator<Item = (usize, &ModelMarker)> {
        self.markers
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.segment == segment)
    }

    /// Returns a copy with segment geometry multiplied componentwise by the
    /// given per-segment scales: a joint's offset is owned by its parent's
    /// segment, a marker by the segment it sits on. The `scales` record
    /// accumulates multiplicatively.
    pub fn apply_scales(&self, scales: &[Vector3<f64>]) -> Result<SkeletonModel> {
        if scales.len() != self.joints.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} scale entries for {} segments",
                scales.len(),
                self.joints.len()
            )));
        }
        for (i, s) in scales.iter().enumerate() {
            if !(s.x > 0.0 && s.y > 0.0 && s.z > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "non-positive scale component for segment '{}': [{}, {}, {}]",
                    self.joints[i].name, s.x, s.y, s.z
                )));
            }
        }
        let mut out = self.clone();
        for (i, joint) in out.joints.iter_mut().enumerate() {
            if let Some(p) = joint.parent {
                joint.rest_offset.component_mul_assign(&scales[p]);
            }
            out.scales[i].component_mul_assign(&scales[i]);
        }
        for m in &mut out.markers {
            m.local.component_mul_assign(&scales[m.segment]);
        }
        Ok(out)
    }

    /// Projects every coordinate into its motion range; translation unchanged.
    pub fn clamp_pose(&self, pose: &Pose) -> Result<Pose> {
        if pose.coords.len() != self.total_dof {
            return Err(Error::DimensionMismatch(format!(
                "pose has {} coordinates, skeleton has {} DOF",
                pose.coords.len(),
                self.total_dof
            )));
        }
        let mut out = pose.clone();
        for (i, joint) in self.joints.iter().enumerate() {
            let start = self.dof_starts[i];
            for (a, &(lo, hi)) in joint.dof_ranges.iter().enumerate() {
                out.coords[start + a] = out.coords[start + a].clamp(lo, hi);
            }
        }
        Ok(out)
    }

    /// Range `[min, max]` of the flat coordinate at `index`.
    pub fn coord_range(&self, index: usize) -> (f64, f64) {
        for (i, joint) in self.joints.iter().enumerate() {
            let start = self.dof_starts[i];
            if index < start + joint.dof() {
                return joint.dof_ranges[index - start];
            }
        }
        panic!("coordinate index {index} out of range");
    }

    /// Marker-sufficiency check: every segment must carry at least as many
    /// markers as it has degrees of freedom before it can anchor an IK solve.
    pub fn ik_readiness(&self) -> Vec<ReadinessIssue> {
        let mut counts = vec![0usize; self.joints.len()];
        for m in &self.markers {
            counts[m.segment] += 1;
        }
        self.joints
            .iter()
            .enumerate()
            .filter(|(i, j)| counts[*i] < j.dof())
            .map(|(i, j)| ReadinessIssue {
                segment: i,
                name: j.name.clone(),
                dof: j.dof(),
                markers: counts[i],
            })
            .collect()
    }
}

fn validate_joint(j: &JointSpec) -> Result<()> {
    if j.dof_axes.len() != j.dof_ranges.len() {
        return Err(Error::Validation(format!(
            "segment '{}': {} axes but {} ranges",
            j.name,
            j.dof_axes.len(),
            j.dof_ranges.len()
        )));
    }
    if j.dof_axes.len() > 3 {
        return Err(Error::Validation(format!(
            "segment '{}': more than 3 DOF axes",
            j.name
        )));
    }
    for &(lo, hi) in &j.dof_ranges {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::Validation(format!(
                "segment '{}': empty DOF range [{lo}, {hi}]",
                j.name
            )));
        }
    }
    // Axes must be linearly independent: Gram determinant bounded away from 0.
    let axes = &j.dof_axes;
    let independent = match axes.len() {
        0 | 1 => true,
        2 => axes[0].cross(&axes[1]).norm() > 1e-9,
        _ => {
            let m = nalgebra::Matrix3::from_columns(&[
                axes[0].into_inner(),
                axes[1].into_inner(),
                axes[2].into_inner(),
            ]);
            m.determinant().abs() > 1e-9
        }
    };
    if !independent {
        return Err(Error::Validation(format!(
            "segment '{}': DOF axes are linearly dependent",
            j.name
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Skeleton-definition document

#[derive(Deserialize)]
struct SkeletonDoc {
    name: String,
    segments: Vec<SegmentDoc>,
}

#[derive(Deserialize)]
struct SegmentDoc {
    name: String,
    #[serde(default)]
    parent: Option<String>,
    orientation_deg: [f64; 3],
    offset_m: [f64; 3],
    #[serde(default)]
    dof: Vec<DofDoc>,
    #[serde(default)]
    markers: Vec<MarkerDoc>,
}

#[derive(Deserialize)]
struct DofDoc {
    axis: [f64; 3],
    range_deg: [f64; 2],
}

#[derive(Deserialize)]
struct MarkerDoc {
    name: String,
    local_m: [f64; 3],
}

/// Parses and validates a skeleton-definition document (TOML, angles in
/// degrees). Joints come out topologically ordered.
pub fn load_skeleton(definition_text: &str) -> Result<SkeletonModel> {
    let doc: SkeletonDoc = toml::from_str(definition_text).map_err(|e| {
        let line = e
            .span()
            .map(|s| definition_text[..s.start.min(definition_text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        Error::Parse {
            line,
            msg: e.message().to_string(),
        }
    })?;

    let mut joints = Vec::with_capacity(doc.segments.len());
    let mut parents = Vec::with_capacity(doc.segments.len());
    let mut markers = Vec::new();
    for seg in doc.segments {
        let mut axes = Vec::with_capacity(seg.dof.len());
        let mut ranges = Vec::with_capacity(seg.dof.len());
        for d in &seg.dof {
            let v = Vector3::new(d.axis[0], d.axis[1], d.axis[2]);
            if v.norm() < 1e-12 {
                return Err(Error::Validation(format!(
                    "segment '{}': zero-length DOF axis",
                    seg.name
                )));
            }
            axes.push(Unit::new_normalize(v));
            ranges.push((d.range_deg[0].to_radians(), d.range_deg[1].to_radians()));
        }
        joints.push(JointSpec {
            name: seg.name.clone(),
            parent: None, // resolved by SkeletonModel::new
            orientation: Vector3::new(
                seg.orientation_deg[0].to_radians(),
                seg.orientation_deg[1].to_radians(),
                seg.orientation_deg[2].to_radians(),
            ),
            rest_offset: Vector3::new(seg.offset_m[0], seg.offset_m[1], seg.offset_m[2]),
            dof_axes: axes,
            dof_ranges: ranges,
        });
        parents.push(seg.parent.filter(|p| !p.is_empty()));
        for m in seg.markers {
            markers.push((
                m.name,
                seg.name.clone(),
                Vector3::new(m.local_m[0], m.local_m[1], m.local_m[2]),
            ));
        }
    }
    SkeletonModel::new(doc.name, joints, parents, markers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    fn chain() -> SkeletonModel {
        load_skeleton(assets::CHAIN_3).unwrap()
    }

    #[test]
    fn chain_document_loads_with_expected_dof() {
        let m = chain();
        assert_eq!(m.joints().len(), 3);
        assert_eq!(
            m.joints().iter().map(JointSpec::dof).collect::<Vec<_>>(),
            vec![3, 1, 1]
        );
        assert_eq!(m.total_dof(), 5);
        assert!(m.ik_readiness().is_empty());
    }

    #[test]
    fn full_body_loads_and_dof_matches_independent_document_pass() {
        let m = load_skeleton(assets::FULL_BODY_24).unwrap();
        assert_eq!(m.joints().len(), 24);

        // Independent count: walk the raw document and sum dof array lengths.
        let raw: toml::Value = toml::from_str(assets::FULL_BODY_24).unwrap();
        let independent: usize = raw["segments"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s.get("dof").and_then(|d| d.as_array()).map_or(0, |a| a.len()))
            .sum();
        assert_eq!(m.total_dof(), independent);
        assert_eq!(m.total_dof(), 52);
        assert!(m.ik_readiness().is_empty());
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let doc = r#"
name = "bad"
[[segments]]
name = "a"
parent = "a"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
"#;
        let err = load_skeleton(doc).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn two_segment_cycle_detected() {
        let doc = r#"
name = "bad"
[[segments]]
name = "root"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
[[segments]]
name = "a"
parent = "b"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.1, 0.0, 0.0]
[[segments]]
name = "b"
parent = "a"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.1, 0.0, 0.0]
"#;
        let err = load_skeleton(doc).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn unknown_parent_and_duplicates_rejected() {
        let doc = r#"
name = "bad"
[[segments]]
name = "a"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
[[segments]]
name = "b"
parent = "nope"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.1, 0.0, 0.0]
"#;
        assert!(load_skeleton(doc).unwrap_err().to_string().contains("unknown parent"));

        let doc = r#"
name = "bad"
[[segments]]
name = "a"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
[[segments]]
name = "a"
parent = "a"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.1, 0.0, 0.0]
"#;
        assert!(load_skeleton(doc).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn empty_range_rejected() {
        let doc = r#"
name = "bad"
[[segments]]
name = "a"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
dof = [{ axis = [0.0, 0.0, 1.0], range_deg = [30.0, 30.0] }]
"#;
        assert!(load_skeleton(doc).unwrap_err().to_string().contains("empty DOF range"));
    }

    #[test]
    fn malformed_document_reports_line() {
        let doc = "name = \"x\"\n[[segments]]\nname = 7\n";
        match load_skeleton(doc).unwrap_err() {
            Error::Parse { line, .. } => assert!(line >= 2, "line {line}"),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn topological_order_holds_even_for_shuffled_input() {
        let doc = r#"
name = "shuffled"
[[segments]]
name = "tip"
parent = "mid"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.2, 0.0]
[[segments]]
name = "mid"
parent = "base"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.3, 0.0]
dof = [{ axis = [0.0, 0.0, 1.0], range_deg = [-90.0, 90.0] }]
[[segments]]
name = "base"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
"#;
        let m = load_skeleton(doc).unwrap();
        for (i, j) in m.joints().iter().enumerate() {
            if let Some(p) = j.parent {
                assert!(p < i, "parent of '{}' not before it", j.name);
            }
        }
        assert_eq!(m.joints()[0].name, "base");
    }

    #[test]
    fn apply_scales_identity_and_errors() {
        let m = chain();
        let id = vec![Vector3::repeat(1.0); 3];
        let out = m.apply_scales(&id).unwrap();
        for (a, b) in m.joints().iter().zip(out.joints()) {
            assert_eq!(a.rest_offset, b.rest_offset);
        }
        for (a, b) in m.markers().iter().zip(out.markers()) {
            assert_eq!(a.local, b.local);
        }

        assert!(m.apply_scales(&id[..2]).is_err());
        let mut bad = id.clone();
        bad[1].y = 0.0;
        assert!(m.apply_scales(&bad).is_err());
    }

    #[test]
    fn anisotropic_scale_moves_child_offset_only() {
        let m = chain();
        // Scale the base segment; link2's offset is owned by base.
        let mut scales = vec![Vector3::repeat(1.0); 3];
        scales[0] = Vector3::new(1.0, 2.0, 1.0);
        let out = m.apply_scales(&scales).unwrap();

        // Per-field recomputation oracle.
        for (i, (orig, scaled)) in m.joints().iter().zip(out.joints()).enumerate() {
            let expect = match orig.parent {
                Some(p) => orig.rest_offset.component_mul(&scales[p]),
                None => orig.rest_offset,
            };
            assert_eq!(scaled.rest_offset, expect, "joint {i}");
        }
        for (orig, scaled) in m.markers().iter().zip(out.markers()) {
            assert_eq!(scaled.local, orig.local.component_mul(&scales[orig.segment]));
        }
        let link2 = m.joint_index("link2").unwrap();
        assert_eq!(out.joints()[link2].rest_offset.y, 2.0 * m.joints()[link2].rest_offset.y);
        assert_eq!(out.joints()[link2].rest_offset.x, m.joints()[link2].rest_offset.x);
    }

    fn ulp_distance(a: f64, b: f64) -> u64 {
        fn ordered(x: f64) -> i64 {
            let bits = x.to_bits() as i64;
            if bits < 0 {
                i64::MIN.wrapping_sub(bits)
            } else {
                bits
            }
        }
        ordered(a).abs_diff(ordered(b))
    }

    #[test]
    fn apply_scales_is_multiplicative() {
        let m = load_skeleton(assets::FULL_BODY_24).unwrap();
        let mut rng = crate::synth::seeded_rng(11);
        for _ in 0..20 {
            let a: Vec<Vector3<f64>> = (0..24).map(|_| crate::synth::random_scale(&mut rng)).collect();
            let b: Vec<Vector3<f64>> = (0..24).map(|_| crate::synth::random_scale(&mut rng)).collect();
            let ab: Vec<Vector3<f64>> = a.iter().zip(&b).map(|(x, y)| x.component_mul(y)).collect();

            let two_step = m.apply_scales(&a).unwrap().apply_scales(&b).unwrap();
            let one_step = m.apply_scales(&ab).unwrap();
            for (x, y) in two_step.joints().iter().zip(one_step.joints()) {
                for c in 0..3 {
                    assert!(
                        ulp_distance(x.rest_offset[c], y.rest_offset[c]) <= 4,
                        "offset component differs by more than 4 ulp"
                    );
                }
            }
            for (x, y) in two_step.markers().iter().zip(one_step.markers()) {
                for c in 0..3 {
                    assert!(ulp_distance(x.local[c], y.local[c]) <= 4);
                }
            }
        }
    }

    #[test]
    fn clamp_pose_matches_elementwise_oracle_and_is_idempotent() {
        let m = load_skeleton(assets::FULL_BODY_24).unwrap();
        let mut rng = crate::synth::seeded_rng(7);
        for _ in 0..50 {
            let coords = DVector::from_fn(m.total_dof(), |i, _| {
                let (lo, hi) = m.coord_range(i);
                crate::synth::uniform(&mut rng, lo - 1.0, hi + 1.0)
            });
            let pose = Pose::new(coords, Vector3::new(0.1, -0.2, 0.3));
            let clamped = m.clamp_pose(&pose).unwrap();
            for i in 0..m.total_dof() {
                let (lo, hi) = m.coord_range(i);
                let expect = pose.coords[i].max(lo).min(hi);
                assert_eq!(clamped.coords[i], expect);
            }
            assert_eq!(clamped.root_translation, pose.root_translation);
            let twice = m.clamp_pose(&clamped).unwrap();
            assert_eq!(twice, clamped);
        }

        let inside = Pose::zero(m.total_dof());
        assert_eq!(m.clamp_pose(&inside).unwrap(), inside);
        assert!(m.clamp_pose(&Pose::zero(3)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn clamp_is_idempotent_and_in_range(values in proptest::collection::vec(-1e6f64..1e6, 5)) {
            let m = load_skeleton(crate::assets::CHAIN_3).unwrap();
            let pose = Pose::new(DVector::from_vec(values), Vector3::zeros());
            let once = m.clamp_pose(&pose).unwrap();
            for i in 0..5 {
                let (lo, hi) = m.coord_range(i);
                proptest::prop_assert!(once.coords[i] >= lo && once.coords[i] <= hi);
            }
            let twice = m.clamp_pose(&once).unwrap();
            proptest::prop_assert_eq!(&twice, &once);
        }
    }

    #[test]
    fn readiness_flags_underserved_segments() {
        let doc = r#"
name = "poor"
[[segments]]
name = "base"
orientation_deg = [0.0, 0.0, 0.0]
offset_m = [0.0, 0.0, 0.0]
dof = [
  { axis = [1.0, 0.0, 0.0], range_deg = [-90.0, 90.0] },
  { axis = [0.0, 1.0, 0.0], range_deg = [-90.0, 90.0] },
]
markers = [{ name = "only", local_m = [0.1, 0.0, 0.0] }]
"#;
        let m = load_skeleton(doc).unwrap();
        let issues = m.ik_readiness();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].dof, 2);
        assert_eq!(issues[0].markers, 1);
    }
}
