//! Forward kinematics over the segment tree and its analytic Jacobians.
//!
//! Each segment frame is its parent frame translated to the (parent-scaled)
//! joint offset and then rotated by the segment's rotational coordinates,
//! applied as intrinsic rotations in coordinate order. The root is
//! additionally translated by its translational coordinates in the ground
//! frame. A point attached to segment `A` at local offset `m` sits at
//! `o_A + R_A (s_A ∘ m)`.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::model::{Anchor, CoordinateKind, ScaleSet, SkeletalModel};

/// Coordinate values in model order (radians / meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub values: DVector<f64>,
}

impl Pose {
    pub fn new(values: Vec<f64>) -> Self {
        Pose {
            values: DVector::from_vec(values),
        }
    }

    pub fn default_for(model: &SkeletalModel) -> Self {
        Pose::new(model.default_values())
    }

    pub fn zeros(len: usize) -> Self {
        Pose {
            values: DVector::zeros(len),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, model: &SkeletalModel) -> Result<()> {
        if self.values.len() != model.coordinate_count() {
            return Err(Error::DimensionMismatch {
                what: "pose",
                expected: model.coordinate_count(),
                actual: self.values.len(),
            });
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "pose contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// A sequence of poses sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<Pose>,
    pub frame_rate: f64,
}

impl MotionSequence {
    /// Default clip length used for loss windows.
    pub const DEFAULT_WINDOW: usize = 64;

    pub fn new(frames: Vec<Pose>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        if let Some(first) = frames.first() {
            let n = first.len();
            if let Some(bad) = frames.iter().find(|f| f.len() != n) {
                return Err(Error::DimensionMismatch {
                    what: "motion frame",
                    expected: n,
                    actual: bad.len(),
                });
            }
        }
        Ok(MotionSequence { frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn coordinate_count(&self) -> usize {
        self.frames.first().map_or(0, Pose::len)
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn channel(&self, coord: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.values[coord]).collect()
    }

    /// `T × n` matrix of the selected coordinates.
    pub fn select(&self, coords: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), coords.len(), |t, j| {
            self.frames[t].values[coords[j]]
        })
    }

    pub fn check(&self, model: &SkeletalModel) -> Result<()> {
        self.frames
            .iter()
            .enumerate()
            .try_for_each(|(t, f)| f.check(model).map_err(|e| e.at_frame(t)))
    }
}

/// World positions of the model keypoints (joint centers, then mass centers).
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub positions: Vec<Vector3<f64>>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.positions.len(),
            self.positions.iter().flat_map(|p| p.iter().copied()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianTarget {
    /// One column per model coordinate.
    Coordinates,
    /// Three columns per segment, `x, y, z` scale factors.
    Scales,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SegmentFrame {
    pub origin: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

/// World frames of every segment for one pose, plus the world-frame axis of
/// every coordinate (needed for the Jacobians).
#[derive(Debug, Clone)]
pub(crate) struct PoseFrames {
    pub frames: Vec<SegmentFrame>,
    pub coord_axes: Vec<Vector3<f64>>,
}

pub(crate) fn check_inputs(model: &SkeletalModel, pose: &Pose, scales: &ScaleSet) -> Result<()> {
    pose.check(model)?;
    scales.check_len(model.segment_count())
}

pub(crate) fn pose_frames(model: &SkeletalModel, values: &[f64], scales: &ScaleSet) -> PoseFrames {
    let segs = model.segments();
    let coords = model.coordinates();
    let mut frames = vec![
        SegmentFrame {
            origin: Vector3::zeros(),
            rotation: Matrix3::identity(),
        };
        segs.len()
    ];
    let mut coord_axes = vec![Vector3::zeros(); coords.len()];

    for &s in model.topological_order() {
        let seg = &segs[s];
        let (mut origin, parent_rot) = match seg.parent {
            Some(p) => {
                let pf = &frames[p];
                (
                    pf.origin
                        + pf.rotation
                            * scales.factors[p].component_mul(&seg.joint_offset_in_parent),
                    pf.rotation,
                )
            }
            None => (seg.joint_offset_in_parent, Matrix3::identity()),
        };
        let mut rotation = parent_rot;
        let (mut r, mut t) = (0, 0);
        for &c in &seg.joint_coordinates {
            match coords[c].kind {
                CoordinateKind::Translation => {
                    let axis = parent_rot * seg.translation_axes[t];
                    origin += axis * values[c];
                    coord_axes[c] = axis;
                    t += 1;
                }
                CoordinateKind::Rotation => {
                    let local = seg.rotation_axes[r];
                    coord_axes[c] = rotation * local;
                    let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(local), values[c]);
                    rotation *= rot.matrix();
                    r += 1;
                }
            }
        }
        frames[s] = SegmentFrame { origin, rotation };
    }
    PoseFrames { frames, coord_axes }
}

impl PoseFrames {
    pub fn point(&self, anchor: &Anchor, scales: &ScaleSet) -> Vector3<f64> {
        let f = &self.frames[anchor.segment];
        f.origin + f.rotation * scales.factors[anchor.segment].component_mul(&anchor.offset)
    }

    /// Writes the `3 × n` Jacobian block of `anchor` into rows `row..row+3`.
    pub fn jacobian_block(
        &self,
        model: &SkeletalModel,
        anchor: &Anchor,
        scales: &ScaleSet,
        wrt: JacobianTarget,
        out: &mut DMatrix<f64>,
        row: usize,
    ) {
        let a = anchor.segment;
        match wrt {
            JacobianTarget::Coordinates => {
                let p = self.point(anchor, scales);
                for c in 0..model.coordinate_count() {
                    let Some(slot) = model.coordinate_slot(c) else {
                        continue;
                    };
                    if !model.is_ancestor_or_self(slot.segment, a) {
                        continue;
                    }
                    let w = self.coord_axes[c];
                    let d = match model.coordinates()[c].kind {
                        CoordinateKind::Rotation => {
                            w.cross(&(p - self.frames[slot.segment].origin))
                        }
                        CoordinateKind::Translation => w,
                    };
                    out.fixed_view_mut::<3, 1>(row, c).copy_from(&d);
                }
            }
            JacobianTarget::Scales => {
                let segs = model.segments();
                for s in 0..segs.len() {
                    let Some(child) = model.path_child(s, a) else {
                        continue;
                    };
                    let local = if s == a {
                        anchor.offset
                    } else {
                        segs[child].joint_offset_in_parent
                    };
                    let rot = &self.frames[s].rotation;
                    for ax in 0..3 {
                        let d = rot.column(ax) * local[ax];
                        out.fixed_view_mut::<3, 1>(row, 3 * s + ax).copy_from(&d);
                    }
                }
            }
        }
    }
}

fn anchors_for_keypoints(model: &SkeletalModel) -> Vec<Anchor> {
    (0..model.keypoint_count())
        .map(|k| model.keypoint_anchor(k))
        .collect()
}

/// World positions of an arbitrary list of anchors.
pub fn anchor_positions(
    model: &SkeletalModel,
    pose: &Pose,
    scales: &ScaleSet,
    anchors: &[Anchor],
) -> Result<Vec<Vector3<f64>>> {
    check_inputs(model, pose, scales)?;
    let frames = pose_frames(model, pose.values.as_slice(), scales);
    Ok(anchors.iter().map(|a| frames.point(a, scales)).collect())
}

/// Keypoint world positions for a pose and scale set.
pub fn forward_kinematics(
    model: &SkeletalModel,
    pose: &Pose,
    scales: &ScaleSet,
) -> Result<KeypointSet> {
    let anchors = anchors_for_keypoints(model);
    Ok(KeypointSet {
        positions: anchor_positions(model, pose, scales, &anchors)?,
    })
}

/// World positions of all model markers, labeled.
pub fn marker_positions(
    model: &SkeletalModel,
    pose: &Pose,
    scales: &ScaleSet,
) -> Result<Vec<(String, Vector3<f64>)>> {
    let anchors: Vec<Anchor> = (0..model.markers().len())
        .map(|m| model.marker_anchor(m))
        .collect();
    let pos = anchor_positions(model, pose, scales, &anchors)?;
    Ok(model
        .markers()
        .iter()
        .zip(pos)
        .map(|(m, p)| (m.name.clone(), p))
        .collect())
}

/// Jacobian of the stacked anchor positions, `3·|anchors| × n`.
pub fn jacobian_anchors(
    model: &SkeletalModel,
    pose: &Pose,
    scales: &ScaleSet,
    anchors: &[Anchor],
    wrt: JacobianTarget,
) -> Result<DMatrix<f64>> {
    check_inputs(model, pose, scales)?;
    let frames = pose_frames(model, pose.values.as_slice(), scales);
    let cols = match wrt {
        JacobianTarget::Coordinates => model.coordinate_count(),
        JacobianTarget::Scales => 3 * model.segment_count(),
    };
    let mut jac = DMatrix::zeros(3 * anchors.len(), cols);
    for (i, a) in anchors.iter().enumerate() {
        frames.jacobian_block(model, a, scales, wrt, &mut jac, 3 * i);
    }
    Ok(jac)
}

/// Jacobian of the flattened keypoint positions, `3K × n`.
pub fn jacobian_keypoints(
    model: &SkeletalModel,
    pose: &Pose,
    scales: &ScaleSet,
    wrt: JacobianTarget,
) -> Result<DMatrix<f64>> {
    jacobian_anchors(model, pose, scales, &anchors_for_keypoints(model), wrt)
}

/// Expresses every keypoint relative to the root joint center.
pub fn root_relative(keypoints: &KeypointSet, model: &SkeletalModel) -> KeypointSet {
    let root = keypoints.positions[model.root_keypoint()];
    KeypointSet {
        positions: keypoints.positions.iter().map(|p| p - root).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_pose(model: &SkeletalModel) -> Pose {
        Pose::zeros(model.coordinate_count())
    }

    /// Rest configuration by summing unscaled offsets down the tree.
    fn rest_joint_centers(model: &SkeletalModel) -> Vec<Vector3<f64>> {
        let segs = model.segments();
        let mut out = vec![Vector3::zeros(); segs.len()];
        for &s in model.topological_order() {
            out[s] = match segs[s].parent {
                Some(p) => out[p] + segs[s].joint_offset_in_parent,
                None => segs[s].joint_offset_in_parent,
            };
        }
        out
    }

    #[test]
    fn zero_pose_gives_rest_configuration() {
        let model = SkeletalModel::generic();
        let kp = forward_kinematics(&model, &zero_pose(&model), &ScaleSet::unit(22)).unwrap();
        let rest = rest_joint_centers(&model);
        for (s, seg) in model.segments().iter().enumerate() {
            assert_relative_eq!(kp.positions[s], rest[s], epsilon = 1e-15);
            assert_relative_eq!(
                kp.positions[22 + s],
                rest[s] + seg.mass_center_offset,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn root_translation_shifts_every_keypoint() {
        let model = SkeletalModel::generic();
        let mut pose = Pose::default_for(&model);
        pose.values[20] = 0.3; // something non-trivial elsewhere
        let base = forward_kinematics(&model, &pose, &ScaleSet::unit(22)).unwrap();
        pose.values[0] += 0.5;
        let moved = forward_kinematics(&model, &pose, &ScaleSet::unit(22)).unwrap();
        for (a, b) in base.positions.iter().zip(&moved.positions) {
            assert_relative_eq!(b - a, Vector3::new(0.5, 0.0, 0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_offset_marker_sits_on_joint_center() {
        let mut doc = SkeletalModel::generic().to_document();
        doc.markers.push(crate::model::MarkerDoc {
            name: "KNEE_CENTER".into(),
            segment: "tibia_r".into(),
            offset: [0.0; 3],
        });
        let model = SkeletalModel::from_document(&doc).unwrap();
        let mut pose = Pose::default_for(&model);
        pose.values[model.coordinate_index("hip_flexion_r").unwrap()] = 0.4;
        let scales = ScaleSet::unit(22);
        let kp = forward_kinematics(&model, &pose, &scales).unwrap();
        let markers = marker_positions(&model, &pose, &scales).unwrap();
        let m = markers.iter().find(|(n, _)| n == "KNEE_CENTER").unwrap().1;
        let tibia = model.segment_index("tibia_r").unwrap();
        assert_relative_eq!(m, kp.positions[tibia], epsilon = 1e-15);
    }

    #[test]
    fn root_translation_column_is_unit_x() {
        let model = SkeletalModel::generic();
        let jac = jacobian_keypoints(
            &model,
            &Pose::default_for(&model),
            &ScaleSet::unit(22),
            JacobianTarget::Coordinates,
        )
        .unwrap();
        for k in 0..44 {
            assert_eq!(jac[(3 * k, 0)], 1.0);
            assert_eq!(jac[(3 * k + 1, 0)], 0.0);
            assert_eq!(jac[(3 * k + 2, 0)], 0.0);
        }
    }

    #[test]
    fn off_chain_coordinates_have_zero_blocks() {
        let model = SkeletalModel::generic();
        let knee_l = model.coordinate_index("knee_angle_l").unwrap();
        let hand_r = model.segment_index("hand_r").unwrap();
        let jac = jacobian_keypoints(
            &model,
            &Pose::default_for(&model),
            &ScaleSet::unit(22),
            JacobianTarget::Coordinates,
        )
        .unwrap();
        for k in [hand_r, 22 + hand_r] {
            for r in 0..3 {
                assert_eq!(jac[(3 * k + r, knee_l)], 0.0);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let model = SkeletalModel::generic();
        assert!(matches!(
            forward_kinematics(&model, &Pose::zeros(3), &ScaleSet::unit(22)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(forward_kinematics(&model, &zero_pose(&model), &ScaleSet::unit(21)).is_err());
    }

    #[test]
    fn root_relative_is_idempotent_and_zeroes_root() {
        let model = SkeletalModel::generic();
        let mut pose = Pose::default_for(&model);
        pose.values[4] = 0.2;
        let kp = forward_kinematics(&model, &pose, &ScaleSet::unit(22)).unwrap();
        let once = root_relative(&kp, &model);
        assert_eq!(once.positions[0], Vector3::zeros());
        assert_eq!(root_relative(&once, &model), once);
    }

    #[test]
    fn motion_sequence_rejects_ragged_frames() {
        let err = MotionSequence::new(vec![Pose::zeros(3), Pose::zeros(4)], 60.0);
        assert!(err.is_err());
        assert!(MotionSequence::new(vec![], 0.0).is_err());
    }
}
