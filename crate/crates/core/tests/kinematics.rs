use std::f64::consts::PI;

use kinefit::kinematics::{
    anchor_positions, forward_kinematics, jacobian_anchors, jacobian_keypoints, JacobianTarget,
    Pose,
};
use kinefit::model::{Anchor, CoordinateKind, ScaleSet, SkeletalModel};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pose(model: &SkeletalModel, rng: &mut impl Rng) -> Pose {
    Pose::new(
        model
            .coordinates()
            .iter()
            .map(|c| match (c.kind, c.range) {
                (CoordinateKind::Translation, _) => rng.random_range(-1.0..1.0),
                (CoordinateKind::Rotation, Some((lo, hi))) => rng.random_range(lo..hi),
                (CoordinateKind::Rotation, None) => rng.random_range(-PI..PI),
            })
            .collect(),
    )
}

fn random_scales(model: &SkeletalModel, rng: &mut impl Rng) -> ScaleSet {
    ScaleSet {
        factors: (0..model.segment_count())
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(0.8..1.2)))
            .collect(),
    }
}

fn flat_keypoints(model: &SkeletalModel, pose: &Pose, scales: &ScaleSet) -> DVector<f64> {
    forward_kinematics(model, pose, scales).unwrap().flatten()
}

/// Central differences of the keypoint map, column by column.
fn numeric_jacobian(
    model: &SkeletalModel,
    pose: &Pose,
    scales: &ScaleSet,
    wrt: JacobianTarget,
) -> DMatrix<f64> {
    let h = 1e-6;
    let rows = 3 * model.keypoint_count();
    let n = match wrt {
        JacobianTarget::Coordinates => pose.len(),
        JacobianTarget::Scales => 3 * scales.len(),
    };
    let mut out = DMatrix::zeros(rows, n);
    for j in 0..n {
        let eval = |delta: f64| match wrt {
            JacobianTarget::Coordinates => {
                let mut p = pose.clone();
                p.values[j] += delta;
                flat_keypoints(model, &p, scales)
            }
            JacobianTarget::Scales => {
                let mut s = scales.clone();
                s.factors[j / 3][j % 3] += delta;
                flat_keypoints(model, pose, &s)
            }
        };
        out.set_column(j, &((eval(h) - eval(-h)) / (2.0 * h)));
    }
    out
}

#[test]
fn keypoint_jacobian_matches_finite_differences() {
    let model = SkeletalModel::generic();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pose = random_pose(&model, &mut rng);
        let scales = random_scales(&model, &mut rng);
        for wrt in [JacobianTarget::Coordinates, JacobianTarget::Scales] {
            let analytic = jacobian_keypoints(&model, &pose, &scales, wrt).unwrap();
            let numeric = numeric_jacobian(&model, &pose, &scales, wrt);
            let rel = (&analytic - &numeric).norm() / numeric.norm();
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn marker_jacobian_matches_finite_differences() {
    let model = SkeletalModel::generic();
    let anchors: Vec<Anchor> = (0..model.markers().len())
        .map(|m| model.marker_anchor(m))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let pose = random_pose(&model, &mut rng);
        let scales = random_scales(&model, &mut rng);
        let analytic = jacobian_anchors(
            &model,
            &pose,
            &scales,
            &anchors,
            JacobianTarget::Coordinates,
        )
        .unwrap();
        let flat = |p: &Pose| {
            let pts = anchor_positions(&model, p, &scales, &anchors).unwrap();
            DVector::from_iterator(3 * pts.len(), pts.iter().flat_map(|v| v.iter().copied()))
        };
        let h = 1e-6;
        let mut numeric = DMatrix::zeros(analytic.nrows(), analytic.ncols());
        for j in 0..pose.len() {
            let (mut a, mut b) = (pose.clone(), pose.clone());
            a.values[j] += h;
            b.values[j] -= h;
            numeric.set_column(j, &((flat(&a) - flat(&b)) / (2.0 * h)));
        }
        let rel = (&analytic - &numeric).norm() / numeric.norm();
        assert!(rel < 1e-5, "relative error {rel:e}");
    }
}

fn pose_strategy() -> impl Strategy<Value = (u64, [f64; 3])> {
    (any::<u64>(), prop::array::uniform3(-5.0..5.0f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Root translation moves every keypoint by the same vector.
    #[test]
    fn root_translation_is_rigid((seed, shift) in pose_strategy()) {
        let model = SkeletalModel::generic();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = random_pose(&model, &mut rng);
        let scales = random_scales(&model, &mut rng);
        let mut moved = pose.clone();
        for (v, d) in moved.values.iter_mut().zip(shift) {
            *v += d;
        }
        let a = forward_kinematics(&model, &pose, &scales).unwrap();
        let b = forward_kinematics(&model, &moved, &scales).unwrap();
        let d = Vector3::from(shift);
        for (p, q) in a.positions.iter().zip(&b.positions) {
            prop_assert!((q - p - d).norm() < 1e-9);
        }
    }

    /// The distance between a segment's joint center and its parent's joint
    /// center does not depend on the pose.
    #[test]
    fn bone_lengths_are_pose_invariant(seed in any::<u64>()) {
        let model = SkeletalModel::generic();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales = random_scales(&model, &mut rng);
        let rest = forward_kinematics(&model, &Pose::default_for(&model), &scales).unwrap();
        let posed = forward_kinematics(&model, &random_pose(&model, &mut rng), &scales).unwrap();
        for (s, seg) in model.segments().iter().enumerate() {
            let Some(p) = seg.parent else { continue };
            let len = |k: &kinefit::kinematics::KeypointSet| (k.positions[s] - k.positions[p]).norm();
            prop_assert!((len(&rest) - len(&posed)).abs() < 1e-9);
        }
    }
}
