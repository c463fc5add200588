use nalgebra::{DMatrix, DVector, Vector3};

use super::lm::{minimize, LeastSquares};
use super::{IKSettings, LabeledPoint, LimitMode};
use crate::error::{Error, Result};
use crate::kinematics::{check_inputs, pose_frames, JacobianTarget, MotionSequence, Pose};
use crate::model::{Anchor, ScaleSet, SkeletalModel};
use crate::tracks::Tracks3d;

/// Result of a single-frame IK solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub pose: Pose,
    /// Root-mean-square target distance, meters.
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Result of sequential IK over a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSolution {
    pub motion: MotionSequence,
    pub frame_rms: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Frames whose solve hit the iteration limit or stalled.
    pub unconverged: Vec<usize>,
}

/// Targets resolved to model anchors.
pub(crate) struct Targets {
    pub anchors: Vec<Anchor>,
    pub points: Vec<Vector3<f64>>,
}

impl Targets {
    pub fn resolve(model: &SkeletalModel, labeled: &[LabeledPoint]) -> Result<Self> {
        if labeled.is_empty() {
            return Err(Error::MissingData("no IK targets".into()));
        }
        let anchors = resolve_labels(model, labeled.iter().map(|(l, _)| l.as_str()))?;
        Ok(Targets {
            anchors,
            points: labeled.iter().map(|(_, p)| *p).collect(),
        })
    }
}

pub(crate) fn resolve_labels<'a>(
    model: &SkeletalModel,
    labels: impl Iterator<Item = &'a str>,
) -> Result<Vec<Anchor>> {
    labels
        .map(|l| {
            model
                .anchor_for_label(l)
                .ok_or_else(|| Error::UnknownLabel(l.to_owned()))
        })
        .collect()
}

/// Range handling for the constrained coordinates, shared by IK and scaling.
/// `offset` is the position of coordinate 0 in the parameter vector.
pub(crate) struct Limits {
    ranges: Vec<(usize, f64, f64)>,
    mode: LimitMode,
    sqrt_w: f64,
    offset: usize,
}

impl Limits {
    pub fn new(model: &SkeletalModel, settings: &IKSettings, offset: usize) -> Self {
        let ranges = model
            .coordinates()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.range.map(|(lo, hi)| (i, lo, hi)))
            .collect();
        Limits {
            ranges,
            mode: settings.limit_mode,
            sqrt_w: settings.penalty_weight.sqrt(),
            offset,
        }
    }

    pub fn penalty_rows(&self) -> usize {
        match self.mode {
            LimitMode::Project => 0,
            LimitMode::Penalty => self.ranges.len(),
        }
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        if self.mode == LimitMode::Project {
            for &(c, lo, hi) in &self.ranges {
                let v = &mut x[self.offset + c];
                *v = v.clamp(lo, hi);
            }
        }
    }

    pub fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>, row: usize) {
        if self.mode == LimitMode::Penalty {
            for (i, &(c, lo, hi)) in self.ranges.iter().enumerate() {
                let v = x[self.offset + c];
                out[row + i] = self.sqrt_w * (v - v.clamp(lo, hi));
            }
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>, row: usize) {
        if self.mode == LimitMode::Penalty {
            for (i, &(c, lo, hi)) in self.ranges.iter().enumerate() {
                let v = x[self.offset + c];
                if v < lo || v > hi {
                    out[(row + i, self.offset + c)] = self.sqrt_w;
                }
            }
        }
    }
}

pub(crate) fn rms(sum_sq: f64, n: usize) -> f64 {
    (sum_sq / n as f64).sqrt()
}

struct IkProblem<'a> {
    model: &'a SkeletalModel,
    scales: &'a ScaleSet,
    targets: &'a Targets,
    limits: Limits,
}

impl IkProblem<'_> {
    fn marker_rows(&self) -> usize {
        3 * self.targets.anchors.len()
    }

    fn target_sq_error(&self, x: &DVector<f64>) -> f64 {
        let frames = pose_frames(self.model, x.as_slice(), self.scales);
        self.targets
            .anchors
            .iter()
            .zip(&self.targets.points)
            .map(|(a, t)| (frames.point(a, self.scales) - t).norm_squared())
            .sum()
    }
}

impl LeastSquares for IkProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let frames = pose_frames(self.model, x.as_slice(), self.scales);
        let mut r = DVector::zeros(self.marker_rows() + self.limits.penalty_rows());
        for (i, (a, t)) in self
            .targets
            .anchors
            .iter()
            .zip(&self.targets.points)
            .enumerate()
        {
            r.fixed_rows_mut::<3>(3 * i)
                .copy_from(&(frames.point(a, self.scales) - t));
        }
        self.limits.residuals(x, &mut r, self.marker_rows());
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let frames = pose_frames(self.model, x.as_slice(), self.scales);
        let mut j = DMatrix::zeros(self.marker_rows() + self.limits.penalty_rows(), x.len());
        for (i, a) in self.targets.anchors.iter().enumerate() {
            frames.jacobian_block(
                self.model,
                a,
                self.scales,
                JacobianTarget::Coordinates,
                &mut j,
                3 * i,
            );
        }
        self.limits.jacobian(x, &mut j, self.marker_rows());
        j
    }

    fn project(&self, x: &mut DVector<f64>) {
        self.limits.project(x);
    }
}

pub(crate) fn solve_frame(
    model: &SkeletalModel,
    scales: &ScaleSet,
    targets: &Targets,
    init: &Pose,
    settings: &IKSettings,
) -> IkSolution {
    let problem = IkProblem {
        model,
        scales,
        targets,
        limits: Limits::new(model, settings, 0),
    };
    let out = minimize(&problem, init.values.clone(), settings.lm());
    let rms = rms(problem.target_sq_error(&out.x), targets.anchors.len());
    IkSolution {
        pose: Pose { values: out.x },
        rms,
        iterations: out.iterations,
        converged: out.converged,
    }
}

/// Fits all coordinates so that model markers/keypoints match the labeled
/// targets in the least-squares sense.
pub fn inverse_kinematics_frame(
    model: &SkeletalModel,
    scales: &ScaleSet,
    targets: &[LabeledPoint],
    init: &Pose,
    settings: &IKSettings,
) -> Result<IkSolution> {
    settings.validate()?;
    check_inputs(model, init, scales)?;
    let targets = Targets::resolve(model, targets)?;
    Ok(solve_frame(model, scales, &targets, init, settings))
}

/// Sequential IK over a clip: frame 0 starts from the default pose, every
/// later frame from the previous solution.
pub fn inverse_kinematics_sequence(
    model: &SkeletalModel,
    scales: &ScaleSet,
    targets: &Tracks3d,
    frame_rate: f64,
    settings: &IKSettings,
) -> Result<SequenceSolution> {
    settings.validate()?;
    targets.check()?;
    if targets.is_empty() {
        return Err(Error::MissingData("empty target sequence".into()));
    }
    let mut init = Pose::default_for(model);
    check_inputs(model, &init, scales)?;
    let anchors = resolve_labels(model, targets.labels.iter().map(String::as_str))?;
    if anchors.is_empty() {
        return Err(Error::MissingData("no IK targets".into()));
    }

    let mut frames = Vec::with_capacity(targets.len());
    let mut frame_rms = Vec::with_capacity(targets.len());
    let mut iterations = Vec::with_capacity(targets.len());
    let mut unconverged = Vec::new();
    let mut resolved = Targets {
        anchors,
        points: Vec::new(),
    };
    for (t, points) in targets.frames.iter().enumerate() {
        if !points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite target".into()).at_frame(t));
        }
        resolved.points.clone_from(points);
        let sol = solve_frame(model, scales, &resolved, &init, settings);
        if !sol.converged {
            unconverged.push(t);
        }
        frame_rms.push(sol.rms);
        iterations.push(sol.iterations);
        init = sol.pose.clone();
        frames.push(sol.pose);
    }
    Ok(SequenceSolution {
        motion: MotionSequence::new(frames, frame_rate)?,
        frame_rms,
        iterations,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::marker_positions;

    fn targets_at(model: &SkeletalModel, pose: &Pose, scales: &ScaleSet) -> Vec<LabeledPoint> {
        marker_positions(model, pose, scales).unwrap()
    }

    fn sample_pose(model: &SkeletalModel) -> Pose {
        let mut pose = Pose::default_for(model);
        for (i, c) in model.coordinates().iter().enumerate() {
            let wiggle = 0.15 * ((i as f64) * 1.7).sin();
            pose.values[i] = c.clamp(pose.values[i] + wiggle);
        }
        pose
    }

    #[test]
    fn optimal_init_needs_no_work() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let pose = sample_pose(&model);
        let sol = inverse_kinematics_frame(
            &model,
            &scales,
            &targets_at(&model, &pose, &scales),
            &pose,
            &IKSettings::default(),
        )
        .unwrap();
        assert!(sol.iterations <= 2);
        assert!(sol.rms < 1e-9);
    }

    #[test]
    fn perturbed_init_recovers_pose() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let truth = sample_pose(&model);
        let mut init = truth.clone();
        for (i, c) in model.coordinates().iter().enumerate() {
            let d = if c.is_rotation() {
                5f64.to_radians()
            } else {
                0.05
            };
            init.values[i] += d * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let sol = inverse_kinematics_frame(
            &model,
            &scales,
            &targets_at(&model, &truth, &scales),
            &init,
            &IKSettings::default(),
        )
        .unwrap();
        assert!(sol.converged);
        for i in model.rotational_indices() {
            assert!(
                (sol.pose.values[i] - truth.values[i]).abs() < 0.5f64.to_radians(),
                "coord {i}"
            );
        }
    }

    #[test]
    fn unreachable_target_pins_coordinate_to_bound() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let knee = model.coordinate_index("knee_angle_r").unwrap();
        let (lo, _) = model.coordinates()[knee].range.unwrap();
        let mut beyond = Pose::default_for(&model);
        beyond.values[knee] = lo - 0.4;
        let targets = targets_at(&model, &beyond, &scales);
        let sol = inverse_kinematics_frame(
            &model,
            &scales,
            &targets,
            &Pose::default_for(&model),
            &IKSettings::default(),
        )
        .unwrap();
        assert!((sol.pose.values[knee] - lo).abs() < 1e-9);
        for (c, v) in model.coordinates().iter().zip(sol.pose.values.iter()) {
            if let Some((lo, hi)) = c.range {
                assert!(*v >= lo && *v <= hi);
            }
        }
    }

    #[test]
    fn penalty_mode_keeps_violation_small() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let knee = model.coordinate_index("knee_angle_r").unwrap();
        let (lo, _) = model.coordinates()[knee].range.unwrap();
        let mut beyond = Pose::default_for(&model);
        beyond.values[knee] = lo - 0.4;
        let settings = IKSettings {
            limit_mode: LimitMode::Penalty,
            penalty_weight: 1e4,
            max_iterations: 500,
            ..IKSettings::default()
        };
        let sol = inverse_kinematics_frame(
            &model,
            &scales,
            &targets_at(&model, &beyond, &scales),
            &Pose::default_for(&model),
            &settings,
        )
        .unwrap();
        assert!(sol.converged);
        let v = sol.pose.values[knee];
        assert!(v < lo && v > lo - 0.05, "knee {v} vs bound {lo}");
    }

    #[test]
    fn empty_and_unknown_targets_rejected() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let init = Pose::default_for(&model);
        let s = IKSettings::default();
        assert!(matches!(
            inverse_kinematics_frame(&model, &scales, &[], &init, &s),
            Err(Error::MissingData(_))
        ));
        let bogus = vec![("nope".to_string(), Vector3::zeros())];
        assert!(matches!(
            inverse_kinematics_frame(&model, &scales, &bogus, &init, &s),
            Err(Error::UnknownLabel(_))
        ));
    }

    fn tracks(frames: Vec<Vec<LabeledPoint>>) -> Tracks3d {
        Tracks3d {
            labels: frames[0].iter().map(|(l, _)| l.clone()).collect(),
            frames: frames
                .into_iter()
                .map(|f| f.into_iter().map(|(_, p)| p).collect())
                .collect(),
        }
    }

    #[test]
    fn constant_targets_give_constant_motion() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let pose = sample_pose(&model);
        let frame = targets_at(&model, &pose, &scales);
        let seq = inverse_kinematics_sequence(
            &model,
            &scales,
            &tracks(vec![frame; 5]),
            60.0,
            &IKSettings::default(),
        )
        .unwrap();
        assert_eq!(seq.motion.len(), 5);
        for f in &seq.motion.frames[1..] {
            assert!((&f.values - &seq.motion.frames[0].values).amax() < 1e-9);
        }
    }

    #[test]
    fn single_frame_sequence_matches_frame_solve() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let frame = targets_at(&model, &sample_pose(&model), &scales);
        let s = IKSettings::default();
        let seq =
            inverse_kinematics_sequence(&model, &scales, &tracks(vec![frame.clone()]), 60.0, &s)
                .unwrap();
        let one = inverse_kinematics_frame(&model, &scales, &frame, &Pose::default_for(&model), &s)
            .unwrap();
        assert_eq!(seq.motion.frames[0], one.pose);
    }

    #[test]
    fn frame_errors_carry_index() {
        let model = SkeletalModel::generic();
        let scales = ScaleSet::unit(model.segment_count());
        let frame = targets_at(&model, &Pose::default_for(&model), &scales);
        let mut tr = tracks(vec![frame; 3]);
        tr.frames[2][0].x = f64::NAN;
        let err = inverse_kinematics_sequence(&model, &scales, &tr, 60.0, &IKSettings::default())
            .unwrap_err();
        assert!(matches!(err, Error::Frame { frame: 2, .. }));
    }
}
