//! Evaluation metrics: joint-angle error, Procrustes-aligned keypoint error
//! and keypoint velocity error, plus the per-clip report.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, KeypointSet, MotionSequence};
use crate::model::{ScaleSet, SkeletalModel};
use crate::tracks::{csv_err, finish};
use crate::viewgeom::procrustes_align;

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_angle(d: f64) -> f64 {
    let w = d.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Magnitude of the wrapped difference, exactly symmetric in sign.
fn wrapped_abs(d: f64) -> f64 {
    let a = d.abs().rem_euclid(2.0 * PI);
    a.min(2.0 * PI - a)
}

/// Mean absolute angle error in degrees over frames and the given
/// coordinates, with differences wrapped first.
pub fn mae_angle(pred: &MotionSequence, truth: &MotionSequence, coords: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "frame count",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() || coords.is_empty() {
        return Err(Error::InvalidArgument(
            "angle error over an empty set".into(),
        ));
    }
    let n = pred.coordinate_count().min(truth.coordinate_count());
    if let Some(&c) = coords.iter().find(|&&c| c >= n) {
        return Err(Error::InvalidArgument(format!(
            "coordinate index {c} out of range"
        )));
    }
    let mut sum = 0.0;
    for (p, q) in pred.frames.iter().zip(&truth.frames) {
        for &c in coords {
            sum += wrapped_abs(p.values[c] - q.values[c]);
        }
    }
    Ok((sum / (pred.len() * coords.len()) as f64).to_degrees())
}

/// How predictions are aligned to the truth before measuring error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    /// One similarity transform per frame.
    #[default]
    PerFrame,
    /// One similarity transform for the whole sequence.
    PerSequence,
    /// Root-relative only.
    None,
}

fn check_keypoints(pred: &[KeypointSet], truth: &[KeypointSet]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "frame count",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    for (p, q) in pred.iter().zip(truth) {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "keypoint count",
                expected: q.len(),
                actual: p.len(),
            });
        }
    }
    Ok(())
}

fn relative(k: &KeypointSet, root: usize) -> Vec<Vector3<f64>> {
    let r = k.positions[root];
    k.positions.iter().map(|p| p - r).collect()
}

/// One frame of points.
pub type PointSet = Vec<Vector3<f64>>;

/// Root-relative predictions aligned onto root-relative truth, and that truth.
pub fn align_keypoints(
    pred: &[KeypointSet],
    truth: &[KeypointSet],
    root: usize,
    mode: AlignmentMode,
) -> Result<(Vec<PointSet>, Vec<PointSet>)> {
    check_keypoints(pred, truth)?;
    if let Some(k) = pred.first() {
        if root >= k.len() {
            return Err(Error::InvalidArgument(format!(
                "root keypoint {root} out of range"
            )));
        }
    }
    let p: Vec<_> = pred.iter().map(|k| relative(k, root)).collect();
    let q: Vec<_> = truth.iter().map(|k| relative(k, root)).collect();
    let aligned = match mode {
        AlignmentMode::None => p,
        AlignmentMode::PerFrame => p
            .iter()
            .zip(&q)
            .enumerate()
            .map(|(t, (a, b))| {
                procrustes_align(a, b, true)
                    .map(|f| f.aligned)
                    .map_err(|e| e.at_frame(t))
            })
            .collect::<Result<_>>()?,
        AlignmentMode::PerSequence => {
            let flat_p: Vec<_> = p.concat();
            let flat_q: Vec<_> = q.concat();
            let fit = procrustes_align(&flat_p, &flat_q, true)?;
            p.iter()
                .map(|a| a.iter().map(|x| fit.transform.apply(x)).collect())
                .collect()
        }
    };
    Ok((aligned, q))
}

/// Mean per-joint position error after per-frame similarity alignment, mm.
pub fn pa_mpjpe(pred: &[KeypointSet], truth: &[KeypointSet]) -> Result<f64> {
    pa_mpjpe_with(pred, truth, 0, AlignmentMode::PerFrame)
}

pub fn pa_mpjpe_with(
    pred: &[KeypointSet],
    truth: &[KeypointSet],
    root: usize,
    mode: AlignmentMode,
) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument(
            "position error over zero frames".into(),
        ));
    }
    let (p, q) = align_keypoints(pred, truth, root, mode)?;
    let mut sum = 0.0;
    let mut n = 0;
    for (a, b) in p.iter().zip(&q) {
        for (x, y) in a.iter().zip(b) {
            sum += (x - y).norm();
            n += 1;
        }
    }
    Ok(1000.0 * sum / n as f64)
}

/// Mean per-joint velocity error of aligned keypoints, mm/s. Velocities are
/// forward differences scaled by the frame rate.
pub fn mpjve(pred: &[KeypointSet], truth: &[KeypointSet], frame_rate: f64) -> Result<f64> {
    mpjve_with(pred, truth, frame_rate, 0, AlignmentMode::PerFrame)
}

pub fn mpjve_with(
    pred: &[KeypointSet],
    truth: &[KeypointSet],
    frame_rate: f64,
    root: usize,
    mode: AlignmentMode,
) -> Result<f64> {
    if pred.len() < 2 || truth.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "velocity error needs at least 2 frames, got {}",
            pred.len().min(truth.len())
        )));
    }
    if !(frame_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("frame rate {frame_rate}")));
    }
    let (p, q) = align_keypoints(pred, truth, root, mode)?;
    let mut sum = 0.0;
    let mut n = 0;
    for t in 0..p.len() - 1 {
        for k in 0..p[t].len() {
            let vp = (p[t + 1][k] - p[t][k]) * frame_rate;
            let vq = (q[t + 1][k] - q[t][k]) * frame_rate;
            sum += (vp - vq).norm();
            n += 1;
        }
    }
    Ok(1000.0 * sum / n as f64)
}

/// Motion and scales of one clip.
#[derive(Debug, Clone, Copy)]
pub struct ClipBundle<'a> {
    pub motion: &'a MotionSequence,
    pub scales: &'a ScaleSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip: String,
    #[serde(rename = "MAE_angle_deg")]
    pub mae_angle_deg: f64,
    #[serde(rename = "PA_MPJPE_mm")]
    pub pa_mpjpe_mm: f64,
    #[serde(rename = "MPJVE_mm_s")]
    pub mpjve_mm_s: f64,
}

pub fn keypoint_track(
    model: &SkeletalModel,
    motion: &MotionSequence,
    scales: &ScaleSet,
) -> Result<Vec<KeypointSet>> {
    motion
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| forward_kinematics(model, f, scales).map_err(|e| e.at_frame(t)))
        .collect()
}

/// All three metrics for one clip. Angle error covers every rotational
/// coordinate.
pub fn evaluate_clip(
    name: &str,
    model: &SkeletalModel,
    pred: ClipBundle<'_>,
    truth: ClipBundle<'_>,
) -> Result<ClipMetrics> {
    if (pred.motion.frame_rate - truth.motion.frame_rate).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "clip `{name}`: frame rates differ ({} vs {})",
            pred.motion.frame_rate, truth.motion.frame_rate
        )));
    }
    let kp = keypoint_track(model, pred.motion, pred.scales)?;
    let kt = keypoint_track(model, truth.motion, truth.scales)?;
    let root = model.root_keypoint();
    Ok(ClipMetrics {
        clip: name.to_owned(),
        mae_angle_deg: mae_angle(pred.motion, truth.motion, &model.rotational_indices())?,
        pa_mpjpe_mm: pa_mpjpe_with(&kp, &kt, root, AlignmentMode::PerFrame)?,
        mpjve_mm_s: mpjve_with(
            &kp,
            &kt,
            truth.motion.frame_rate,
            root,
            AlignmentMode::PerFrame,
        )?,
    })
}

/// Per-clip metrics and their dataset means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub clips: Vec<ClipMetrics>,
    pub mean: ClipMetrics,
}

pub type ClipPair<'a> = (String, ClipBundle<'a>, ClipBundle<'a>);

/// Evaluates clips concurrently and aggregates them.
pub fn evaluation_report(
    model: &SkeletalModel,
    pairs: &[ClipPair<'_>],
) -> Result<EvaluationReport> {
    let clips = pairs
        .par_iter()
        .map(|(name, pred, truth)| {
            evaluate_clip(name, model, *pred, *truth).map_err(|e| e.in_clip(name.as_str()))
        })
        .collect::<Result<Vec<_>>>()?;
    EvaluationReport::from_clips(clips)
}

impl EvaluationReport {
    pub fn from_clips(clips: Vec<ClipMetrics>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::InvalidArgument("report over zero clips".into()));
        }
        let n = clips.len() as f64;
        let mean = ClipMetrics {
            clip: "mean".into(),
            mae_angle_deg: clips.iter().map(|c| c.mae_angle_deg).sum::<f64>() / n,
            pa_mpjpe_mm: clips.iter().map(|c| c.pa_mpjpe_mm).sum::<f64>() / n,
            mpjve_mm_s: clips.iter().map(|c| c.mpjve_mm_s).sum::<f64>() / n,
        };
        Ok(EvaluationReport { clips, mean })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("report", e))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("report", e))
    }

    /// One row per clip followed by the `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.clips.iter().chain(std::iter::once(&self.mean)) {
            w.serialize(row).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut rows: Vec<ClipMetrics> = r
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        match rows.pop() {
            Some(mean) if mean.clip == "mean" => Ok(EvaluationReport { clips: rows, mean }),
            _ => Err(Error::parse("report", "missing trailing `mean` row")),
        }
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .clips
            .iter()
            .map(|c| c.clip.len())
            .max()
            .unwrap_or(4)
            .max(4);
        writeln!(
            f,
            "{:<width$}  {:>14}  {:>12}  {:>12}",
            "clip", "MAE_angle(deg)", "PA-MPJPE(mm)", "MPJVE(mm/s)"
        )?;
        for c in self.clips.iter().chain(std::iter::once(&self.mean)) {
            writeln!(
                f,
                "{:<width$}  {:>14.3}  {:>12.3}  {:>12.3}",
                c.clip, c.mae_angle_deg, c.pa_mpjpe_mm, c.mpjve_mm_s
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, Unit};

    fn motion(values: Vec<Vec<f64>>) -> MotionSequence {
        MotionSequence::new(values.into_iter().map(Pose::new).collect(), 60.0).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mae_constant_offset_and_wrap() {
        let truth = motion(vec![vec![0.1, 0.2]; 4]);
        let off = motion(vec![vec![0.1 + 5f64.to_radians(), 0.2]; 4]);
        assert_relative_eq!(mae_angle(&off, &truth, &[0]).unwrap(), 5.0, epsilon = 1e-9);
        let wrapped = motion(vec![vec![0.1 + 2.0 * PI, 0.2]; 4]);
        assert!(mae_angle(&wrapped, &truth, &[0, 1]).unwrap() < 1e-9);
        assert_eq!(
            mae_angle(&off, &truth, &[0, 1]).unwrap(),
            mae_angle(&truth, &off, &[0, 1]).unwrap()
        );
    }

    fn cloud(t: f64) -> KeypointSet {
        KeypointSet {
            positions: (0..6)
                .map(|i| {
                    let f = i as f64;
                    Vector3::new((f + t).sin(), 0.3 * f, (2.0 * f - t).cos() * 0.5)
                })
                .collect(),
        }
    }

    #[test]
    fn pa_mpjpe_removes_similarity() {
        let truth: Vec<_> = (0..5).map(|t| cloud(t as f64 * 0.1)).collect();
        let pred: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(t, k)| {
                let r = Rotation3::from_axis_angle(
                    &Unit::new_normalize(Vector3::new(1.0, t as f64, 0.5)),
                    0.3 * t as f64 + 0.2,
                );
                KeypointSet {
                    positions: k
                        .positions
                        .iter()
                        .map(|p| r * p * (1.5 + t as f64 * 0.1) + Vector3::new(t as f64, -2.0, 0.3))
                        .collect(),
                }
            })
            .collect();
        assert!(pa_mpjpe(&pred, &truth).unwrap() < 1e-9);
        assert!(pa_mpjpe(&truth, &truth).unwrap() < 1e-9);
    }

    #[test]
    fn mpjve_hand_constructed_offset() {
        let k = 4;
        let truth: Vec<_> = (0..3)
            .map(|_| KeypointSet {
                positions: vec![Vector3::zeros(); k],
            })
            .collect();
        let mut pred = truth.clone();
        // Keypoint 2 drifts 0.01 m per frame along x: 0.6 m/s at 60 fps.
        for (t, f) in pred.iter_mut().enumerate() {
            f.positions[2].x = 0.01 * t as f64;
        }
        let v = mpjve_with(&pred, &truth, 60.0, 0, AlignmentMode::None).unwrap();
        assert_relative_eq!(v, 600.0 / k as f64, epsilon = 1e-9);
    }

    #[test]
    fn mpjve_static_sequences_are_zero() {
        let truth = vec![cloud(0.0); 4];
        let pred = vec![cloud(0.7); 4];
        assert!(mpjve(&pred, &truth, 60.0).unwrap() < 1e-9);
        assert!(mpjve(&pred[..1], &truth[..1], 60.0).is_err());
    }

    #[test]
    fn report_round_trips() {
        let model = SkeletalModel::generic();
        let truth = MotionSequence::new(vec![Pose::default_for(&model); 3], 60.0).unwrap();
        let scales = ScaleSet::unit(model.segment_count());
        let b = ClipBundle {
            motion: &truth,
            scales: &scales,
        };
        let mut pred = truth.clone();
        pred.frames[1].values[5] += 0.1;
        let p = ClipBundle {
            motion: &pred,
            scales: &scales,
        };
        let report = evaluation_report(&model, &[("a".into(), b, b), ("b".into(), p, b)]).unwrap();
        assert_eq!(report.clips[0].mae_angle_deg, 0.0);
        assert!(report.clips[0].pa_mpjpe_mm < 1e-9);
        assert_relative_eq!(
            report.mean.mae_angle_deg,
            report.clips[1].mae_angle_deg / 2.0
        );
        assert_eq!(
            EvaluationReport::from_toml(&report.to_toml().unwrap()).unwrap(),
            report
        );
        let csv = report.to_csv().unwrap();
        assert!(csv.starts_with("clip,MAE_angle_deg,PA_MPJPE_mm,MPJVE_mm_s\n"));
        assert_eq!(EvaluationReport::from_csv(&csv).unwrap(), report);
    }
}
