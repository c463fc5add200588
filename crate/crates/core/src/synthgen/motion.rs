//! Procedural joint-angle motions built from sinusoidal primitives.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::io::motion_from_csv;
use crate::kinematics::{MotionSequence, Pose};
use crate::model::{CoordinateKind, SkeletalModel};

/// `offset + amp · sin(harmonic · ωt + phase)`, added to the coordinate's
/// default. Degrees for rotations, meters for translations.
struct Wave {
    coord: &'static str,
    offset: f64,
    amp: f64,
    harmonic: f64,
    phase: f64,
}

const fn w(coord: &'static str, offset: f64, amp: f64, harmonic: f64, phase: f64) -> Wave {
    Wave {
        coord,
        offset,
        amp,
        harmonic,
        phase,
    }
}

/// `amp · (1 − cos ωt)`: rests at zero, peaks at `2·amp`.
const fn dip(coord: &'static str, amp: f64) -> Wave {
    w(coord, amp, amp, 1.0, -PI / 2.0)
}

/// Treadmill walking: the pelvis bobs and sways but does not progress.
const GAIT: &[Wave] = &[
    w("pelvis_tx", 0.0, 0.02, 1.0, 0.0),
    w("pelvis_ty", 0.0, 0.015, 2.0, 0.0),
    w("pelvis_tz", 0.0, 0.02, 1.0, 0.5),
    w("pelvis_tilt", 0.0, 3.0, 2.0, 0.0),
    w("pelvis_list", 0.0, 4.0, 1.0, 0.0),
    w("pelvis_rotation", 0.0, 6.0, 1.0, 0.0),
    w("hip_flexion_r", 10.0, 25.0, 1.0, 0.0),
    w("hip_adduction_r", 0.0, 4.0, 1.0, 0.3),
    w("hip_rotation_r", 0.0, 5.0, 1.0, 0.6),
    w("knee_angle_r", -30.0, 27.0, 1.0, 1.2),
    w("ankle_angle_r", 0.0, 12.0, 1.0, -0.5),
    w("subtalar_angle_r", 0.0, 3.0, 1.0, 0.0),
    w("mtp_angle_r", 10.0, 10.0, 1.0, 2.0),
    w("hip_flexion_l", 10.0, 25.0, 1.0, PI),
    w("hip_adduction_l", 0.0, 4.0, 1.0, PI + 0.3),
    w("hip_rotation_l", 0.0, 5.0, 1.0, PI + 0.6),
    w("knee_angle_l", -30.0, 27.0, 1.0, PI + 1.2),
    w("ankle_angle_l", 0.0, 12.0, 1.0, PI - 0.5),
    w("subtalar_angle_l", 0.0, 3.0, 1.0, PI),
    w("mtp_angle_l", 10.0, 10.0, 1.0, PI + 2.0),
    w("lumbar_extension", -4.0, 3.0, 2.0, 0.0),
    w("lumbar_bending", 0.0, 3.0, 1.0, PI),
    w("lumbar_rotation", 0.0, 6.0, 1.0, PI),
    w("neck_flexion", 0.0, 3.0, 2.0, 0.0),
    w("arm_flex_r", 0.0, 20.0, 1.0, PI),
    w("arm_add_r", -8.0, 3.0, 1.0, 0.0),
    w("arm_rot_r", 0.0, 5.0, 1.0, 0.0),
    w("elbow_flex_r", 20.0, 12.0, 1.0, PI + 0.4),
    w("pro_sup_r", 0.0, 10.0, 1.0, 0.0),
    w("wrist_flex_r", 0.0, 8.0, 1.0, 0.0),
    w("arm_flex_l", 0.0, 20.0, 1.0, 0.0),
    w("arm_add_l", -8.0, 3.0, 1.0, PI),
    w("arm_rot_l", 0.0, 5.0, 1.0, PI),
    w("elbow_flex_l", 20.0, 12.0, 1.0, 0.4),
    w("pro_sup_l", 0.0, 10.0, 1.0, PI),
    w("wrist_flex_l", 0.0, 8.0, 1.0, PI),
];

const SQUAT: &[Wave] = &[
    dip("pelvis_ty", -0.13),
    dip("pelvis_tx", -0.05),
    w("pelvis_rotation", 0.0, 3.0, 0.5, 0.0),
    dip("pelvis_tilt", -12.0),
    dip("hip_flexion_r", 40.0),
    dip("knee_angle_r", -50.0),
    dip("ankle_angle_r", 12.0),
    w("hip_adduction_r", 0.0, 3.0, 1.0, 0.0),
    dip("hip_flexion_l", 40.0),
    dip("knee_angle_l", -50.0),
    dip("ankle_angle_l", 12.0),
    w("hip_adduction_l", 0.0, 3.0, 1.0, PI),
    dip("lumbar_extension", -8.0),
    w("lumbar_bending", 0.0, 4.0, 0.5, 0.0),
    dip("arm_flex_r", 35.0),
    dip("arm_flex_l", 35.0),
    dip("elbow_flex_r", 12.0),
    dip("elbow_flex_l", 12.0),
    w("pro_sup_r", 0.0, 15.0, 1.0, 0.0),
    w("pro_sup_l", 0.0, 15.0, 1.0, 0.0),
    dip("neck_flexion", 6.0),
];

const ARM_WAVE: &[Wave] = &[
    w("pelvis_tz", 0.0, 0.02, 0.5, 0.0),
    w("pelvis_list", 0.0, 2.0, 0.5, 0.0),
    w("pelvis_rotation", 0.0, 8.0, 0.5, 0.0),
    w("lumbar_bending", 0.0, 6.0, 0.5, PI),
    w("lumbar_rotation", 0.0, 10.0, 0.5, 0.0),
    w("neck_flexion", 0.0, 8.0, 1.0, 0.0),
    w("arm_flex_r", 50.0, 35.0, 1.0, 0.0),
    w("arm_add_r", -30.0, 20.0, 1.0, 0.8),
    w("arm_rot_r", 0.0, 25.0, 1.0, 1.5),
    w("elbow_flex_r", 55.0, 40.0, 2.0, 0.0),
    w("pro_sup_r", 0.0, 45.0, 1.0, 0.3),
    w("wrist_flex_r", 0.0, 30.0, 2.0, 0.0),
    w("arm_flex_l", 50.0, 35.0, 1.0, PI),
    w("arm_add_l", -30.0, 20.0, 1.0, PI + 0.8),
    w("arm_rot_l", 0.0, 25.0, 1.0, PI + 1.5),
    w("elbow_flex_l", 55.0, 40.0, 2.0, PI),
    w("pro_sup_l", 0.0, 45.0, 1.0, PI + 0.3),
    w("wrist_flex_l", 0.0, 30.0, 2.0, PI),
    w("hip_flexion_r", 5.0, 5.0, 0.5, 0.0),
    w("hip_flexion_l", 5.0, 5.0, 0.5, PI),
    w("knee_angle_r", -5.0, 4.0, 0.5, 0.0),
    w("knee_angle_l", -5.0, 4.0, 0.5, PI),
];

/// Which motion family a clip plays.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionKind {
    Gait,
    Squat,
    ArmWave,
    /// A motion CSV, used as-is after range clamping.
    Imported(std::path::PathBuf),
}

impl MotionKind {
    pub const PROCEDURAL: [MotionKind; 3] =
        [MotionKind::Gait, MotionKind::Squat, MotionKind::ArmWave];

    pub fn label(&self) -> &str {
        match self {
            MotionKind::Gait => "gait",
            MotionKind::Squat => "squat",
            MotionKind::ArmWave => "arm-wave",
            MotionKind::Imported(_) => "imported",
        }
    }

    /// Primitive table and base frequency in Hz.
    fn table(&self) -> Option<(&'static [Wave], f64)> {
        match self {
            MotionKind::Gait => Some((GAIT, 0.9)),
            MotionKind::Squat => Some((SQUAT, 0.3)),
            MotionKind::ArmWave => Some((ARM_WAVE, 0.6)),
            MotionKind::Imported(_) => None,
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Fraction of each constrained range kept clear of the bounds.
const RANGE_MARGIN: f64 = 0.02;

/// Samples a procedural motion of `frames` frames. The motion fades in from
/// the default pose over `ramp_s` seconds so that it can follow a static
/// trial without a velocity jump.
pub(crate) fn procedural(
    model: &SkeletalModel,
    kind: &MotionKind,
    frames: usize,
    frame_rate: f64,
    amplitude: f64,
    ramp_s: f64,
    rng: &mut impl Rng,
) -> Result<MotionSequence> {
    let (table, base_hz) = kind.table().ok_or_else(|| {
        Error::InvalidArgument(format!("`{}` is not a procedural motion", kind.label()))
    })?;
    let omega = 2.0 * PI * base_hz * rng.random_range(0.9..1.1);
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let mut waves = Vec::with_capacity(table.len());
    for wave in table {
        let c = model.coordinate_index(wave.coord).ok_or_else(|| {
            Error::InvalidModel(format!(
                "procedural motion needs coordinate `{}`",
                wave.coord
            ))
        })?;
        let unit = match model.coordinates()[c].kind {
            CoordinateKind::Rotation => PI / 180.0,
            CoordinateKind::Translation => 1.0,
        };
        let gain = rng.random_range(0.85..1.15) * amplitude * unit;
        waves.push((c, wave, gain));
    }

    let defaults = model.default_values();
    let out = (0..frames)
        .map(|t| {
            let time = t as f64 / frame_rate;
            let env = if ramp_s > 0.0 {
                smoothstep(time / ramp_s)
            } else {
                1.0
            };
            let mut values = defaults.clone();
            for (c, wave, gain) in &waves {
                let arg = wave.harmonic * (omega * time + phase0) + wave.phase;
                values[*c] += env * gain * (wave.offset + wave.amp * arg.sin());
            }
            for (v, coord) in values.iter_mut().zip(model.coordinates()) {
                if let Some((lo, hi)) = coord.range {
                    let m = RANGE_MARGIN * (hi - lo);
                    *v = v.clamp(lo + m, hi - m);
                }
            }
            Pose::new(values)
        })
        .collect();
    MotionSequence::new(out, frame_rate)
}

/// Loads a motion CSV and clamps constrained coordinates into range,
/// returning the number of clamped samples.
pub fn import_motion(model: &SkeletalModel, path: &Path) -> Result<(MotionSequence, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut motion = motion_from_csv(model, &text, &path.display().to_string())?;
    let mut clamped = 0;
    for pose in &mut motion.frames {
        for (v, coord) in pose.values.iter_mut().zip(model.coordinates()) {
            if !v.is_finite() {
                return Err(Error::parse(
                    path.display().to_string(),
                    format!("non-finite `{}`", coord.name),
                ));
            }
            let c = coord.clamp(*v);
            if c != *v {
                clamped += 1;
                *v = c;
            }
        }
    }
    if clamped > 0 {
        warn!(
            "{}: clamped {clamped} samples into coordinate ranges",
            path.display()
        );
    }
    Ok((motion, clamped))
}
