//! Synthetic clips with full ground truth: sampled subject scales, a
//! procedural or imported joint-angle motion, marker and keypoint
//! trajectories from forward kinematics, and their projections into a
//! frontal and a sagittal camera.
//!
//! Rendering is replaced by projecting the model points directly; the only
//! observation model is additive Gaussian pixel noise and a binary
//! in-image visibility flag.

mod dataset;
mod motion;

pub use dataset::{
    generate_dataset, load_clip, load_manifest, regenerate, split_subjects, write_dataset,
    DatasetConfig, DatasetSplit, Manifest, ManifestClip, MANIFEST_FILE,
};
pub use motion::{import_motion, MotionKind};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{anchor_positions, MotionSequence, Pose};
use crate::model::{Anchor, ScaleSet, SkeletalModel};
use crate::tracks::{Observation2d, Tracks2d, Tracks3d};
use crate::viewgeom::{project, Camera, Intrinsics, RigPlacement};

// Independent random streams drawn from one clip seed.
const STREAM_MOTION: u64 = 1;
const STREAM_CAMERAS: u64 = 2;
const STREAM_PIXELS: u64 = 3;
const STREAM_MARKERS: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A synthetic subject: per-segment, per-axis log-normal scale factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectSpec {
    pub id: usize,
    pub seed: u64,
    /// Standard deviation of the log scale factor.
    pub scale_sigma: f64,
    pub scale_clip: [f64; 2],
}

impl Default for SubjectSpec {
    fn default() -> Self {
        SubjectSpec {
            id: 0,
            seed: 0,
            scale_sigma: 0.08,
            scale_clip: [0.8, 1.2],
        }
    }
}

impl SubjectSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_clip;
        if !(self.scale_sigma >= 0.0) || !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "subject scale sampling needs sigma >= 0 and 0 < lo <= 1 <= hi, got sigma {} clip [{lo}, {hi}]",
                self.scale_sigma
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, model: &SkeletalModel) -> Result<ScaleSet> {
        self.validate()?;
        let [lo, hi] = self.scale_clip;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dist = LogNormal::new(0.0, self.scale_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let factors = (0..model.segment_count())
            .map(|_| Vector3::from_fn(|_, _| dist.sample(&mut rng).clamp(lo, hi)))
            .collect();
        Ok(ScaleSet { factors })
    }
}

/// Everything needed to render one clip deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipSpec {
    pub seed: u64,
    pub subject: SubjectSpec,
    pub motion: MotionKind,
    /// Multiplies every procedural excursion from the default pose.
    pub amplitude: f64,
    pub duration_s: f64,
    pub frame_rate: f64,
    /// Length of the default-pose trial prepended to the motion.
    pub static_trial_s: f64,
    /// Fade-in of the procedural motion after the static trial.
    pub ramp_s: f64,
    pub rig: RigPlacement,
    pub noise_px: f64,
    pub marker_noise_m: f64,
}

impl Default for ClipSpec {
    fn default() -> Self {
        ClipSpec {
            seed: 0,
            subject: SubjectSpec::default(),
            motion: MotionKind::Gait,
            amplitude: 1.0,
            duration_s: 10.0,
            frame_rate: 60.0,
            static_trial_s: 1.0,
            ramp_s: 1.0,
            rig: RigPlacement::default(),
            noise_px: 0.0,
            marker_noise_m: 0.0,
        }
    }
}

impl ClipSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!(
                "clip {what} is invalid: {v}"
            )))
        };
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration", self.duration_s);
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad("frame rate", self.frame_rate);
        }
        if !(self.static_trial_s >= 0.0) {
            return bad("static trial length", self.static_trial_s);
        }
        if !(self.ramp_s >= 0.0) {
            return bad("ramp length", self.ramp_s);
        }
        if !(self.amplitude >= 0.0) {
            return bad("amplitude", self.amplitude);
        }
        if !(self.noise_px >= 0.0) {
            return bad("pixel noise", self.noise_px);
        }
        if !(self.marker_noise_m >= 0.0) {
            return bad("marker noise", self.marker_noise_m);
        }
        self.subject.validate()
    }

    pub fn motion_frames(&self) -> usize {
        (self.duration_s * self.frame_rate).round() as usize
    }

    pub fn static_frames(&self) -> usize {
        (self.static_trial_s * self.frame_rate).round() as usize
    }
}

/// One rendered clip. Frame `t` of every track corresponds to frame `t` of
/// the ground-truth motion; the first `static_frames` frames are the static
/// trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipObservation {
    pub name: String,
    pub spec: ClipSpec,
    pub motion: MotionSequence,
    pub scales: ScaleSet,
    /// Marker trajectories with the 3D marker noise applied.
    pub markers: Tracks3d,
    /// Markers then keypoints, as seen by the frontal camera.
    pub frontal: Tracks2d,
    pub sagittal: Tracks2d,
    pub cameras: [Camera; 2],
    pub static_frames: usize,
    /// Representative static-trial frame for scaling.
    pub static_frame: usize,
    /// Samples clamped into range when importing a motion.
    pub clamped_samples: usize,
}

/// The clip's motion without the static trial.
pub fn generate_motion(model: &SkeletalModel, spec: &ClipSpec) -> Result<MotionSequence> {
    Ok(generate_motion_counted(model, spec)?.0)
}

fn generate_motion_counted(
    model: &SkeletalModel,
    spec: &ClipSpec,
) -> Result<(MotionSequence, usize)> {
    spec.validate()?;
    match &spec.motion {
        MotionKind::Imported(path) => {
            let (motion, clamped) = import_motion(model, path)?;
            if (motion.frame_rate - spec.frame_rate).abs() > 1e-6 * spec.frame_rate {
                return Err(Error::InvalidArgument(format!(
                    "imported motion runs at {} Hz, clip expects {} Hz",
                    motion.frame_rate, spec.frame_rate
                )));
            }
            Ok((motion, clamped))
        }
        kind => {
            let mut rng = rng_for(spec.seed, STREAM_MOTION);
            let motion = motion::procedural(
                model,
                kind,
                spec.motion_frames(),
                spec.frame_rate,
                spec.amplitude,
                spec.ramp_s,
                &mut rng,
            )?;
            Ok((motion, 0))
        }
    }
}

/// Labels of the 2D tracks: all markers, then all keypoints.
pub fn observed_labels(model: &SkeletalModel) -> Vec<String> {
    model
        .markers()
        .iter()
        .map(|m| m.name.clone())
        .chain(model.keypoint_labels())
        .collect()
}

fn observed_anchors(model: &SkeletalModel) -> Vec<Anchor> {
    (0..model.markers().len())
        .map(|m| model.marker_anchor(m))
        .chain((0..model.keypoint_count()).map(|k| model.keypoint_anchor(k)))
        .collect()
}

fn observe(
    camera: &Camera,
    point: &Vector3<f64>,
    noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>,
) -> Observation2d {
    match project(camera, point) {
        Ok(uv) if camera.in_image(&uv) => {
            let uv = match noise {
                Some((dist, rng)) => uv + Vector2::new(dist.sample(rng), dist.sample(rng)),
                None => uv,
            };
            Observation2d {
                uv,
                confidence: 1.0,
            }
        }
        Ok(uv) => Observation2d {
            uv,
            confidence: 0.0,
        },
        Err(_) => Observation2d {
            uv: Vector2::repeat(f64::NAN),
            confidence: 0.0,
        },
    }
}

/// Renders a clip: static trial plus motion, forward kinematics, camera
/// placement and noisy projection.
pub fn render_clip(model: &SkeletalModel, name: &str, spec: &ClipSpec) -> Result<ClipObservation> {
    let (motion, clamped_samples) = generate_motion_counted(model, spec)?;
    let scales = spec.subject.resolve(model)?;
    let static_frames = spec.static_frames();
    let mut frames = vec![Pose::default_for(model); static_frames];
    frames.extend(motion.frames);
    let motion = MotionSequence::new(frames, spec.frame_rate)?;

    let (frontal_cam, sagittal_cam) = spec
        .rig
        .place(
            Intrinsics::reference(),
            &mut rng_for(spec.seed, STREAM_CAMERAS),
        )
        .map_err(|e| e.in_stage("camera placement"))?;
    let cameras = [frontal_cam, sagittal_cam];

    let labels = observed_labels(model);
    let anchors = observed_anchors(model);
    let n_markers = model.markers().len();
    let pixel_noise =
        Normal::new(0.0, spec.noise_px).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let marker_noise =
        Normal::new(0.0, spec.marker_noise_m).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut pixel_rng = rng_for(spec.seed, STREAM_PIXELS);
    let mut marker_rng = rng_for(spec.seed, STREAM_MARKERS);

    let mut markers = Vec::with_capacity(motion.len());
    let mut views = [
        Vec::with_capacity(motion.len()),
        Vec::with_capacity(motion.len()),
    ];
    for (t, pose) in motion.frames.iter().enumerate() {
        let points = anchor_positions(model, pose, &scales, &anchors).map_err(|e| e.at_frame(t))?;
        markers.push(
            points[..n_markers]
                .iter()
                .map(|p| {
                    if spec.marker_noise_m > 0.0 {
                        p + Vector3::from_fn(|_, _| marker_noise.sample(&mut marker_rng))
                    } else {
                        *p
                    }
                })
                .collect(),
        );
        for (view, cam) in views.iter_mut().zip(&cameras) {
            view.push(
                points
                    .iter()
                    .map(|p| {
                        let noise = (spec.noise_px > 0.0).then_some((&pixel_noise, &mut pixel_rng));
                        observe(cam, p, noise)
                    })
                    .collect(),
            );
        }
    }
    let [frontal, sagittal] = views.map(|frames| Tracks2d {
        labels: labels.clone(),
        frames,
    });

    Ok(ClipObservation {
        name: name.to_owned(),
        spec: spec.clone(),
        motion,
        scales,
        markers: Tracks3d {
            labels: labels[..n_markers].to_vec(),
            frames: markers,
        },
        frontal,
        sagittal,
        cameras,
        static_frames,
        static_frame: static_frames / 2,
        clamped_samples,
    })
}

/// Draws a fresh seed below 2^63 so that it survives TOML's signed integers.
pub(crate) fn next_seed(rng: &mut impl Rng) -> u64 {
    rng.random::<u64>() >> 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::bio_constraint_loss;

    fn short(motion: MotionKind, seed: u64) -> ClipSpec {
        ClipSpec {
            seed,
            motion,
            duration_s: 4.0,
            static_trial_s: 0.5,
            ..ClipSpec::default()
        }
    }

    #[test]
    fn gait_has_ten_seconds_of_frames() {
        let model = SkeletalModel::generic();
        let m = generate_motion(&model, &ClipSpec::default()).unwrap();
        assert_eq!(m.len(), 600);
        assert_eq!(m.frame_rate, 60.0);
    }

    #[test]
    fn zero_amplitude_is_the_default_pose() {
        let model = SkeletalModel::generic();
        let spec = ClipSpec {
            amplitude: 0.0,
            ..short(MotionKind::Squat, 3)
        };
        let m = generate_motion(&model, &spec).unwrap();
        let rest = Pose::default_for(&model);
        assert!(m.frames.iter().all(|f| f == &rest));
    }

    #[test]
    fn procedural_motions_stay_in_range() {
        let model = SkeletalModel::generic();
        let split = model.free_constrained_split();
        let ranges: Vec<(f64, f64)> = split
            .constrained
            .iter()
            .map(|&c| model.coordinates()[c].range.unwrap())
            .collect();
        for kind in MotionKind::PROCEDURAL {
            for seed in 0..5 {
                let m = generate_motion(&model, &short(kind.clone(), seed)).unwrap();
                for f in &m.frames {
                    for (&c, &(lo, hi)) in split.constrained.iter().zip(&ranges) {
                        assert!(
                            f.values[c] > lo && f.values[c] < hi,
                            "{} out of range",
                            model.coordinates()[c].name
                        );
                    }
                }
                assert_eq!(
                    bio_constraint_loss(&m.select(&split.constrained), &ranges).unwrap(),
                    0.0
                );
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let model = SkeletalModel::generic();
        let spec = ClipSpec {
            noise_px: 1.5,
            marker_noise_m: 0.01,
            ..short(MotionKind::ArmWave, 11)
        };
        let a = render_clip(&model, "c", &spec).unwrap();
        let b = render_clip(&model, "c", &spec).unwrap();
        assert_eq!(a, b);
        let other = render_clip(&model, "c", &ClipSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.frontal, other.frontal);
    }

    #[test]
    fn zero_noise_tracks_are_exact_projections() {
        let model = SkeletalModel::generic();
        let clip = render_clip(&model, "c", &short(MotionKind::Gait, 5)).unwrap();
        assert_eq!(clip.motion.len(), 30 + 240);
        assert_eq!(clip.static_frame, 15);
        let anchors = observed_anchors(&model);
        for t in [0, 100, 269] {
            let pts =
                anchor_positions(&model, &clip.motion.frames[t], &clip.scales, &anchors).unwrap();
            for (cam, view) in clip.cameras.iter().zip([&clip.frontal, &clip.sagittal]) {
                for (p, o) in pts.iter().zip(&view.frames[t]) {
                    assert_eq!(o.uv, project(cam, p).unwrap());
                    assert_eq!(o.confidence, 1.0);
                }
            }
            for (p, q) in pts.iter().zip(&clip.markers.frames[t]) {
                assert_eq!(p, q);
            }
        }
    }

    #[test]
    fn out_of_image_points_have_zero_confidence() {
        let model = SkeletalModel::generic();
        let spec = ClipSpec {
            rig: RigPlacement {
                distance_m: 1.0,
                ..RigPlacement::default()
            },
            ..short(MotionKind::Gait, 1)
        };
        let clip = render_clip(&model, "near", &spec).unwrap();
        let hidden: Vec<&Observation2d> = clip
            .frontal
            .frames
            .iter()
            .flatten()
            .filter(|o| o.confidence == 0.0)
            .collect();
        assert!(!hidden.is_empty());
        let cam = &clip.cameras[0];
        assert!(hidden
            .iter()
            .all(|o| !o.uv.iter().all(|v| v.is_finite()) || !cam.in_image(&o.uv)));
    }

    #[test]
    fn subject_scales_are_clipped() {
        let model = SkeletalModel::generic();
        let wide = SubjectSpec {
            scale_sigma: 0.5,
            ..SubjectSpec::default()
        };
        let s = wide.resolve(&model).unwrap();
        assert!(s.to_flat().iter().all(|&f| (0.8..=1.2).contains(&f)));
        assert!(s.to_flat().iter().any(|&f| f == 0.8 || f == 1.2));
        let none = SubjectSpec {
            scale_sigma: 0.0,
            ..SubjectSpec::default()
        };
        assert_eq!(
            none.resolve(&model).unwrap(),
            ScaleSet::unit(model.segment_count())
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let model = SkeletalModel::generic();
        for spec in [
            ClipSpec {
                duration_s: 0.0,
                ..ClipSpec::default()
            },
            ClipSpec {
                noise_px: -1.0,
                ..ClipSpec::default()
            },
            ClipSpec {
                frame_rate: f64::NAN,
                ..ClipSpec::default()
            },
        ] {
            assert!(matches!(
                generate_motion(&model, &spec),
                Err(Error::InvalidArgument(_))
            ));
        }
    }
}
