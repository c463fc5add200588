use log::{debug, info};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::filter::Butterworth;
use super::ik::{inverse_kinematics_sequence, resolve_labels};
use super::scale::fit_scales_with_prior;
use super::IKSettings;
use crate::error::{Error, Result};
use crate::kinematics::{MotionSequence, Pose};
use crate::model::{ScaleSet, SkeletalModel};
use crate::tracks::{Tracks2d, Tracks3d};
use crate::viewgeom::{triangulate_two_view, Camera};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    /// Observations below this confidence in either view are dropped.
    pub confidence_threshold: f64,
    /// Longest run of missing frames bridged by linear interpolation.
    pub max_gap: usize,
    /// Low-pass cutoff for the 3D trajectories; `None` disables smoothing.
    pub filter_cutoff_hz: Option<f64>,
    pub filter_order: usize,
    pub frame_rate: f64,
    pub scale_prior_weight: f64,
    pub ik: IKSettings,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            confidence_threshold: 0.3,
            max_gap: 5,
            filter_cutoff_hz: Some(6.0),
            filter_order: 4,
            frame_rate: 60.0,
            scale_prior_weight: 0.0,
            ik: IKSettings::default(),
        }
    }
}

/// Per-stage diagnostics of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub frames: usize,
    pub labels: usize,
    pub static_frame: usize,
    pub triangulation_mean_residual_px: f64,
    pub triangulation_max_residual_px: f64,
    pub dropped_observations: usize,
    pub interpolated_samples: usize,
    /// Zero when smoothing is disabled.
    pub filter_cutoff_hz: f64,
    pub filter_order: usize,
    pub scale_rms_m: f64,
    pub scale_iterations: usize,
    pub scale_converged: bool,
    pub ik_mean_rms_m: f64,
    pub ik_max_rms_m: f64,
    pub ik_mean_iterations: f64,
    pub ik_unconverged_frames: Vec<usize>,
}

impl PipelineReport {
    /// True when every solver stage reported convergence.
    pub fn converged(&self) -> bool {
        self.scale_converged && self.ik_unconverged_frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub scales: ScaleSet,
    pub motion: MotionSequence,
    /// Triangulated, gap-filled and smoothed targets fed to scaling and IK.
    pub targets: Tracks3d,
    pub report: PipelineReport,
}

/// Two-view 2D keypoints → triangulation → confidence gating and gap filling
/// → zero-phase smoothing → scale fit on the static frame → sequential IK.
pub fn reconstruct_sequence(
    model: &SkeletalModel,
    cam_a: &Camera,
    cam_b: &Camera,
    keypoints_a: &Tracks2d,
    keypoints_b: &Tracks2d,
    static_frame: usize,
    settings: &PipelineSettings,
) -> Result<Reconstruction> {
    settings.ik.validate()?;
    keypoints_a.check()?;
    keypoints_b.check()?;
    if keypoints_a.labels != keypoints_b.labels {
        return Err(Error::InvalidArgument(
            "the two views carry different label sets".into(),
        ));
    }
    if keypoints_a.len() != keypoints_b.len() {
        return Err(Error::DimensionMismatch {
            what: "view frame count",
            expected: keypoints_a.len(),
            actual: keypoints_b.len(),
        });
    }
    if keypoints_a.is_empty() {
        return Err(Error::MissingData("no frames".into()));
    }
    if static_frame >= keypoints_a.len() {
        return Err(Error::MissingData(format!(
            "static frame {static_frame} beyond the last frame {}",
            keypoints_a.len() - 1
        )));
    }
    resolve_labels(model, keypoints_a.labels.iter().map(String::as_str))
        .map_err(|e| e.in_stage("input"))?;

    let labels = keypoints_a.labels.clone();
    let (raw, stats) = triangulate_tracks(
        cam_a,
        cam_b,
        keypoints_a,
        keypoints_b,
        settings.confidence_threshold,
    )
    .map_err(|e| e.in_stage("triangulation"))?;
    debug!(
        "triangulated {} frames, dropped {} observations",
        raw.len(),
        stats.dropped
    );

    let (mut channels, interpolated) =
        fill_gaps(&raw, &labels, settings.max_gap).map_err(|e| e.in_stage("gap filling"))?;

    if let Some(cutoff) = settings.filter_cutoff_hz {
        let filt = Butterworth::lowpass(settings.filter_order, cutoff, settings.frame_rate)
            .map_err(|e| e.in_stage("smoothing"))?;
        for c in channels.iter_mut() {
            *c = filt.filtfilt(c).map_err(|e| e.in_stage("smoothing"))?;
        }
    }
    let targets = Tracks3d {
        labels: labels.clone(),
        frames: (0..raw.len())
            .map(|t| {
                (0..labels.len())
                    .map(|i| {
                        Vector3::new(
                            channels[3 * i][t],
                            channels[3 * i + 1][t],
                            channels[3 * i + 2][t],
                        )
                    })
                    .collect()
            })
            .collect(),
    };

    let scale_fit = fit_scales_with_prior(
        model,
        &targets.frame(static_frame),
        &Pose::default_for(model),
        &settings.ik,
        settings.scale_prior_weight,
    )
    .map_err(|e| e.at_frame(static_frame).in_stage("scaling"))?;
    info!(
        "scale fit rms {:.4} m after {} iterations",
        scale_fit.rms, scale_fit.iterations
    );

    let seq = inverse_kinematics_sequence(
        model,
        &scale_fit.scales,
        &targets,
        settings.frame_rate,
        &settings.ik,
    )
    .map_err(|e| e.in_stage("inverse kinematics"))?;

    let n = seq.frame_rms.len() as f64;
    let report = PipelineReport {
        frames: targets.len(),
        labels: labels.len(),
        static_frame,
        triangulation_mean_residual_px: stats.residual_sum / stats.count.max(1) as f64,
        triangulation_max_residual_px: stats.residual_max,
        dropped_observations: stats.dropped,
        interpolated_samples: interpolated,
        filter_cutoff_hz: settings.filter_cutoff_hz.unwrap_or(0.0),
        filter_order: settings.filter_order,
        scale_rms_m: scale_fit.rms,
        scale_iterations: scale_fit.iterations,
        scale_converged: scale_fit.converged,
        ik_mean_rms_m: seq.frame_rms.iter().sum::<f64>() / n,
        ik_max_rms_m: seq.frame_rms.iter().copied().fold(0.0, f64::max),
        ik_mean_iterations: seq.iterations.iter().sum::<usize>() as f64 / n,
        ik_unconverged_frames: seq.unconverged,
    };
    Ok(Reconstruction {
        scales: scale_fit.scales,
        motion: seq.motion,
        targets,
        report,
    })
}

#[derive(Default)]
struct TriangulationStats {
    count: usize,
    dropped: usize,
    residual_sum: f64,
    residual_max: f64,
}

type RawTracks = Vec<Vec<Option<Vector3<f64>>>>;

fn triangulate_tracks(
    cam_a: &Camera,
    cam_b: &Camera,
    a: &Tracks2d,
    b: &Tracks2d,
    threshold: f64,
) -> Result<(RawTracks, TriangulationStats)> {
    let mut stats = TriangulationStats::default();
    let mut out = Vec::with_capacity(a.len());
    for (t, (fa, fb)) in a.frames.iter().zip(&b.frames).enumerate() {
        let mut row = Vec::with_capacity(fa.len());
        for (oa, ob) in fa.iter().zip(fb) {
            if oa.confidence < threshold || ob.confidence < threshold {
                stats.dropped += 1;
                row.push(None);
                continue;
            }
            let tri =
                triangulate_two_view(cam_a, cam_b, &oa.uv, &ob.uv).map_err(|e| e.at_frame(t))?;
            stats.count += 1;
            stats.residual_sum += tri.residual_px;
            stats.residual_max = stats.residual_max.max(tri.residual_px);
            row.push(Some(tri.point));
        }
        if row.iter().all(Option::is_none) {
            return Err(Error::MissingData(format!(
                "frame {t} has no observation above confidence {threshold} in both views"
            )));
        }
        out.push(row);
    }
    Ok((out, stats))
}

/// Splits the tracks into `3·L` coordinate channels, linearly bridging
/// interior gaps and holding edge values, each up to `max_gap` frames.
fn fill_gaps(raw: &RawTracks, labels: &[String], max_gap: usize) -> Result<(Vec<Vec<f64>>, usize)> {
    let n = raw.len();
    let mut channels = vec![vec![0.0; n]; 3 * labels.len()];
    let mut filled = 0;
    for (i, label) in labels.iter().enumerate() {
        let known: Vec<usize> = (0..n).filter(|&t| raw[t][i].is_some()).collect();
        let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
            return Err(Error::MissingData(format!("`{label}` is never observed")));
        };
        let gap_error = |start: usize, len: usize| {
            Error::MissingData(format!(
                "`{label}` is missing for {len} frames from frame {start} (limit {max_gap})"
            ))
        };
        if first > max_gap {
            return Err(gap_error(0, first));
        }
        if n - 1 - last > max_gap {
            return Err(gap_error(last + 1, n - 1 - last));
        }
        for w in known.windows(2) {
            if w[1] - w[0] - 1 > max_gap {
                return Err(gap_error(w[0] + 1, w[1] - w[0] - 1));
            }
        }

        let value = |t: usize| raw[t][i].expect("index taken from known frames");
        let mut k = 0;
        for t in 0..n {
            let p = if t <= first {
                value(first)
            } else if t >= last {
                value(last)
            } else {
                while known[k + 1] < t {
                    k += 1;
                }
                let (t0, t1) = (known[k], known[k + 1]);
                let w = (t - t0) as f64 / (t1 - t0) as f64;
                value(t0) * (1.0 - w) + value(t1) * w
            };
            if raw[t][i].is_none() {
                filled += 1;
            }
            for ax in 0..3 {
                channels[3 * i + ax][t] = p[ax];
            }
        }
    }
    Ok((channels, filled))
}
