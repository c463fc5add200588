use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use kinefit::fitting::{reconstruct_sequence, PipelineReport, PipelineSettings, Reconstruction};
use kinefit::io::{save_motion, save_scales};
use kinefit::metrics::{evaluate_clip, ClipBundle, ClipMetrics};
use kinefit::model::SkeletalModel;
use kinefit::synthgen::{load_clip, load_manifest, ClipObservation, MANIFEST_FILE};
use kinefit::tracks::Tracks2d;
use kinefit::viewgeom::Camera;
use rayon::prelude::*;
use serde::Serialize;

use super::{create_dir, model_or_generic, write_file};
use crate::config::Config;
use crate::Outcome;

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Model file (default: the shipped generic model).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory for motion.csv, scales.csv and report.toml.
    #[arg(long)]
    out: PathBuf,

    /// A clip directory written by `kinefit gen`.
    #[arg(long, conflicts_with_all = ["dataset", "frontal", "sagittal", "camera_frontal", "camera_sagittal"])]
    clip: Option<PathBuf>,
    /// A dataset directory; every clip in its manifest is fitted into
    /// `<out>/<clip>/`.
    #[arg(long, conflicts_with_all = ["frontal", "sagittal", "camera_frontal", "camera_sagittal"])]
    dataset: Option<PathBuf>,

    /// Frontal-view 2D keypoint CSV.
    #[arg(long, required_unless_present_any = ["clip", "dataset"])]
    frontal: Option<PathBuf>,
    /// Sagittal-view 2D keypoint CSV.
    #[arg(long, required_unless_present_any = ["clip", "dataset"])]
    sagittal: Option<PathBuf>,
    /// Frontal camera TOML.
    #[arg(long, required_unless_present_any = ["clip", "dataset"])]
    camera_frontal: Option<PathBuf>,
    /// Sagittal camera TOML.
    #[arg(long, required_unless_present_any = ["clip", "dataset"])]
    camera_sagittal: Option<PathBuf>,
    /// Frame used for scaling with explicit files (default 0); clips carry
    /// their own static trial.
    #[arg(long)]
    static_frame: Option<usize>,
    /// Frame rate of explicit keypoint files.
    #[arg(long)]
    fps: Option<f64>,

    /// Low-pass cutoff for the triangulated trajectories.
    #[arg(long, value_name = "HZ", conflicts_with = "no_filter")]
    filter_hz: Option<f64>,
    /// Skip trajectory smoothing.
    #[arg(long)]
    no_filter: bool,
    /// Observations below this confidence in either view are dropped.
    #[arg(long)]
    confidence: Option<f64>,

    /// Compare the result against the bundled ground truth of `--clip` or
    /// `--dataset` clips.
    #[arg(long)]
    self_eval: bool,
}

#[derive(Serialize)]
struct FitReport<'a> {
    input: String,
    pipeline: &'a PipelineReport,
    settings: &'a PipelineSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    self_eval: Option<ClipMetrics>,
}

fn load_tracks(path: &Path, flag: &str) -> anyhow::Result<Tracks2d> {
    Tracks2d::load(path).with_context(|| format!("--{flag} {}", path.display()))
}

fn load_camera(path: &Path, flag: &str) -> anyhow::Result<Camera> {
    Camera::load(path).with_context(|| format!("--{flag} {}", path.display()))
}

fn write_outputs(
    model: &SkeletalModel,
    out: &Path,
    input: String,
    rec: &Reconstruction,
    settings: &PipelineSettings,
    self_eval: Option<ClipMetrics>,
) -> anyhow::Result<()> {
    create_dir(out)?;
    save_motion(model, &rec.motion, out.join("motion.csv"))?;
    save_scales(model, &rec.scales, out.join("scales.csv"))?;
    let report = FitReport {
        input,
        pipeline: &rec.report,
        settings,
        self_eval,
    };
    write_file(&out.join("report.toml"), &toml::to_string_pretty(&report)?)
}

fn fit_clip(
    model: &SkeletalModel,
    clip: &ClipObservation,
    settings: &PipelineSettings,
    self_eval: bool,
) -> anyhow::Result<(Reconstruction, Option<ClipMetrics>)> {
    let settings = PipelineSettings {
        frame_rate: clip.motion.frame_rate,
        ..*settings
    };
    let rec = reconstruct_sequence(
        model,
        &clip.cameras[0],
        &clip.cameras[1],
        &clip.frontal,
        &clip.sagittal,
        clip.static_frame,
        &settings,
    )?;
    let metrics = if self_eval {
        Some(evaluate_clip(
            &clip.name,
            model,
            ClipBundle {
                motion: &rec.motion,
                scales: &rec.scales,
            },
            ClipBundle {
                motion: &clip.motion,
                scales: &clip.scales,
            },
        )?)
    } else {
        None
    };
    Ok((rec, metrics))
}

fn announce(name: &str, rec: &Reconstruction, metrics: Option<&ClipMetrics>) {
    let r = &rec.report;
    print!(
        "{name}: {} frames, scale rms {:.2} mm, IK rms mean {:.2} mm, {} unconverged frames",
        r.frames,
        1000.0 * r.scale_rms_m,
        1000.0 * r.ik_mean_rms_m,
        r.ik_unconverged_frames.len()
    );
    if let Some(m) = metrics {
        print!(
            "; MAE_angle {:.3} deg, PA-MPJPE {:.3} mm, MPJVE {:.3} mm/s",
            m.mae_angle_deg, m.pa_mpjpe_mm, m.mpjve_mm_s
        );
    }
    println!();
}

pub fn run(args: FitArgs, config: &Config) -> anyhow::Result<Outcome> {
    let model = model_or_generic(args.model.as_deref())?;
    let mut settings = config.fit;
    if args.no_filter {
        settings.filter_cutoff_hz = None;
    } else if let Some(hz) = args.filter_hz {
        settings.filter_cutoff_hz = Some(hz);
    }
    if let Some(c) = args.confidence {
        settings.confidence_threshold = c;
    }
    if let Some(fps) = args.fps {
        settings.frame_rate = fps;
    }

    if args.self_eval && args.clip.is_none() && args.dataset.is_none() {
        bail!("--self-eval needs --clip or --dataset");
    }
    let mut converged = true;
    if let Some(dir) = &args.clip {
        let clip = load_clip(&model, dir).with_context(|| format!("--clip {}", dir.display()))?;
        let (rec, metrics) = fit_clip(&model, &clip, &settings, args.self_eval)?;
        announce(&clip.name, &rec, metrics.as_ref());
        converged &= rec.report.converged();
        let used = PipelineSettings {
            frame_rate: clip.motion.frame_rate,
            ..settings
        };
        write_outputs(
            &model,
            &args.out,
            dir.display().to_string(),
            &rec,
            &used,
            metrics,
        )?;
    } else if let Some(root) = &args.dataset {
        let manifest = load_manifest(root.join(MANIFEST_FILE))
            .with_context(|| format!("--dataset {}", root.display()))?;
        if manifest.model != model.name() {
            bail!(
                "--dataset was generated with model `{}`, fitting with `{}`",
                manifest.model,
                model.name()
            );
        }
        let results = manifest
            .clips
            .par_iter()
            .map(|entry| -> anyhow::Result<bool> {
                let dir = root.join(&entry.dir);
                let clip =
                    load_clip(&model, &dir).with_context(|| format!("clip {}", dir.display()))?;
                let (rec, metrics) = fit_clip(&model, &clip, &settings, args.self_eval)
                    .with_context(|| format!("clip `{}`", clip.name))?;
                announce(&clip.name, &rec, metrics.as_ref());
                let used = PipelineSettings {
                    frame_rate: clip.motion.frame_rate,
                    ..settings
                };
                write_outputs(
                    &model,
                    &args.out.join(&entry.dir),
                    dir.display().to_string(),
                    &rec,
                    &used,
                    metrics,
                )?;
                Ok(rec.report.converged())
            })
            .collect::<anyhow::Result<Vec<bool>>>()?;
        converged = results.into_iter().all(|c| c);
    } else {
        let (Some(fa), Some(fb), Some(ca), Some(cb)) = (
            &args.frontal,
            &args.sagittal,
            &args.camera_frontal,
            &args.camera_sagittal,
        ) else {
            bail!("--frontal, --sagittal, --camera-frontal and --camera-sagittal are required without --clip");
        };
        let kp_a = load_tracks(fa, "frontal")?;
        let kp_b = load_tracks(fb, "sagittal")?;
        let cam_a = load_camera(ca, "camera-frontal")?;
        let cam_b = load_camera(cb, "camera-sagittal")?;
        let rec = reconstruct_sequence(
            &model,
            &cam_a,
            &cam_b,
            &kp_a,
            &kp_b,
            args.static_frame.unwrap_or(0),
            &settings,
        )?;
        announce(&fa.display().to_string(), &rec, None);
        converged = rec.report.converged();
        write_outputs(
            &model,
            &args.out,
            fa.display().to_string(),
            &rec,
            &settings,
            None,
        )?;
    }

    if converged {
        Ok(Outcome::Success)
    } else {
        eprintln!("warning: some solver stages did not converge; see report.toml");
        Ok(Outcome::NumericalFailure)
    }
}
