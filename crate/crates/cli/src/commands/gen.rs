use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use kinefit::synthgen::{generate_dataset, write_dataset, MotionKind, MANIFEST_FILE};

use super::model_or_generic;
use crate::config::Config;
use crate::Outcome;

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Model file (default: the shipped generic model).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory; must not already hold a manifest.
    #[arg(long)]
    out: PathBuf,
    /// Number of synthetic subjects.
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    clips_per_subject: Option<usize>,
    /// Gaussian pixel noise standard deviation.
    #[arg(long, value_name = "SIGMA")]
    noise_px: Option<f64>,
    /// Gaussian noise on the exported 3D markers, meters.
    #[arg(long, value_name = "SIGMA")]
    marker_noise_m: Option<f64>,
    /// Motion length per clip, excluding the static trial.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Sampling rate, frames per second.
    #[arg(long)]
    fps: Option<f64>,
    /// Motions cycled through per subject: gait, squat, arm-wave.
    #[arg(long, value_delimiter = ',', value_parser = parse_motion)]
    motions: Option<Vec<MotionKind>>,
    /// Master seed; falls back to KINEFIT_SEED, then the config file.
    #[arg(long, env = "KINEFIT_SEED")]
    seed: Option<u64>,
}

fn parse_motion(s: &str) -> Result<MotionKind, String> {
    MotionKind::PROCEDURAL
        .into_iter()
        .find(|m| m.label() == s)
        .ok_or_else(|| format!("unknown motion `{s}` (expected gait, squat or arm-wave)"))
}

pub fn run(args: GenArgs, config: &Config) -> anyhow::Result<Outcome> {
    let model = model_or_generic(args.model.as_deref())?;
    let mut cfg = config.gen.clone();
    cfg.seed = config.seed(args.seed);
    if let Some(v) = args.subjects {
        cfg.subjects = v;
    }
    if let Some(v) = args.clips_per_subject {
        cfg.clips_per_subject = v;
    }
    if let Some(v) = args.noise_px {
        cfg.noise_px = v;
    }
    if let Some(v) = args.marker_noise_m {
        cfg.marker_noise_m = v;
    }
    if let Some(v) = args.duration_s {
        cfg.duration_s = v;
    }
    if let Some(v) = args.fps {
        cfg.frame_rate = v;
    }
    if let Some(v) = args.motions {
        cfg.motions = v;
    }

    let clips = generate_dataset(&model, &cfg).context("generation failed")?;
    let manifest = write_dataset(&model, &clips, &args.out).context("cannot write dataset")?;
    log::info!("wrote {} clips", manifest.clips.len());
    println!("{}", args.out.join(MANIFEST_FILE).display());
    Ok(Outcome::Success)
}
