use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use kinefit::io::{load_motion, load_scales};
use kinefit::kinematics::MotionSequence;
use kinefit::metrics::{evaluation_report, ClipBundle};
use kinefit::model::{ScaleSet, SkeletalModel};

use super::{create_dir, model_or_generic, write_file};
use crate::plot::{angle_traces_csv, angle_traces_svg};
use crate::Outcome;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file (default: the shipped generic model).
    #[arg(long)]
    model: Option<PathBuf>,
    /// A bundle directory (motion.csv + scales.csv) or a directory of them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth, laid out like `--pred`.
    #[arg(long)]
    truth: PathBuf,
    /// Directory for report.toml, report.csv and optional traces/plots.
    #[arg(long)]
    out: PathBuf,
    /// Write per-clip angle traces (degrees) as CSV.
    #[arg(long)]
    traces: bool,
    /// Write per-clip SVG plots of predicted against true angle traces.
    #[arg(long)]
    plots: bool,
}

struct Bundle {
    motion: MotionSequence,
    scales: ScaleSet,
}

fn is_bundle(dir: &Path) -> bool {
    dir.join("motion.csv").is_file() && dir.join("scales.csv").is_file()
}

/// Clip name → bundle directory.
fn discover(root: &Path, flag: &str) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    if !root.is_dir() {
        bail!("--{flag} {} is not a directory", root.display());
    }
    let mut out = BTreeMap::new();
    if is_bundle(root) {
        let name = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "clip".into());
        out.insert(name, root.to_path_buf());
        return Ok(out);
    }
    for entry in std::fs::read_dir(root).with_context(|| format!("--{flag} {}", root.display()))? {
        let path = entry?.path();
        if path.is_dir() && is_bundle(&path) {
            out.insert(
                path.file_name()
                    .expect("read_dir entry")
                    .to_string_lossy()
                    .into_owned(),
                path,
            );
        }
    }
    if out.is_empty() {
        bail!(
            "--{flag} {}: no motion.csv/scales.csv bundles found",
            root.display()
        );
    }
    Ok(out)
}

fn load_bundle(model: &SkeletalModel, dir: &Path) -> anyhow::Result<Bundle> {
    Ok(Bundle {
        motion: load_motion(model, dir.join("motion.csv"))?,
        scales: load_scales(model, dir.join("scales.csv"))?,
    })
}

pub fn run(args: EvalArgs) -> anyhow::Result<Outcome> {
    let model = model_or_generic(args.model.as_deref())?;
    let pred_dirs = discover(&args.pred, "pred")?;
    let truth_dirs = discover(&args.truth, "truth")?;
    // A single bundle on each side is compared regardless of directory names.
    let single = pred_dirs.len() == 1
        && truth_dirs.len() == 1
        && is_bundle(&args.pred)
        && is_bundle(&args.truth);
    if !single && pred_dirs.keys().ne(truth_dirs.keys()) {
        let only_pred: Vec<&String> = pred_dirs
            .keys()
            .filter(|k| !truth_dirs.contains_key(*k))
            .collect();
        let only_truth: Vec<&String> = truth_dirs
            .keys()
            .filter(|k| !pred_dirs.contains_key(*k))
            .collect();
        bail!("mismatched clip sets: only in --pred {only_pred:?}, only in --truth {only_truth:?}");
    }

    let mut loaded = Vec::new();
    for ((name, pd), td) in pred_dirs.iter().zip(truth_dirs.values()) {
        let pred = load_bundle(&model, pd).with_context(|| format!("--pred {}", pd.display()))?;
        let truth = load_bundle(&model, td).with_context(|| format!("--truth {}", td.display()))?;
        loaded.push((name.clone(), pred, truth));
    }
    let pairs: Vec<_> = loaded
        .iter()
        .map(|(name, p, t)| {
            (
                name.clone(),
                ClipBundle {
                    motion: &p.motion,
                    scales: &p.scales,
                },
                ClipBundle {
                    motion: &t.motion,
                    scales: &t.scales,
                },
            )
        })
        .collect();
    let report = evaluation_report(&model, &pairs)?;

    create_dir(&args.out)?;
    write_file(&args.out.join("report.toml"), &report.to_toml()?)?;
    write_file(&args.out.join("report.csv"), &report.to_csv()?)?;
    if args.traces || args.plots {
        for (name, p, t) in &loaded {
            let table = angle_traces_csv(&model, &p.motion, &t.motion)?;
            if args.traces {
                let dir = args.out.join("traces");
                create_dir(&dir)?;
                write_file(&dir.join(format!("{name}.csv")), &table)?;
            }
            if args.plots {
                let dir = args.out.join("plots");
                create_dir(&dir)?;
                write_file(
                    &dir.join(format!("{name}.svg")),
                    &angle_traces_svg(name, &table)?,
                )?;
            }
        }
    }
    print!("{report}");
    Ok(Outcome::Success)
}
