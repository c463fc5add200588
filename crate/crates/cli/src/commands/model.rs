use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Subcommand;
use kinefit::model::{load_model, save_model, validate_model, SkeletalModel};

use crate::Outcome;

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Parse and validate a model file, then print its dimensions.
    Validate { path: PathBuf },
    /// Write the shipped generic full-body model to a file.
    Export { out: PathBuf },
}

fn summary(model: &SkeletalModel) -> String {
    let split = model.free_constrained_split();
    format!(
        "model `{}`: J = {} coordinates ({} free rotational, {} constrained), B = {} segments, K = {} keypoints, {} markers",
        model.name(),
        model.coordinate_count(),
        split.free_rotational.len(),
        split.constrained.len(),
        model.segment_count(),
        model.keypoint_count(),
        model.markers().len()
    )
}

pub fn run(cmd: ModelCommand) -> anyhow::Result<Outcome> {
    match cmd {
        ModelCommand::Validate { path } => {
            let model =
                load_model(&path).with_context(|| format!("cannot load {}", path.display()))?;
            let report = validate_model(&model);
            if !report.is_empty() {
                bail!("{} failed validation:\n{report}", path.display());
            }
            println!("{}", summary(&model));
            println!("valid");
        }
        ModelCommand::Export { out } => {
            let model = SkeletalModel::generic();
            save_model(&model, &out).with_context(|| format!("cannot write {}", out.display()))?;
            println!("{}", summary(&model));
            println!("wrote {}", out.display());
        }
    }
    Ok(Outcome::Success)
}
