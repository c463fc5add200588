pub mod eval;
pub mod fit;
pub mod gen;
pub mod gradcheck;
pub mod model;

use std::path::Path;

use anyhow::Context;
use kinefit::model::{load_model, SkeletalModel};

/// Loads `--model`, falling back to the shipped generic model.
pub fn model_or_generic(path: Option<&Path>) -> anyhow::Result<SkeletalModel> {
    match path {
        Some(p) => load_model(p).with_context(|| format!("--model {}", p.display())),
        None => Ok(SkeletalModel::generic()),
    }
}

pub fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
