//! Dataset planning, on-disk layout and the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{next_seed, render_clip, ClipObservation, ClipSpec, MotionKind, SubjectSpec};
use crate::error::{Error, Result};
use crate::io::{load_motion, load_scales, save_motion, save_scales};
use crate::model::SkeletalModel;
use crate::tracks::{Tracks2d, Tracks3d};
use crate::viewgeom::{Camera, RigPlacement};

pub const MANIFEST_FILE: &str = "manifest.toml";
const CLIP_FILE: &str = "clip.toml";
const FORMAT_VERSION: u32 = 1;

/// Parameters of a generated dataset; every clip seed derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub subjects: usize,
    pub clips_per_subject: usize,
    pub seed: u64,
    /// Cycled through per subject.
    pub motions: Vec<MotionKind>,
    pub duration_s: f64,
    pub frame_rate: f64,
    pub static_trial_s: f64,
    pub noise_px: f64,
    pub marker_noise_m: f64,
    pub scale_sigma: f64,
    pub rig: RigPlacement,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let clip = ClipSpec::default();
        DatasetConfig {
            subjects: 1,
            clips_per_subject: 1,
            seed: 0,
            motions: MotionKind::PROCEDURAL.to_vec(),
            duration_s: clip.duration_s,
            frame_rate: clip.frame_rate,
            static_trial_s: clip.static_trial_s,
            noise_px: clip.noise_px,
            marker_noise_m: clip.marker_noise_m,
            scale_sigma: SubjectSpec::default().scale_sigma,
            rig: clip.rig,
        }
    }
}

impl DatasetConfig {
    /// Named clip specs in generation order.
    pub fn plan(&self) -> Result<Vec<(String, ClipSpec)>> {
        if self.subjects == 0 || self.clips_per_subject == 0 {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one subject and one clip".into(),
            ));
        }
        if self.motions.is_empty() {
            return Err(Error::InvalidArgument("no motions to cycle through".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.subjects * self.clips_per_subject);
        for s in 0..self.subjects {
            let subject = SubjectSpec {
                id: s,
                seed: next_seed(&mut rng),
                scale_sigma: self.scale_sigma,
                ..SubjectSpec::default()
            };
            for c in 0..self.clips_per_subject {
                let motion = self.motions[c % self.motions.len()].clone();
                let name = format!("s{s:03}_c{c:02}_{}", motion.label());
                let spec = ClipSpec {
                    seed: next_seed(&mut rng),
                    subject: subject.clone(),
                    motion,
                    duration_s: self.duration_s,
                    frame_rate: self.frame_rate,
                    static_trial_s: self.static_trial_s,
                    rig: self.rig,
                    noise_px: self.noise_px,
                    marker_noise_m: self.marker_noise_m,
                    ..ClipSpec::default()
                };
                spec.validate()?;
                out.push((name, spec));
            }
        }
        Ok(out)
    }
}

/// Renders every planned clip, in parallel across clips.
pub fn generate_dataset(
    model: &SkeletalModel,
    config: &DatasetConfig,
) -> Result<Vec<ClipObservation>> {
    config
        .plan()?
        .par_iter()
        .map(|(name, spec)| render_clip(model, name, spec).map_err(|e| e.in_clip(name)))
        .collect()
}

/// Subject-level partition in the 42 : 6 : 8 proportions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles the subjects with `seed` and cuts them into train, validation
/// and test sets. Clips of one subject never straddle sets.
pub fn split_subjects(subjects: &[usize], seed: u64) -> DatasetSplit {
    let mut ids: Vec<usize> = subjects
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len() as f64;
    let n_val = (n * 6.0 / 56.0).round() as usize;
    let n_test = (n * 8.0 / 56.0).round() as usize;
    let n_train = ids.len().saturating_sub(n_val + n_test);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    DatasetSplit {
        train: sorted(&ids[..n_train]),
        val: sorted(&ids[n_train..n_train + n_val]),
        test: sorted(&ids[n_train + n_val..]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestClip {
    pub name: String,
    /// Directory relative to the manifest.
    pub dir: String,
    pub frames: usize,
    pub static_frames: usize,
    pub static_frame: usize,
    pub clamped_samples: usize,
    pub spec: ClipSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: String,
    pub split: DatasetSplit,
    pub clips: Vec<ManifestClip>,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("manifest serialization", e))
    }

    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                context,
                format!("unsupported manifest version {}", m.format_version),
            ));
        }
        Ok(m)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_toml(&text, &path.display().to_string())
}

fn entry(clip: &ClipObservation) -> ManifestClip {
    ManifestClip {
        name: clip.name.clone(),
        dir: clip.name.clone(),
        frames: clip.motion.len(),
        static_frames: clip.static_frames,
        static_frame: clip.static_frame,
        clamped_samples: clip.clamped_samples,
        spec: clip.spec.clone(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_clip(model: &SkeletalModel, clip: &ClipObservation, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_motion(model, &clip.motion, dir.join("motion.csv"))?;
    save_scales(model, &clip.scales, dir.join("scales.csv"))?;
    write_text(&dir.join("markers.csv"), &clip.markers.to_csv()?)?;
    write_text(&dir.join("frontal.csv"), &clip.frontal.to_csv()?)?;
    write_text(&dir.join("sagittal.csv"), &clip.sagittal.to_csv()?)?;
    clip.cameras[0].save(dir.join("camera_frontal.toml"))?;
    clip.cameras[1].save(dir.join("camera_sagittal.toml"))?;
    let meta =
        toml::to_string_pretty(&entry(clip)).map_err(|e| Error::parse("clip serialization", e))?;
    write_text(&dir.join(CLIP_FILE), &meta)
}

/// Writes one directory per clip plus `manifest.toml` into `out_dir`.
/// Refuses to overwrite an existing manifest or to write two clips under
/// the same name.
pub fn write_dataset(
    model: &SkeletalModel,
    clips: &[ClipObservation],
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if clips.is_empty() {
        return Err(Error::InvalidArgument("no clips to write".into()));
    }
    let mut names = BTreeSet::new();
    if let Some(dup) = clips.iter().find(|c| !names.insert(c.name.as_str())) {
        return Err(Error::InvalidArgument(format!(
            "manifest collision: two clips named `{}`",
            dup.name
        )));
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        return Err(Error::InvalidArgument(format!(
            "manifest collision: {} already exists",
            manifest_path.display()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    clips.par_iter().try_for_each(|clip| {
        write_clip(model, clip, &out_dir.join(&clip.name)).map_err(|e| e.in_clip(&clip.name))
    })?;

    // The split shuffle is seeded from the subjects themselves so that it
    // is reproducible from the manifest alone.
    let subjects: BTreeMap<usize, u64> = clips
        .iter()
        .map(|c| (c.spec.subject.id, c.spec.subject.seed))
        .collect();
    let split_seed = subjects
        .values()
        .fold(0x9e37_79b9_7f4a_7c15_u64, |h, s| h.rotate_left(5) ^ s);
    let ids: Vec<usize> = subjects.keys().copied().collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.name().to_owned(),
        split: split_subjects(&ids, split_seed),
        clips: clips.iter().map(entry).collect(),
    };
    write_text(&manifest_path, &manifest.to_toml()?)?;
    Ok(manifest)
}

/// Re-renders every clip listed in a manifest into `out_dir`.
pub fn regenerate(
    model: &SkeletalModel,
    manifest: &Manifest,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    if manifest.model != model.name() {
        return Err(Error::InvalidArgument(format!(
            "manifest was generated with model `{}`, got `{}`",
            manifest.model,
            model.name()
        )));
    }
    let clips = manifest
        .clips
        .par_iter()
        .map(|c| render_clip(model, &c.name, &c.spec).map_err(|e| e.in_clip(&c.name)))
        .collect::<Result<Vec<_>>>()?;
    write_dataset(model, &clips, out_dir)
}

/// Reads a clip directory written by [`write_dataset`].
pub fn load_clip(model: &SkeletalModel, dir: impl AsRef<Path>) -> Result<ClipObservation> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path)
            .map_err(|e| Error::io(&path, e))
            .map(|text| (text, path.display().to_string()))
    };
    let (meta_text, meta_ctx) = read(CLIP_FILE)?;
    let meta: ManifestClip = toml::from_str(&meta_text).map_err(|e| Error::parse(meta_ctx, e))?;
    let (markers, ctx) = read("markers.csv")?;
    let markers = Tracks3d::from_csv(&markers, &ctx)?;
    let (frontal, ctx) = read("frontal.csv")?;
    let frontal = Tracks2d::from_csv(&frontal, &ctx)?;
    let (sagittal, ctx) = read("sagittal.csv")?;
    let sagittal = Tracks2d::from_csv(&sagittal, &ctx)?;
    Ok(ClipObservation {
        name: meta.name,
        spec: meta.spec,
        motion: load_motion(model, dir.join("motion.csv"))?,
        scales: load_scales(model, dir.join("scales.csv"))?,
        markers,
        frontal,
        sagittal,
        cameras: [
            Camera::load(dir.join("camera_frontal.toml"))?,
            Camera::load(dir.join("camera_sagittal.toml"))?,
        ],
        static_frames: meta.static_frames,
        static_frame: meta.static_frame,
        clamped_samples: meta.clamped_samples,
    })
}
