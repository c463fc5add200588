//! Articulated skeletal model: segment tree, coordinates, markers and the
//! derived keypoint layout.
//!
//! A model is built from a [`ModelDocument`] (the on-disk representation,
//! see `docs/model-format.md`), which resolves names to indices. Structural
//! invariants are checked separately by [`validate_model`] so that an
//! invalid model can still be inspected and reported on. [`load_model`]
//! combines both and refuses invalid files.

mod document;
mod scales;
mod validate;

use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use document::{CoordinateDoc, MarkerDoc, ModelDocument, SegmentDoc};
pub use scales::{ScaleBounds, ScaleSet};
pub use validate::{validate_model, ValidationReport, Violation};

const GENERIC_MODEL: &str = include_str!("../../data/generic_full_body.kmodel");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateKind {
    Rotation,
    Translation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateClass {
    Free,
    Constrained,
}

/// A scalar degree of freedom. Rotations are stored in radians, translations
/// in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub name: String,
    pub kind: CoordinateKind,
    pub class: CoordinateClass,
    pub range: Option<(f64, f64)>,
    pub default_value: f64,
}

impl Coordinate {
    pub fn is_rotation(&self) -> bool {
        self.kind == CoordinateKind::Rotation
    }

    pub fn is_constrained(&self) -> bool {
        self.class == CoordinateClass::Constrained
    }

    pub fn clamp(&self, value: f64) -> f64 {
        match self.range {
            Some((lo, hi)) if self.is_constrained() => value.clamp(lo, hi),
            _ => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodySegment {
    pub name: String,
    pub parent: Option<usize>,
    /// Joint center expressed in the parent frame, unscaled.
    pub joint_offset_in_parent: Vector3<f64>,
    /// Mass center in this segment's frame, unscaled.
    pub mass_center_offset: Vector3<f64>,
    /// Indices into [`SkeletalModel::coordinates`], in application order.
    pub joint_coordinates: Vec<usize>,
    /// One axis per rotational coordinate, in the order they appear in
    /// `joint_coordinates`.
    pub rotation_axes: Vec<Vector3<f64>>,
    /// One axis per translational coordinate (root only).
    pub translation_axes: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub name: String,
    pub segment: usize,
    pub offset: Vector3<f64>,
}

/// A point rigidly attached to a segment, given by an unscaled local offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub segment: usize,
    pub offset: Vector3<f64>,
}

/// Where a keypoint comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeypointKind {
    JointCenter,
    MassCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CoordinateSlot {
    pub segment: usize,
    /// Position among the segment's rotational (or translational) axes.
    pub axis: usize,
}

#[derive(Debug, Clone)]
pub struct SkeletalModel {
    name: String,
    segments: Vec<BodySegment>,
    coordinates: Vec<Coordinate>,
    markers: Vec<Marker>,
    declared_free_rotational: Option<usize>,
    // Derived tables, rebuilt by `from_parts`.
    topo_order: Vec<usize>,
    roots: Vec<usize>,
    coord_slots: Vec<Option<CoordinateSlot>>,
    coord_refcount: Vec<usize>,
    /// `ancestry[s][a]`: the child of `s` on the path from `s` down to `a`,
    /// `Some(a)` when `s == a`, `None` when `s` is not an ancestor of `a`.
    ancestry: Vec<Vec<Option<usize>>>,
}

impl SkeletalModel {
    /// Assembles a model from resolved parts without checking invariants.
    pub fn from_parts(
        name: String,
        segments: Vec<BodySegment>,
        coordinates: Vec<Coordinate>,
        markers: Vec<Marker>,
        declared_free_rotational: Option<usize>,
    ) -> Self {
        let b = segments.len();
        let roots: Vec<usize> = (0..b).filter(|&i| segments[i].parent.is_none()).collect();

        let mut children = vec![Vec::new(); b];
        for (i, seg) in segments.iter().enumerate() {
            if let Some(p) = seg.parent {
                if p < b {
                    children[p].push(i);
                }
            }
        }
        // Breadth-first from the roots; segments on a cycle are never reached.
        let mut topo_order = Vec::with_capacity(b);
        let mut queue: std::collections::VecDeque<usize> = roots.iter().copied().collect();
        let mut seen = vec![false; b];
        while let Some(s) = queue.pop_front() {
            if std::mem::replace(&mut seen[s], true) {
                continue;
            }
            topo_order.push(s);
            queue.extend(children[s].iter().copied());
        }

        let mut ancestry = vec![vec![None; b]; b];
        for &a in &topo_order {
            ancestry[a][a] = Some(a);
            let mut below = a;
            let mut cur = segments[a].parent;
            while let Some(s) = cur {
                ancestry[s][a] = Some(below);
                below = s;
                cur = segments[s].parent;
            }
        }

        let mut coord_slots = vec![None; coordinates.len()];
        let mut coord_refcount = vec![0; coordinates.len()];
        for (si, seg) in segments.iter().enumerate() {
            let (mut r, mut t) = (0, 0);
            for &c in &seg.joint_coordinates {
                if c >= coordinates.len() {
                    continue;
                }
                coord_refcount[c] += 1;
                let axis = if coordinates[c].is_rotation() {
                    r += 1;
                    r - 1
                } else {
                    t += 1;
                    t - 1
                };
                coord_slots[c] = Some(CoordinateSlot { segment: si, axis });
            }
        }

        SkeletalModel {
            name,
            segments,
            coordinates,
            markers,
            declared_free_rotational,
            topo_order,
            roots,
            coord_slots,
            coord_refcount,
            ancestry,
        }
    }

    /// Resolves a parsed document. Fails only on dangling name references;
    /// invariant checks are left to [`validate_model`].
    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        doc.resolve()
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument::from_model(self)
    }

    /// The shipped generic full-body model (36 coordinates, 22 segments).
    pub fn generic() -> Self {
        parse_model(GENERIC_MODEL, "generic model").expect("shipped generic model must be valid")
    }

    pub fn generic_source() -> &'static str {
        GENERIC_MODEL
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn segments(&self) -> &[BodySegment] {
        &self.segments
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coordinates
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn declared_free_rotational(&self) -> Option<usize> {
        self.declared_free_rotational
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn coordinate_count(&self) -> usize {
        self.coordinates.len()
    }

    pub fn keypoint_count(&self) -> usize {
        2 * self.segments.len()
    }

    pub fn root(&self) -> usize {
        self.roots.first().copied().unwrap_or(0)
    }

    pub(crate) fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// Segments ordered parents-first.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub(crate) fn coordinate_slot(&self, coord: usize) -> Option<CoordinateSlot> {
        self.coord_slots[coord]
    }

    pub(crate) fn coordinate_refcount(&self, coord: usize) -> usize {
        self.coord_refcount[coord]
    }

    /// Child of `ancestor` on the way to `descendant` (or `descendant` itself
    /// when the two are equal); `None` if not an ancestor-or-self.
    pub(crate) fn path_child(&self, ancestor: usize, descendant: usize) -> Option<usize> {
        self.ancestry[ancestor][descendant]
    }

    pub fn is_ancestor_or_self(&self, ancestor: usize, descendant: usize) -> bool {
        self.ancestry[ancestor][descendant].is_some()
    }

    pub fn segment_index(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    pub fn coordinate_index(&self, name: &str) -> Option<usize> {
        self.coordinates.iter().position(|c| c.name == name)
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.name == name)
    }

    pub fn coordinate_names(&self) -> Vec<&str> {
        self.coordinates.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn rotational_indices(&self) -> Vec<usize> {
        (0..self.coordinates.len())
            .filter(|&i| self.coordinates[i].is_rotation())
            .collect()
    }

    /// Index of the root joint-center keypoint.
    pub fn root_keypoint(&self) -> usize {
        self.root()
    }

    /// Keypoint labels: joint centers in segment order, then mass centers.
    pub fn keypoint_labels(&self) -> Vec<String> {
        let joints = self.segments.iter().map(|s| format!("{}_joint", s.name));
        let coms = self.segments.iter().map(|s| format!("{}_com", s.name));
        joints.chain(coms).collect()
    }

    pub fn keypoint_kind(&self, k: usize) -> KeypointKind {
        if k < self.segments.len() {
            KeypointKind::JointCenter
        } else {
            KeypointKind::MassCenter
        }
    }

    /// The attachment of keypoint `k`. A joint center belongs to the parent
    /// segment (it moves with the parent and is scaled by it); the root joint
    /// center is the root origin.
    pub fn keypoint_anchor(&self, k: usize) -> Anchor {
        let b = self.segments.len();
        if k < b {
            let seg = &self.segments[k];
            match seg.parent {
                Some(p) => Anchor {
                    segment: p,
                    offset: seg.joint_offset_in_parent,
                },
                None => Anchor {
                    segment: k,
                    offset: Vector3::zeros(),
                },
            }
        } else {
            let s = k - b;
            Anchor {
                segment: s,
                offset: self.segments[s].mass_center_offset,
            }
        }
    }

    pub fn marker_anchor(&self, m: usize) -> Anchor {
        let marker = &self.markers[m];
        Anchor {
            segment: marker.segment,
            offset: marker.offset,
        }
    }

    /// Resolves a target label against marker names first, then keypoint
    /// labels.
    pub fn anchor_for_label(&self, label: &str) -> Option<Anchor> {
        if let Some(m) = self.marker_index(label) {
            return Some(self.marker_anchor(m));
        }
        let b = self.segments.len();
        if let Some(seg) = label.strip_suffix("_joint") {
            return self.segment_index(seg).map(|s| self.keypoint_anchor(s));
        }
        if let Some(seg) = label.strip_suffix("_com") {
            return self.segment_index(seg).map(|s| self.keypoint_anchor(b + s));
        }
        None
    }

    /// Default coordinate values in model order.
    pub fn default_values(&self) -> Vec<f64> {
        self.coordinates.iter().map(|c| c.default_value).collect()
    }

    /// Free rotational and constrained coordinate index sets.
    pub fn free_constrained_split(&self) -> CoordinateSplit {
        free_constrained_split(self)
    }
}

/// Partition of the rotational coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateSplit {
    pub free_rotational: Vec<usize>,
    pub constrained: Vec<usize>,
}

pub fn free_constrained_split(model: &SkeletalModel) -> CoordinateSplit {
    let mut free_rotational = Vec::new();
    let mut constrained = Vec::new();
    for (i, c) in model.coordinates.iter().enumerate() {
        match (c.kind, c.class) {
            (_, CoordinateClass::Constrained) => constrained.push(i),
            (CoordinateKind::Rotation, CoordinateClass::Free) => free_rotational.push(i),
            (CoordinateKind::Translation, CoordinateClass::Free) => {}
        }
    }
    CoordinateSplit {
        free_rotational,
        constrained,
    }
}

fn parse_model(text: &str, context: &str) -> Result<SkeletalModel> {
    let doc = ModelDocument::from_toml(text, context)?;
    let model = doc.resolve()?;
    let report = validate_model(&model);
    if let Some(first) = report.violations.first() {
        return Err(Error::InvalidModel(format!(
            "{context}: {first} ({} violation(s) total)",
            report.violations.len()
        )));
    }
    Ok(model)
}

/// Reads, resolves and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<SkeletalModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, &path.display().to_string())
}

pub fn save_model(model: &SkeletalModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model.to_document().to_toml()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl fmt::Display for SkeletalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let split = self.free_constrained_split();
        write!(
            f,
            "{}: {} coordinates, {} segments, {} keypoints, {} markers, {} free rotational, {} constrained",
            self.name,
            self.coordinate_count(),
            self.segment_count(),
            self.keypoint_count(),
            self.markers.len(),
            split.free_rotational.len(),
            split.constrained.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_model_dimensions() {
        let model = SkeletalModel::generic();
        assert_eq!(model.coordinate_count(), 36);
        assert_eq!(model.segment_count(), 22);
        assert_eq!(model.keypoint_count(), 44);
        assert_eq!(model.keypoint_labels().len(), 44);
        assert!(validate_model(&model).is_empty());
    }

    #[test]
    fn generic_split_partitions_rotations() {
        let model = SkeletalModel::generic();
        let split = model.free_constrained_split();
        assert_eq!(split.free_rotational.len(), 9);
        let mut all: Vec<usize> = split
            .free_rotational
            .iter()
            .chain(split.constrained.iter())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, model.rotational_indices());
    }

    #[test]
    fn all_constrained_model_has_no_free_set() {
        let mut doc = ModelDocument::from_toml(SkeletalModel::generic_source(), "generic").unwrap();
        for c in &mut doc.coordinates {
            if c.kind == CoordinateKind::Rotation {
                c.class = CoordinateClass::Constrained;
                c.range.get_or_insert([-180.0, 180.0]);
            }
        }
        doc.free_rotational_count = None;
        let model = doc.resolve().unwrap();
        assert!(validate_model(&model).is_empty());
        assert!(model.free_constrained_split().free_rotational.is_empty());
    }

    #[test]
    fn keypoint_order_joints_then_mass_centers() {
        let model = SkeletalModel::generic();
        let labels = model.keypoint_labels();
        assert_eq!(labels[0], "pelvis_joint");
        assert_eq!(labels[22], "pelvis_com");
        assert_eq!(model.keypoint_kind(21), KeypointKind::JointCenter);
        assert_eq!(model.keypoint_kind(22), KeypointKind::MassCenter);
    }

    #[test]
    fn labels_resolve_to_markers_and_keypoints() {
        let model = SkeletalModel::generic();
        assert!(model.anchor_for_label("RASI").is_some());
        let knee = model.anchor_for_label("tibia_r_joint").unwrap();
        assert_eq!(knee.segment, model.segment_index("femur_r").unwrap());
        assert!(model.anchor_for_label("nope").is_none());
    }
}
