use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BodySegment, Coordinate, CoordinateClass, CoordinateKind, Marker, SkeletalModel};
use crate::error::{Error, Result};

/// On-disk model representation. Rotational ranges and defaults are in
/// degrees; everything else is SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_rotational_count: Option<usize>,
    pub coordinates: Vec<CoordinateDoc>,
    pub segments: Vec<SegmentDoc>,
    #[serde(default)]
    pub markers: Vec<MarkerDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateDoc {
    pub name: String,
    pub kind: CoordinateKind,
    pub class: CoordinateClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default)]
    pub default_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub joint_offset_in_parent: [f64; 3],
    pub mass_center_offset: [f64; 3],
    #[serde(default)]
    pub joint_coordinates: Vec<String>,
    #[serde(default)]
    pub rotation_axes: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub translation_axes: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerDoc {
    pub name: String,
    pub segment: String,
    pub offset: [f64; 3],
}

impl ModelDocument {
    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(context, e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("model serialization", e))
    }

    pub(super) fn resolve(&self) -> Result<SkeletalModel> {
        let coord_index = index_names(self.coordinates.iter().map(|c| &c.name), "coordinate")?;
        let seg_index = index_names(self.segments.iter().map(|s| &s.name), "segment")?;
        index_names(self.markers.iter().map(|m| &m.name), "marker")?;

        let coordinates = self
            .coordinates
            .iter()
            .map(|c| {
                let to_internal = |v: f64| match c.kind {
                    CoordinateKind::Rotation => v.to_radians(),
                    CoordinateKind::Translation => v,
                };
                Coordinate {
                    name: c.name.clone(),
                    kind: c.kind,
                    class: c.class,
                    range: c.range.map(|[lo, hi]| (to_internal(lo), to_internal(hi))),
                    default_value: to_internal(c.default_value),
                }
            })
            .collect();

        let mut segments = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let parent = match &s.parent {
                Some(p) => Some(*seg_index.get(p.as_str()).ok_or_else(|| {
                    Error::parse(
                        format!("segment `{}` field `parent`", s.name),
                        format!("unknown segment `{p}`"),
                    )
                })?),
                None => None,
            };
            let joint_coordinates = s
                .joint_coordinates
                .iter()
                .map(|c| {
                    coord_index.get(c.as_str()).copied().ok_or_else(|| {
                        Error::parse(
                            format!("segment `{}` field `joint_coordinates`", s.name),
                            format!("unknown coordinate `{c}`"),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            segments.push(BodySegment {
                name: s.name.clone(),
                parent,
                joint_offset_in_parent: Vector3::from(s.joint_offset_in_parent),
                mass_center_offset: Vector3::from(s.mass_center_offset),
                joint_coordinates,
                rotation_axes: s.rotation_axes.iter().map(|a| Vector3::from(*a)).collect(),
                translation_axes: s
                    .translation_axes
                    .iter()
                    .map(|a| Vector3::from(*a))
                    .collect(),
            });
        }

        let markers = self
            .markers
            .iter()
            .map(|m| {
                let segment = *seg_index.get(m.segment.as_str()).ok_or_else(|| {
                    Error::parse(
                        format!("marker `{}` field `segment`", m.name),
                        format!("unknown segment `{}`", m.segment),
                    )
                })?;
                Ok(Marker {
                    name: m.name.clone(),
                    segment,
                    offset: Vector3::from(m.offset),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(SkeletalModel::from_parts(
            self.name.clone(),
            segments,
            coordinates,
            markers,
            self.free_rotational_count,
        ))
    }

    pub(super) fn from_model(model: &SkeletalModel) -> Self {
        let coordinates = model
            .coordinates()
            .iter()
            .map(|c| {
                let to_file = |v: f64| match c.kind {
                    CoordinateKind::Rotation => v.to_degrees(),
                    CoordinateKind::Translation => v,
                };
                CoordinateDoc {
                    name: c.name.clone(),
                    kind: c.kind,
                    class: c.class,
                    range: c.range.map(|(lo, hi)| [to_file(lo), to_file(hi)]),
                    default_value: to_file(c.default_value),
                }
            })
            .collect();
        let segs = model.segments();
        let segments = segs
            .iter()
            .map(|s| SegmentDoc {
                name: s.name.clone(),
                parent: s.parent.map(|p| segs[p].name.clone()),
                joint_offset_in_parent: s.joint_offset_in_parent.into(),
                mass_center_offset: s.mass_center_offset.into(),
                joint_coordinates: s
                    .joint_coordinates
                    .iter()
                    .map(|&c| model.coordinates()[c].name.clone())
                    .collect(),
                rotation_axes: s.rotation_axes.iter().map(|a| (*a).into()).collect(),
                translation_axes: s.translation_axes.iter().map(|a| (*a).into()).collect(),
            })
            .collect();
        let markers = model
            .markers()
            .iter()
            .map(|m| MarkerDoc {
                name: m.name.clone(),
                segment: segs[m.segment].name.clone(),
                offset: m.offset.into(),
            })
            .collect();
        ModelDocument {
            name: model.name().to_owned(),
            free_rotational_count: model.declared_free_rotational(),
            coordinates,
            segments,
            markers,
        }
    }
}

fn index_names<'a>(
    names: impl Iterator<Item = &'a String>,
    what: &str,
) -> Result<HashMap<&'a str, usize>> {
    let mut map = HashMap::new();
    for (i, n) in names.enumerate() {
        if map.insert(n.as_str(), i).is_some() {
            return Err(Error::parse(
                format!("{what} list"),
                format!("duplicate {what} name `{n}`"),
            ));
        }
    }
    Ok(map)
}
