use std::fmt;

use super::{CoordinateClass, SkeletalModel};

const AXIS_UNIT_TOL: f64 = 1e-9;
const MAX_JOINT_COORDINATES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ConstrainedWithoutRange {
        coordinate: String,
    },
    FreeWithRange {
        coordinate: String,
    },
    DegenerateRange {
        coordinate: String,
        min: f64,
        max: f64,
    },
    DefaultOutOfRange {
        coordinate: String,
        value: f64,
    },
    NonFiniteValue {
        owner: String,
    },
    NonUnitAxis {
        segment: String,
        axis: usize,
        norm: f64,
    },
    AxisCountMismatch {
        segment: String,
        kind: &'static str,
        coordinates: usize,
        axes: usize,
    },
    TooManyCoordinates {
        segment: String,
        count: usize,
    },
    TranslationOffRoot {
        segment: String,
        coordinate: String,
    },
    RootCount {
        count: usize,
    },
    Cycle {
        segments: Vec<String>,
    },
    CoordinateReferences {
        coordinate: String,
        count: usize,
    },
    FreeCountMismatch {
        declared: usize,
        actual: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            ConstrainedWithoutRange { coordinate } => {
                write!(f, "constrained coordinate `{coordinate}` has no range")
            }
            FreeWithRange { coordinate } => {
                write!(f, "free coordinate `{coordinate}` must not declare a range")
            }
            DegenerateRange {
                coordinate,
                min,
                max,
            } => {
                write!(
                    f,
                    "coordinate `{coordinate}` range [{min}, {max}] is empty or degenerate"
                )
            }
            DefaultOutOfRange { coordinate, value } => {
                write!(
                    f,
                    "coordinate `{coordinate}` default {value} lies outside its range"
                )
            }
            NonFiniteValue { owner } => write!(f, "non-finite value in {owner}"),
            NonUnitAxis {
                segment,
                axis,
                norm,
            } => {
                write!(
                    f,
                    "segment `{segment}` axis {axis} has norm {norm}, expected 1"
                )
            }
            AxisCountMismatch {
                segment,
                kind,
                coordinates,
                axes,
            } => write!(
                f,
                "segment `{segment}` has {coordinates} {kind} coordinate(s) but {axes} {kind} axes"
            ),
            TooManyCoordinates { segment, count } => {
                write!(
                    f,
                    "segment `{segment}` has {count} coordinates (max {MAX_JOINT_COORDINATES})"
                )
            }
            TranslationOffRoot {
                segment,
                coordinate,
            } => write!(
                f,
                "translation `{coordinate}` on non-root segment `{segment}`"
            ),
            RootCount { count } => write!(f, "expected exactly one root segment, found {count}"),
            Cycle { segments } => {
                write!(f, "cycle detected among segments {}", segments.join(", "))
            }
            CoordinateReferences { coordinate, count } => write!(
                f,
                "coordinate `{coordinate}` referenced by {count} segments, expected 1"
            ),
            FreeCountMismatch { declared, actual } => write!(
                f,
                "declared {declared} free rotational coordinates, model has {actual}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

pub fn validate_model(model: &SkeletalModel) -> ValidationReport {
    let mut out = Vec::new();

    for c in model.coordinates() {
        if !c.default_value.is_finite() {
            out.push(Violation::NonFiniteValue {
                owner: format!("coordinate `{}`", c.name),
            });
        }
        match (c.class, c.range) {
            (CoordinateClass::Constrained, None) => out.push(Violation::ConstrainedWithoutRange {
                coordinate: c.name.clone(),
            }),
            (CoordinateClass::Free, Some(_)) => out.push(Violation::FreeWithRange {
                coordinate: c.name.clone(),
            }),
            (CoordinateClass::Constrained, Some((lo, hi))) => {
                if !(lo < hi) {
                    out.push(Violation::DegenerateRange {
                        coordinate: c.name.clone(),
                        min: lo,
                        max: hi,
                    });
                } else if !(lo..=hi).contains(&c.default_value) {
                    out.push(Violation::DefaultOutOfRange {
                        coordinate: c.name.clone(),
                        value: c.default_value,
                    });
                }
            }
            (CoordinateClass::Free, None) => {}
        }
    }

    let roots = model.roots();
    if roots.len() != 1 {
        out.push(Violation::RootCount { count: roots.len() });
    }
    let order = model.topological_order();
    if order.len() != model.segment_count() {
        let mut reached = vec![false; model.segment_count()];
        for &s in order {
            reached[s] = true;
        }
        out.push(Violation::Cycle {
            segments: model
                .segments()
                .iter()
                .zip(reached)
                .filter(|(_, r)| !r)
                .map(|(s, _)| s.name.clone())
                .collect(),
        });
    }

    for seg in model.segments() {
        let finite = seg.joint_offset_in_parent.iter().all(|v| v.is_finite())
            && seg.mass_center_offset.iter().all(|v| v.is_finite());
        if !finite {
            out.push(Violation::NonFiniteValue {
                owner: format!("segment `{}`", seg.name),
            });
        }
        let n = seg.joint_coordinates.len();
        if n > MAX_JOINT_COORDINATES {
            out.push(Violation::TooManyCoordinates {
                segment: seg.name.clone(),
                count: n,
            });
        }
        let coords = model.coordinates();
        let n_rot = seg
            .joint_coordinates
            .iter()
            .filter(|&&c| coords[c].is_rotation())
            .count();
        let n_tr = n - n_rot;
        if n_rot != seg.rotation_axes.len() {
            out.push(Violation::AxisCountMismatch {
                segment: seg.name.clone(),
                kind: "rotation",
                coordinates: n_rot,
                axes: seg.rotation_axes.len(),
            });
        }
        if n_tr != seg.translation_axes.len() {
            out.push(Violation::AxisCountMismatch {
                segment: seg.name.clone(),
                kind: "translation",
                coordinates: n_tr,
                axes: seg.translation_axes.len(),
            });
        }
        for (i, axis) in seg
            .rotation_axes
            .iter()
            .chain(&seg.translation_axes)
            .enumerate()
        {
            let norm = axis.norm();
            if !((norm - 1.0).abs() <= AXIS_UNIT_TOL) {
                out.push(Violation::NonUnitAxis {
                    segment: seg.name.clone(),
                    axis: i,
                    norm,
                });
            }
        }
        if seg.parent.is_some() {
            for &c in &seg.joint_coordinates {
                if !coords[c].is_rotation() {
                    out.push(Violation::TranslationOffRoot {
                        segment: seg.name.clone(),
                        coordinate: coords[c].name.clone(),
                    });
                }
            }
        }
    }

    for (ci, c) in model.coordinates().iter().enumerate() {
        let count = model.coordinate_refcount(ci);
        if count != 1 {
            out.push(Violation::CoordinateReferences {
                coordinate: c.name.clone(),
                count,
            });
        }
    }

    for m in model.markers() {
        if !m.offset.iter().all(|v| v.is_finite()) {
            out.push(Violation::NonFiniteValue {
                owner: format!("marker `{}`", m.name),
            });
        }
    }

    if let Some(declared) = model.declared_free_rotational() {
        let actual = model.free_constrained_split().free_rotational.len();
        if declared != actual {
            out.push(Violation::FreeCountMismatch { declared, actual });
        }
    }

    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoordinateKind, ModelDocument};

    fn generic_doc() -> ModelDocument {
        ModelDocument::from_toml(SkeletalModel::generic_source(), "generic").unwrap()
    }

    #[test]
    fn non_unit_axis_is_reported_once() {
        let mut doc = generic_doc();
        let knee = doc
            .segments
            .iter_mut()
            .find(|s| s.name == "tibia_r")
            .unwrap();
        knee.rotation_axes[0] = [0.0, 0.0, 1.1];
        let report = validate_model(&doc.resolve().unwrap());
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::NonUnitAxis { segment, axis, .. } => {
                assert_eq!(segment, "tibia_r");
                assert_eq!(*axis, 0);
            }
            v => panic!("unexpected violation {v}"),
        }
    }

    #[test]
    fn free_count_mismatch_listed() {
        let mut doc = generic_doc();
        // Turn one constrained rotation into a free one.
        let c = doc
            .coordinates
            .iter_mut()
            .find(|c| c.name == "lumbar_rotation")
            .unwrap();
        c.class = CoordinateClass::Free;
        c.range = None;
        let model = doc.resolve().unwrap();
        let actual = model
            .coordinates()
            .iter()
            .filter(|c| c.class == CoordinateClass::Free && c.kind == CoordinateKind::Rotation)
            .count();
        assert_eq!(actual, 10);
        let report = validate_model(&model);
        assert_eq!(
            report.violations,
            vec![Violation::FreeCountMismatch {
                declared: 9,
                actual: 10
            }]
        );
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut doc = generic_doc();
        let c = doc
            .coordinates
            .iter_mut()
            .find(|c| c.name == "knee_angle_r")
            .unwrap();
        c.range = Some([0.0, 0.0]);
        c.default_value = 0.0;
        let report = validate_model(&doc.resolve().unwrap());
        assert!(matches!(
            report.violations[0],
            Violation::DegenerateRange { .. }
        ));
    }

    #[test]
    fn cycle_and_root_count_reported() {
        let mut doc = generic_doc();
        doc.segments[0].parent = Some("toes_l".into());
        let report = validate_model(&doc.resolve().unwrap());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RootCount { count: 0 })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Cycle { .. })));
    }

    #[test]
    fn translation_off_root_reported() {
        let mut doc = generic_doc();
        let pelvis = &mut doc.segments[0];
        let tx = pelvis.joint_coordinates.remove(0);
        let axis = pelvis.translation_axes.remove(0);
        let torso = doc.segments.iter_mut().find(|s| s.name == "torso").unwrap();
        torso.joint_coordinates.push(tx);
        torso.translation_axes.push(axis);
        let report = validate_model(&doc.resolve().unwrap());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::TranslationOffRoot { .. })));
    }
}
