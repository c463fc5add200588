//! CSV forms of motion sequences and scale sets.
//!
//! Motion files are wide: a `time` column in seconds, then one column per
//! model coordinate, rotations in degrees and translations in meters. Scale
//! files hold one `segment,sx,sy,sz` row per segment.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{MotionSequence, Pose};
use crate::model::{CoordinateKind, ScaleSet, SkeletalModel};
use crate::tracks::{csv_err, finish, read, write};

pub fn motion_to_csv(model: &SkeletalModel, motion: &MotionSequence) -> Result<String> {
    motion.check(model)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time"];
    header.extend(model.coordinate_names());
    w.write_record(&header).map_err(csv_err)?;
    for (t, pose) in motion.frames.iter().enumerate() {
        let mut row = vec![motion.time(t).to_string()];
        for (c, coord) in model.coordinates().iter().enumerate() {
            let v = pose.values[c];
            row.push(
                match coord.kind {
                    CoordinateKind::Rotation => v.to_degrees(),
                    CoordinateKind::Translation => v,
                }
                .to_string(),
            );
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Parses a motion file. Columns may come in any order but must name every
/// model coordinate exactly once; a wrong column count is a dimension
/// mismatch. The frame rate is inferred from the time
/// column, so at least two frames are required.
pub fn motion_from_csv(model: &SkeletalModel, text: &str, context: &str) -> Result<MotionSequence> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(context, e))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header.first().map(String::as_str) != Some("time") {
        return Err(Error::parse(context, "first column must be `time`"));
    }
    if header.len() - 1 != model.coordinate_count() {
        return Err(Error::DimensionMismatch {
            what: "motion coordinate columns",
            expected: model.coordinate_count(),
            actual: header.len() - 1,
        });
    }
    let mut column_of = vec![None; model.coordinate_count()];
    for (col, name) in header.iter().enumerate().skip(1) {
        let c = model
            .coordinate_index(name)
            .ok_or_else(|| Error::parse(context, format!("unknown coordinate column `{name}`")))?;
        if column_of[c].replace(col).is_some() {
            return Err(Error::parse(context, format!("duplicate column `{name}`")));
        }
    }

    let mut times = Vec::new();
    let mut frames = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(context, e))?;
        let at = |msg: String| Error::parse(format!("{context}:{}", line + 2), msg);
        let cell = |col: usize| -> Result<f64> {
            rec[col].trim().parse::<f64>().map_err(|e| {
                at(format!(
                    "bad value `{}` in column `{}`: {e}",
                    &rec[col], header[col]
                ))
            })
        };
        times.push(cell(0)?);
        let values = model
            .coordinates()
            .iter()
            .zip(&column_of)
            .map(|(coord, col)| {
                let v = cell(col.expect("all columns resolved"))?;
                Ok(match coord.kind {
                    CoordinateKind::Rotation => v.to_radians(),
                    CoordinateKind::Translation => v,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        frames.push(Pose::new(values));
    }
    if times.len() < 2 {
        return Err(Error::parse(
            context,
            "need at least two frames to infer the frame rate",
        ));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::parse(context, "time column is not increasing"));
    }
    // Times are printed from `t / fps`; rounding recovers rates like 59.94.
    let rate = (1e6 / dt).round() / 1e6;
    MotionSequence::new(frames, rate)
}

pub fn load_motion(model: &SkeletalModel, path: impl AsRef<Path>) -> Result<MotionSequence> {
    let path = path.as_ref();
    motion_from_csv(model, &read(path)?, &path.display().to_string())
}

pub fn save_motion(
    model: &SkeletalModel,
    motion: &MotionSequence,
    path: impl AsRef<Path>,
) -> Result<()> {
    write(path.as_ref(), &motion_to_csv(model, motion)?)
}

pub fn scales_to_csv(model: &SkeletalModel, scales: &ScaleSet) -> Result<String> {
    scales.check_len(model.segment_count())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment", "sx", "sy", "sz"])
        .map_err(csv_err)?;
    for (seg, f) in model.segments().iter().zip(&scales.factors) {
        w.write_record([
            seg.name.clone(),
            f.x.to_string(),
            f.y.to_string(),
            f.z.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Parses a scale file; rows may come in any order but must cover every
/// segment exactly once.
pub fn scales_from_csv(model: &SkeletalModel, text: &str, context: &str) -> Result<ScaleSet> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(context, e))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if header != ["segment", "sx", "sy", "sz"] {
        return Err(Error::parse(
            context,
            format!(
                "expected header `segment,sx,sy,sz`, found `{}`",
                header.join(",")
            ),
        ));
    }
    let mut factors = vec![None; model.segment_count()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(context, e))?;
        let at = |msg: String| Error::parse(format!("{context}:{}", line + 2), msg);
        let name = rec[0].trim();
        let s = model
            .segment_index(name)
            .ok_or_else(|| at(format!("unknown segment `{name}`")))?;
        let mut v = [0.0; 3];
        for (i, x) in v.iter_mut().enumerate() {
            *x = rec[1 + i]
                .trim()
                .parse()
                .map_err(|e| at(format!("bad value `{}`: {e}", &rec[1 + i])))?;
        }
        if factors[s].replace(v.into()).is_some() {
            return Err(at(format!("duplicate segment `{name}`")));
        }
    }
    let factors = factors
        .into_iter()
        .enumerate()
        .map(|(s, f)| {
            f.ok_or_else(|| {
                Error::parse(
                    context,
                    format!("missing segment `{}`", model.segments()[s].name),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleSet { factors })
}

pub fn load_scales(model: &SkeletalModel, path: impl AsRef<Path>) -> Result<ScaleSet> {
    let path = path.as_ref();
    scales_from_csv(model, &read(path)?, &path.display().to_string())
}

pub fn save_scales(model: &SkeletalModel, scales: &ScaleSet, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &scales_to_csv(model, scales)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn motion_round_trip() {
        let model = SkeletalModel::generic();
        let frames = (0..4)
            .map(|t| {
                let mut p = Pose::default_for(&model);
                p.values[0] = 0.01 * t as f64;
                p.values[6] = 0.1 * t as f64;
                p
            })
            .collect();
        let motion = MotionSequence::new(frames, 60.0).unwrap();
        let text = motion_to_csv(&model, &motion).unwrap();
        assert!(text.starts_with("time,pelvis_tx,"));
        let back = motion_from_csv(&model, &text, "m").unwrap();
        assert_eq!(back.frame_rate, 60.0);
        for (a, b) in back.frames.iter().zip(&motion.frames) {
            assert!((&a.values - &b.values).amax() < 1e-14);
        }
    }

    #[test]
    fn motion_rejects_missing_columns() {
        let model = SkeletalModel::generic();
        let err = motion_from_csv(&model, "time,pelvis_tx\n0,0\n1,0\n", "m").unwrap_err();
        assert!(
            matches!(
                err,
                Error::DimensionMismatch {
                    expected: 36,
                    actual: 1,
                    ..
                }
            ),
            "{err}"
        );
        let mut header = model.coordinate_names();
        header[1] = "pelvis_tx";
        let text = format!("time,{}\n", header.join(","));
        let err = motion_from_csv(&model, &text, "m").unwrap_err();
        assert!(err.to_string().contains("duplicate column"), "{err}");
    }

    #[test]
    fn scales_round_trip_any_row_order() {
        let model = SkeletalModel::generic();
        let mut scales = ScaleSet::unit(model.segment_count());
        scales.factors[3] = Vector3::new(1.1, 0.9, 1.0 / 3.0);
        let text = scales_to_csv(&model, &scales).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let back = scales_from_csv(&model, &lines.join("\n"), "s").unwrap();
        assert_eq!(back, scales);
    }

    #[test]
    fn scales_reject_duplicates() {
        let model = SkeletalModel::generic();
        let mut text = scales_to_csv(&model, &ScaleSet::unit(model.segment_count())).unwrap();
        let first_row = text.lines().nth(1).unwrap().to_owned();
        text.push_str(&first_row);
        assert!(scales_from_csv(&model, &text, "s").is_err());
    }
}
