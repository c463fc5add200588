//! Labeled 2D observation tracks and 3D point tracks, with their CSV forms.
//!
//! 2D tracks are stored long-form as `frame,label,u,v,confidence`; 3D tracks
//! as `frame,label,x,y,z`. Every frame must carry every label, in the same
//! order as frame 0.

use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation2d {
    pub uv: Vector2<f64>,
    pub confidence: f64,
}

/// Per-frame 2D observations of a fixed label set from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracks2d {
    pub labels: Vec<String>,
    /// `frames[t][i]` observes `labels[i]`.
    pub frames: Vec<Vec<Observation2d>>,
}

/// Per-frame 3D positions of a fixed label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracks3d {
    pub labels: Vec<String>,
    pub frames: Vec<Vec<Vector3<f64>>>,
}

impl Tracks2d {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        check_grid(&self.labels, self.frames.iter().map(Vec::len))
    }

    pub fn to_csv(&self) -> Result<String> {
        self.check()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame", "label", "u", "v", "confidence"])
            .map_err(csv_err)?;
        for (t, frame) in self.frames.iter().enumerate() {
            for (label, o) in self.labels.iter().zip(frame) {
                w.write_record([
                    t.to_string(),
                    label.clone(),
                    o.uv.x.to_string(),
                    o.uv.y.to_string(),
                    o.confidence.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        finish(w)
    }

    pub fn from_csv(text: &str, context: &str) -> Result<Self> {
        let (labels, rows) = read_long(text, context, &["u", "v", "confidence"], 3)?;
        let frames = rows
            .into_iter()
            .map(|f| {
                f.into_iter()
                    .map(|v| Observation2d {
                        uv: Vector2::new(v[0], v[1]),
                        confidence: v[2],
                    })
                    .collect()
            })
            .collect();
        Ok(Tracks2d { labels, frames })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Tracks2d::from_csv(&read(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path.as_ref(), &self.to_csv()?)
    }
}

impl Tracks3d {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        check_grid(&self.labels, self.frames.iter().map(Vec::len))
    }

    /// Labeled points of one frame.
    pub fn frame(&self, t: usize) -> Vec<(String, Vector3<f64>)> {
        self.labels
            .iter()
            .cloned()
            .zip(self.frames[t].iter().copied())
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        self.check()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame", "label", "x", "y", "z"])
            .map_err(csv_err)?;
        for (t, frame) in self.frames.iter().enumerate() {
            for (label, p) in self.labels.iter().zip(frame) {
                w.write_record([
                    t.to_string(),
                    label.clone(),
                    p.x.to_string(),
                    p.y.to_string(),
                    p.z.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        finish(w)
    }

    pub fn from_csv(text: &str, context: &str) -> Result<Self> {
        let (labels, rows) = read_long(text, context, &["x", "y", "z"], 3)?;
        let frames = rows
            .into_iter()
            .map(|f| {
                f.into_iter()
                    .map(|v| Vector3::new(v[0], v[1], v[2]))
                    .collect()
            })
            .collect();
        Ok(Tracks3d { labels, frames })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Tracks3d::from_csv(&read(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path.as_ref(), &self.to_csv()?)
    }
}

fn check_grid(labels: &[String], widths: impl Iterator<Item = usize>) -> Result<()> {
    for w in widths {
        if w != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "track frame",
                expected: labels.len(),
                actual: w,
            });
        }
    }
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::parse("csv", e)
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::parse("csv", e.error()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse("csv", e))
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

type LongRows = (Vec<String>, Vec<Vec<Vec<f64>>>);

/// Parses `frame,label,<value columns>` into a dense frame × label grid.
fn read_long(text: &str, context: &str, columns: &[&str], width: usize) -> Result<LongRows> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(context, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let expected: Vec<&str> = ["frame", "label"].iter().chain(columns).copied().collect();
    if header != expected {
        return Err(Error::parse(
            context,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.join(",")
            ),
        ));
    }

    let mut labels: Vec<String> = Vec::new();
    let mut frames: Vec<Vec<Vec<f64>>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(context, e))?;
        let at = |msg: String| Error::parse(format!("{context}:{}", line + 2), msg);
        let frame: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| at(format!("bad frame index `{}`: {e}", &rec[0])))?;
        let label = rec[1].trim();
        let values = (0..width)
            .map(|i| {
                rec[2 + i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| at(format!("bad {} value `{}`: {e}", columns[i], &rec[2 + i])))
            })
            .collect::<Result<Vec<f64>>>()?;

        if frame == frames.len() {
            frames.push(Vec::new());
        } else if frame + 1 != frames.len() {
            return Err(at(format!("frame {frame} out of sequence")));
        }
        let row = frames.last_mut().expect("frame pushed above");
        if frame == 0 {
            if labels.iter().any(|l| l == label) {
                return Err(at(format!("duplicate label `{label}`")));
            }
            labels.push(label.to_owned());
        } else if labels.get(row.len()).map(String::as_str) != Some(label) {
            return Err(at(format!(
                "expected label `{}` in frame {frame}, found `{label}`",
                labels
                    .get(row.len())
                    .map_or("<end of frame>", String::as_str)
            )));
        }
        row.push(values);
    }
    if let Some((t, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.len() != labels.len())
    {
        return Err(Error::parse(
            context,
            format!(
                "frame {t} has {} labels, expected {}",
                f.len(),
                labels.len()
            ),
        ));
    }
    Ok((labels, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample2d() -> Tracks2d {
        Tracks2d {
            labels: vec!["a".into(), "b".into()],
            frames: (0..3)
                .map(|t| {
                    (0..2)
                        .map(|i| Observation2d {
                            uv: Vector2::new(t as f64 + 0.1, i as f64 * 1e-7 + 1.0 / 3.0),
                            confidence: (i % 2) as f64,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_2d_is_exact() {
        let tr = sample2d();
        let text = tr.to_csv().unwrap();
        assert!(text.starts_with("frame,label,u,v,confidence\n0,a,"));
        assert_eq!(Tracks2d::from_csv(&text, "t").unwrap(), tr);
    }

    #[test]
    fn round_trip_3d_is_exact() {
        let tr = Tracks3d {
            labels: vec!["x1".into()],
            frames: vec![vec![Vector3::new(0.1, -2.5e-9, 1.0 / 7.0)]; 2],
        };
        assert_eq!(Tracks3d::from_csv(&tr.to_csv().unwrap(), "t").unwrap(), tr);
    }

    #[test]
    fn ragged_frames_rejected() {
        let text = "frame,label,x,y,z\n0,a,0,0,0\n0,b,0,0,0\n1,a,0,0,0\n";
        assert!(Tracks3d::from_csv(text, "t").is_err());
        let text = "frame,label,x,y,z\n0,a,0,0,0\n2,a,0,0,0\n";
        assert!(Tracks3d::from_csv(text, "t").is_err());
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(Tracks3d::from_csv("frame,label,u,v,confidence\n", "t").is_err());
    }
}
