//! Angle-trace tables and standalone SVG small-multiple plots drawn from them.

use std::fmt::Write as _;

use anyhow::{bail, Context};
use kinefit::kinematics::MotionSequence;
use kinefit::model::SkeletalModel;

/// `time,<coord>_pred,<coord>_truth,...` over every rotational coordinate,
/// in degrees.
pub fn angle_traces_csv(
    model: &SkeletalModel,
    pred: &MotionSequence,
    truth: &MotionSequence,
) -> anyhow::Result<String> {
    if pred.len() != truth.len() {
        bail!(
            "frame counts differ: {} predicted, {} true",
            pred.len(),
            truth.len()
        );
    }
    let coords = model.rotational_indices();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_owned()];
    for &c in &coords {
        let name = &model.coordinates()[c].name;
        header.push(format!("{name}_pred"));
        header.push(format!("{name}_truth"));
    }
    w.write_record(&header)?;
    for t in 0..truth.len() {
        let mut row = vec![truth.time(t).to_string()];
        for &c in &coords {
            row.push(pred.frames[t].values[c].to_degrees().to_string());
            row.push(truth.frames[t].values[c].to_degrees().to_string());
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

const PANEL_W: f64 = 240.0;
const PANEL_H: f64 = 130.0;
const COLUMNS: usize = 4;
const MAX_POINTS: usize = 400;

/// `values` are pre-normalized to [0, 1] over the panel height.
fn polyline(
    out: &mut String,
    times: &[f64],
    values: &[f64],
    frame: (f64, f64, f64, f64),
    style: &str,
) {
    let (x0, y0, w, h) = frame;
    let (t_lo, t_hi) = (times[0], *times.last().expect("non-empty"));
    let stride = times.len().div_ceil(MAX_POINTS).max(1);
    let pts: Vec<String> = (0..times.len())
        .step_by(stride)
        .map(|i| {
            let x = x0 + w * (times[i] - t_lo) / (t_hi - t_lo).max(1e-12);
            let y = y0 + h * (1.0 - values[i]);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" {style} points="{}"/>"#,
        pts.join(" ")
    );
}

/// Renders the trace table as a grid of panels, one per coordinate, with the
/// truth in black and the prediction in red.
pub fn angle_traces_svg(title: &str, table: &str) -> anyhow::Result<String> {
    let mut r = csv::Reader::from_reader(table.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (col, cell) in columns.iter_mut().zip(rec.iter()) {
            col.push(
                cell.parse()
                    .with_context(|| format!("bad trace value `{cell}`"))?,
            );
        }
    }
    if columns[0].len() < 2 {
        bail!("need at least two frames to plot");
    }
    let panels = (header.len() - 1) / 2;
    let rows = panels.div_ceil(COLUMNS);
    let width = COLUMNS as f64 * PANEL_W;
    let height = 30.0 + rows as f64 * PANEL_H;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="8" y="20" font-size="14">{title}: predicted (red) vs truth (black), degrees</text>"#
    );
    for p in 0..panels {
        let (pred, truth) = (&columns[1 + 2 * p], &columns[2 + 2 * p]);
        let name = header[1 + 2 * p].trim_end_matches("_pred");
        let x0 = (p % COLUMNS) as f64 * PANEL_W + 36.0;
        let y0 = 30.0 + (p / COLUMNS) as f64 * PANEL_H + 18.0;
        let (w, h) = (PANEL_W - 48.0, PANEL_H - 40.0);

        let (lo, hi) = pred
            .iter()
            .chain(truth)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let pad = ((hi - lo) * 0.05).max(0.5);
        let (lo, hi) = (lo - pad, hi + pad);
        let norm = |v: &[f64]| v.iter().map(|x| (x - lo) / (hi - lo)).collect::<Vec<_>>();

        let _ = writeln!(
            out,
            r##"<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#bbb"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{x0}" y="{}" font-size="11">{name}</text>"#,
            y0 - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{hi:.0}</text>"#,
            x0 - 3.0,
            y0 + 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{lo:.0}</text>"#,
            x0 - 3.0,
            y0 + h
        );
        let frame = (x0, y0, w, h);
        polyline(
            &mut out,
            &columns[0],
            &norm(truth),
            frame,
            r#"stroke="black" stroke-width="1.2""#,
        );
        polyline(
            &mut out,
            &columns[0],
            &norm(pred),
            frame,
            r#"stroke="red" stroke-width="0.8""#,
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kinefit::kinematics::Pose;

    #[test]
    fn traces_and_plot() {
        let model = SkeletalModel::generic();
        let frames: Vec<Pose> = (0..5)
            .map(|t| {
                let mut p = Pose::default_for(&model);
                p.values[9] = 0.1 * t as f64;
                p
            })
            .collect();
        let m = MotionSequence::new(frames, 60.0).unwrap();
        let table = angle_traces_csv(&model, &m, &m).unwrap();
        assert_eq!(table.lines().count(), 6);
        assert_eq!(
            table.lines().next().unwrap().split(',').count(),
            1 + 2 * model.rotational_indices().len()
        );
        let svg = angle_traces_svg("c", &table).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(
            svg.matches("<polyline").count(),
            2 * model.rotational_indices().len()
        );
    }
}
