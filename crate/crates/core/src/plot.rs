//! SVG trajectories of per-container quality and CPU share.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::ReportError;
use crate::model::{ContainerId, WorkerId};
use crate::report::ReportRow;

type Series = BTreeMap<ContainerId, Vec<(f64, f64)>>;

fn plot_err<E: std::fmt::Display>(e: E) -> ReportError {
    ReportError::Plot(e.to_string())
}

fn draw(path: &Path, title: &str, y_label: &str, series: &Series) -> Result<(), ReportError> {
    let points = series.values().flatten();
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(0.1);

    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (id, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("c{id}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Writes `quality_w<N>.svg` and `share_w<N>.svg` for every worker in
/// `rows` and returns the written paths.
pub fn plot_trajectories(rows: &[ReportRow], out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut quality: BTreeMap<WorkerId, Series> = BTreeMap::new();
    let mut share: BTreeMap<WorkerId, Series> = BTreeMap::new();
    for r in rows {
        quality
            .entry(r.worker_id)
            .or_default()
            .entry(r.container_id)
            .or_default()
            .push((r.time, r.quality));
        share
            .entry(r.worker_id)
            .or_default()
            .entry(r.container_id)
            .or_default()
            .push((r.time, r.share));
    }
    let mut written = Vec::new();
    for (w, series) in &quality {
        let path = out_dir.join(format!("quality_w{w}.svg"));
        draw(
            &path,
            &format!("Worker {w}: quality (objective - perf)"),
            "seconds",
            series,
        )?;
        written.push(path);
    }
    for (w, series) in &share {
        let path = out_dir.join(format!("share_w{w}.svg"));
        draw(&path, &format!("Worker {w}: CPU share"), "cores", series)?;
        written.push(path);
    }
    Ok(written)
}
