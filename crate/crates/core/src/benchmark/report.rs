use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::batch::AggregateReport;
use crate::error::{Error, Result};

pub const TABLE_FILE: &str = "results.csv";
pub const SR_PLOT_FILE: &str = "sr_vs_agents.svg";
pub const EL_PLOT_FILE: &str = "el_vs_agents.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputFormat {
    Table,
    Plot,
}

/// Writes `results.csv` and/or the SR and EL plots into `dir`, returning the
/// paths written. Plots are skipped when there are no reports.
pub fn emit_results(
    reports: &[AggregateReport],
    dir: &Path,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Table) {
        let path = dir.join(TABLE_FILE);
        write_table(reports, &path)?;
        written.push(path);
    }
    if formats.contains(&OutputFormat::Plot) && !reports.is_empty() {
        for (file, title, metric) in [
            (
                SR_PLOT_FILE,
                "Success rate",
                (|r: &AggregateReport| r.sr) as fn(&AggregateReport) -> f64,
            ),
            (EL_PLOT_FILE, "Episode length", |r: &AggregateReport| r.el),
        ] {
            let path = dir.join(file);
            plot_metric(reports, &path, title, metric)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_table(reports: &[AggregateReport], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if reports.is_empty() {
        w.write_record(table_header()).map_err(csv_err)?;
    }
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn table_header() -> Vec<&'static str> {
    vec![
        "width",
        "height",
        "density",
        "agents",
        "max_steps",
        "instances",
        "regime",
        "loop_detection",
        "loop_rule",
        "switch_threshold",
        "latency",
        "drop_rate",
        "sr",
        "el",
        "icr",
        "collisions",
        "obstacle_hits",
        "loop_events",
        "timeouts",
        "infeasible",
    ]
}

pub fn read_table(path: &Path) -> Result<Vec<AggregateReport>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn series_label(r: &AggregateReport) -> String {
    format!(
        "{}x{} {:.0}% {}{}",
        r.width,
        r.height,
        r.density * 100.0,
        r.regime,
        if r.loop_detection { "" } else { " no-loop" }
    )
}

fn plot_metric(
    reports: &[AggregateReport],
    path: &Path,
    title: &str,
    metric: fn(&AggregateReport) -> f64,
) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in reports {
        let label = series_label(r);
        let point = (r.agents as f64, metric(r));
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push(point),
            None => series.push((label, vec![point])),
        }
    }
    for (_, pts) in &mut series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let x_max = reports.iter().map(|r| r.agents).max().unwrap_or(1) as f64;
    let y_max = reports.iter().map(metric).fold(0.0, f64::max).max(1.0) * 1.05;

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..x_max * 1.05, 0.0..y_max)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("agents")
        .y_desc(title)
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| plot_err(&e))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
