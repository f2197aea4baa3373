//! Static SVG line charts from sweep results.

use plotters::prelude::*;
use std::path::Path;

use crate::error::{HbfError, Result};
use crate::harness::{Metric, QuantRecord, SweepRecord};

/// One named line of `(x, y)` points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Render a line chart to an SVG file. With `log_y`, y values are plotted as
/// log10 (zeros clamped to 1e-8).
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(HbfError::InvalidInput("nothing to plot".into()));
    }
    let transform = |y: f64| if log_y { y.max(1e-8).log10() } else { y };
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| transform(p.1)))
        .collect();
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);
    let pad = ((y_max - y_min) * 0.05).max(1e-6);

    let err = |e: String| HbfError::Config(format!("plot `{}`: {e}", path.display()));
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let y_desc = if log_y {
        format!("log10 {y_label}")
    } else {
        y_label.to_string()
    };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_min..x_max, (y_min - pad)..(y_max + pad))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_desc)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| (x, transform(y))).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| err(e.to_string()))?
            .label(s.label.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
            });
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| err(e.to_string()))?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// One chart per metric from sweep records, keyed `<stem>_<metric>.svg`.
pub fn plot_sweep(records: &[SweepRecord], out_dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for metric in [Metric::Mse, Metric::Ber, Metric::Se] {
        let mut series: Vec<Series> = Vec::new();
        for r in records.iter().filter(|r| r.metric == metric) {
            let label = r.algorithm.to_string();
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((r.snr_db, r.value)),
                None => series.push(Series {
                    label,
                    points: vec![(r.snr_db, r.value)],
                }),
            }
        }
        if series.is_empty() {
            continue;
        }
        for s in &mut series {
            s.points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
        let path = out_dir.join(format!("{stem}_{metric}.svg"));
        line_chart(
            &path,
            &format!("{metric} vs SNR"),
            "SNR (dB)",
            &metric.to_string(),
            &series,
            metric == Metric::Ber,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// One chart per metric from quantization records (x axis: bits).
pub fn plot_quantization(
    records: &[QuantRecord],
    out_dir: &Path,
    stem: &str,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for metric in [Metric::Mse, Metric::Ber, Metric::Se] {
        let mut series: Vec<Series> = Vec::new();
        for r in records.iter().filter(|r| r.metric == metric && r.q_bits > 0) {
            let label = r.algorithm.to_string();
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((r.q_bits as f64, r.value)),
                None => series.push(Series {
                    label,
                    points: vec![(r.q_bits as f64, r.value)],
                }),
            }
        }
        if series.is_empty() {
            continue;
        }
        for s in &mut series {
            s.points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
        let path = out_dir.join(format!("{stem}_{metric}.svg"));
        line_chart(
            &path,
            &format!("{metric} vs quantization bits"),
            "phase bits",
            &metric.to_string(),
            &series,
            metric == Metric::Ber,
        )?;
        written.push(path);
    }
    Ok(written)
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (max - min).abs() < 1e-12 {
        (min - 1.0, max + 1.0)
    } else {
        (min, max)
    }
}
