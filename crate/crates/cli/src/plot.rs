use std::collections::BTreeMap;
use std::path::Path;

use anchor_est::NmseRow;
use plotters::prelude::*;

use crate::failure::Failure;

const SIZE: (u32, u32) = (800, 520);

/// One line per (scheme, sweep variable) on a logarithmic NMSE axis.
/// Infeasible and non-positive points are skipped.
pub fn render(rows: &[NmseRow], path: &Path, title: &str) -> Result<(), Failure> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_feasible() && r.mean_nmse > 0.0) {
        series
            .entry(format!("{} ({})", r.scheme, r.sweep_var))
            .or_default()
            .push((r.sweep_value, r.mean_nmse));
    }
    if series.is_empty() {
        return Err(Failure::Config("nothing to plot: no feasible points with positive NMSE".into()));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let xs = series.values().flatten().map(|p| p.0);
    let ys = series.values().flatten().map(|p| p.1);
    let (x_lo, x_hi) = padded(xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
    let y_lo = ys.clone().fold(f64::INFINITY, f64::min) / 2.0;
    let y_hi = ys.fold(f64::NEG_INFINITY, f64::max) * 2.0;
    let x_label = rows.first().map(|r| r.sweep_var.name()).unwrap_or("sweep value");

    let draw = || -> Result<(), Box<dyn std::error::Error>> {
        let root = SVGBackend::new(path, SIZE).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x_lo..x_hi, (y_lo..y_hi).log_scale())?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc("NMSE")
            .y_label_formatter(&|v| format!("{v:.0e}"))
            .draw()?;
        for (i, (name, pts)) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()?;
        root.present()?;
        Ok(())
    };
    draw().map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Widens a degenerate range so a single sweep value still plots.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}
