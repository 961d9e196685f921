//! Dependency-free SVG output: log-log line charts for spectra and a
//! heatmap for the 2D structure function. CSV is always written alongside,
//! so these are conveniences, not the primary output.

use crate::error::{Result, RevarError};
use crate::metrics::{PairedCurve, StructureFunction2D};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn finite_log_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v > 0.0 && v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo.is_finite() && hi > lo {
        Some((lo.log10(), hi.log10()))
    } else {
        None
    }
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut s = format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"");
    for (x, y) in points {
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    s.push_str("\"/>\n");
    s
}

/// Log-log overlay of a reference and a synthetic curve.
pub fn write_paired_spectrum_svg(path: &Path, curve: &PairedCurve, title: &str) -> Result<()> {
    let (x_lo, x_hi) = finite_log_range(curve.grid.iter().copied()).ok_or_else(|| {
        RevarError::InvalidInput("spectrum has no positive frequencies to plot".into())
    })?;
    let (y_lo, y_hi) = finite_log_range(
        curve
            .reference
            .iter()
            .chain(curve.synthetic.iter())
            .copied(),
    )
    .ok_or_else(|| RevarError::InvalidInput("spectrum has no positive power to plot".into()))?;

    let map = |f: f64, p: f64| -> Option<(f64, f64)> {
        if f <= 0.0 || p <= 0.0 {
            return None;
        }
        let x = MARGIN + (f.log10() - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
        let y = HEIGHT - MARGIN - (p.log10() - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
        Some((x, y))
    };
    let series = |values: &[f64]| -> Vec<(f64, f64)> {
        curve
            .grid
            .iter()
            .zip(values.iter())
            .filter_map(|(&f, &p)| map(f, p))
            .collect()
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{title}</text>\n",
        WIDTH / 2.0
    );
    // Axes.
    let _ = write!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
    // Decade ticks on x.
    let mut d = x_lo.ceil() as i64;
    while (d as f64) <= x_hi {
        let x = MARGIN + (d as f64 - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
        let _ = write!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{b}\" x2=\"{x:.1}\" y2=\"{b2}\" stroke=\"black\"/>\n\
             <text x=\"{x:.1}\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">1e{d}</text>\n",
            b = HEIGHT - MARGIN,
            b2 = HEIGHT - MARGIN + 6.0,
            ty = HEIGHT - MARGIN + 20.0
        );
        d += 1;
    }
    let mut d = y_lo.ceil() as i64;
    while (d as f64) <= y_hi {
        let y = HEIGHT - MARGIN - (d as f64 - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
        let _ = write!(
            svg,
            "<line x1=\"{m2}\" y1=\"{y:.1}\" x2=\"{m}\" y2=\"{y:.1}\" stroke=\"black\"/>\n\
             <text x=\"{tx}\" y=\"{y:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">1e{d}</text>\n",
            m = MARGIN,
            m2 = MARGIN - 6.0,
            tx = MARGIN - 10.0
        );
        d += 1;
    }
    svg.push_str(&polyline(&series(&curve.reference), "#2a9d2a"));
    svg.push_str(&polyline(&series(&curve.synthetic), "#e07b28"));
    let _ = write!(
        svg,
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#2a9d2a\">reference</text>\n\
         <text x=\"{x}\" y=\"{y2}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#e07b28\">synthetic</text>\n",
        x = WIDTH - MARGIN - 90.0,
        y = MARGIN + 16.0,
        y2 = MARGIN + 32.0
    );
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| RevarError::io(path, e))
}

/// Heatmap of the structure function over its displacement grid.
pub fn write_structure_svg(path: &Path, sf: &StructureFunction2D, title: &str) -> Result<()> {
    let side = 2 * sf.max_displacement + 1;
    let cell = ((WIDTH - 2.0 * MARGIN) / side as f64).min((HEIGHT - 2.0 * MARGIN) / side as f64);
    let max_v = sf
        .values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{title}</text>\n",
        cx = WIDTH / 2.0
    );
    for iy in 0..side {
        for ix in 0..side {
            if sf.counts[(iy, ix)] == 0 {
                continue;
            }
            let v = (sf.values[(iy, ix)] / max_v).clamp(0.0, 1.0);
            // White (low) to dark blue (high).
            let shade = (255.0 * (1.0 - v)) as u8;
            let x = MARGIN + ix as f64 * cell;
            let y = MARGIN + (side - 1 - iy) as f64 * cell;
            let _ = write!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"rgb({shade},{shade},255)\"/>\n"
            );
        }
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| RevarError::io(path, e))
}

/// Simple linear-scale multi-line chart for sweep curves.
pub fn write_sweep_svg(
    path: &Path,
    lags: &[usize],
    curves: &[(&str, Vec<f64>)],
    title: &str,
) -> Result<()> {
    if lags.is_empty() || curves.is_empty() {
        return Err(RevarError::InvalidInput("nothing to plot".into()));
    }
    let y_max = curves
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let x_lo = *lags.first().unwrap() as f64;
    let x_hi = (*lags.last().unwrap() as f64).max(x_lo + 1.0);
    let map = |l: f64, v: f64| {
        (
            MARGIN + (l - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN - (v / y_max) * (HEIGHT - 2.0 * MARGIN),
        )
    };
    let colors = ["#2a62e0", "#e07b28", "#2a9d2a", "#b03030"];
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{title}</text>\n\
         <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        cx = WIDTH / 2.0,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
    for (i, &l) in lags.iter().enumerate() {
        let (x, _) = map(l as f64, 0.0);
        let _ = write!(
            svg,
            "<text x=\"{x:.1}\" y=\"{y}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{l}</text>\n",
            y = HEIGHT - MARGIN + 20.0
        );
        let _ = i;
    }
    for (k, (name, values)) in curves.iter().enumerate() {
        let color = colors[k % colors.len()];
        let pts: Vec<(f64, f64)> = lags
            .iter()
            .zip(values.iter())
            .map(|(&l, &v)| map(l as f64, v))
            .collect();
        svg.push_str(&polyline(&pts, color));
        let _ = write!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{name}</text>\n",
            x = WIDTH - MARGIN - 150.0,
            y = MARGIN + 16.0 + 16.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| RevarError::io(path, e))
}
