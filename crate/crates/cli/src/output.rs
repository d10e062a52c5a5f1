//! Artifact writers: the run CSV, JSON reports, and the optional SVG
//! log-plot. All floating-point output goes through Rust's shortest
//! round-trip formatting, so identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use vel_core::energy::ORDER_PAIRS;
use vel_core::solver::RunOutput;

/// Column header of `series.csv`, in reporting order.
pub const SERIES_HEADER: &str =
    "t,E_total,E_00,E_10,E_01,E_20,E_11,E_02,D_total,gamma_boundary,max_abs_v,mass_rel_err";

pub fn write_series_csv(path: &Path, out: &RunOutput) -> io::Result<()> {
    let mut text = String::new();
    text.push_str(SERIES_HEADER);
    text.push('\n');
    for rec in &out.records {
        write!(text, "{},{}", rec.time, rec.energy.e_total).unwrap();
        for &(m, i) in &ORDER_PAIRS {
            write!(text, ",{}", rec.energy.entry(m, i)).unwrap();
        }
        writeln!(
            text,
            ",{},{},{},{}",
            rec.energy.d_total, rec.gamma_boundary, rec.max_abs_v, rec.mass_rel_err
        )
        .unwrap();
    }
    fs::write(path, text)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

/// Minimal log-scale polyline plot of E_total over time. Purely
/// presentational; nothing reads it back.
pub fn write_energy_svg(path: &Path, out: &RunOutput) -> io::Result<()> {
    let pts: Vec<(f64, f64)> = out
        .records
        .iter()
        .filter(|r| r.energy.e_total > 0.0)
        .map(|r| (r.time, r.energy.e_total.log10()))
        .collect();
    let (w, h, margin) = (640.0, 400.0, 50.0);
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>").unwrap();
    if pts.len() >= 2 {
        let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(_, l) in &pts {
            lo = lo.min(l);
            hi = hi.max(l);
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let x = |t: f64| margin + (t - t0) / (t1 - t0) * (w - 2.0 * margin);
        let y = |l: f64| h - margin - (l - lo) / (hi - lo) * (h - 2.0 * margin);
        let mut d = String::new();
        for (k, &(t, l)) in pts.iter().enumerate() {
            write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, x(t), y(l)).unwrap();
        }
        writeln!(
            svg,
            "<path d=\"{d}\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\"/>"
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">t: {t0} .. {t1}</text>",
            margin,
            h - margin / 3.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"8\" y=\"{}\" font-size=\"12\">log10 E: {lo:.2} .. {hi:.2}</text>",
            margin / 1.5
        )
        .unwrap();
    } else {
        writeln!(
            svg,
            "<text x=\"{margin}\" y=\"{margin}\" font-size=\"12\">energy identically zero</text>"
        )
        .unwrap();
    }
    writeln!(svg, "</svg>").unwrap();
    fs::write(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_order_pairs() {
        // the E_* columns must track ORDER_PAIRS
        let cols: Vec<&str> = SERIES_HEADER.split(',').collect();
        assert_eq!(cols[2], "E_00");
        assert_eq!(cols.len(), 2 + ORDER_PAIRS.len() + 4);
        for (c, (m, i)) in cols[2..2 + ORDER_PAIRS.len()].iter().zip(ORDER_PAIRS) {
            assert_eq!(*c, format!("E_{m}{i}"));
        }
    }
}
