//! Result writers: CSV tables, JSON summaries, gnuplot-style `.dat` blocks
//! and standalone SVG charts.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! failed write never leaves a truncated file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::experiments::{ExperimentKind, ExperimentResult, FitRecord, Rows};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Dat,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "dat" => Ok(Format::Dat),
            "svg" => Ok(Format::Svg),
            other => Err(format!(
                "unknown format '{other}' (expected csv, json, dat, svg)"
            )),
        }
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub const SWEEP_HEADER: [&str; 15] = [
    "agg",
    "d",
    "n_side",
    "m",
    "gamma",
    "seed",
    "n_seeds",
    "mean_price",
    "mean_profit",
    "std_profit",
    "min_profit",
    "max_profit",
    "tail_var",
    "theory",
    "converged",
];

pub const NASH_HEADER: [&str; 5] = ["d", "omega", "x_star", "p_star", "stable"];

/// CSV with one row per `(sweep point, seed)` and `agg = 1` rows for the
/// across-seed aggregates.
pub fn to_csv(result: &ExperimentResult) -> Result<Vec<u8>, OutputError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    match &result.rows {
        Rows::Nash(rows) => {
            w.write_record(NASH_HEADER)?;
            for r in rows {
                w.write_record([
                    fmt_num(r.d),
                    fmt_num(r.omega),
                    fmt_num(r.x_star),
                    fmt_num(r.p_star),
                    r.stable.to_string(),
                ])?;
            }
        }
        Rows::Sweep(rows) => {
            w.write_record(SWEEP_HEADER)?;
            for r in rows {
                w.write_record([
                    "0".to_string(),
                    opt_num(r.d),
                    r.n_side.to_string(),
                    r.m.to_string(),
                    fmt_num(r.gamma),
                    r.seed.to_string(),
                    String::new(),
                    fmt_num(r.mean_price),
                    fmt_num(r.mean_profit),
                    String::new(),
                    String::new(),
                    String::new(),
                    fmt_num(r.tail_var),
                    opt_num(r.theory),
                    if r.converged { "1" } else { "0" }.to_string(),
                ])?;
            }
            for a in &result.aggregates {
                w.write_record([
                    "1".to_string(),
                    opt_num(a.d),
                    a.n_side.to_string(),
                    a.m.to_string(),
                    fmt_num(a.gamma),
                    String::new(),
                    a.n_seeds.to_string(),
                    fmt_num(a.mean_price),
                    fmt_num(a.mean_profit),
                    opt_num(a.std_profit),
                    fmt_num(a.min_profit),
                    fmt_num(a.max_profit),
                    fmt_num(a.mean_tail_var),
                    opt_num(a.theory),
                    fmt_num(a.converged_fraction),
                ])?;
            }
        }
    }
    w.flush().map_err(|source| OutputError::Io {
        path: PathBuf::from("<csv buffer>"),
        source,
    })?;
    w.into_inner()
        .map_err(|e| e.into_error())
        .map_err(|source| OutputError::Io {
            path: PathBuf::from("<csv buffer>"),
            source,
        })
}

pub fn to_json(result: &ExperimentResult) -> Result<Vec<u8>, OutputError> {
    let mut bytes = serde_json::to_vec_pretty(result)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Blank-line separated data blocks, each preceded by a `#` comment line.
pub fn to_dat(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let mut block = |title: &str, lines: Vec<String>| {
        let _ = writeln!(out, "# {title}");
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        out.push_str("\n\n");
    };
    let aggs = &result.aggregates;
    match result.spec.kind {
        ExperimentKind::TwoFirmSweep => {
            for &n in &result.spec.n_list {
                block(
                    &format!("N={n}: d mean_profit std_profit"),
                    aggs.iter()
                        .filter(|a| a.n_side == n)
                        .map(|a| {
                            format!(
                                "{} {} {}",
                                opt_num(a.d),
                                fmt_num(a.mean_profit),
                                fmt_num(a.std_profit.unwrap_or(0.0))
                            )
                        })
                        .collect(),
                );
            }
            let n0 = result.spec.n_list[0];
            block(
                "closed form: d x_star",
                aggs.iter()
                    .filter(|a| a.n_side == n0)
                    .filter_map(|a| Some(format!("{} {}", opt_num(a.d), fmt_num(a.theory?))))
                    .collect(),
            );
        }
        ExperimentKind::VarianceScaling => {
            for &d in &result.spec.d_list {
                block(
                    &format!("d={d}: N mean_tail_var"),
                    aggs.iter()
                        .filter(|a| a.d == Some(d))
                        .map(|a| format!("{} {}", a.n_side, fmt_num(a.mean_tail_var)))
                        .collect(),
                );
            }
        }
        ExperimentKind::MultiFirmSweep | ExperimentKind::GammaSweep => {
            let mut gammas: Vec<f64> = aggs.iter().map(|a| a.gamma).collect();
            gammas.dedup();
            for g in gammas {
                block(
                    &format!("gamma={g}: m mean_profit std_profit"),
                    aggs.iter()
                        .filter(|a| a.gamma == g)
                        .map(|a| {
                            format!(
                                "{} {} {}",
                                a.m,
                                fmt_num(a.mean_profit),
                                fmt_num(a.std_profit.unwrap_or(0.0))
                            )
                        })
                        .collect(),
                );
            }
            let fits: Vec<String> = result
                .power_law_fits()
                .map(|(g, f)| format!("{} {} {}", fmt_num(g), fmt_num(f.b), fmt_num(f.se_b)))
                .collect();
            if !fits.is_empty() {
                block("fits: gamma B se_B", fits);
            }
        }
        ExperimentKind::NonPbcDemo => {
            for (trace, row) in result.traces.iter().zip(result.sweep_rows()) {
                block(
                    &format!("d={}: step p1 p2", opt_num(row.d)),
                    trace
                        .steps
                        .iter()
                        .enumerate()
                        .map(|(t, s)| {
                            format!("{t} {} {}", fmt_num(s.prices[0]), fmt_num(s.prices[1]))
                        })
                        .collect(),
                );
            }
            for p in &result.profiles {
                block(
                    &format!("d={} p2={}: p1 X1", p.d, p.p_other),
                    p.points
                        .iter()
                        .map(|(x, y)| format!("{} {}", fmt_num(*x), fmt_num(*y)))
                        .collect(),
                );
            }
        }
        ExperimentKind::NashTable => {
            if let Rows::Nash(rows) = &result.rows {
                block(
                    "d x_star",
                    rows.iter()
                        .map(|r| format!("{} {}", fmt_num(r.d), fmt_num(r.x_star)))
                        .collect(),
                );
            }
        }
    }
    out
}

/// A named polyline or scatter for [`svg_chart`].
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub line: bool,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Renders a minimal standalone SVG line/scatter chart.
pub fn svg_chart(chart: &Chart) -> String {
    let (w, h) = (640.0, 440.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let tx = |v: f64| if chart.log_x { v.log10() } else { v };
    let ty = |v: f64| if chart.log_y { v.log10() } else { v };
    let usable = |(x, y): &(f64, f64)| {
        x.is_finite() && y.is_finite() && (!chart.log_x || *x > 0.0) && (!chart.log_y || *y > 0.0)
    };
    let pts: Vec<(f64, f64)> = chart
        .series
        .iter()
        .flat_map(|s| {
            s.points
                .iter()
                .filter(|p| usable(p))
                .map(|&(x, y)| (tx(x), ty(y)))
        })
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold(
        (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let xl = if chart.log_x {
            format!("1e{xv:.2}")
        } else {
            format!("{xv:.3}")
        };
        let yl = if chart.log_y {
            format!("1e{yv:.2}")
        } else {
            format!("{yv:.3}")
        };
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xl}</text>"#,
            sx(xv),
            h - bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yl}</text>"#,
            left - 6.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(&chart.y_label)
    );
    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mapped: Vec<(f64, f64)> = series
            .points
            .iter()
            .filter(|p| usable(p))
            .map(|&(x, y)| (sx(tx(x)), sy(ty(y))))
            .collect();
        if series.line {
            let path: Vec<String> = mapped
                .iter()
                .map(|(x, y)| format!("{x:.2},{y:.2}"))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        } else {
            for (x, y) in &mapped {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            left + 10.0,
            top + 16.0 + 14.0 * i as f64,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Default chart for an experiment result.
pub fn chart_for(result: &ExperimentResult) -> Chart {
    let aggs = &result.aggregates;
    let mut chart = Chart {
        title: result.spec.kind.command().to_string(),
        x_label: String::new(),
        y_label: String::new(),
        log_x: false,
        log_y: false,
        series: vec![],
    };
    match result.spec.kind {
        ExperimentKind::TwoFirmSweep => {
            chart.x_label = "d".into();
            chart.y_label = "profit per customer".into();
            for &n in &result.spec.n_list {
                chart.series.push(Series {
                    label: format!("N={n}"),
                    points: aggs
                        .iter()
                        .filter(|a| a.n_side == n)
                        .filter_map(|a| Some((a.d?, a.mean_profit)))
                        .collect(),
                    line: false,
                });
            }
            let curve = (1..100)
                .filter_map(|i| {
                    let d = i as f64 / 100.0;
                    crate::analytics::nash_equilibrium(d, result.spec.r)
                        .ok()
                        .map(|e| (d, e.profit))
                })
                .collect();
            chart.series.push(Series {
                label: "closed form".into(),
                points: curve,
                line: true,
            });
        }
        ExperimentKind::VarianceScaling => {
            chart.x_label = "N".into();
            chart.y_label = "tail profit variance".into();
            chart.log_x = true;
            chart.log_y = true;
            chart.series.push(Series {
                label: "simulation".into(),
                points: aggs
                    .iter()
                    .map(|a| (a.n_side as f64, a.mean_tail_var))
                    .collect(),
                line: false,
            });
            for f in &result.fits {
                if let FitRecord::VarianceSlope { fit, .. } = f {
                    chart.series.push(Series {
                        label: format!("slope {:.3}", fit.slope),
                        points: aggs
                            .iter()
                            .map(|a| {
                                let x = a.n_side as f64;
                                (x, (fit.intercept + fit.slope * x.ln()).exp())
                            })
                            .collect(),
                        line: true,
                    });
                }
            }
        }
        ExperimentKind::MultiFirmSweep => {
            chart.x_label = "m".into();
            chart.y_label = "profit per firm and customer".into();
            chart.log_x = true;
            chart.log_y = true;
            chart.series.push(Series {
                label: "simulation".into(),
                points: aggs.iter().map(|a| (a.m as f64, a.mean_profit)).collect(),
                line: false,
            });
            for (_, fit) in result.power_law_fits() {
                chart.series.push(Series {
                    label: format!("A={:.3} B={:.3}", fit.a, fit.b),
                    points: aggs
                        .iter()
                        .map(|a| (a.m as f64, fit.a * result.spec.r / (a.m as f64).powf(fit.b)))
                        .collect(),
                    line: true,
                });
            }
        }
        ExperimentKind::GammaSweep => {
            chart.x_label = "gamma".into();
            chart.y_label = "fitted exponent B".into();
            chart.series.push(Series {
                label: "fit".into(),
                points: result.power_law_fits().map(|(g, f)| (g, f.b)).collect(),
                line: false,
            });
            chart.series.push(Series {
                label: "1 + gamma/2".into(),
                points: result
                    .power_law_fits()
                    .map(|(g, _)| (g, 1.0 + g / 2.0))
                    .collect(),
                line: true,
            });
        }
        ExperimentKind::NonPbcDemo => {
            chart.x_label = "p1".into();
            chart.y_label = "X1".into();
            for p in &result.profiles {
                chart.series.push(Series {
                    label: format!("p2={}", p.p_other),
                    points: p.points.clone(),
                    line: true,
                });
            }
        }
        ExperimentKind::NashTable => {
            chart.x_label = "d".into();
            chart.y_label = "X*".into();
            if let Rows::Nash(rows) = &result.rows {
                chart.series.push(Series {
                    label: "closed form".into(),
                    points: rows.iter().map(|r| (r.d, r.x_star)).collect(),
                    line: true,
                });
            }
        }
    }
    chart
}

/// Writes the requested formats into `out_dir` as `<command>_<stamp>.<ext>`
/// and returns the paths written.
pub fn emit_results(
    result: &ExperimentResult,
    formats: &[Format],
    out_dir: &Path,
    stamp: &str,
) -> Result<Vec<PathBuf>, OutputError> {
    let base = format!("{}_{stamp}", result.spec.kind.command());
    let mut written = Vec::new();
    for format in formats {
        let (ext, bytes) = match format {
            Format::Csv => ("csv", to_csv(result)?),
            Format::Json => ("json", to_json(result)?),
            Format::Dat => ("dat", to_dat(result).into_bytes()),
            Format::Svg => ("svg", svg_chart(&chart_for(result)).into_bytes()),
        };
        let path = out_dir.join(format!("{base}.{ext}"));
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Firm index of every customer as rows of text, top row = largest y.
pub fn assignment_grid_text(choices: &[usize], n_side: usize) -> String {
    let mut out = String::new();
    for j in (0..n_side).rev() {
        let row: Vec<String> = (0..n_side)
            .map(|i| choices[j * n_side + i].to_string())
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn fs_error(path: &Path, source: io::Error) -> OutputError {
    OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|e| fs_error(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 0.169_039_661_488_382_6, 1e-300, 12345.678] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(f64::NAN), "");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("x.csv");
        assert!(matches!(
            write_atomic(&path, b"a"),
            Err(OutputError::Io { .. })
        ));
    }

    #[test]
    fn svg_is_well_formed() {
        let chart = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                label: "s".into(),
                points: vec![(1.0, 1.0), (10.0, 0.1), (0.0, 5.0)],
                line: true,
            }],
        };
        let svg = svg_chart(&chart);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn grid_text_layout() {
        let text = assignment_grid_text(&[0, 1, 1, 0], 2);
        assert_eq!(text, "1 0\n0 1\n");
    }
}
