//! Result files. The JSON file is the serialized [`ExperimentResult`]; the
//! CSV file lists estimates and tests; SVG plots carry their raw numbers in
//! `data-*` attributes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EmitFormat, ExperimentResult, Histogram, Series};
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn stem(result: &ExperimentResult) -> String {
    serde_json::to_value(result.experiment)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "experiment".into())
}

/// Writes the requested formats into `dir` and returns the paths written.
pub fn emit(result: &ExperimentResult, dir: &Path, formats: &[EmitFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = stem(result);
    let mut written = Vec::new();
    for format in formats {
        match format {
            EmitFormat::Json => {
                let path = dir.join(format!("{stem}.json"));
                fs::write(&path, result.to_json()?)?;
                written.push(path);
            }
            EmitFormat::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                fs::write(&path, to_csv(result))?;
                written.push(path);
            }
            EmitFormat::Svg => {
                for (name, svg) in to_svgs(result) {
                    let path = dir.join(name);
                    fs::write(&path, svg)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// `kind,n,name,value,std_error,p_value` rows for estimates and tests.
pub fn to_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("kind,n,name,value,std_error,p_value\n");
    for e in &result.estimates {
        let se = e.std_error.map(|s| format!("{s:e}")).unwrap_or_default();
        let _ = writeln!(out, "estimate,{},{},{:e},{se},", e.n, e.name, e.value);
    }
    for t in &result.tests {
        let _ = writeln!(out, "test,{},{},{:e},,{:e}", t.n, t.name, t.statistic, t.p_value);
    }
    out
}

/// One histogram plot per histogram and one ECDF plot per raw series.
pub fn to_svgs(result: &ExperimentResult) -> Vec<(String, String)> {
    let stem = stem(result);
    let mut out: Vec<(String, String)> = result
        .histograms
        .iter()
        .map(|h| (format!("{stem}_{}_n{}.svg", h.name, h.n), histogram_svg(h)))
        .collect();
    out.extend(result.raw.iter().map(|s| (format!("{stem}_{}_n{}_ecdf.svg", s.name, s.n), ecdf_svg(s))));
    out
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn histogram_svg(h: &Histogram) -> String {
    let top = h
        .observed
        .iter()
        .map(|&o| o as f64)
        .chain(h.expected.iter().flatten().copied())
        .fold(1.0, f64::max);
    let slot = (WIDTH - 2.0 * MARGIN) / h.bins.len().max(1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - v / top * (HEIGHT - 2.0 * MARGIN);
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" data-name="{}" data-n="{}">"#,
        h.name, h.n
    );
    svg.push('\n');
    for (i, (&bin, &count)) in h.bins.iter().zip(&h.observed).enumerate() {
        let expected = h.expected.as_ref().map(|e| format!(r#" data-expected="{}""#, e[i])).unwrap_or_default();
        let _ = writeln!(
            svg,
            r##"<rect class="bar" data-bin="{bin}" data-count="{count}"{expected} x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#7a9cc6"/>"##,
            MARGIN + i as f64 * slot + 0.1 * slot,
            y(count as f64),
            0.8 * slot,
            HEIGHT - MARGIN - y(count as f64),
        );
    }
    if let Some(expected) = &h.expected {
        let points: Vec<String> = expected
            .iter()
            .enumerate()
            .map(|(i, &e)| format!("{:.2},{:.2}", MARGIN + (i as f64 + 0.5) * slot, y(e)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline class="expected" data-values="{}" points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
            join(expected),
            points.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn ecdf_svg(s: &Series) -> String {
    let mut values = s.values.clone();
    values.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        (Some(&lo), _) => (lo - 0.5, lo + 0.5),
        _ => (0.0, 1.0),
    };
    let x = |v: f64| MARGIN + (v - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let y = |p: f64| HEIGHT - MARGIN - p * (HEIGHT - 2.0 * MARGIN);
    let count = values.len().max(1) as f64;
    let mut path = format!("M{:.2},{:.2}", x(lo), y(0.0));
    for (i, &v) in values.iter().enumerate() {
        let _ = write!(path, " H{:.2} V{:.2}", x(v), y((i + 1) as f64 / count));
    }
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" data-name="{name}" data-n="{n}">"#,
            "\n",
            r##"<path class="ecdf" data-values="{values}" d="{path}" fill="none" stroke="#2c3e50"/>"##,
            "\n</svg>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        name = s.name,
        n = s.n,
        values = join(&values),
        path = path,
    )
}
