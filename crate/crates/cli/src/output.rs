//! Atomic file emission and the SVG renderer.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use zeeman_eit::spectra::{Peak, Spectrum};

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn spectrum_csv(s: &Spectrum<f64>) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf).map_err(io::Error::other)?;
    Ok(buf)
}

/// Writes `<stem>.csv`, `<stem>.json` and optionally `<stem>.svg`; returns
/// the paths written.
pub fn emit_spectrum<S: Serialize>(
    dir: &Path,
    stem: &str,
    s: &Spectrum<f64>,
    meta: &S,
    svg: Option<(&str, &[Peak])>,
) -> io::Result<Vec<PathBuf>> {
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    write_atomic(&csv, &spectrum_csv(s)?)?;
    write_json(&json, meta)?;
    let mut out = vec![csv, json];
    if let Some((title, peaks)) = svg {
        let p = dir.join(format!("{stem}.svg"));
        write_atomic(&p, render_svg(s, peaks, title).as_bytes())?;
        out.push(p);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Spectrum trace with dashed markers at the fitted peak centers.
pub fn render_svg(s: &Spectrum<f64>, peaks: &[Peak], title: &str) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let x = s.detunings();
    let y = s.absorption();
    let (x0, x1) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let (mut y0, mut y1) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |v: f64| M + (v - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (W - 2.0 * M);
    let sy = |v: f64| H - M - (v - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">probe detuning (MHz)</text>"#,
        W / 2.0,
        H - 12.0
    );
    for k in 0..=4 {
        let v = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{v:.1}</text>"#,
            sx(v),
            H - M + 16.0
        );
    }
    for p in peaks {
        if p.center < x0 || p.center > x1 {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{M}" x2="{0:.2}" y2="{1}" stroke="red" stroke-dasharray="4 3"/>"#,
            sx(p.center),
            H - M
        );
        if let Some(k) = p.index {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{}" text-anchor="middle" fill="red">{k:+}</text>"#,
                sx(p.center),
                M - 4.0
            );
        }
    }
    let pts: Vec<String> = x
        .iter()
        .zip(&y)
        .map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.2" points="{}"/>"#,
        pts.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}
