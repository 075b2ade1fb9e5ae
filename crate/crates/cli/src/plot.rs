//! Gflops/s against mesh size, one panel per `lx`, one polyline per variant.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 48.0;
const COLUMNS: usize = 3;
const COLORS: [&str; 6] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#444444"];

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub lx: usize,
    pub nel: usize,
    pub variant: String,
    pub gflops: f64,
}

/// Reads the columns the plot needs. Errors name the offending line.
pub fn parse_csv(text: &str) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| anyhow!("line 1: {e}"))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("line 1: missing column '{name}'"));
    let (lx, nel, variant, gflops) = (col("lx")?, col("nel")?, col("variant")?, col("gflops")?);
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => anyhow!("line {}: {e}", p.line()),
            None => anyhow!("{e}"),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).ok_or_else(|| anyhow!("line {line}: missing field {}", i + 1));
        let num = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>().map_err(|_| anyhow!("line {line}: '{s}' is not a number"))
        };
        let int = |i: usize| -> Result<usize> {
            let s = field(i)?;
            s.parse::<usize>().map_err(|_| anyhow!("line {line}: '{s}' is not a non-negative integer"))
        };
        let p = Point { lx: int(lx)?, nel: int(nel)?, variant: field(variant)?.to_string(), gflops: num(gflops)? };
        if p.nel == 0 || !p.gflops.is_finite() || p.gflops < 0.0 {
            bail!("line {line}: nel must be positive and gflops finite and non-negative");
        }
        points.push(p);
    }
    if points.is_empty() {
        bail!("line 1: no data rows");
    }
    Ok(points)
}

fn nice_max(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let p = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|&m| m >= x).unwrap_or(10.0 * p)
}

pub fn render_svg(points: &[Point]) -> String {
    let mut panels: BTreeMap<usize, Vec<&Point>> = BTreeMap::new();
    for p in points {
        panels.entry(p.lx).or_default().push(p);
    }
    let mut variants: Vec<&str> = points.iter().map(|p| p.variant.as_str()).collect();
    variants.sort();
    variants.dedup();

    let cols = panels.len().clamp(1, COLUMNS);
    let rows = panels.len().div_ceil(COLUMNS);
    let (cell_w, cell_h) = (PANEL_W + 2.0 * MARGIN, PANEL_H + 2.0 * MARGIN);
    let (width, height) = (cols as f64 * cell_w, rows as f64 * cell_h + 30.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (i, v) in variants.iter().enumerate() {
        let x = 10.0 + 120.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<line x1="{x}" y1="15" x2="{}" y2="15" stroke="{c}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="19">{v}</text>"#, x + 25.0);
    }

    for (n, (lx, pts)) in panels.iter().enumerate() {
        let ox = (n % COLUMNS) as f64 * cell_w + MARGIN;
        let oy = (n / COLUMNS) as f64 * cell_h + MARGIN + 30.0;
        let lmin = pts.iter().map(|p| (p.nel as f64).log2()).fold(f64::INFINITY, f64::min);
        let lmax = pts.iter().map(|p| (p.nel as f64).log2()).fold(f64::NEG_INFINITY, f64::max);
        let span = if lmax > lmin { lmax - lmin } else { 1.0 };
        let ymax = nice_max(pts.iter().map(|p| p.gflops).fold(0.0, f64::max));
        let px = |nel: usize| {
            if lmax > lmin {
                ox + ((nel as f64).log2() - lmin) / span * PANEL_W
            } else {
                ox + PANEL_W / 2.0
            }
        };
        let py = |g: f64| oy + PANEL_H - g / ymax * PANEL_H;

        let _ = writeln!(s, r#"<g class="panel" data-lx="{lx}">"#);
        let _ = writeln!(s, r##"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-weight="bold">lx = {lx}</text>"#, ox + PANEL_W / 2.0, oy - 8.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">elements (log2)</text>"#, ox + PANEL_W / 2.0, oy + PANEL_H + 34.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{ymax}</text>"#, ox - 4.0, oy + 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, ox - 4.0, oy + PANEL_H);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">Gflops/s</text>"#,
            ox - 30.0,
            oy + PANEL_H / 2.0,
            ox - 30.0,
            oy + PANEL_H / 2.0
        );
        let mut ticks: Vec<usize> = pts.iter().map(|p| p.nel).collect();
        ticks.sort_unstable();
        ticks.dedup();
        for t in ticks {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#, px(t), oy + PANEL_H + 16.0);
        }
        for (i, v) in variants.iter().enumerate() {
            let mut line: Vec<&&Point> = pts.iter().filter(|p| p.variant == *v).collect();
            if line.is_empty() {
                continue;
            }
            line.sort_by_key(|p| p.nel);
            let c = COLORS[i % COLORS.len()];
            let coords: Vec<String> = line.iter().map(|p| format!("{:.2},{:.2}", px(p.nel), py(p.gflops))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, coords.join(" "));
            for p in line {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(p.nel), py(p.gflops));
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
