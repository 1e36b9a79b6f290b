//! Minimal deterministic SVG line plots rendered from parsed CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::record::Table;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 10] =
    ["#440154", "#482878", "#3e4989", "#31688e", "#26828e", "#1f9e89", "#35b779", "#6ece58", "#b5de2b", "#fde725"];

/// Which columns to draw.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub y: String,
    /// Optional half-width of an error bar, in the units of `y`.
    pub err: Option<String>,
    /// Columns whose values label a curve.
    pub series: Vec<String>,
    /// Keep only rows where these columns have these values.
    pub filter: Vec<(String, String)>,
}

type Curve = Vec<(f64, f64, f64)>;

fn num(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn curves(table: &Table, spec: &PlotSpec) -> Vec<(String, Curve)> {
    let col = |name: &str| table.column(name);
    let (Some(xc), Some(yc)) = (col(&spec.x), col(&spec.y)) else {
        return Vec::new();
    };
    let ec = spec.err.as_deref().and_then(col);
    let sc: Vec<(String, usize)> =
        spec.series.iter().filter_map(|s| col(s).map(|c| (s.clone(), c))).collect();
    let fc: Vec<(usize, &str)> = spec.filter.iter().filter_map(|(k, v)| col(k).map(|c| (c, v.as_str()))).collect();
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<String, Curve> = BTreeMap::new();
    for row in &table.rows {
        if fc.iter().any(|&(c, v)| row[c] != v) {
            continue;
        }
        let (Some(x), Some(y)) = (num(&row[xc]), num(&row[yc])) else {
            continue;
        };
        let e = ec.and_then(|c| num(&row[c])).unwrap_or(0.0);
        let label = sc.iter().map(|(k, c)| format!("{k}={}", row[*c])).collect::<Vec<_>>().join(" ");
        if !map.contains_key(&label) {
            order.push(label.clone());
        }
        map.entry(label).or_default().push((x, y, e));
    }
    order
        .into_iter()
        .map(|l| {
            let mut c = map.remove(&l).unwrap_or_default();
            c.sort_by(|a, b| a.0.total_cmp(&b.0));
            (l, c)
        })
        .collect()
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Render the plot. Identical tables give identical bytes.
pub fn line_plot(table: &Table, spec: &PlotSpec) -> String {
    let cs = curves(table, spec);
    let pts = || cs.iter().flat_map(|(_, c)| c.iter());
    let (x0, x1) = nice_range(pts().map(|p| p.0).fold(f64::INFINITY, f64::min), pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = nice_range(
        pts().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min),
        pts().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max),
    );
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{}</text>"#, MARGIN_L + pw / 2.0, escape(&spec.title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN_B + 16.0,
            tick(xv)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_L - 6.0, sy(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_L + pw / 2.0, HEIGHT - 12.0, escape(&spec.x));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(&spec.y)
    );
    for (i, (label, c)) in cs.iter().enumerate() {
        let color = PALETTE[(i * (PALETTE.len() - 1)) / cs.len().saturating_sub(1).max(1) % PALETTE.len()];
        let path: Vec<String> = c.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for &(x, y, e) in c {
            if e > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    sx(x),
                    sy(y - e),
                    sx(x),
                    sy(y + e)
                );
            }
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = MARGIN_T + 8.0 + 14.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 16.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 20.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let r = format!("{v:.3}");
    let r = r.trim_end_matches('0').trim_end_matches('.');
    if r == "-0" { "0".into() } else { r.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table::parse("N,p,value\n2,0.5,1\n2,0.0,0\n4,0.0,0\n4,0.5,1\n4,0.3,NaN\n").unwrap()
    }

    fn spec() -> PlotSpec {
        PlotSpec { title: "F".into(), x: "p".into(), y: "value".into(), err: None, series: vec!["N".into()], filter: vec![] }
    }

    #[test]
    fn deterministic_and_complete() {
        let a = line_plot(&table(), &spec());
        assert_eq!(a, line_plot(&table(), &spec()));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert_eq!(a.matches("<circle").count(), 4);
        assert!(a.contains("N=2") && a.contains("N=4"));
    }

    #[test]
    fn points_sorted_by_x() {
        let c = curves(&table(), &spec());
        assert_eq!(c[0].1.iter().map(|p| p.0).collect::<Vec<_>>(), [0.0, 0.5]);
    }

    #[test]
    fn filter_drops_rows() {
        let mut sp = spec();
        sp.filter = vec![("N".into(), "4".into())];
        assert_eq!(curves(&table(), &sp).len(), 1);
    }
}
