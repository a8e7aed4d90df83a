//! CSV tables and static SVG figures for explanations.

use std::fmt::Write as _;

use super::importance::ImportanceRanking;
use super::pdp::PdpCurve;
use super::shap::{ShapExplanation, ShapSummary};
use crate::matrix::format_float;

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).unwrap();
    for r in rows {
        w.write_record(&r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn importance_csv(r: &ImportanceRanking) -> String {
    csv_table(&["rank", "feature", "importance"], r.entries.iter().enumerate().map(|(i, (n, v))| vec![(i + 1).to_string(), n.clone(), format_float(*v)]))
}

pub fn pdp_csv(c: &PdpCurve) -> String {
    csv_table(&[c.feature.as_str(), "mean_prediction"], c.grid.iter().zip(&c.mean_prediction).map(|(g, v)| vec![format_float(*g), format_float(*v)]))
}

/// One row per sample: id, base value, prediction, then phi per feature.
pub fn shap_csv(e: &ShapExplanation) -> String {
    let mut header = vec!["response_id", "base_value", "prediction"];
    header.extend(e.feature_names.iter().map(String::as_str));
    csv_table(
        &header,
        e.phi.iter().enumerate().map(|(i, phi)| {
            let mut r = vec![e.row_ids[i].clone(), format_float(e.base_value), format_float(e.prediction[i])];
            r.extend(phi.iter().map(|v| format_float(*v)));
            r
        }),
    )
}

pub fn summary_csv(s: &ShapSummary) -> String {
    csv_table(
        &["feature", "response_id", "phi", "standardized_value"],
        s.points.iter().map(|p| vec![p.feature.clone(), p.row_id.clone(), format_float(p.phi), format_float(p.value)]),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg { body: String::new(), width, height }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-size="{size}" font-family="sans-serif">{}</text>"#,
            escape(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(self.body, r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#);
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Maps `[lo, hi]` onto `[a, b]`; a degenerate range maps to the midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

/// Horizontal bars, most important on top. Shows at most `top` features.
pub fn importance_svg(r: &ImportanceRanking, title: &str, top: usize) -> String {
    let entries: Vec<&(String, f64)> = r.entries.iter().take(top).collect();
    let row_h = 18.0;
    let (left, right, head) = (220.0, 40.0, 40.0);
    let width = 720.0;
    let height = head + row_h * entries.len().max(1) as f64 + 30.0;
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 22.0, "middle", 14.0, title);
    let max = entries.iter().map(|e| e.1).fold(0.0, f64::max);
    for (i, (name, v)) in entries.iter().enumerate() {
        let y = head + i as f64 * row_h;
        let w = scale(*v, 0.0, max, 0.0, width - left - right);
        svg.text(left - 6.0, y + row_h * 0.7, "end", 11.0, name);
        let _ = writeln!(svg.body, r##"<rect x="{left}" y="{:.1}" width="{w:.2}" height="{:.1}" fill="#1f77b4"/>"##, y + 2.0, row_h - 4.0);
    }
    if entries.is_empty() {
        svg.text(width / 2.0, head + 12.0, "middle", 12.0, "no splits");
    }
    svg.finish()
}

pub fn pdp_svg(c: &PdpCurve, title: &str) -> String {
    let (width, height) = (560.0, 380.0);
    let (l, r, t, b) = (70.0, 20.0, 40.0, 50.0);
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 22.0, "middle", 14.0, title);
    let (gx0, gx1) = (c.grid[0], *c.grid.last().unwrap());
    let ylo = c.mean_prediction.iter().copied().fold(f64::INFINITY, f64::min);
    let yhi = c.mean_prediction.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    svg.line(l, height - b, width - r, height - b, "black");
    svg.line(l, t, l, height - b, "black");
    let pts: Vec<String> = c
        .grid
        .iter()
        .zip(&c.mean_prediction)
        .map(|(g, v)| format!("{:.2},{:.2}", scale(*g, gx0, gx1, l, width - r), scale(*v, ylo, yhi, height - b, t)))
        .collect();
    let _ = writeln!(svg.body, r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, pts.join(" "));
    for p in &pts {
        let (x, y) = p.split_once(',').unwrap();
        let _ = writeln!(svg.body, r##"<circle cx="{x}" cy="{y}" r="2.5" fill="#d62728"/>"##);
    }
    svg.text(l, height - b + 16.0, "start", 10.0, &format!("{gx0:.3}"));
    svg.text(width - r, height - b + 16.0, "end", 10.0, &format!("{gx1:.3}"));
    svg.text(l - 4.0, height - b, "end", 10.0, &format!("{ylo:.3}"));
    svg.text(l - 4.0, t + 8.0, "end", 10.0, &format!("{yhi:.3}"));
    svg.text((l + width - r) / 2.0, height - 12.0, "middle", 12.0, &c.feature);
    svg.text(16.0, (t + height - b) / 2.0, "middle", 12.0, "mean prediction");
    svg.finish()
}

/// Two-stop gradient from blue (low) to red (high) over z in [-2, 2].
fn value_color(z: f64) -> String {
    let t = ((z.clamp(-2.0, 2.0) + 2.0) / 4.0).clamp(0.0, 1.0);
    let (r0, g0, b0) = (0x1e as f64, 0x88 as f64, 0xe5 as f64);
    let (r1, g1, b1) = (0xff as f64, 0x00 as f64, 0x52 as f64);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r0, r1), mix(g0, g1), mix(b0, b1))
}

/// Beeswarm-style summary: one row per feature in rank order, phi on the x
/// axis, colour by standardized feature value. Points with similar phi are
/// spread vertically so they stay visible.
pub fn summary_svg(s: &ShapSummary, title: &str, top: usize) -> String {
    let features: Vec<&str> = s.ranking.iter().take(top).map(|(n, _)| n.as_str()).collect();
    let row_h = 26.0;
    let (left, right, head) = (220.0, 30.0, 40.0);
    let width = 760.0;
    let height = head + row_h * features.len().max(1) as f64 + 40.0;
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 22.0, "middle", 14.0, title);
    let shown: Vec<_> = s.points.iter().filter(|p| features.contains(&p.feature.as_str())).collect();
    let lim = shown.iter().map(|p| p.phi.abs()).fold(0.0, f64::max).max(1e-12);
    let x0 = scale(0.0, -lim, lim, left, width - right);
    svg.line(x0, head - 4.0, x0, height - 36.0, "#999999");
    for (i, f) in features.iter().enumerate() {
        let yc = head + (i as f64 + 0.5) * row_h;
        svg.text(left - 8.0, yc + 4.0, "end", 11.0, f);
        let mut bins: std::collections::HashMap<i64, usize> = std::collections::HashMap::new();
        for p in shown.iter().filter(|p| p.feature == *f) {
            let x = scale(p.phi, -lim, lim, left, width - right);
            let slot = bins.entry((x / 3.0).round() as i64).or_default();
            let k = *slot as f64;
            *slot += 1;
            let offset = if k == 0.0 { 0.0 } else { ((k + 1.0) / 2.0).floor() * if k as usize % 2 == 1 { 1.5 } else { -1.5 } };
            let y = yc + offset.clamp(-row_h / 2.0 + 2.0, row_h / 2.0 - 2.0);
            let _ = writeln!(svg.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}" fill-opacity="0.8"/>"#, value_color(p.value));
        }
    }
    svg.text((left + width - right) / 2.0, height - 14.0, "middle", 12.0, "SHAP value (impact on model output)");
    svg.text(width - right, height - 30.0, "end", 10.0, "colour: feature value, blue low, red high");
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::importance::ImportanceMethod;
    use crate::explain::shap::SummaryPoint;

    #[test]
    fn importance_outputs() {
        let r = ImportanceRanking { method: ImportanceMethod::Gain, entries: vec![("a<b".into(), 0.75), ("c".into(), 0.25)], flags: vec![] };
        let csv = importance_csv(&r);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,a<b,0.75");
        let svg = importance_svg(&r, "Importance", 10);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<rect").count(), 3);
    }

    #[test]
    fn pdp_outputs() {
        let c = PdpCurve { feature: "speaking_rate".into(), grid: vec![1.0, 2.0, 3.0], mean_prediction: vec![0.5, 1.0, 1.5], n_background: 4, flags: vec![] };
        assert_eq!(pdp_csv(&c).lines().count(), 4);
        let svg = pdp_svg(&c, "PDP");
        assert_eq!(svg.matches("<circle").count(), 3);
        let flat = PdpCurve { grid: vec![2.0], mean_prediction: vec![1.0], ..c };
        assert!(pdp_svg(&flat, "PDP").contains("<polyline"));
    }

    #[test]
    fn summary_outputs() {
        let s = ShapSummary {
            ranking: vec![("x".into(), 1.0)],
            points: vec![
                SummaryPoint { feature: "x".into(), row_id: "r1".into(), phi: 1.0, value: 1.0 },
                SummaryPoint { feature: "x".into(), row_id: "r2".into(), phi: -1.0, value: -1.0 },
            ],
        };
        let svg = summary_svg(&s, "SHAP", 20);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(value_color(-5.0), "#1e88e5");
        assert_eq!(value_color(2.0), "#ff0052");
        assert_eq!(summary_csv(&s).lines().count(), 3);
    }
}
