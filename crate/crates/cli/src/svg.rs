//! Minimal SVG plotting: polylines, error bars, shaded bands and axes.
//! Enough for the crossing and phase-diagram figures; nothing interactive.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 50.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
    legend: Vec<(String, String)>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_range: (f64::INFINITY, f64::NEG_INFINITY),
            y_range: (f64::INFINITY, f64::NEG_INFINITY),
            body: String::new(),
            legend: Vec::new(),
        }
    }

    pub fn include(&mut self, x: f64, y: f64) {
        if x.is_finite() {
            self.x_range.0 = self.x_range.0.min(x);
            self.x_range.1 = self.x_range.1.max(x);
        }
        if y.is_finite() {
            self.y_range.0 = self.y_range.0.min(y);
            self.y_range.1 = self.y_range.1.max(y);
        }
    }

    fn sx(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_L + (x - lo) / (hi - lo).max(1e-300) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_B - (y - lo) / (hi - lo).max(1e-300) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    /// Expand ranges by a small padding; call once after all `include`s.
    pub fn pad(&mut self) {
        let (dx, dy) = (
            (self.x_range.1 - self.x_range.0).max(1e-12) * 0.05,
            (self.y_range.1 - self.y_range.0).max(1e-12) * 0.08,
        );
        self.x_range.0 -= dx;
        self.x_range.1 += dx;
        self.y_range.0 -= dy;
        self.y_range.1 += dy;
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, label: Option<&str>) {
        let path: String = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(
            self.body,
            r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>"#
        )
        .unwrap();
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
    }

    pub fn points_with_errors(
        &mut self,
        pts: &[(f64, f64, f64)],
        color: &str,
        label: Option<&str>,
    ) {
        for &(x, y, s) in pts {
            let (cx, cy) = (self.sx(x), self.sy(y));
            if s > 0.0 {
                let (y0, y1) = (self.sy(y - s), self.sy(y + s));
                writeln!(
                    self.body,
                    r#"<line x1="{cx:.2}" y1="{y0:.2}" x2="{cx:.2}" y2="{y1:.2}" stroke="{color}" stroke-width="1"/>"#
                )
                .unwrap();
            }
            writeln!(
                self.body,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.6" fill="{color}"/>"#
            )
            .unwrap();
        }
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
    }

    /// Vertical shaded band, e.g. a transition estimate with its error.
    pub fn vband(&mut self, x0: f64, x1: f64, color: &str) {
        let (a, b) = (self.sx(x0), self.sx(x1));
        writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{MARGIN_T}" width="{:.2}" height="{:.2}" fill="{color}" opacity="0.25"/>"#,
            a.min(b),
            (a - b).abs().max(1.0),
            HEIGHT - MARGIN_T - MARGIN_B
        )
        .unwrap();
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        )
        .unwrap();
        // Axes with ~6 ticks each.
        writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{:.2}" height="{:.2}" fill="none" stroke="#333" stroke-width="1"/>"##,
            WIDTH - MARGIN_L - MARGIN_R,
            HEIGHT - MARGIN_T - MARGIN_B
        )
        .unwrap();
        for i in 0..=5 {
            let fx = self.x_range.0 + (self.x_range.1 - self.x_range.0) * i as f64 / 5.0;
            let fy = self.y_range.0 + (self.y_range.1 - self.y_range.0) * i as f64 / 5.0;
            let (tx, ty) = (self.sx(fx), self.sy(fy));
            writeln!(
                s,
                r##"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{:.2}" stroke="#333"/>"##,
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 5.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{tx:.2}" y="{:.2}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#,
                HEIGHT - MARGIN_B + 18.0,
                trim_num(fx)
            )
            .unwrap();
            writeln!(
                s,
                r##"<line x1="{:.2}" y1="{ty:.2}" x2="{MARGIN_L}" y2="{ty:.2}" stroke="#333"/>"##,
                MARGIN_L - 5.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end" font-family="sans-serif">{}</text>"#,
                MARGIN_L - 8.0,
                ty + 4.0,
                trim_num(fy)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{:.2}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            xml_escape(&self.y_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            WIDTH / 2.0,
            xml_escape(&self.title)
        )
        .unwrap();
        s.push_str(&self.body);
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = MARGIN_T + 16.0 + 16.0 * i as f64;
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#,
                WIDTH - MARGIN_R - 120.0,
                y - 4.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{y:.2}" font-size="11" font-family="sans-serif">{}</text>"#,
                WIDTH - MARGIN_R - 100.0,
                xml_escape(label)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_svg() {
        let mut plot = Plot::new("t", "x", "y");
        for i in 0..10 {
            plot.include(i as f64, (i * i) as f64);
        }
        plot.pad();
        plot.polyline(
            &(0..10).map(|i| (i as f64, (i * i) as f64)).collect::<Vec<_>>(),
            PALETTE[0],
            Some("curve"),
        );
        plot.points_with_errors(&[(2.0, 4.0, 1.0)], PALETTE[1], None);
        plot.vband(3.0, 4.0, PALETTE[2]);
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("curve"));
    }
}
