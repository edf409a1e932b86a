//! Minimal hand-emitted SVG: polylines, polygons, and axis-aligned text on a
//! world-coordinate canvas. CSV files next to each figure stay the canonical
//! record; these are quick-look renderings only.

use std::fmt::Write;

pub struct Canvas {
    min: [f64; 2],
    scale: f64,
    width: f64,
    height: f64,
    pad: f64,
    body: String,
}

impl Canvas {
    /// Canvas over the world box `[min_x, min_y, max_x, max_y]`, `width_px`
    /// wide plus padding; height follows the aspect ratio.
    pub fn new(bbox: [f64; 4], width_px: f64) -> Self {
        let span_x = (bbox[2] - bbox[0]).max(1e-12);
        let span_y = (bbox[3] - bbox[1]).max(1e-12);
        let scale = width_px / span_x;
        let pad = 20.0;
        Canvas {
            min: [bbox[0], bbox[1]],
            scale,
            width: width_px + 2.0 * pad,
            height: span_y * scale + 2.0 * pad,
            pad,
            body: String::new(),
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            self.pad + (p[0] - self.min[0]) * self.scale,
            self.height - self.pad - (p[1] - self.min[1]) * self.scale,
        )
    }

    fn points_attr(&self, points: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for (k, &p) in points.iter().enumerate() {
            let (x, y) = self.map(p);
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s
    }

    pub fn polyline(&mut self, points: &[[f64; 2]], stroke: &str, width: f64) {
        if points.len() < 2 {
            return;
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>",
            self.points_attr(points)
        );
    }

    pub fn polygon(&mut self, points: &[[f64; 2]], stroke: &str, width: f64, fill: &str) {
        if points.len() < 3 {
            return;
        }
        let _ = writeln!(
            self.body,
            "<polygon points=\"{}\" fill=\"{fill}\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>",
            self.points_attr(points)
        );
    }

    pub fn segment(&mut self, a: [f64; 2], b: [f64; 2], stroke: &str, width: f64) {
        let (x1, y1) = self.map(a);
        let (x2, y2) = self.map(b);
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>"
        );
    }

    pub fn circle(&mut self, center: [f64; 2], radius_px: f64, fill: &str) {
        let (x, y) = self.map(center);
        let _ = writeln!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{radius_px}\" fill=\"{fill}\"/>"
        );
    }

    pub fn text(&mut self, at: [f64; 2], label: &str) {
        let (x, y) = self.map(at);
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"11\" font-family=\"sans-serif\">{label}</text>"
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}
