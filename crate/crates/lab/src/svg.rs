//! Minimal SVG emission: traces as polylines over a fixed upper-half-plane
//! viewport. Figures are conveniences for eyeballing runs, never inputs to
//! any check.

use sle_lab_core::C64;
use std::fmt::Write as _;

/// Fixed world window `[x1-1, x2+1] x [0, 2(x2-x1)]` rendered at `width`
/// pixels; the vertical axis is flipped so height grows upward.
pub struct Viewport {
    pub x_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub width: f64,
}

impl Viewport {
    pub fn standard(x1: f64, x2: f64) -> Self {
        Viewport {
            x_min: x1 - 1.0,
            x_max: x2 + 1.0,
            y_max: 2.0 * (x2 - x1),
            width: 800.0,
        }
    }

    fn scale(&self) -> f64 {
        self.width / (self.x_max - self.x_min)
    }

    fn height(&self) -> f64 {
        self.y_max * self.scale()
    }

    fn map(&self, p: C64) -> (f64, f64) {
        let s = self.scale();
        ((p.re - self.x_min) * s, self.height() - p.im * s)
    }
}

fn fmt_coord(v: f64) -> String {
    format!("{:.2}", v)
}

/// Render polylines (one per curve) with a baseline axis.
pub fn render(viewport: &Viewport, curves: &[(&[C64], &str)]) -> String {
    let w = viewport.width;
    let h = viewport.height();
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"  <rect width="{w:.2}" height="{h:.2}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r##"  <line x1="0" y1="{h:.2}" x2="{w:.2}" y2="{h:.2}" stroke="#888" stroke-width="1"/>"##
    )
    .unwrap();
    for (points, color) in curves {
        if points.len() < 2 {
            continue;
        }
        let coords: Vec<String> = points
            .iter()
            .map(|&p| {
                let (x, y) = viewport.map(p);
                format!("{},{}", fmt_coord(x), fmt_coord(y))
            })
            .collect();
        writeln!(
            out,
            r#"  <polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
            coords.join(" ")
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_lands_inside_the_viewport() {
        let vp = Viewport::standard(0.0, 1.0);
        let pts = vec![C64::new(0.0, 0.0), C64::new(0.5, 1.0), C64::new(1.0, 0.5)];
        let svg = render(&vp, &[(&pts, "navy")]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // origin maps to x = 1 world unit from the left edge = 800/3 px
        let (x0, y0) = vp.map(C64::new(0.0, 0.0));
        assert!((x0 - 800.0 / 3.0).abs() < 1e-9);
        assert!((y0 - vp.height()).abs() < 1e-9);
        // top of the window maps to y = 0
        let (_, y_top) = vp.map(C64::new(0.0, 2.0));
        assert!(y_top.abs() < 1e-9);
    }

    #[test]
    fn short_curves_are_skipped_not_errored() {
        let vp = Viewport::standard(0.0, 1.0);
        let single = vec![C64::new(0.2, 0.1)];
        let svg = render(&vp, &[(&single, "red")]);
        assert!(!svg.contains("polyline"));
    }
}
