//! SVG rendering of a prediction over its image.

use std::fmt::Write as _;

use probshape::inference::PredictiveDistribution;
use probshape::Result;

pub const REFERENCE_COLOR: &str = "#ff0000";
pub const MEAN_COLOR: &str = "#00ffff";
pub const SAMPLE_COLOR: &str = "#0000ff";

pub struct Raster<'a> {
    pub width: usize,
    pub height: usize,
    pub pixels: &'a [u8],
}

pub struct PlotInput<'a> {
    pub raster: Raster<'a>,
    pub dist: &'a PredictiveDistribution<f64>,
    pub reference: Option<&'a [f64]>,
    pub samples: &'a [Vec<f64>],
    pub levels: &'a [f64],
    pub stride: usize,
    pub scale: f64,
}

/// Fully saturated HSV color with hue `h` in `[0, 1)`, as `#rrggbb`.
pub fn hue_color(h: f64) -> String {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let x = 1.0 - (h6 % 2.0 - 1.0).abs();
    let (r, g, b) = match h6 as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (v * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", q(r), q(g), q(b))
}

fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn polygon(out: &mut String, contour: &[f64], scale: f64, color: &str, width: f64) {
    let pts: Vec<String> = contour
        .chunks_exact(2)
        .map(|p| format!("{},{}", num(p[0] * scale), num(p[1] * scale)))
        .collect();
    let _ = writeln!(
        out,
        r#"    <polygon points="{}" fill="none" stroke="{color}" stroke-width="{}"/>"#,
        pts.join(" "),
        num(width)
    );
}

pub fn render(input: &PlotInput<'_>) -> Result<String> {
    let s = input.scale;
    let (w, h) = (input.raster.width, input.raster.height);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        num(w as f64 * s),
        num(h as f64 * s),
        num(w as f64 * s),
        num(h as f64 * s)
    );
    out.push_str("  <g id=\"image\" shape-rendering=\"crispEdges\">\n");
    for r in 0..h {
        for c in 0..w {
            let v = input.raster.pixels[r * w + c];
            let _ = writeln!(
                out,
                r##"    <rect x="{}" y="{}" width="{}" height="{}" fill="#{v:02x}{v:02x}{v:02x}"/>"##,
                num(c as f64 * s),
                num(r as f64 * s),
                num(s),
                num(s)
            );
        }
    }
    out.push_str("  </g>\n");
    let line = (s / 6.0).max(0.5);
    if let Some(reference) = input.reference {
        out.push_str("  <g id=\"reference\">\n");
        polygon(&mut out, reference, s, REFERENCE_COLOR, line);
        out.push_str("  </g>\n");
    }
    if !input.samples.is_empty() {
        out.push_str("  <g id=\"samples\">\n");
        for sample in input.samples {
            polygon(&mut out, sample, s, SAMPLE_COLOR, line * 0.6);
        }
        out.push_str("  </g>\n");
    }
    out.push_str("  <g id=\"mean\">\n");
    polygon(&mut out, &input.dist.mean, s, MEAN_COLOR, line);
    out.push_str("  </g>\n");
    out.push_str("  <g id=\"ellipses\" fill=\"none\">\n");
    for (i, e) in input.dist.ellipses(input.levels, input.stride)? {
        let (cx, cy) = (e.center[0] * s, e.center[1] * s);
        let _ = writeln!(
            out,
            r#"    <ellipse data-vertex="{i}" data-level="{}" cx="{}" cy="{}" rx="{}" ry="{}" transform="rotate({} {} {})" stroke="{}" stroke-width="{}"/>"#,
            num(e.level),
            num(cx),
            num(cy),
            num(e.semi_axes[0] * s),
            num(e.semi_axes[1] * s),
            num(e.angle.to_degrees()),
            num(cx),
            num(cy),
            hue_color(e.angle / std::f64::consts::PI),
            num(line * 0.5)
        );
    }
    out.push_str("  </g>\n");
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hue_wheel() {
        assert_eq!(hue_color(0.0), "#ff0000");
        assert_eq!(hue_color(1.0 / 3.0), "#00ff00");
        assert_eq!(hue_color(2.0 / 3.0), "#0000ff");
        assert_eq!(hue_color(0.5), "#00ffff");
    }

    #[test]
    fn no_negative_zero() {
        assert_eq!(num(-0.0001), "0.000");
        assert_eq!(num(1.23456), "1.235");
    }
}
