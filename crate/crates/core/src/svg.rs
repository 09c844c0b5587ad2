//! SVG 1.1 serialization of a vector scene.
//!
//! The background becomes a full-frame rect and every path one `<path>`
//! element with `C` cubic commands and a `Z` close, in paint order.
//! Coordinates are written with three decimal places.

use std::fmt::Write;

use crate::bezier::VectorScene;
use crate::geom::Color;

fn hex_color(color: Color) -> String {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", q(color[0]), q(color[1]), q(color[2]))
}

/// Serializes the scene as an SVG 1.1 document over a `width x height`
/// viewBox.
pub fn export_svg(scene: &VectorScene, width: usize, height: usize) -> String {
    let mut out = String::new();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"  <rect width="{width}" height="{height}" fill="{}"/>"#,
        hex_color(scene.background_color)
    )
    .unwrap();
    for path in &scene.paths {
        let k = path.num_segments();
        let start = path.anchors()[0];
        let mut d = format!("M {:.3},{:.3}", start.x, start.y);
        for i in 0..k {
            let seg = path.segment(i);
            write!(
                d,
                " C {:.3},{:.3} {:.3},{:.3} {:.3},{:.3}",
                seg.p1.x, seg.p1.y, seg.p2.x, seg.p2.y, seg.p3.x, seg.p3.y
            )
            .unwrap();
        }
        d.push_str(" Z");
        writeln!(
            out,
            r#"  <path d="{d}" fill="{}" fill-rule="evenodd"/>"#,
            hex_color(path.fill_color)
        )
        .unwrap();
    }
    writeln!(out, "</svg>").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bezier::ellipse_path;
    use crate::geom::Point;

    /// Tiny `d`-attribute parser: returns the M point and each C command's
    /// coordinate triplet end point and controls.
    fn parse_path_d(d: &str) -> (Point, Vec<[Point; 3]>) {
        let tokens: Vec<&str> = d.split_whitespace().collect();
        assert_eq!(tokens[0], "M");
        let parse_pt = |s: &str| {
            let (x, y) = s.split_once(',').unwrap();
            Point::new(x.parse().unwrap(), y.parse().unwrap())
        };
        let start = parse_pt(tokens[1]);
        let mut curves = Vec::new();
        let mut i = 2;
        while i < tokens.len() {
            match tokens[i] {
                "C" => {
                    curves.push([
                        parse_pt(tokens[i + 1]),
                        parse_pt(tokens[i + 2]),
                        parse_pt(tokens[i + 3]),
                    ]);
                    i += 4;
                }
                "Z" => break,
                other => panic!("unexpected token {other}"),
            }
        }
        (start, curves)
    }

    fn extract_attr<'a>(line: &'a str, attr: &str) -> &'a str {
        let needle = format!("{attr}=\"");
        let start = line.find(&needle).unwrap() + needle.len();
        let end = line[start..].find('"').unwrap();
        &line[start..start + end]
    }

    #[test]
    fn empty_scene_has_rect_and_no_paths() {
        let scene = VectorScene::new([0.25, 0.5, 1.0]);
        let doc = export_svg(&scene, 64, 48);
        assert_eq!(doc.matches("<rect").count(), 1);
        assert_eq!(doc.matches("<path").count(), 0);
        assert!(doc.contains(r#"viewBox="0 0 64 48""#));
        assert!(doc.contains("#4080ff"));
    }

    #[test]
    fn paths_appear_in_paint_order() {
        let mut scene = VectorScene::new([0.0; 3]);
        for i in 0..9 {
            scene.paths.push(ellipse_path(
                Point::new(10.0 + i as f64, 10.0),
                3.0,
                2.0,
                4,
                [i as f64 / 9.0, 0.0, 0.0],
            ));
        }
        let doc = export_svg(&scene, 32, 32);
        assert_eq!(doc.matches("<path").count(), 9);
        // Fill colors appear in scene order.
        let fills: Vec<&str> = doc
            .lines()
            .filter(|l| l.contains("<path"))
            .map(|l| extract_attr(l, "fill"))
            .collect();
        for (i, fill) in fills.iter().enumerate() {
            let expected = format!("#{:02x}0000", ((i as f64 / 9.0) * 255.0).round() as u8);
            assert_eq!(*fill, expected);
        }
        assert!(doc.contains(r#"fill-rule="evenodd""#));
    }

    #[test]
    fn parsed_endpoints_match_scene_within_formatting() {
        let mut scene = VectorScene::new([0.9; 3]);
        scene
            .paths
            .push(ellipse_path(Point::new(17.3333, 9.87654), 5.4321, 3.14159, 5, [0.1, 0.6, 0.3]));
        let doc = export_svg(&scene, 32, 32);
        let line = doc.lines().find(|l| l.contains("<path")).unwrap();
        let (start, curves) = parse_path_d(extract_attr(line, "d"));
        let path = &scene.paths[0];
        let close = |a: Point, b: Point| (a.x - b.x).abs() < 1e-3 && (a.y - b.y).abs() < 1e-3;
        assert!(close(start, path.anchors()[0]));
        assert_eq!(curves.len(), path.num_segments());
        for (i, c) in curves.iter().enumerate() {
            let seg = path.segment(i);
            assert!(close(c[0], seg.p1));
            assert!(close(c[1], seg.p2));
            assert!(close(c[2], seg.p3));
        }
        // Closing curve returns to the first anchor.
        assert!(close(curves.last().unwrap()[2], path.anchors()[0]));
    }
}
