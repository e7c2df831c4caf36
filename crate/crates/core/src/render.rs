//! SVG drawing of a floorplan.
//!
//! User units are millimeters (1 m = 1000 units) with y pointing up in world
//! coordinates, so world y is negated on output.

use std::fmt::Write as _;

use crate::geom::Point2;
use crate::topology::FloorPlan;

pub const MM_PER_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RenderOptions {
    /// Draw a light 1 m grid under the plan.
    pub grid: bool,
}

fn mm(p: Point2) -> (f64, f64) {
    (p.x * MM_PER_M, -p.y * MM_PER_M)
}

pub fn render_svg(plan: &FloorPlan, opts: &RenderOptions) -> String {
    let f = &plan.frame;
    let (x0, y1) = (f.x_min, f.y_min);
    let (x1, y0) = (
        f.x_min + f.width as f64 * f.pixel_size,
        f.y_min + f.height as f64 * f.pixel_size,
    );
    let (vx, vy) = mm(Point2::new(x0, y0));
    let (vw, vh) = ((x1 - x0) * MM_PER_M, (y0 - y1) * MM_PER_M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}mm" height="{:.0}mm" viewBox="{vx:.3} {vy:.3} {vw:.3} {vh:.3}">"#,
        vw.max(1.0),
        vh.max(1.0),
    );
    if opts.grid && vw > 0.0 && vh > 0.0 {
        s.push_str(r##"<g class="grid" stroke="#cccccc" stroke-width="5">"##);
        s.push('\n');
        for k in (x0.ceil() as i64)..=(x1.floor() as i64) {
            let x = k as f64 * MM_PER_M;
            let _ = writeln!(s, r#"<line x1="{x:.3}" y1="{vy:.3}" x2="{x:.3}" y2="{:.3}"/>"#, vy + vh);
        }
        for k in (y1.ceil() as i64)..=(y0.floor() as i64) {
            let y = -(k as f64) * MM_PER_M;
            let _ = writeln!(s, r#"<line x1="{vx:.3}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}"/>"#, vx + vw);
        }
        s.push_str("</g>\n");
    }
    for room in &plan.rooms {
        let mut d = String::new();
        for (i, &p) in room.polygon.iter().enumerate() {
            let (x, y) = mm(p);
            let _ = write!(d, "{}{x:.3} {y:.3} ", if i == 0 { "M" } else { "L" });
        }
        d.push('Z');
        let _ = writeln!(
            s,
            r##"<path id="{}" class="room" d="{d}" fill="none" stroke="#000000" stroke-width="40"/>"##,
            room.id
        );
    }
    for door in &plan.doors {
        let (ax, ay) = mm(door.p0);
        let (bx, by) = mm(door.p1);
        let _ = writeln!(
            s,
            r##"<line id="{}" class="door" x1="{ax:.3}" y1="{ay:.3}" x2="{bx:.3}" y2="{by:.3}" stroke="#ff0000" stroke-width="60"/>"##,
            door.id
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ProjectionFrame;
    use crate::topology::{DoorSegment, Room};

    fn frame() -> ProjectionFrame {
        ProjectionFrame {
            x_min: -1.0,
            y_min: -1.0,
            pixel_size: 0.05,
            width: 80,
            height: 60,
        }
    }

    /// Vertices of every room path, back in meters.
    fn parse_paths(svg: &str) -> Vec<Vec<Point2>> {
        svg.lines()
            .filter(|l| l.contains(r#"class="room""#))
            .map(|l| {
                let d = l.split(r#" d=""#).nth(1).unwrap().split('"').next().unwrap();
                let nums: Vec<f64> = d
                    .replace(['M', 'L', 'Z'], " ")
                    .split_whitespace()
                    .map(|t| t.parse().unwrap())
                    .collect();
                nums.chunks(2)
                    .map(|c| Point2::new(c[0] / MM_PER_M, -c[1] / MM_PER_M))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn empty_plan() {
        let plan = FloorPlan {
            frame: frame(),
            rooms: vec![],
            doors: vec![],
        };
        let svg = render_svg(&plan, &RenderOptions::default());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(parse_paths(&svg).is_empty());
        assert!(!svg.contains("<line"));
    }

    #[test]
    fn unit_square_and_round_trip() {
        let poly = vec![
            Point2::new(0.1234567, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let plan = FloorPlan {
            frame: frame(),
            rooms: vec![Room {
                id: "r0".into(),
                theta_main: 0.0,
                polygon: poly.clone(),
            }],
            doors: vec![DoorSegment {
                id: "d0".into(),
                rooms: ["r0".into(), "r1".into()],
                p0: Point2::new(1.0, 0.2),
                p1: Point2::new(1.0, 1.0),
            }],
        };
        let svg = render_svg(&plan, &RenderOptions { grid: true });
        let paths = parse_paths(&svg);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 4);
        assert_eq!(svg.matches(" L").count(), 3);
        for (a, b) in paths[0].iter().zip(&poly) {
            assert!(a.dist(*b) < 1e-3);
        }
        assert!(svg.contains(r#"class="door""#));
        assert!(svg.contains(r#"class="grid""#));
    }
}
