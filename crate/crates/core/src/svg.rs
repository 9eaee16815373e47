//! Self-contained SVG rendering of a 2-D disk embedding.
//!
//! The unit disk fills a 1000×1000 viewport. Colors are keyed by category
//! and marker shapes by role: circles for wholes, triangles for parts.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::embedopt::DiskPoint;
use crate::hierdata::Role;

pub const SIZE: f64 = 1000.0;
const CENTER: f64 = SIZE / 2.0;
const DISK_RADIUS: f64 = 480.0;
const MARKER: f64 = 5.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Viewport coordinates of a disk point; `y` points up.
pub fn to_viewport(x: f64, y: f64) -> (f64, f64) {
    (CENTER + DISK_RADIUS * x, CENTER - DISK_RADIUS * y)
}

/// Render `points`; `description` is embedded verbatim (escaped) in `<desc>`.
pub fn render_disk(points: &[DiskPoint], description: &str) -> String {
    let colors: BTreeMap<&str, &str> = {
        let mut cats: Vec<&str> = points.iter().map(|p| p.category.as_str()).collect();
        cats.sort_unstable();
        cats.dedup();
        cats.into_iter()
            .enumerate()
            .map(|(i, c)| (c, PALETTE[i % PALETTE.len()]))
            .collect()
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, "<desc>{}</desc>", escape(description));
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<circle id="boundary" cx="{CENTER}" cy="{CENTER}" r="{DISK_RADIUS}" fill="none" stroke="black" stroke-width="2"/>"#
    );
    for p in points {
        let (cx, cy) = to_viewport(p.x, p.y);
        let color = colors[p.category.as_str()];
        let title = format!("{} ({}, hnorm {:.4})", p.id, p.category, p.hnorm);
        match p.role {
            Role::Whole => {
                let _ = writeln!(
                    s,
                    r#"<circle class="marker whole" cx="{cx:.3}" cy="{cy:.3}" r="{MARKER}" fill="{color}"><title>{}</title></circle>"#,
                    escape(&title)
                );
            }
            Role::Part => {
                let h = MARKER * 1.2;
                let _ = writeln!(
                    s,
                    r#"<polygon class="marker part" points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="{color}" fill-opacity="0.7"><title>{}</title></polygon>"#,
                    cx,
                    cy - h,
                    cx - h,
                    cy + h * 0.8,
                    cx + h,
                    cy + h * 0.8,
                    escape(&title)
                );
            }
        }
    }
    for (i, (cat, color)) in colors.iter().enumerate() {
        let y = 30.0 + 22.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="20" y="{:.0}" width="14" height="14" fill="{color}"/><text x="42" y="{:.0}" font-family="sans-serif" font-size="16">{}</text>"#,
            y - 12.0,
            y,
            escape(cat)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: &str, cat: &str, role: Role, x: f64, y: f64) -> DiskPoint {
        DiskPoint {
            id: id.into(),
            category: cat.into(),
            role,
            n_points: 10,
            hnorm: 0.0,
            x,
            y,
            radius: (x * x + y * y).sqrt(),
        }
    }

    #[test]
    fn one_marker_per_sample() {
        let pts = vec![
            pt("a", "table", Role::Whole, 0.9, 0.0),
            pt("b", "table", Role::Part, 0.1, 0.1),
            pt("c", "lamp", Role::Part, -0.2, 0.0),
        ];
        let svg = render_disk(&pts, "cfg <&>");
        assert_eq!(svg.matches("class=\"marker whole\"").count(), 1);
        assert_eq!(svg.matches("class=\"marker part\"").count(), 2);
        assert!(svg.contains("id=\"boundary\""));
        assert!(svg.contains("cfg &lt;&amp;&gt;"));
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
    }

    #[test]
    fn viewport_mapping() {
        assert_eq!(to_viewport(0.0, 0.0), (500.0, 500.0));
        assert_eq!(to_viewport(1.0, 0.0), (980.0, 500.0));
        assert_eq!(to_viewport(0.0, 1.0), (500.0, 20.0));
    }
}
