//! Closed tubes along the x axis built from circular (or square) sections.

use std::f64::consts::TAU;

use crate::model::{TriMesh, Vec3};

#[derive(Clone, Copy, Debug)]
pub struct Section {
    pub x: f64,
    pub radius: f64,
    pub count: usize,
    /// Angle of the first vertex.
    pub phase: f64,
}

impl Section {
    pub fn new(x: f64, radius: f64, count: usize) -> Self {
        Self {
            x,
            radius,
            count,
            phase: 0.0,
        }
    }

    /// Square section with half-width `half` (axis-aligned corners).
    pub fn square(x: f64, half: f64) -> Self {
        Self {
            x,
            radius: half * std::f64::consts::SQRT_2,
            count: 4,
            phase: TAU / 8.0,
        }
    }

    fn angle(&self, m: usize) -> f64 {
        self.phase + TAU * m as f64 / self.count as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Cap {
    /// Fan around an extra vertex on the axis at this x.
    Pole(f64),
    /// Fan over the end section itself.
    Flat,
}

/// Tube through `sections` (increasing x), outward oriented.
pub fn tube(sections: &[Section], start: Cap, end: Cap) -> TriMesh {
    let mut vertices = Vec::new();
    let mut rings = Vec::with_capacity(sections.len());
    for s in sections {
        let base = vertices.len();
        for m in 0..s.count {
            let a = s.angle(m);
            vertices.push(Vec3::new(s.x, s.radius * a.cos(), s.radius * a.sin()));
        }
        rings.push((base..base + s.count).collect::<Vec<_>>());
    }
    let mut triangles = Vec::new();
    for w in 0..sections.len().saturating_sub(1) {
        zipper(&sections[w], &rings[w], &sections[w + 1], &rings[w + 1], &mut triangles);
    }

    let first = &rings[0];
    match start {
        Cap::Pole(x) => {
            let p = vertices.len();
            vertices.push(Vec3::new(x, 0.0, 0.0));
            for m in 0..first.len() {
                triangles.push([p, first[(m + 1) % first.len()], first[m]]);
            }
        }
        Cap::Flat => {
            for m in 1..first.len() - 1 {
                triangles.push([first[0], first[m + 1], first[m]]);
            }
        }
    }
    let last = rings.last().expect("at least one section");
    match end {
        Cap::Pole(x) => {
            let p = vertices.len();
            vertices.push(Vec3::new(x, 0.0, 0.0));
            for m in 0..last.len() {
                triangles.push([p, last[m], last[(m + 1) % last.len()]]);
            }
        }
        Cap::Flat => {
            for m in 1..last.len() - 1 {
                triangles.push([last[0], last[m], last[m + 1]]);
            }
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Triangle strip between two rings with possibly different counts,
/// advancing whichever ring has the smaller next angle.
fn zipper(sa: &Section, a: &[usize], sb: &Section, b: &[usize], out: &mut Vec<[usize; 3]>) {
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let next_a = sa.angle(i + 1) - sa.phase;
        let next_b = sb.angle(j + 1) - sb.phase;
        if j == nb || (i < na && next_a <= next_b) {
            out.push([a[i % na], a[(i + 1) % na], b[j % nb]]);
            i += 1;
        } else {
            out.push([a[i % na], b[(j + 1) % nb], b[j % nb]]);
            j += 1;
        }
    }
}

/// Sections evenly spaced on `[x0, x1]` (inclusive), all with `count` vertices.
pub fn uniform_sections(x0: f64, x1: f64, rings: usize, radius: f64, count: usize) -> Vec<Section> {
    (0..rings)
        .map(|k| {
            let t = if rings == 1 { 0.0 } else { k as f64 / (rings - 1) as f64 };
            Section::new(x0 + t * (x1 - x0), radius, count)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tube_with_poles_is_closed_and_outward() {
        let mut sections = vec![Section::new(0.1, 0.5, 7)];
        sections.extend(uniform_sections(0.3, 2.0, 5, 1.0, 12));
        sections.push(Section::new(2.2, 0.4, 5));
        let mesh = tube(&sections, Cap::Pole(0.0), Cap::Pole(2.3));
        mesh.validate().unwrap();
        mesh.validate_closed().unwrap();
        assert!(mesh.signed_volume() > 0.0);
        assert_eq!(mesh.vertices.len(), 7 + 60 + 5 + 2);
    }

    #[test]
    fn square_box_is_closed_and_outward() {
        let sections: Vec<Section> = [0.0, 1.0, 2.5].iter().map(|&x| Section::square(x, 0.5)).collect();
        let mesh = tube(&sections, Cap::Flat, Cap::Flat);
        mesh.validate_closed().unwrap();
        assert!((mesh.signed_volume() - 2.5).abs() < 1e-12);
    }
}
