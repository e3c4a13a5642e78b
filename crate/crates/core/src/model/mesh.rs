use std::collections::HashMap;

use super::geom::Vec3;
use crate::error::{Error, Result};

/// Triangle mesh used for both skins and cages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Self {
        Self {
            vertices,
            triangles,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Indices in range and no triangle repeats a vertex.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!(
                    "triangle {t} is degenerate (repeated vertex index)"
                )));
            }
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v.iter().all(|x| x.is_finite()))
        {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    /// Checks that every undirected edge is shared by exactly two triangles
    /// traversing it in opposite directions (closed, edge-manifold and
    /// consistently oriented). Mean value coordinates rely on all three.
    pub fn validate_closed(&self) -> Result<()> {
        self.validate()?;
        if self.triangles.is_empty() {
            return Err(Error::Validation("cage not closed: no triangles".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        let mut undirected: Vec<(usize, usize)> =
            directed.keys().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        undirected.sort_unstable();
        undirected.dedup();
        for (a, b) in undirected {
            let ab = directed.get(&(a, b)).copied().unwrap_or(0);
            let ba = directed.get(&(b, a)).copied().unwrap_or(0);
            match (ab, ba) {
                (1, 1) => {}
                (1, 0) | (0, 1) => {
                    return Err(Error::Validation(format!(
                        "cage not closed: boundary edge ({a}, {b})"
                    )))
                }
                (x, y) if x + y > 2 => {
                    return Err(Error::Validation(format!(
                        "cage not manifold: edge ({a}, {b}) shared by {} triangles",
                        x + y
                    )))
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "cage orientation inconsistent at edge ({a}, {b})"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// One third of the incident triangle areas per vertex (barycentric
    /// dual cell). Isolated vertices get zero area.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let third = self.triangle_area(t) / 3.0;
            for &i in tri {
                areas[i] += third;
            }
        }
        areas
    }

    /// Smallest interior angle (radians) over all triangles; `π/3` for an
    /// empty mesh.
    pub fn min_angle(&self) -> f64 {
        min_triangle_angle(&self.vertices, &self.triangles)
    }

    /// Signed volume enclosed by a closed mesh (positive for outward normals).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }
}

pub fn min_triangle_angle(vertices: &[Vec3], triangles: &[[usize; 3]]) -> f64 {
    let mut best = std::f64::consts::FRAC_PI_3;
    for tri in triangles {
        for k in 0..3 {
            let o = vertices[tri[k]];
            let u = vertices[tri[(k + 1) % 3]] - o;
            let v = vertices[tri[(k + 2) % 3]] - o;
            let denom = u.norm() * v.norm();
            let angle = if denom > 0.0 {
                (u.dot(&v) / denom).clamp(-1.0, 1.0).acos()
            } else {
                0.0
            };
            best = best.min(angle);
        }
    }
    best
}

/// Fan-triangulates a polygon given by vertex indices.
pub fn fan_triangulate(polygon: &[usize]) -> Vec<[usize; 3]> {
    (1..polygon.len().saturating_sub(1))
        .map(|k| [polygon[0], polygon[k], polygon[k + 1]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetrahedron() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
    }

    #[test]
    fn tetrahedron_is_closed_and_outward() {
        let t = tetrahedron();
        t.validate_closed().unwrap();
        assert!((t.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_edge_is_reported() {
        let mut t = tetrahedron();
        t.triangles.pop();
        let err = t.validate_closed().unwrap_err().to_string();
        assert!(err.contains("cage not closed"), "{err}");
    }

    #[test]
    fn flipped_face_is_inconsistent() {
        let mut t = tetrahedron();
        t.triangles[3] = [1, 3, 2];
        let err = t.validate_closed().unwrap_err().to_string();
        assert!(err.contains("orientation"), "{err}");
    }

    #[test]
    fn degenerate_and_out_of_range() {
        let mut t = tetrahedron();
        t.triangles[0] = [0, 0, 1];
        assert!(t.validate().is_err());
        t.triangles[0] = [0, 9, 1];
        assert!(t.validate().is_err());
    }

    #[test]
    fn fan_split_of_quad() {
        assert_eq!(fan_triangulate(&[4, 5, 6, 7]), vec![[4, 5, 6], [4, 6, 7]]);
        assert!(fan_triangulate(&[1, 2]).is_empty());
    }

    #[test]
    fn vertex_areas_sum_to_surface_area() {
        let t = tetrahedron();
        let total: f64 = t.vertex_areas().iter().sum();
        let expected: f64 = (0..4).map(|i| t.triangle_area(i)).sum();
        assert!((total - expected).abs() < 1e-14);
    }
}
