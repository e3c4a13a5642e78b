//! Mean value coordinates for closed triangle meshes.
//!
//! Spherical-triangle construction with the usual robust fallbacks: a point
//! on a cage vertex gets the indicator row, a point on a face (or edge) gets
//! the planar barycentric coordinates of that triangle, and triangles whose
//! plane contains the point elsewhere are skipped.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{bbox_scale, TriMesh, Vec3, WeightMatrix, WeightRole};

/// Relative distance below which a point snaps to a cage vertex.
pub const SURFACE_EPS: f64 = 1e-8;
const ANGLE_EPS: f64 = 1e-8;

/// Mean value coordinates of `point` with respect to `cage`, with the
/// vertex-snap distance derived from the cage's bounding box.
pub fn mvc_weights(point: &Vec3, cage: &TriMesh) -> Vec<f64> {
    let eps = SURFACE_EPS * bbox_scale(&cage.vertices);
    mvc_weights_eps(point, cage, eps)
}

pub fn mvc_weights_eps(point: &Vec3, cage: &TriMesh, eps: f64) -> Vec<f64> {
    let nv = cage.vertices.len();
    let mut weights = vec![0.0; nv];
    let mut dist = Vec::with_capacity(nv);
    let mut unit = Vec::with_capacity(nv);
    for (k, c) in cage.vertices.iter().enumerate() {
        let diff = c - point;
        let d = diff.norm();
        if d < eps {
            weights[k] = 1.0;
            return weights;
        }
        dist.push(d);
        unit.push(diff / d);
    }

    for tri in &cage.triangles {
        let u = [unit[tri[0]], unit[tri[1]], unit[tri[2]]];
        let d = [dist[tri[0]], dist[tri[1]], dist[tri[2]]];
        let mut theta = [0.0; 3];
        for i in 0..3 {
            let l = (u[(i + 1) % 3] - u[(i + 2) % 3]).norm();
            theta[i] = 2.0 * (0.5 * l).min(1.0).asin();
        }
        let h = 0.5 * (theta[0] + theta[1] + theta[2]);
        if PI - h < ANGLE_EPS {
            // On the triangle: planar barycentric coordinates.
            weights.fill(0.0);
            let mut sum = 0.0;
            for i in 0..3 {
                let w = theta[i].sin() * d[(i + 2) % 3] * d[(i + 1) % 3];
                weights[tri[i]] += w;
                sum += w;
            }
            weights.iter_mut().for_each(|w| *w /= sum);
            return weights;
        }
        let sign = u[0].dot(&u[1].cross(&u[2])).signum();
        let mut c = [0.0; 3];
        let mut s = [0.0; 3];
        let mut coplanar = false;
        for i in 0..3 {
            let denom = theta[(i + 1) % 3].sin() * theta[(i + 2) % 3].sin();
            c[i] = 2.0 * h.sin() * (h - theta[i]).sin() / denom - 1.0;
            s[i] = sign * (1.0 - c[i] * c[i]).max(0.0).sqrt();
            if s[i].abs() <= ANGLE_EPS || !c[i].is_finite() {
                coplanar = true;
            }
        }
        if coplanar {
            continue;
        }
        for i in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            weights[tri[i]] += (theta[i] - c[i1] * theta[i2] - c[i2] * theta[i1])
                / (d[i] * theta[i1].sin() * s[i2]);
        }
    }

    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    weights
}

/// `Φ`: one row of mean value coordinates per point, rows in input order.
pub fn mvc_matrix(points: &[Vec3], cage: &TriMesh) -> Result<WeightMatrix> {
    let eps = SURFACE_EPS * bbox_scale(&cage.vertices);
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p| mvc_weights_eps(p, cage, eps))
        .collect();
    if let Some(r) = rows.iter().position(|row| row.iter().any(|w| !w.is_finite())) {
        return Err(Error::Validation(format!(
            "mean value coordinates of point {r} are not finite"
        )));
    }
    let phi = WeightMatrix::from_rows(cage.vertices.len(), &rows, WeightRole::CageCoords);
    phi.validate(crate::model::weights::ROW_SUM_TOL)?;
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    pub fn cube(half: f64) -> TriMesh {
        let mut vertices = Vec::new();
        for &x in &[-half, half] {
            for &y in &[-half, half] {
                for &z in &[-half, half] {
                    vertices.push(Vec3::new(x, y, z));
                }
            }
        }
        // index = 4*ix + 2*iy + iz
        let quads = [
            [0, 1, 3, 2], // x-
            [4, 6, 7, 5], // x+
            [0, 4, 5, 1], // y-
            [2, 3, 7, 6], // y+
            [0, 2, 6, 4], // z-
            [1, 5, 7, 3], // z+
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriMesh::new(vertices, triangles)
    }

    fn irregular_tet() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.1, -0.2, 0.0),
                Vec3::new(2.3, 0.1, -0.4),
                Vec3::new(0.4, 1.7, 0.2),
                Vec3::new(0.6, 0.3, 1.9),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
    }

    fn reproduce(w: &[f64], cage: &TriMesh) -> Vec3 {
        w.iter()
            .zip(&cage.vertices)
            .fold(Vec3::zeros(), |acc, (w, c)| acc + c * *w)
    }

    #[test]
    fn cube_is_valid_cage() {
        cube(1.0).validate_closed().unwrap();
        assert!(cube(1.0).signed_volume() > 0.0);
    }

    /// Independent oracle: per-triangle mean vector `Σ ½ θ_e n_e` expressed
    /// in the basis of the three unit directions.
    fn vector_form_mvc(p: &Vec3, cage: &TriMesh) -> Vec<f64> {
        let dist: Vec<f64> = cage.vertices.iter().map(|c| (c - p).norm()).collect();
        let unit: Vec<Vec3> = cage.vertices.iter().zip(&dist).map(|(c, d)| (c - p) / *d).collect();
        let mut w = vec![0.0; cage.vertices.len()];
        for tri in &cage.triangles {
            let mut m = Vec3::zeros();
            for e in 0..3 {
                let (a, b) = (unit[tri[e]], unit[tri[(e + 1) % 3]]);
                m += a.cross(&b).normalize() * (0.5 * a.dot(&b).clamp(-1.0, 1.0).acos());
            }
            let basis = nalgebra::Matrix3::from_columns(&[unit[tri[0]], unit[tri[1]], unit[tri[2]]]);
            let lam = basis.lu().solve(&m).unwrap();
            for e in 0..3 {
                w[tri[e]] += lam[e] / dist[tri[e]];
            }
        }
        let sum: f64 = w.iter().sum();
        w.into_iter().map(|x| x / sum).collect()
    }

    /// Cube with every face split into four triangles around its center,
    /// so the corner set is fully symmetric.
    fn symmetric_cube() -> TriMesh {
        let mut cage = cube(1.0);
        let quads = [[0, 1, 3, 2], [4, 6, 7, 5], [0, 4, 5, 1], [2, 3, 7, 6], [0, 2, 6, 4], [1, 5, 7, 3]];
        cage.triangles.clear();
        for q in quads {
            let center = q.iter().map(|&i| cage.vertices[i]).sum::<Vec3>() / 4.0;
            let ci = cage.vertices.len();
            cage.vertices.push(center);
            for e in 0..4 {
                cage.triangles.push([q[e], q[(e + 1) % 4], ci]);
            }
        }
        cage
    }

    #[test]
    fn matches_vector_form_oracle() {
        for cage in [cube(1.0), irregular_tet(), symmetric_cube()] {
            cage.validate_closed().unwrap();
            for p in [Vec3::new(0.3, 0.2, 0.4), Vec3::new(0.5, 0.3, 0.2), Vec3::new(0.45, 0.35, 0.25)] {
                let w = mvc_weights(&p, &cage);
                let oracle = vector_form_mvc(&p, &cage);
                for (a, b) in w.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cube_centroid_respects_symmetry() {
        // Symmetric tessellation: all eight corners share one weight.
        let w = mvc_weights(&Vec3::zeros(), &symmetric_cube());
        for k in 1..8 {
            assert!((w[k] - w[0]).abs() < 1e-14);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);

        // 12-triangle cube: invariant under the tessellation's own
        // symmetries (central inversion k -> 7 - k, 3-fold turn about the
        // 0–7 diagonal permuting x, y, z).
        let w = mvc_weights(&Vec3::zeros(), &cube(1.0));
        let rot = |k: usize| ((k & 1) << 2) | ((k >> 2) << 1) | ((k >> 1) & 1);
        for k in 0..8 {
            assert!((w[k] - w[7 - k]).abs() < 1e-14);
            assert!((w[k] - w[rot(k)]).abs() < 1e-14);
        }
    }

    #[test]
    fn vertex_gives_indicator() {
        let cage = cube(1.0);
        let w = mvc_weights(&cage.vertices[5], &cage);
        let mut e = vec![0.0; 8];
        e[5] = 1.0;
        assert_eq!(w, e);
    }

    #[test]
    fn edge_midpoint_interpolates_linearly() {
        let cage = cube(1.0);
        let p = (cage.vertices[0] + cage.vertices[1]) * 0.5;
        let w = mvc_weights(&p, &cage);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12, "{w:?}");
        assert!(w.iter().enumerate().all(|(k, x)| k < 2 || x.abs() < 1e-12));
    }

    #[test]
    fn face_point_uses_planar_barycentrics() {
        let cage = cube(1.0);
        let p = Vec3::new(1.0, 0.2, -0.3);
        let w = mvc_weights(&p, &cage);
        assert!((reproduce(&w, &cage) - p).norm() < 1e-12);
        assert!(w.iter().all(|&x| x >= -1e-15));
    }

    /// Tetrahedron barycentric coordinates are unique: solve the 4×4 system.
    #[test]
    fn tetrahedron_matches_direct_barycentric_solve() {
        let cage = irregular_tet();
        let mut m = Matrix4::zeros();
        for (k, c) in cage.vertices.iter().enumerate() {
            m[(0, k)] = c.x;
            m[(1, k)] = c.y;
            m[(2, k)] = c.z;
            m[(3, k)] = 1.0;
        }
        let lu = m.lu();
        for p in [
            Vec3::new(0.7, 0.5, 0.4),
            Vec3::new(0.5, 0.2, 0.1),
            Vec3::new(1.2, 0.4, 0.3),
        ] {
            let exact = lu.solve(&Vector4::new(p.x, p.y, p.z, 1.0)).unwrap();
            let w = mvc_weights(&p, &cage);
            for k in 0..4 {
                assert!((w[k] - exact[k]).abs() < 1e-12, "{k}: {} vs {}", w[k], exact[k]);
            }
        }
    }

    #[test]
    fn cage_vertices_give_identity_matrix() {
        let cage = cube(0.5);
        let phi = mvc_matrix(&cage.vertices, &cage).unwrap();
        assert_eq!(phi.to_dense(), nalgebra::DMatrix::identity(8, 8));
    }

    #[test]
    fn empty_point_list() {
        let phi = mvc_matrix(&[], &cube(1.0)).unwrap();
        assert_eq!((phi.rows(), phi.cols()), (0, 8));
    }
}
