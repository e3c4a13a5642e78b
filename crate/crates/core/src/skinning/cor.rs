//! Optimized centers of rotation.
//!
//! Each vertex gets a center `p_i`, the similarity-weighted average of the
//! skin where similarity compares skinning-weight profiles. The integral is
//! discretized with per-vertex areas. Because `p = Φ_CoRs · M` and
//! `M = Φ · C`, the product `Λ = Φ_CoRs · Φ` lets the centers follow rest
//! cage edits in `O(nnz(Λ))`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::weights::ROW_SUM_TOL;
use crate::model::{TriMesh, Vec3, WeightMatrix, WeightRole};

pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct CoRData {
    pub cors: Vec<Vec3>,
    /// Skin vertices × cage vertices; rows sum to 1.
    pub lambda: WeightMatrix,
    pub sigma: f64,
}

impl CoRData {
    pub fn from_parts(cors: Vec<Vec3>, lambda: WeightMatrix, sigma: f64) -> Self {
        Self {
            cors,
            lambda,
            sigma,
        }
    }

    /// `cors := Λ · C_rest`.
    pub fn reposition(&mut self, cage_rest: &[Vec3]) -> Result<()> {
        self.cors = self.lambda.apply(cage_rest)?;
        Ok(())
    }
}

/// Free-function form of [`CoRData::reposition`].
pub fn reposition_cors(data: &mut CoRData, cage_rest: &[Vec3]) -> Result<()> {
    data.reposition(cage_rest)
}

/// Similarity of two weight profiles restricted to the bone pair `(j, k)`:
/// `ω_pj ω_pk ω_vj ω_vk exp(−(ω_pj ω_vk − ω_pk ω_vj)² / σ²)`.
#[inline]
fn pair_term(p: (f64, f64), v: (f64, f64), inv_sigma2: f64) -> f64 {
    let cross = p.0 * v.1 - p.1 * v.0;
    p.0 * p.1 * v.0 * v.1 * (-cross * cross * inv_sigma2).exp()
}

/// Full similarity `Σ_{j≠k}` of two sparse weight rows (direct evaluation,
/// used as a reference).
pub fn similarity(p: &[(usize, f64)], v: &[(usize, f64)], sigma: f64) -> f64 {
    let inv = 1.0 / (sigma * sigma);
    let lookup = |row: &[(usize, f64)], j: usize| {
        row.iter().find(|(c, _)| *c == j).map_or(0.0, |(_, w)| *w)
    };
    let mut s = 0.0;
    for &(j, pj) in p {
        for &(k, pk) in p {
            if j == k {
                continue;
            }
            s += pair_term((pj, pk), (lookup(v, j), lookup(v, k)), inv);
        }
    }
    s
}

/// Precomputes centers of rotation for the rest skin and `Λ = Φ_CoRs · Φ`.
pub fn cor_precompute(
    rest: &TriMesh,
    weights: &WeightMatrix,
    phi: &WeightMatrix,
    sigma: f64,
) -> Result<CoRData> {
    let n = rest.vertex_count();
    if weights.rows() != n || phi.rows() != n {
        return Err(Error::Dimension {
            what: "CoR precompute rows",
            expected: n,
            found: weights.rows().min(phi.rows()),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::Validation(format!("similarity bandwidth must be positive, got {sigma}")));
    }
    let inv_sigma2 = 1.0 / (sigma * sigma);
    let areas = rest.vertex_areas();

    // Vertices grouped by every bone pair (j < k) they are both weighted on;
    // the similarity between two vertices is a sum over shared pairs.
    let mut groups: HashMap<(usize, usize), Vec<(usize, f64, f64)>> = HashMap::new();
    for x in 0..n {
        let (cols, vals) = weights.row(x);
        for a in 0..cols.len() {
            for b in a + 1..cols.len() {
                if vals[a] > 0.0 && vals[b] > 0.0 && areas[x] > 0.0 {
                    groups
                        .entry((cols[a], cols[b]))
                        .or_default()
                        .push((x, vals[a], vals[b]));
                }
            }
        }
    }

    let c = phi.cols();
    let rows: Vec<(Vec3, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = weights.row(i);
            let mut mass: HashMap<usize, f64> = HashMap::new();
            for a in 0..cols.len() {
                for b in a + 1..cols.len() {
                    let Some(group) = groups.get(&(cols[a], cols[b])) else {
                        continue;
                    };
                    let p = (vals[a], vals[b]);
                    for &(x, xa, xb) in group {
                        // (j,k) and (k,j) contribute equally.
                        let term = 2.0 * pair_term(p, (xa, xb), inv_sigma2) * areas[x];
                        if term > 0.0 {
                            *mass.entry(x).or_default() += term;
                        }
                    }
                }
            }
            // Sorted so the sums do not depend on hash order.
            let mut entries: Vec<(usize, f64)> = mass.into_iter().collect();
            entries.sort_unstable_by_key(|&(x, _)| x);
            let total: f64 = entries.iter().map(|(_, m)| m).sum();
            if !(total > 0.0) {
                return (rest.vertices[i], phi.dense_row(i));
            }
            let mut center = Vec3::zeros();
            let mut lambda_row = vec![0.0; c];
            for (x, m) in entries {
                let m = m / total;
                center += rest.vertices[x] * m;
                for (k, v) in phi.row_iter(x) {
                    lambda_row[k] += m * v;
                }
            }
            (center, lambda_row)
        })
        .collect();

    let cors = rows.iter().map(|(p, _)| *p).collect();
    let lambda_rows: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
    let lambda = WeightMatrix::from_rows(c, &lambda_rows, WeightRole::CageCoords);
    lambda.validate(ROW_SUM_TOL)?;
    Ok(CoRData {
        cors,
        lambda,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> TriMesh {
        // Two unit squares side by side in the xy plane.
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(2.0, 1.0, 0.0),
            ],
            vec![[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4]],
        )
    }

    fn identity_phi(n: usize) -> WeightMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        WeightMatrix::from_rows(n, &rows, WeightRole::CageCoords)
    }

    #[test]
    fn identical_profiles_give_area_weighted_centroid() {
        let mesh = strip();
        let rows = vec![vec![0.5, 0.5]; 6];
        let w = WeightMatrix::from_rows(2, &rows, WeightRole::SkinWeights);
        let data = cor_precompute(&mesh, &w, &identity_phi(6), 0.1).unwrap();
        let areas = mesh.vertex_areas();
        let total: f64 = areas.iter().sum();
        let centroid = mesh
            .vertices
            .iter()
            .zip(&areas)
            .fold(Vec3::zeros(), |acc, (v, a)| acc + v * (*a / total));
        for p in &data.cors {
            assert!((p - centroid).norm() < 1e-14);
        }
    }

    #[test]
    fn rigid_profile_keeps_its_own_position() {
        let mesh = strip();
        let rows = vec![vec![1.0, 0.0]; 6];
        let w = WeightMatrix::from_rows(2, &rows, WeightRole::SkinWeights);
        let data = cor_precompute(&mesh, &w, &identity_phi(6), 0.1).unwrap();
        assert_eq!(data.cors, mesh.vertices);
    }

    #[test]
    fn grouped_accumulation_matches_direct_similarity() {
        let mesh = strip();
        let rows = vec![
            vec![0.9, 0.1, 0.0],
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.8, 0.0],
            vec![0.6, 0.0, 0.4],
            vec![0.3, 0.3, 0.4],
            vec![0.0, 0.5, 0.5],
        ];
        let w = WeightMatrix::from_rows(3, &rows, WeightRole::SkinWeights);
        let data = cor_precompute(&mesh, &w, &identity_phi(6), 0.3).unwrap();
        let areas = mesh.vertex_areas();
        let sparse: Vec<Vec<(usize, f64)>> = (0..6).map(|i| w.row_iter(i).collect()).collect();
        for i in 0..6 {
            let mut num = Vec3::zeros();
            let mut den = 0.0;
            for x in 0..6 {
                let s = similarity(&sparse[i], &sparse[x], 0.3) * areas[x];
                num += mesh.vertices[x] * s;
                den += s;
            }
            assert!((data.cors[i] - num / den).norm() < 1e-14, "vertex {i}");
        }
    }

    #[test]
    fn reposition_follows_affine_cage_maps() {
        let mesh = strip();
        let rows = vec![
            vec![0.9, 0.1],
            vec![0.5, 0.5],
            vec![0.2, 0.8],
            vec![0.7, 0.3],
            vec![0.4, 0.6],
            vec![0.1, 0.9],
        ];
        let w = WeightMatrix::from_rows(2, &rows, WeightRole::SkinWeights);
        let mut data = cor_precompute(&mesh, &w, &identity_phi(6), 0.1).unwrap();
        let original = data.cors.clone();
        data.reposition(&mesh.vertices).unwrap();
        for (a, b) in data.cors.iter().zip(&original) {
            assert!((a - b).norm() < 1e-14);
        }
        let scaled: Vec<Vec3> = mesh.vertices.iter().map(|v| v * 2.0).collect();
        data.reposition(&scaled).unwrap();
        for (a, b) in data.cors.iter().zip(&original) {
            assert!((a - b * 2.0).norm() < 1e-13);
        }
        let shift = Vec3::new(0.5, -1.0, 3.0);
        let moved: Vec<Vec3> = mesh.vertices.iter().map(|v| v + shift).collect();
        data.reposition(&moved).unwrap();
        for (a, b) in data.cors.iter().zip(&original) {
            assert!((a - (b + shift)).norm() < 1e-13);
        }
    }
}
