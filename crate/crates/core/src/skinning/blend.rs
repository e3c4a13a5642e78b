//! Per-vertex skinning backends: linear blend (LBS), dual quaternion (DQS)
//! and optimized centers of rotation (CoR).

use nalgebra::Quaternion;
use rayon::prelude::*;

use super::cor::CoRData;
use super::dual_quat::DualQuat;
use crate::error::{Error, Result};
use crate::model::{Mat3, Quat, Transform, Vec3, WeightMatrix};

/// Norm below which a blended (dual) quaternion is considered degenerate and
/// the vertex falls back to LBS.
pub const DEGENERATE_BLEND: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkinningMethod {
    #[default]
    Lbs,
    Dqs,
    Cor,
}

impl std::str::FromStr for SkinningMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbs" => Ok(Self::Lbs),
            "dqs" => Ok(Self::Dqs),
            "cor" => Ok(Self::Cor),
            other => Err(Error::Validation(format!("unknown skinning method '{other}'"))),
        }
    }
}

impl std::fmt::Display for SkinningMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lbs => "lbs",
            Self::Dqs => "dqs",
            Self::Cor => "cor",
        })
    }
}

/// Transforms unpacked once per skinning call.
struct Prepared {
    linear: Vec<Mat3>,
    translation: Vec<Vec3>,
    quats: Vec<Quaternion<f64>>,
    duals: Vec<DualQuat>,
}

impl Prepared {
    fn new(transforms: &[Transform], with_quats: bool) -> Self {
        Self {
            linear: transforms.iter().map(Transform::linear).collect(),
            translation: transforms.iter().map(|t| t.translation).collect(),
            quats: if with_quats {
                transforms.iter().map(|t| *t.rotation.quaternion()).collect()
            } else {
                Vec::new()
            },
            duals: if with_quats {
                transforms.iter().map(DualQuat::from_transform).collect()
            } else {
                Vec::new()
            },
        }
    }

    #[inline]
    fn lbs_split(&self, w: &WeightMatrix, i: usize) -> (Mat3, Vec3) {
        let mut r = Mat3::zeros();
        let mut t = Vec3::zeros();
        for (j, wj) in w.row_iter(i) {
            r += self.linear[j] * wj;
            t += self.translation[j] * wj;
        }
        (r, t)
    }

    #[inline]
    fn lbs_vertex(&self, w: &WeightMatrix, i: usize, v: &Vec3) -> Vec3 {
        let (r, t) = self.lbs_split(w, i);
        r * v + t
    }

    /// Sign of bone `j`'s quaternion relative to the row's pivot bone (the
    /// largest weight, lowest index on ties).
    #[inline]
    fn signs<'a>(&'a self, w: &'a WeightMatrix, i: usize) -> impl Iterator<Item = (usize, f64)> + 'a {
        let pivot = w.dominant_column(i).map(|p| self.quats[p]);
        w.row_iter(i).map(move |(j, wj)| {
            let flip = pivot.is_some_and(|p| self.quats[j].dot(&p) < 0.0);
            (j, if flip { -wj } else { wj })
        })
    }

    fn dqs_vertex(&self, w: &WeightMatrix, i: usize, v: &Vec3) -> Vec3 {
        let mut blend = DualQuat::zero();
        for (j, wj) in self.signs(w, i) {
            blend = blend + self.duals[j] * wj;
        }
        if blend.real_norm() < DEGENERATE_BLEND {
            return self.lbs_vertex(w, i, v);
        }
        match blend.to_transform() {
            Some(t) => t.apply(v),
            None => self.lbs_vertex(w, i, v),
        }
    }

    /// Rotation-only dual-quaternion blend.
    fn blend_rotation(&self, w: &WeightMatrix, i: usize) -> Option<Mat3> {
        let mut q = Quaternion::new(0.0, 0.0, 0.0, 0.0);
        for (j, wj) in self.signs(w, i) {
            q += self.quats[j] * wj;
        }
        let n = q.norm();
        (n >= DEGENERATE_BLEND)
            .then(|| *Quat::new_unchecked(q / n).to_rotation_matrix().matrix())
    }

    fn cor_vertex(&self, w: &WeightMatrix, i: usize, v: &Vec3, cor: &Vec3) -> Vec3 {
        let Some(r) = self.blend_rotation(w, i) else {
            return self.lbs_vertex(w, i, v);
        };
        let mut transformed_cor = Vec3::zeros();
        for (j, wj) in w.row_iter(i) {
            transformed_cor += (self.linear[j] * cor + self.translation[j]) * wj;
        }
        let t = transformed_cor - r * cor;
        r * v + t
    }
}

fn check_dims(rest: usize, w: &WeightMatrix, transforms: &[Transform]) -> Result<()> {
    if w.rows() != rest {
        return Err(Error::Dimension {
            what: "skinning weight rows",
            expected: rest,
            found: w.rows(),
        });
    }
    if w.cols() != transforms.len() {
        return Err(Error::Dimension {
            what: "skinning transforms",
            expected: w.cols(),
            found: transforms.len(),
        });
    }
    Ok(())
}

/// `v_i = Σ_j ω_ij T_j v_i`.
pub fn lbs(rest: &[Vec3], w: &WeightMatrix, transforms: &[Transform]) -> Result<Vec<Vec3>> {
    check_dims(rest.len(), w, transforms)?;
    let prep = Prepared::new(transforms, false);
    Ok(rest
        .par_iter()
        .enumerate()
        .map(|(i, v)| prep.lbs_vertex(w, i, v))
        .collect())
}

/// LBS restricted to the listed vertices (the ghost mesh).
pub fn lbs_subset(
    rest: &[Vec3],
    w: &WeightMatrix,
    transforms: &[Transform],
    indices: &[usize],
) -> Result<Vec<Vec3>> {
    check_dims(rest.len(), w, transforms)?;
    let prep = Prepared::new(transforms, false);
    Ok(indices
        .iter()
        .map(|&i| prep.lbs_vertex(w, i, &rest[i]))
        .collect())
}

/// Linear part `R(i) = Σ_j ω_ij T^R_j` and translation `Σ_j ω_ij T^t_j`
/// of the LBS transform at each listed vertex.
pub fn lbs_split(w: &WeightMatrix, transforms: &[Transform], indices: &[usize]) -> Vec<(Mat3, Vec3)> {
    let prep = Prepared::new(transforms, false);
    indices.iter().map(|&i| prep.lbs_split(w, i)).collect()
}

/// Dual quaternion skinning with sign alignment to the largest-weight bone.
pub fn dqs(rest: &[Vec3], w: &WeightMatrix, transforms: &[Transform]) -> Result<Vec<Vec3>> {
    check_dims(rest.len(), w, transforms)?;
    let prep = Prepared::new(transforms, true);
    Ok(rest
        .par_iter()
        .enumerate()
        .map(|(i, v)| prep.dqs_vertex(w, i, v))
        .collect())
}

/// Skinning with optimized centers of rotation: the rotation comes from the
/// quaternion blend, the translation from the LBS-transformed center.
pub fn cor_skin(
    rest: &[Vec3],
    w: &WeightMatrix,
    transforms: &[Transform],
    cor: &CoRData,
) -> Result<Vec<Vec3>> {
    cor_skin_with(rest, w, transforms, &cor.cors)
}

/// [`cor_skin`] with the centers given directly.
pub fn cor_skin_with(
    rest: &[Vec3],
    w: &WeightMatrix,
    transforms: &[Transform],
    cors: &[Vec3],
) -> Result<Vec<Vec3>> {
    check_dims(rest.len(), w, transforms)?;
    if cors.len() != rest.len() {
        return Err(Error::Dimension {
            what: "centers of rotation",
            expected: rest.len(),
            found: cors.len(),
        });
    }
    let prep = Prepared::new(transforms, true);
    Ok(rest
        .par_iter()
        .enumerate()
        .map(|(i, v)| prep.cor_vertex(w, i, v, &cors[i]))
        .collect())
}

pub fn skin(
    method: SkinningMethod,
    rest: &[Vec3],
    w: &WeightMatrix,
    transforms: &[Transform],
    cor: Option<&CoRData>,
) -> Result<Vec<Vec3>> {
    match method {
        SkinningMethod::Lbs => lbs(rest, w, transforms),
        SkinningMethod::Dqs => dqs(rest, w, transforms),
        SkinningMethod::Cor => {
            let cor = cor.ok_or_else(|| {
                Error::Validation("CoR skinning requires precomputed centers of rotation".into())
            })?;
            cor_skin(rest, w, transforms, cor)
        }
    }
}
