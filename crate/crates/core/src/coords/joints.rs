//! Barycentric coordinates of the skeleton articulations with respect to the
//! cage, so that rest joints can be refit as `A = Ψ · C` whenever the rest
//! cage moves.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::mec::{mec_project, MecProblem};
use super::mvc::mvc_weights;
use crate::error::{Error, Result};
use crate::model::weights::ROW_SUM_TOL;
use crate::model::{Skeleton, TriMesh, Vec3, WeightMatrix, WeightRole};

pub const DEFAULT_LOCALIZATION_EXPONENT: f64 = 0.1;

/// Per-joint localization values over skin vertices: zero in rigid regions
/// (weight 0 or 1), peaking where a joint's weight is 0.5.
#[derive(Clone, Debug)]
pub struct JointLocalization {
    /// `values[(j, i)]`, joints × skin vertices.
    pub values: DMatrix<f64>,
    pub exponent: f64,
}

/// `L_{j,i} = −1 + ω_ij^s + (Σ_{k≠j} ω_ik)^s`, using `Σ_{k≠j} ω_ik = 1 − ω_ij`.
#[inline]
pub fn localization(weight: f64, exponent: f64) -> f64 {
    let w = weight.clamp(0.0, 1.0);
    (-1.0 + w.powf(exponent) + (1.0 - w).powf(exponent)).max(0.0)
}

pub fn joint_localization(weights: &WeightMatrix, exponent: f64) -> Result<JointLocalization> {
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::Validation(format!(
            "localization exponent must lie in (0, 1), got {exponent}"
        )));
    }
    let mut values = DMatrix::zeros(weights.cols(), weights.rows());
    for (i, j, w) in weights.triplets() {
        values[(j, i)] = localization(w, exponent);
    }
    Ok(JointLocalization { values, exponent })
}

/// Clamps masses to `max(m_k, 1e-8 · max m)` and normalizes. When no mass
/// is positive the uniform prior is used.
pub fn clamp_masses(masses: &mut [f64]) {
    let max = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        masses.fill(1.0);
    } else {
        let floor = 1e-8 * max;
        masses.iter_mut().for_each(|m| *m = m.max(floor));
    }
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
}

/// Localized prior masses of joint `j` in cage space:
/// `m = Σ_i mvc_{j,i} L_{j,i} φ_{i,·}` (before clamping).
pub fn joint_masses(
    joint: usize,
    position: &Vec3,
    skin: &TriMesh,
    localization: &JointLocalization,
    phi: &WeightMatrix,
) -> Vec<f64> {
    let mvc = mvc_weights(position, skin);
    let mut masses = vec![0.0; phi.cols()];
    for (i, &m) in mvc.iter().enumerate() {
        let l = localization.values[(joint, i)];
        if l == 0.0 || m == 0.0 {
            continue;
        }
        for (k, p) in phi.row_iter(i) {
            masses[k] += m * l * p;
        }
    }
    masses
}

/// `Ψ`: for each joint, the maximum-entropy barycentric coordinates with
/// respect to the rest cage closest to its localized prior.
pub fn joint_coords(
    skeleton: &Skeleton,
    skin: &TriMesh,
    weights: &WeightMatrix,
    phi: &WeightMatrix,
    cage: &TriMesh,
    exponent: f64,
) -> Result<WeightMatrix> {
    if phi.rows() != skin.vertex_count() || phi.cols() != cage.vertex_count() {
        return Err(Error::Dimension {
            what: "cage coordinates",
            expected: skin.vertex_count() * cage.vertex_count(),
            found: phi.rows() * phi.cols(),
        });
    }
    let localization = joint_localization(weights, exponent)?;
    let rows: Vec<Vec<f64>> = (0..skeleton.len())
        .into_par_iter()
        .map(|j| {
            let a = skeleton.joints[j].rest_position;
            let mut masses = joint_masses(j, &a, skin, &localization, phi);
            clamp_masses(&mut masses);
            mec_project(&MecProblem {
                masses: &masses,
                nodes: &cage.vertices,
                target: a,
            })
            .map(|sol| sol.weights)
            .map_err(|e| Error::JointCoords {
                joint: j,
                name: skeleton.joints[j].name.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let psi = WeightMatrix::from_rows(cage.vertex_count(), &rows, WeightRole::JointCoords);
    psi.validate(ROW_SUM_TOL)?;
    Ok(psi)
}
