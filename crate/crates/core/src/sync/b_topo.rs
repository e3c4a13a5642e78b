//! Relations between articulation offsets and translation offsets.
//!
//! With rotations held fixed, moving articulation `a_j` by `∂a_j` changes
//! the translations so the skeleton stays attached:
//!
//! * root `j`: `(I − R_j) ∂a_j = ∂t_j`
//! * child `j` of `f`: `(R_j − R_f) ∂a_j = ∂t_f − ∂t_j`
//!
//! Stacked: `A_R ∂A = B_topo ∂T`. `B_topo` depends only on the hierarchy.

use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{Error, Result};
use crate::model::{Mat3, Skeleton};

/// `B_topo` and its LU factorization.
#[derive(Clone, Debug)]
pub struct BTopo {
    pub matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl BTopo {
    pub fn joints(&self) -> usize {
        self.matrix.nrows() / 3
    }

    /// `B_topo⁻¹ · rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("skeleton topology matrix".into()))
    }
}

fn set_block(m: &mut DMatrix<f64>, r: usize, c: usize, block: &Mat3) {
    m.fixed_view_mut::<3, 3>(3 * r, 3 * c).copy_from(block);
}

pub fn build_b_topo(skeleton: &Skeleton) -> Result<BTopo> {
    let s = skeleton.len();
    let mut m = DMatrix::zeros(3 * s, 3 * s);
    let eye = Mat3::identity();
    for j in 0..s {
        match skeleton.parent(j) {
            None => set_block(&mut m, j, j, &eye),
            Some(f) => {
                set_block(&mut m, j, f, &eye);
                set_block(&mut m, j, j, &-eye);
            }
        }
    }
    let lu = m.clone().lu();
    // Block-triangular under topological order with ±I diagonal, so this
    // only fails for a malformed hierarchy.
    if !lu.is_invertible() {
        return Err(Error::Singular("skeleton topology matrix".into()));
    }
    Ok(BTopo { matrix: m, lu })
}

/// `A_R` for the current rotations.
pub fn assemble_a_r(skeleton: &Skeleton) -> DMatrix<f64> {
    let s = skeleton.len();
    let mut m = DMatrix::zeros(3 * s, 3 * s);
    for j in 0..s {
        let rj = skeleton.transforms[j].linear();
        let block = match skeleton.parent(j) {
            None => Mat3::identity() - rj,
            Some(f) => rj - skeleton.transforms[f].linear(),
        };
        set_block(&mut m, j, j, &block);
    }
    m
}
