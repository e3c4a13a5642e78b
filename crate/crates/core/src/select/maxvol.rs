use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{Error, Result};
use crate::model::{Vec3, WeightMatrix};

pub const MAXVOL_TAU: f64 = 0.01;
pub const MAXVOL_MAX_SWAPS: usize = 500;
/// Smallest accepted ratio of extreme singular values of `Φ̃`.
const CONDITION_FLOOR: f64 = 1e-10;

/// `c` rows of `Φ` forming a dominant square submatrix, with its factorization.
#[derive(Clone, Debug)]
pub struct MaxVolSelection {
    /// Selected skin vertices; position `k` in this list is row `k` of `Φ̃`.
    pub indices: Vec<usize>,
    pub reduced: DMatrix<f64>,
    pub swaps: usize,
    lu: LU<f64, Dyn, Dyn>,
}

impl MaxVolSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `ln |det Φ̃|`.
    pub fn log_abs_det(&self) -> f64 {
        log_abs_det(&self.reduced)
    }

    /// `σ_min / σ_max` of `Φ̃`.
    pub fn inverse_condition(&self) -> f64 {
        inverse_condition(&self.reduced)
    }

    /// `Φ̃⁻¹ · rhs`, one point per selected row.
    pub fn solve_reduced(&self, rhs: &[Vec3]) -> Result<Vec<Vec3>> {
        let c = self.indices.len();
        if rhs.len() != c {
            return Err(Error::Dimension {
                what: "reduced right-hand side",
                expected: c,
                found: rhs.len(),
            });
        }
        let b = DMatrix::from_fn(c, 3, |r, k| rhs[r][k]);
        let x = self
            .lu
            .solve(&b)
            .ok_or_else(|| Error::Singular("MaxVol submatrix".into()))?;
        Ok((0..c).map(|r| Vec3::new(x[(r, 0)], x[(r, 1)], x[(r, 2)])).collect())
    }

    /// Solves `Φ̃ X = rhs` for a dense right-hand side (`c × k`).
    pub fn solve_dense(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular("MaxVol submatrix".into()))
    }
}

pub fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|k| u[(k, k)].abs().ln()).sum()
}

fn inverse_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max > 0.0 {
        sv.min() / max
    } else {
        0.0
    }
}

pub fn maxvol_select(phi: &WeightMatrix) -> Result<MaxVolSelection> {
    maxvol_select_with(&phi.to_dense(), MAXVOL_TAU, MAXVOL_MAX_SWAPS)
}

/// Dominant-row MaxVol on a dense `n × c` matrix.
pub fn maxvol_select_with(a: &DMatrix<f64>, tau: f64, max_swaps: usize) -> Result<MaxVolSelection> {
    let (n, c) = a.shape();
    if n < c || c == 0 {
        return Err(Error::RankDeficient);
    }
    let mut rows = pivoted_rows(a)?;
    let mut swaps = 0;

    // B = A Φ̃⁻¹; selected rows of B form the identity.
    let mut b = coefficients(a, &rows)?;
    loop {
        // Largest |B_ij|; ties go to the lowest vertex index.
        let mut best = (usize::MAX, 0, 1.0 + tau);
        for (j, col) in b.column_iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                let v = v.abs();
                if v > best.2 || (v == best.2 && i < best.0 && best.0 != usize::MAX) {
                    best = (i, j, v);
                }
            }
        }
        if best.0 == usize::MAX || swaps >= max_swaps {
            break;
        }
        let (i, j, _) = best;
        // Rank-one update for replacing selected row j by row i.
        let pivot = b[(i, j)];
        let col = b.column(j).clone_owned();
        let mut row: Vec<f64> = b.row(i).iter().copied().collect();
        row[j] -= 1.0;
        for (jj, r) in row.iter().enumerate() {
            if *r != 0.0 {
                b.column_mut(jj).axpy(-r / pivot, &col, 1.0);
            }
        }
        rows[j] = i;
        swaps += 1;
        if swaps % 32 == 0 {
            b = coefficients(a, &rows)?;
        }
    }

    let reduced = DMatrix::from_fn(c, c, |r, k| a[(rows[r], k)]);
    if inverse_condition(&reduced) <= CONDITION_FLOOR {
        return Err(Error::RankDeficient);
    }
    let lu = reduced.clone().lu();
    Ok(MaxVolSelection {
        indices: rows,
        reduced,
        swaps,
        lu,
    })
}

/// Initial rows by greedy pivoted Gram–Schmidt on the rows of `a`.
fn pivoted_rows(a: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, c) = a.shape();
    // Rows of `a` as contiguous columns.
    let mut residual = a.transpose();
    let mut norms: Vec<f64> = residual.column_iter().map(|r| r.norm_squared()).collect();
    let first = norms.iter().cloned().fold(0.0, f64::max);
    if !(first > 0.0) {
        return Err(Error::RankDeficient);
    }
    let mut chosen = Vec::with_capacity(c);
    let mut taken = vec![false; n];
    for _ in 0..c {
        let mut best = None;
        let mut best_norm = 0.0;
        for i in 0..n {
            if !taken[i] && norms[i] > best_norm {
                best = Some(i);
                best_norm = norms[i];
            }
        }
        let Some(p) = best else {
            return Err(Error::RankDeficient);
        };
        if best_norm <= 1e-24 * first {
            return Err(Error::RankDeficient);
        }
        taken[p] = true;
        chosen.push(p);
        let q = residual.column(p).clone_owned() / best_norm.sqrt();
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let mut r = residual.column_mut(i);
            let d = r.dot(&q);
            if d != 0.0 {
                r.axpy(-d, &q, 1.0);
                norms[i] = r.norm_squared();
            }
        }
    }
    Ok(chosen)
}

fn coefficients(a: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    let c = rows.len();
    let sub = DMatrix::from_fn(c, c, |r, k| a[(rows[r], k)]);
    // B = A S⁻¹  ⇔  Sᵀ Bᵀ = Aᵀ.
    let bt = sub
        .transpose()
        .lu()
        .solve(&a.transpose())
        .ok_or(Error::RankDeficient)?;
    Ok(bt.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightRole;
    use proptest::prelude::*;
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, c: usize) -> DMatrix<f64> {
        let mut m = DMatrix::from_fn(n, c, |_, _| rng.random_range(0.0..1.0));
        for mut row in m.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        m
    }

    #[test]
    fn identity_selects_every_row_with_unit_det() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        let phi = WeightMatrix::from_rows(6, &rows, WeightRole::CageCoords);
        let sel = maxvol_select(&phi).unwrap();
        let mut idx = sel.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert!(sel.log_abs_det().abs() < 1e-15);
    }

    #[test]
    fn square_input_takes_all_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_stochastic(&mut rng, 7, 7);
        let sel = maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS).unwrap();
        let mut idx = sel.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn rank_deficient_rejected() {
        let mut a = DMatrix::zeros(10, 3);
        for i in 0..10 {
            a[(i, 0)] = 0.5;
            a[(i, 1)] = 0.5;
        }
        assert!(matches!(
            maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn beats_random_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_stochastic(&mut rng, 200, 10);
        let sel = maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS).unwrap();
        let ours = sel.log_abs_det();
        for _ in 0..1000 {
            let rows = sample(&mut rng, 200, 10).into_vec();
            let sub = DMatrix::from_fn(10, 10, |r, k| a[(rows[r], k)]);
            assert!(log_abs_det(&sub) <= ours);
        }
    }

    #[test]
    fn coefficients_bounded_after_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_stochastic(&mut rng, 300, 12);
        let sel = maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS).unwrap();
        let b = coefficients(&a, &sel.indices).unwrap();
        assert!(b.amax() <= 1.0 + MAXVOL_TAU + 1e-9);
    }

    #[test]
    fn reduced_solve_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_stochastic(&mut rng, 50, 8);
        let sel = maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS).unwrap();
        let x: Vec<Vec3> = (0..8)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let rhs: Vec<Vec3> = (0..8)
            .map(|r| (0..8).fold(Vec3::zeros(), |acc, k| acc + x[k] * sel.reduced[(r, k)]))
            .collect();
        let back = sel.solve_reduced(&rhs).unwrap();
        for (p, q) in back.iter().zip(&x) {
            assert!((p - q).norm() <= 1e-12 * q.norm().max(1.0));
        }
        assert!(sel.solve_reduced(&rhs[..3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Swaps never lose volume relative to the pivoted start, and the
        /// result is deterministic.
        #[test]
        fn swaps_do_not_decrease_volume(seed in any::<u64>(), n in 12usize..60, c in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_stochastic(&mut rng, n, c);
            let start = pivoted_rows(&a).unwrap();
            let start_det = log_abs_det(&DMatrix::from_fn(c, c, |r, k| a[(start[r], k)]));
            let sel = maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS).unwrap();
            prop_assert!(sel.log_abs_det() >= start_det - 1e-12);
            let again = maxvol_select_with(&a, MAXVOL_TAU, MAXVOL_MAX_SWAPS).unwrap();
            prop_assert_eq!(sel.indices, again.indices);
        }
    }
}
