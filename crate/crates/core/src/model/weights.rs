use nalgebra::DMatrix;

use super::geom::Vec3;
use crate::error::{Error, Result};

/// Partition-of-unity tolerance applied after coordinate computations.
pub const ROW_SUM_TOL: f64 = 1e-8;
/// Looser tolerance accepted when reading weights from disk.
pub const LOAD_ROW_SUM_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightRole {
    /// `W`, skin vertices × joints, nonnegative.
    SkinWeights,
    /// `Φ`, skin vertices × cage vertices, may be negative.
    CageCoords,
    /// `Ψ`, joints × cage vertices, nonnegative.
    JointCoords,
}

impl WeightRole {
    fn nonnegative(self) -> bool {
        !matches!(self, WeightRole::CageCoords)
    }
}

/// Row-stochastic sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    pub role: WeightRole,
}

impl WeightMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate entries are
    /// summed; explicit zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        role: WeightRole,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Validation(format!(
                    "weight entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Validation(format!("weight entry ({r}, {c}) is not finite")));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            role,
        };
        m.drop_zeros();
        Ok(m)
    }

    /// Builds from dense rows, keeping every nonzero.
    pub fn from_rows(cols: usize, rows: &[Vec<f64>], role: WeightRole) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            debug_assert_eq!(row.len(), cols);
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
            role,
        }
    }

    fn drop_zeros(&mut self) {
        let mut row_ptr = vec![0; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.col_idx.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, v) = self.row(r);
        c.iter().copied().zip(v.iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (c, v) in self.row_iter(r) {
            out[c] = v;
        }
        out
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).1.iter().sum()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row_iter(r).map(move |(c, v)| (r, c, v)))
    }

    /// Row `r` applied to a list of points, `Σ_c m[r,c] · points[c]`.
    #[inline]
    pub fn combine_row(&self, r: usize, points: &[Vec3]) -> Vec3 {
        let mut acc = Vec3::zeros();
        for (c, v) in self.row_iter(r) {
            acc += points[c] * v;
        }
        acc
    }

    /// `self · points` where `points` has one entry per column.
    pub fn apply(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        if points.len() != self.cols {
            return Err(Error::Dimension {
                what: "points",
                expected: self.cols,
                found: points.len(),
            });
        }
        Ok((0..self.rows).map(|r| self.combine_row(r, points)).collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Largest `|Σ_c m[r,c] − 1|` over rows.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.rows)
            .map(|r| (self.row_sum(r) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Partition of unity within `tol`, plus nonnegativity where the role
    /// requires it. Errors name the offending row.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let label = match self.role {
            WeightRole::SkinWeights => "vertex",
            WeightRole::CageCoords => "vertex",
            WeightRole::JointCoords => "joint",
        };
        for r in 0..self.rows {
            let sum = self.row_sum(r);
            if (sum - 1.0).abs() > tol {
                return Err(Error::Validation(format!(
                    "weights of {label} {r} sum to {sum} (expected 1)"
                )));
            }
            if self.role.nonnegative() {
                if let Some((c, v)) = self.row_iter(r).find(|&(_, v)| v < 0.0) {
                    return Err(Error::Validation(format!(
                        "weight ({label} {r}, handle {c}) = {v} is negative"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Submatrix with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> WeightMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let (c, v) = self.row(r);
            col_idx.extend_from_slice(c);
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        WeightMatrix {
            rows: rows.len(),
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
            role: self.role,
        }
    }

    /// Divides every row by its sum (rows summing to zero are left alone).
    pub fn normalize_rows(&mut self) {
        for r in 0..self.rows {
            let range = self.row_ptr[r]..self.row_ptr[r + 1];
            let sum: f64 = self.values[range.clone()].iter().sum();
            if sum != 0.0 && sum != 1.0 {
                self.values[range].iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Column with the largest value in row `r` (lowest index on ties).
    pub fn dominant_column(&self, r: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (c, v) in self.row_iter(r) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c, v));
            }
        }
        best.map(|(c, _)| c)
    }
}
