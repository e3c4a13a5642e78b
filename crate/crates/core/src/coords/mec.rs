//! Maximum-entropy projection of prior masses onto barycentric coordinates.
//!
//! Solves `max −Σ b_k ln(b_k / m_k)` subject to `Σ b_k c_k = a` and
//! `Σ b_k = 1`. The optimum has the form `b_k ∝ m_k exp(−λ·(c_k − a))`;
//! the three multipliers `λ` minimize the convex log-partition function,
//! which we do with damped Newton.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::Vec3;

pub const MEC_TOL: f64 = 1e-10;
pub const MEC_MAX_ITERS: usize = 100;
const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug)]
pub struct MecProblem<'a> {
    /// Strictly positive prior masses, one per node.
    pub masses: &'a [f64],
    pub nodes: &'a [Vec3],
    pub target: Vec3,
}

#[derive(Clone, Debug)]
pub struct MecSolution {
    pub weights: Vec<f64>,
    /// `‖Σ b_k c_k − a‖`, in scene units.
    pub residual: f64,
    pub iterations: usize,
}

/// Relative entropy objective `−Σ b_k ln(b_k / m_k)` (zero-weight terms
/// contribute nothing).
pub fn entropy_objective(weights: &[f64], masses: &[f64]) -> f64 {
    weights
        .iter()
        .zip(masses)
        .filter(|(b, _)| **b > 0.0)
        .map(|(b, m)| -b * (b / m).ln())
        .sum()
}

struct Dual<'a> {
    log_masses: Vec<f64>,
    dirs: &'a [Vector3<f64>],
}

impl Dual<'_> {
    /// Log-partition value and the normalized weights at `lambda`.
    fn eval(&self, lambda: &Vector3<f64>, weights: &mut [f64]) -> f64 {
        let mut max_e = f64::NEG_INFINITY;
        for (k, d) in self.dirs.iter().enumerate() {
            let e = self.log_masses[k] - lambda.dot(d);
            weights[k] = e;
            max_e = max_e.max(e);
        }
        let mut z = 0.0;
        for w in weights.iter_mut() {
            *w = (*w - max_e).exp();
            z += *w;
        }
        for w in weights.iter_mut() {
            *w /= z;
        }
        max_e + z.ln()
    }

    fn moments(&self, weights: &[f64]) -> (Vector3<f64>, Matrix3<f64>) {
        let mut r = Vector3::zeros();
        let mut second = Matrix3::zeros();
        for (w, d) in weights.iter().zip(self.dirs) {
            r += d * *w;
            second += d * d.transpose() * *w;
        }
        (r, second - r * r.transpose())
    }
}

pub fn mec_project(problem: &MecProblem) -> Result<MecSolution> {
    let n = problem.nodes.len();
    if problem.masses.len() != n {
        return Err(Error::Dimension {
            what: "MEC masses",
            expected: n,
            found: problem.masses.len(),
        });
    }
    if n == 0 {
        return Err(Error::MecNonConvergence {
            residual: f64::INFINITY,
        });
    }
    if let Some(m) = problem.masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::Validation(format!(
            "MEC prior masses must be positive, got {m}"
        )));
    }

    let a = problem.target;
    let scale = problem
        .nodes
        .iter()
        .map(|c| (c - a).norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        // Every node coincides with the target: the prior itself is optimal.
        let total: f64 = problem.masses.iter().sum();
        return Ok(MecSolution {
            weights: problem.masses.iter().map(|m| m / total).collect(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let dirs: Vec<Vector3<f64>> = problem.nodes.iter().map(|c| (c - a) / scale).collect();
    let dual = Dual {
        log_masses: problem.masses.iter().map(|m| m.ln()).collect(),
        dirs: &dirs,
    };

    let mut lambda = Vector3::zeros();
    let mut weights = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut value = dual.eval(&lambda, &mut weights);
    let mut residual = f64::INFINITY;

    for iter in 0..=MEC_MAX_ITERS {
        let (r, hessian) = dual.moments(&weights);
        residual = r.norm();
        if residual <= MEC_TOL {
            return Ok(MecSolution {
                weights,
                residual: residual * scale,
                iterations: iter,
            });
        }
        if iter == MEC_MAX_ITERS {
            break;
        }
        // Gradient of the log-partition is −r; descend along H⁻¹ r.
        let step = match hessian.cholesky() {
            Some(ch) => ch.solve(&r),
            None => match hessian.pseudo_inverse(1e-14) {
                Ok(pinv) => pinv * r,
                Err(_) => break,
            },
        };
        if !step.iter().all(|x| x.is_finite()) {
            break;
        }
        let slope = -r.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = lambda + step * t;
            let v = dual.eval(&candidate, &mut trial);
            // Near the optimum the objective stops resolving decreases in
            // floating point; a smaller constraint residual is then the
            // better acceptance test.
            let sufficient = v <= value + 1e-4 * t * slope || v < value;
            if sufficient || dual.moments(&trial).0.norm() < residual {
                lambda = candidate;
                value = v;
                std::mem::swap(&mut weights, &mut trial);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No decrease available at machine precision; report what we have.
            let (r, _) = dual.moments(&weights);
            residual = r.norm();
            if residual <= MEC_TOL {
                continue;
            }
            break;
        }
    }
    Err(Error::MecNonConvergence {
        residual: residual * scale,
    })
}
