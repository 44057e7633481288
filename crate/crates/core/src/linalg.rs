//! Solves `(D + τA) x = b` for a positive diagonal `D` and the TPFA stiffness
//! `A`, and exposes the heat map `(M + τA)⁻¹M`.
//!
//! `D + τA` is a Stieltjes matrix (SPD with nonpositive off-diagonals), so
//! its inverse is entrywise nonnegative. Small systems use a dense Cholesky
//! factorization; larger ones use conjugate gradients with the Jacobi
//! preconditioner `diag(D + τA)`.

use crate::assembly::{DiagonalOperator, SparseOperator};
use crate::mesh::DiscreteField;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `|Kx − b|₂ ≤ rtol·|b|₂`.
    pub rtol: f64,
    /// Iteration cap as a multiple of the dimension.
    pub max_iter_factor: usize,
    /// Systems with at most this many unknowns are factorized densely.
    pub dense_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, max_iter_factor: 10, dense_threshold: 64 }
    }
}

/// Dense lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    lower: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, actual: a.len() });
        }
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if d.is_nan() || d <= 0.0 {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower: a })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, l) = (self.n, &self.lower);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y = (D + τA) x`.
fn apply_shifted(diag: &[f64], stiffness: &SparseOperator, tau: f64, x: &[f64], y: &mut [f64]) {
    stiffness.apply_into(x, y);
    for ((yi, d), xi) in y.iter_mut().zip(diag).zip(x) {
        *yi = d * xi + tau * *yi;
    }
}

fn shifted_dense(diag: &[f64], stiffness: &SparseOperator, tau: f64) -> Vec<f64> {
    let n = diag.len();
    let mut dense = stiffness.to_dense();
    dense.iter_mut().for_each(|v| *v *= tau);
    for (i, d) in diag.iter().enumerate() {
        dense[i * n + i] += d;
    }
    dense
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
fn pcg(
    diag: &[f64],
    stiffness: &SparseOperator,
    tau: f64,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let target = rtol * b_norm;
    let inv_precond: Vec<f64> = diag
        .iter()
        .zip(stiffness.diagonal())
        .map(|(d, a)| 1.0 / (d + tau * a))
        .collect();

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_precond).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;

    while iterations < max_iter {
        apply_shifted(diag, stiffness, tau, &p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        iterations += 1;

        if norm2(&r) <= target {
            // confirm against the true residual before accepting
            apply_shifted(diag, stiffness, tau, &x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            if norm2(&r) <= target {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_precond[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }

        for i in 0..n {
            z[i] = r[i] * inv_precond[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged { iterations, residual: norm2(&r) / b_norm })
}

/// Solves `(diag(d) + τA) x = b` for a positive `d`.
pub fn solve_diagonal_shift(
    diag: &[f64],
    stiffness: &SparseOperator,
    tau: f64,
    b: &[f64],
    options: &SolverOptions,
) -> Result<Vec<f64>> {
    let n = stiffness.dim();
    if diag.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: diag.len() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: b.len() });
    }
    if n <= options.dense_threshold {
        Ok(DenseCholesky::factor(n, shifted_dense(diag, stiffness, tau))?.solve(b))
    } else {
        pcg(diag, stiffness, tau, b, options.rtol, options.max_iter_factor * n)
    }
}

/// `(M + τA)` for a fixed `τ`, with the factorization cached on small meshes.
#[derive(Debug, Clone)]
pub struct ShiftedSolver<'a> {
    mass: &'a DiagonalOperator,
    stiffness: &'a SparseOperator,
    tau: f64,
    options: SolverOptions,
    dense: Option<DenseCholesky>,
}

impl<'a> ShiftedSolver<'a> {
    pub fn new(mass: &'a DiagonalOperator, stiffness: &'a SparseOperator, tau: f64) -> Result<Self> {
        Self::with_options(mass, stiffness, tau, SolverOptions::default())
    }

    pub fn with_options(
        mass: &'a DiagonalOperator,
        stiffness: &'a SparseOperator,
        tau: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {tau}")));
        }
        if mass.len() != stiffness.dim() {
            return Err(Error::DimensionMismatch { expected: stiffness.dim(), actual: mass.len() });
        }
        let n = mass.len();
        let dense = if n <= options.dense_threshold {
            Some(DenseCholesky::factor(n, shifted_dense(mass.diag(), stiffness, tau))?)
        } else {
            None
        };
        Ok(Self { mass, stiffness, tau, options, dense })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mass(&self) -> &'a DiagonalOperator {
        self.mass
    }

    pub fn stiffness(&self) -> &'a SparseOperator {
        self.stiffness
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub(crate) fn solve_raw(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: b.len() });
        }
        match &self.dense {
            Some(chol) => Ok(chol.solve(b)),
            None => pcg(
                self.mass.diag(),
                self.stiffness,
                self.tau,
                b,
                self.options.rtol,
                self.options.max_iter_factor * self.dim(),
            ),
        }
    }

    /// `x = (M + τA)⁻¹ b`.
    pub fn solve_shifted(&self, b: &DiscreteField) -> Result<DiscreteField> {
        self.solve_raw(b).map(DiscreteField::from_vec_unchecked)
    }

    /// Evaluated as `x − τ(M + τA)⁻¹Ax`, which leaves constants exactly
    /// fixed since `A𝟏 = 0`.
    pub(crate) fn apply_markov_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let mut ax = self.stiffness.apply(x);
        ax.iter_mut().for_each(|v| *v *= self.tau);
        let correction = self.solve_raw(&ax)?;
        Ok(x.iter().zip(correction).map(|(a, c)| a - c).collect())
    }

    /// `(M + τA)⁻¹ M x`: mass-conserving, positivity-preserving, fixes
    /// constants.
    pub fn apply_markov(&self, x: &DiscreteField) -> Result<DiscreteField> {
        self.apply_markov_raw(x).map(DiscreteField::from_vec_unchecked)
    }

    /// `|(M + τA)x − b|₂`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim()];
        apply_shifted(self.mass.diag(), self.stiffness, self.tau, x, &mut y);
        y.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
    }
}
