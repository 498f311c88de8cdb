//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QemError, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Residual above which a linear solve is rejected.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Single-qubit Pauli matrix in the order I, X, Y, Z.
pub fn pauli(index: usize) -> CMatrix {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match index {
        0 => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        1 => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        2 => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        3 => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("pauli index {index} out of range"),
    }
}

/// Pauli string of `k` qubits; digit of qubit 0 is the most significant.
pub fn pauli_string(index: usize, k: usize) -> CMatrix {
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for q in 0..k {
        let digit = (index >> (2 * (k - 1 - q))) & 3;
        m = m.kronecker(&pauli(digit));
    }
    m
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `a x = b` with partial-pivot LU and reject solutions whose
/// max-norm residual exceeds `SOLVE_RESIDUAL_TOL`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| QemError::Singular(what.to_string()))?;
    let residual = (a * &x - b).amax();
    if !residual.is_finite() || residual > SOLVE_RESIDUAL_TOL {
        return Err(QemError::Residual {
            residual,
            tolerance: SOLVE_RESIDUAL_TOL,
        });
    }
    Ok(x)
}

pub fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| QemError::Singular(what.to_string()))?;
    let n = a.nrows();
    let residual = (a * &inv - DMatrix::<f64>::identity(n, n)).amax();
    if !residual.is_finite() || residual > SOLVE_RESIDUAL_TOL {
        return Err(QemError::Residual {
            residual,
            tolerance: SOLVE_RESIDUAL_TOL,
        });
    }
    Ok(inv)
}

/// Kronecker product of a list of real matrices (first factor most significant).
pub fn kron_all(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}
