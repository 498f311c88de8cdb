//! Dense state-vector and density-matrix reference simulators, written
//! independently of the library's transfer-matrix machinery.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qem_core::{Circuit, Gate};

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli(i: usize) -> CMat {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let e = match i {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, c(0.0, -1.0), c(0.0, 1.0), z],
        _ => [o, z, z, -o],
    };
    CMat::from_row_slice(2, 2, &e)
}

/// Unitary of a gate, qubit 0 of the gate most significant.
pub fn unitary(g: Gate) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let phase = |t: f64| Complex64::from_polar(1.0, t);
    let pi4 = std::f64::consts::FRAC_PI_4;
    let m = |e: [Complex64; 4]| CMat::from_row_slice(2, 2, &e);
    match g {
        Gate::Id => CMat::identity(2, 2),
        Gate::H => m([c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]),
        Gate::S => m([o, z, z, phase(2.0 * pi4)]),
        Gate::Sdg => m([o, z, z, phase(-2.0 * pi4)]),
        Gate::T => m([o, z, z, phase(pi4)]),
        Gate::Tdg => m([o, z, z, phase(-pi4)]),
        Gate::X => pauli(1),
        Gate::Y => pauli(2),
        Gate::Z => pauli(3),
        Gate::Cnot => {
            let mut u = CMat::zeros(4, 4);
            for (r, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                u[(r, col)] = o;
            }
            u
        }
        other => panic!("no reference unitary for {other:?}"),
    }
}

/// Extends an operator on `support` (first entry most significant) to `n`
/// qubits, qubit 0 most significant.
pub fn embed(op: &CMat, support: &[usize], n: usize) -> CMat {
    let dim = 1usize << n;
    let bit = |i: usize, q: usize| (i >> (n - 1 - q)) & 1;
    let sub = |i: usize| support.iter().fold(0usize, |acc, &q| (acc << 1) | bit(i, q));
    let rest_mask: usize = (0..n)
        .filter(|q| !support.contains(q))
        .map(|q| 1usize << (n - 1 - q))
        .sum();
    let mut full = CMat::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            if i & rest_mask == j & rest_mask {
                full[(i, j)] = op[(sub(i), sub(j))];
            }
        }
    }
    full
}

pub fn zero_statevector(n: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(1 << n);
    v[0] = c(1.0, 0.0);
    v
}

pub fn run_statevector(circuit: &Circuit) -> DVector<Complex64> {
    let n = circuit.n();
    let mut v = zero_statevector(n);
    for op in circuit.ops() {
        v = embed(&unitary(op.gate), &op.qubits, n) * v;
    }
    v
}

/// `<Z>` on `qubit` of a state vector.
pub fn z_expectation(v: &DVector<Complex64>, qubit: usize, n: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, a)| {
            let s = if (i >> (n - 1 - qubit)) & 1 == 0 { 1.0 } else { -1.0 };
            s * a.norm_sqr()
        })
        .sum()
}

pub fn pauli_string(index: usize, n: usize) -> CMat {
    let mut acc = CMat::identity(1, 1);
    for q in 0..n {
        let d = (index >> (2 * (n - 1 - q))) & 3;
        acc = acc.kronecker(&pauli(d));
    }
    acc
}

/// `Tr(P_s rho)` for every Pauli string `s`.
pub fn pauli_coefficients(rho: &CMat, n: usize) -> Vec<f64> {
    (0..1usize << (2 * n))
        .map(|s| (pauli_string(s, n) * rho).trace().re)
        .collect()
}

pub fn apply_kraus(rho: &CMat, kraus: &[CMat], support: &[usize], n: usize) -> CMat {
    let mut out = CMat::zeros(rho.nrows(), rho.ncols());
    for k in kraus {
        let f = embed(k, support, n);
        out += &f * rho * f.adjoint();
    }
    out
}

/// A unitary from Euler-like angles, dense enough to cover U(2) up to phase.
pub fn unitary_from_angles(a: f64, b: f64, g: f64) -> CMat {
    let rz = |t: f64| CMat::from_row_slice(2, 2, &[Complex64::from_polar(1.0, -t / 2.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, t / 2.0)]);
    let ry = |t: f64| {
        let (s, co) = (t / 2.0).sin_cos();
        CMat::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
    };
    rz(a) * ry(b) * rz(g)
}

/// Amplitude damping Kraus operators.
pub fn damping(gamma: f64) -> Vec<CMat> {
    vec![
        CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - gamma).sqrt(), 0.0)]),
        CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(gamma.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
    ]
}
