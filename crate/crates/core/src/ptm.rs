//! Pauli-transfer-matrix representation of states, observables and operations.
//!
//! Pauli strings are indexed in base 4 with digits I=0, X=1, Y=2, Z=3 and
//! qubit 0 as the most significant digit. A state vector holds
//! `rho_s = Tr(s rho)`, an observable holds `Q_s = Tr(s Q) / d`, and an
//! operation holds `O_{s,t} = Tr[s O(t)] / d`, so that
//! `<Q> = sum_s Q_s rho_s` and `rho' = O rho`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QemError, Result};
use crate::linalg::{self, CMatrix};

/// Largest register that exact simulation accepts (4^12 reals per state).
pub const MAX_QUBITS: usize = 12;

/// Tolerance on the first-row deviation used for the trace-preserving flag.
pub const TP_TOL: f64 = 1e-9;

/// Entries smaller than this are dropped from the sparse kernels.
const KERNEL_ZERO: f64 = 1e-15;

pub(crate) fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        Err(QemError::Capacity {
            qubits: n,
            limit: MAX_QUBITS,
        })
    } else {
        Ok(())
    }
}

/// Number of Pauli strings on `n` qubits.
pub fn pauli_dim(n: usize) -> usize {
    1usize << (2 * n)
}

/// Pauli digit (0..4) of `qubit` inside string `index` on `n` qubits.
pub fn pauli_digit(index: usize, qubit: usize, n: usize) -> usize {
    (index >> (2 * (n - 1 - qubit))) & 3
}

/// A quantum state as a real coefficient vector in the Pauli basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliVector {
    n: usize,
    coeffs: Vec<f64>,
}

impl PauliVector {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_capacity(n)?;
        if coeffs.len() != pauli_dim(n) {
            return Err(QemError::DimensionMismatch(format!(
                "state on {n} qubits needs {} coefficients, got {}",
                pauli_dim(n),
                coeffs.len()
            )));
        }
        Ok(PauliVector { n, coeffs })
    }

    /// The register initialised in |0...0>.
    pub fn zero_state(n: usize) -> Result<Self> {
        check_capacity(n)?;
        let dim = pauli_dim(n);
        let mut coeffs = vec![0.0; dim];
        for (i, c) in coeffs.iter_mut().enumerate() {
            // only strings made of I and Z survive
            if (0..n).all(|q| matches!(pauli_digit(i, q, n), 0 | 3)) {
                *c = 1.0;
            }
        }
        Ok(PauliVector { n, coeffs })
    }

    /// Tensor product of single-qubit states, first entry on qubit 0.
    pub fn product(states: &[PauliVector]) -> Result<Self> {
        let n: usize = states.iter().map(|s| s.n).sum();
        check_capacity(n)?;
        let mut coeffs = vec![1.0];
        for s in states {
            let mut next = Vec::with_capacity(coeffs.len() * s.coeffs.len());
            for a in &coeffs {
                for b in &s.coeffs {
                    next.push(a * b);
                }
            }
            coeffs = next;
        }
        Ok(PauliVector { n, coeffs })
    }

    /// Pauli coefficients `Tr(s rho)` of a density matrix.
    pub fn from_density_matrix(rho: &CMatrix) -> Result<Self> {
        let n = qubits_of_dim(rho.nrows())?;
        check_capacity(n)?;
        let coeffs = (0..pauli_dim(n))
            .map(|s| (linalg::pauli_string(s, n) * rho).trace().re)
            .collect();
        Ok(PauliVector { n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// `Tr(rho)`, the identity-string coefficient.
    pub fn trace(&self) -> f64 {
        self.coeffs[0]
    }
}

/// An observable as a real row vector in the Pauli basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableVector {
    n: usize,
    coeffs: Vec<f64>,
}

impl ObservableVector {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_capacity(n)?;
        if coeffs.len() != pauli_dim(n) {
            return Err(QemError::DimensionMismatch(format!(
                "observable on {n} qubits needs {} coefficients, got {}",
                pauli_dim(n),
                coeffs.len()
            )));
        }
        Ok(ObservableVector { n, coeffs })
    }

    /// A single Pauli string observable.
    pub fn pauli_string(index: usize, n: usize) -> Result<Self> {
        check_capacity(n)?;
        let dim = pauli_dim(n);
        if index >= dim {
            return Err(QemError::InvalidArgument(format!(
                "Pauli string {index} out of range for {n} qubits"
            )));
        }
        let mut coeffs = vec![0.0; dim];
        coeffs[index] = 1.0;
        Ok(ObservableVector { n, coeffs })
    }

    /// sigma_z on `qubit`, identity elsewhere.
    pub fn z_on(qubit: usize, n: usize) -> Result<Self> {
        if qubit >= n {
            return Err(QemError::InvalidSupport(format!(
                "qubit {qubit} out of range for {n} qubits"
            )));
        }
        Self::pauli_string(3 << (2 * (n - 1 - qubit)), n)
    }

    pub fn from_operator(q: &CMatrix) -> Result<Self> {
        let n = qubits_of_dim(q.nrows())?;
        check_capacity(n)?;
        let d = (1usize << n) as f64;
        let coeffs = (0..pauli_dim(n))
            .map(|s| (linalg::pauli_string(s, n) * q).trace().re / d)
            .collect();
        Ok(ObservableVector { n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

fn qubits_of_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(QemError::DimensionMismatch(format!(
            "matrix dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

#[derive(Serialize, Deserialize)]
struct PtmData {
    arity: usize,
    #[serde(with = "crate::serde_matrix")]
    matrix: DMatrix<f64>,
}

/// Pauli transfer matrix of a k-qubit operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PtmData", into = "PtmData")]
pub struct Ptm {
    arity: usize,
    matrix: DMatrix<f64>,
    tp: bool,
}

impl TryFrom<PtmData> for Ptm {
    type Error = QemError;
    fn try_from(d: PtmData) -> Result<Self> {
        Ptm::new(d.arity, d.matrix)
    }
}

impl From<Ptm> for PtmData {
    fn from(p: Ptm) -> Self {
        PtmData {
            arity: p.arity,
            matrix: p.matrix,
        }
    }
}

impl Ptm {
    pub fn new(arity: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let dim = pauli_dim(arity);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QemError::DimensionMismatch(format!(
                "{arity}-qubit PTM must be {dim}x{dim}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let tp = first_row_is_trace_preserving(&matrix);
        Ok(Ptm { arity, matrix, tp })
    }

    pub fn identity(arity: usize) -> Self {
        let dim = pauli_dim(arity);
        Ptm {
            arity,
            matrix: DMatrix::identity(dim, dim),
            tp: true,
        }
    }

    /// PTM of the unitary channel `rho -> U rho U^dag`.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        let k = qubits_of_dim(u.nrows())?;
        ptm_from_kraus(std::slice::from_ref(u), k)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.tp
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Ptm) -> Ptm {
        assert_eq!(self.arity, first.arity, "arity mismatch in composition");
        Ptm::new(self.arity, &self.matrix * &first.matrix).expect("dimensions agree")
    }

    /// Tensor product, `self` on the more significant qubits.
    pub fn kron(&self, other: &Ptm) -> Ptm {
        Ptm::new(self.arity + other.arity, self.matrix.kronecker(&other.matrix))
            .expect("dimensions agree")
    }

    pub fn scale(&self, f: f64) -> Ptm {
        Ptm::new(self.arity, &self.matrix * f).expect("dimensions agree")
    }

    pub fn add(&self, other: &Ptm) -> Ptm {
        assert_eq!(self.arity, other.arity, "arity mismatch in sum");
        Ptm::new(self.arity, &self.matrix + &other.matrix).expect("dimensions agree")
    }

    pub fn sub(&self, other: &Ptm) -> Ptm {
        assert_eq!(self.arity, other.arity, "arity mismatch in difference");
        Ptm::new(self.arity, &self.matrix - &other.matrix).expect("dimensions agree")
    }

    pub fn transpose(&self) -> Ptm {
        Ptm::new(self.arity, self.matrix.transpose()).expect("dimensions agree")
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Ptm) -> f64 {
        linalg::max_norm(&(&self.matrix - &other.matrix))
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let m = &self.matrix;
        (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)].abs() <= tol))
    }
}

fn first_row_is_trace_preserving(m: &DMatrix<f64>) -> bool {
    (0..m.ncols()).all(|c| {
        let target = if c == 0 { 1.0 } else { 0.0 };
        (m[(0, c)] - target).abs() <= TP_TOL
    })
}

/// PTM of the operation `rho -> sum_m E_m rho E_m^dag` on `k` qubits.
pub fn ptm_from_kraus(kraus: &[CMatrix], k: usize) -> Result<Ptm> {
    if kraus.is_empty() {
        return Err(QemError::EmptyKraus);
    }
    let d = 1usize << k;
    for (i, e) in kraus.iter().enumerate() {
        if e.nrows() != d || e.ncols() != d {
            return Err(QemError::DimensionMismatch(format!(
                "Kraus operator {i} is {}x{}, expected {d}x{d}",
                e.nrows(),
                e.ncols()
            )));
        }
    }
    let mut completeness = CMatrix::zeros(d, d);
    for e in kraus {
        completeness += e.adjoint() * e;
    }
    let max_eig = nalgebra::SymmetricEigen::new(completeness)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max_eig > 1.0 + 1e-9 {
        return Err(QemError::NotTraceNonIncreasing(max_eig));
    }

    let dim = pauli_dim(k);
    let paulis: Vec<CMatrix> = (0..dim).map(|s| linalg::pauli_string(s, k)).collect();
    let mut m = DMatrix::zeros(dim, dim);
    for (t, tau) in paulis.iter().enumerate() {
        let mut image = CMatrix::zeros(d, d);
        for e in kraus {
            image += e * tau * e.adjoint();
        }
        for (s, sigma) in paulis.iter().enumerate() {
            let v: Complex64 = (sigma * &image).trace();
            m[(s, t)] = v.re / d as f64;
        }
    }
    Ptm::new(k, m)
}

/// Ordered, duplicate-free list of qubits an operation acts on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QubitSupport(Vec<usize>);

impl QubitSupport {
    pub fn new(qubits: Vec<usize>, n: usize) -> Result<Self> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= n {
                return Err(QemError::InvalidSupport(format!(
                    "qubit {q} out of range for {n} qubits"
                )));
            }
            if qubits[..i].contains(&q) {
                return Err(QemError::InvalidSupport(format!("duplicate qubit {q}")));
            }
        }
        Ok(QubitSupport(qubits))
    }

    pub fn single(q: usize, n: usize) -> Result<Self> {
        Self::new(vec![q], n)
    }

    pub fn qubits(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The nonzero entries of a PTM in row-compressed form, independent of where
/// the operation acts.
#[derive(Debug, Clone)]
pub struct Kernel {
    dim: usize,
    dense1: Option<[[f64; 4]; 4]>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Kernel {
    pub fn new(op: &Ptm) -> Self {
        let m = op.matrix();
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v.abs() > KERNEL_ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let dense1 = (dim == 4).then(|| {
            let mut d = [[0.0; 4]; 4];
            for (r, row) in d.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = m[(r, c)];
                }
            }
            d
        });
        Kernel {
            dim,
            dense1,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    fn apply_block(&self, buf: &[f64], state: &mut [f64], rest: usize, offsets: &[usize]) {
        let mut start = 0;
        for (&end, &off) in self.row_ptr[1..].iter().zip(offsets) {
            let s: f64 = self.cols[start..end]
                .iter()
                .zip(&self.vals[start..end])
                .map(|(&c, &v)| v * buf[c])
                .sum();
            start = end;
            state[rest + off] = s;
        }
    }
}

/// A PTM bound to a support inside an `n`-qubit register, stored as a sparse
/// kernel over the strided positions of the supported Pauli digits.
#[derive(Debug, Clone)]
pub struct LocalOp {
    n: usize,
    offsets: Vec<usize>,
    mask: usize,
    /// Length of the contiguous runs of coefficients below the support.
    run: usize,
    kernel: Arc<Kernel>,
}

impl LocalOp {
    pub fn new(op: &Ptm, support: &QubitSupport, n: usize) -> Result<Self> {
        Self::with_kernel(Arc::new(Kernel::new(op)), op.arity(), support, n)
    }

    /// Binds a prebuilt kernel of a `k`-qubit operation to `support`.
    pub fn with_kernel(kernel: Arc<Kernel>, k: usize, support: &QubitSupport, n: usize) -> Result<Self> {
        check_capacity(n)?;
        if support.len() != k || kernel.dim != pauli_dim(k) {
            return Err(QemError::DimensionMismatch(format!(
                "support of length {} for a {}-qubit operation",
                support.len(),
                k
            )));
        }
        if let Some(&q) = support.qubits().iter().find(|&&q| q >= n) {
            return Err(QemError::InvalidSupport(format!(
                "qubit {q} out of range for {n} qubits"
            )));
        }
        let shifts: Vec<usize> = support.qubits().iter().map(|&q| 2 * (n - 1 - q)).collect();
        let mask = shifts.iter().fold(0usize, |m, &s| m | (3 << s));
        let offsets = (0..kernel.dim)
            .map(|local| {
                (0..k).fold(0usize, |acc, j| {
                    let digit = (local >> (2 * (k - 1 - j))) & 3;
                    acc | (digit << shifts[j])
                })
            })
            .collect();
        let run = 1usize << shifts.iter().min().copied().unwrap_or(0);
        Ok(LocalOp {
            n,
            offsets,
            mask,
            run,
            kernel,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    /// Applies the kernel to a raw coefficient buffer of length 4^n in place.
    pub fn apply_in_place(&self, state: &mut [f64]) {
        self.apply_kernel_in_place(&self.kernel, state)
    }

    /// Applies another kernel of the same arity at this op's support.
    pub fn apply_kernel_in_place(&self, kernel: &Kernel, state: &mut [f64]) {
        debug_assert_eq!(state.len(), pauli_dim(self.n));
        assert_eq!(kernel.dim, self.offsets.len(), "kernel arity differs from support");
        if self.run > 1 {
            return self.apply_runs(kernel, state);
        }
        if let Some(m) = &kernel.dense1 {
            // the operation acts on the last qubit: blocks of four in a row
            for x in state.chunks_exact_mut(4) {
                let v = [x[0], x[1], x[2], x[3]];
                for (o, row) in x.iter_mut().zip(m) {
                    *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
                }
            }
            return;
        }
        let dim = kernel.dim;
        let mut small = [0.0f64; 16];
        let mut large = Vec::new();
        let buf: &mut [f64] = if dim <= 16 {
            &mut small[..dim]
        } else {
            large.resize(dim, 0.0);
            &mut large
        };
        let len = state.len();
        let mut rest = 0usize;
        loop {
            for (a, off) in self.offsets.iter().enumerate() {
                buf[a] = state[rest + off];
            }
            kernel.apply_block(buf, state, rest, &self.offsets);
            rest = ((rest | self.mask) + 1) & !self.mask;
            if rest >= len {
                break;
            }
        }
    }

    /// Same update, vectorised over the contiguous runs of coefficients
    /// whose digits lie below every supported qubit.
    fn apply_runs(&self, kernel: &Kernel, state: &mut [f64]) {
        let l = self.run;
        let dim = kernel.dim;
        let mut buf = vec![0.0; dim * l];
        let len = state.len();
        let mut rest = 0usize;
        loop {
            for (a, &off) in self.offsets.iter().enumerate() {
                buf[a * l..(a + 1) * l].copy_from_slice(&state[rest + off..rest + off + l]);
            }
            for (r, &off) in self.offsets.iter().enumerate() {
                let out = &mut state[rest + off..rest + off + l];
                let (s, e) = (kernel.row_ptr[r], kernel.row_ptr[r + 1]);
                if s == e {
                    out.fill(0.0);
                    continue;
                }
                let v = kernel.vals[s];
                let c = kernel.cols[s];
                for (o, x) in out.iter_mut().zip(&buf[c * l..(c + 1) * l]) {
                    *o = v * x;
                }
                for idx in s + 1..e {
                    let v = kernel.vals[idx];
                    let c = kernel.cols[idx];
                    for (o, x) in out.iter_mut().zip(&buf[c * l..(c + 1) * l]) {
                        *o += v * x;
                    }
                }
            }
            rest = ((rest | self.mask | (l - 1)) + 1) & !self.mask;
            if rest >= len {
                break;
            }
        }
    }
}

/// Applies `op` to the qubits in `support`, leaving the rest untouched.
pub fn apply_local(state: &PauliVector, op: &Ptm, support: &QubitSupport) -> Result<PauliVector> {
    if op.arity() > state.n() {
        return Err(QemError::DimensionMismatch(format!(
            "{}-qubit operation on a {}-qubit state",
            op.arity(),
            state.n()
        )));
    }
    let kernel = LocalOp::new(op, support, state.n())?;
    let mut out = state.clone();
    kernel.apply_in_place(&mut out.coeffs);
    Ok(out)
}

/// `<Q> = <<Q|rho>>`.
pub fn expectation(obs: &ObservableVector, state: &PauliVector) -> Result<f64> {
    if obs.n() != state.n() {
        return Err(QemError::DimensionMismatch(format!(
            "observable on {} qubits, state on {}",
            obs.n(),
            state.n()
        )));
    }
    Ok(dot(obs.coeffs(), state.coeffs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The single-qubit fiducials {|0>, |1>, |+>, |y+>} and observables {I, X, Y, Z}.
pub fn canonical_fiducials() -> (Vec<PauliVector>, Vec<ObservableVector>) {
    let states = [
        [1.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, -1.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 1.0, 0.0],
    ]
    .iter()
    .map(|c| PauliVector::new(1, c.to_vec()).expect("4 coefficients"))
    .collect();
    let observables = (0..4)
        .map(|j| ObservableVector::pauli_string(j, 1).expect("in range"))
        .collect();
    (states, observables)
}

/// Columns are the Pauli vectors of the given states.
pub fn state_matrix(states: &[PauliVector]) -> DMatrix<f64> {
    let dim = states[0].coeffs().len();
    DMatrix::from_fn(dim, states.len(), |r, c| states[c].coeffs()[r])
}

/// Rows are the Pauli vectors of the given observables.
pub fn observable_matrix(observables: &[ObservableVector]) -> DMatrix<f64> {
    let dim = observables[0].coeffs().len();
    DMatrix::from_fn(observables.len(), dim, |r, c| observables[r].coeffs()[c])
}

/// Columns are `Tr(s rho_k) / d`, the coefficients of each state expanded over
/// Pauli operators, `rho_k = sum_s M_{s,k} s`. Rows of an observable matrix use
/// the same expansion, so both fiducial matrices live in one coordinate system.
pub fn expansion_state_matrix(states: &[PauliVector]) -> DMatrix<f64> {
    let d = (1usize << states[0].n()) as f64;
    state_matrix(states) / d
}

/// M^in(0) of the canonical fiducial states, in expansion coefficients.
pub fn m_in_ideal() -> DMatrix<f64> {
    expansion_state_matrix(&canonical_fiducials().0)
}

/// M^out(0) of the canonical fiducial observables (the identity).
pub fn m_out_ideal() -> DMatrix<f64> {
    observable_matrix(&canonical_fiducials().1)
}
