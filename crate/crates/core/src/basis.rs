//! The sixteen single-qubit basis operations, the A matrix, and
//! quasi-probability decompositions over tensor products of basis operations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QemError, Result};
use crate::linalg::{self, c, CMatrix};
use crate::ptm::{self, pauli_dim, ObservableVector, PauliVector, Ptm};

/// Coefficients below this magnitude are dropped from decompositions.
pub const DROP_TOL: f64 = 1e-14;

/// Smallest singular value of the ideal A matrix, (sqrt 17 - 3)/2.
pub fn s_min_a_ideal() -> f64 {
    0.5 * (17f64.sqrt() - 3.0)
}

/// Basis errors below this max-norm distance keep A invertible.
pub fn invertibility_threshold() -> f64 {
    s_min_a_ideal() / 16.0
}

/// Condition number above which the inverse method refuses an operation.
pub const INVERSE_COND_LIMIT: f64 = 1e12;

/// Kraus operator of basis operation `i` (1-based).
pub fn basis_kraus(i: usize) -> CMatrix {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let p = |k: usize| linalg::pauli(k);
    let id = p(0);
    let ci = c(0.0, 1.0);
    match i {
        1 => id,
        2 => p(1),
        3 => p(2),
        4 => p(3),
        5 => (&id + p(1) * ci) * c(r, 0.0),
        6 => (&id + p(2) * ci) * c(r, 0.0),
        7 => (&id + p(3) * ci) * c(r, 0.0),
        8 => (p(2) + p(3)) * c(r, 0.0),
        9 => (p(3) + p(1)) * c(r, 0.0),
        10 => (p(1) + p(2)) * c(r, 0.0),
        11 => (&id + p(1)) * c(0.5, 0.0),
        12 => (&id + p(2)) * c(0.5, 0.0),
        13 => (&id + p(3)) * c(0.5, 0.0),
        14 => (p(2) + p(3) * ci) * c(0.5, 0.0),
        15 => (p(3) + p(1) * ci) * c(0.5, 0.0),
        16 => (p(1) + p(2) * ci) * c(0.5, 0.0),
        _ => panic!("basis operation {i} out of range 1..=16"),
    }
}

/// Where the operations of a basis set come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFlavor {
    Ideal,
    NoisyActual,
    GstEstimate,
}

/// Sixteen single-qubit operations, labelled 1..=16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub flavor: BasisFlavor,
    ops: Vec<Ptm>,
}

impl BasisSet {
    pub fn new(flavor: BasisFlavor, ops: Vec<Ptm>) -> Result<Self> {
        if ops.len() != 16 {
            return Err(QemError::InvalidArgument(format!(
                "a basis set needs 16 operations, got {}",
                ops.len()
            )));
        }
        if let Some(op) = ops.iter().find(|o| o.arity() != 1) {
            return Err(QemError::DimensionMismatch(format!(
                "basis operations act on one qubit, got arity {}",
                op.arity()
            )));
        }
        Ok(BasisSet { flavor, ops })
    }

    /// Operation with 1-based label `i`.
    pub fn get(&self, i: usize) -> &Ptm {
        &self.ops[i - 1]
    }

    pub fn ops(&self) -> &[Ptm] {
        &self.ops
    }

    /// Largest max-norm distance from the ideal operations.
    pub fn eps_max(&self) -> f64 {
        let ideal = ideal_basis();
        self.ops
            .iter()
            .zip(ideal.ops())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

pub fn ideal_basis() -> BasisSet {
    let ops = (1..=16)
        .map(|i| ptm::ptm_from_kraus(&[basis_kraus(i)], 1).expect("basis Kraus operators are contractions"))
        .collect();
    BasisSet {
        flavor: BasisFlavor::Ideal,
        ops,
    }
}

/// The 16x16 matrix whose column i stacks the four columns of basis
/// operation i: `A[4 t + s, i] = (B_i)_{s,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AMatrix {
    pub matrix: DMatrix<f64>,
    pub s_min: f64,
    pub eps_max: f64,
    pub invertibility_guaranteed: bool,
}

/// Column-stacked vector of a PTM over `n` qubits, ordered so that tensor
/// products of single-qubit A matrices act on it directly.
pub fn stacked(target: &Ptm) -> DVector<f64> {
    let n = target.arity();
    let dim = pauli_dim(n);
    let m = target.matrix();
    let mut e = DVector::zeros(dim * dim);
    for s in 0..dim {
        for t in 0..dim {
            let mut idx = 0usize;
            for q in 0..n {
                let sd = ptm::pauli_digit(s, q, n);
                let td = ptm::pauli_digit(t, q, n);
                idx = idx * 16 + td * 4 + sd;
            }
            e[idx] = m[(s, t)];
        }
    }
    e
}

#[allow(non_snake_case)]
pub fn build_A(basis: &BasisSet) -> Result<AMatrix> {
    let mut matrix = DMatrix::zeros(16, 16);
    for (i, op) in basis.ops().iter().enumerate() {
        matrix.set_column(i, &stacked(op));
    }
    let s_min = linalg::smallest_singular_value(&matrix);
    if s_min < 1e-12 {
        return Err(QemError::Singular(format!(
            "A matrix of the {:?} basis set is not invertible",
            basis.flavor
        )));
    }
    let eps_max = basis.eps_max();
    Ok(AMatrix {
        matrix,
        s_min,
        eps_max,
        invertibility_guaranteed: eps_max < invertibility_threshold(),
    })
}

/// A term label in a quasi-probability decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// Tensor product of basis operations, one 1-based label per qubit.
    Basis(Vec<u8>),
    /// The noisy operation itself (compensation method).
    Actual,
    /// One 1-based fiducial state or observable index per qubit.
    Fiducial(Vec<u8>),
    /// A caller-supplied operation.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    Direct,
    Compensation { lambda: f64 },
    Inverse,
    State,
    Observable,
    Boost { r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: Label,
    pub coeff: f64,
}

/// Signed coefficients over implementable operations, with cost `C = sum |q|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiDecomposition {
    pub method: Method,
    pub terms: Vec<Term>,
    pub cost: f64,
}

impl QuasiDecomposition {
    pub fn new(method: Method, terms: Vec<Term>) -> Self {
        let terms: Vec<Term> = terms.into_iter().filter(|t| t.coeff.abs() >= DROP_TOL).collect();
        let cost = terms.iter().map(|t| t.coeff.abs()).sum();
        QuasiDecomposition { method, terms, cost }
    }

    /// `p_l = |q_l| / C`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coeff.abs() / self.cost).collect()
    }

    pub fn signs(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coeff.signum()).collect()
    }

    pub fn coeff_of(&self, label: &Label) -> f64 {
        self.terms
            .iter()
            .filter(|t| &t.label == label)
            .map(|t| t.coeff)
            .sum()
    }

    /// `sum_l q_l resolve(l)`.
    pub fn reconstruct<F>(&self, mut resolve: F) -> Result<Ptm>
    where
        F: FnMut(&Label) -> Result<Ptm>,
    {
        let mut acc: Option<Ptm> = None;
        for t in &self.terms {
            let op = resolve(&t.label)?.scale(t.coeff);
            acc = Some(match acc {
                None => op,
                Some(a) => a.add(&op),
            });
        }
        acc.ok_or_else(|| QemError::InvalidArgument("empty decomposition".into()))
    }
}

/// Tensor product of basis operations named by `labels`, qubit 0 first.
pub fn basis_product(labels: &[u8], bases: &[&BasisSet]) -> Ptm {
    let mut it = labels.iter().zip(bases);
    let (l0, b0) = it.next().expect("at least one qubit");
    let mut acc = b0.get(*l0 as usize).clone();
    for (l, b) in it {
        acc = acc.kron(b.get(*l as usize));
    }
    acc
}

fn check_bases(target: &Ptm, bases: &[&BasisSet]) -> Result<()> {
    let n = target.arity();
    if n == 0 || n > 2 {
        return Err(QemError::InvalidArgument(format!(
            "decompositions support 1- and 2-qubit targets, got {n}"
        )));
    }
    if bases.len() != n {
        return Err(QemError::DimensionMismatch(format!(
            "{n}-qubit target needs {n} basis sets, got {}",
            bases.len()
        )));
    }
    Ok(())
}

fn labels_of(index: usize, n: usize) -> Vec<u8> {
    (0..n)
        .map(|q| ((index >> (4 * (n - 1 - q))) & 15) as u8 + 1)
        .collect()
}

/// Coefficient vector `(A_1 (x) ... (x) A_n)^-1 E` for a target PTM.
fn solve_coefficients(e: &DVector<f64>, bases: &[&BasisSet]) -> Result<DVector<f64>> {
    let mut a = DMatrix::from_element(1, 1, 1.0);
    for b in bases {
        a = a.kronecker(&build_A(b)?.matrix);
    }
    linalg::solve(&a, e, "basis A matrix")
}

fn basis_terms(q: &DVector<f64>, n: usize) -> Vec<Term> {
    q.iter()
        .enumerate()
        .map(|(i, &coeff)| Term {
            label: Label::Basis(labels_of(i, n)),
            coeff,
        })
        .collect()
}

/// Expresses `target` as a linear combination of tensor products of basis operations.
pub fn decompose(target: &Ptm, bases: &[&BasisSet]) -> Result<QuasiDecomposition> {
    check_bases(target, bases)?;
    let q = solve_coefficients(&stacked(target), bases)?;
    Ok(QuasiDecomposition::new(
        Method::Direct,
        basis_terms(&q, target.arity()),
    ))
}

/// Expresses `target` over an arbitrary list of candidate operations by least
/// squares, rejecting the result unless it reconstructs the target.
pub fn decompose_over(target: &Ptm, candidates: &[(Label, Ptm)]) -> Result<QuasiDecomposition> {
    if candidates.is_empty() {
        return Err(QemError::InvalidArgument("no candidate operations".into()));
    }
    let e = stacked(target);
    let mut m = DMatrix::zeros(e.len(), candidates.len());
    for (i, (_, op)) in candidates.iter().enumerate() {
        if op.arity() != target.arity() {
            return Err(QemError::DimensionMismatch(
                "candidate arity differs from target".into(),
            ));
        }
        m.set_column(i, &stacked(op));
    }
    let svd = m.clone().svd(true, true);
    let q = svd
        .solve(&e, 1e-12)
        .map_err(|msg| QemError::Singular(msg.to_string()))?;
    let residual = (&m * &q - &e).amax();
    if residual > linalg::SOLVE_RESIDUAL_TOL {
        return Err(QemError::Residual {
            residual,
            tolerance: linalg::SOLVE_RESIDUAL_TOL,
        });
    }
    let terms = candidates
        .iter()
        .zip(q.iter())
        .map(|((label, _), &coeff)| Term {
            label: label.clone(),
            coeff,
        })
        .collect();
    Ok(QuasiDecomposition::new(Method::Direct, terms))
}

/// How the compensation method picks the weight of the noisy operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Optimize,
}

/// `ideal = lambda actual + sum_i q_i B_i`.
pub fn compensation_decompose(
    ideal: &Ptm,
    actual: &Ptm,
    bases: &[&BasisSet],
    lambda: LambdaChoice,
) -> Result<QuasiDecomposition> {
    check_bases(ideal, bases)?;
    if actual.arity() != ideal.arity() {
        return Err(QemError::DimensionMismatch("actual and ideal arity differ".into()));
    }
    let q0 = solve_coefficients(&stacked(ideal), bases)?;
    let dq = solve_coefficients(&stacked(actual), bases)?;
    let cost = |l: f64| l.abs() + q0.iter().zip(dq.iter()).map(|(a, b)| (a - l * b).abs()).sum::<f64>();
    let lam = match lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Optimize => {
            let best = golden_section(&cost, 0.0, 2.0, 1e-6);
            [best, 0.0, 1.0, 2.0]
                .into_iter()
                .fold((f64::NAN, f64::INFINITY), |(bl, bc), l| {
                    let cl = cost(l);
                    if cl < bc {
                        (l, cl)
                    } else {
                        (bl, bc)
                    }
                })
                .0
        }
    };
    let q = &q0 - &dq * lam;
    let mut terms = vec![Term {
        label: Label::Actual,
        coeff: lam,
    }];
    terms.extend(basis_terms(&q, ideal.arity()));
    Ok(QuasiDecomposition::new(
        Method::Compensation { lambda: lam },
        terms,
    ))
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Decomposes the inverse noise `ideal actual^-1`; its terms are applied
/// after the noisy operation.
pub fn inverse_decompose(ideal: &Ptm, actual: &Ptm, bases: &[&BasisSet]) -> Result<QuasiDecomposition> {
    check_bases(ideal, bases)?;
    if actual.arity() != ideal.arity() {
        return Err(QemError::DimensionMismatch("actual and ideal arity differ".into()));
    }
    let cond = linalg::condition_number(actual.matrix());
    if !cond.is_finite() || cond > INVERSE_COND_LIMIT {
        return Err(QemError::Singular(format!(
            "noisy operation has condition number {cond:e}; use the compensation method instead"
        )));
    }
    let inv = linalg::inverse(actual.matrix(), "noisy operation")?;
    let n_inv = Ptm::new(ideal.arity(), ideal.matrix() * inv)?;
    let mut d = decompose(&n_inv, bases)?;
    d.method = Method::Inverse;
    Ok(d)
}

fn fiducial_terms(q: &DVector<f64>, n: usize) -> Vec<Term> {
    q.iter()
        .enumerate()
        .map(|(i, &coeff)| Term {
            label: Label::Fiducial(
                (0..n)
                    .map(|m| ((i >> (2 * (n - 1 - m))) & 3) as u8 + 1)
                    .collect(),
            ),
            coeff,
        })
        .collect()
}

/// `rho0 = sum_k q_k rho_k` over the four prepared states of one qubit.
pub fn decompose_state(ideal: &PauliVector, prepared: &[PauliVector]) -> Result<QuasiDecomposition> {
    decompose_product_state(ideal, &[prepared.to_vec()])
}

/// State decomposition over tensor products of per-qubit prepared states.
pub fn decompose_product_state(
    ideal: &PauliVector,
    prepared: &[Vec<PauliVector>],
) -> Result<QuasiDecomposition> {
    let n = ideal.n();
    if prepared.len() != n || prepared.iter().any(|p| p.len() != 4 || p.iter().any(|s| s.n() != 1)) {
        return Err(QemError::DimensionMismatch(
            "need four single-qubit prepared states per qubit".into(),
        ));
    }
    let mats: Vec<DMatrix<f64>> = prepared.iter().map(|p| ptm::state_matrix(p)).collect();
    let m = linalg::kron_all(&mats);
    let q = linalg::solve(&m, &DVector::from_column_slice(ideal.coeffs()), "prepared state matrix")?;
    Ok(QuasiDecomposition::new(Method::State, fiducial_terms(&q, n)))
}

/// `Q0 = sum_j q_j Q_j` over the four measured observables of one qubit.
pub fn decompose_observable(
    ideal: &ObservableVector,
    measured: &[ObservableVector],
) -> Result<QuasiDecomposition> {
    decompose_product_observable(ideal, &[measured.to_vec()])
}

pub fn decompose_product_observable(
    ideal: &ObservableVector,
    measured: &[Vec<ObservableVector>],
) -> Result<QuasiDecomposition> {
    let n = ideal.n();
    if measured.len() != n || measured.iter().any(|p| p.len() != 4 || p.iter().any(|s| s.n() != 1)) {
        return Err(QemError::DimensionMismatch(
            "need four single-qubit observables per qubit".into(),
        ));
    }
    let mats: Vec<DMatrix<f64>> = measured.iter().map(|p| ptm::observable_matrix(p)).collect();
    let m = linalg::kron_all(&mats);
    // q M = Q0  <=>  M^T q^T = Q0^T
    let q = linalg::solve(
        &m.transpose(),
        &DVector::from_column_slice(ideal.coeffs()),
        "measured observable matrix",
    )?;
    Ok(QuasiDecomposition::new(Method::Observable, fiducial_terms(&q, n)))
}

/// PTM of the Pauli string `index` on `k` qubits (diagonal of signs).
pub fn pauli_ptm(index: usize, k: usize) -> Ptm {
    Ptm::from_unitary(&linalg::pauli_string(index, k)).expect("Pauli strings are unitary")
}

fn check_clifford(gate: &Ptm) -> Result<()> {
    for col in gate.matrix().column_iter() {
        let mut big = 0;
        for v in col.iter() {
            if (v.abs() - 1.0).abs() < 1e-9 {
                big += 1;
            } else if v.abs() > 1e-9 {
                return Err(QemError::NotClifford(
                    "PTM is not a signed permutation".into(),
                ));
            }
        }
        if big != 1 {
            return Err(QemError::NotClifford("PTM is not a signed permutation".into()));
        }
    }
    Ok(())
}

/// Twirled noise of a Clifford gate: each Pauli P before the gate is paired
/// with its image G P G^dag after it, and the 4^k conjugations are averaged.
/// Returns the twirled noise channel N with the noisy gate equal to N G.
pub fn pauli_twirl(gate_with_noise: &Ptm, ideal_gate: &Ptm) -> Result<Ptm> {
    let twirled_gate = twirl_gate(gate_with_noise, ideal_gate)?;
    Ok(twirled_gate.after(&ideal_gate.transpose()))
}

/// The averaged noisy gate `4^-k sum_P [G P G^dag] O [P]`.
pub fn twirl_gate(gate_with_noise: &Ptm, ideal_gate: &Ptm) -> Result<Ptm> {
    check_clifford(ideal_gate)?;
    let k = ideal_gate.arity();
    if gate_with_noise.arity() != k {
        return Err(QemError::DimensionMismatch("noisy and ideal gate arity differ".into()));
    }
    let dim = pauli_dim(k);
    let g = ideal_gate.matrix();
    let mut acc = DMatrix::zeros(dim, dim);
    for p in 0..dim {
        let before = pauli_ptm(p, k);
        let after = g * before.matrix() * g.transpose();
        acc += after * gate_with_noise.matrix() * before.matrix();
    }
    Ptm::new(k, acc / dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::Gate;
    use approx::assert_abs_diff_eq;

    fn ideal_refs(b: &BasisSet, n: usize) -> Vec<&BasisSet> {
        vec![b; n]
    }

    #[test]
    fn pi_z_is_projector_channel() {
        let b = ideal_basis();
        let p = b.get(13).matrix();
        // (1/2)(|I>> + |Z>>)(<<I| + <<Z|)
        for (r, c) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_abs_diff_eq!(p[(r, c)], 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(p.iter().map(|v| v.abs()).sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn ideal_a_constants() {
        let a = build_A(&ideal_basis()).unwrap();
        // the sign follows the label and stacking order
        assert_abs_diff_eq!(a.matrix.determinant().abs(), 16.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.s_min, s_min_a_ideal(), epsilon = 1e-9);
        assert_abs_diff_eq!(a.s_min.powi(2), 0.5 * (13.0 - 3.0 * 17f64.sqrt()), epsilon = 1e-9);
        assert!(a.invertibility_guaranteed);
        assert_eq!(a.eps_max, 0.0);
        assert_abs_diff_eq!(invertibility_threshold(), 0.0351, epsilon = 1e-4);
    }

    #[test]
    fn table_compositions_match_basis() {
        // Superoperator products, rightmost applied first.
        let rx = Gate::Rx.ptm();
        let rz = Gate::Rz.ptm();
        let pi = Gate::Pi.ptm();
        let h = Gate::H.ptm();
        let s = Gate::S.ptm();
        let prod = |ops: &[&Ptm]| {
            ops.iter()
                .skip(1)
                .fold(ops[0].clone(), |acc, o| acc.after(o))
        };
        let b = ideal_basis();
        let cases: Vec<(usize, Ptm)> = vec![
            (2, prod(&[&rx, &rx])),
            (3, prod(&[&rx, &rx, &rz, &rz])),
            (4, prod(&[&rz, &rz])),
            (5, prod(&[&h, &s, &s, &s, &h])),
            (6, prod(&[&rz, &rz, &rz, &rx, &rz])),
            (7, prod(&[&s, &s, &s])),
            (8, prod(&[&rx, &rz, &rz])),
            (9, prod(&[&rz, &rx, &rz])),
            (10, prod(&[&rx, &rx, &rz])),
            (11, prod(&[&rz, &rz, &rz, &rx, &rx, &rx, &pi, &rx, &rz])),
            (12, prod(&[&rx, &pi, &rx, &rx, &rx])),
            (13, pi.clone()),
            (14, prod(&[&rz, &rz, &rz, &rx, &rx, &rx, &pi, &rx, &rx, &rx, &rz])),
            (15, prod(&[&rx, &pi, &rx, &rx, &rx, &rz, &rz])),
            (16, prod(&[&pi, &rx, &rx])),
        ];
        for (i, op) in cases {
            assert!(op.max_abs_diff(b.get(i)) < 1e-12, "basis op {i}");
        }
    }

    #[test]
    fn basis_self_decomposition() {
        let b = ideal_basis();
        let d = decompose(b.get(5), &[&b]).unwrap();
        assert_eq!(d.terms.len(), 1);
        assert_eq!(d.terms[0].label, Label::Basis(vec![5]));
        assert_abs_diff_eq!(d.cost, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cnot_decomposition_terms() {
        let b = ideal_basis();
        let d = decompose(&Gate::Cnot.ptm(), &ideal_refs(&b, 2)).unwrap();
        let expected: [((u8, u8), f64); 12] = [
            ((1, 2), 0.5),
            ((4, 1), 0.5),
            ((1, 5), -0.5),
            ((7, 1), -0.5),
            ((4, 5), -0.5),
            ((7, 2), -0.5),
            ((4, 2), 1.0),
            ((7, 5), 1.0),
            ((1, 11), 1.0),
            ((13, 1), 1.0),
            ((4, 11), -1.0),
            ((13, 2), -1.0),
        ];
        assert_eq!(d.terms.len(), 12);
        for ((a, bb), q) in expected {
            assert_abs_diff_eq!(d.coeff_of(&Label::Basis(vec![a, bb])), q, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(d.cost, 9.0, epsilon = 1e-10);
    }

    #[test]
    fn state_and_observable_trivial() {
        let (states, obs) = ptm::canonical_fiducials();
        let d = decompose_state(&states[0], &states).unwrap();
        assert_abs_diff_eq!(d.coeff_of(&Label::Fiducial(vec![1])), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.cost, 1.0, epsilon = 1e-14);
        let d = decompose_observable(&obs[3], &obs).unwrap();
        assert_eq!(d.terms.len(), 1);
        assert_eq!(d.terms[0].label, Label::Fiducial(vec![4]));
    }

    #[test]
    fn compensation_identity_when_exact() {
        let b = ideal_basis();
        let g = Gate::H.ptm();
        let d = compensation_decompose(&g, &g, &[&b], LambdaChoice::Fixed(1.0)).unwrap();
        assert_eq!(d.terms.len(), 1);
        assert_eq!(d.terms[0].label, Label::Actual);
        assert_abs_diff_eq!(d.cost, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn twirl_of_pauli_channel_is_fixed_point() {
        let noise = Ptm::new(
            2,
            DMatrix::from_diagonal(&DVector::from_fn(16, |i, _| 1.0 - 0.01 * (i as f64))),
        )
        .unwrap();
        let cnot = Gate::Cnot.ptm();
        let tw = pauli_twirl(&noise.after(&cnot), &cnot).unwrap();
        assert!(tw.max_abs_diff(&noise) < 1e-14);
        assert!(matches!(
            pauli_twirl(&Gate::T.ptm(), &Gate::T.ptm()),
            Err(QemError::NotClifford(_))
        ));
    }
}
