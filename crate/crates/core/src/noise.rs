//! Noise channels of every error-model family and the rules that say where
//! and how strongly noise acts.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::pauli_ptm;
use crate::error::{QemError, Result};
use crate::gates::Gate;
use crate::linalg::{self, c, CMatrix};
use crate::ptm::{self, pauli_dim, Ptm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Depolarizing,
    Dephasing,
    Damping,
    OverRotation,
    RandomField,
    RandomOperation,
    InhomPauli,
    Leakage,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Depolarizing => "depolarizing",
            NoiseKind::Dephasing => "dephasing",
            NoiseKind::Damping => "damping",
            NoiseKind::OverRotation => "over_rotation",
            NoiseKind::RandomField => "random_field",
            NoiseKind::RandomOperation => "random_operation",
            NoiseKind::InhomPauli => "inhom_pauli",
            NoiseKind::Leakage => "leakage",
        }
    }

    /// Families whose channels are mixtures of Pauli conjugations.
    pub fn is_pauli(&self) -> bool {
        matches!(
            self,
            NoiseKind::Depolarizing | NoiseKind::Dephasing | NoiseKind::InhomPauli
        )
    }

    /// Families whose channel depends on the operation it accompanies.
    pub fn is_gate_dependent(&self) -> bool {
        matches!(
            self,
            NoiseKind::OverRotation | NoiseKind::RandomField | NoiseKind::RandomOperation
        )
    }
}

/// A noise family with its intensity.
///
/// For `inhom_pauli`, `params` may hold the Pauli error probabilities
/// `p_x`, `p_y`, `p_z`; they then override `epsilon`. Without params the
/// probabilities are `epsilon * (1/8, 1/8, 3/4)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub epsilon: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, epsilon: f64) -> Self {
        NoiseSpec {
            kind,
            epsilon,
            params: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Same family with `epsilon` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.epsilon *= factor;
        if s.kind == NoiseKind::InhomPauli {
            for v in s.params.values_mut() {
                *v *= factor;
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(QemError::InvalidNoise(format!(
                "epsilon must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        let bounded = matches!(
            self.kind,
            NoiseKind::Depolarizing
                | NoiseKind::Dephasing
                | NoiseKind::Damping
                | NoiseKind::InhomPauli
                | NoiseKind::Leakage
        );
        if bounded && self.epsilon > 1.0 {
            return Err(QemError::InvalidNoise(format!(
                "{:?} needs epsilon <= 1, got {}",
                self.kind, self.epsilon
            )));
        }
        if self.kind == NoiseKind::InhomPauli {
            self.inhom_probabilities()?;
        }
        Ok(())
    }

    /// Single-qubit Pauli error probabilities (p_x, p_y, p_z) for `inhom_pauli`.
    pub fn inhom_probabilities(&self) -> Result<[f64; 3]> {
        if self.params.is_empty() {
            let e = self.epsilon;
            return Ok([e / 8.0, e / 8.0, 0.75 * e]);
        }
        for key in self.params.keys() {
            if !matches!(key.as_str(), "p_x" | "p_y" | "p_z") {
                return Err(QemError::InvalidNoise(format!("unknown inhom_pauli parameter '{key}'")));
            }
        }
        let get = |k: &str| self.params.get(k).copied().unwrap_or(0.0);
        let p = [get("p_x"), get("p_y"), get("p_z")];
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(QemError::InvalidNoise("inhom_pauli probabilities must be nonnegative".into()));
        }
        if p.iter().sum::<f64>() > 1.0 {
            return Err(QemError::InvalidNoise("inhom_pauli probabilities sum above 1".into()));
        }
        Ok(p)
    }

    /// Total error probability of one single-qubit channel.
    pub fn total_rate(&self) -> f64 {
        match self.kind {
            NoiseKind::InhomPauli => self.inhom_probabilities().map(|p| p.iter().sum()).unwrap_or(f64::NAN),
            _ => self.epsilon,
        }
    }
}

/// The operation a noise channel accompanies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseContext {
    Init,
    Measure,
    Memory,
    Gate(Gate),
}

impl NoiseContext {
    fn tag(&self) -> String {
        match self {
            NoiseContext::Init => "init".into(),
            NoiseContext::Measure => "measure".into(),
            NoiseContext::Memory => "memory".into(),
            NoiseContext::Gate(g) => format!("gate:{}", g.name()),
        }
    }
}

/// Deterministic seed for one noise site (FNV-1a of the tag, mixed with the base seed).
pub fn site_seed(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `sum_a probs[a] [P_a]` on `k` qubits.
pub fn pauli_channel(probs: &[f64], k: usize) -> Ptm {
    let dim = pauli_dim(k);
    assert_eq!(probs.len(), dim, "one probability per Pauli string");
    let mut diag = vec![0.0; dim];
    for (a, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let pa = pauli_ptm(a, k);
        for (s, d) in diag.iter_mut().enumerate() {
            *d += p * pa.matrix()[(s, s)];
        }
    }
    Ptm::new(k, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))).expect("square")
}

/// Pauli error probabilities of a diagonal (Pauli-channel) PTM.
pub fn pauli_probabilities(channel: &Ptm) -> Vec<f64> {
    let k = channel.arity();
    let dim = pauli_dim(k);
    // p_a = d^-2 sum_s lambda_s sign_a(s)
    (0..dim)
        .map(|a| {
            let pa = pauli_ptm(a, k);
            (0..dim)
                .map(|s| channel.matrix()[(s, s)] * pa.matrix()[(s, s)])
                .sum::<f64>()
                / dim as f64
        })
        .collect()
}

fn rotation(axis: &CMatrix, angle: f64) -> CMatrix {
    let d = axis.nrows();
    CMatrix::identity(d, d) * c(angle.cos(), 0.0) + axis * c(0.0, angle.sin())
}

fn damping_1q(eps: f64) -> Ptm {
    let a = (1.0 - eps).sqrt();
    let k0 = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(a, 0.0)]);
    let k1 = CMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(eps.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)],
    );
    ptm::ptm_from_kraus(&[k0, k1], 1).expect("damping Kraus operators are complete")
}

fn leakage_1q(p: f64) -> Ptm {
    let k = CMatrix::from_row_slice(
        2,
        2,
        &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - p).sqrt(), 0.0)],
    );
    ptm::ptm_from_kraus(&[k], 1).expect("leakage Kraus operator is a contraction")
}

/// Random Hermitian matrix `(h + h^dag)/2`, entries of `h` uniform in the unit disc.
pub fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut h = CMatrix::zeros(dim, dim);
    for v in h.iter_mut() {
        let r = rng.random::<f64>().sqrt();
        let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        *v = Complex64::from_polar(r, theta);
    }
    (&h + h.adjoint()) * c(0.5, 0.0)
}

fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    // exp(-i t H) through the eigendecomposition of H
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -t * l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn over_rotation(eps: f64, arity: usize, context: &NoiseContext) -> Result<Ptm> {
    let gate = match context {
        NoiseContext::Init | NoiseContext::Measure | NoiseContext::Memory => {
            return Ok(Ptm::identity(arity))
        }
        NoiseContext::Gate(Gate::Id) => return Ok(Ptm::identity(arity)),
        NoiseContext::Gate(g) => *g,
    };
    let pi = std::f64::consts::PI;
    let (axis, angle) = match gate {
        Gate::Rx => (linalg::pauli(1), eps * pi / 4.0),
        Gate::Rz | Gate::S | Gate::Sdg | Gate::Z => (linalg::pauli(3), eps * pi / 4.0),
        Gate::Tx | Gate::T | Gate::Tdg => (linalg::pauli(3), eps * pi / 8.0),
        Gate::Lambda => (linalg::pauli_string(15, 2), eps * pi / 4.0),
        other => {
            return Err(QemError::InvalidNoise(format!(
                "over-rotation is defined for rx, rz, s, t, tx and lambda, not {other}"
            )))
        }
    };
    if gate.arity() != arity {
        return Err(QemError::DimensionMismatch(format!(
            "over-rotation of {gate} acts on {} qubits, requested {arity}",
            gate.arity()
        )));
    }
    Ptm::from_unitary(&rotation(&axis, angle))
}

/// Builds the noise channel of `spec` on `arity` qubits. The over-rotation
/// family needs the accompanying operation; random families derive their
/// generator from the spec seed and the context.
pub fn build_noise(spec: &NoiseSpec, arity: usize, context: Option<&NoiseContext>) -> Result<Ptm> {
    spec.validate()?;
    if arity == 0 || arity > 2 {
        return Err(QemError::InvalidArgument(format!(
            "noise channels act on 1 or 2 qubits, got {arity}"
        )));
    }
    let eps = spec.epsilon;
    let tag = context.map(|c| c.tag()).unwrap_or_else(|| "free".into());
    let seed = site_seed(spec.seed.unwrap_or(0), &format!("{tag}/{arity}"));
    match spec.kind {
        NoiseKind::Depolarizing => {
            let dim = pauli_dim(arity);
            let denom = (dim - 1) as f64;
            let mut probs = vec![eps / denom; dim];
            probs[0] = 1.0 - eps;
            Ok(pauli_channel(&probs, arity))
        }
        NoiseKind::Dephasing => {
            if arity == 1 {
                Ok(pauli_channel(&[1.0 - eps, 0.0, 0.0, eps], 1))
            } else {
                let mut probs = vec![0.0; 16];
                probs[0] = 1.0 - eps;
                for idx in [3, 12, 15] {
                    probs[idx] = eps / 3.0;
                }
                Ok(pauli_channel(&probs, 2))
            }
        }
        NoiseKind::Damping => {
            if arity == 1 {
                Ok(damping_1q(eps))
            } else {
                let half = damping_1q(eps / 2.0);
                Ok(half.kron(&half))
            }
        }
        NoiseKind::InhomPauli => {
            let [px, py, pz] = spec.inhom_probabilities()?;
            let one = pauli_channel(&[1.0 - px - py - pz, px, py, pz], 1);
            Ok(if arity == 1 { one.clone() } else { one.kron(&one) })
        }
        NoiseKind::Leakage => {
            let one = leakage_1q(eps);
            Ok(if arity == 1 { one.clone() } else { one.kron(&one) })
        }
        NoiseKind::OverRotation => {
            let ctx = context.ok_or_else(|| {
                QemError::MissingGateContext("over-rotation noise depends on the gate".into())
            })?;
            over_rotation(eps, arity, ctx)
        }
        NoiseKind::RandomField => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(1 << arity, &mut rng);
            Ptm::from_unitary(&expm_hermitian(&h, eps * std::f64::consts::PI))
        }
        NoiseKind::RandomOperation => random_operation_chi(&Ptm::identity(arity), eps, seed),
    }
}

/// Matrix `K` with `vec(PTM) = K vec(chi)` for `O(rho) = sum_ab chi_ab P_a rho P_b`.
/// Rows are `s * d^2 + t`, columns `a * d^2 + b`.
fn chi_transfer(k: usize) -> CMatrix {
    let dim = pauli_dim(k);
    let d = (1usize << k) as f64;
    let paulis: Vec<CMatrix> = (0..dim).map(|s| linalg::pauli_string(s, k)).collect();
    let mut m = CMatrix::zeros(dim * dim, dim * dim);
    for a in 0..dim {
        for t in 0..dim {
            let pa_t = &paulis[a] * &paulis[t];
            for b in 0..dim {
                let x = &pa_t * &paulis[b];
                for s in 0..dim {
                    let v = (&paulis[s] * &x).trace() / d;
                    if v.norm() > 1e-14 {
                        m[(s * dim + t, a * dim + b)] = v;
                    }
                }
            }
        }
    }
    m
}

/// Chi matrix of a PTM in the Pauli-string operator basis.
pub fn ptm_to_chi(op: &Ptm) -> Result<CMatrix> {
    let k = op.arity();
    let dim = pauli_dim(k);
    let transfer = chi_transfer(k);
    let rhs = nalgebra::DVector::from_fn(dim * dim, |i, _| {
        c(op.matrix()[(i / dim, i % dim)], 0.0)
    });
    let v = transfer
        .lu()
        .solve(&rhs)
        .ok_or_else(|| QemError::Singular("chi transfer matrix".into()))?;
    let chi = CMatrix::from_fn(dim, dim, |a, b| v[a * dim + b]);
    Ok((&chi + chi.adjoint()) * c(0.5, 0.0))
}

/// Whether `op` is completely positive, up to `tol` on the chi spectrum.
pub fn is_completely_positive(op: &Ptm, tol: f64) -> Result<bool> {
    let (min, _) = hermitian_extreme_eigs(&ptm_to_chi(op)?);
    Ok(min >= -tol)
}

pub fn chi_to_ptm(chi: &CMatrix, k: usize) -> Result<Ptm> {
    let dim = pauli_dim(k);
    let transfer = chi_transfer(k);
    let v = nalgebra::DVector::from_fn(dim * dim, |i, _| chi[(i / dim, i % dim)]);
    let out = transfer * v;
    Ptm::new(k, DMatrix::from_fn(dim, dim, |s, t| out[s * dim + t].re))
}

/// `sum_ab chi_ab P_b P_a`, the operator `sum_m E_m^dag E_m` of the map.
fn chi_completeness(chi: &CMatrix, k: usize) -> CMatrix {
    let dim = pauli_dim(k);
    let d = 1usize << k;
    let paulis: Vec<CMatrix> = (0..dim).map(|s| linalg::pauli_string(s, k)).collect();
    let mut out = CMatrix::zeros(d, d);
    for a in 0..dim {
        for b in 0..dim {
            if chi[(a, b)].norm() > 0.0 {
                out += &paulis[b] * &paulis[a] * chi[(a, b)];
            }
        }
    }
    out
}

fn hermitian_extreme_eigs(m: &CMatrix) -> (f64, f64) {
    let e = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues;
    let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// A random operation near `ideal`: perturb its chi matrix by `eps H`,
/// project onto trace-preserving maps (unless `ideal` is not trace
/// preserving), shift to positive semidefinite and rescale.
pub fn random_operation_chi(ideal: &Ptm, eps: f64, seed: u64) -> Result<Ptm> {
    if eps == 0.0 {
        return Ok(ideal.clone());
    }
    let k = ideal.arity();
    let dim = pauli_dim(k);
    let d2 = dim as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(dim, &mut rng);
    let chi0 = ptm_to_chi(ideal)?;
    let mut chi = &chi0 + h * c(eps, 0.0);

    let tp = ideal.is_trace_preserving();
    if tp {
        // rows s = 0 of the transfer matrix give the trace-preservation constraints
        let transfer = chi_transfer(k);
        let a = transfer.rows(0, dim).into_owned();
        let x = nalgebra::DVector::from_fn(dim * dim, |i, _| chi[(i / dim, i % dim)]);
        let mut b = nalgebra::DVector::zeros(dim);
        b[0] = c(1.0, 0.0);
        let resid = &a * &x - b;
        let aat = &a * a.adjoint();
        let y = aat
            .lu()
            .solve(&resid)
            .ok_or_else(|| QemError::Singular("trace-preservation constraints".into()))?;
        let x2 = x - a.adjoint() * y;
        chi = CMatrix::from_fn(dim, dim, |p, q| x2[p * dim + q]);
        chi = (&chi + chi.adjoint()) * c(0.5, 0.0);
    }

    let (lmin, _) = hermitian_extreme_eigs(&chi);
    let shift = if lmin < 0.0 { -lmin } else { 0.0 };
    if shift > 0.0 {
        chi += CMatrix::identity(dim, dim) * c(shift, 0.0);
    }

    let f = if tp {
        1.0 / (1.0 + d2 * shift)
    } else {
        let (_, comp_max) = hermitian_extreme_eigs(&chi_completeness(&chi, k));
        let (_, chi_max) = hermitian_extreme_eigs(&chi);
        1.0f64.min(1.0 / comp_max).min(1.0 / chi_max)
    };
    chi *= c(f, 0.0);
    chi_to_ptm(&chi, k)
}

/// How noise is attached to a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// One channel after initialisation, before measurement, and on both
    /// sides of every gate; no idle noise.
    SimulationSimple,
    /// The universal-set device: initialisation noise, measurement as
    /// `E [pi] E`, gate noise on both sides, memory noise around
    /// single-qubit gates and on idle cycles.
    UniversalSet,
}

/// Per-role multipliers applied to the spec's epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePlacement {
    pub mode: PlacementMode,
    pub init: f64,
    pub meas_half: f64,
    pub single_gate_half: f64,
    pub two_gate_half: f64,
    pub memory: f64,
}

impl NoisePlacement {
    pub fn simulation_simple() -> Self {
        NoisePlacement {
            mode: PlacementMode::SimulationSimple,
            init: 1.0,
            meas_half: 1.0,
            single_gate_half: 1.0,
            two_gate_half: 1.0,
            memory: 0.0,
        }
    }

    pub fn universal_set() -> Self {
        NoisePlacement {
            mode: PlacementMode::UniversalSet,
            init: 0.1,
            meas_half: 0.5,
            single_gate_half: 0.05,
            two_gate_half: 0.5,
            memory: 0.005,
        }
    }

    /// Simple placement where a two-qubit gate has total error rate
    /// `epsilon` and every single-qubit operation `epsilon / 10`.
    pub fn ion_trap() -> Self {
        NoisePlacement {
            mode: PlacementMode::SimulationSimple,
            init: 0.1,
            meas_half: 0.1,
            single_gate_half: 0.05,
            two_gate_half: 0.25,
            memory: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.init,
            self.meas_half,
            self.single_gate_half,
            self.two_gate_half,
            self.memory,
        ];
        if all.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(QemError::InvalidNoise("placement multipliers must be nonnegative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn kind_names_match_serialized_form() {
        for kind in [
            NoiseKind::Depolarizing,
            NoiseKind::Dephasing,
            NoiseKind::Damping,
            NoiseKind::OverRotation,
            NoiseKind::RandomField,
            NoiseKind::RandomOperation,
            NoiseKind::InhomPauli,
            NoiseKind::Leakage,
        ] {
            assert_eq!(serde_json::to_string(&kind).unwrap(), format!("\"{}\"", kind.name()));
        }
    }

    fn depol_kraus_oracle(eps: f64) -> Ptm {
        // (1 - 4 eps/3)[I] + eps/3 sum_a [s_a], written as Kraus operators
        let mut ks = vec![linalg::pauli(0) * c((1.0 - 4.0 * eps / 3.0 + eps / 3.0).sqrt(), 0.0)];
        for a in 1..4 {
            ks.push(linalg::pauli(a) * c((eps / 3.0).sqrt(), 0.0));
        }
        ptm::ptm_from_kraus(&ks, 1).unwrap()
    }

    #[test]
    fn depolarizing_matches_kraus_oracle() {
        for eps in [0.0, 0.001, 0.1, 0.5] {
            let p = build_noise(&NoiseSpec::new(NoiseKind::Depolarizing, eps), 1, None).unwrap();
            assert!(p.max_abs_diff(&depol_kraus_oracle(eps)) < 1e-14);
            let f = 1.0 - 4.0 * eps / 3.0;
            let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, f, f, f]));
            assert_abs_diff_eq!(p.matrix(), &expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_qubit_depolarizing_is_uniform_on_nonidentity() {
        let eps = 0.03;
        let p = build_noise(&NoiseSpec::new(NoiseKind::Depolarizing, eps), 2, None).unwrap();
        assert_abs_diff_eq!(p.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
        for s in 1..16 {
            assert_abs_diff_eq!(p.matrix()[(s, s)], 1.0 - 16.0 * eps / 15.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn inhom_pauli_example() {
        let spec = NoiseSpec::new(NoiseKind::InhomPauli, 0.0008)
            .with_param("p_x", 0.0001)
            .with_param("p_y", 0.0001)
            .with_param("p_z", 0.0006);
        let p = build_noise(&spec, 1, None).unwrap();
        let (px, py, pz) = (0.0001, 0.0001, 0.0006);
        let expected = [1.0, 1.0 - 2.0 * (py + pz), 1.0 - 2.0 * (px + pz), 1.0 - 2.0 * (px + py)];
        for (s, e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(p.matrix()[(s, s)], *e, epsilon = 1e-15);
        }
        assert!(p.is_diagonal(0.0));
        let probs = pauli_probabilities(&p);
        assert_abs_diff_eq!(probs[3], pz, epsilon = 1e-15);
    }

    #[test]
    fn leakage_zero_is_identity() {
        let p = build_noise(&NoiseSpec::new(NoiseKind::Leakage, 0.0), 1, None).unwrap();
        assert_eq!(p.matrix(), Ptm::identity(1).matrix());
    }

    #[test]
    fn damping_two_qubit_is_product_of_halves() {
        let p2 = build_noise(&NoiseSpec::new(NoiseKind::Damping, 0.02), 2, None).unwrap();
        let p1 = build_noise(&NoiseSpec::new(NoiseKind::Damping, 0.01), 1, None).unwrap();
        assert!(p2.max_abs_diff(&p1.kron(&p1)) < 1e-15);
        assert!(p2.is_trace_preserving());
    }

    #[test]
    fn over_rotation_needs_context() {
        let spec = NoiseSpec::new(NoiseKind::OverRotation, 0.01);
        assert!(matches!(
            build_noise(&spec, 1, None),
            Err(QemError::MissingGateContext(_))
        ));
        let id = build_noise(&spec, 1, Some(&NoiseContext::Measure)).unwrap();
        assert_eq!(id.matrix(), Ptm::identity(1).matrix());
        let l = build_noise(&spec, 2, Some(&NoiseContext::Gate(Gate::Lambda))).unwrap();
        assert!(l.is_trace_preserving());
        assert!(!l.is_diagonal(1e-6));
        assert!(build_noise(&spec, 1, Some(&NoiseContext::Gate(Gate::H))).is_err());
    }

    #[test]
    fn negative_epsilon_rejected() {
        let spec = NoiseSpec::new(NoiseKind::Depolarizing, -0.1);
        assert!(matches!(build_noise(&spec, 1, None), Err(QemError::InvalidNoise(_))));
    }

    #[test]
    fn chi_round_trip() {
        let h = Gate::H.ptm();
        let chi = ptm_to_chi(&h).unwrap();
        let back = chi_to_ptm(&chi, 1).unwrap();
        assert!(back.max_abs_diff(&h) < 1e-12);
        // unitary channel: chi has rank one and unit trace
        let tr: f64 = (0..4).map(|i| chi[(i, i)].re).sum();
        assert_abs_diff_eq!(tr, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_field_is_seeded_unitary() {
        let spec = NoiseSpec::new(NoiseKind::RandomField, 0.01).with_seed(7);
        let ctx = NoiseContext::Gate(Gate::Cnot);
        let a = build_noise(&spec, 2, Some(&ctx)).unwrap();
        let b = build_noise(&spec, 2, Some(&ctx)).unwrap();
        assert_eq!(a, b);
        let m = a.matrix();
        assert!((m.transpose() * m - DMatrix::identity(16, 16)).amax() < 1e-12);
        let other = build_noise(&spec, 2, Some(&NoiseContext::Gate(Gate::Lambda))).unwrap();
        assert!(other.max_abs_diff(&a) > 1e-6);
    }

    #[test]
    fn random_operation_is_cp_and_tp() {
        for seed in 0..5 {
            for k in [1, 2] {
                let ideal = if k == 1 { Gate::H.ptm() } else { Gate::Cnot.ptm() };
                let p = random_operation_chi(&ideal, 0.01, seed).unwrap();
                assert!(p.is_trace_preserving());
                let chi = ptm_to_chi(&p).unwrap();
                let (lmin, _) = hermitian_extreme_eigs(&chi);
                assert!(lmin > -1e-9, "chi eigenvalue {lmin}");
                assert!(p.max_abs_diff(&ideal) > 1e-6);
            }
        }
        let ideal = Gate::Pi.ptm();
        let p = random_operation_chi(&ideal, 0.01, 3).unwrap();
        let (_, comp_max) = hermitian_extreme_eigs(&chi_completeness(&ptm_to_chi(&p).unwrap(), 1));
        assert!(comp_max <= 1.0 + 1e-9);
        assert_eq!(random_operation_chi(&ideal, 0.0, 3).unwrap(), ideal);
        assert_eq!(
            random_operation_chi(&Gate::H.ptm(), 0.01, 9).unwrap(),
            random_operation_chi(&Gate::H.ptm(), 0.01, 9).unwrap()
        );
    }

    #[test]
    fn first_rows() {
        for kind in [NoiseKind::Depolarizing, NoiseKind::Dephasing, NoiseKind::Damping, NoiseKind::InhomPauli] {
            for arity in [1, 2] {
                let p = build_noise(&NoiseSpec::new(kind, 0.05), arity, None).unwrap();
                let row = p.matrix().row(0);
                assert!((row[0] - 1.0).abs() < 1e-12);
                assert!(row.iter().skip(1).all(|v| v.abs() < 1e-12));
            }
        }
        let p = 0.03;
        let l = build_noise(&NoiseSpec::new(NoiseKind::Leakage, p), 1, None).unwrap();
        let expected = [1.0 - p / 2.0, 0.0, 0.0, p / 2.0];
        for (v, e) in l.matrix().row(0).iter().zip(expected) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
        assert!(!l.is_trace_preserving());
    }

    fn error_component(spec: &NoiseSpec) -> DMatrix<f64> {
        let e = build_noise(spec, 1, None).unwrap();
        let eps = spec.total_rate();
        (e.matrix() - DMatrix::identity(4, 4) * (1.0 - eps)) / eps
    }

    #[test]
    fn inhom_error_component_is_rate_independent() {
        let spec = NoiseSpec::new(NoiseKind::InhomPauli, 0.0008)
            .with_param("p_x", 0.0001)
            .with_param("p_y", 0.0001)
            .with_param("p_z", 0.0006);
        let a = error_component(&spec);
        let b = error_component(&spec.scaled(2.0));
        assert!((a - b).amax() < 1e-12);
        let l = NoiseSpec::new(NoiseKind::Leakage, 0.0008);
        let diff = (error_component(&l) - error_component(&l.scaled(2.0))).amax();
        assert!(diff > 1e-6 && diff < 1e-2);
    }
}
