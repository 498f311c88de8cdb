//! Linear-inversion gate set tomography on a simulated device.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFlavor, BasisSet};
use crate::device::{Device, OperationModel};
use crate::error::{QemError, Result};
use crate::gates::Gate;
use crate::linalg;
use crate::ptm::{self, ObservableVector, PauliVector, Ptm};

/// How expectation values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    Exact,
    Count(u64),
}

/// Measured matrices: `g[j][k] = <<Q_j|rho_k>>` and, per gate,
/// `o_tilde[j][k] = <<Q_j|O|rho_k>>` over (tensor products of) fiducials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GstRecord {
    pub shots: Shots,
    #[serde(with = "crate::serde_matrix")]
    pub g: DMatrix<f64>,
    pub o_tilde: BTreeMap<Gate, MatrixEntry>,
}

/// A serializable dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixEntry(#[serde(with = "crate::serde_matrix")] pub DMatrix<f64>);

impl GstRecord {
    pub fn condition_number_g(&self) -> f64 {
        linalg::condition_number(&self.g)
    }
}

/// Per-qubit gauge matrix T; the estimate of fiducial state k is column k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeChoice {
    #[serde(with = "crate::serde_matrix")]
    pub t: DMatrix<f64>,
}

impl GaugeChoice {
    pub fn new(t: DMatrix<f64>) -> Result<Self> {
        if t.nrows() != 4 || t.ncols() != 4 {
            return Err(QemError::DimensionMismatch("gauge matrix must be 4x4".into()));
        }
        let cond = linalg::condition_number(&t);
        if !cond.is_finite() || cond > crate::basis::INVERSE_COND_LIMIT {
            return Err(QemError::Singular(format!("gauge matrix condition number {cond:e}")));
        }
        Ok(GaugeChoice { t })
    }

    /// Columns are the ideal fiducial states: estimates of the states are
    /// then exactly ideal.
    pub fn ideal_states() -> Self {
        GaugeChoice {
            t: ptm::state_matrix(&ptm::canonical_fiducials().0),
        }
    }
}

impl Default for GaugeChoice {
    fn default() -> Self {
        Self::ideal_states()
    }
}

/// States, observables and operations estimated by tomography, all in one
/// gauge frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GstEstimate {
    pub rho_hat: Vec<PauliVector>,
    pub q_hat: Vec<ObservableVector>,
    pub o_hat: BTreeMap<Gate, Ptm>,
    basis: BasisSet,
}

impl OperationModel for GstEstimate {
    fn states(&self) -> Vec<PauliVector> {
        self.rho_hat.clone()
    }

    fn observables(&self) -> Vec<ObservableVector> {
        self.q_hat.clone()
    }

    fn gate(&self, g: Gate) -> Result<Ptm> {
        self.o_hat
            .get(&g)
            .cloned()
            .ok_or_else(|| QemError::InvalidArgument(format!("gate {g} was not measured by tomography")))
    }

    fn basis(&self) -> &BasisSet {
        &self.basis
    }
}

fn kron_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut acc = m.clone();
    for _ in 1..k {
        acc = acc.kronecker(m);
    }
    acc
}

/// Trace and readout rows of product readouts `j_1 (x) ... (x) j_k`.
fn readout_rows(device: &Device, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut tr = DMatrix::zeros(4, 4);
    let mut z = DMatrix::zeros(4, 4);
    for j in 0..4 {
        let (t, v) = device.readout(j).rows();
        for s in 0..4 {
            tr[(j, s)] = t[s];
            z[(j, s)] = v[s];
        }
    }
    (kron_power(&tr, k), kron_power(&z, k))
}

fn states_matrix(device: &Device, k: usize) -> DMatrix<f64> {
    let states: Vec<PauliVector> = (0..4).map(|i| device.prepared_state(i).clone()).collect();
    kron_power(&ptm::state_matrix(&states), k)
}

/// Replaces each expectation by a finite-shot estimate: outcome +1 with
/// probability `(tr + v)/2`, -1 with `(tr - v)/2`, 0 otherwise.
fn sample(values: &DMatrix<f64>, traces: &DMatrix<f64>, shots: u64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    values.zip_map(traces, |v, t| {
        let p_plus = ((t + v) / 2.0).clamp(0.0, 1.0);
        let p_minus = ((t - v) / 2.0).clamp(0.0, 1.0 - p_plus);
        let n_plus = Binomial::new(shots, p_plus).expect("probability in range").sample(rng);
        let rest = shots - n_plus;
        let q = if p_plus < 1.0 { (p_minus / (1.0 - p_plus)).clamp(0.0, 1.0) } else { 0.0 };
        let n_minus = Binomial::new(rest, q).expect("probability in range").sample(rng);
        (n_plus as f64 - n_minus as f64) / shots as f64
    })
}

fn measure(
    device: &Device,
    op: Option<&Ptm>,
    k: usize,
    shots: Shots,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let (tr, z) = readout_rows(device, k);
    let s = states_matrix(device, k);
    let evolved = match op {
        Some(o) => o.matrix() * &s,
        None => s,
    };
    let values = &z * &evolved;
    match shots {
        Shots::Exact => values,
        Shots::Count(n) => sample(&values, &(&tr * &evolved), n, rng),
    }
}

/// Runs tomography of `gates` and all sixteen basis operations on `device`.
/// The reference measurement `g` uses the true identity.
pub fn simulate_gst(device: &Device, gates: &[Gate], shots: Shots, seed: u64) -> Result<GstRecord> {
    if let Shots::Count(0) = shots {
        return Err(QemError::InvalidArgument("shot count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = measure(device, None, 1, shots, &mut rng);
    let mut all: Vec<Gate> = (1..=16).map(Gate::Basis).collect();
    for &gate in gates {
        if !all.contains(&gate) {
            all.push(gate);
        }
    }
    let mut o_tilde = BTreeMap::new();
    for gate in all {
        let op = match gate {
            Gate::Basis(i) => device.basis().get(i as usize).clone(),
            other => device.noisy_gate(other)?,
        };
        let m = measure(device, Some(&op), gate.arity(), shots, &mut rng);
        o_tilde.insert(gate, MatrixEntry(m));
    }
    let cond = linalg::condition_number(&g);
    if !cond.is_finite() || cond > crate::basis::INVERSE_COND_LIMIT {
        return Err(QemError::Singular(format!("tomography matrix g has condition number {cond:e}")));
    }
    Ok(GstRecord { shots, g, o_tilde })
}

/// `O_hat = T g^-1 O_tilde T^-1`, `rho_hat_k = T e_k`, `Q_hat_j = (g T^-1)_j`.
pub fn estimate(record: &GstRecord, gauge: &GaugeChoice) -> Result<GstEstimate> {
    let t_inv = linalg::inverse(&gauge.t, "gauge matrix")?;
    let g_inv = linalg::inverse(&record.g, "tomography matrix g")?;
    let rho_hat = (0..4)
        .map(|k| PauliVector::new(1, gauge.t.column(k).iter().cloned().collect()))
        .collect::<Result<Vec<_>>>()?;
    let gt = &record.g * &t_inv;
    let q_hat = (0..4)
        .map(|j| ObservableVector::new(1, gt.row(j).iter().cloned().collect()))
        .collect::<Result<Vec<_>>>()?;
    let mut o_hat = BTreeMap::new();
    for (gate, MatrixEntry(ot)) in &record.o_tilde {
        let k = gate.arity();
        let t = kron_power(&gauge.t, k);
        let ti = kron_power(&t_inv, k);
        let gi = kron_power(&g_inv, k);
        o_hat.insert(*gate, Ptm::new(k, t * gi * ot * ti)?);
    }
    let ops = (1..=16u8)
        .map(|i| {
            o_hat
                .get(&Gate::Basis(i))
                .cloned()
                .ok_or_else(|| QemError::InvalidArgument(format!("basis operation {i} missing from record")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GstEstimate {
        rho_hat,
        q_hat,
        o_hat,
        basis: BasisSet::new(BasisFlavor::GstEstimate, ops)?,
    })
}

/// `<<Q_hat_j| O_hat_N ... O_hat_1 |rho_hat_k>>` for single-qubit sequences.
pub fn predict(model: &dyn OperationModel, sequence: &[Gate], j: usize, k: usize) -> Result<f64> {
    let mut v = DVector::from_column_slice(model.states()[k].coeffs());
    for &g in sequence {
        v = model.gate(g)?.matrix() * v;
    }
    Ok(ptm::dot(model.observables()[j].coeffs(), v.as_slice()))
}

/// Tomography error severities (spectral norms, Pauli expansion coordinates)
/// and the a-priori bounds they should respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eps_in_bar: f64,
    pub eps_out_bar: f64,
    pub eps_in_hat: f64,
    pub eps_out_hat: f64,
    pub eps_out_bound: f64,
    pub gates: BTreeMap<Gate, GateStability>,
    pub condition_number_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStability {
    pub eps_bar: f64,
    pub eps_hat: f64,
    /// Infinite when the fiducial error is too large for the bound to apply.
    pub bound: f64,
}

impl StabilityReport {
    pub fn all_within_bounds(&self) -> bool {
        let tol = 1e-12;
        self.eps_out_hat <= self.eps_out_bound + tol
            && self.gates.values().all(|g| g.eps_hat <= g.bound + tol)
    }
}

/// Compares an estimate against the device it was measured on. The bounds
/// assume the estimate uses the ideal-state gauge.
pub fn stability_report(device: &Device, est: &GstEstimate, record: &GstRecord) -> Result<StabilityReport> {
    let m_in0 = ptm::m_in_ideal();
    let m_out0 = ptm::m_out_ideal();
    let true_states: Vec<PauliVector> = (0..4).map(|k| device.prepared_state(k).clone()).collect();
    let m_in_bar = ptm::expansion_state_matrix(&true_states);
    let m_out_bar = ptm::observable_matrix(&device.observables());
    let m_in_hat = ptm::expansion_state_matrix(&est.rho_hat);
    let m_out_hat = ptm::observable_matrix(&est.q_hat);

    let eps_in_bar = linalg::norm2(&(&m_in_bar - &m_in0));
    let eps_out_bar = linalg::norm2(&(&m_out_bar - &m_out0));
    let n_in = linalg::norm2(&m_in0);
    let n_out = linalg::norm2(&m_out0);
    let s_in = linalg::smallest_singular_value(&m_in0);
    let eps_out_bound = (eps_out_bar * eps_in_bar + n_in * eps_out_bar + n_out * eps_in_bar) / s_in;

    let mut gates = BTreeMap::new();
    for (gate, o_hat) in &est.o_hat {
        let ideal = gate.ptm();
        let truth = match gate {
            Gate::Basis(i) => device.basis().get(*i as usize).clone(),
            other => device.noisy_gate(*other)?,
        };
        let n = gate.arity() as i32;
        let eps_bar = linalg::norm2(&(truth.matrix() - ideal.matrix()));
        let eps_hat = linalg::norm2(&(o_hat.matrix() - ideal.matrix()));
        let eps_in_n = (n_in + eps_in_bar).powi(n) - n_in.powi(n);
        let denom = s_in.powi(n) - eps_in_n;
        let bound = if denom > 0.0 {
            2.0 * eps_in_n / denom * (linalg::norm2(ideal.matrix()) + eps_bar) + eps_bar
        } else {
            f64::INFINITY
        };
        gates.insert(*gate, GateStability { eps_bar, eps_hat, bound });
    }
    Ok(StabilityReport {
        eps_in_bar,
        eps_out_bar,
        eps_in_hat: linalg::norm2(&(&m_in_hat - &m_in0)),
        eps_out_hat: linalg::norm2(&(&m_out_hat - &m_out0)),
        eps_out_bound,
        gates,
        condition_number_g: record.condition_number_g(),
    })
}
