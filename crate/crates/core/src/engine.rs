//! Monte Carlo execution of quasi-probability sampling plans, error boosting
//! and zero-noise extrapolation.
//!
//! A plan is a sequence of slots. Every slot holds the operations that may be
//! executed there, each with a signed coefficient; a trial picks one term per
//! slot with probability `|q|/C_slot`, runs the resulting circuit on the
//! device and reports `sign * outcome`. The mean of those values times the
//! plan cost is an unbiased estimate of the target expectation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{
    basis_product, compensation_decompose, decompose, decompose_observable, decompose_state,
    inverse_decompose, BasisSet, Label, LambdaChoice, QuasiDecomposition,
};
use crate::circuit::{Circuit, Location, NoisyCircuit};
use crate::device::{reset_channel, Device, OperationModel};
use crate::error::{QemError, Result};
use crate::gates::Gate;
use crate::linalg;
use crate::noise::{is_completely_positive, pauli_probabilities, NoisePlacement, NoiseSpec};
use crate::ptm::{self, pauli_dim, Kernel, LocalOp, ObservableVector, PauliVector, Ptm, QubitSupport};

/// Above this many bytes of cached forward and backward vectors, trials are
/// simulated from scratch instead.
pub const DEFAULT_MEMORY_LIMIT: usize = 512 << 20;

const CP_TOL: f64 = 1e-10;
const NEG_PROB_TOL: f64 = 1e-12;

/// Decomposition strategy for gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mitigation {
    Inverse,
    Compensation { lambda: LambdaChoice },
}

/// One executable alternative in a slot.
#[derive(Debug, Clone)]
pub struct SlotTerm {
    pub label: Label,
    pub coeff: f64,
    pub op: Arc<Ptm>,
    kernel: Arc<Kernel>,
}

impl SlotTerm {
    pub fn new(label: Label, coeff: f64, op: Arc<Ptm>) -> Self {
        let kernel = Arc::new(Kernel::new(&op));
        SlotTerm {
            label,
            coeff,
            op,
            kernel,
        }
    }
}

/// Cumulative sampling table, most likely term first.
#[derive(Debug, Clone)]
struct Table {
    order: Vec<usize>,
    cdf: Vec<f64>,
}

impl Table {
    fn new(coeffs: &[f64]) -> Result<(Table, f64)> {
        let cost: f64 = coeffs.iter().map(|q| q.abs()).sum();
        if coeffs.is_empty() || !cost.is_finite() || cost <= 0.0 {
            return Err(QemError::InvalidArgument("slot needs terms with finite nonzero weight".into()));
        }
        let mut order: Vec<usize> = (0..coeffs.len()).collect();
        order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()));
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = order
            .iter()
            .map(|&i| {
                acc += coeffs[i].abs() / cost;
                acc
            })
            .collect();
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok((Table { order, cdf }, cost))
    }

    #[inline]
    fn sample(&self, u: f64) -> usize {
        for (i, &c) in self.cdf.iter().enumerate() {
            if u < c {
                return self.order[i];
            }
        }
        *self.order.last().expect("nonempty")
    }

    fn default_term(&self) -> usize {
        self.order[0]
    }
}

/// A place in the circuit where one of several operations is executed.
#[derive(Debug, Clone)]
pub struct Slot {
    pub name: String,
    pub support: QubitSupport,
    pub terms: Vec<SlotTerm>,
    pub cost: f64,
    table: Table,
}

impl Slot {
    pub fn new(name: impl Into<String>, support: QubitSupport, terms: Vec<SlotTerm>) -> Result<Self> {
        let coeffs: Vec<f64> = terms.iter().map(|t| t.coeff).collect();
        let (table, cost) = Table::new(&coeffs)?;
        if terms.iter().any(|t| t.op.arity() != support.len()) {
            return Err(QemError::DimensionMismatch("slot term arity differs from support".into()));
        }
        Ok(Slot {
            name: name.into(),
            support,
            terms,
            cost,
            table,
        })
    }

    /// The term sampled most often.
    pub fn default_term(&self) -> usize {
        self.table.default_term()
    }

    /// `sum_l q_l O_l`.
    pub fn effective(&self) -> Ptm {
        self.mix(|t| t.coeff)
    }

    /// `sum_l p_l O_l` with `p_l = |q_l| / C`.
    pub fn averaged(&self) -> Ptm {
        let c = self.cost;
        self.mix(|t| t.coeff.abs() / c)
    }

    fn mix<F: Fn(&SlotTerm) -> f64>(&self, w: F) -> Ptm {
        let mut acc = Ptm::identity(self.support.len()).scale(0.0);
        for t in &self.terms {
            acc = acc.add(&t.op.scale(w(t)));
        }
        acc
    }
}

/// One readout alternative on the probe: rows giving the surviving trace and
/// the signed outcome in terms of the probe's Pauli coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutTerm {
    pub label: Label,
    pub coeff: f64,
    pub tr: [f64; 4],
    pub z: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct ReadoutSlot {
    pub terms: Vec<ReadoutTerm>,
    pub cost: f64,
    table: Table,
}

impl ReadoutSlot {
    pub fn new(terms: Vec<ReadoutTerm>) -> Result<Self> {
        let coeffs: Vec<f64> = terms.iter().map(|t| t.coeff).collect();
        let (table, cost) = Table::new(&coeffs)?;
        Ok(ReadoutSlot { terms, cost, table })
    }

    /// Readout of Z after channel `meas`.
    pub fn from_channel(meas: &Ptm) -> Result<Self> {
        let m = meas.matrix();
        let row = |r: usize| [m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]];
        ReadoutSlot::new(vec![ReadoutTerm {
            label: Label::Named("z".into()),
            coeff: 1.0,
            tr: row(0),
            z: row(3),
        }])
    }
}

/// Slots for initialisation, every location, and the probe readout.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub n: usize,
    pub probe: usize,
    pub slots: Vec<Slot>,
    pub readout: ReadoutSlot,
}

/// Exact properties of a plan's estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanExact {
    pub cost: f64,
    /// `C E[mu_eff]`, the value the estimator converges to.
    pub value: f64,
    /// Probability that a trial reports 0 (lost to post-selection).
    pub p0: f64,
}

impl PlanExact {
    /// Standard deviation of the estimate from `trials` i.i.d. trials:
    /// `sqrt((C^2 (1 - P0) - value^2) / N)`.
    pub fn predicted_sigma(&self, trials: u64) -> f64 {
        ((self.cost * self.cost * (1.0 - self.p0) - self.value * self.value).max(0.0) / trials as f64).sqrt()
    }

    /// The same without post-selection losses: `sqrt((C^2 - value^2) / N)`.
    pub fn predicted_sigma_lossless(&self, trials: u64) -> f64 {
        ((self.cost * self.cost - self.value * self.value).max(0.0) / trials as f64).sqrt()
    }
}

impl SamplingPlan {
    pub fn cost(&self) -> f64 {
        self.slots.iter().map(|s| s.cost).product::<f64>() * self.readout.cost
    }

    pub fn ln_cost(&self) -> f64 {
        self.slots.iter().map(|s| s.cost.ln()).sum::<f64>() + self.readout.cost.ln()
    }

    fn probe_index(&self, sigma: usize) -> usize {
        sigma << (2 * (self.n - 1 - self.probe))
    }

    fn propagate<F: Fn(&Slot) -> Ptm>(&self, f: F) -> Result<[f64; 4]> {
        ptm::check_capacity(self.n)?;
        let mut state = vec![0.0; pauli_dim(self.n)];
        state[0] = 1.0;
        for s in &self.slots {
            LocalOp::new(&f(s), &s.support, self.n)?.apply_in_place(&mut state);
        }
        Ok([0, 1, 2, 3].map(|k| state[self.probe_index(k)]))
    }

    /// Exact value, cost and loss probability by propagating the signed and
    /// the probability-weighted average map of every slot.
    pub fn exact(&self) -> Result<PlanExact> {
        let signed = self.propagate(|s| s.effective())?;
        let averaged = self.propagate(|s| s.averaged())?;
        let mut value = 0.0;
        let mut tr = 0.0;
        for t in &self.readout.terms {
            value += t.coeff * dot4(&t.z, &signed);
            tr += t.coeff.abs() / self.readout.cost * dot4(&t.tr, &averaged);
        }
        Ok(PlanExact {
            cost: self.cost(),
            value,
            p0: 1.0 - tr,
        })
    }

    /// Runs the noisy circuit as is.
    pub fn unmitigated(noisy: &NoisyCircuit) -> Result<Self> {
        let mut slots = Vec::with_capacity(noisy.n + noisy.locations.len());
        let rho = reset_channel(&crate::device::apply1(&noisy.init_noise, &PauliVector::zero_state(1)?));
        let rho = Arc::new(rho);
        for q in 0..noisy.n {
            slots.push(Slot::new(
                format!("init q{q}"),
                QubitSupport::single(q, noisy.n)?,
                vec![SlotTerm::new(Label::Named("init".into()), 1.0, rho.clone())],
            )?);
        }
        let mut cache: HashMap<Gate, Arc<Ptm>> = HashMap::new();
        for loc in &noisy.locations {
            let op = cache.entry(loc.gate).or_insert_with(|| Arc::new(loc.noisy.clone())).clone();
            slots.push(Slot::new(
                location_name(loc),
                loc.support.clone(),
                vec![SlotTerm::new(Label::Actual, 1.0, op)],
            )?);
        }
        Ok(SamplingPlan {
            n: noisy.n,
            probe: noisy.probe,
            slots,
            readout: ReadoutSlot::from_channel(&noisy.meas_noise)?,
        })
    }

    /// Quasi-probability plan for `circuit` on `device`, with decompositions
    /// computed from `model` (the device itself or a tomography estimate).
    pub fn mitigated(
        circuit: &Circuit,
        device: &Device,
        model: &dyn OperationModel,
        method: Mitigation,
    ) -> Result<Self> {
        let noisy = device.attach(circuit)?;
        let n = noisy.n;
        let mut slots = Vec::with_capacity(n + noisy.locations.len());

        let init = decompose_state(&PauliVector::zero_state(1)?, &model.states())?;
        let init_terms = fiducial_state_terms(&init, device);
        for q in 0..n {
            slots.push(Slot::new(format!("init q{q}"), QubitSupport::single(q, n)?, init_terms.clone())?);
        }

        let mut cache: HashMap<Gate, Vec<SlotTerm>> = HashMap::new();
        for loc in &noisy.locations {
            let terms = match cache.get(&loc.gate) {
                Some(t) => t.clone(),
                None => {
                    let t = gate_terms(loc, device, model, method)?;
                    cache.insert(loc.gate, t.clone());
                    t
                }
            };
            slots.push(Slot::new(location_name(loc), loc.support.clone(), terms)?);
        }

        // Unmeasured qubits end in the trivial observable. In a model whose
        // trivial readout is not the exact trace (a tomography estimate in a
        // general gauge, or with lossy fiducials) it is decomposed as well.
        let one = ObservableVector::new(1, vec![1.0, 0.0, 0.0, 0.0])?;
        let discard = decompose_observable(&one, &model.observables())?;
        let exact_trace = discard.terms.len() == 1
            && discard.terms[0].label == Label::Fiducial(vec![1])
            && (discard.terms[0].coeff - 1.0).abs() < 1e-12;
        if !exact_trace {
            let terms = discard_terms(&discard, device);
            for q in (0..n).filter(|&q| q != noisy.probe) {
                slots.push(Slot::new(format!("discard q{q}"), QubitSupport::single(q, n)?, terms.clone())?);
            }
        }

        let z = ObservableVector::z_on(0, 1)?;
        let readout = decompose_observable(&z, &model.observables())?;
        Ok(SamplingPlan {
            n,
            probe: noisy.probe,
            slots,
            readout: fiducial_readout(&readout, device)?,
        })
    }

    /// Runs `circuit` with every error rate multiplied by `r >= 1`.
    ///
    /// For Pauli noise the extra noise `F = E_r E^-1` at each site is a Pauli
    /// channel and is inserted by sampling noiseless Pauli operations. When
    /// `F` is completely positive it is inserted deterministically. Otherwise
    /// the boosted location `(1 - r) O_ideal + r O_noisy` is written as a
    /// signed combination of basis operations executed after the noisy one.
    pub fn boosted(circuit: &Circuit, device: &Device, r: f64) -> Result<Self> {
        if !r.is_finite() || r < 1.0 {
            return Err(QemError::InvalidArgument(format!("boost factor must be >= 1, got {r}")));
        }
        let noisy = device.attach(circuit)?;
        if r == 1.0 {
            return Self::unmitigated(&noisy);
        }
        let boosted = device.scaled(r)?.attach(circuit)?;
        let pauli = device.noise().kind.is_pauli();
        let n = noisy.n;
        let mut slots = Vec::with_capacity(n + noisy.locations.len());

        let rho0 = PauliVector::zero_state(1)?;
        let init_terms = match site_insertion(&noisy.init_noise, &boosted.init_noise, pauli)? {
            Some(ins) => ins
                .into_iter()
                .map(|(label, p, f)| {
                    let st = crate::device::apply1(&f.after(&noisy.init_noise), &rho0);
                    SlotTerm::new(label, p, Arc::new(reset_channel(&st)))
                })
                .collect(),
            None => {
                let noisy0 = device.init_state();
                let target = mix_vec(rho0.coeffs(), noisy0.coeffs(), r);
                let d = decompose_state(&PauliVector::new(1, target)?, &device.states())?;
                fiducial_state_terms(&d, device)
            }
        };
        for q in 0..n {
            slots.push(Slot::new(format!("init q{q}"), QubitSupport::single(q, n)?, init_terms.clone())?);
        }

        let mut cache: HashMap<Gate, Vec<SlotTerm>> = HashMap::new();
        for (loc, bl) in noisy.locations.iter().zip(&boosted.locations) {
            let terms = match cache.get(&loc.gate) {
                Some(t) => t.clone(),
                None => {
                    let t = boosted_gate_terms(loc, bl, device, r, pauli)?;
                    cache.insert(loc.gate, t.clone());
                    t
                }
            };
            slots.push(Slot::new(location_name(loc), loc.support.clone(), terms)?);
        }

        let readout = match site_insertion(&noisy.meas_noise, &boosted.meas_noise, pauli)? {
            Some(ins) => {
                let mut terms = Vec::with_capacity(ins.len());
                for (label, p, f) in ins {
                    let ch = noisy.meas_noise.after(&f);
                    let one = ReadoutSlot::from_channel(&ch)?;
                    let mut t = one.terms[0].clone();
                    t.label = label;
                    t.coeff = p;
                    terms.push(t);
                }
                ReadoutSlot::new(terms)?
            }
            None => {
                let qbar = device.readout(3).observable();
                let z = ObservableVector::z_on(0, 1)?;
                let target = mix_vec(z.coeffs(), qbar.coeffs(), r);
                let d = decompose_observable(&ObservableVector::new(1, target)?, &device.observables())?;
                fiducial_readout(&d, device)?
            }
        };
        Ok(SamplingPlan {
            n,
            probe: noisy.probe,
            slots,
            readout,
        })
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1 - r) ideal + r noisy`.
fn mix_vec(ideal: &[f64], noisy: &[f64], r: f64) -> Vec<f64> {
    ideal.iter().zip(noisy).map(|(a, b)| (1.0 - r) * a + r * b).collect()
}

fn location_name(loc: &Location) -> String {
    let qs: Vec<String> = loc.support.qubits().iter().map(|q| format!("q{q}")).collect();
    format!("{} {}", loc.gate, qs.join(" "))
}

fn fiducial_index(label: &Label) -> usize {
    match label {
        Label::Fiducial(v) => v[0] as usize - 1,
        _ => unreachable!("state and observable decompositions use fiducial labels"),
    }
}

fn fiducial_state_terms(d: &QuasiDecomposition, device: &Device) -> Vec<SlotTerm> {
    d.terms
        .iter()
        .map(|t| {
            let k = fiducial_index(&t.label);
            SlotTerm::new(t.label.clone(), t.coeff, Arc::new(device.prep_channel(k)))
        })
        .collect()
}

/// Slot terms realising `sum_j q_j <<Q_j|` on a qubit that is not read out.
/// A nontrivial readout j splits into its two outcomes: the map
/// `rho -> <<(tr +- z)/2|rho>> |0><0|` with coefficient `+-q_j`.
fn discard_terms(d: &QuasiDecomposition, device: &Device) -> Vec<SlotTerm> {
    let mut terms = Vec::new();
    for t in &d.terms {
        let j = fiducial_index(&t.label);
        let readout = device.readout(j);
        if readout.trivial {
            terms.push(SlotTerm::new(t.label.clone(), t.coeff, Arc::new(readout.channel.clone())));
            continue;
        }
        let (tr, z) = readout.rows();
        for (sign, tag) in [(1.0, "+"), (-1.0, "-")] {
            let mut m = nalgebra::DMatrix::zeros(4, 4);
            for c in 0..4 {
                let e = 0.5 * (tr[c] + sign * z[c]);
                m[(0, c)] = e;
                m[(3, c)] = e;
            }
            let op = Ptm::new(1, m).expect("4x4");
            terms.push(SlotTerm::new(
                Label::Named(format!("readout {}{tag}", j + 1)),
                sign * t.coeff,
                Arc::new(op),
            ));
        }
    }
    terms
}

fn fiducial_readout(d: &QuasiDecomposition, device: &Device) -> Result<ReadoutSlot> {
    ReadoutSlot::new(
        d.terms
            .iter()
            .map(|t| {
                let (tr, z) = device.readout(fiducial_index(&t.label)).rows();
                ReadoutTerm {
                    label: t.label.clone(),
                    coeff: t.coeff,
                    tr,
                    z,
                }
            })
            .collect(),
    )
}

fn model_op(model: &dyn OperationModel, g: Gate) -> Result<Ptm> {
    match g {
        Gate::Basis(i) => Ok(model.basis().get(i as usize).clone()),
        _ => model.gate(g),
    }
}

fn basis_labels(label: &Label) -> &[u8] {
    match label {
        Label::Basis(v) => v,
        _ => unreachable!("gate decompositions use basis labels"),
    }
}

fn gate_terms(loc: &Location, device: &Device, model: &dyn OperationModel, method: Mitigation) -> Result<Vec<SlotTerm>> {
    let k = loc.support.len();
    let model_bases: Vec<&BasisSet> = vec![model.basis(); k];
    let device_bases: Vec<&BasisSet> = vec![device.basis(); k];
    let estimate = model_op(model, loc.gate)?;
    let actual = Arc::new(loc.noisy.clone());
    match method {
        Mitigation::Inverse => {
            let d = inverse_decompose(&loc.ideal, &estimate, &model_bases)?;
            Ok(d.terms
                .iter()
                .map(|t| {
                    let b = basis_product(basis_labels(&t.label), &device_bases);
                    SlotTerm::new(t.label.clone(), t.coeff, Arc::new(b.after(&actual)))
                })
                .collect())
        }
        Mitigation::Compensation { lambda } => {
            let d = compensation_decompose(&loc.ideal, &estimate, &model_bases, lambda)?;
            Ok(d.terms
                .iter()
                .map(|t| match &t.label {
                    Label::Actual => SlotTerm::new(Label::Actual, t.coeff, actual.clone()),
                    l => SlotTerm::new(l.clone(), t.coeff, Arc::new(basis_product(basis_labels(l), &device_bases))),
                })
                .collect())
        }
    }
}

type Insertion = Vec<(Label, f64, Ptm)>;

/// Ways to realise the extra noise `F = boosted noisy^-1` at one channel:
/// a probability mixture of noiseless Paulis, a single CP map, or `None`
/// when `F` is not a physical operation.
fn site_insertion(noisy: &Ptm, boosted: &Ptm, pauli: bool) -> Result<Option<Insertion>> {
    let k = noisy.arity();
    if boosted.max_abs_diff(noisy) == 0.0 {
        return Ok(Some(vec![(Label::Named("none".into()), 1.0, Ptm::identity(k))]));
    }
    let inv = linalg::inverse(noisy.matrix(), "noise channel")?;
    let f = Ptm::new(k, boosted.matrix() * inv)?;
    if pauli {
        let probs = pauli_probabilities(&f);
        if probs.iter().any(|&p| p < -NEG_PROB_TOL) {
            return Ok(None);
        }
        return Ok(Some(
            probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| {
                    (
                        Label::Named(format!("pauli {i}")),
                        p,
                        crate::basis::pauli_ptm(i, k),
                    )
                })
                .collect(),
        ));
    }
    if is_completely_positive(&f, CP_TOL)? {
        return Ok(Some(vec![(Label::Named("boost".into()), 1.0, f)]));
    }
    Ok(None)
}

fn boosted_gate_terms(loc: &Location, boosted: &Location, device: &Device, r: f64, pauli: bool) -> Result<Vec<SlotTerm>> {
    let before = site_insertion(&loc.before, &boosted.before, pauli)?;
    let after = site_insertion(&loc.after, &boosted.after, pauli)?;
    let core = loc.after.after(&loc.ideal.after(&loc.before));
    if let (Some(before), Some(after)) = (before, after) {
        let mut terms = Vec::with_capacity(before.len() * after.len());
        for (la, pa, fa) in &after {
            for (lb, pb, fb) in &before {
                let op = fa.after(&core.after(fb));
                let label = Label::Named(format!("{} | {}", label_text(la), label_text(lb)));
                terms.push(SlotTerm::new(label, pa * pb, Arc::new(op)));
            }
        }
        return Ok(terms);
    }
    let k = loc.support.len();
    let inv = linalg::inverse(loc.noisy.matrix(), "noisy operation")?;
    let m = Ptm::new(
        k,
        Ptm::identity(k).matrix() * r + loc.ideal.matrix() * &inv * (1.0 - r),
    )?;
    let device_bases: Vec<&BasisSet> = vec![device.basis(); k];
    let d = decompose(&m, &device_bases)?;
    Ok(d.terms
        .iter()
        .map(|t| {
            let b = basis_product(basis_labels(&t.label), &device_bases);
            SlotTerm::new(t.label.clone(), t.coeff, Arc::new(b.after(&loc.noisy)))
        })
        .collect())
}

fn label_text(l: &Label) -> String {
    match l {
        Label::Named(s) => s.clone(),
        other => format!("{other:?}"),
    }
}

/// Precomputed state for fast trial evaluation.
struct Cache {
    /// State before slot t.
    forward: Vec<Vec<f64>>,
    /// Rows mapping the state after slot t to the probe's four coefficients.
    backward: Vec<[Vec<f64>; 4]>,
    final_marginal: [f64; 4],
}

/// Draws and evaluates trials of one plan. Shareable between threads.
pub struct Sampler<'a> {
    plan: &'a SamplingPlan,
    sites: Vec<LocalOp>,
    cache: Option<Cache>,
    exact: PlanExact,
}

/// The result of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub sign: f64,
    /// Measured outcome in {+1, -1, 0}.
    pub outcome: i8,
    /// Number of slots that ran a term other than their most likely one.
    pub deviations: usize,
}

impl TrialRecord {
    pub fn mu_eff(&self) -> f64 {
        self.sign * self.outcome as f64
    }
}

/// Per-worker scratch space.
#[derive(Default)]
struct Scratch {
    state: Vec<f64>,
    single: HashMap<(usize, usize), [f64; 4]>,
    devs: Vec<(usize, usize)>,
}

impl<'a> Sampler<'a> {
    pub fn new(plan: &'a SamplingPlan) -> Result<Self> {
        Self::with_memory_limit(plan, DEFAULT_MEMORY_LIMIT)
    }

    pub fn with_memory_limit(plan: &'a SamplingPlan, limit: usize) -> Result<Self> {
        ptm::check_capacity(plan.n)?;
        let exact = plan.exact()?;
        let sites = plan
            .slots
            .iter()
            .map(|s| {
                let t = &s.terms[s.default_term()];
                LocalOp::with_kernel(t.kernel.clone(), s.support.len(), &s.support, plan.n)
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = pauli_dim(plan.n);
        let bytes = plan.slots.len().saturating_mul(5).saturating_mul(dim).saturating_mul(8);
        let cache = if bytes <= limit {
            Some(Self::build_cache(plan, &sites)?)
        } else {
            None
        };
        Ok(Sampler {
            plan,
            sites,
            cache,
            exact,
        })
    }

    fn build_cache(plan: &SamplingPlan, sites: &[LocalOp]) -> Result<Cache> {
        let dim = pauli_dim(plan.n);
        let mut forward = Vec::with_capacity(plan.slots.len());
        let mut state = vec![0.0; dim];
        state[0] = 1.0;
        for site in sites {
            forward.push(state.clone());
            site.apply_in_place(&mut state);
        }
        let final_marginal = [0, 1, 2, 3].map(|k| state[plan.probe_index(k)]);
        let mut backward: Vec<[Vec<f64>; 4]> = Vec::with_capacity(plan.slots.len());
        let mut rows: [Vec<f64>; 4] = [0, 1, 2, 3].map(|k| {
            let mut v = vec![0.0; dim];
            v[plan.probe_index(k)] = 1.0;
            v
        });
        for (slot, _) in plan.slots.iter().zip(sites).rev() {
            backward.push(rows.clone());
            let t = &slot.terms[slot.default_term()];
            let transposed = LocalOp::new(&t.op.transpose(), &slot.support, plan.n)?;
            for r in rows.iter_mut() {
                transposed.apply_in_place(r);
            }
        }
        backward.reverse();
        Ok(Cache {
            forward,
            backward,
            final_marginal,
        })
    }

    pub fn plan(&self) -> &SamplingPlan {
        self.plan
    }

    pub fn exact(&self) -> PlanExact {
        self.exact
    }

    /// Whether trials reuse cached forward and backward vectors.
    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    fn marginal(&self, scratch: &mut Scratch) -> [f64; 4] {
        let plan = self.plan;
        let devs = &scratch.devs;
        let Some(cache) = &self.cache else {
            let state = &mut scratch.state;
            state.clear();
            state.resize(pauli_dim(plan.n), 0.0);
            state[0] = 1.0;
            let mut d = devs.iter().peekable();
            for (t, site) in self.sites.iter().enumerate() {
                match d.peek() {
                    Some(&&(s, l)) if s == t => {
                        site.apply_kernel_in_place(&plan.slots[t].terms[l].kernel, state);
                        d.next();
                    }
                    _ => site.apply_in_place(state),
                }
            }
            return [0, 1, 2, 3].map(|k| state[plan.probe_index(k)]);
        };
        if devs.is_empty() {
            return cache.final_marginal;
        }
        if devs.len() == 1 {
            let key = devs[0];
            if let Some(m) = scratch.single.get(&key) {
                return *m;
            }
        }
        let (t0, l0) = devs[0];
        let state = &mut scratch.state;
        state.clear();
        state.extend_from_slice(&cache.forward[t0]);
        self.sites[t0].apply_kernel_in_place(&plan.slots[t0].terms[l0].kernel, state);
        let mut t = t0;
        for &(s, l) in &devs[1..] {
            for u in t + 1..s {
                self.sites[u].apply_in_place(state);
            }
            self.sites[s].apply_kernel_in_place(&plan.slots[s].terms[l].kernel, state);
            t = s;
        }
        let rows = &cache.backward[t];
        let m = [0, 1, 2, 3].map(|k| ptm::dot(&rows[k], state));
        if devs.len() == 1 {
            scratch.single.insert(devs[0], m);
        }
        m
    }

    fn trial(&self, index: u64, seed: u64, scratch: &mut Scratch) -> TrialRecord {
        let mut rng = trial_rng(seed, index);
        let mut sign = 1.0;
        scratch.devs.clear();
        for (t, slot) in self.plan.slots.iter().enumerate() {
            let l = if slot.terms.len() == 1 {
                0
            } else {
                slot.table.sample(rng.random::<f64>())
            };
            if slot.terms[l].coeff < 0.0 {
                sign = -sign;
            }
            if l != slot.default_term() {
                scratch.devs.push((t, l));
            }
        }
        let ro = &self.plan.readout;
        let j = if ro.terms.len() == 1 {
            0
        } else {
            ro.table.sample(rng.random::<f64>())
        };
        let term = &ro.terms[j];
        if term.coeff < 0.0 {
            sign = -sign;
        }
        let m = self.marginal(scratch);
        let tr = dot4(&term.tr, &m);
        let z = dot4(&term.z, &m);
        let p_plus = ((tr + z) / 2.0).max(0.0);
        let p_minus = ((tr - z) / 2.0).max(0.0);
        let u: f64 = rng.random();
        let outcome = if u < p_plus {
            1
        } else if u < p_plus + p_minus {
            -1
        } else {
            0
        };
        TrialRecord {
            index,
            sign,
            outcome,
            deviations: scratch.devs.len(),
        }
    }

    /// Runs trials `first .. first + count`, calling `log` for each.
    pub fn run_logged<F: FnMut(&TrialRecord)>(&self, first: u64, count: u64, seed: u64, log: F) -> EstimatorStats {
        self.run_batch(first, count, seed, &mut Scratch::default(), log)
    }

    pub fn run(&self, first: u64, count: u64, seed: u64) -> EstimatorStats {
        self.run_logged(first, count, seed, |_| {})
    }

    fn run_batch<F: FnMut(&TrialRecord)>(
        &self,
        first: u64,
        count: u64,
        seed: u64,
        scratch: &mut Scratch,
        mut log: F,
    ) -> EstimatorStats {
        let mut acc = Accumulator::default();
        for i in first..first + count {
            let rec = self.trial(i, seed, scratch);
            acc.push(&rec);
            log(&rec);
        }
        acc.stats(&self.exact)
    }
}

/// The generator for trial `index`: one stream per trial, so results do not
/// depend on how trials are split between workers.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Default, Debug, Clone, Copy)]
struct Accumulator {
    n: u64,
    sum: f64,
    zeros: u64,
}

impl Accumulator {
    fn push(&mut self, r: &TrialRecord) {
        self.n += 1;
        self.sum += r.mu_eff();
        if r.outcome == 0 {
            self.zeros += 1;
        }
    }

    fn stats(&self, exact: &PlanExact) -> EstimatorStats {
        let n = self.n.max(1) as f64;
        let mean = self.sum / n;
        let second = (self.n - self.zeros) as f64 / n;
        let var = (second - mean * mean).max(0.0);
        EstimatorStats {
            trials: self.n,
            cost: exact.cost,
            mean_mu_eff: mean,
            second_moment: second,
            estimate: exact.cost * mean,
            empirical_sigma: exact.cost * (var / n).sqrt(),
            predicted_sigma: exact.predicted_sigma(self.n.max(1)),
            predicted_sigma_lossless: exact.predicted_sigma_lossless(self.n.max(1)),
            p0_empirical: self.zeros as f64 / n,
            p0_exact: exact.p0,
            exact_value: exact.value,
        }
    }
}

/// Summary of one batch of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub trials: u64,
    pub cost: f64,
    pub mean_mu_eff: f64,
    /// Sample mean of `mu_eff^2`, the fraction of surviving trials.
    pub second_moment: f64,
    /// `C * mean(mu_eff)`.
    pub estimate: f64,
    /// `C * sd(mu_eff) / sqrt(N)` from this batch.
    pub empirical_sigma: f64,
    pub predicted_sigma: f64,
    pub predicted_sigma_lossless: f64,
    pub p0_empirical: f64,
    pub p0_exact: f64,
    pub exact_value: f64,
}

/// Statistics over repeated independent batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub cost: f64,
    pub trials_per_repetition: u64,
    pub repetitions: usize,
    pub estimates: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the batch estimates.
    pub std_dev: f64,
    pub std_error: f64,
    pub predicted_sigma: f64,
    pub predicted_sigma_lossless: f64,
    /// Per-trial variance of `C mu_eff` pooled over all batches.
    pub pooled_trial_variance: f64,
    pub p0_empirical: f64,
    pub p0_exact: f64,
    pub exact_value: f64,
}

/// Runs `repetitions` batches of `trials` trials on up to `threads` workers.
/// Batch b uses trials `b * trials ..`; results are independent of `threads`.
pub fn run_repetitions(
    plan: &SamplingPlan,
    trials: u64,
    repetitions: usize,
    seed: u64,
    threads: usize,
) -> Result<RepetitionSummary> {
    if trials == 0 || repetitions == 0 {
        return Err(QemError::InvalidArgument("need at least one trial and one repetition".into()));
    }
    let sampler = Sampler::new(plan)?;
    let threads = threads.clamp(1, repetitions);
    let mut stats: Vec<Option<EstimatorStats>> = vec![None; repetitions];
    std::thread::scope(|scope| {
        let chunks: Vec<&mut [Option<EstimatorStats>]> = stats.chunks_mut(repetitions.div_ceil(threads)).collect();
        let mut start = 0usize;
        for chunk in chunks {
            let first = start;
            start += chunk.len();
            let sampler = &sampler;
            scope.spawn(move || {
                let mut scratch = Scratch::default();
                for (i, out) in chunk.iter_mut().enumerate() {
                    let b = (first + i) as u64;
                    *out = Some(sampler.run_batch(b * trials, trials, seed, &mut scratch, |_| {}));
                }
            });
        }
    });
    let stats: Vec<EstimatorStats> = stats.into_iter().map(|s| s.expect("every batch ran")).collect();
    Ok(summarize(&stats, sampler.exact()))
}

fn summarize(stats: &[EstimatorStats], exact: PlanExact) -> RepetitionSummary {
    let reps = stats.len();
    let trials = stats[0].trials;
    let estimates: Vec<f64> = stats.iter().map(|s| s.estimate).collect();
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let var = if reps > 1 {
        estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
    } else {
        0.0
    };
    let total = (trials * reps as u64) as f64;
    let mu_mean = stats.iter().map(|s| s.mean_mu_eff * s.trials as f64).sum::<f64>() / total;
    let mu_second = stats.iter().map(|s| s.second_moment * s.trials as f64).sum::<f64>() / total;
    let zeros = stats.iter().map(|s| s.p0_empirical * s.trials as f64).sum::<f64>() / total;
    RepetitionSummary {
        cost: exact.cost,
        trials_per_repetition: trials,
        repetitions: reps,
        mean,
        std_dev: var.sqrt(),
        std_error: (var / reps as f64).sqrt(),
        estimates,
        predicted_sigma: exact.predicted_sigma(trials),
        predicted_sigma_lossless: exact.predicted_sigma_lossless(trials),
        pooled_trial_variance: exact.cost * exact.cost * (mu_second - mu_mean * mu_mean).max(0.0),
        p0_empirical: zeros,
        p0_exact: exact.p0,
        exact_value: exact.value,
    }
}

/// Sample-number ratio needed by a mitigated estimator to match an ideal
/// one: `(C^2 (1 - P0) - <Q>^2) / (1 - <Q>^2)`.
pub fn sample_ratio(cost: f64, p0: f64, ideal: f64) -> f64 {
    (cost * cost * (1.0 - p0) - ideal * ideal) / (1.0 - ideal * ideal)
}

/// Zero-noise extrapolation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    None,
    Linear,
    Exponential,
}

/// Infers the zero-noise value from `z1` at the device's rate and `z2` at
/// `r` times that rate.
pub fn extrapolate(kind: Extrapolation, z1: f64, z2: f64, r: f64) -> Result<f64> {
    Ok(extrapolate_with_error(kind, (z1, 0.0), (z2, 0.0), r)?.0)
}

/// Extrapolated value with its propagated standard error.
pub fn extrapolate_with_error(kind: Extrapolation, z1: (f64, f64), z2: (f64, f64), r: f64) -> Result<(f64, f64)> {
    let (v1, s1) = z1;
    let (v2, s2) = z2;
    if kind != Extrapolation::None && (!r.is_finite() || r <= 1.0) {
        return Err(QemError::InvalidArgument(format!("boost factor must exceed 1, got {r}")));
    }
    match kind {
        Extrapolation::None => Ok((v1, s1)),
        Extrapolation::Linear => {
            let v = (r * v1 - v2) / (r - 1.0);
            let s = ((r * s1).powi(2) + s2 * s2).sqrt() / (r - 1.0);
            Ok((v, s))
        }
        Extrapolation::Exponential => {
            if v1 <= 0.0 || v2 <= 0.0 {
                return Err(QemError::InvalidArgument(format!(
                    "exponential extrapolation needs positive values, got {v1} and {v2}"
                )));
            }
            let a = r / (r - 1.0);
            let b = 1.0 / (1.0 - r);
            let v = v1.powf(a) * v2.powf(b);
            let s = v.abs() * ((a * s1 / v1).powi(2) + (b * s2 / v2).powi(2)).sqrt();
            Ok((v, s))
        }
    }
}

/// Exact values at rate 1 and `r`, and the extrapolated estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub kind: Extrapolation,
    pub r: f64,
    pub z1: f64,
    pub z2: f64,
    pub estimate: f64,
    pub sigma: f64,
}

/// Extrapolation in the exact-expectation limit.
pub fn exact_extrapolation(circuit: &Circuit, device: &Device, r: f64, kind: Extrapolation) -> Result<ExtrapolationResult> {
    let z1 = device.attach(circuit)?.expectation()?.value;
    let z2 = SamplingPlan::boosted(circuit, device, r)?.exact()?.value;
    let (estimate, sigma) = extrapolate_with_error(kind, (z1, 0.0), (z2, 0.0), r)?;
    Ok(ExtrapolationResult {
        kind,
        r,
        z1,
        z2,
        estimate,
        sigma,
    })
}

/// Monte Carlo extrapolation: half of `trials` at the device's rate, half
/// boosted by `r`.
pub fn sampled_extrapolation(
    circuit: &Circuit,
    device: &Device,
    r: f64,
    kind: Extrapolation,
    trials: u64,
    seed: u64,
) -> Result<ExtrapolationResult> {
    let n1 = trials / 2;
    let n2 = trials - n1;
    if n1 == 0 {
        return Err(QemError::InvalidArgument("need at least two trials".into()));
    }
    let base = SamplingPlan::unmitigated(&device.attach(circuit)?)?;
    let boosted = SamplingPlan::boosted(circuit, device, r)?;
    let s1 = Sampler::new(&base)?.run(0, n1, seed);
    let s2 = Sampler::new(&boosted)?.run(n1, n2, seed);
    let (estimate, sigma) = extrapolate_with_error(
        kind,
        (s1.estimate, s1.empirical_sigma),
        (s2.estimate, s2.empirical_sigma),
        r,
    )?;
    Ok(ExtrapolationResult {
        kind,
        r,
        z1: s1.estimate,
        z2: s2.estimate,
        estimate,
        sigma,
    })
}

/// Fits of `<Z>` against the error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rates: Vec<f64>,
    pub values: Vec<f64>,
    /// `<Z> ~ exp(a + b eps)`, fitted on the logarithm.
    pub exp_intercept: f64,
    pub exp_slope: f64,
    /// Root-mean-square residual of the exponential fit, in `<Z>`.
    pub exp_residual: f64,
    pub lin_intercept: f64,
    pub lin_slope: f64,
    pub lin_residual: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

fn rms(r: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = r.collect();
    (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
}

/// Exact `<Z>` of `circuit` with `spec` rescaled to each total rate in
/// `rates`, with exponential and linear fits.
pub fn decay_probe(circuit: &Circuit, spec: &NoiseSpec, placement: &NoisePlacement, rates: &[f64]) -> Result<DecayFit> {
    let reference = spec.total_rate();
    if !reference.is_finite() || reference <= 0.0 {
        return Err(QemError::InvalidNoise("decay probe needs a positive reference rate".into()));
    }
    let mut distinct = rates.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(QemError::InvalidArgument("decay probe needs at least two distinct rates".into()));
    }
    let mut values = Vec::with_capacity(rates.len());
    for &eps in rates {
        let s = spec.scaled(eps / reference);
        values.push(Device::new(s, *placement)?.attach(circuit)?.expectation()?.value);
    }
    if let Some(v) = values.iter().find(|v| **v <= 0.0) {
        return Err(QemError::InvalidArgument(format!(
            "expectation {v} is not positive; an exponential fit is undefined"
        )));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (a, b) = least_squares(rates, &logs);
    let (c, d) = least_squares(rates, &values);
    Ok(DecayFit {
        exp_residual: rms(rates.iter().zip(&values).map(|(x, y)| y - (a + b * x).exp())),
        lin_residual: rms(rates.iter().zip(&values).map(|(x, y)| y - (c + d * x))),
        rates: rates.to_vec(),
        values,
        exp_intercept: a,
        exp_slope: b,
        lin_intercept: c,
        lin_slope: d,
    })
}

/// Per-slot costs of a plan, keyed by slot name prefix (gate or "init").
pub fn cost_breakdown(plan: &SamplingPlan) -> BTreeMap<String, (usize, f64)> {
    let mut out: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for s in &plan.slots {
        let key = s.name.split_whitespace().next().unwrap_or("").to_string();
        let e = out.entry(key).or_insert((0, 1.0));
        e.0 += 1;
        e.1 *= s.cost;
    }
    out.insert("readout".into(), (1, plan.readout.cost));
    out
}
