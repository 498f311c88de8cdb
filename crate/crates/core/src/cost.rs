//! Closed-form cost bounds and whole-circuit cost aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::basis::{
    compensation_decompose, decompose_observable, decompose_state, inverse_decompose, s_min_a_ideal,
    twirl_gate, BasisSet, LambdaChoice,
};
use crate::circuit::{build_parallel_circuit, build_swap_test_nq, Circuit};
use crate::device::{Device, OperationModel};
use crate::engine::Mitigation;
use crate::error::{QemError, Result};
use crate::gates::Gate;
use crate::gst::{estimate, simulate_gst, GaugeChoice, Shots};
use crate::linalg;
use crate::noise::{NoiseKind, NoisePlacement, NoiseSpec};
use crate::ptm::{self, ObservableVector, PauliVector};

/// Key for the initialisation cost of one qubit.
pub const INIT: &str = "init";
/// Key for the cost of the probe readout.
pub const MEAS: &str = "meas";

/// `C - 1 <= 16^(2n) eps_o / (s_min(A) - 16 eps_max)^n` for an n-qubit
/// operation with error `eps_o` decomposed over basis operations whose
/// errors are at most `eps_max`.
pub fn upper_bound(eps_o: f64, eps_max: f64, n: usize) -> Result<f64> {
    let s = s_min_a_ideal();
    if !(eps_o >= 0.0 && eps_max >= 0.0) {
        return Err(QemError::InvalidArgument("errors must be nonnegative".into()));
    }
    if 16.0 * eps_max >= s {
        return Err(QemError::Threshold(format!(
            "basis error {eps_max} is not below s_min(A)/16 = {}",
            s / 16.0
        )));
    }
    let n = n as i32;
    Ok(16f64.powi(2 * n) * eps_o / (s - 16.0 * eps_max).powi(n))
}

/// `C_in - 1 <= 16 eps_in / (s_min(M_in) - eps_in)`.
pub fn c_in_bound(eps_in: f64) -> Result<f64> {
    let s = linalg::smallest_singular_value(&ptm::m_in_ideal());
    companion_bound(eps_in, s)
}

/// `C_out - 1 <= 16 eps_out / (s_min(M_out) - eps_out)`.
pub fn c_out_bound(eps_out: f64) -> Result<f64> {
    let s = linalg::smallest_singular_value(&ptm::m_out_ideal());
    companion_bound(eps_out, s)
}

fn companion_bound(eps: f64, s: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(QemError::InvalidArgument("errors must be nonnegative".into()));
    }
    if eps >= s {
        return Err(QemError::Threshold(format!("error {eps} is not below s_min = {s}")));
    }
    Ok(16.0 * eps / (s - eps))
}

/// Count and per-location cost of one operation type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeCost {
    pub count: usize,
    pub cost: f64,
}

/// Circuit cost as a product of per-location costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_type: BTreeMap<String, TypeCost>,
    pub gates: usize,
    pub ln_cost: f64,
    pub cost: f64,
    pub cost_squared: f64,
    /// The same product over gates only, leaving out initialisation and readout.
    pub cost_gates_only: f64,
    pub cost_squared_gates_only: f64,
    /// `exp(4 N eps)` when a per-gate rate is given.
    pub rule_of_thumb: Option<f64>,
}

/// Multiplies per-type costs over the circuit. `costs` is keyed by gate name
/// plus [`INIT`] (once per qubit) and [`MEAS`] (once, for the probe).
pub fn circuit_cost(circuit: &Circuit, costs: &BTreeMap<String, f64>, rate: Option<f64>) -> Result<CostReport> {
    let mut per_type = BTreeMap::new();
    for (g, count) in circuit.gate_counts() {
        let name = g.name();
        let cost = *costs.get(&name).ok_or_else(|| QemError::MissingCost(name.clone()))?;
        per_type.insert(name, TypeCost { count, cost });
    }
    let ln_gates: f64 = per_type.values().map(|t| t.count as f64 * t.cost.ln()).sum();
    for (key, count) in [(INIT, circuit.n()), (MEAS, 1)] {
        let cost = *costs.get(key).ok_or_else(|| QemError::MissingCost(key.into()))?;
        per_type.insert(key.into(), TypeCost { count, cost });
    }
    let ln_cost: f64 = per_type.values().map(|t| t.count as f64 * t.cost.ln()).sum();
    let gates = circuit.len();
    Ok(CostReport {
        per_type,
        gates,
        ln_cost,
        cost: ln_cost.exp(),
        cost_squared: (2.0 * ln_cost).exp(),
        cost_gates_only: ln_gates.exp(),
        cost_squared_gates_only: (2.0 * ln_gates).exp(),
        rule_of_thumb: rate.map(|e| (4.0 * gates as f64 * e).exp()),
    })
}

fn decomposition_cost(ideal: &crate::Ptm, actual: &crate::Ptm, basis: &BasisSet, method: Mitigation) -> Result<f64> {
    let bases = vec![basis; ideal.arity()];
    Ok(match method {
        Mitigation::Inverse => inverse_decompose(ideal, actual, &bases)?.cost,
        Mitigation::Compensation { lambda } => compensation_decompose(ideal, actual, &bases, lambda)?.cost,
    })
}

/// Per-type costs of `gates`, initialisation and readout, decomposed with
/// `model` over its basis.
pub fn model_costs(model: &dyn OperationModel, gates: &[Gate], method: Mitigation) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for &g in gates {
        let actual = match g {
            Gate::Basis(i) => model.basis().get(i as usize).clone(),
            _ => model.gate(g)?,
        };
        out.insert(g.name(), decomposition_cost(&g.ptm(), &actual, model.basis(), method)?);
    }
    out.insert(INIT.into(), decompose_state(&PauliVector::zero_state(1)?, &model.states())?.cost);
    out.insert(
        MEAS.into(),
        decompose_observable(&ObservableVector::z_on(0, 1)?, &model.observables())?.cost,
    );
    Ok(out)
}

/// Cost of `circuit` on a device with the inverse method and device-truth
/// decompositions.
pub fn device_circuit_cost(circuit: &Circuit, device: &Device, rate: Option<f64>) -> Result<CostReport> {
    let gates: Vec<Gate> = circuit.gate_counts().into_keys().collect();
    let costs = model_costs(device, &gates, Mitigation::Inverse)?;
    circuit_cost(circuit, &costs, rate)
}

/// Circuit families for cost scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SwapTest,
    Parallel,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::SwapTest => "swap_test",
            Family::Parallel => "parallel",
        }
    }

    pub fn build(&self, nq: usize) -> Result<Circuit> {
        match self {
            Family::SwapTest => build_swap_test_nq(nq),
            Family::Parallel => build_parallel_circuit(nq),
        }
    }

    /// Qubit counts the family is defined for, within `lo..=hi`.
    pub fn sizes(&self, lo: usize, hi: usize) -> Vec<usize> {
        (lo..=hi)
            .filter(|&n| match self {
                Family::SwapTest => n >= 3 && n % 2 == 1,
                Family::Parallel => n >= 4 && n % 4 == 0,
            })
            .collect()
    }
}

/// A named noise model and placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub name: String,
    pub noise: NoiseSpec,
    pub placement: NoisePlacement,
}

impl RateSet {
    /// Two-qubit gates 0.1%, single-qubit operations 0.01%.
    pub fn ion_trap(kind: NoiseKind) -> Self {
        RateSet {
            name: "ion_trap".into(),
            noise: NoiseSpec::new(kind, 1e-3),
            placement: NoisePlacement::ion_trap(),
        }
    }

    /// Every rate ten times lower than [`RateSet::ion_trap`].
    pub fn ten_times_better(kind: NoiseKind) -> Self {
        RateSet {
            name: "ten_times_better".into(),
            noise: NoiseSpec::new(kind, 1e-4),
            placement: NoisePlacement::ion_trap(),
        }
    }
}

/// One row of a cost-scaling table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub family: String,
    pub rates: String,
    pub noise: String,
    #[serde(rename = "N_q")]
    pub nq: usize,
    #[serde(rename = "C")]
    pub cost: f64,
    #[serde(rename = "C2")]
    pub cost_squared: f64,
}

/// `C` and `C^2` against qubit count for one family and rate set.
pub fn cost_curve(family: Family, rates: &RateSet, sizes: &[usize]) -> Result<Vec<CostRow>> {
    let device = Device::new(rates.noise.clone(), rates.placement)?;
    let mut cache: BTreeMap<String, f64> = BTreeMap::new();
    let mut rows = Vec::with_capacity(sizes.len());
    for &nq in sizes {
        let circuit = family.build(nq)?;
        let missing: Vec<Gate> = circuit
            .gate_counts()
            .into_keys()
            .filter(|g| !cache.contains_key(&g.name()))
            .collect();
        if !missing.is_empty() || cache.is_empty() {
            cache.extend(model_costs(&device, &missing, Mitigation::Inverse)?);
        }
        let report = circuit_cost(&circuit, &cache, None)?;
        rows.push(CostRow {
            family: family.name().into(),
            rates: rates.name.clone(),
            noise: rates.noise.kind.name().into(),
            nq,
            cost: report.cost,
            cost_squared: report.cost_squared,
        });
    }
    Ok(rows)
}

/// Where decompositions come from when costing the universal set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Actual,
    Gst,
}

/// The operations whose costs make up the universal set.
pub const UNIVERSAL_GATES: [Gate; 5] = [Gate::Rx, Gate::Rz, Gate::Tx, Gate::Lambda, Gate::Id];

/// Costs of initialisation, readout, Rx, Rz, Tx, Lambda and memory on the
/// universal-set device. With `twirl`, Clifford gates are Pauli twirled
/// before decomposition.
pub fn universal_set_costs(
    spec: &NoiseSpec,
    source: ModelSource,
    method: Mitigation,
    twirl: bool,
) -> Result<BTreeMap<String, f64>> {
    let device = Device::new(spec.clone(), NoisePlacement::universal_set())?;
    let gst;
    let model: &dyn OperationModel = match source {
        ModelSource::Actual => &device,
        ModelSource::Gst => {
            let record = simulate_gst(&device, &UNIVERSAL_GATES, Shots::Exact, 0)?;
            gst = estimate(&record, &GaugeChoice::default())?;
            &gst
        }
    };
    let mut out = model_costs(model, &[], method)?;
    for g in UNIVERSAL_GATES {
        let mut actual = model.gate(g)?;
        if twirl && g.is_clifford() {
            actual = twirl_gate(&actual, &g.ptm())?;
        }
        out.insert(g.name(), decomposition_cost(&g.ptm(), &actual, model.basis(), method)?);
    }
    Ok(out)
}

/// The compensation method with the weight of the noisy operation optimised.
pub fn optimized_compensation() -> Mitigation {
    Mitigation::Compensation {
        lambda: LambdaChoice::Optimize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn upper_bound_examples() {
        assert_eq!(upper_bound(0.0, 0.0, 1).unwrap(), 0.0);
        assert_abs_diff_eq!(upper_bound(0.001, 0.0, 1).unwrap(), 0.256 / s_min_a_ideal(), epsilon = 1e-15);
        assert!(matches!(upper_bound(0.001, 0.04, 1), Err(QemError::Threshold(_))));
    }

    #[test]
    fn unit_costs_give_unit_total() {
        let c = build_swap_test_nq(5).unwrap();
        let mut costs: BTreeMap<String, f64> =
            c.gate_counts().into_keys().map(|g| (g.name(), 1.0)).collect();
        costs.insert(INIT.into(), 1.0);
        costs.insert(MEAS.into(), 1.0);
        let r = circuit_cost(&c, &costs, None).unwrap();
        assert_eq!(r.cost, 1.0);
        costs.remove("cnot");
        assert!(matches!(circuit_cost(&c, &costs, None), Err(QemError::MissingCost(_))));
    }

    #[test]
    fn product_identity() {
        let c = build_swap_test_nq(7).unwrap();
        let d = Device::new(NoiseSpec::new(NoiseKind::Depolarizing, 0.002), NoisePlacement::simulation_simple()).unwrap();
        let r = device_circuit_cost(&c, &d, None).unwrap();
        let plan = crate::engine::SamplingPlan::mitigated(&c, &d, &d, Mitigation::Inverse).unwrap();
        assert_abs_diff_eq!(r.ln_cost, plan.ln_cost(), epsilon = 1e-12);
    }

    #[test]
    fn zero_rates_give_unit_curve() {
        let rates = RateSet {
            name: "zero".into(),
            noise: NoiseSpec::new(NoiseKind::Depolarizing, 0.0),
            placement: NoisePlacement::ion_trap(),
        };
        for fam in [Family::SwapTest, Family::Parallel] {
            for row in cost_curve(fam, &rates, &fam.sizes(3, 12)).unwrap() {
                assert_abs_diff_eq!(row.cost_squared, 1.0, epsilon = 1e-12);
            }
        }
    }
}
