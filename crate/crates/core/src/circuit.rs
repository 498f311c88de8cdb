//! Circuits, the SWAP-test and parallel benchmark families, noise attachment
//! and exact expectation values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::device::{Device, OperationModel};
use crate::error::{QemError, Result};
use crate::gates::Gate;
use crate::noise::{NoisePlacement, NoiseSpec};
use crate::ptm::{self, LocalOp, PauliVector, Ptm, QubitSupport};

/// A gate on an ordered list of qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Op {
    pub gate: Gate,
    pub qubits: Vec<usize>,
}

/// Gates applied to `n` qubits prepared in `|0...0>`; the result is the Z
/// expectation of the probe qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n: usize,
    probe: usize,
    ops: Vec<Op>,
}

impl Circuit {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(QemError::InvalidArgument("a circuit needs at least one qubit".into()));
        }
        Ok(Circuit {
            n,
            probe: 0,
            ops: Vec::new(),
        })
    }

    pub fn with_probe(mut self, probe: usize) -> Result<Self> {
        if probe >= self.n {
            return Err(QemError::InvalidSupport(format!(
                "probe {probe} out of range for {} qubits",
                self.n
            )));
        }
        self.probe = probe;
        Ok(self)
    }

    pub fn push(&mut self, gate: Gate, qubits: &[usize]) -> Result<()> {
        if qubits.len() != gate.arity() {
            return Err(QemError::DimensionMismatch(format!(
                "{gate} acts on {} qubits, got {}",
                gate.arity(),
                qubits.len()
            )));
        }
        QubitSupport::new(qubits.to_vec(), self.n)?;
        self.ops.push(Op {
            gate,
            qubits: qubits.to_vec(),
        });
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probe(&self) -> usize {
        self.probe
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn gate_counts(&self) -> BTreeMap<Gate, usize> {
        let mut counts = BTreeMap::new();
        for op in &self.ops {
            *counts.entry(op.gate).or_insert(0) += 1;
        }
        counts
    }

    /// Number of single-qubit and two-qubit gates.
    pub fn arity_counts(&self) -> (usize, usize) {
        let two = self.ops.iter().filter(|o| o.gate.arity() == 2).count();
        (self.ops.len() - two, two)
    }

    /// As-soon-as-possible schedule: each layer lists op indices acting on
    /// disjoint qubits.
    pub fn layers(&self) -> Vec<Vec<usize>> {
        let mut free_at = vec![0usize; self.n];
        let mut layers: Vec<Vec<usize>> = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            let layer = op.qubits.iter().map(|&q| free_at[q]).max().unwrap_or(0);
            if layers.len() <= layer {
                layers.resize_with(layer + 1, Vec::new);
            }
            layers[layer].push(i);
            for &q in &op.qubits {
                free_at[q] = layer + 1;
            }
        }
        layers
    }

    /// The unitary inverse, gate by gate in reverse order.
    pub fn inverse(&self) -> Result<Circuit> {
        let mut inv = Circuit::new(self.n)?.with_probe(self.probe)?;
        for op in self.ops.iter().rev() {
            let (g, reps) = match op.gate {
                Gate::Id | Gate::H | Gate::X | Gate::Y | Gate::Z | Gate::Cnot => (op.gate, 1),
                Gate::S => (Gate::Sdg, 1),
                Gate::Sdg => (Gate::S, 1),
                Gate::T => (Gate::Tdg, 1),
                Gate::Tdg => (Gate::T, 1),
                Gate::Rx | Gate::Rz | Gate::Lambda => (op.gate, 3),
                Gate::Tx => (Gate::Tx, 15),
                other => {
                    return Err(QemError::InvalidArgument(format!("{other} has no inverse")))
                }
            };
            for _ in 0..reps {
                inv.push(g, &op.qubits)?;
            }
        }
        Ok(inv)
    }

    /// Line format: a `qubits N [probe P]` header, then one `gate q0 [q1]` per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("qubits {} probe {}\n", self.n, self.probe);
        for op in &self.ops {
            let _ = write!(s, "{}", op.gate);
            for q in &op.qubits {
                let _ = write!(s, " {q}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut circuit: Option<Circuit> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| QemError::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match circuit.as_mut() {
                None => {
                    if fields.first() != Some(&"qubits") || fields.len() < 2 {
                        return Err(parse_err("expected header 'qubits N [probe P]'".into()));
                    }
                    let n: usize = fields[1]
                        .parse()
                        .map_err(|_| parse_err(format!("bad qubit count '{}'", fields[1])))?;
                    let mut c = Circuit::new(n)?;
                    match &fields[2..] {
                        [] => {}
                        ["probe", p] => {
                            let p: usize =
                                p.parse().map_err(|_| parse_err(format!("bad probe '{p}'")))?;
                            c = c.with_probe(p)?;
                        }
                        _ => return Err(parse_err("unexpected header fields".into())),
                    }
                    circuit = Some(c);
                }
                Some(c) => {
                    let gate: Gate = fields[0].parse().map_err(|e: QemError| parse_err(e.to_string()))?;
                    let qubits = fields[1..]
                        .iter()
                        .map(|f| f.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err("qubit indices must be integers".into()))?;
                    c.push(gate, &qubits)
                        .map_err(|e| parse_err(e.to_string()))?;
                }
            }
        }
        circuit.ok_or(QemError::Parse {
            line: 0,
            msg: "empty circuit description".into(),
        })
    }

    /// Exact noiseless expectation of Z on the probe.
    pub fn ideal_expectation(&self) -> Result<f64> {
        Ok(exact_expectation(self, None)?.value)
    }
}

/// The 15-gate Toffoli network with controls `c1`, `c2` and target `t`:
/// H t; CX c2 t; Tdg t; CX c1 t; T t; CX c2 t; Tdg t; CX c1 t; T c2; T t;
/// H t; CX c1 c2; T c1; Tdg c2; CX c1 c2.
pub fn push_toffoli(c: &mut Circuit, c1: usize, c2: usize, t: usize) -> Result<()> {
    c.push(Gate::H, &[t])?;
    c.push(Gate::Cnot, &[c2, t])?;
    c.push(Gate::Tdg, &[t])?;
    c.push(Gate::Cnot, &[c1, t])?;
    c.push(Gate::T, &[t])?;
    c.push(Gate::Cnot, &[c2, t])?;
    c.push(Gate::Tdg, &[t])?;
    c.push(Gate::Cnot, &[c1, t])?;
    c.push(Gate::T, &[c2])?;
    c.push(Gate::T, &[t])?;
    c.push(Gate::H, &[t])?;
    c.push(Gate::Cnot, &[c1, c2])?;
    c.push(Gate::T, &[c1])?;
    c.push(Gate::Tdg, &[c2])?;
    c.push(Gate::Cnot, &[c1, c2])?;
    Ok(())
}

/// Controlled swap of `a` and `b` as three Toffolis.
pub fn push_cswap(c: &mut Circuit, control: usize, a: usize, b: usize) -> Result<()> {
    push_toffoli(c, control, a, b)?;
    push_toffoli(c, control, b, a)?;
    push_toffoli(c, control, a, b)
}

/// SWAP test between a GHZ state on qubits `1..=n` and `|0...0>` on qubits
/// `n+1..=2n`, with qubit 0 as the probe. Ideally `<Z> = 1/2`.
pub fn build_swap_test(n: usize) -> Result<Circuit> {
    if n == 0 {
        return Err(QemError::InvalidArgument("group size must be at least 1".into()));
    }
    let nq = 2 * n + 1;
    let mut c = Circuit::new(nq)?;
    c.push(Gate::H, &[1])?;
    for q in 1..n {
        c.push(Gate::Cnot, &[q, q + 1])?;
    }
    c.push(Gate::H, &[0])?;
    for i in 0..n {
        push_cswap(&mut c, 0, 1 + i, n + 1 + i)?;
    }
    c.push(Gate::H, &[0])?;
    Ok(c)
}

/// SWAP test on `nq = 2n + 1` qubits.
pub fn build_swap_test_nq(nq: usize) -> Result<Circuit> {
    if nq < 3 || nq % 2 == 0 {
        return Err(QemError::InvalidArgument(format!(
            "a SWAP test needs an odd qubit count of at least 3, got {nq}"
        )));
    }
    build_swap_test((nq - 1) / 2)
}

/// Depth-`nq` circuit where every layer applies T, S or H to half of the
/// qubits and CNOTs to disjoint pairs of the other half.
pub fn build_parallel_circuit(nq: usize) -> Result<Circuit> {
    if nq == 0 || nq % 4 != 0 {
        return Err(QemError::InvalidArgument(format!(
            "the parallel circuit needs a positive multiple of 4 qubits, got {nq}"
        )));
    }
    let singles = [Gate::T, Gate::S, Gate::H];
    let mut c = Circuit::new(nq)?;
    let half = nq / 2;
    for layer in 0..nq {
        let order: Vec<usize> = (0..nq).map(|i| (i + layer) % nq).collect();
        for (i, &q) in order[..half].iter().enumerate() {
            c.push(singles[(i + layer) % 3], &[q])?;
        }
        for pair in order[half..].chunks(2) {
            c.push(Gate::Cnot, pair)?;
        }
    }
    Ok(c)
}

/// A gate with its noise; idle cycles are identity gates. The noisy
/// operation is `after . ideal . before`, except for basis operations, which
/// are taken from the device as a whole and carry identity noise channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub gate: Gate,
    pub support: QubitSupport,
    pub ideal: Ptm,
    pub before: Ptm,
    pub after: Ptm,
    pub noisy: Ptm,
}

impl Location {
    pub fn new(gate: Gate, support: QubitSupport, before: Ptm, after: Ptm) -> Self {
        let ideal = gate.ptm();
        let noisy = after.after(&ideal.after(&before));
        Location {
            gate,
            support,
            ideal,
            before,
            after,
            noisy,
        }
    }
}

/// A circuit with noise channels attached at every location.
#[derive(Debug, Clone)]
pub struct NoisyCircuit {
    pub n: usize,
    pub probe: usize,
    /// Noise after `|0>` on every qubit.
    pub init_noise: Ptm,
    pub locations: Vec<Location>,
    /// Noise before the probe's Z readout.
    pub meas_noise: Ptm,
}

impl NoisyCircuit {
    /// Exact expectation of Z on the probe, with the surviving trace.
    pub fn expectation(&self) -> Result<Expectation> {
        ptm::check_capacity(self.n)?;
        let single = ptm::apply_local(
            &PauliVector::zero_state(1)?,
            &self.init_noise,
            &QubitSupport::single(0, 1)?,
        )?;
        let mut state = PauliVector::product(&vec![single; self.n])?;
        for loc in &self.locations {
            let kernel = LocalOp::new(&loc.noisy, &loc.support, self.n)?;
            kernel.apply_in_place(state.coeffs_mut());
        }
        let probe = QubitSupport::single(self.probe, self.n)?;
        LocalOp::new(&self.meas_noise, &probe, self.n)?.apply_in_place(state.coeffs_mut());
        let z = state.coeffs()[3usize << (2 * (self.n - 1 - self.probe))];
        Ok(Expectation {
            value: z,
            survival: state.coeffs()[0],
        })
    }
}

/// `<Z>` on the probe and the trace of the final state (1 unless the noise leaks).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub survival: f64,
}

impl Device {
    /// Attaches this device's noise to every location of `circuit`. The full
    /// placement also adds memory noise on qubits idle in a layer.
    pub fn attach(&self, circuit: &Circuit) -> Result<NoisyCircuit> {
        let mut locations = Vec::with_capacity(circuit.len());
        let mut noise_cache: BTreeMap<Gate, crate::device::GateNoise> = BTreeMap::new();
        let mut location_of = |op: &Op| -> Result<Location> {
            let support = QubitSupport::new(op.qubits.clone(), circuit.n())?;
            if let Gate::Basis(i) = op.gate {
                let mut loc = Location::new(
                    op.gate,
                    support,
                    Ptm::identity(1),
                    Ptm::identity(1),
                );
                loc.noisy = self.basis().get(i as usize).clone();
                return Ok(loc);
            }
            let gn = match noise_cache.get(&op.gate) {
                Some(g) => g.clone(),
                None => {
                    let g = self.gate_noise(op.gate)?;
                    noise_cache.insert(op.gate, g.clone());
                    g
                }
            };
            Ok(Location::new(
                op.gate,
                support,
                gn.before,
                gn.after,
            ))
        };
        match self.memory_noise() {
            None => {
                for op in circuit.ops() {
                    locations.push(location_of(op)?);
                }
            }
            Some(mem) => {
                for layer in circuit.layers() {
                    let mut busy = vec![false; circuit.n()];
                    for &i in &layer {
                        let op = &circuit.ops()[i];
                        for &q in &op.qubits {
                            busy[q] = true;
                        }
                        locations.push(location_of(op)?);
                    }
                    for (q, _) in busy.iter().enumerate().filter(|(_, b)| !**b) {
                        locations.push(Location::new(
                            Gate::Id,
                            QubitSupport::single(q, circuit.n())?,
                            mem.clone(),
                            Ptm::identity(1),
                        ));
                    }
                }
            }
        }
        Ok(NoisyCircuit {
            n: circuit.n(),
            probe: circuit.probe(),
            init_noise: self.init_noise().clone(),
            locations,
            meas_noise: self.meas_noise().clone(),
        })
    }
}

/// Attaches `spec` noise with the given placement.
pub fn attach_noise(circuit: &Circuit, spec: &NoiseSpec, placement: &NoisePlacement) -> Result<NoisyCircuit> {
    Device::new(spec.clone(), *placement)?.attach(circuit)
}

/// Exact Z expectation of the probe, noiseless when `noise` is `None`.
pub fn exact_expectation(
    circuit: &Circuit,
    noise: Option<(&NoiseSpec, &NoisePlacement)>,
) -> Result<Expectation> {
    ptm::check_capacity(circuit.n())?;
    let device = match noise {
        Some((spec, placement)) => Device::new(spec.clone(), *placement)?,
        None => Device::ideal(),
    };
    device.attach(circuit)?.expectation()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_test_counts() {
        for n in 1..=6 {
            let c = build_swap_test(n).unwrap();
            let nq = 2 * n + 1;
            assert_eq!(c.len(), 23 * nq - 21);
            let (one, two) = c.arity_counts();
            assert_eq!(two, n - 1 + 18 * n);
            assert_eq!(one + two, 46 * n + 2);
        }
        assert_eq!(build_swap_test_nq(7).unwrap().len(), 140);
        assert_eq!(build_swap_test_nq(3).unwrap().len(), 48);
    }

    #[test]
    fn swap_test_ideal_half() {
        for n in 1..=3 {
            let v = build_swap_test(n).unwrap().ideal_expectation().unwrap();
            assert!((v - 0.5).abs() < 1e-9, "n = {n}: {v}");
        }
    }

    #[test]
    fn parallel_counts() {
        let c = build_parallel_circuit(8).unwrap();
        assert_eq!(c.arity_counts(), (32, 16));
        let c = build_parallel_circuit(52).unwrap();
        assert_eq!(c.arity_counts(), (1352, 676));
        assert!(build_parallel_circuit(6).is_err());
        let layers = c.layers();
        assert_eq!(layers.len(), 52);
        for layer in layers {
            let mut seen = vec![0; 52];
            for i in layer {
                for &q in &c.ops()[i].qubits {
                    seen[q] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn text_round_trip() {
        let c = build_swap_test(2).unwrap();
        let text = c.to_text();
        assert_eq!(text.lines().count(), c.len() + 1);
        assert_eq!(Circuit::from_text(&text).unwrap(), c);
        assert!(matches!(
            Circuit::from_text("qubits 2\nfoo 0\n"),
            Err(QemError::Parse { line: 2, .. })
        ));
        assert!(Circuit::from_text("qubits 2\ncnot 0 5\n").is_err());
    }

    #[test]
    fn empty_circuit_has_only_init_and_measurement_noise() {
        let spec = NoiseSpec::new(crate::noise::NoiseKind::Depolarizing, 0.01);
        let nc = attach_noise(&Circuit::new(2).unwrap(), &spec, &NoisePlacement::simulation_simple()).unwrap();
        assert!(nc.locations.is_empty());
        let e = nc.expectation().unwrap();
        let f = 1.0 - 4.0 * 0.01 / 3.0;
        assert!((e.value - f * f).abs() < 1e-14);
    }
}
