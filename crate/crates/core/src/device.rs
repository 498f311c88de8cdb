//! Simulated noisy hardware: the true operations a device implements for a
//! given noise family and placement.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFlavor, BasisSet};
use crate::error::Result;
use crate::gates::Gate;
use crate::noise::{build_noise, NoiseContext, NoiseKind, NoisePlacement, NoiseSpec, PlacementMode};
use crate::ptm::{ObservableVector, PauliVector, Ptm};

/// Basis operation applied to `|0>` to prepare fiducial state k (none for k = 0).
pub const FIDUCIAL_PREP: [Option<usize>; 4] = [None, Some(2), Some(9), Some(5)];
/// Basis operation applied before the Z readout for observable j; j = 0 is the
/// trivial observable and j = 3 reads Z directly.
pub const OBSERVABLE_ADJUST: [Option<usize>; 4] = [None, Some(9), Some(8), None];

/// The noisy operations a model exposes for building decompositions.
pub trait OperationModel {
    /// The four single-qubit fiducial states, raw Pauli coefficients.
    fn states(&self) -> Vec<PauliVector>;
    /// The four single-qubit fiducial observables.
    fn observables(&self) -> Vec<ObservableVector>;
    fn gate(&self, g: Gate) -> Result<Ptm>;
    fn basis(&self) -> &BasisSet;
}

/// Channels on both sides of a gate; the noisy gate is `after . G . before`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateNoise {
    pub before: Ptm,
    pub after: Ptm,
}

/// One Z readout on a single qubit after an optional adjusting operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// Everything applied to the qubit before its Z value is read.
    pub channel: Ptm,
    /// A trivial readout reports +1 whenever the run survives post-selection.
    pub trivial: bool,
}

impl Readout {
    /// Row vectors `(<<I| R, <<Z| R)` over the measured qubit's Pauli digit,
    /// so that `p(+1) = (tr + z)/2`, `p(-1) = (tr - z)/2` and `p(0) = 1 - tr`.
    pub fn rows(&self) -> ([f64; 4], [f64; 4]) {
        let m = self.channel.matrix();
        let tr = [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(0, 3)]];
        if self.trivial {
            return (tr, tr);
        }
        let z = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        (tr, z)
    }

    /// The effective observable `<<Q_j|` the readout measures.
    pub fn observable(&self) -> ObservableVector {
        ObservableVector::new(1, self.rows().1.to_vec()).expect("four coefficients")
    }
}

/// A noisy device with identical qubits.
#[derive(Debug, Clone)]
pub struct Device {
    noise: NoiseSpec,
    placement: NoisePlacement,
    init_noise: Ptm,
    meas_noise: Ptm,
    memory_noise: Option<Ptm>,
    basis: BasisSet,
    states: Vec<PauliVector>,
    readouts: Vec<Readout>,
}

impl Device {
    pub fn new(noise: NoiseSpec, placement: NoisePlacement) -> Result<Self> {
        noise.validate()?;
        placement.validate()?;
        let mut dev = Device {
            noise,
            placement,
            init_noise: Ptm::identity(1),
            meas_noise: Ptm::identity(1),
            memory_noise: None,
            basis: crate::basis::ideal_basis(),
            states: Vec::new(),
            readouts: Vec::new(),
        };
        dev.init_noise = dev.channel(placement.init, 1, NoiseContext::Init)?;
        dev.meas_noise = dev.channel(placement.meas_half, 1, NoiseContext::Measure)?;
        if placement.mode == PlacementMode::UniversalSet {
            dev.memory_noise = Some(dev.channel(placement.memory, 1, NoiseContext::Memory)?);
        }
        dev.basis = dev.build_basis()?;
        let rho0 = dev.init_state();
        dev.states = FIDUCIAL_PREP
            .iter()
            .map(|prep| match prep {
                None => rho0.clone(),
                Some(i) => apply1(dev.basis.get(*i), &rho0),
            })
            .collect();
        dev.readouts = OBSERVABLE_ADJUST
            .iter()
            .enumerate()
            .map(|(j, adj)| {
                if j == 0 {
                    return Readout {
                        channel: Ptm::identity(1),
                        trivial: true,
                    };
                }
                let channel = match adj {
                    None => dev.meas_noise.clone(),
                    Some(i) => dev.meas_noise.after(dev.basis.get(*i)),
                };
                Readout {
                    channel,
                    trivial: false,
                }
            })
            .collect();
        Ok(dev)
    }

    /// A device without noise.
    pub fn ideal() -> Self {
        Device::new(
            NoiseSpec::new(NoiseKind::Depolarizing, 0.0),
            NoisePlacement::simulation_simple(),
        )
        .expect("zero noise is valid")
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn placement(&self) -> &NoisePlacement {
        &self.placement
    }

    /// The same device with every noise rate multiplied by `r`.
    pub fn scaled(&self, r: f64) -> Result<Device> {
        Device::new(self.noise.scaled(r), self.placement)
    }

    fn channel(&self, multiplier: f64, arity: usize, ctx: NoiseContext) -> Result<Ptm> {
        build_noise(&self.noise.scaled(multiplier), arity, Some(&ctx))
    }

    /// Noise channels around gate `g`.
    pub fn gate_noise(&self, g: Gate) -> Result<GateNoise> {
        let ctx = NoiseContext::Gate(g);
        let p = &self.placement;
        if g == Gate::Id {
            return Ok(GateNoise {
                before: self.memory_noise.clone().unwrap_or_else(|| Ptm::identity(1)),
                after: Ptm::identity(1),
            });
        }
        if g.arity() == 1 {
            let e = self.channel(p.single_gate_half, 1, ctx)?;
            return Ok(match &self.memory_noise {
                Some(m) => GateNoise {
                    before: e.after(m),
                    after: m.after(&e),
                },
                None => GateNoise {
                    before: e.clone(),
                    after: e,
                },
            });
        }
        let e = match p.mode {
            PlacementMode::UniversalSet => self.channel(p.two_gate_half, 2, ctx)?,
            PlacementMode::SimulationSimple => {
                if self.noise.kind.is_gate_dependent() {
                    self.channel(p.two_gate_half, 2, ctx)?
                } else {
                    let one = self.channel(p.two_gate_half, 1, ctx)?;
                    one.kron(&one)
                }
            }
        };
        Ok(GateNoise {
            before: e.clone(),
            after: e,
        })
    }

    /// The noisy implementation of gate `g`; basis operations come from the
    /// device's basis set.
    pub fn noisy_gate(&self, g: Gate) -> Result<Ptm> {
        if let Gate::Basis(i) = g {
            return Ok(self.basis.get(i as usize).clone());
        }
        let n = self.gate_noise(g)?;
        Ok(n.after.after(&g.ptm().after(&n.before)))
    }

    /// Channel acting on `|0>` at initialisation.
    pub fn init_noise(&self) -> &Ptm {
        &self.init_noise
    }

    /// Channel acting before every Z readout.
    pub fn meas_noise(&self) -> &Ptm {
        &self.meas_noise
    }

    /// Memory noise on an idle qubit per cycle; only the full placement has it.
    pub fn memory_noise(&self) -> Option<&Ptm> {
        self.memory_noise.as_ref()
    }

    /// The noisy initial state of one qubit.
    pub fn init_state(&self) -> PauliVector {
        apply1(&self.init_noise, &PauliVector::zero_state(1).expect("one qubit"))
    }

    /// Fiducial state k, `0 <= k < 4`.
    pub fn prepared_state(&self, k: usize) -> &PauliVector {
        &self.states[k]
    }

    /// Channel that discards its input and prepares fiducial state k.
    pub fn prep_channel(&self, k: usize) -> Ptm {
        reset_channel(&self.states[k])
    }

    pub fn readout(&self, j: usize) -> &Readout {
        &self.readouts[j]
    }

    pub fn readouts(&self) -> &[Readout] {
        &self.readouts
    }

    fn build_basis(&self) -> Result<BasisSet> {
        let ideal = crate::basis::ideal_basis();
        let ops: Vec<Ptm> = match self.placement.mode {
            PlacementMode::SimulationSimple => {
                let mut ops = vec![Ptm::identity(1)];
                for i in 2..=16u8 {
                    let e = self.channel(
                        self.placement.single_gate_half,
                        1,
                        NoiseContext::Gate(Gate::Basis(i)),
                    )?;
                    ops.push(e.after(&ideal.get(i as usize).after(&e)));
                }
                ops
            }
            PlacementMode::UniversalSet => {
                let rx = self.noisy_gate(Gate::Rx)?;
                let rz = self.noisy_gate(Gate::Rz)?;
                let pi = self.meas_noise.after(&Gate::Pi.ptm().after(&self.meas_noise));
                let mem = self.memory_noise.clone().unwrap_or_else(|| Ptm::identity(1));
                let seq = |ops: &[&Ptm]| {
                    ops.iter()
                        .skip(1)
                        .fold(ops[0].clone(), |acc, o| acc.after(o))
                };
                vec![
                    mem.after(&mem),
                    seq(&[&rx, &rx]),
                    seq(&[&rx, &rx, &rz, &rz]),
                    seq(&[&rz, &rz]),
                    rx.clone(),
                    seq(&[&rz, &rz, &rz, &rx, &rz]),
                    rz.clone(),
                    seq(&[&rx, &rz, &rz]),
                    seq(&[&rz, &rx, &rz]),
                    seq(&[&rx, &rx, &rz]),
                    seq(&[&rz, &rz, &rz, &rx, &rx, &rx, &pi, &rx, &rz]),
                    seq(&[&rx, &pi, &rx, &rx, &rx]),
                    pi.clone(),
                    seq(&[&rz, &rz, &rz, &rx, &rx, &rx, &pi, &rx, &rx, &rx, &rz]),
                    seq(&[&rx, &pi, &rx, &rx, &rx, &rz, &rz]),
                    seq(&[&pi, &rx, &rx]),
                ]
            }
        };
        BasisSet::new(BasisFlavor::NoisyActual, ops)
    }
}

impl OperationModel for Device {
    fn states(&self) -> Vec<PauliVector> {
        self.states.clone()
    }

    fn observables(&self) -> Vec<ObservableVector> {
        self.readouts.iter().map(|r| r.observable()).collect()
    }

    fn gate(&self, g: Gate) -> Result<Ptm> {
        self.noisy_gate(g)
    }

    fn basis(&self) -> &BasisSet {
        &self.basis
    }
}

pub(crate) fn apply1(op: &Ptm, state: &PauliVector) -> PauliVector {
    let v = op.matrix() * nalgebra::DVector::from_column_slice(state.coeffs());
    PauliVector::new(state.n(), v.iter().cloned().collect()).expect("same dimension")
}

/// PTM of `rho -> tr(rho) sigma` for a single-qubit state `sigma`.
pub fn reset_channel(state: &PauliVector) -> Ptm {
    let mut m = DMatrix::zeros(4, 4);
    for (r, v) in state.coeffs().iter().enumerate() {
        m[(r, 0)] = *v;
    }
    Ptm::new(1, m).expect("4x4")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ptm::canonical_fiducials;

    #[test]
    fn ideal_device_has_canonical_fiducials() {
        let d = Device::ideal();
        let (states, observables) = canonical_fiducials();
        for k in 0..4 {
            let diff: f64 = d
                .prepared_state(k)
                .coeffs()
                .iter()
                .zip(states[k].coeffs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "state {k}");
        }
        for (j, o) in d.observables().iter().enumerate() {
            let diff: f64 = o
                .coeffs()
                .iter()
                .zip(observables[j].coeffs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "observable {j}");
        }
        assert!(d.basis().eps_max() < 1e-12);
    }

    #[test]
    fn full_mode_basis_matches_ideal_without_noise() {
        let d = Device::new(
            NoiseSpec::new(NoiseKind::Depolarizing, 0.0),
            NoisePlacement::universal_set(),
        )
        .unwrap();
        assert!(d.basis().eps_max() < 1e-12);
    }

    #[test]
    fn simple_cnot_noise_is_product() {
        let spec = NoiseSpec::new(NoiseKind::InhomPauli, 0.0008);
        let d = Device::new(spec.clone(), NoisePlacement::simulation_simple()).unwrap();
        let n = d.gate_noise(Gate::Cnot).unwrap();
        let e = build_noise(&spec, 1, None).unwrap();
        assert!(n.before.max_abs_diff(&e.kron(&e)) < 1e-15);
        // total two-qubit rate is four single-channel rates
        let total_ideal_weight = d.noisy_gate(Gate::Cnot).unwrap();
        assert!(total_ideal_weight.is_trace_preserving());
    }

    #[test]
    fn readout_rows_give_probabilities() {
        let d = Device::new(
            NoiseSpec::new(NoiseKind::Leakage, 0.01),
            NoisePlacement::simulation_simple(),
        )
        .unwrap();
        let (tr, z) = d.readout(3).rows();
        // |1> loses weight before the readout
        let one = [1.0, 0.0, 0.0, -1.0];
        let t: f64 = tr.iter().zip(one).map(|(a, b)| a * b).sum();
        let zz: f64 = z.iter().zip(one).map(|(a, b)| a * b).sum();
        assert!((t - 0.99).abs() < 1e-12);
        assert!((zz + 0.99).abs() < 1e-12);
    }
}
