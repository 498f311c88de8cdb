//! Quantum error mitigation by quasi-probability decomposition, simulated
//! gate-set tomography and error-boosted extrapolation, on a
//! Pauli-transfer-matrix circuit simulator.

pub mod basis;
pub mod circuit;
pub mod cost;
pub mod device;
pub mod engine;
pub mod error;
pub mod gates;
pub mod gst;
pub mod linalg;
pub mod noise;
pub mod ptm;
mod serde_matrix;

pub use error::{QemError, Result};
pub use basis::{BasisSet, Label, LambdaChoice, QuasiDecomposition};
pub use circuit::{Circuit, NoisyCircuit};
pub use device::{Device, OperationModel};
pub use engine::{Extrapolation, Mitigation, SamplingPlan};
pub use gates::Gate;
pub use noise::{NoiseKind, NoisePlacement, NoiseSpec};
pub use ptm::{
    apply_local, canonical_fiducials, expectation, ptm_from_kraus, LocalOp, ObservableVector,
    PauliVector, Ptm, QubitSupport, MAX_QUBITS,
};
