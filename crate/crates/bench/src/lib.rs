//! Fixtures shared by the qem benchmarks.

use qem_core::cost::Family;
use qem_core::{Circuit, Device, NoiseKind, NoisePlacement, NoiseSpec};

/// Inhomogeneous Pauli noise with dephasing-dominated probabilities.
pub fn inhom_device() -> Device {
    let spec = NoiseSpec::new(NoiseKind::InhomPauli, 8e-4)
        .with_param("p_x", 1e-4)
        .with_param("p_y", 1e-4)
        .with_param("p_z", 6e-4);
    Device::new(spec, NoisePlacement::simulation_simple()).expect("valid noise")
}

pub fn swap_test(nq: usize) -> Circuit {
    Family::SwapTest.build(nq).expect("odd qubit count")
}

/// A Pauli vector of `n` qubits with every coefficient nonzero.
pub fn dense_state(n: usize) -> Vec<f64> {
    (0..1usize << (2 * n)).map(|i| 1.0 / (1.0 + i as f64)).collect()
}
