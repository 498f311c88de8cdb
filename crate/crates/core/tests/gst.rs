use nalgebra::DMatrix;
use proptest::prelude::*;
use qem_core::gst::{estimate, predict, simulate_gst, stability_report, GaugeChoice, Shots};
use qem_core::{Device, Gate, NoiseKind, NoisePlacement, NoiseSpec, OperationModel};

fn device(kind: NoiseKind, eps: f64) -> Device {
    Device::new(NoiseSpec::new(kind, eps).with_seed(7), NoisePlacement::universal_set()).unwrap()
}

const GATES: [Gate; 4] = [Gate::H, Gate::T, Gate::Rx, Gate::Rz];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_are_gauge_invariant(
        kind in prop::sample::select(vec![NoiseKind::Depolarizing, NoiseKind::Damping, NoiseKind::RandomOperation]),
        eps in 0.001f64..0.02,
        perturb in prop::collection::vec(-0.3f64..0.3, 16),
        seq in prop::collection::vec(0usize..GATES.len(), 0..6),
    ) {
        let dev = device(kind, eps);
        let record = simulate_gst(&dev, &GATES, Shots::Exact, 1).unwrap();
        let base = estimate(&record, &GaugeChoice::default()).unwrap();
        let t = GaugeChoice::ideal_states().t * (DMatrix::identity(4, 4) + DMatrix::from_row_slice(4, 4, &perturb));
        prop_assume!(nalgebra::linalg::SVD::new(t.clone(), false, false).singular_values.min() > 0.05);
        let other = estimate(&record, &GaugeChoice::new(t).unwrap()).unwrap();
        let seq: Vec<Gate> = seq.into_iter().map(|i| GATES[i]).collect();
        for j in 0..4 {
            for k in 0..4 {
                let truth = predict(&dev, &seq, j, k).unwrap();
                let a = predict(&base, &seq, j, k).unwrap();
                let b = predict(&other, &seq, j, k).unwrap();
                prop_assert!((a - truth).abs() < 1e-9, "{a} vs {truth}");
                prop_assert!((b - truth).abs() < 1e-9, "{b} vs {truth}");
            }
        }
    }
}

#[test]
fn ideal_device_is_recovered_in_the_ideal_state_gauge() {
    let dev = Device::ideal();
    let record = simulate_gst(&dev, &GATES, Shots::Exact, 0).unwrap();
    let est = estimate(&record, &GaugeChoice::default()).unwrap();
    for g in GATES {
        assert!(est.gate(g).unwrap().max_abs_diff(&g.ptm()) < 1e-12);
    }
    for (a, b) in est.states().iter().zip(dev.states()) {
        assert!(a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn finite_shot_estimates_converge() {
    let dev = device(NoiseKind::Depolarizing, 0.01);
    let exact = estimate(&simulate_gst(&dev, &GATES, Shots::Exact, 0).unwrap(), &GaugeChoice::default()).unwrap();
    let mut last = f64::INFINITY;
    for shots in [1_000u64, 1_000_000] {
        let rec = simulate_gst(&dev, &GATES, Shots::Count(shots), 11).unwrap();
        let est = estimate(&rec, &GaugeChoice::default()).unwrap();
        let err = GATES
            .iter()
            .map(|&g| est.gate(g).unwrap().max_abs_diff(&exact.gate(g).unwrap()))
            .fold(0.0, f64::max);
        assert!(err < last);
        last = err;
    }
    assert!(last < 0.02, "max error {last}");
}

#[test]
fn exact_estimates_respect_stability_bounds() {
    for kind in [NoiseKind::Depolarizing, NoiseKind::Damping, NoiseKind::Dephasing] {
        let dev = device(kind, 0.005);
        let record = simulate_gst(&dev, &GATES, Shots::Exact, 0).unwrap();
        let est = estimate(&record, &GaugeChoice::default()).unwrap();
        let report = stability_report(&dev, &est, &record).unwrap();
        assert!(report.all_within_bounds(), "{kind:?}: {report:?}");
    }
}

#[test]
fn zero_shots_are_rejected() {
    assert!(simulate_gst(&Device::ideal(), &GATES, Shots::Count(0), 0).is_err());
}
