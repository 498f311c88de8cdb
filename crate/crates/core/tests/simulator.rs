mod common;

use common::*;
use proptest::prelude::*;
use qem_core::circuit::{build_swap_test_nq, push_cswap};
use qem_core::{apply_local, ptm_from_kraus, Circuit, Gate, PauliVector, Ptm, QubitSupport};

const GATES: [Gate; 9] = [
    Gate::H,
    Gate::S,
    Gate::Sdg,
    Gate::T,
    Gate::Tdg,
    Gate::X,
    Gate::Y,
    Gate::Z,
    Gate::Cnot,
];

fn random_circuit() -> impl Strategy<Value = Circuit> {
    (1usize..=4).prop_flat_map(|n| {
        let ops = prop::collection::vec((0usize..GATES.len(), 0..n, 0..n), 0..24);
        (Just(n), ops, 0..n).prop_map(|(n, ops, probe)| {
            let mut c = Circuit::new(n).unwrap().with_probe(probe).unwrap();
            for (g, a, b) in ops {
                let gate = GATES[g];
                if gate == Gate::Cnot {
                    if n > 1 {
                        let b = if a == b { (a + 1) % n } else { b };
                        c.push(gate, &[a, b]).unwrap();
                    }
                } else {
                    c.push(gate, &[a]).unwrap();
                }
            }
            c
        })
    })
}

fn angles() -> impl Strategy<Value = (f64, f64, f64)> {
    let a = -3.2f64..3.2;
    (a.clone(), a.clone(), a)
}

fn entangled_state(n: usize, seeds: &[(f64, f64, f64)]) -> CMat {
    let mut v = zero_statevector(n);
    for (q, &(a, b, g)) in seeds.iter().enumerate().take(n) {
        v = embed(&unitary_from_angles(a, b, g), &[q], n) * v;
    }
    for q in 0..n - 1 {
        v = embed(&unitary(Gate::Cnot), &[q, q + 1], n) * v;
    }
    &v * v.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ptm_of_product_is_product_of_ptms(u in angles(), w in angles()) {
        let a = unitary_from_angles(u.0, u.1, u.2);
        let b = unitary_from_angles(w.0, w.1, w.2);
        let ab = Ptm::from_unitary(&(&a * &b)).unwrap();
        let composed = Ptm::from_unitary(&a).unwrap().after(&Ptm::from_unitary(&b).unwrap());
        prop_assert!(ab.max_abs_diff(&composed) < 1e-12);

        let tensor = Ptm::from_unitary(&a.kronecker(&b)).unwrap();
        let kron = Ptm::from_unitary(&a).unwrap().kron(&Ptm::from_unitary(&b).unwrap());
        prop_assert!(tensor.max_abs_diff(&kron) < 1e-12);
    }

    #[test]
    fn local_channels_match_density_matrix_evolution(
        seeds in prop::collection::vec(angles(), 3),
        u in angles(),
        gamma in 0.0f64..1.0,
        two in any::<bool>(),
        q0 in 0usize..3,
        shift in 1usize..3,
    ) {
        let n = 3;
        let rho = entangled_state(n, &seeds);
        let state = PauliVector::from_density_matrix(&rho).unwrap();
        prop_assert!(state
            .coeffs()
            .iter()
            .zip(pauli_coefficients(&rho, n))
            .all(|(a, b)| (a - b).abs() < 1e-12));

        let support: Vec<usize> = if two { vec![q0, (q0 + shift) % n] } else { vec![q0] };
        let rot = unitary_from_angles(u.0, u.1, u.2);
        let kraus: Vec<CMat> = if two {
            damping(gamma).iter().map(|k| (k * &rot).kronecker(&rot) * unitary(Gate::Cnot)).collect()
        } else {
            damping(gamma).iter().map(|k| k * &rot).collect()
        };
        let op = ptm_from_kraus(&kraus, support.len()).unwrap();
        let out = apply_local(&state, &op, &QubitSupport::new(support.clone(), n).unwrap()).unwrap();
        let dense = pauli_coefficients(&apply_kraus(&rho, &kraus, &support, n), n);
        for (a, b) in out.coeffs().iter().zip(&dense) {
            prop_assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn ideal_expectation_matches_statevector(c in random_circuit()) {
        let v = run_statevector(&c);
        let want = z_expectation(&v, c.probe(), c.n());
        prop_assert!((c.ideal_expectation().unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn circuit_followed_by_its_inverse_is_identity(c in random_circuit()) {
        let mut both = c.clone();
        for op in c.inverse().unwrap().ops() {
            both.push(op.gate, &op.qubits).unwrap();
        }
        prop_assert!((both.ideal_expectation().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn text_format_round_trips(c in random_circuit()) {
        prop_assert_eq!(Circuit::from_text(&c.to_text()).unwrap(), c);
    }
}

fn prepare(c: &mut Circuit, q: usize, word: &[Gate]) {
    for &g in word {
        c.push(g, &[q]).unwrap();
    }
}

#[test]
fn swap_test_measures_overlap_of_product_inputs() {
    let words: [&[Gate]; 5] = [&[], &[Gate::H], &[Gate::H, Gate::T], &[Gate::X], &[Gate::H, Gate::S, Gate::H]];
    for a in words {
        for b in words {
            let mut c = Circuit::new(3).unwrap();
            prepare(&mut c, 1, a);
            prepare(&mut c, 2, b);
            c.push(Gate::H, &[0]).unwrap();
            push_cswap(&mut c, 0, 1, 2).unwrap();
            c.push(Gate::H, &[0]).unwrap();

            let mut pa = Circuit::new(1).unwrap();
            prepare(&mut pa, 0, a);
            let mut pb = Circuit::new(1).unwrap();
            prepare(&mut pb, 0, b);
            let overlap = run_statevector(&pa).dotc(&run_statevector(&pb)).norm_sqr();
            // P(0) = (1 + |<a|b>|^2) / 2, so <Z> = |<a|b>|^2.
            let want = overlap;

            assert!((c.ideal_expectation().unwrap() - want).abs() < 1e-10);
            let v = run_statevector(&c);
            assert!((z_expectation(&v, 0, 3) - want).abs() < 1e-10);
        }
    }
}

#[test]
fn ghz_swap_test_agrees_with_statevector() {
    for nq in [3, 5, 7, 9] {
        let c = build_swap_test_nq(nq).unwrap();
        let v = run_statevector(&c);
        let sv = z_expectation(&v, 0, nq);
        assert!((sv - 0.5).abs() < 1e-10, "nq={nq}: {sv}");
        assert!((c.ideal_expectation().unwrap() - sv).abs() < 1e-10);
    }
}
