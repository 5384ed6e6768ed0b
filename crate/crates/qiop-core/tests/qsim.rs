use num_complex::Complex64;
use qiop_core::f2::BitVec;
use qiop_core::linalg::{self, gates, CMat};
use qiop_core::pauli::PauliOp;
use qiop_core::qsim::{
    branch_enumerate, monte_carlo, Observable, QsimError, RegisterLayout, SparseState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn single_qubit_layout() -> RegisterLayout {
    RegisterLayout::new(&[("P", 1)]).unwrap()
}

#[test]
fn layout_rejects_duplicates_and_width_cap() {
    assert!(matches!(
        RegisterLayout::new(&[("A", 1), ("A", 2)]),
        Err(QsimError::DuplicateRegister(_))
    ));
    assert!(matches!(
        RegisterLayout::new(&[("A", 100), ("B", 100)]),
        Err(QsimError::WidthCap { .. })
    ));
    let l = RegisterLayout::new(&[("A", 2), ("B", 3)]).unwrap();
    assert_eq!(l.total(), 5);
    assert_eq!(l.qubit("B", 0).unwrap(), 2);
    assert_eq!(l.qubits("B").unwrap(), vec![2, 3, 4]);
    assert!(matches!(
        l.qubit("C", 0),
        Err(QsimError::UnknownRegister(_))
    ));
}

#[test]
fn measure_z_on_plus_matches_documented_order() {
    let mut st = SparseState::new(single_qubit_layout());
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    let branches = st.measure(&Observable::z(0)).unwrap();
    assert_eq!(branches.len(), 2);
    // Outcome +1 (label 0) first, collapsed to |0⟩; then −1 collapsed to |1⟩.
    assert_eq!(branches[0].label, 0);
    assert!((branches[0].value - 1.0).abs() < 1e-12);
    assert!((branches[0].prob - 0.5).abs() < 1e-12);
    let amps: Vec<(u128, Complex64)> = branches[0].state.amplitudes().collect();
    assert_eq!(amps.len(), 1);
    assert_eq!(amps[0].0, 0);
    assert_eq!(branches[1].label, 1);
    assert!((branches[1].value + 1.0).abs() < 1e-12);
    let amps: Vec<(u128, Complex64)> = branches[1].state.amplitudes().collect();
    assert_eq!(amps[0].0, 1);
}

#[test]
fn probabilities_sum_to_one_for_random_states() {
    let mut st = SparseState::new(RegisterLayout::new(&[("A", 2)]).unwrap());
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    st.apply_unitary(&gates::cnot(), &[0, 1]).unwrap();
    st.apply_unitary(&gates::s(), &[1]).unwrap();
    let ob = Observable::pauli(PauliOp::single(2, 0, 'Y').mul(&PauliOp::single(2, 1, 'Z')).unwrap(), vec![0, 1]);
    // Y⊗Z is Hermitian.
    let branches = st.measure(&ob.unwrap()).unwrap();
    let total: f64 = branches.iter().map(|b| b.prob).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn epr_measurement_teleports_exactly() {
    // ψ on W, EPR on (R, Rp); measuring (W, R) in the EPR basis leaves
    // Rp = X^{s1} Z^{s0} ψ with probability 1/4 each, no extra phase.
    let psi = [c(0.6, 0.0), c(0.0, 0.8)];
    let layout = RegisterLayout::new(&[("W", 1), ("R", 1), ("Rp", 1)]).unwrap();
    let mut st = SparseState::new(layout.clone());
    st.load_register("W", &psi).unwrap();
    st.make_epr("R", "Rp").unwrap();
    let branches = st.measure_epr_basis(0, 1).unwrap();
    assert_eq!(branches.len(), 4);
    let mut seen = Vec::new();
    for (outcome, prob, state) in branches {
        assert!((prob - 0.25).abs() < 1e-12);
        let (s0, s1) = outcome;
        seen.push(outcome);
        // Reference: E_{s0 s1} on (W, R) tensored with X^{s1} Z^{s0} ψ on Rp.
        let mut reference = SparseState::new(layout.clone());
        reference.load_register("Rp", &psi).unwrap();
        reference.apply_unitary(&gates::h(), &[0]).unwrap();
        reference.apply_unitary(&gates::cnot(), &[0, 1]).unwrap();
        if s1 == 1 {
            reference.apply_unitary(&gates::x(), &[0]).unwrap();
        }
        if s0 == 1 {
            reference.apply_unitary(&gates::z(), &[0]).unwrap();
        }
        if s0 == 1 {
            reference.apply_unitary(&gates::z(), &[2]).unwrap();
        }
        if s1 == 1 {
            reference.apply_unitary(&gates::x(), &[2]).unwrap();
        }
        let overlap = reference.inner(&state);
        assert!(
            (overlap - c(1.0, 0.0)).norm() < 1e-12,
            "outcome {:?}: overlap {}",
            outcome,
            overlap
        );
    }
    seen.sort();
    assert_eq!(seen, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
}

#[test]
fn purified_measurement_is_involutive_and_matches_direct() {
    let layout = RegisterLayout::new(&[("P", 2), ("M", 1)]).unwrap();
    let mut st = SparseState::new(layout);
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    st.apply_unitary(&gates::cnot(), &[0, 1]).unwrap();
    st.apply_unitary(&gates::s(), &[0]).unwrap();
    let ob = Observable::pauli(
        PauliOp::single(2, 0, 'X').mul(&PauliOp::single(2, 1, 'X')).unwrap(),
        vec![0, 1],
    )
    .unwrap();
    let direct = st.measure(&ob).unwrap();
    let mut purified = st.clone();
    purified.purified_measure(&ob, "M").unwrap();
    // Reading M in Z afterwards reproduces the direct distribution.
    let m_branches = purified.measure(&Observable::z(2)).unwrap();
    assert_eq!(m_branches.len(), direct.len());
    for (d, m) in direct.iter().zip(m_branches.iter()) {
        assert_eq!(d.label, m.label);
        assert!((d.prob - m.prob).abs() < 1e-12);
    }
    // Applying the purified measurement twice is the identity.
    let mut twice = st.clone();
    twice.purified_measure(&ob, "M").unwrap();
    twice.purified_measure(&ob, "M").unwrap();
    let overlap = st.inner(&twice);
    assert!((overlap - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn apply_pauli_matches_dense_matrix() {
    let op = qiop_core::pauli::from_xzy(
        1,
        &BitVec::from_str01("10").unwrap(),
        &BitVec::from_str01("00").unwrap(),
        &BitVec::from_str01("01").unwrap(),
    )
    .unwrap();
    let layout = RegisterLayout::new(&[("A", 2)]).unwrap();
    let mut st = SparseState::new(layout);
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    st.apply_unitary(&gates::cnot(), &[0, 1]).unwrap();
    let mut via_pauli = st.clone();
    via_pauli.apply_pauli(&op, &[0, 1]).unwrap();
    let mut via_matrix = st.clone();
    via_matrix.apply_unitary(&op.matrix().unwrap(), &[0, 1]).unwrap();
    let d1 = via_pauli.to_dense().unwrap();
    let d2 = via_matrix.to_dense().unwrap();
    for (a, b) in d1.iter().zip(d2.iter()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn sparse_matches_dense_circuit() {
    // A short random-ish circuit cross-checked against explicit kron products.
    let layout = RegisterLayout::new(&[("A", 3)]).unwrap();
    let mut st = SparseState::new(layout);
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    st.apply_unitary(&gates::cnot(), &[0, 2]).unwrap();
    st.apply_unitary(&gates::s(), &[2]).unwrap();
    st.apply_unitary(&gates::cz(), &[1, 2]).unwrap();
    st.apply_unitary(&gates::h(), &[1]).unwrap();

    let id = linalg::identity(2);
    let u1 = linalg::kron(&linalg::kron(&gates::h(), &id), &id);
    // CNOT on (0, 2) with qubit 1 idle: build by explicit permutation.
    let mut cnot02 = CMat::zeros(8, 8);
    for b in 0..8usize {
        let control = (b >> 2) & 1;
        let target = b & 1;
        let out = if control == 1 { b ^ 1 } else { b };
        let _ = target;
        cnot02[(out, b)] = c(1.0, 0.0);
    }
    let u3 = linalg::kron(&linalg::kron(&id, &id), &gates::s());
    let u4 = linalg::kron(&id, &gates::cz());
    let u5 = linalg::kron(&linalg::kron(&id, &gates::h()), &id);
    let mut v = vec![c(0.0, 0.0); 8];
    v[0] = c(1.0, 0.0);
    let full = &u5 * &u4 * &u3 * &cnot02 * &u1;
    let expected: Vec<Complex64> = (0..8).map(|i| (0..8).map(|j| full[(i, j)] * v[j]).sum()).collect();
    let dense = st.to_dense().unwrap();
    for (a, b) in dense.iter().zip(expected.iter()) {
        assert!((a - b).norm() < 1e-12, "{:?} vs {:?}", dense, expected);
    }
}

#[test]
fn controlled_apply_matches_cnot() {
    let layout = RegisterLayout::new(&[("C", 1), ("T", 1)]).unwrap();
    let mut st = SparseState::new(layout);
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    let mut via_ctrl = st.clone();
    via_ctrl.controlled_apply(&gates::x(), "C", 1, &[1]).unwrap();
    let mut via_cnot = st.clone();
    via_cnot.apply_unitary(&gates::cnot(), &[0, 1]).unwrap();
    let overlap = via_ctrl.inner(&via_cnot);
    assert!((overlap - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn classical_lifting_requires_injectivity() {
    let mut st = SparseState::new(RegisterLayout::new(&[("A", 1)]).unwrap());
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    let err = st.apply_classical(|_k| 0u128, None::<fn(u128) -> Complex64>);
    assert!(matches!(err, Err(QsimError::NonInjective)));
}

#[test]
fn xor_lifting_writes_function_of_input() {
    // |x⟩|0⟩ → |x⟩|x AND 1⟩ over a 2-bit input register.
    let layout = RegisterLayout::new(&[("X", 2), ("Y", 1)]).unwrap();
    let mut st = SparseState::new(layout);
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    st.apply_unitary(&gates::h(), &[1]).unwrap();
    // Key bits: X at bits 2,1 (keys are MSB-first), Y at bit 0.
    st.apply_xor_into("Y", |k| (k >> 1) & 1).unwrap();
    for (key, _) in st.amplitudes() {
        let x_low = (key >> 1) & 1;
        let y = key & 1;
        assert_eq!(x_low, y);
    }
}

#[test]
fn rejects_non_unitary_gate() {
    let mut st = SparseState::new(single_qubit_layout());
    let mut bad = CMat::zeros(2, 2);
    bad[(0, 0)] = c(2.0, 0.0);
    bad[(1, 1)] = c(1.0, 0.0);
    assert!(matches!(
        st.apply_unitary(&bad, &[0]),
        Err(QsimError::NotUnitary)
    ));
}

#[test]
fn branch_enumeration_matches_hand_computed_protocol() {
    // Flip a fair coin; on heads measure Z on |+⟩ and accept on +1, on tails
    // accept outright. Acceptance = 1/2·1/2 + 1/2 = 3/4.
    let p = branch_enumerate(100, |run| {
        let heads = run.choose_uniform(2) == 0;
        if !heads {
            return Ok(true);
        }
        let mut st = SparseState::new(single_qubit_layout());
        st.apply_unitary(&gates::h(), &[0]).unwrap();
        let (label, _) = run.branch_measure(&mut st, &Observable::z(0))?;
        Ok(label == 0)
    })
    .unwrap();
    assert!((p - 0.75).abs() < 1e-12);
}

#[test]
fn branch_enumeration_respects_cap() {
    let err = branch_enumerate(3, |run| {
        let _ = run.choose_uniform(4);
        Ok(true)
    });
    assert!(matches!(err, Err(QsimError::BranchCapExceeded(3))));
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let protocol = |run: &mut qiop_core::qsim::ProtocolRun| {
        let pick = run.choose_uniform(3);
        let mut st = SparseState::new(single_qubit_layout());
        if pick != 2 {
            st.apply_unitary(&gates::h(), &[0]).unwrap();
        }
        let (label, _) = run.branch_measure(&mut st, &Observable::z(0))?;
        Ok(label == 0)
    };
    let exact = branch_enumerate(100, protocol).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let sampled = monte_carlo(20_000, &mut rng, protocol).unwrap();
    // 4σ band for 20k Bernoulli trials.
    let sigma = (exact * (1.0 - exact) / 20_000.0).sqrt();
    assert!(
        (sampled - exact).abs() < 4.0 * sigma + 1e-9,
        "sampled {sampled} exact {exact}"
    );
}

#[test]
fn classical_register_readout() {
    let layout = RegisterLayout::new(&[("A", 1), ("B", 2)]).unwrap();
    let mut st = SparseState::new(layout);
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    // B stays |00⟩ on every branch: classical.
    let bits = st.classical_register("B").unwrap();
    assert_eq!(bits, BitVec::zeros(2));
    // A is in superposition: not classical.
    assert!(st.classical_register("A").is_err());
}

#[test]
fn expectation_of_pauli_matches_measure() {
    let mut st = SparseState::new(RegisterLayout::new(&[("A", 2)]).unwrap());
    st.apply_unitary(&gates::h(), &[0]).unwrap();
    st.apply_unitary(&gates::cnot(), &[0, 1]).unwrap();
    let op = PauliOp::single(2, 0, 'Z').mul(&PauliOp::single(2, 1, 'Z')).unwrap();
    let e = st.expect_pauli(&op, &[0, 1]).unwrap();
    let ob = Observable::pauli(op, vec![0, 1]).unwrap();
    let branches = st.measure(&ob).unwrap();
    let from_branches: f64 = branches.iter().map(|b| b.value * b.prob).sum();
    assert!((e - from_branches).abs() < 1e-12);
    assert!((e - 1.0).abs() < 1e-12);
}
