use num_complex::Complex64;
use qiop_core::f2::BitVec;
use qiop_core::hadcode::{
    apply_read_coherent, blr_reject_exact, blr_test, lift_blr, lift_decode, lift_selfcorrect,
    read_observable, self_correct, self_correct_hit_exact, HadError, HadamardCode, TesterParams,
};
use qiop_core::linalg::gates;
use qiop_core::qsim::{RegisterLayout, SparseState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn encode_decode_tester_examples() {
    let code = HadamardCode::new(2).unwrap();
    let w00 = code.encode(&BitVec::from_str01("00").unwrap()).unwrap();
    assert_eq!(w00.to_string(), "0000");
    assert_eq!(code.tester_t(&w00).unwrap(), 1);
    let w10 = code.encode(&BitVec::from_str01("10").unwrap()).unwrap();
    assert_eq!(w10.to_string(), "0011");
    let (msg, dist) = code
        .decode_with_distance(&BitVec::from_str01("0001").unwrap())
        .unwrap();
    assert_eq!(msg.to_string(), "00");
    assert_eq!(dist, 1);
    assert_eq!(code.tester_t(&BitVec::from_str01("0001").unwrap()).unwrap(), 0);
    assert!(matches!(
        HadamardCode::for_block(6),
        Err(HadError::NotPowerOfTwo(6))
    ));
}

#[test]
fn generator_rows_are_binary_expansions_and_additive() {
    for k in 1..=3 {
        let code = HadamardCode::new(k).unwrap();
        let g = code.generator();
        for j in 0..code.n {
            assert_eq!(g.row(j), &BitVec::from_index(k, j as u128));
        }
        // g_{x⊕y} = g_x ⊕ g_y makes self-correction work.
        for x in 0..code.n {
            for y in 0..code.n {
                assert_eq!(g.row(x ^ y), &g.row(x).xor(g.row(y)).unwrap());
            }
        }
    }
}

#[test]
fn decode_is_distance_minimizing_everywhere() {
    // Full exhaustive cross-check against a brute-force nearest-codeword
    // search, every 8-bit word for k = 3.
    let code = HadamardCode::new(3).unwrap();
    let codewords: Vec<(BitVec, BitVec)> = (0..8u128)
        .map(|m| {
            let msg = BitVec::from_index(3, m);
            let cw = code.encode(&msg).unwrap();
            (msg, cw)
        })
        .collect();
    for raw in 0..256u128 {
        let w = BitVec::from_index(8, raw);
        let mut best_dist = usize::MAX;
        for (_, cw) in &codewords {
            best_dist = best_dist.min(w.dist(cw).unwrap());
        }
        let (msg, dist) = code.decode_with_distance(&w).unwrap();
        assert_eq!(dist, best_dist, "w = {w}");
        // The decoder must pick the lexicographically smallest among ties.
        let tied: Vec<u128> = codewords
            .iter()
            .filter(|(_, cw)| w.dist(cw).unwrap() == best_dist)
            .map(|(m, _)| m.to_index())
            .collect();
        assert_eq!(msg.to_index(), *tied.iter().min().unwrap(), "w = {w}");
        // encode∘decode is the identity on codewords.
        if dist == 0 {
            assert_eq!(code.encode(&msg).unwrap(), w);
        }
    }
}

#[test]
fn blr_accepts_codewords_exactly() {
    for k in 1..=3 {
        let code = HadamardCode::new(k).unwrap();
        for m in 0..(1u128 << k) {
            let w = code.encode(&BitVec::from_index(k, m)).unwrap();
            for x in 0..code.n {
                for y in 0..code.n {
                    assert_eq!(blr_test(&w, x, y), 1);
                }
            }
        }
    }
}

#[test]
fn blr_single_flip_rejection_matches_hand_count() {
    // k = 3, flip one bit of the zero codeword at position 1. Pairs (x, y)
    // where position 1 occurs an odd number of times among {x, y, x⊕y}:
    // x = 1 (y ∉ {0,1}): 6; y = 1 (x ∉ {0,1}): 6; x⊕y = 1 (x,y ∉ {0,1}): 6.
    // Total 18 of 64.
    let mut w = BitVec::zeros(8);
    w.set(1, 1);
    assert!((blr_reject_exact(&w) - 18.0 / 64.0).abs() < 1e-15);
}

#[test]
fn blr_on_random_words_accepts_about_half() {
    // For a uniformly random word the test bit w(x)⊕w(y)⊕w(x⊕y) is a fair
    // coin, so acceptance over both the word and the pair is exactly 1/2.
    let mut rng = ChaCha20Rng::seed_from_u64(0x1ead);
    let trials = 10_000usize;
    let mut accepts = 0usize;
    for _ in 0..trials {
        let raw: u8 = rng.gen();
        let w = BitVec::from_index(8, raw as u128);
        let x = rng.gen_range(0..8);
        let y = rng.gen_range(0..8);
        accepts += blr_test(&w, x, y) as usize;
    }
    let freq = accepts as f64 / trials as f64;
    let sigma = (0.25f64 / trials as f64).sqrt();
    assert!((freq - 0.5).abs() < 5.0 * sigma, "freq {freq}");
}

#[test]
fn self_correction_examples() {
    let code = HadamardCode::new(3).unwrap();
    let msg = BitVec::from_str01("101").unwrap();
    let w = code.encode(&msg).unwrap();
    // Exact codeword: correct on every draw, every position.
    for p in 0..8 {
        let target = w.get(p);
        assert!((self_correct_hit_exact(&w, p, target) - 1.0).abs() < 1e-15);
        for x in 0..8 {
            assert_eq!(self_correct(&w, p, x), target);
        }
    }
    // One flipped bit away from p: wrong on exactly the 2 draws that touch
    // the flip.
    let mut corrupted = w.clone();
    corrupted.flip(3);
    let p = 5;
    let target = w.get(p);
    assert!((self_correct_hit_exact(&corrupted, p, target) - 6.0 / 8.0).abs() < 1e-15);
    // Flip at p itself: the corrector still reads around p and recovers the
    // codeword bit on 6 of 8 draws.
    let mut at_p = w.clone();
    at_p.flip(p);
    assert!((self_correct_hit_exact(&at_p, p, w.get(p)) - 6.0 / 8.0).abs() < 1e-15);
}

#[test]
fn local_testing_bound_exhaustive_small_k() {
    // Rejection ≥ κ·δ over every single and double corruption of every
    // codeword, k ≤ 3; the measured κ must be at least the BLR 1/4.
    let params = TesterParams::default();
    let mut measured_kappa = f64::INFINITY;
    for k in 1..=3usize {
        let code = HadamardCode::new(k).unwrap();
        let n = code.n;
        for m in 0..(1u128 << k) {
            let base = code.encode(&BitVec::from_index(k, m)).unwrap();
            let mut patterns: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
            for i in 0..n {
                for j in i + 1..n {
                    patterns.push(vec![i, j]);
                }
            }
            for pat in patterns {
                let mut w = base.clone();
                for &i in &pat {
                    w.flip(i);
                }
                let delta = code.relative_distance(&w).unwrap();
                if delta == 0.0 {
                    continue;
                }
                let reject = blr_reject_exact(&w);
                assert!(
                    reject >= params.kappa * delta - 1e-12,
                    "k={k} pattern {pat:?}: reject {reject} < κδ {}",
                    params.kappa * delta
                );
                measured_kappa = measured_kappa.min(reject / delta);
            }
        }
    }
    assert!(measured_kappa >= 0.25, "measured κ = {measured_kappa}");
}

#[test]
fn self_correction_bound_exhaustive_small_k() {
    // Pr[correct] ≥ 1 − 2δ for every word within relative distance 1/8,
    // every position, k ≤ 3.
    for k in 1..=3usize {
        let code = HadamardCode::new(k).unwrap();
        let n = code.n;
        let max_flips = n / 8;
        for m in 0..(1u128 << k) {
            let base = code.encode(&BitVec::from_index(k, m)).unwrap();
            let mut patterns: Vec<Vec<usize>> = vec![vec![]];
            if max_flips >= 1 {
                patterns.extend((0..n).map(|i| vec![i]));
            }
            for pat in patterns {
                let mut w = base.clone();
                for &i in &pat {
                    w.flip(i);
                }
                let delta = pat.len() as f64 / n as f64;
                for p in 0..n {
                    let hit = self_correct_hit_exact(&w, p, base.get(p));
                    assert!(
                        hit >= 1.0 - 2.0 * delta - 1e-12,
                        "k={k} pattern {pat:?} p={p}: hit {hit}"
                    );
                }
            }
        }
    }
}

fn codeword_superposition(code: &HadamardCode, amps: &[(u128, Complex64)]) -> Vec<Complex64> {
    let mut v = vec![c(0.0, 0.0); 1 << code.n];
    for &(m, a) in amps {
        let cw = code.encode(&BitVec::from_index(code.k, m)).unwrap();
        v[cw.to_index() as usize] = a;
    }
    v
}

#[test]
fn lift_decode_writes_message() {
    let code = HadamardCode::new(2).unwrap();
    let layout = RegisterLayout::new(&[("D", 2), ("R", 4)]).unwrap();
    for m in 0..4u128 {
        let mut st = SparseState::new(layout.clone());
        let vec = codeword_superposition(&code, &[(m, c(1.0, 0.0))]);
        st.load_register("R", &vec).unwrap();
        lift_decode(&mut st, &code, "D", "R").unwrap();
        assert_eq!(st.classical_register("D").unwrap(), BitVec::from_index(2, m));
        // Involution: applying it again clears D.
        lift_decode(&mut st, &code, "D", "R").unwrap();
        assert_eq!(st.classical_register("D").unwrap(), BitVec::zeros(2));
    }
}

#[test]
fn lift_blr_on_codeword_superposition_is_one() {
    let code = HadamardCode::new(2).unwrap();
    let layout = RegisterLayout::new(&[("L", 1), ("R", 4), ("T", 4)]).unwrap();
    let mut st = SparseState::new(layout);
    let half = c(0.5, 0.0);
    let vec = codeword_superposition(
        &code,
        &[(0, half), (1, half), (2, half), (3, half)],
    );
    st.load_register("R", &vec).unwrap();
    for q in st.layout().qubits("T").unwrap() {
        st.apply_unitary(&gates::h(), &[q]).unwrap();
    }
    lift_blr(&mut st, &code, "L", "R", "T").unwrap();
    assert_eq!(st.classical_register("L").unwrap(), BitVec::ones(1));
}

#[test]
fn liftings_are_involutions() {
    let code = HadamardCode::new(2).unwrap();
    let layout =
        RegisterLayout::new(&[("D", 2), ("L", 1), ("S", 1), ("R", 4), ("TL", 4), ("TS", 2)])
            .unwrap();
    let mut st = SparseState::new(layout);
    // A messy, non-codeword state on R plus superposed tapes.
    for q in st.layout().qubits("R").unwrap() {
        st.apply_unitary(&gates::h(), &[q]).unwrap();
    }
    st.apply_unitary(&gates::s(), &[st.layout().qubit("R", 1).unwrap()])
        .unwrap();
    for q in st.layout().qubits("TL").unwrap() {
        st.apply_unitary(&gates::h(), &[q]).unwrap();
    }
    for q in st.layout().qubits("TS").unwrap() {
        st.apply_unitary(&gates::h(), &[q]).unwrap();
    }
    let reference = st.clone();
    lift_decode(&mut st, &code, "D", "R").unwrap();
    lift_decode(&mut st, &code, "D", "R").unwrap();
    lift_blr(&mut st, &code, "L", "R", "TL").unwrap();
    lift_blr(&mut st, &code, "L", "R", "TL").unwrap();
    lift_selfcorrect(&mut st, &code, "S", "R", "TS", 3).unwrap();
    lift_selfcorrect(&mut st, &code, "S", "R", "TS", 3).unwrap();
    let overlap = reference.inner(&st);
    assert!((overlap - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn read_observable_on_codewords_is_deterministic() {
    let code = HadamardCode::new(2).unwrap();
    let layout = RegisterLayout::new(&[("S", 1), ("R", 4)]).unwrap();
    for m in 0..4u128 {
        let msg = BitVec::from_index(2, m);
        let cw = code.encode(&msg).unwrap();
        for p in 0..4 {
            for x in 0..4 {
                let mut st = SparseState::new(layout.clone());
                let vec = codeword_superposition(&code, &[(m, c(1.0, 0.0))]);
                st.load_register("R", &vec).unwrap();
                let ob = read_observable(&st, &code, "S", "R", p, x).unwrap();
                let branches = st.measure(&ob).unwrap();
                assert_eq!(branches.len(), 1, "m={m} p={p} x={x}");
                let expected = if cw.get(p) == 0 { 1.0 } else { -1.0 };
                assert!((branches[0].value - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn coherent_read_squares_to_identity() {
    // Õ_p = S_p† Z_S S_p on every computational basis state of
    // S(1) ⊗ R(4) ⊗ T(2): applying it twice must reproduce the input, which
    // is the matrix statement Õ_p² = I.
    let code = HadamardCode::new(2).unwrap();
    let layout = RegisterLayout::new(&[("S", 1), ("R", 4), ("T", 2)]).unwrap();
    for p in 0..4 {
        for label in 0..(1u128 << 7) {
            let mut st = SparseState::from_basis(layout.clone(), label);
            let reference = st.clone();
            apply_read_coherent(&mut st, &code, "S", "R", "T", p).unwrap();
            apply_read_coherent(&mut st, &code, "S", "R", "T", p).unwrap();
            assert!((reference.inner(&st) - c(1.0, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn coherent_and_classical_reads_agree_on_codewords() {
    // With the tape fixed classically the coherent conjugated form acts on
    // honest states exactly as the three-qubit Pauli observable.
    let code = HadamardCode::new(2).unwrap();
    let layout = RegisterLayout::new(&[("S", 1), ("R", 4), ("T", 2)]).unwrap();
    for m in 0..4u128 {
        for p in 0..4usize {
            for x in 0..4usize {
                let mut st = SparseState::new(layout.clone());
                let vec = codeword_superposition(&code, &[(m, c(1.0, 0.0))]);
                st.load_register("R", &vec).unwrap();
                // Put the classical tape value x into T.
                let t_vec: Vec<Complex64> = (0..4)
                    .map(|i| if i == x { c(1.0, 0.0) } else { c(0.0, 0.0) })
                    .collect();
                st.load_register("T", &t_vec).unwrap();
                let mut coherent = st.clone();
                apply_read_coherent(&mut coherent, &code, "S", "R", "T", p).unwrap();
                let mut classical = st.clone();
                let ob = read_observable(&classical.clone(), &code, "S", "R", p, x).unwrap();
                match ob {
                    qiop_core::qsim::Observable::Pauli { op, qubits } => {
                        classical.apply_pauli(&op, &qubits).unwrap();
                    }
                    _ => unreachable!(),
                }
                let overlap = coherent.inner(&classical);
                assert!(
                    (overlap - c(1.0, 0.0)).norm() < 1e-12,
                    "m={m} p={p} x={x}: {overlap}"
                );
            }
        }
    }
}

#[test]
fn read_observable_acts_as_phase_on_decoded_message() {
    // On a superposition of codewords Σ α_s |E(s)⟩, the self-corrected read
    // of position p applies the relative phase (−1)^{⟨g_p, s⟩}: a Z(g_p) on
    // the underlying message.
    let code = HadamardCode::new(2).unwrap();
    let layout = RegisterLayout::new(&[("S", 1), ("R", 4)]).unwrap();
    let amp = c(0.5, 0.0);
    for p in 0..4usize {
        for x in 0..4usize {
            let mut st = SparseState::new(layout.clone());
            let vec = codeword_superposition(
                &code,
                &[(0, amp), (1, amp), (2, amp), (3, amp)],
            );
            st.load_register("R", &vec).unwrap();
            let ob = read_observable(&st, &code, "S", "R", p, x).unwrap();
            match ob {
                qiop_core::qsim::Observable::Pauli { op, qubits } => {
                    st.apply_pauli(&op, &qubits).unwrap();
                }
                _ => unreachable!(),
            }
            // Expected: phases applied message-wise.
            let mut expected = SparseState::new(layout.clone());
            let mut v = vec![c(0.0, 0.0); 16];
            for m in 0..4u128 {
                let msg = BitVec::from_index(2, m);
                let cw = code.encode(&msg).unwrap();
                let g_p = BitVec::from_index(2, p as u128);
                let sign = if g_p.inner(&msg).unwrap() == 1 { -1.0 } else { 1.0 };
                v[cw.to_index() as usize] = amp * sign;
            }
            expected.load_register("R", &v).unwrap();
            let overlap = expected.inner(&st);
            assert!(
                (overlap - c(1.0, 0.0)).norm() < 1e-12,
                "p={p} x={x}: {overlap}"
            );
        }
    }
}
