use qiop_core::circuit::{BooleanCircuit, CircuitBuilder};
use qiop_core::f2::BitVec;
use qiop_core::ioc::{
    commit, composed_circuit, decode_commitment, respond, verify, IocParams, IocVerdict,
};
use qiop_core::pcpp::{PcppVerifier, QUERIES_PER_REPETITION};
use qiop_core::pcpp_exact::{cheat_corpus, exact_acceptance, monte_carlo_acceptance};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn parity2() -> BooleanCircuit {
    let mut b = CircuitBuilder::new(2);
    let o = b.xor(0, 1);
    b.finish(o)
}

fn first_bit(k: usize) -> BooleanCircuit {
    let mut b = CircuitBuilder::new(k);
    let copy = b.and(0, 0);
    b.finish(copy)
}

#[test]
fn commit_roundtrip_all_short_strings() {
    for k in 0..=3usize {
        for s_int in 0..(1u128 << k) {
            let s = BitVec::from_index(k, s_int);
            let m = commit(&s).unwrap();
            assert_eq!(decode_commitment(&m).unwrap(), s);
        }
    }
}

#[test]
fn respond_examples() {
    let const0 = {
        let mut b = CircuitBuilder::new(2);
        let o = b.const0();
        b.finish(o)
    };
    let s = BitVec::from_str01("10").unwrap();
    assert_eq!(respond(&s, &const0).unwrap().r, 0);
    assert_eq!(respond(&s, &parity2()).unwrap().r, 1);
    let s01 = BitVec::from_str01("01").unwrap();
    assert_eq!(respond(&s01, &first_bit(2)).unwrap().r, 0);
}

#[test]
fn honest_sessions_accept_with_probability_one() {
    // The analyzer reports per-repetition acceptance exactly 1, and the
    // live verifier accepts under several seeds with the pinned constant
    // query budget.
    let params = IocParams::default();
    assert_eq!(params.repetitions(), 135);
    for c in [parity2(), first_bit(2)] {
        for s_int in 0..4u128 {
            let s = BitVec::from_index(2, s_int);
            let m = commit(&s).unwrap();
            let resp = respond(&s, &c).unwrap();
            assert_eq!(resp.r, c.eval(&s).unwrap());

            let composed = composed_circuit(&c, resp.r).unwrap();
            let verifier = PcppVerifier::new(composed, params.pcpp_params()).unwrap();
            let z = verifier.circuit.wires(&m).unwrap();
            let fa = qiop_core::pcpp_exact::SideOracle::codeword(z.clone());
            let fb = qiop_core::pcpp_exact::SideOracle::codeword(z.tensor(&z));
            let acc = exact_acceptance(&verifier, &m, &fa, &fb).unwrap();
            assert_eq!(acc.repetition(), 1.0);

            for seed in [1u64, 2, 3] {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let m_fn = |p: usize| m.get(p);
                let out = verify(
                    &c,
                    &params,
                    &m_fn,
                    resp.r,
                    &resp.proof.fa_oracle(),
                    &resp.proof.fb_oracle(),
                    &mut rng,
                )
                .unwrap();
                assert_eq!(out.verdict, IocVerdict::Accept(resp.r));
                assert_eq!(out.queries, 1 + 135 * QUERIES_PER_REPETITION);
            }
        }
    }
}

/// Exhaustive binding sweep at k = 2. For every commitment word in the
/// grid, every claimed bit, and every cheat proof in the corpus, the
/// probability of the bad event Accept(r) with r ≠ C(D(m)) is at most ε.
/// Acceptance per repetition comes from the exact analyzer; repetitions
/// multiply because each uses fresh randomness.
#[test]
fn binding_holds_over_cheat_corpus() {
    let c = parity2();
    let params = IocParams::default();
    let reps = params.repetitions() as i32;

    let mut m_grid: Vec<(String, BitVec)> = Vec::new();
    for s_int in 0..4u128 {
        let s = BitVec::from_index(2, s_int);
        m_grid.push((format!("codeword-{s}"), commit(&s).unwrap()));
    }
    let mut corrupted = commit(&BitVec::from_str01("01").unwrap()).unwrap();
    corrupted.flip(0);
    m_grid.push(("one-flip".into(), corrupted));
    m_grid.push(("far".into(), BitVec::from_str01("1111").unwrap()));

    let mut worst_bad: f64 = 0.0;
    for (m_name, m) in &m_grid {
        let d_m = decode_commitment(m).unwrap();
        let c_of_dm = c.eval(&d_m).unwrap();
        for r in [0u8, 1] {
            let composed = composed_circuit(&c, r).unwrap();
            let verifier = PcppVerifier::new(composed, params.pcpp_params()).unwrap();
            let corpus = cheat_corpus(&verifier, m, 0xB1D, 20);
            assert_eq!(corpus.len(), 20);
            for case in &corpus {
                let acc = exact_acceptance(&verifier, m, &case.fa, &case.fb)
                    .unwrap_or_else(|| panic!("{m_name}/r={r}/{}: not analyzable", case.name));
                let p_rep = acc.repetition();
                let p_accept = p_rep.powi(reps);
                if r != c_of_dm {
                    assert!(
                        p_rep <= 1.0 - params.floor + 1e-12,
                        "{m_name}/r={r}/{}: repetition acceptance {p_rep}",
                        case.name
                    );
                    assert!(
                        p_accept <= params.epsilon,
                        "{m_name}/r={r}/{}: accept {p_accept}",
                        case.name
                    );
                    worst_bad = worst_bad.max(p_accept);
                }
                // A commitment far from every codeword is rejected no
                // matter which bit is claimed.
                if m_name == "far" {
                    assert!(p_accept <= params.epsilon, "far/{}: {p_accept}", case.name);
                }
            }
        }
    }
    assert!(worst_bad <= params.epsilon);
}

#[test]
fn lying_about_the_bit_with_an_honest_commitment_fails() {
    let c = parity2();
    let params = IocParams::default();
    let reps = params.repetitions() as i32;
    let s = BitVec::from_str01("10").unwrap();
    let m = commit(&s).unwrap();
    let r_lie = 1 ^ c.eval(&s).unwrap();
    let composed = composed_circuit(&c, r_lie).unwrap();
    let verifier = PcppVerifier::new(composed, params.pcpp_params()).unwrap();
    for case in cheat_corpus(&verifier, &m, 0x11E, 20) {
        let acc = exact_acceptance(&verifier, &m, &case.fa, &case.fb)
            .unwrap_or_else(|| panic!("{}: not analyzable", case.name));
        assert!(
            acc.repetition().powi(reps) <= params.epsilon,
            "{}: {}",
            case.name,
            acc.repetition().powi(reps)
        );
    }
}

#[test]
fn live_verifier_matches_analyzer_at_reduced_repetitions() {
    // Loose ε so the repetition count is small enough to sample the full
    // verification many times.
    let params = IocParams {
        epsilon: 0.75,
        ..IocParams::default()
    };
    let reps = params.repetitions();
    assert_eq!(reps, 6);
    let c = parity2();
    let s = BitVec::from_str01("10").unwrap();
    let m = commit(&s).unwrap();
    let r_lie = 0u8; // parity(10) = 1
    let composed = composed_circuit(&c, r_lie).unwrap();
    let verifier = PcppVerifier::new(composed, params.pcpp_params()).unwrap();
    let corpus = cheat_corpus(&verifier, &m, 7, 4);
    let case = &corpus[0]; // wires of m itself: output constraint violated
    let p_rep = exact_acceptance(&verifier, &m, &case.fa, &case.fb)
        .unwrap()
        .repetition();
    let expect = p_rep.powi(reps as i32);
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let trials = 4000;
    let sampled = monte_carlo_acceptance(&verifier, &m, &case.fa, &case.fb, trials, &mut rng);
    let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
    assert!(
        (sampled - expect).abs() <= 5.0 * sigma + 1e-9,
        "sampled {sampled}, exact {expect}"
    );
}
