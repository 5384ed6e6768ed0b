//! Exact acceptance analysis for the proximity verifier against structured
//! adversarial proofs, plus the cheat corpus used to measure soundness.
//!
//! The analyzable family is oracles of the form linear-word ⊕ constant ⊕
//! finite flip set. For these every test's acceptance probability has a
//! closed form:
//!
//! * linearity: with f = (−1)^{1_S}, E[f(x)f(y)f(x⊕y)] = Σ_s f̂(s)³, which
//!   collapses to counting flip pairs whose XOR is again a flip;
//! * self-corrected reads: the read at position p errs exactly when the
//!   randomness hits the flip set an odd number of times, probability
//!   2(σ − M(p))/N with M(p) = #{u ∈ S : u⊕p ∈ S};
//! * tensor consistency splits into a rank statement for clean pairs, a
//!   4×4 joint distribution when only fA carries flips, and a rank-one
//!   weighting of flip-pair XORs when only fB does;
//! * gate and input tests average the read-error probabilities over the
//!   verifier's remaining randomness.
//!
//! Anything outside the family (flips on both sides at once, explicit
//! tables) is answered with `None`; callers fall back to brute force or
//! Monte Carlo through the real verifier.

use crate::f2::{BitMatrix, BitVec};
use crate::pcpp::{PcppVerifier, VecOracle};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub enum SideOracle {
    Linear {
        dim: usize,
        w: BitVec,
        c: u8,
        flips: BTreeSet<BitVec>,
    },
    Explicit {
        dim: usize,
        bits: BitVec,
    },
}

impl VecOracle for SideOracle {
    fn dim(&self) -> usize {
        match self {
            SideOracle::Linear { dim, .. } => *dim,
            SideOracle::Explicit { dim, .. } => *dim,
        }
    }

    fn read(&self, pos: &BitVec) -> u8 {
        match self {
            SideOracle::Linear { w, c, flips, .. } => {
                w.inner(pos).expect("dimension") ^ c ^ u8::from(flips.contains(pos))
            }
            SideOracle::Explicit { bits, .. } => bits.get(pos.to_index() as usize),
        }
    }
}

impl SideOracle {
    /// The exact codeword of `w`.
    pub fn codeword(w: BitVec) -> Self {
        SideOracle::Linear {
            dim: w.len(),
            w,
            c: 0,
            flips: BTreeSet::new(),
        }
    }

    pub fn with_constant(mut self, bit: u8) -> Self {
        if let SideOracle::Linear { c, .. } = &mut self {
            *c = bit;
        }
        self
    }

    pub fn with_flips<I: IntoIterator<Item = BitVec>>(mut self, it: I) -> Self {
        if let SideOracle::Linear { flips, dim, .. } = &mut self {
            for f in it {
                assert_eq!(f.len(), *dim, "flip position dimension");
                flips.insert(f);
            }
        }
        self
    }
}

/// Exact per-test acceptance probabilities of a single repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct TestAcceptance {
    pub blr_a: f64,
    pub blr_b: f64,
    pub tensor: f64,
    pub gate: f64,
    pub input: f64,
}

impl TestAcceptance {
    pub fn repetition(&self) -> f64 {
        self.blr_a * self.blr_b * self.tensor * self.gate * self.input
    }

    pub fn overall(&self, repetitions: usize) -> f64 {
        self.repetition().powi(repetitions as i32)
    }
}

/// Pr over uniform (x, y) that 1_S(x) ⊕ 1_S(y) ⊕ 1_S(x⊕y) = 1.
fn flip_parity_odd(dim: usize, flips: &BTreeSet<BitVec>) -> f64 {
    let n = (dim as f64).exp2();
    let sigma = flips.len() as f64;
    let mut t3 = 0u64;
    for u in flips {
        for v in flips {
            if flips.contains(&u.xor(v).unwrap()) {
                t3 += 1;
            }
        }
    }
    3.0 * sigma / n - 6.0 * sigma * sigma / (n * n) + 4.0 * t3 as f64 / (n * n)
}

fn blr_accept_linear(dim: usize, c: u8, flips: &BTreeSet<BitVec>) -> f64 {
    let p_odd = flip_parity_odd(dim, flips);
    if c == 0 {
        1.0 - p_odd
    } else {
        p_odd
    }
}

/// M(p) = #{u ∈ S : u ⊕ p ∈ S}.
fn coincidences(flips: &BTreeSet<BitVec>, pos: &BitVec) -> usize {
    flips
        .iter()
        .filter(|u| flips.contains(&u.xor(pos).unwrap()))
        .count()
}

/// Error probability of the self-corrected read at `pos`.
fn read_error(dim: usize, flips: &BTreeSet<BitVec>, pos: &BitVec) -> f64 {
    let n = (dim as f64).exp2();
    2.0 * (flips.len() as f64 - coincidences(flips, pos) as f64) / n
}

/// Reshape a v²-vector into the v×v matrix W with W[i][j] = wb[i·v + j].
fn as_matrix(wb: &BitVec, v: usize) -> BitMatrix {
    let rows: Vec<BitVec> = (0..v).map(|i| wb.slice(i * v, v)).collect();
    BitMatrix::from_rows(rows).expect("uniform rows")
}

fn tensor_clean(wa: &BitVec, wb: &BitVec, v: usize) -> f64 {
    // Accept iff r1ᵀ (wa waᵀ ⊕ W) r2 = 0: probability (1 + 2^{−rank}) / 2.
    let mut rows = Vec::with_capacity(v);
    for i in 0..v {
        let mut row = wb.slice(i * v, v);
        if wa.get(i) == 1 {
            row = row.xor(wa).unwrap();
        }
        rows.push(row);
    }
    let rank = BitMatrix::from_rows(rows).expect("uniform rows").rank();
    0.5 * (1.0 + (-(rank as f64)).exp2())
}

fn tensor_flips_on_a(wa: &BitVec, flips: &BTreeSet<BitVec>, v: usize) -> f64 {
    // Joint law of one self-corrected read: α = ⟨wa, r⟩, e = error event.
    // Pr[α = a, e = 1] = σ/N − 2·P_a/N² with P_a = #{(u,u′) ∈ S²: ⟨wa,u⊕u′⟩ = a}.
    let n = (v as f64).exp2();
    let sigma = flips.len() as f64;
    let mut p = [0u64; 2];
    for u in flips {
        for u2 in flips {
            let a = wa.inner(&u.xor(u2).unwrap()).unwrap();
            p[a as usize] += 1;
        }
    }
    let mut q = [[0.0f64; 2]; 2]; // q[a][e]
    for a in 0..2 {
        q[a][1] = sigma / n - 2.0 * p[a] as f64 / (n * n);
        q[a][0] = 0.5 - q[a][1];
    }
    let mut accept = 0.0;
    for a1 in 0..2u8 {
        for e1 in 0..2u8 {
            for a2 in 0..2u8 {
                for e2 in 0..2u8 {
                    if ((a1 ^ e1) & (a2 ^ e2)) == (a1 & a2) {
                        accept += q[a1 as usize][e1 as usize] * q[a2 as usize][e2 as usize];
                    }
                }
            }
        }
    }
    accept
}

fn tensor_flips_on_b(flips_b: &BTreeSet<BitVec>, v: usize) -> f64 {
    // B's linear part matches A's product exactly, so accept iff the fB
    // read does not err at position r1⊗r2. E[M_B] weights flip-pair XORs
    // by Pr[r1⊗r2 = D]: (2^{v+1}−1)/4^v at D = 0, 4^{−v} at rank-one D.
    let nb = ((v * v) as f64).exp2();
    let four_v = (2.0f64 * v as f64).exp2();
    let w_zero = ((v as f64 + 1.0).exp2() - 1.0) / four_v;
    let w_rank1 = 1.0 / four_v;
    let sigma = flips_b.len() as f64;
    let mut expected_m = 0.0;
    for u in flips_b {
        for u2 in flips_b {
            let d = u.xor(u2).unwrap();
            if d.is_zero() {
                expected_m += w_zero;
            } else if as_matrix(&d, v).rank() == 1 {
                expected_m += w_rank1;
            }
        }
    }
    1.0 - 2.0 * (sigma - expected_m) / nb
}

const GATE_ENUM_CAP: usize = 20;

/// Exact single-repetition acceptance for linear-family proof oracles, or
/// None when the pair falls outside the analyzable family.
pub fn exact_acceptance(
    verifier: &PcppVerifier,
    y: &BitVec,
    fa: &SideOracle,
    fb: &SideOracle,
) -> Option<TestAcceptance> {
    let v = verifier.v;
    let (wa, ca, flips_a) = match fa {
        SideOracle::Linear { dim, w, c, flips } if *dim == v => (w, *c, flips),
        _ => return None,
    };
    let (wb, cb, flips_b) = match fb {
        SideOracle::Linear { dim, w, c, flips } if *dim == v * v => (w, *c, flips),
        _ => return None,
    };

    let blr_a = blr_accept_linear(v, ca, flips_a);
    let blr_b = blr_accept_linear(v * v, cb, flips_b);

    let honest_tensor = *wb == wa.tensor(wa);
    let tensor = if flips_a.is_empty() && flips_b.is_empty() {
        tensor_clean(wa, wb, v)
    } else if flips_b.is_empty() && honest_tensor && !wa.is_zero() {
        tensor_flips_on_a(wa, flips_a, v)
    } else if flips_a.is_empty() && honest_tensor {
        tensor_flips_on_b(flips_b, v)
    } else {
        return None;
    };

    // Violation pattern of the random gate combination: ⟨t, α⟩.
    let constraints = verifier.constraints();
    let quad_vecs = verifier.quad_vecs();
    let m_c = constraints.len();
    let mut t = BitVec::zeros(m_c);
    for g in 0..m_c {
        let bit = wa.inner(&constraints[g].lin).unwrap()
            ^ wb.inner(&quad_vecs[g]).unwrap()
            ^ constraints[g].cst;
        t.set(g, bit);
    }
    let gate = if flips_a.is_empty() && flips_b.is_empty() {
        if t.is_zero() {
            1.0
        } else {
            0.5
        }
    } else if m_c <= GATE_ENUM_CAP {
        let mut acc = 0.0;
        for alpha_int in 0..(1u64 << m_c) {
            let alpha = BitVec::from_index(m_c, alpha_int as u128);
            let vio = t.inner(&alpha).unwrap();
            let eps = if !flips_a.is_empty() {
                let mut l = BitVec::zeros(v);
                for g in 0..m_c {
                    if alpha.get(g) == 1 {
                        l = l.xor(&constraints[g].lin).unwrap();
                    }
                }
                read_error(v, flips_a, &l)
            } else {
                let mut q = BitVec::zeros(v * v);
                for g in 0..m_c {
                    if alpha.get(g) == 1 {
                        q = q.xor(&quad_vecs[g]).unwrap();
                    }
                }
                read_error(v * v, flips_b, &q)
            };
            acc += if vio == 0 { 1.0 - eps } else { eps };
        }
        acc / (1u64 << m_c) as f64
    } else {
        return None;
    };

    let inputs = verifier.circuit.inputs;
    let input = if inputs == 0 {
        1.0
    } else {
        let mut acc = 0.0;
        for p in 0..inputs {
            let eps = read_error(v, flips_a, &BitVec::unit(v, p));
            let matches = y.get(p) == wa.get(p);
            acc += if matches { 1.0 - eps } else { eps };
        }
        acc / inputs as f64
    };

    Some(TestAcceptance {
        blr_a,
        blr_b,
        tensor,
        gate,
        input,
    })
}

/// Distribution of the self-corrected read at each position, by full
/// enumeration of the correction randomness. Table index is the position
/// as an integer; entry is Pr[read = 1].
fn sc_table(oracle: &dyn VecOracle) -> Vec<f64> {
    let dim = oracle.dim();
    let n = 1usize << dim;
    let words: Vec<u8> = (0..n)
        .map(|i| oracle.read(&BitVec::from_index(dim, i as u128)))
        .collect();
    (0..n)
        .map(|p| {
            let ones = (0..n).filter(|&x| words[x] ^ words[x ^ p] == 1).count();
            ones as f64 / n as f64
        })
        .collect()
}

/// Exact single-repetition acceptance by exhaustive enumeration of all
/// verifier randomness; usable only for tiny wire counts (the fB side is
/// enumerated over 4^{v²} pairs).
pub fn exact_acceptance_bruteforce(
    verifier: &PcppVerifier,
    y: &BitVec,
    fa: &dyn VecOracle,
    fb: &dyn VecOracle,
) -> TestAcceptance {
    let v = verifier.v;
    assert!(v <= 3, "brute-force analysis is caged to v ≤ 3");
    let (na, nb) = (1usize << v, 1usize << (v * v));
    let worda: Vec<u8> = (0..na)
        .map(|i| fa.read(&BitVec::from_index(v, i as u128)))
        .collect();
    let wordb: Vec<u8> = (0..nb)
        .map(|i| fb.read(&BitVec::from_index(v * v, i as u128)))
        .collect();

    let blr = |word: &[u8]| {
        let n = word.len();
        let mut ok = 0usize;
        for x in 0..n {
            for yy in 0..n {
                if word[x] ^ word[yy] == word[x ^ yy] {
                    ok += 1;
                }
            }
        }
        ok as f64 / (n * n) as f64
    };
    let blr_a = blr(&worda);
    let blr_b = blr(&wordb);

    let qa = sc_table(fa);
    let qb = sc_table(fb);

    let mut tensor = 0.0;
    for r1 in 0..na {
        for r2 in 0..na {
            let rb = BitVec::from_index(v, r1 as u128)
                .tensor(&BitVec::from_index(v, r2 as u128))
                .to_index() as usize;
            for a1 in 0..2u8 {
                for a2 in 0..2u8 {
                    let b = a1 & a2;
                    let pa1 = if a1 == 1 { qa[r1] } else { 1.0 - qa[r1] };
                    let pa2 = if a2 == 1 { qa[r2] } else { 1.0 - qa[r2] };
                    let pb = if b == 1 { qb[rb] } else { 1.0 - qb[rb] };
                    tensor += pa1 * pa2 * pb;
                }
            }
        }
    }
    tensor /= (na * na) as f64;

    let constraints = verifier.constraints();
    let quad_vecs = verifier.quad_vecs();
    let m_c = constraints.len();
    let mut gate = 0.0;
    for alpha_int in 0..(1u64 << m_c) {
        let alpha = BitVec::from_index(m_c, alpha_int as u128);
        let mut l = BitVec::zeros(v);
        let mut q = BitVec::zeros(v * v);
        let mut cst = 0u8;
        for g in 0..m_c {
            if alpha.get(g) == 1 {
                l = l.xor(&constraints[g].lin).unwrap();
                q = q.xor(&quad_vecs[g]).unwrap();
                cst ^= constraints[g].cst;
            }
        }
        let (li, qi) = (l.to_index() as usize, q.to_index() as usize);
        for a in 0..2u8 {
            let pa = if a == 1 { qa[li] } else { 1.0 - qa[li] };
            let b = a ^ cst;
            let pb = if b == 1 { qb[qi] } else { 1.0 - qb[qi] };
            gate += pa * pb;
        }
    }
    gate /= (1u64 << m_c) as f64;

    let inputs = verifier.circuit.inputs;
    let input = if inputs == 0 {
        1.0
    } else {
        let mut acc = 0.0;
        for p in 0..inputs {
            let e = BitVec::unit(v, p).to_index() as usize;
            let p1 = qa[e];
            acc += if y.get(p) == 1 { p1 } else { 1.0 - p1 };
        }
        acc / inputs as f64
    };

    TestAcceptance {
        blr_a,
        blr_b,
        tensor,
        gate,
        input,
    }
}

#[derive(Debug, Clone)]
pub struct CheatCase {
    pub name: String,
    pub fa: SideOracle,
    pub fb: SideOracle,
}

fn consistent_pair(z: &BitVec) -> (SideOracle, SideOracle) {
    (
        SideOracle::codeword(z.clone()),
        SideOracle::codeword(z.tensor(z)),
    )
}

fn random_positions(rng: &mut ChaCha20Rng, dim: usize, count: usize) -> BTreeSet<BitVec> {
    let mut set = BTreeSet::new();
    while set.len() < count {
        set.insert(crate::pcpp::random_bitvec(rng, dim));
    }
    set
}

/// A deterministic family of structured cheating proofs for the given
/// circuit. Every member stays inside the exactly analyzable family.
pub fn cheat_corpus(
    verifier: &PcppVerifier,
    y: &BitVec,
    seed: u64,
    count: usize,
) -> Vec<CheatCase> {
    use rand::SeedableRng as _;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let circuit = &verifier.circuit;
    let v = verifier.v;
    let n = 1usize << v;
    let mut out: Vec<CheatCase> = Vec::new();

    // The assignment actually induced by the (non-member) input: wiring and
    // input tests pass, the output constraint is violated.
    let z_bad = circuit.wires(y).expect("input length");
    let (fa, fb) = consistent_pair(&z_bad);
    out.push(CheatCase {
        name: "wires-of-given-input".into(),
        fa,
        fb,
    });

    // Honest encodings of satisfying inputs (input test must catch the
    // mismatch with y).
    if circuit.inputs <= 16 {
        for yi in 0..(1u128 << circuit.inputs) {
            let cand = BitVec::from_index(circuit.inputs, yi);
            if circuit.eval(&cand).unwrap() == 1 {
                let z = circuit.wires(&cand).unwrap();
                let (fa, fb) = consistent_pair(&z);
                out.push(CheatCase {
                    name: format!("satisfying-input-{cand}"),
                    fa,
                    fb,
                });
                if out.len() > count / 4 {
                    break;
                }
            }
        }
    }

    // Constant tables.
    let zero = BitVec::zeros(v);
    out.push(CheatCase {
        name: "all-zero-tables".into(),
        fa: SideOracle::codeword(zero.clone()),
        fb: SideOracle::codeword(zero.tensor(&zero)),
    });
    out.push(CheatCase {
        name: "all-ones-fa".into(),
        fa: SideOracle::codeword(zero.clone()).with_constant(1),
        fb: SideOracle::codeword(zero.tensor(&zero)),
    });
    out.push(CheatCase {
        name: "complemented-honest-fa".into(),
        fa: SideOracle::codeword(z_bad.clone()).with_constant(1),
        fb: SideOracle::codeword(z_bad.tensor(&z_bad)),
    });

    // Random assignments, honest tensor structure.
    while out.len() < count * 2 / 5 {
        let z = crate::pcpp::random_bitvec(&mut rng, v);
        let (fa, fb) = consistent_pair(&z);
        out.push(CheatCase {
            name: format!("random-assignment-{}", out.len()),
            fa,
            fb,
        });
    }

    // Mismatched tensors: fB encodes a different assignment's square, or an
    // arbitrary bilinear form.
    for i in 0..count / 10 {
        let z1 = crate::pcpp::random_bitvec(&mut rng, v);
        let mut z2 = crate::pcpp::random_bitvec(&mut rng, v);
        if z2 == z1 {
            z2.flip(0);
        }
        out.push(CheatCase {
            name: format!("mismatched-square-{i}"),
            fa: SideOracle::codeword(z1),
            fb: SideOracle::codeword(z2.tensor(&z2)),
        });
    }
    for i in 0..count / 10 {
        let z = crate::pcpp::random_bitvec(&mut rng, v);
        let wb = crate::pcpp::random_bitvec(&mut rng, v * v);
        out.push(CheatCase {
            name: format!("arbitrary-bilinear-{i}"),
            fa: SideOracle::codeword(z),
            fb: SideOracle::Linear {
                dim: v * v,
                w: wb,
                c: 0,
                flips: BTreeSet::new(),
            },
        });
    }

    // Flip cheats on fA over a base that passes the input test, at several
    // corruption sizes up to a quarter of the block.
    let sizes = [1usize, 2, n / 16, n / 8, n / 4];
    while out.len() < count - count / 10 {
        for &s in &sizes {
            if s == 0 || out.len() >= count - count / 10 {
                continue;
            }
            let mut base = z_bad.clone();
            if base.is_zero() {
                base.flip(v - 1);
            }
            let flips = random_positions(&mut rng, v, s);
            out.push(CheatCase {
                name: format!("fa-flips-{s}-{}", out.len()),
                fa: SideOracle::codeword(base.clone()).with_flips(flips),
                fb: SideOracle::codeword(base.tensor(&base)),
            });
        }
    }

    // Flip cheats on fB.
    let mut i = 0usize;
    while out.len() < count {
        let sizes_b = [1usize, 4, 16];
        let s = sizes_b[i % sizes_b.len()];
        i += 1;
        let z = crate::pcpp::random_bitvec(&mut rng, v);
        let flips = random_positions(&mut rng, v * v, s);
        out.push(CheatCase {
            name: format!("fb-flips-{s}-{i}"),
            fa: SideOracle::codeword(z.clone()),
            fb: SideOracle::codeword(z.tensor(&z)).with_flips(flips),
        });
    }

    out.truncate(count);
    out
}

/// Monte Carlo acceptance of a cheat through the real verifier, for
/// cross-checking the analyzer.
pub fn monte_carlo_acceptance<R: Rng>(
    verifier: &PcppVerifier,
    y: &BitVec,
    fa: &SideOracle,
    fb: &SideOracle,
    trials: usize,
    rng: &mut R,
) -> f64 {
    let y_fn = |p: usize| y.get(p);
    let mut accepts = 0usize;
    for _ in 0..trials {
        let t = verifier.verify(&y_fn, fa, fb, rng);
        accepts += t.verdict as usize;
    }
    accepts as f64 / trials as f64
}
