//! Interactive oracle commitment. The prover commits to a string s by
//! sending its Hadamard encoding m = E(s); on receiving a circuit C it
//! answers with the bit r = C(s) and a proximity proof that the committed
//! word encodes some s' with C(s') = r. The verifier checks the proof with
//! a constant number of oracle queries into m and the proof tables.
//!
//! The proof is a PCPP for the composed circuit
//!
//!     X(t) = (C(D~(t)) ⊕ r ⊕ 1) ∧ T(t)
//!
//! over the 2^k commitment bits, where D~ reads the message off the
//! singleton-weight positions and T checks that t is a codeword (position
//! 0 reads 0 and every higher-weight position equals the XOR of its
//! singleton positions). X(t) = 1 exactly when t = E(s') for some s' with
//! C(s') = r, so proximity of m to X's satisfying set is proximity to a
//! consistent commitment.

use crate::circuit::{BooleanCircuit, CircuitBuilder, CircuitError};
use crate::f2::BitVec;
use crate::hadcode::{HadamardCode, HadError};
use crate::pcpp::{
    prove, PcppError, PcppParams, PcppProof, PcppTranscript, PcppVerifier, VecOracle,
};
use rand::Rng;
use serde::Serialize;
use std::fmt;

/// Largest committed-string length: the commitment itself is 2^k bits.
pub const CODE_CAP: usize = 10;

#[derive(Debug)]
pub enum IocError {
    TooLarge { k: usize, cap: usize },
    Circuit(CircuitError),
    Code(HadError),
    Pcpp(PcppError),
    ArityMismatch { circuit: usize, string: usize },
    BadCommitmentLength { len: usize },
}

impl fmt::Display for IocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IocError::TooLarge { k, cap } => write!(f, "string length {k} exceeds cap {cap}"),
            IocError::Circuit(e) => write!(f, "circuit: {e}"),
            IocError::Code(e) => write!(f, "code: {e}"),
            IocError::Pcpp(e) => write!(f, "proof system: {e}"),
            IocError::ArityMismatch { circuit, string } => {
                write!(f, "circuit expects {circuit} inputs, committed string has {string}")
            }
            IocError::BadCommitmentLength { len } => {
                write!(f, "commitment length {len} is not a power of two within cap")
            }
        }
    }
}

impl std::error::Error for IocError {}

impl From<CircuitError> for IocError {
    fn from(e: CircuitError) -> Self {
        IocError::Circuit(e)
    }
}

impl From<HadError> for IocError {
    fn from(e: HadError) -> Self {
        IocError::Code(e)
    }
}

impl From<PcppError> for IocError {
    fn from(e: PcppError) -> Self {
        IocError::Pcpp(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IocParams {
    /// Target probability of accepting a binding violation.
    pub epsilon: f64,
    /// Proximity radius the proof system is run at.
    pub delta: f64,
    /// Measured single-repetition rejection floor of the proof system at
    /// that radius; repetitions are chosen from it.
    pub floor: f64,
}

impl Default for IocParams {
    fn default() -> Self {
        IocParams {
            epsilon: 0.001,
            delta: 0.25,
            floor: 0.05,
        }
    }
}

impl IocParams {
    /// Smallest repetition count with (1 - floor)^reps ≤ epsilon.
    pub fn repetitions(&self) -> usize {
        assert!(self.epsilon > 0.0 && self.epsilon < 1.0);
        assert!(self.floor > 0.0 && self.floor < 1.0);
        (self.epsilon.ln() / (1.0 - self.floor).ln()).ceil() as usize
    }

    pub fn pcpp_params(&self) -> PcppParams {
        PcppParams {
            repetitions: self.repetitions(),
            delta: self.delta,
            soundness: self.epsilon,
        }
    }
}

/// First message: the Hadamard encoding of the committed string.
pub fn commit(s: &BitVec) -> Result<BitVec, IocError> {
    if s.len() > CODE_CAP {
        return Err(IocError::TooLarge {
            k: s.len(),
            cap: CODE_CAP,
        });
    }
    let code = HadamardCode::new(s.len())?;
    Ok(code.encode(s)?)
}

/// The fixed decoder D: nearest codeword, smallest message on ties.
pub fn decode_commitment(m: &BitVec) -> Result<BitVec, IocError> {
    let len = m.len();
    if !len.is_power_of_two() {
        return Err(IocError::BadCommitmentLength { len });
    }
    let k = len.trailing_zeros() as usize;
    if k > CODE_CAP {
        return Err(IocError::TooLarge { k, cap: CODE_CAP });
    }
    let code = HadamardCode::new(k)?;
    Ok(code.decode(m)?)
}

/// X(t) = (C(D~(t)) ⊕ r ⊕ 1) ∧ T(t) over the 2^k commitment bits.
pub fn composed_circuit(c: &BooleanCircuit, r: u8) -> Result<BooleanCircuit, IocError> {
    c.validate()?;
    let k = c.inputs;
    if k > CODE_CAP {
        return Err(IocError::TooLarge { k, cap: CODE_CAP });
    }
    let n = 1usize << k;
    let msg_pos = |i: usize| 1usize << (k - 1 - i);
    let mut b = CircuitBuilder::new(n);

    // T(t): the zero position reads 0 ...
    let mut t_all = b.not(0);
    // ... and each multi-bit position agrees with the XOR of its
    // singleton positions. (Weight-1 positions define the message.)
    for x in 1..n {
        if x.count_ones() < 2 {
            continue;
        }
        let mut acc: Option<usize> = None;
        for i in 0..k {
            if (x >> (k - 1 - i)) & 1 == 1 {
                let w = msg_pos(i);
                acc = Some(match acc {
                    None => w,
                    Some(a) => b.xor(a, w),
                });
            }
        }
        let check = b.eq(acc.expect("weight ≥ 2"), x);
        t_all = b.and(t_all, check);
    }

    let msg_wires: Vec<usize> = (0..k).map(msg_pos).collect();
    let c_out = b.embed(c, &msg_wires);
    // c_out ⊕ r ⊕ 1
    let agree = if r == 1 { c_out } else { b.not(c_out) };
    let out = b.and(agree, t_all);
    Ok(b.finish(out))
}

#[derive(Debug, Clone)]
pub struct IocResponse {
    pub r: u8,
    pub proof: PcppProof,
}

/// Honest prover: evaluates the circuit on the committed string and proves
/// the composed circuit on the commitment.
pub fn respond(s: &BitVec, c: &BooleanCircuit) -> Result<IocResponse, IocError> {
    if c.inputs != s.len() {
        return Err(IocError::ArityMismatch {
            circuit: c.inputs,
            string: s.len(),
        });
    }
    let m = commit(s)?;
    let r = c.eval(s)?;
    let composed = composed_circuit(c, r)?;
    let proof = prove(&composed, &m)?;
    Ok(IocResponse { r, proof })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IocVerdict {
    Accept(u8),
    Reject,
}

#[derive(Debug)]
pub struct IocOutcome {
    pub verdict: IocVerdict,
    /// Total oracle bits read: the claimed r plus every proof-system query.
    pub queries: usize,
    pub transcript: PcppTranscript,
}

/// Constant-query verification: run the proof system on the composed
/// circuit with the commitment as implicit input.
pub fn verify<R: Rng>(
    c: &BooleanCircuit,
    params: &IocParams,
    m: &dyn Fn(usize) -> u8,
    r: u8,
    fa: &dyn VecOracle,
    fb: &dyn VecOracle,
    rng: &mut R,
) -> Result<IocOutcome, IocError> {
    let composed = composed_circuit(c, r)?;
    let verifier = PcppVerifier::new(composed, params.pcpp_params())?;
    let transcript = verifier.verify(m, fa, fb, rng);
    let verdict = if transcript.verdict {
        IocVerdict::Accept(r)
    } else {
        IocVerdict::Reject
    };
    Ok(IocOutcome {
        verdict,
        queries: 1 + transcript.queries.len(),
        transcript,
    })
}

/// Session transcript mirrored to JSON.
#[derive(Debug, Serialize)]
pub struct IocTranscript {
    pub m: String,
    pub circuit: BooleanCircuit,
    pub r: u8,
    pub verdict: IocVerdict,
    pub queries: usize,
}

impl IocTranscript {
    pub fn new(m: &BitVec, c: &BooleanCircuit, r: u8, outcome: &IocOutcome) -> Self {
        IocTranscript {
            m: m.to_string(),
            circuit: c.clone(),
            r,
            verdict: outcome.verdict,
            queries: outcome.queries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn commit_examples() {
        assert_eq!(
            commit(&BitVec::from_str01("00").unwrap()).unwrap(),
            BitVec::from_str01("0000").unwrap()
        );
        assert_eq!(
            commit(&BitVec::from_str01("10").unwrap()).unwrap(),
            BitVec::from_str01("0011").unwrap()
        );
    }

    #[test]
    fn composed_circuit_accepts_exactly_consistent_codewords() {
        // k = 2, C = parity: X(t) = 1 iff t = E(s) and parity(s) = r.
        let mut b = CircuitBuilder::new(2);
        let o = b.xor(0, 1);
        let c = b.finish(o);
        for r in [0u8, 1] {
            let x = composed_circuit(&c, r).unwrap();
            for t_int in 0..16u128 {
                let t = BitVec::from_index(4, t_int);
                let expected = match decode_commitment(&t) {
                    Ok(s) if commit(&s).unwrap() == t => {
                        u8::from(c.eval(&s).unwrap() == r)
                    }
                    _ => 0,
                };
                assert_eq!(x.eval(&t).unwrap(), expected, "t = {t}, r = {r}");
            }
        }
    }

    #[test]
    fn honest_session_accepts() {
        let mut b = CircuitBuilder::new(2);
        let o = b.xor(0, 1);
        let c = b.finish(o);
        let s = BitVec::from_str01("10").unwrap();
        let m = commit(&s).unwrap();
        let resp = respond(&s, &c).unwrap();
        assert_eq!(resp.r, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m_fn = |p: usize| m.get(p);
        let out = verify(
            &c,
            &IocParams::default(),
            &m_fn,
            resp.r,
            &resp.proof.fa_oracle(),
            &resp.proof.fb_oracle(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.verdict, IocVerdict::Accept(1));
    }
}
