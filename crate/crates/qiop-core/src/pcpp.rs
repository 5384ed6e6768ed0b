//! A constant-query PCP of proximity for circuit satisfaction at desk scale.
//!
//! The proof is the Hadamard encoding fA of the full wire assignment z plus
//! the Hadamard encoding fB of z⊗z. The verifier runs, per repetition and
//! with fresh randomness: linearity tests on both tables, a tensor
//! consistency test tying fB to fA, a random GF(2) combination of all gate
//! constraints evaluated through self-corrected reads, and an input
//! consistency test against the implicit-input oracle. All reads from fA/fB
//! outside the linearity tests are self-corrected.
//!
//! Positions of fA live in F_2^v and positions of fB in F_2^{v²}, addressed
//! as bit vectors since 2^{v²} overflows any integer type long before v
//! reaches interesting sizes. fB is stored explicitly only for tiny v;
//! otherwise it is served on demand from the dual vector z⊗z.

use crate::circuit::{BooleanCircuit, CircuitError, Constraint};
use crate::f2::BitVec;
use crate::hadcode::HadamardCode;
use rand::Rng;
use serde::Serialize;
use std::fmt;

/// Message-length cap for the explicit fA table (2^v bits).
pub const FA_CAP: usize = 20;
/// Wire-count cap for storing fB explicitly (2^{v²} bits).
pub const FB_EXPLICIT_CAP: usize = 4;
/// Queries per repetition: 3 + 3 linearity, 6 tensor, 4 gate, 3 input.
pub const QUERIES_PER_REPETITION: usize = 19;

#[derive(Debug, Clone, PartialEq)]
pub enum PcppError {
    Unsatisfiable,
    TooLarge { wires: usize, cap: usize },
    Circuit(CircuitError),
}

impl fmt::Display for PcppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcppError::Unsatisfiable => write!(f, "circuit is not satisfied by the given input"),
            PcppError::TooLarge { wires, cap } => {
                write!(f, "wire count {wires} exceeds proof-size cap {cap}")
            }
            PcppError::Circuit(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PcppError {}

impl From<CircuitError> for PcppError {
    fn from(e: CircuitError) -> Self {
        PcppError::Circuit(e)
    }
}

/// Read access to a word indexed by F_2^dim points.
pub trait VecOracle {
    fn dim(&self) -> usize;
    fn read(&self, pos: &BitVec) -> u8;
}

/// An explicit word of length 2^dim.
pub struct ExplicitWord<'a> {
    pub dim: usize,
    pub bits: &'a BitVec,
}

impl VecOracle for ExplicitWord<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn read(&self, pos: &BitVec) -> u8 {
        self.bits.get(pos.to_index() as usize)
    }
}

/// The codeword of `dual` served on demand: position m reads ⟨m, dual⟩.
pub struct LinearWord<'a> {
    pub dual: &'a BitVec,
}

impl VecOracle for LinearWord<'_> {
    fn dim(&self) -> usize {
        self.dual.len()
    }
    fn read(&self, pos: &BitVec) -> u8 {
        pos.inner(self.dual).expect("dimension checked by caller")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcppParams {
    pub repetitions: usize,
    /// Proximity parameter: inputs this far from every satisfying one must
    /// be caught.
    pub delta: f64,
    /// Soundness error target at the configured repetitions.
    pub soundness: f64,
}

impl Default for PcppParams {
    fn default() -> Self {
        PcppParams {
            repetitions: 12,
            delta: 0.1,
            soundness: 0.5,
        }
    }
}

/// Honest proof: fA always explicit, fB explicit only for tiny circuits.
#[derive(Debug, Clone)]
pub struct PcppProof {
    pub v: usize,
    pub fa: BitVec,
    pub dual: BitVec,
    pub fb_explicit: Option<BitVec>,
}

impl PcppProof {
    pub fn fa_oracle(&self) -> ExplicitWord<'_> {
        ExplicitWord {
            dim: self.v,
            bits: &self.fa,
        }
    }

    pub fn fb_oracle(&self) -> LinearWord<'_> {
        LinearWord { dual: &self.dual }
    }
}

/// Builds the honest proof for (C, y) with C(y) = 1.
pub fn prove(circuit: &BooleanCircuit, y: &BitVec) -> Result<PcppProof, PcppError> {
    circuit.validate()?;
    let v = circuit.num_wires();
    if v > FA_CAP {
        return Err(PcppError::TooLarge { wires: v, cap: FA_CAP });
    }
    let z = circuit.wires(y)?;
    if z.get(circuit.output) != 1 {
        return Err(PcppError::Unsatisfiable);
    }
    let code = HadamardCode::new(v).expect("v within cap");
    let fa = code.encode(&z).expect("length v");
    let dual = z.tensor(&z);
    let fb_explicit = if v <= FB_EXPLICIT_CAP {
        let fb_code = HadamardCode::new(v * v).expect("v² within cap");
        Some(fb_code.encode(&dual).expect("length v²"))
    } else {
        None
    };
    Ok(PcppProof {
        v,
        fa,
        dual,
        fb_explicit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryRecord {
    pub oracle: String,
    pub pos: String,
    pub bit: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct PcppTranscript {
    pub queries: Vec<QueryRecord>,
    pub randomness: Vec<serde_json::Value>,
    pub verdict: bool,
}

/// Oracle bundle with optional query logging.
pub struct Reader<'a> {
    pub y: &'a dyn Fn(usize) -> u8,
    pub fa: &'a dyn VecOracle,
    pub fb: &'a dyn VecOracle,
    log: Option<Vec<QueryRecord>>,
}

impl<'a> Reader<'a> {
    pub fn new(y: &'a dyn Fn(usize) -> u8, fa: &'a dyn VecOracle, fb: &'a dyn VecOracle) -> Self {
        Reader {
            y,
            fa,
            fb,
            log: None,
        }
    }

    pub fn logged(
        y: &'a dyn Fn(usize) -> u8,
        fa: &'a dyn VecOracle,
        fb: &'a dyn VecOracle,
    ) -> Self {
        Reader {
            y,
            fa,
            fb,
            log: Some(Vec::new()),
        }
    }

    fn read_y(&mut self, p: usize) -> u8 {
        let bit = (self.y)(p);
        if let Some(log) = &mut self.log {
            log.push(QueryRecord {
                oracle: "y".into(),
                pos: p.to_string(),
                bit,
            });
        }
        bit
    }

    fn read_fa(&mut self, pos: &BitVec) -> u8 {
        let bit = self.fa.read(pos);
        if let Some(log) = &mut self.log {
            log.push(QueryRecord {
                oracle: "fA".into(),
                pos: pos.to_string(),
                bit,
            });
        }
        bit
    }

    fn read_fb(&mut self, pos: &BitVec) -> u8 {
        let bit = self.fb.read(pos);
        if let Some(log) = &mut self.log {
            log.push(QueryRecord {
                oracle: "fB".into(),
                pos: pos.to_string(),
                bit,
            });
        }
        bit
    }

    pub fn take_log(&mut self) -> Vec<QueryRecord> {
        self.log.take().unwrap_or_default()
    }

    /// Self-corrected read of `pos` with fresh randomness `x`.
    fn corrected_fa(&mut self, pos: &BitVec, x: &BitVec) -> u8 {
        self.read_fa(x) ^ self.read_fa(&x.xor(pos).expect("dim"))
    }

    fn corrected_fb(&mut self, pos: &BitVec, x: &BitVec) -> u8 {
        self.read_fb(x) ^ self.read_fb(&x.xor(pos).expect("dim"))
    }
}

/// Per-repetition verifier randomness; fields mirror the tests.
#[derive(Debug, Clone)]
pub struct RepRandomness {
    pub blr_a: (BitVec, BitVec),
    pub blr_b: (BitVec, BitVec),
    pub tensor_r1: BitVec,
    pub tensor_r2: BitVec,
    pub tensor_xa1: BitVec,
    pub tensor_xa2: BitVec,
    pub tensor_xb: BitVec,
    pub gate_alpha: BitVec,
    pub gate_xa: BitVec,
    pub gate_xb: BitVec,
    pub input_p: usize,
    pub input_xa: BitVec,
}

pub fn random_bitvec<R: Rng>(rng: &mut R, len: usize) -> BitVec {
    let mut v = BitVec::zeros(len);
    for i in 0..len {
        v.set(i, rng.gen::<bool>() as u8);
    }
    v
}

impl RepRandomness {
    pub fn sample<R: Rng>(rng: &mut R, v: usize, m_c: usize, inputs: usize) -> Self {
        let vv = v * v;
        RepRandomness {
            blr_a: (random_bitvec(rng, v), random_bitvec(rng, v)),
            blr_b: (random_bitvec(rng, vv), random_bitvec(rng, vv)),
            tensor_r1: random_bitvec(rng, v),
            tensor_r2: random_bitvec(rng, v),
            tensor_xa1: random_bitvec(rng, v),
            tensor_xa2: random_bitvec(rng, v),
            tensor_xb: random_bitvec(rng, vv),
            gate_alpha: random_bitvec(rng, m_c),
            gate_xa: random_bitvec(rng, v),
            gate_xb: random_bitvec(rng, vv),
            input_p: if inputs > 0 { rng.gen_range(0..inputs) } else { 0 },
            input_xa: random_bitvec(rng, v),
        }
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "blr_a": [self.blr_a.0.to_string(), self.blr_a.1.to_string()],
            "blr_b": [self.blr_b.0.to_string(), self.blr_b.1.to_string()],
            "tensor": [
                self.tensor_r1.to_string(),
                self.tensor_r2.to_string(),
                self.tensor_xa1.to_string(),
                self.tensor_xa2.to_string(),
                self.tensor_xb.to_string()
            ],
            "gate": [
                self.gate_alpha.to_string(),
                self.gate_xa.to_string(),
                self.gate_xb.to_string()
            ],
            "input": [self.input_p, self.input_xa.to_string()],
        })
    }
}

pub struct PcppVerifier {
    pub circuit: BooleanCircuit,
    pub params: PcppParams,
    pub v: usize,
    constraints: Vec<Constraint>,
    quad_vecs: Vec<BitVec>,
}

impl PcppVerifier {
    pub fn new(circuit: BooleanCircuit, params: PcppParams) -> Result<Self, PcppError> {
        circuit.validate()?;
        let v = circuit.num_wires();
        if v > FA_CAP {
            return Err(PcppError::TooLarge { wires: v, cap: FA_CAP });
        }
        let constraints = circuit.constraints();
        let quad_vecs = constraints.iter().map(|c| c.quad_vec(v)).collect();
        Ok(PcppVerifier {
            circuit,
            params,
            v,
            constraints,
            quad_vecs,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Quadratic parts of the constraints as F_2^{v²} vectors.
    pub fn quad_vecs(&self) -> &[BitVec] {
        &self.quad_vecs
    }

    /// The random-combination targets: L(α), Q(α) and the constant bit.
    pub fn combine(&self, alpha: &BitVec) -> (BitVec, BitVec, u8) {
        assert_eq!(alpha.len(), self.constraints.len());
        let mut l = BitVec::zeros(self.v);
        let mut q = BitVec::zeros(self.v * self.v);
        let mut cst = 0u8;
        for (g, c) in self.constraints.iter().enumerate() {
            if alpha.get(g) == 1 {
                l = l.xor(&c.lin).unwrap();
                q = q.xor(&self.quad_vecs[g]).unwrap();
                cst ^= c.cst;
            }
        }
        (l, q, cst)
    }

    pub fn test_blr_a(&self, rd: &mut Reader, x: &BitVec, y: &BitVec) -> bool {
        rd.read_fa(x) ^ rd.read_fa(y) == rd.read_fa(&x.xor(y).unwrap())
    }

    pub fn test_blr_b(&self, rd: &mut Reader, x: &BitVec, y: &BitVec) -> bool {
        rd.read_fb(x) ^ rd.read_fb(y) == rd.read_fb(&x.xor(y).unwrap())
    }

    pub fn test_tensor(&self, rd: &mut Reader, r: &RepRandomness) -> bool {
        let a1 = rd.corrected_fa(&r.tensor_r1, &r.tensor_xa1);
        let a2 = rd.corrected_fa(&r.tensor_r2, &r.tensor_xa2);
        let b = rd.corrected_fb(&r.tensor_r1.tensor(&r.tensor_r2), &r.tensor_xb);
        a1 & a2 == b
    }

    pub fn test_gate(&self, rd: &mut Reader, r: &RepRandomness) -> bool {
        let (l, q, cst) = self.combine(&r.gate_alpha);
        let a = rd.corrected_fa(&l, &r.gate_xa);
        let b = rd.corrected_fb(&q, &r.gate_xb);
        a ^ b ^ cst == 0
    }

    pub fn test_input(&self, rd: &mut Reader, r: &RepRandomness) -> bool {
        // Input wire p is wire p of the assignment.
        let e = BitVec::unit(self.v, r.input_p);
        let got = rd.corrected_fa(&e, &r.input_xa);
        rd.read_y(r.input_p) == got
    }

    /// One repetition at explicit randomness.
    pub fn repetition(&self, rd: &mut Reader, r: &RepRandomness) -> bool {
        let mut ok = self.test_blr_a(rd, &r.blr_a.0, &r.blr_a.1);
        ok &= self.test_blr_b(rd, &r.blr_b.0, &r.blr_b.1);
        ok &= self.test_tensor(rd, r);
        ok &= self.test_gate(rd, r);
        if self.circuit.inputs > 0 {
            ok &= self.test_input(rd, r);
        }
        ok
    }

    /// Full verification with fresh randomness and a query transcript.
    pub fn verify<R: Rng>(
        &self,
        y: &dyn Fn(usize) -> u8,
        fa: &dyn VecOracle,
        fb: &dyn VecOracle,
        rng: &mut R,
    ) -> PcppTranscript {
        let mut rd = Reader::logged(y, fa, fb);
        let mut verdict = true;
        let mut randomness = Vec::with_capacity(self.params.repetitions);
        for _ in 0..self.params.repetitions {
            let r = RepRandomness::sample(rng, self.v, self.constraints.len(), self.circuit.inputs);
            randomness.push(r.describe());
            // Keep querying even after a failure so the query count stays
            // input-independent.
            let ok = self.repetition(&mut rd, &r);
            verdict &= ok;
        }
        PcppTranscript {
            queries: rd.take_log(),
            randomness,
            verdict,
        }
    }

    /// Read-everything reference verifier: decodes fA and checks that the
    /// decoded assignment satisfies the circuit and matches y bit for bit.
    pub fn reference_verify(&self, y: &BitVec, fa: &BitVec) -> bool {
        let code = HadamardCode::new(self.v).expect("v within cap");
        let z = match code.decode(fa) {
            Ok(z) => z,
            Err(_) => return false,
        };
        if y.len() != self.circuit.inputs {
            return false;
        }
        for p in 0..self.circuit.inputs {
            if z.get(p) != y.get(p) {
                return false;
            }
        }
        self.constraints.iter().all(|c| c.eval(&z) == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn honest_const1_circuit_accepts() {
        let mut b = CircuitBuilder::new(0);
        let o = b.const1();
        let c = b.finish(o);
        let proof = prove(&c, &BitVec::zeros(0)).unwrap();
        let verifier = PcppVerifier::new(c, PcppParams::default()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let y = |_: usize| 0u8;
        let t = verifier.verify(&y, &proof.fa_oracle(), &proof.fb_oracle(), &mut rng);
        assert!(t.verdict);
    }

    #[test]
    fn prover_refuses_unsatisfied_circuit() {
        let mut b = CircuitBuilder::new(2);
        let o = b.and(0, 1);
        let c = b.finish(o);
        assert!(matches!(
            prove(&c, &BitVec::from_str01("01").unwrap()),
            Err(PcppError::Unsatisfiable)
        ));
    }
}
