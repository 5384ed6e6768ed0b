//! The Hadamard code: encoder, exact nearest-codeword decoder, deterministic
//! membership tester, the BLR local tester, the two-query self-corrector, and
//! coherent liftings of all three onto sparse states.
//!
//! Positions are indexed 0..2^k and XOR as integers; the generator row at
//! position j is the k-bit binary expansion of j (most significant bit
//! first), so rows add: g_{x⊕y} = g_x ⊕ g_y.

use crate::f2::{BitMatrix, BitVec};
use crate::pauli::PauliOp;
use crate::qsim::{Observable, QsimError, SparseState};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HadError {
    NotPowerOfTwo(usize),
    LengthMismatch { expected: usize, got: usize },
    TooLarge(usize),
    PositionOutOfRange { pos: usize, len: usize },
}

impl fmt::Display for HadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HadError::NotPowerOfTwo(n) => write!(f, "length {n} is not a power of two"),
            HadError::LengthMismatch { expected, got } => {
                write!(f, "expected length {expected}, got {got}")
            }
            HadError::TooLarge(k) => write!(f, "message length {k} exceeds the block-size cap"),
            HadError::PositionOutOfRange { pos, len } => {
                write!(f, "position {pos} out of range for block length {len}")
            }
        }
    }
}

impl std::error::Error for HadError {}

/// Read access to a (possibly huge or adversarial) word over positions
/// 0..len. Queries must be side-effect free.
pub trait BitOracle {
    fn read(&self, pos: usize) -> u8;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BitOracle for BitVec {
    fn read(&self, pos: usize) -> u8 {
        self.get(pos)
    }
    fn len(&self) -> usize {
        BitVec::len(self)
    }
}

/// An oracle computed on demand.
pub struct FnOracle<F: Fn(usize) -> u8> {
    pub f: F,
    pub length: usize,
}

impl<F: Fn(usize) -> u8> BitOracle for FnOracle<F> {
    fn read(&self, pos: usize) -> u8 {
        (self.f)(pos)
    }
    fn len(&self) -> usize {
        self.length
    }
}

/// Parameters of the local tester/corrector pair. The constants are the
/// implementation's measured values, recorded here rather than assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct TesterParams {
    /// Queries per linearity test invocation.
    pub q_l: usize,
    /// Queries per self-correction invocation.
    pub q_s: usize,
    pub repetitions: usize,
    /// Measured local-testing constant: reject probability ≥ κ·δ.
    pub kappa: f64,
    /// Self-correction error constant: error ≤ κ′·δ.
    pub kappa_prime: f64,
    /// Per-call error target; must lie in (0, 0.001).
    pub epsilon: f64,
}

impl Default for TesterParams {
    fn default() -> Self {
        TesterParams {
            q_l: 3,
            q_s: 2,
            repetitions: 1,
            kappa: 0.25,
            kappa_prime: 2.0,
            epsilon: 0.0005,
        }
    }
}

const K_CAP: usize = 20;

#[derive(Debug, Clone)]
pub struct HadamardCode {
    pub k: usize,
    pub n: usize,
}

impl HadamardCode {
    pub fn new(k: usize) -> Result<Self, HadError> {
        if k > K_CAP {
            return Err(HadError::TooLarge(k));
        }
        Ok(HadamardCode { k, n: 1usize << k })
    }

    /// For a block length, recovering k; errors when not a power of two.
    pub fn for_block(n: usize) -> Result<Self, HadError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(HadError::NotPowerOfTwo(n));
        }
        Self::new(n.trailing_zeros() as usize)
    }

    /// Generator matrix with row j equal to the binary expansion of j.
    pub fn generator(&self) -> BitMatrix {
        let rows: Vec<BitVec> = (0..self.n)
            .map(|j| BitVec::from_index(self.k, j as u128))
            .collect();
        BitMatrix::from_rows(rows).expect("uniform row length")
    }

    /// Codeword bit at position j for message s.
    pub fn encode_bit(&self, s: &BitVec, j: usize) -> u8 {
        debug_assert!(j < self.n);
        let s_int = s.to_index() as usize;
        ((j & s_int).count_ones() & 1) as u8
    }

    pub fn encode(&self, s: &BitVec) -> Result<BitVec, HadError> {
        if s.len() != self.k {
            return Err(HadError::LengthMismatch {
                expected: self.k,
                got: s.len(),
            });
        }
        let mut w = BitVec::zeros(self.n);
        for j in 0..self.n {
            w.set(j, self.encode_bit(s, j));
        }
        Ok(w)
    }

    /// Exact nearest-codeword decoding by an integer Walsh-Hadamard
    /// transform; ties go to the lexicographically smallest message.
    pub fn decode(&self, w: &BitVec) -> Result<BitVec, HadError> {
        Ok(self.decode_with_distance(w)?.0)
    }

    pub fn decode_with_distance(&self, w: &BitVec) -> Result<(BitVec, usize), HadError> {
        if w.len() != self.n {
            return Err(HadError::LengthMismatch {
                expected: self.n,
                got: w.len(),
            });
        }
        // c_m = Σ_j (−1)^{w_j ⊕ ⟨g_j, m⟩}; agreement = (n + c_m) / 2.
        let mut f: Vec<i64> = (0..self.n)
            .map(|j| if w.get(j) == 0 { 1 } else { -1 })
            .collect();
        let mut h = 1usize;
        while h < self.n {
            for block in (0..self.n).step_by(2 * h) {
                for i in block..block + h {
                    let (a, b) = (f[i], f[i + h]);
                    f[i] = a + b;
                    f[i + h] = a - b;
                }
            }
            h *= 2;
        }
        // Index m of the transform corresponds to message from_index(k, m):
        // the butterfly at stride h pairs indices differing in bit log2(h),
        // which is generator coordinate k−1−log2(h), matching ⟨g_j, m⟩.
        let mut best = 0usize;
        for m in 1..self.n {
            if f[m] > f[best] {
                best = m;
            }
        }
        let agreement = ((self.n as i64 + f[best]) / 2) as usize;
        Ok((
            BitVec::from_index(self.k, best as u128),
            self.n - agreement,
        ))
    }

    /// Deterministic membership tester: accepts exactly the codewords.
    pub fn tester_t(&self, w: &BitVec) -> Result<u8, HadError> {
        let s = self.decode(w)?;
        Ok(u8::from(self.encode(&s)? == *w))
    }

    /// Relative distance of w to the code.
    pub fn relative_distance(&self, w: &BitVec) -> Result<f64, HadError> {
        Ok(self.decode_with_distance(w)?.1 as f64 / self.n as f64)
    }
}

/// The BLR machine L at fixed randomness (x, y): accepts (returns 1) iff
/// w(x) ⊕ w(y) = w(x ⊕ y). Exactly three queries.
pub fn blr_test<O: BitOracle + ?Sized>(w: &O, x: usize, y: usize) -> u8 {
    u8::from(w.read(x) ^ w.read(y) == w.read(x ^ y))
}

/// The self-corrector S at fixed randomness x: returns w(x) ⊕ w(x ⊕ p).
/// Exactly two queries.
pub fn self_correct<O: BitOracle + ?Sized>(w: &O, p: usize, x: usize) -> u8 {
    w.read(x) ^ w.read(x ^ p)
}

/// Exact rejection probability of the BLR test under uniform (x, y),
/// enumerated over all n² pairs.
pub fn blr_reject_exact<O: BitOracle + ?Sized>(w: &O) -> f64 {
    let n = w.len();
    let mut fails = 0usize;
    for x in 0..n {
        for y in 0..n {
            if blr_test(w, x, y) == 0 {
                fails += 1;
            }
        }
    }
    fails as f64 / (n * n) as f64
}

/// Exact probability that self-correction of position p returns `target`,
/// enumerated over all n draws of x.
pub fn self_correct_hit_exact<O: BitOracle + ?Sized>(w: &O, p: usize, target: u8) -> f64 {
    let n = w.len();
    let hits = (0..n).filter(|&x| self_correct(w, p, x) == target).count();
    hits as f64 / n as f64
}

/// Coherent decoding lifting: |a⟩_D |w⟩_R → |a ⊕ D(w)⟩_D |w⟩_R.
pub fn lift_decode(
    state: &mut SparseState,
    code: &HadamardCode,
    d_reg: &str,
    r_reg: &str,
) -> Result<(), QsimError> {
    let d_qubits = state.layout().qubits(d_reg)?;
    let r_qubits = state.layout().qubits(r_reg)?;
    if d_qubits.len() != code.k || r_qubits.len() != code.n {
        return Err(QsimError::Dimension(format!(
            "lift_decode wants widths ({}, {}), got ({}, {})",
            code.k,
            code.n,
            d_qubits.len(),
            r_qubits.len()
        )));
    }
    let total = state.layout().total();
    let code = code.clone();
    state.apply_xor_into(d_reg, move |key| {
        let mut w = BitVec::zeros(code.n);
        for (j, &q) in r_qubits.iter().enumerate() {
            w.set(j, ((key >> (total - 1 - q)) & 1) as u8);
        }
        let msg = code.decode(&w).expect("width checked");
        msg.to_index()
    })
}

fn read_key_bit(key: u128, total: usize, q: usize) -> u8 {
    ((key >> (total - 1 - q)) & 1) as u8
}

fn read_key_index(key: u128, total: usize, qubits: &[usize]) -> usize {
    let mut v = 0usize;
    for &q in qubits {
        v = (v << 1) | read_key_bit(key, total, q) as usize;
    }
    v
}

/// Coherent BLR lifting: |a⟩_L |w⟩_R |x,y⟩_{T_L} → |a ⊕ L^w(x,y)⟩.
pub fn lift_blr(
    state: &mut SparseState,
    code: &HadamardCode,
    l_reg: &str,
    r_reg: &str,
    t_reg: &str,
) -> Result<(), QsimError> {
    let r_qubits = state.layout().qubits(r_reg)?;
    let t_qubits = state.layout().qubits(t_reg)?;
    if r_qubits.len() != code.n || t_qubits.len() != 2 * code.k || state.layout().width(l_reg)? != 1
    {
        return Err(QsimError::Dimension("lift_blr register widths".into()));
    }
    let total = state.layout().total();
    let k = code.k;
    state.apply_xor_into(l_reg, move |key| {
        let tape = read_key_index(key, total, &t_qubits);
        let x = tape >> k;
        let y = tape & ((1 << k) - 1);
        let read = |pos: usize| read_key_bit(key, total, r_qubits[pos]);
        u128::from(read(x) ^ read(y) == read(x ^ y))
    })
}

/// Coherent self-correction lifting: |a⟩_S |w⟩_R |x⟩_{T_S} → |a ⊕ S^w(p; x)⟩.
pub fn lift_selfcorrect(
    state: &mut SparseState,
    code: &HadamardCode,
    s_reg: &str,
    r_reg: &str,
    t_reg: &str,
    p: usize,
) -> Result<(), QsimError> {
    let r_qubits = state.layout().qubits(r_reg)?;
    let t_qubits = state.layout().qubits(t_reg)?;
    if r_qubits.len() != code.n || t_qubits.len() != code.k || state.layout().width(s_reg)? != 1 {
        return Err(QsimError::Dimension("lift_selfcorrect register widths".into()));
    }
    if p >= code.n {
        return Err(QsimError::Dimension(format!(
            "position {p} out of range for block length {}",
            code.n
        )));
    }
    let total = state.layout().total();
    state.apply_xor_into(s_reg, move |key| {
        let x = read_key_index(key, total, &t_qubits);
        let a = read_key_bit(key, total, r_qubits[x]);
        let b = read_key_bit(key, total, r_qubits[x ^ p]);
        u128::from(a ^ b)
    })
}

/// The self-corrected read-out observable Õ_p at classically sampled
/// randomness x: Z_S · Z_{R[x]} · Z_{R[x⊕p]} (the two R factors cancel when
/// p = 0). Measuring it on |0⟩_S |w⟩_R yields (−1)^{w(x)⊕w(x⊕p)}.
pub fn read_observable(
    state: &SparseState,
    code: &HadamardCode,
    s_reg: &str,
    r_reg: &str,
    p: usize,
    x: usize,
) -> Result<Observable, QsimError> {
    let s_qubit = state.layout().qubit(s_reg, 0)?;
    let r_qubits = state.layout().qubits(r_reg)?;
    if r_qubits.len() != code.n {
        return Err(QsimError::Dimension("read_observable register widths".into()));
    }
    if p >= code.n || x >= code.n {
        return Err(QsimError::Dimension(format!(
            "position {p} / randomness {x} out of range for block length {}",
            code.n
        )));
    }
    let mut qubits = vec![s_qubit];
    if p != 0 {
        qubits.push(r_qubits[x]);
        qubits.push(r_qubits[x ^ p]);
    }
    let op = PauliOp::z_string(BitVec::ones(qubits.len()));
    Observable::pauli(op, qubits)
}

/// Coherent-randomness form of Õ_p: S_p† Z_S S_p implemented as
/// lift → Z_S → lift (the lifting is an involution). Used as a cross-check
/// for the classically sampled form.
pub fn apply_read_coherent(
    state: &mut SparseState,
    code: &HadamardCode,
    s_reg: &str,
    r_reg: &str,
    t_reg: &str,
    p: usize,
) -> Result<(), QsimError> {
    lift_selfcorrect(state, code, s_reg, r_reg, t_reg, p)?;
    let s_qubit = state.layout().qubit(s_reg, 0)?;
    let z = PauliOp::single(1, 0, 'Z');
    state.apply_pauli(&z, &[s_qubit])?;
    lift_selfcorrect(state, code, s_reg, r_reg, t_reg, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let code = HadamardCode::new(2).unwrap();
        let w = code.encode(&BitVec::from_str01("00").unwrap()).unwrap();
        assert_eq!(w.to_string(), "0000");
        assert_eq!(code.tester_t(&w).unwrap(), 1);
        let w = code.encode(&BitVec::from_str01("10").unwrap()).unwrap();
        assert_eq!(w.to_string(), "0011");
    }

    #[test]
    fn decode_single_error() {
        let code = HadamardCode::new(2).unwrap();
        let (msg, dist) = code
            .decode_with_distance(&BitVec::from_str01("0001").unwrap())
            .unwrap();
        assert_eq!(msg.to_string(), "00");
        assert_eq!(dist, 1);
    }
}
