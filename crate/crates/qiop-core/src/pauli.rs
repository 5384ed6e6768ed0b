//! The n-qubit Weyl-Heisenberg group in symplectic form.
//!
//! Elements are stored as i^e · X(x)Z(z) with the phase exponent e kept in
//! Z4, so the group law is exact integer arithmetic. The conversion to the
//! (-1)^d X(a)Z(b)Y(c) normal form with pairwise disjoint supports uses
//! Y = iXZ.

use crate::f2::BitVec;
use crate::linalg::{self, CMat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum PauliError {
    Dimension { expected: usize, got: usize },
    /// from_xzy called with overlapping a/b/c supports.
    OverlappingSupports,
    /// to_xzy called on a non-Hermitian element.
    NotHermitian,
    /// Conjugation result matched no Pauli candidate: the gate is not Clifford.
    DecompositionFailure,
    /// A gate matrix failed the unitarity check.
    NotUnitary,
    /// Dense matrix request beyond the qubit cap.
    TooLarge { n: usize, cap: usize },
}

impl fmt::Display for PauliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PauliError::Dimension { expected, got } => {
                write!(f, "qubit count mismatch: expected {expected}, got {got}")
            }
            PauliError::OverlappingSupports => write!(f, "a, b, c must have disjoint supports"),
            PauliError::NotHermitian => write!(f, "element is not Hermitian"),
            PauliError::DecompositionFailure => {
                write!(f, "conjugation result is not a Pauli; gate is not Clifford")
            }
            PauliError::NotUnitary => write!(f, "matrix is not unitary"),
            PauliError::TooLarge { n, cap } => {
                write!(f, "dense matrix for n={n} exceeds cap {cap}")
            }
        }
    }
}

impl std::error::Error for PauliError {}

/// i^e · X(x)Z(z) on n qubits.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliOp {
    pub n: usize,
    pub e: u8,
    pub x: BitVec,
    pub z: BitVec,
}

impl PauliOp {
    pub fn new(e: u8, x: BitVec, z: BitVec) -> Self {
        assert_eq!(x.len(), z.len());
        PauliOp {
            n: x.len(),
            e: e % 4,
            x,
            z,
        }
    }

    pub fn identity(n: usize) -> Self {
        PauliOp::new(0, BitVec::zeros(n), BitVec::zeros(n))
    }

    pub fn x_string(x: BitVec) -> Self {
        let n = x.len();
        PauliOp::new(0, x, BitVec::zeros(n))
    }

    pub fn z_string(z: BitVec) -> Self {
        let n = z.len();
        PauliOp::new(0, BitVec::zeros(n), z)
    }

    /// Single-qubit X/Y/Z embedded at position `i`.
    pub fn single(n: usize, i: usize, which: char) -> Self {
        let mut x = BitVec::zeros(n);
        let mut z = BitVec::zeros(n);
        let mut e = 0;
        match which {
            'X' => x.set(i, 1),
            'Z' => z.set(i, 1),
            'Y' => {
                x.set(i, 1);
                z.set(i, 1);
                e = 1;
            }
            other => panic!("unknown Pauli letter {other:?}"),
        }
        PauliOp::new(e, x, z)
    }

    pub fn is_identity(&self) -> bool {
        self.e == 0 && self.x.is_zero() && self.z.is_zero()
    }

    /// Hermitian iff e ≡ x·z (mod 2).
    pub fn is_hermitian(&self) -> bool {
        self.e % 2 == self.x.inner(&self.z).unwrap()
    }

    /// i^{e_P+e_Q+2·(z_P·x_Q)} X(x_P⊕x_Q) Z(z_P⊕z_Q).
    pub fn mul(&self, other: &Self) -> Result<Self, PauliError> {
        if self.n != other.n {
            return Err(PauliError::Dimension {
                expected: self.n,
                got: other.n,
            });
        }
        let cross = self.z.inner(&other.x).unwrap();
        let e = (self.e + other.e + 2 * cross) % 4;
        Ok(PauliOp::new(
            e,
            self.x.xor(&other.x).unwrap(),
            self.z.xor(&other.z).unwrap(),
        ))
    }

    /// +1 iff PQ = QP.
    pub fn commutation_sign(&self, other: &Self) -> Result<i8, PauliError> {
        if self.n != other.n {
            return Err(PauliError::Dimension {
                expected: self.n,
                got: other.n,
            });
        }
        let s = self.x.inner(&other.z).unwrap() ^ self.z.inner(&other.x).unwrap();
        Ok(if s == 0 { 1 } else { -1 })
    }

    /// Tensor product, `self` on the lower qubit indices.
    pub fn tensor(&self, other: &Self) -> Self {
        PauliOp::new(
            (self.e + other.e) % 4,
            self.x.concat(&other.x),
            self.z.concat(&other.z),
        )
    }

    pub fn adjoint(&self) -> Self {
        // (i^e XZ)† = (-i)^e Z X = i^{-e} (-1)^{x·z} X Z.
        let xz = self.x.inner(&self.z).unwrap();
        let e = ((4 - self.e) + 2 * xz) % 4;
        PauliOp::new(e, self.x.clone(), self.z.clone())
    }

    /// Embeds a Pauli on `positions` into `n` qubits; local qubit j maps to
    /// `positions[j]`.
    pub fn embed(&self, n: usize, positions: &[usize]) -> Self {
        assert_eq!(positions.len(), self.n);
        let mut x = BitVec::zeros(n);
        let mut z = BitVec::zeros(n);
        for (j, &p) in positions.iter().enumerate() {
            x.set(p, self.x.get(j));
            z.set(p, self.z.get(j));
        }
        PauliOp::new(self.e, x, z)
    }

    /// Restricts to `positions`; all other coordinates must be trivial.
    pub fn restrict(&self, positions: &[usize]) -> Self {
        let w = positions.len();
        let mut x = BitVec::zeros(w);
        let mut z = BitVec::zeros(w);
        for (j, &p) in positions.iter().enumerate() {
            x.set(j, self.x.get(p));
            z.set(j, self.z.get(p));
        }
        for q in 0..self.n {
            if !positions.contains(&q) {
                assert_eq!(self.x.get(q), 0, "support outside restriction");
                assert_eq!(self.z.get(q), 0, "support outside restriction");
            }
        }
        PauliOp::new(self.e, x, z)
    }

    /// Dense 2^n × 2^n matrix; qubit 0 is the most significant index bit.
    pub fn matrix(&self) -> Result<CMat, PauliError> {
        const CAP: usize = 12;
        if self.n > CAP {
            return Err(PauliError::TooLarge { n: self.n, cap: CAP });
        }
        let dim = 1usize << self.n;
        let phase = linalg::i_pow(self.e);
        let x_idx = self.x.to_index() as usize;
        let mut m = CMat::zeros(dim, dim);
        for v in 0..dim {
            let zv = BitVec::from_index(self.n, v as u128).inner(&self.z).unwrap();
            let sign = if zv == 1 { -1.0 } else { 1.0 };
            m[(v ^ x_idx, v)] = phase * Complex64::new(sign, 0.0);
        }
        Ok(m)
    }
}

impl fmt::Debug for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i^{}·X({})Z({})", self.e, self.x, self.z)
    }
}

/// Builds (-1)^d X(a)Z(b)Y(c) for pairwise disjoint a, b, c.
pub fn from_xzy(d: u8, a: &BitVec, b: &BitVec, c: &BitVec) -> Result<PauliOp, PauliError> {
    let n = a.len();
    if b.len() != n || c.len() != n {
        return Err(PauliError::Dimension {
            expected: n,
            got: b.len().max(c.len()),
        });
    }
    let ab = a.and(b).unwrap();
    let bc = b.and(c).unwrap();
    let ca = c.and(a).unwrap();
    if !ab.is_zero() || !bc.is_zero() || !ca.is_zero() {
        return Err(PauliError::OverlappingSupports);
    }
    // Y(c) = i^{|c|} X(c)Z(c) on disjoint supports, so the whole element is
    // i^{2d+|c|} X(a⊕c) Z(b⊕c).
    let e = ((2 * (d as usize) + c.popcount()) % 4) as u8;
    Ok(PauliOp::new(e, a.xor(c).unwrap(), b.xor(c).unwrap()))
}

/// Inverse of [`from_xzy`]; requires a Hermitian element.
pub fn to_xzy(p: &PauliOp) -> Result<(u8, BitVec, BitVec, BitVec), PauliError> {
    if !p.is_hermitian() {
        return Err(PauliError::NotHermitian);
    }
    let c = p.x.and(&p.z).unwrap();
    let a = p.x.and(&p.z.not()).unwrap();
    let b = p.z.and(&p.x.not()).unwrap();
    let d = (((p.e as usize) + 4 - c.popcount() % 4) % 4) / 2;
    Ok((d as u8, a, b, c))
}

/// A small dense unitary promised to normalize the Pauli group.
#[derive(Clone)]
pub struct CliffordGate {
    w: usize,
    matrix: CMat,
}

impl CliffordGate {
    pub const MAX_ARITY: usize = 5;
    pub const UNITARY_TOL: f64 = 1e-10;
    pub const DECOMP_TOL: f64 = 1e-8;

    pub fn new(matrix: CMat) -> Result<Self, PauliError> {
        let dim = matrix.nrows();
        if dim == 0 || matrix.ncols() != dim || !dim.is_power_of_two() {
            return Err(PauliError::NotUnitary);
        }
        let w = dim.trailing_zeros() as usize;
        if w > Self::MAX_ARITY {
            return Err(PauliError::TooLarge {
                n: w,
                cap: Self::MAX_ARITY,
            });
        }
        if !linalg::is_unitary(&matrix, Self::UNITARY_TOL) {
            return Err(PauliError::NotUnitary);
        }
        Ok(CliffordGate { w, matrix })
    }

    pub fn arity(&self) -> usize {
        self.w
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// True when conjugation of every generator X_i, Z_i lands on a Pauli.
    pub fn is_clifford(&self) -> bool {
        for i in 0..self.w {
            for which in ['X', 'Z'] {
                let p = PauliOp::single(self.w, i, which);
                if conjugate_local(&self.matrix, &p).is_err() {
                    return false;
                }
            }
        }
        true
    }
}

impl fmt::Debug for CliffordGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CliffordGate(arity {})", self.w)
    }
}

/// Finds the unique Pauli equal to C†·P·C for a local Pauli P, by brute force
/// over the 2·4^w Hermitian candidates (P must be Hermitian).
fn conjugate_local(c: &CMat, p: &PauliOp) -> Result<PauliOp, PauliError> {
    let w = p.n;
    let target = c.adjoint() * p.matrix()? * c;
    for xz in 0..(1u32 << (2 * w)) {
        let x = BitVec::from_index(w, (xz >> w) as u128);
        let z = BitVec::from_index(w, (xz & ((1 << w) - 1)) as u128);
        let base = x.inner(&z).unwrap();
        for half in 0..2u8 {
            let cand = PauliOp::new(base + 2 * half, x.clone(), z.clone());
            if linalg::max_abs_diff(&target, &cand.matrix()?) <= CliffordGate::DECOMP_TOL {
                return Ok(cand);
            }
        }
    }
    Err(PauliError::DecompositionFailure)
}

/// C†·P·C for C acting on qubit positions `support` of an n-qubit system and
/// P supported inside `support`; the result is embedded back into n qubits.
pub fn clifford_conjugate(
    c: &CliffordGate,
    support: &[usize],
    p: &PauliOp,
) -> Result<PauliOp, PauliError> {
    if support.len() != c.arity() {
        return Err(PauliError::Dimension {
            expected: c.arity(),
            got: support.len(),
        });
    }
    let local = p.restrict(support);
    let conj = conjugate_local(&c.matrix, &local)?;
    Ok(conj.embed(p.n, support))
}
