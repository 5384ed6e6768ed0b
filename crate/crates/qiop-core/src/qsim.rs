//! Sparse state-vector simulator over named registers.
//!
//! States are associative maps from basis bitstrings (packed into `u128`,
//! qubit 0 = most significant bit of the printed string) to complex
//! amplitudes. A `BTreeMap` keeps iteration deterministic so that exact
//! acceptance probabilities are bit-for-bit reproducible.

use crate::f2::BitVec;
use crate::linalg::{self, CMat};
use crate::pauli::PauliOp;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub const PRUNE_TOL: f64 = 1e-12;
pub const NORM_TOL: f64 = 1e-9;
const UNITARY_TOL: f64 = 1e-10;
/// Probability below which a measurement branch is treated as absent.
const BRANCH_TOL: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub enum QsimError {
    DuplicateRegister(String),
    UnknownRegister(String),
    WidthCap { total: usize, cap: usize },
    Dimension(String),
    NotUnitary,
    /// A classical lifting was not injective on the observed basis labels.
    NonInjective,
    NormDrift(f64),
    /// Registers were expected to be in |0..0⟩ and were not.
    NotBlank(String),
    BranchCapExceeded(usize),
    InvalidObservable(String),
}

impl fmt::Display for QsimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QsimError::DuplicateRegister(n) => write!(f, "duplicate register name {n:?}"),
            QsimError::UnknownRegister(n) => write!(f, "unknown register {n:?}"),
            QsimError::WidthCap { total, cap } => {
                write!(f, "total width {total} exceeds simulator cap {cap}")
            }
            QsimError::Dimension(m) => write!(f, "dimension error: {m}"),
            QsimError::NotUnitary => write!(f, "matrix is not unitary"),
            QsimError::NonInjective => write!(f, "classical map is not injective on support"),
            QsimError::NormDrift(n) => write!(f, "state norm drifted to {n}"),
            QsimError::NotBlank(n) => write!(f, "register {n:?} is not in the all-zero state"),
            QsimError::BranchCapExceeded(c) => write!(f, "branch count exceeded cap {c}"),
            QsimError::InvalidObservable(m) => write!(f, "invalid observable: {m}"),
        }
    }
}

impl std::error::Error for QsimError {}

/// Ordered list of named registers; width 0 registers are allowed and
/// occupy no qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterLayout {
    regs: Vec<(String, usize)>,
    offsets: Vec<usize>,
    total: usize,
}

impl RegisterLayout {
    pub const WIDTH_CAP: usize = 128;

    pub fn new(regs: &[(&str, usize)]) -> Result<Self, QsimError> {
        let mut offsets = Vec::with_capacity(regs.len());
        let mut total = 0usize;
        for (i, (name, w)) in regs.iter().enumerate() {
            if regs[..i].iter().any(|(n, _)| n == name) {
                return Err(QsimError::DuplicateRegister(name.to_string()));
            }
            offsets.push(total);
            total += w;
        }
        if total > Self::WIDTH_CAP {
            return Err(QsimError::WidthCap {
                total,
                cap: Self::WIDTH_CAP,
            });
        }
        Ok(RegisterLayout {
            regs: regs.iter().map(|(n, w)| (n.to_string(), *w)).collect(),
            offsets,
            total,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn index_of(&self, name: &str) -> Result<usize, QsimError> {
        self.regs
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| QsimError::UnknownRegister(name.to_string()))
    }

    pub fn width(&self, name: &str) -> Result<usize, QsimError> {
        Ok(self.regs[self.index_of(name)?].1)
    }

    /// Global index of qubit `i` within register `name`.
    pub fn qubit(&self, name: &str, i: usize) -> Result<usize, QsimError> {
        let r = self.index_of(name)?;
        if i >= self.regs[r].1 {
            return Err(QsimError::Dimension(format!(
                "qubit {i} out of range for register {name} of width {}",
                self.regs[r].1
            )));
        }
        Ok(self.offsets[r] + i)
    }

    /// All global qubit indices of a register, ascending.
    pub fn qubits(&self, name: &str) -> Result<Vec<usize>, QsimError> {
        let r = self.index_of(name)?;
        Ok((self.offsets[r]..self.offsets[r] + self.regs[r].1).collect())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.regs.iter().map(|(n, _)| n.as_str())
    }
}

fn qubit_mask(total: usize, q: usize) -> u128 {
    1u128 << (total - 1 - q)
}

/// Sparse state over a register layout.
#[derive(Clone)]
pub struct SparseState {
    layout: Arc<RegisterLayout>,
    amps: BTreeMap<u128, Complex64>,
}

impl SparseState {
    pub fn new(layout: RegisterLayout) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(0u128, linalg::C_ONE);
        SparseState {
            layout: Arc::new(layout),
            amps,
        }
    }

    /// A computational basis state with the printed bitstring equal to
    /// `label` in binary (MSB first).
    pub fn from_basis(layout: RegisterLayout, label: u128) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(label, linalg::C_ONE);
        SparseState {
            layout: Arc::new(layout),
            amps,
        }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn num_amplitudes(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (u128, Complex64)> + '_ {
        self.amps.iter().map(|(k, v)| (*k, *v))
    }

    pub fn norm2(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn bit(&self, key: u128, q: usize) -> u8 {
        ((key >> (self.layout.total - 1 - q)) & 1) as u8
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() >= PRUNE_TOL);
    }

    fn assert_norm_preserved(&self, before: f64) -> Result<(), QsimError> {
        let after = self.norm2();
        if (after - before).abs() > NORM_TOL {
            return Err(QsimError::NormDrift(after));
        }
        Ok(())
    }

    /// Reads the key bits at `qubits` as a sub-index with `qubits[0]` as the
    /// most significant bit.
    fn gather(&self, key: u128, qubits: &[usize]) -> usize {
        let mut idx = 0usize;
        for &q in qubits {
            idx = (idx << 1) | self.bit(key, q) as usize;
        }
        idx
    }

    /// Writes a sub-index back into the key at `qubits`.
    fn scatter(&self, key: u128, qubits: &[usize], idx: usize) -> u128 {
        let mut k = key;
        for (j, &q) in qubits.iter().enumerate() {
            let bit = (idx >> (qubits.len() - 1 - j)) & 1;
            let m = qubit_mask(self.layout.total, q);
            if bit == 1 {
                k |= m;
            } else {
                k &= !m;
            }
        }
        k
    }

    /// Reads a register's bits on one basis key.
    pub fn register_bits(&self, key: u128, name: &str) -> Result<BitVec, QsimError> {
        let qs = self.layout.qubits(name)?;
        let mut v = BitVec::zeros(qs.len());
        for (i, &q) in qs.iter().enumerate() {
            v.set(i, self.bit(key, q));
        }
        Ok(v)
    }

    /// Reads a register that is classical on the current support: every
    /// branch must agree on its bits.
    pub fn classical_register(&self, name: &str) -> Result<BitVec, QsimError> {
        let mut seen: Option<BitVec> = None;
        for (&key, _) in self.amps.iter() {
            let bits = self.register_bits(key, name)?;
            match &seen {
                None => seen = Some(bits),
                Some(prev) if *prev == bits => {}
                Some(_) => {
                    return Err(QsimError::InvalidObservable(format!(
                        "register {name} is not classical on the support"
                    )))
                }
            }
        }
        seen.ok_or_else(|| QsimError::InvalidObservable("empty state".into()))
    }

    /// Applies a dense unitary on the listed target qubits (targets[0] is the
    /// most significant bit of the gate's index space).
    pub fn apply_unitary(&mut self, u: &CMat, targets: &[usize]) -> Result<(), QsimError> {
        let dim = 1usize << targets.len();
        if u.nrows() != dim || u.ncols() != dim {
            return Err(QsimError::Dimension(format!(
                "gate dim {} does not match {} targets",
                u.nrows(),
                targets.len()
            )));
        }
        if !linalg::is_unitary(u, UNITARY_TOL) {
            return Err(QsimError::NotUnitary);
        }
        self.apply_matrix_unchecked(u, targets);
        Ok(())
    }

    /// Applies an arbitrary (not necessarily unitary) matrix on targets; used
    /// internally for projectors and operator residuals. No norm contract.
    pub fn apply_matrix_unchecked(&mut self, m: &CMat, targets: &[usize]) {
        let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&key, &amp) in self.amps.iter() {
            let idx = self.gather(key, targets);
            for row in 0..m.nrows() {
                let coef = m[(row, idx)];
                if coef.norm() == 0.0 {
                    continue;
                }
                let k = self.scatter(key, targets, row);
                *out.entry(k).or_insert(linalg::C_ZERO) += coef * amp;
            }
        }
        self.amps = out;
        self.prune();
    }

    /// Applies a basis-label permutation `f` with an optional per-label phase.
    /// `f` must be injective on the observed labels.
    pub fn apply_classical<F, P>(&mut self, f: F, phase: Option<P>) -> Result<(), QsimError>
    where
        F: Fn(u128) -> u128,
        P: Fn(u128) -> Complex64,
    {
        let before = self.norm2();
        let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&key, &amp) in self.amps.iter() {
            let nk = f(key);
            let a = match &phase {
                Some(p) => p(key) * amp,
                None => amp,
            };
            if out.insert(nk, a).is_some() {
                return Err(QsimError::NonInjective);
            }
        }
        self.amps = out;
        self.assert_norm_preserved(before)
    }

    /// XOR-into-target lifting: target register bits are XORed with `g` of
    /// the rest of the key. Always an involution, hence always injective.
    pub fn apply_xor_into<G>(&mut self, target: &str, g: G) -> Result<(), QsimError>
    where
        G: Fn(u128) -> u128,
    {
        let qs = self.layout.qubits(target)?;
        let w = qs.len();
        let total = self.layout.total;
        let masks: Vec<u128> = qs.iter().map(|&q| qubit_mask(total, q)).collect();
        let mask = if w >= 128 { u128::MAX } else { (1u128 << w) - 1 };
        let before = self.norm2();
        let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&key, &amp) in self.amps.iter() {
            let val = g(key) & mask;
            let mut nk = key;
            for (j, m) in masks.iter().enumerate() {
                if (val >> (w - 1 - j)) & 1 == 1 {
                    nk ^= m;
                }
            }
            if out.insert(nk, amp).is_some() {
                return Err(QsimError::NonInjective);
            }
        }
        self.amps = out;
        self.assert_norm_preserved(before)
    }

    /// Applies a Pauli specified on `qubits` (op qubit j acts on qubits[j]).
    pub fn apply_pauli(&mut self, op: &PauliOp, qubits: &[usize]) -> Result<(), QsimError> {
        if op.n != qubits.len() {
            return Err(QsimError::Dimension(format!(
                "pauli on {} qubits given {} targets",
                op.n,
                qubits.len()
            )));
        }
        let total = self.layout.total;
        let mut xmask = 0u128;
        let mut zmasks: Vec<u128> = Vec::new();
        for (j, &q) in qubits.iter().enumerate() {
            if op.x.get(j) == 1 {
                xmask |= qubit_mask(total, q);
            }
            if op.z.get(j) == 1 {
                zmasks.push(qubit_mask(total, q));
            }
        }
        let phase = linalg::i_pow(op.e);
        let before = self.norm2();
        let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&key, &amp) in self.amps.iter() {
            let mut par = 0u32;
            for m in &zmasks {
                par ^= (key & m != 0) as u32;
            }
            let sign = if par & 1 == 1 { -1.0 } else { 1.0 };
            out.insert(key ^ xmask, amp * phase * sign);
        }
        self.amps = out;
        self.assert_norm_preserved(before)
    }

    /// In-place ψ ← ψ + c·φ (layouts must match). No norm contract.
    pub fn axpy(&mut self, c: Complex64, other: &SparseState) {
        for (&k, &a) in other.amps.iter() {
            *self.amps.entry(k).or_insert(linalg::C_ZERO) += c * a;
        }
        self.prune();
    }

    pub fn scale(&mut self, c: Complex64) {
        for a in self.amps.values_mut() {
            *a *= c;
        }
    }

    pub fn inner(&self, other: &SparseState) -> Complex64 {
        let mut acc = linalg::C_ZERO;
        for (k, a) in self.amps.iter() {
            if let Some(b) = other.amps.get(k) {
                acc += a.conj() * b;
            }
        }
        acc
    }

    pub fn normalize(&mut self) {
        let n = self.norm2().sqrt();
        if n > 0.0 {
            let inv = Complex64::new(1.0 / n, 0.0);
            self.scale(inv);
        }
    }

    /// Sets a register (currently |0..0⟩) to a supplied pure state given as a
    /// dense vector over its basis.
    pub fn load_register(&mut self, name: &str, vec: &[Complex64]) -> Result<(), QsimError> {
        let qs = self.layout.qubits(name)?;
        if vec.len() != 1 << qs.len() {
            return Err(QsimError::Dimension(format!(
                "vector of dim {} for register of width {}",
                vec.len(),
                qs.len()
            )));
        }
        let n2: f64 = vec.iter().map(|a| a.norm_sqr()).sum();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(QsimError::NormDrift(n2));
        }
        let before = self.norm2();
        let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&key, &amp) in self.amps.iter() {
            if self.gather(key, &qs) != 0 {
                return Err(QsimError::NotBlank(name.to_string()));
            }
            for (idx, &coef) in vec.iter().enumerate() {
                if coef.norm() < PRUNE_TOL {
                    continue;
                }
                out.insert(self.scatter(key, &qs, idx), amp * coef);
            }
        }
        self.amps = out;
        self.prune();
        self.assert_norm_preserved(before)
    }

    /// Prepares (1/√2^w)Σ|i⟩_A|i⟩_B on two equal-width blank registers.
    pub fn make_epr(&mut self, reg_a: &str, reg_b: &str) -> Result<(), QsimError> {
        let qa = self.layout.qubits(reg_a)?;
        let qb = self.layout.qubits(reg_b)?;
        if qa.len() != qb.len() {
            return Err(QsimError::Dimension(format!(
                "EPR registers differ in width: {} vs {}",
                qa.len(),
                qb.len()
            )));
        }
        let w = qa.len();
        let before = self.norm2();
        let scale = Complex64::new(1.0 / ((1u64 << w) as f64).sqrt(), 0.0);
        let mut out: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&key, &amp) in self.amps.iter() {
            if self.gather(key, &qa) != 0 || self.gather(key, &qb) != 0 {
                return Err(QsimError::NotBlank(format!("{reg_a}/{reg_b}")));
            }
            for i in 0..(1usize << w) {
                let k = self.scatter(self.scatter(key, &qa, i), &qb, i);
                out.insert(k, amp * scale);
            }
        }
        self.amps = out;
        self.assert_norm_preserved(before)
    }

    /// Dense vector over all 2^total basis labels; capped at 22 qubits.
    pub fn to_dense(&self) -> Result<Vec<Complex64>, QsimError> {
        const CAP: usize = 22;
        let total = self.layout.total;
        if total > CAP {
            return Err(QsimError::WidthCap { total, cap: CAP });
        }
        let mut v = vec![linalg::C_ZERO; 1 << total];
        for (&k, &a) in self.amps.iter() {
            v[k as usize] = a;
        }
        Ok(v)
    }

    /// Debug dump matching the documented JSON shape.
    pub fn dump_json(&self) -> serde_json::Value {
        let total = self.layout.total;
        serde_json::json!({
            "layout": self.layout.regs.iter().map(|(n, w)| serde_json::json!({"name": n, "width": w})).collect::<Vec<_>>(),
            "amplitudes": self.amps.iter().map(|(k, a)| serde_json::json!({
                "basis": format!("{:0width$b}", k, width = total),
                "re": a.re,
                "im": a.im,
            })).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Debug for SparseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SparseState ({} qubits)", self.layout.total)?;
        for (&k, &a) in self.amps.iter() {
            writeln!(
                f,
                "  |{:0width$b}⟩: {:+.6}{:+.6}i",
                k,
                a.re,
                a.im,
                width = self.layout.total
            )?;
        }
        Ok(())
    }
}

/// An observable: a Hermitian Pauli (±1 outcomes, labels 0/1) or a labeled
/// orthogonal projector decomposition on a qubit subset.
#[derive(Clone, Debug)]
pub enum Observable {
    Pauli { op: PauliOp, qubits: Vec<usize> },
    Projectors { qubits: Vec<usize>, parts: Vec<ProjPart> },
}

#[derive(Clone, Debug)]
pub struct ProjPart {
    pub label: u64,
    pub value: f64,
    pub mat: CMat,
}

impl Observable {
    pub fn pauli(op: PauliOp, qubits: Vec<usize>) -> Result<Self, QsimError> {
        if !op.is_hermitian() {
            return Err(QsimError::InvalidObservable(
                "Pauli observable must be Hermitian".into(),
            ));
        }
        if op.n != qubits.len() {
            return Err(QsimError::Dimension(format!(
                "pauli on {} qubits, {} targets",
                op.n,
                qubits.len()
            )));
        }
        Ok(Observable::Pauli { op, qubits })
    }

    /// Z on a single qubit.
    pub fn z(qubit: usize) -> Self {
        Observable::Pauli {
            op: PauliOp::single(1, 0, 'Z'),
            qubits: vec![qubit],
        }
    }

    pub fn projectors(qubits: Vec<usize>, parts: Vec<ProjPart>) -> Result<Self, QsimError> {
        let dim = 1usize << qubits.len();
        let mut sum = CMat::zeros(dim, dim);
        for p in &parts {
            if p.mat.nrows() != dim || p.mat.ncols() != dim {
                return Err(QsimError::Dimension("projector dim".into()));
            }
            // Orthogonality against the others.
            for q in &parts {
                if p.label != q.label {
                    let prod = &p.mat * &q.mat;
                    if prod.iter().map(|c| c.norm()).fold(0.0, f64::max) > 1e-9 {
                        return Err(QsimError::InvalidObservable(
                            "projectors are not pairwise orthogonal".into(),
                        ));
                    }
                }
            }
            sum += &p.mat;
        }
        if linalg::max_abs_diff(&sum, &linalg::identity(dim)) > 1e-9 {
            return Err(QsimError::InvalidObservable(
                "projectors do not sum to identity".into(),
            ));
        }
        Ok(Observable::Projectors { qubits, parts })
    }

    /// Outcome labels in ascending order with their eigenvalues.
    fn branches(&self) -> Vec<(u64, f64)> {
        match self {
            Observable::Pauli { .. } => vec![(0, 1.0), (1, -1.0)],
            Observable::Projectors { parts, .. } => {
                let mut v: Vec<(u64, f64)> = parts.iter().map(|p| (p.label, p.value)).collect();
                v.sort_by_key(|e| e.0);
                v
            }
        }
    }
}

/// One measurement branch: outcome label, eigenvalue, probability, collapsed
/// normalized state.
pub struct MeasureBranch {
    pub label: u64,
    pub value: f64,
    pub prob: f64,
    pub state: SparseState,
}

impl SparseState {
    /// Applies the projector for outcome `label` without normalizing.
    fn project(&self, o: &Observable, label: u64) -> SparseState {
        let mut out = self.clone();
        match o {
            Observable::Pauli { op, qubits } => {
                // (I + (-1)^label O)/2
                let sign = if label == 0 { 1.0 } else { -1.0 };
                let mut flipped = self.clone();
                flipped.apply_pauli(op, qubits).expect("hermitian pauli");
                out.scale(Complex64::new(0.5, 0.0));
                out.axpy(Complex64::new(0.5 * sign, 0.0), &flipped);
            }
            Observable::Projectors { qubits, parts } => {
                let part = parts.iter().find(|p| p.label == label).expect("label");
                out.apply_matrix_unchecked(&part.mat, qubits);
            }
        }
        out
    }

    /// All measurement outcomes with nonzero probability, ascending by label.
    pub fn measure(&self, o: &Observable) -> Result<Vec<MeasureBranch>, QsimError> {
        let mut branches = Vec::new();
        let mut total_p = 0.0;
        for (label, value) in o.branches() {
            let proj = self.project(o, label);
            let prob = proj.norm2();
            total_p += prob;
            if prob > BRANCH_TOL {
                let mut st = proj;
                st.normalize();
                branches.push(MeasureBranch {
                    label,
                    value,
                    prob,
                    state: st,
                });
            }
        }
        if (total_p - self.norm2()).abs() > NORM_TOL {
            return Err(QsimError::NormDrift(total_p));
        }
        Ok(branches)
    }

    /// ⟨ψ|O|ψ⟩ for a Pauli observable.
    pub fn expect_pauli(&self, op: &PauliOp, qubits: &[usize]) -> Result<f64, QsimError> {
        let mut flipped = self.clone();
        flipped.apply_pauli(op, qubits)?;
        Ok(self.inner(&flipped).re)
    }

    /// The purified measurement Σ_i P_i ⊗ X(label_i) recording outcomes into
    /// `result` (XOR semantics, so ±1 observables give an involution).
    pub fn purified_measure(&mut self, o: &Observable, result: &str) -> Result<(), QsimError> {
        let rq = self.layout.qubits(result)?;
        let labels = o.branches();
        let max_label = labels.iter().map(|(l, _)| *l).max().unwrap_or(0);
        if max_label > 0 && (rq.len() < 64) && max_label >= (1u64 << rq.len()) {
            return Err(QsimError::Dimension(format!(
                "result register {result} too narrow for outcome labels"
            )));
        }
        let before = self.norm2();
        let mut acc = SparseState {
            layout: self.layout.clone(),
            amps: BTreeMap::new(),
        };
        for (label, _) in labels {
            let mut proj = self.project(o, label);
            // XOR the label into the result register.
            let total = self.layout.total;
            if label != 0 {
                let mut xmask = 0u128;
                for (j, &q) in rq.iter().enumerate() {
                    if (label >> (rq.len() - 1 - j)) & 1 == 1 {
                        xmask |= qubit_mask(total, q);
                    }
                }
                let remapped: BTreeMap<u128, Complex64> =
                    proj.amps.iter().map(|(&k, &a)| (k ^ xmask, a)).collect();
                proj.amps = remapped;
            }
            acc.axpy(linalg::C_ONE, &proj);
        }
        self.amps = acc.amps;
        self.prune();
        self.assert_norm_preserved(before)
    }

    /// Applies `u` on `targets` only on branches where `control` reads `value`.
    pub fn controlled_apply(
        &mut self,
        u: &CMat,
        control: &str,
        value: u128,
        targets: &[usize],
    ) -> Result<(), QsimError> {
        let cq = self.layout.qubits(control)?;
        if cq.len() < 128 && value >= (1u128 << cq.len()) {
            return Err(QsimError::Dimension(format!(
                "control value {value} out of range for register {control}"
            )));
        }
        if !linalg::is_unitary(u, UNITARY_TOL) {
            return Err(QsimError::NotUnitary);
        }
        let before = self.norm2();
        let mut on: BTreeMap<u128, Complex64> = BTreeMap::new();
        let mut off: BTreeMap<u128, Complex64> = BTreeMap::new();
        for (&k, &a) in self.amps.iter() {
            if self.gather(k, &cq) as u128 == value {
                on.insert(k, a);
            } else {
                off.insert(k, a);
            }
        }
        let mut on_state = SparseState {
            layout: self.layout.clone(),
            amps: on,
        };
        on_state.apply_matrix_unchecked(u, targets);
        let mut out = off;
        for (k, a) in on_state.amps {
            *out.entry(k).or_insert(linalg::C_ZERO) += a;
        }
        self.amps = out;
        self.prune();
        self.assert_norm_preserved(before)
    }

    /// Projects qubit pair (a, b) onto the EPR basis E_{s0 s1} =
    /// (Z^{s0}X^{s1}⊗I)|φ+⟩. Returns the four branches ((s0,s1), prob, state)
    /// with the measured pair left in the matched basis state.
    pub fn measure_epr_basis(
        &self,
        qubit_a: usize,
        qubit_b: usize,
    ) -> Result<Vec<((u8, u8), f64, SparseState)>, QsimError> {
        let total = self.layout.total;
        if qubit_a >= total || qubit_b >= total || qubit_a == qubit_b {
            return Err(QsimError::Dimension("bad EPR qubit pair".into()));
        }
        let ma = qubit_mask(total, qubit_a);
        let mb = qubit_mask(total, qubit_b);
        let s = 1.0 / 2.0_f64.sqrt();
        // Coefficients of E_{s0 s1} on (bit_a, bit_b) ∈ {00, 01, 10, 11}.
        let table: [((u8, u8), [f64; 4]); 4] = [
            ((0, 0), [s, 0.0, 0.0, s]),
            ((0, 1), [0.0, s, s, 0.0]),
            ((1, 0), [s, 0.0, 0.0, -s]),
            ((1, 1), [0.0, s, -s, 0.0]),
        ];
        let mut results = Vec::new();
        for (outcome, coef) in table.iter() {
            let mut amps: BTreeMap<u128, Complex64> = BTreeMap::new();
            // Group by the key with both bits cleared; overlap = Σ conj(c_i)·a_i.
            let mut overlaps: BTreeMap<u128, Complex64> = BTreeMap::new();
            for (&k, &a) in self.amps.iter() {
                let pos = ((k & ma != 0) as usize) * 2 + ((k & mb != 0) as usize);
                let rest = k & !(ma | mb);
                *overlaps.entry(rest).or_insert(linalg::C_ZERO) += coef[pos] * a;
            }
            let mut prob = 0.0;
            for (&rest, &ov) in overlaps.iter() {
                prob += ov.norm_sqr();
                for (pos, &c) in coef.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let mut k = rest;
                    if pos & 2 != 0 {
                        k |= ma;
                    }
                    if pos & 1 != 0 {
                        k |= mb;
                    }
                    let amp = ov * c;
                    if amp.norm() >= PRUNE_TOL {
                        amps.insert(k, amp);
                    }
                }
            }
            if prob > BRANCH_TOL {
                let mut st = SparseState {
                    layout: self.layout.clone(),
                    amps,
                };
                st.normalize();
                results.push((*outcome, prob, st));
            }
        }
        Ok(results)
    }
}

/// A protocol execution context: classical randomness draws and measurement
/// branch points go through it so the same closure serves exact enumeration
/// and Monte Carlo sampling.
pub struct ProtocolRun<'a> {
    tape: &'a [usize],
    pos: usize,
    pub path_prob: f64,
    choices: Vec<usize>,
    options: Vec<usize>,
    rng: Option<&'a mut ChaCha20Rng>,
}

impl<'a> ProtocolRun<'a> {
    fn exact(tape: &'a [usize]) -> Self {
        ProtocolRun {
            tape,
            pos: 0,
            path_prob: 1.0,
            choices: Vec::new(),
            options: Vec::new(),
            rng: None,
        }
    }

    fn sampling(rng: &'a mut ChaCha20Rng) -> Self {
        ProtocolRun {
            tape: &[],
            pos: 0,
            path_prob: 1.0,
            choices: Vec::new(),
            options: Vec::new(),
            rng: Some(rng),
        }
    }

    /// Picks an index according to `probs` (they must sum to ~1). In exact
    /// mode every nonzero-probability option becomes a branch.
    pub fn choose_weighted(&mut self, probs: &[f64]) -> usize {
        let nonzero: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > BRANCH_TOL).collect();
        assert!(!nonzero.is_empty(), "no option has positive probability");
        if let Some(rng) = self.rng.as_deref_mut() {
            let r: f64 = rng.gen::<f64>();
            let mut acc = 0.0;
            for &i in &nonzero {
                acc += probs[i];
                if r < acc {
                    return i;
                }
            }
            return *nonzero.last().unwrap();
        }
        let slot = if self.pos < self.tape.len() {
            self.tape[self.pos]
        } else {
            0
        };
        self.pos += 1;
        self.choices.push(slot);
        self.options.push(nonzero.len());
        let picked = nonzero[slot];
        self.path_prob *= probs[picked];
        picked
    }

    pub fn choose_uniform(&mut self, n: usize) -> usize {
        let probs = vec![1.0 / n as f64; n];
        self.choose_weighted(&probs)
    }

    /// Measures and collapses in place, branching on the outcome. Returns
    /// (label, eigenvalue).
    pub fn branch_measure(
        &mut self,
        state: &mut SparseState,
        o: &Observable,
    ) -> Result<(u64, f64), QsimError> {
        let branches = state.measure(o)?;
        let probs: Vec<f64> = branches.iter().map(|b| b.prob).collect();
        let idx = self.choose_weighted(&probs);
        let b = &branches[idx];
        let (label, value) = (b.label, b.value);
        *state = branches.into_iter().nth(idx).unwrap().state;
        Ok((label, value))
    }

    /// EPR-basis measurement of a qubit pair as a branch point.
    pub fn branch_epr(
        &mut self,
        state: &mut SparseState,
        qubit_a: usize,
        qubit_b: usize,
    ) -> Result<(u8, u8), QsimError> {
        let branches = state.measure_epr_basis(qubit_a, qubit_b)?;
        let probs: Vec<f64> = branches.iter().map(|b| b.1).collect();
        let idx = self.choose_weighted(&probs);
        let outcome = branches[idx].0;
        *state = branches.into_iter().nth(idx).unwrap().2;
        Ok(outcome)
    }
}

/// Exact acceptance probability of a finite-randomness protocol by depth-first
/// replay over all branches. The closure must be deterministic given the
/// sequence of choices it receives.
pub fn branch_enumerate<F>(cap: usize, mut protocol: F) -> Result<f64, QsimError>
where
    F: FnMut(&mut ProtocolRun) -> Result<bool, QsimError>,
{
    let mut total = 0.0;
    let mut tape: Vec<usize> = Vec::new();
    let mut runs = 0usize;
    loop {
        runs += 1;
        if runs > cap {
            return Err(QsimError::BranchCapExceeded(cap));
        }
        let mut run = ProtocolRun::exact(&tape);
        let accept = protocol(&mut run)?;
        if accept {
            total += run.path_prob;
        }
        // Advance the tape like an odometer over per-point option counts.
        let mut i = run.choices.len();
        let next = loop {
            if i == 0 {
                break None;
            }
            i -= 1;
            if run.choices[i] + 1 < run.options[i] {
                let mut t = run.choices[..i].to_vec();
                t.push(run.choices[i] + 1);
                break Some(t);
            }
        };
        match next {
            Some(t) => tape = t,
            None => return Ok(total),
        }
    }
}

/// Monte Carlo acceptance estimate with a deterministic seed.
pub fn monte_carlo<F>(trials: usize, rng: &mut ChaCha20Rng, mut protocol: F) -> Result<f64, QsimError>
where
    F: FnMut(&mut ProtocolRun) -> Result<bool, QsimError>,
{
    let mut hits = 0usize;
    for _ in 0..trials {
        let mut run = ProtocolRun::sampling(rng);
        if protocol(&mut run)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin_flip_enumeration() {
        let p = branch_enumerate(100, |run| Ok(run.choose_uniform(2) == 0)).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn z_measurement_on_plus() {
        let layout = RegisterLayout::new(&[("P", 1)]).unwrap();
        let mut st = SparseState::new(layout);
        st.apply_unitary(&crate::linalg::gates::h(), &[0]).unwrap();
        let branches = st.measure(&Observable::z(0)).unwrap();
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].label, 0);
        assert!((branches[0].prob - 0.5).abs() < 1e-12);
        assert!((branches[0].value - 1.0).abs() < 1e-12);
    }
}
