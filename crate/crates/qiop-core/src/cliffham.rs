//! Clifford Hamiltonians: uniform averages of terms C†|0..0⟩⟨0..0|C with C
//! a Clifford gate on at most five sites. Each term's projector decomposes
//! into commuting Hermitian Pauli observables O_{i,j} = C†Z_jC, which is
//! what makes the energy measurable with Pauli instruments; this module
//! supplies the decomposition, dense spectra for small instances, the
//! tensor-power gap amplification, and the masked product observables
//! O(t,l) with their (d, a, b, c) normal form.

use crate::f2::BitVec;
use crate::linalg::{self, CMat};
use crate::pauli::{self, clifford_conjugate, CliffordGate, PauliError, PauliOp};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::OnceLock;

/// Dense spectra only below this width.
pub const SPECTRUM_CAP: usize = 10;
/// Mask slots per copy; terms on fewer sites pad with identities.
pub const MASK_SLOTS: usize = 5;

#[derive(Debug)]
pub enum CliffhamError {
    NoTerms,
    BadSupport { term: usize },
    ArityMismatch { term: usize },
    NotClifford { term: usize },
    TooLarge { n: usize, cap: usize },
    TermIndex { index: usize, terms: usize },
    BadSample(&'static str),
    EvenCopies { copies: usize },
    Pauli(PauliError),
}

impl fmt::Display for CliffhamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliffhamError::NoTerms => write!(f, "a Hamiltonian needs at least one term"),
            CliffhamError::BadSupport { term } => {
                write!(f, "term {term}: support out of range, repeated, or too wide")
            }
            CliffhamError::ArityMismatch { term } => {
                write!(f, "term {term}: gate arity does not match support size")
            }
            CliffhamError::NotClifford { term } => {
                write!(f, "term {term}: gate fails the Clifford conjugation test")
            }
            CliffhamError::TooLarge { n, cap } => {
                write!(f, "dense computation needs n ≤ {cap}, instance has {n}")
            }
            CliffhamError::TermIndex { index, terms } => {
                write!(f, "term index {index} out of range (m = {terms})")
            }
            CliffhamError::BadSample(msg) => write!(f, "bad sample: {msg}"),
            CliffhamError::EvenCopies { copies } => {
                write!(f, "amplification needs an odd copy count, got {copies}")
            }
            CliffhamError::Pauli(e) => write!(f, "pauli: {e}"),
        }
    }
}

impl std::error::Error for CliffhamError {}

impl From<PauliError> for CliffhamError {
    fn from(e: PauliError) -> Self {
        CliffhamError::Pauli(e)
    }
}

#[derive(Debug)]
pub struct CliffordTerm {
    pub support: Vec<usize>,
    pub gate: CliffordGate,
}

pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column k pairs with eigenvalues[k].
    pub vectors: CMat,
}

pub struct CliffordHamiltonian {
    n: usize,
    terms: Vec<CliffordTerm>,
    spectrum: OnceLock<Spectrum>,
}

impl fmt::Debug for CliffordHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CliffordHamiltonian(n={}, m={})", self.n, self.terms.len())
    }
}

impl CliffordHamiltonian {
    pub fn new(n: usize, raw: Vec<(Vec<usize>, CMat)>) -> Result<Self, CliffhamError> {
        if raw.is_empty() {
            return Err(CliffhamError::NoTerms);
        }
        let mut terms = Vec::with_capacity(raw.len());
        for (idx, (support, mat)) in raw.into_iter().enumerate() {
            let mut seen = vec![false; n];
            let ok = !support.is_empty()
                && support.len() <= MASK_SLOTS
                && support.iter().all(|&q| {
                    let fresh = q < n && !seen[q];
                    if q < n {
                        seen[q] = true;
                    }
                    fresh
                });
            if !ok {
                return Err(CliffhamError::BadSupport { term: idx });
            }
            let gate = CliffordGate::new(mat).map_err(|_| CliffhamError::NotClifford { term: idx })?;
            if gate.arity() != support.len() {
                return Err(CliffhamError::ArityMismatch { term: idx });
            }
            if !gate.is_clifford() {
                return Err(CliffhamError::NotClifford { term: idx });
            }
            terms.push(CliffordTerm { support, gate });
        }
        Ok(CliffordHamiltonian {
            n,
            terms,
            spectrum: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, i: usize) -> Result<&CliffordTerm, CliffhamError> {
        self.terms.get(i).ok_or(CliffhamError::TermIndex {
            index: i,
            terms: self.terms.len(),
        })
    }

    /// The commuting observables O_{i,j} = C_i† Z_j C_i, embedded on the
    /// full register; one per support site.
    pub fn term_paulis(&self, i: usize) -> Result<Vec<PauliOp>, CliffhamError> {
        let term = self.term(i)?;
        let mut out = Vec::with_capacity(term.support.len());
        for (j, _) in term.support.iter().enumerate() {
            let z = PauliOp::single(self.n, term.support[j], 'Z');
            out.push(clifford_conjugate(&term.gate, &term.support, &z)?);
        }
        Ok(out)
    }

    /// C_i†|0..0⟩⟨0..0|C_i on the support sites, as a local matrix.
    pub fn term_projector_local(&self, i: usize) -> Result<CMat, CliffhamError> {
        let term = self.term(i)?;
        let dim = term.gate.matrix().nrows();
        let mut e0 = DVector::<Complex64>::zeros(dim);
        e0[0] = Complex64::new(1.0, 0.0);
        let psi = term.gate.matrix().adjoint() * e0;
        let mut p = CMat::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                p[(r, c)] = psi[r] * psi[c].conj();
            }
        }
        Ok(p)
    }

    /// Dense n-qubit matrix of the whole Hamiltonian.
    pub fn matrix(&self) -> Result<CMat, CliffhamError> {
        if self.n > SPECTRUM_CAP {
            return Err(CliffhamError::TooLarge {
                n: self.n,
                cap: SPECTRUM_CAP,
            });
        }
        let dim = 1usize << self.n;
        let mut h = CMat::zeros(dim, dim);
        for i in 0..self.terms.len() {
            let local = self.term_projector_local(i)?;
            h += embed_matrix(&local, self.n, &self.terms[i].support);
        }
        let scale = Complex64::new(1.0 / self.terms.len() as f64, 0.0);
        Ok(h * scale)
    }

    pub fn spectrum(&self) -> Result<&Spectrum, CliffhamError> {
        if self.n > SPECTRUM_CAP {
            return Err(CliffhamError::TooLarge {
                n: self.n,
                cap: SPECTRUM_CAP,
            });
        }
        if self.spectrum.get().is_none() {
            let h = self.matrix()?;
            let (eigenvalues, vectors) = linalg::hermitian_eigen(&h);
            let _ = self.spectrum.set(Spectrum {
                eigenvalues,
                vectors,
            });
        }
        Ok(self.spectrum.get().expect("just set"))
    }

    pub fn lambda_min(&self) -> Result<f64, CliffhamError> {
        Ok(self.spectrum()?.eigenvalues[0])
    }

    pub fn ground_state(&self) -> Result<DVector<Complex64>, CliffhamError> {
        let s = self.spectrum()?;
        Ok(s.vectors.column(0).into_owned())
    }

    pub fn to_json(&self) -> String {
        let terms = self
            .terms
            .iter()
            .map(|t| TermJson {
                support: t.support.clone(),
                clifford: t
                    .gate
                    .matrix()
                    .row_iter()
                    .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                    .collect(),
            })
            .collect();
        serde_json::to_string_pretty(&InstanceJson {
            n: self.n,
            terms,
            known_lambda_min: None,
        })
        .expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<(Self, Option<f64>), Box<dyn std::error::Error>> {
        let parsed: InstanceJson = serde_json::from_str(s)?;
        let raw = parsed
            .terms
            .into_iter()
            .map(|t| {
                let dim = t.clifford.len();
                let mut m = CMat::zeros(dim, dim);
                for (r, row) in t.clifford.iter().enumerate() {
                    for (c, z) in row.iter().enumerate() {
                        m[(r, c)] = Complex64::new(z[0], z[1]);
                    }
                }
                (t.support, m)
            })
            .collect();
        let h = CliffordHamiltonian::new(parsed.n, raw)?;
        Ok((h, parsed.known_lambda_min))
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    support: Vec<usize>,
    clifford: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n: usize,
    terms: Vec<TermJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    known_lambda_min: Option<f64>,
}

/// Lifts a local operator on the given sites to the full n-qubit space.
pub fn embed_matrix(local: &CMat, n: usize, sites: &[usize]) -> CMat {
    let w = sites.len();
    assert_eq!(local.nrows(), 1 << w);
    let dim = 1usize << n;
    let mut out = CMat::zeros(dim, dim);
    for col in 0..dim {
        let mut lcol = 0usize;
        for (k, &q) in sites.iter().enumerate() {
            let bit = (col >> (n - 1 - q)) & 1;
            lcol |= bit << (w - 1 - k);
        }
        for lrow in 0..(1 << w) {
            let val = local[(lrow, lcol)];
            if val.norm_sqr() == 0.0 {
                continue;
            }
            let mut row = col;
            for (k, &q) in sites.iter().enumerate() {
                let bit = (lrow >> (w - 1 - k)) & 1;
                let mask = 1usize << (n - 1 - q);
                row = (row & !mask) | (bit * mask);
            }
            out[(row, col)] += val;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AmplifiedSample {
    pub copies: usize,
    pub l: Vec<usize>,
    pub t: BitVec,
}

impl AmplifiedSample {
    pub fn new(
        h: &CliffordHamiltonian,
        l: Vec<usize>,
        t: BitVec,
    ) -> Result<Self, CliffhamError> {
        let copies = l.len();
        if copies == 0 {
            return Err(CliffhamError::BadSample("no copies"));
        }
        if t.len() != MASK_SLOTS * copies {
            return Err(CliffhamError::BadSample("mask length"));
        }
        if l.iter().any(|&i| i >= h.num_terms()) {
            return Err(CliffhamError::BadSample("term index"));
        }
        Ok(AmplifiedSample { copies, l, t })
    }
}

/// O(t, l) = ⊗_i ∏_j O_{l_i, j}^{t_{i,j}} over N·n qubits. Mask slots past
/// a term's width select identities. The factors within a copy commute, so
/// the product is Hermitian.
pub fn masked_observable(
    h: &CliffordHamiltonian,
    sample: &AmplifiedSample,
) -> Result<PauliOp, CliffhamError> {
    let n = h.n();
    let mut acc: Option<PauliOp> = None;
    for (i, &li) in sample.l.iter().enumerate() {
        let obs = h.term_paulis(li)?;
        let mut p = PauliOp::identity(n);
        for j in 0..MASK_SLOTS {
            if sample.t.get(MASK_SLOTS * i + j) == 1 {
                if let Some(o) = obs.get(j) {
                    p = p.mul(o)?;
                }
            }
        }
        acc = Some(match acc {
            None => p,
            Some(a) => a.tensor(&p),
        });
    }
    let out = acc.expect("at least one copy");
    assert!(out.is_hermitian(), "masked product must be Hermitian");
    Ok(out)
}

/// λ_max((1 − 2H)^{⊗N}) from the spectrum: the best product of N factors
/// drawn from the eigenvalues of 1 − 2H uses only the two extremes.
pub fn amplified_extreme(h: &CliffordHamiltonian, copies: usize) -> Result<f64, CliffhamError> {
    amplified_extreme_from_spectrum(&h.spectrum()?.eigenvalues, copies)
}

pub fn amplified_extreme_from_spectrum(
    eigenvalues: &[f64],
    copies: usize,
) -> Result<f64, CliffhamError> {
    if copies % 2 == 0 {
        return Err(CliffhamError::EvenCopies { copies });
    }
    assert!(!eigenvalues.is_empty());
    let mu_hi = eigenvalues.iter().fold(f64::MIN, |m, &l| m.max(1.0 - 2.0 * l));
    let mu_lo = eigenvalues.iter().fold(f64::MAX, |m, &l| m.min(1.0 - 2.0 * l));
    let mut best = f64::MIN;
    for b in 0..=copies {
        best = best.max(mu_hi.powi((copies - b) as i32) * mu_lo.powi(b as i32));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuKind {
    Mu1,
    Mu2,
}

/// The pair (b(t,l)+c(t,l), a(t,l)+c(t,l)) for a fixed sample.
pub fn mu_pair(
    h: &CliffordHamiltonian,
    sample: &AmplifiedSample,
) -> Result<(BitVec, BitVec), CliffhamError> {
    let o = masked_observable(h, sample)?;
    let (_d, a, b, c) = pauli::to_xzy(&o)?;
    Ok((b.xor(&c).unwrap(), a.xor(&c).unwrap()))
}

/// Draws t, l (and the mask r for μ2) uniformly and returns the measured
/// pair.
pub fn sample_mu<R: Rng>(
    h: &CliffordHamiltonian,
    copies: usize,
    which: MuKind,
    rng: &mut R,
) -> Result<(BitVec, BitVec), CliffhamError> {
    let l: Vec<usize> = (0..copies).map(|_| rng.gen_range(0..h.num_terms())).collect();
    let t = crate::pcpp::random_bitvec(rng, MASK_SLOTS * copies);
    let sample = AmplifiedSample::new(h, l, t)?;
    let (first, second) = mu_pair(h, &sample)?;
    Ok(match which {
        MuKind::Mu1 => (first, second),
        MuKind::Mu2 => {
            let r = crate::pcpp::random_bitvec(rng, h.n() * copies);
            (first.xor(&r).unwrap(), second)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gates;

    fn proj1() -> CliffordHamiltonian {
        // Single term |1⟩⟨1| on one qubit: C = X.
        CliffordHamiltonian::new(1, vec![(vec![0], gates::x())]).unwrap()
    }

    #[test]
    fn term_paulis_examples() {
        let id1 = CMat::identity(2, 2);
        let h = CliffordHamiltonian::new(1, vec![(vec![0], id1)]).unwrap();
        assert_eq!(h.term_paulis(0).unwrap(), vec![PauliOp::single(1, 0, 'Z')]);

        let hx = proj1();
        let minus_z = PauliOp::new(2, BitVec::zeros(1), BitVec::from_str01("1").unwrap());
        assert_eq!(hx.term_paulis(0).unwrap(), vec![minus_z]);

        let hh = CliffordHamiltonian::new(1, vec![(vec![0], gates::h())]).unwrap();
        assert_eq!(hh.term_paulis(0).unwrap(), vec![PauliOp::single(1, 0, 'X')]);
    }

    #[test]
    fn single_term_spectrum() {
        let h = proj1();
        let s = h.spectrum().unwrap();
        assert!((s.eigenvalues[0] - 0.0).abs() < 1e-12);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-12);
        let g = h.ground_state().unwrap();
        assert!((g[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplification_examples() {
        assert!((amplified_extreme_from_spectrum(&[0.0, 1.0], 3).unwrap() - 1.0).abs() < 1e-12);
        assert!(amplified_extreme_from_spectrum(&[0.5, 0.5], 3).unwrap().abs() < 1e-12);
        assert!(matches!(
            amplified_extreme_from_spectrum(&[0.1], 2),
            Err(CliffhamError::EvenCopies { .. })
        ));
    }
}
