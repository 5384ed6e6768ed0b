//! The teleportation-based interactive oracle proof. Prover and verifier
//! share nN EPR pairs; the prover teleports N witness copies into the
//! verifier's halves and commits to the one-time pad s via the oracle
//! commitment. The verifier samples a term per copy, measures the term's
//! observables sequentially on its halves, and asks the commitment for the
//! bit C(s) of the correction circuit
//!
//!   C(x) = ⊕_i (1 ⊕ ∨_j (r_{i,j} ⊕ ⟨a_{l_i,j}, x_{0,i}⟩ ⊕ ⟨b_{l_i,j}, x_{1,i}⟩
//!                      ⊕ ⟨c_{l_i,j}, x_{0,i} ⊕ x_{1,i}⟩)),
//!
//! accepting iff the commitment accepts with output 0. Honest runs accept
//! with probability ½ + (⟨φ|1−2H|φ⟩)^N / 2.
//!
//! Provers that commit to some string honestly get their commitment
//! verdict — Accept(C(s')) with probability one — without replaying the
//! proof system here; that exactness is established by the commitment
//! module's own tests. Only proof-forging provers branch on the verdict,
//! with the forged proof's acceptance taken from the exact analyzer.

use crate::circuit::{BooleanCircuit, CircuitBuilder, CircuitError};
use crate::cliffham::{CliffhamError, CliffordHamiltonian};
use crate::f2::BitVec;
use crate::ioc::{self, IocError, IocParams, IocVerdict};
use crate::pauli::{to_xzy, PauliError};
use crate::pcpp::{PcppError, PcppVerifier, QUERIES_PER_REPETITION};
use crate::pcpp_exact::{exact_acceptance, SideOracle};
use crate::qsim::{
    branch_enumerate, monte_carlo, Observable, ProtocolRun, QsimError, RegisterLayout,
    SparseState,
};
use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use std::fmt;

/// Teleported qubits cap: amplitude counts grow as 4^{nN}.
pub const TELEPORT_CAP: usize = 6;
/// Default branch-enumeration budget.
pub const EPR_BRANCH_CAP: usize = 1 << 22;

#[derive(Debug)]
pub enum EprError {
    Budget { qubits: usize, cap: usize },
    BadConfig(&'static str),
    BadWitness(&'static str),
    ProofCheatTooLarge { bits: usize },
    Cliffham(CliffhamError),
    Qsim(QsimError),
    Ioc(IocError),
    Pcpp(PcppError),
    Pauli(PauliError),
    Circuit(CircuitError),
}

impl fmt::Display for EprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EprError::Budget { qubits, cap } => {
                write!(f, "teleporting {qubits} qubits exceeds the cap of {cap}")
            }
            EprError::BadConfig(msg) => write!(f, "bad config: {msg}"),
            EprError::BadWitness(msg) => write!(f, "bad witness: {msg}"),
            EprError::ProofCheatTooLarge { bits } => {
                write!(f, "proof-forging prover needs the composed circuit to fit; {bits} pad bits do not")
            }
            EprError::Cliffham(e) => write!(f, "{e}"),
            EprError::Qsim(e) => write!(f, "{e}"),
            EprError::Ioc(e) => write!(f, "{e}"),
            EprError::Pcpp(e) => write!(f, "{e}"),
            EprError::Pauli(e) => write!(f, "{e}"),
            EprError::Circuit(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EprError {}

impl From<CliffhamError> for EprError {
    fn from(e: CliffhamError) -> Self {
        EprError::Cliffham(e)
    }
}
impl From<QsimError> for EprError {
    fn from(e: QsimError) -> Self {
        EprError::Qsim(e)
    }
}
impl From<IocError> for EprError {
    fn from(e: IocError) -> Self {
        EprError::Ioc(e)
    }
}
impl From<PcppError> for EprError {
    fn from(e: PcppError) -> Self {
        EprError::Pcpp(e)
    }
}
impl From<PauliError> for EprError {
    fn from(e: PauliError) -> Self {
        EprError::Pauli(e)
    }
}
impl From<CircuitError> for EprError {
    fn from(e: CircuitError) -> Self {
        EprError::Circuit(e)
    }
}

#[derive(Debug, Clone)]
pub struct EprConfig {
    pub copies: usize,
    pub epsilon: f64,
}

impl Default for EprConfig {
    fn default() -> Self {
        EprConfig {
            copies: 1,
            epsilon: 0.001,
        }
    }
}

impl EprConfig {
    pub fn ioc_params(&self) -> IocParams {
        IocParams {
            epsilon: self.epsilon,
            ..IocParams::default()
        }
    }

    /// Oracle bits the verifier reads: the claimed bit plus the proof
    /// system's constant budget. Independent of n and N.
    pub fn verifier_queries(&self) -> usize {
        1 + self.ioc_params().repetitions() * QUERIES_PER_REPETITION
    }
}

#[derive(Clone)]
pub enum EprProver {
    /// Teleports the ground state and commits to the measured pad.
    Honest,
    /// Teleports the given n-qubit state instead of the ground state.
    WrongWitness(Vec<Complex64>),
    /// Measures honestly but flips one bit of the pad before committing.
    OtpBitFlip(usize),
    /// Teleports honestly, then commits to the all-zero pad.
    CommitZero,
    /// Never touches its EPR halves; commits to the all-zero pad.
    Stale,
    /// Commits honestly but always claims the output bit is 0, forging a
    /// proof when that is a lie.
    BadProof,
}

impl EprProver {
    pub fn name(&self) -> &'static str {
        match self {
            EprProver::Honest => "honest",
            EprProver::WrongWitness(_) => "wrong-witness",
            EprProver::OtpBitFlip(_) => "otp-bit-flip",
            EprProver::CommitZero => "commit-zero",
            EprProver::Stale => "stale-entanglement",
            EprProver::BadProof => "bad-proof",
        }
    }

    fn teleports(&self) -> bool {
        !matches!(self, EprProver::Stale)
    }
}

/// The canonical cheats, instantiated against the given Hamiltonian.
pub fn cheat_library(h: &CliffordHamiltonian) -> Result<Vec<EprProver>, EprError> {
    let spec = h.spectrum()?;
    let top = spec.vectors.column(spec.eigenvalues.len() - 1);
    Ok(vec![
        EprProver::WrongWitness(top.iter().copied().collect()),
        EprProver::OtpBitFlip(0),
        EprProver::CommitZero,
        EprProver::Stale,
        EprProver::BadProof,
    ])
}

/// ½ + (⟨ψ|1−2H|ψ⟩)^N / 2 for an explicit witness.
pub fn witness_formula(
    h: &CliffordHamiltonian,
    psi: &[Complex64],
    copies: usize,
) -> Result<f64, EprError> {
    let hm = h.matrix()?;
    if psi.len() != hm.nrows() {
        return Err(EprError::BadWitness("dimension"));
    }
    let v = nalgebra::DVector::from_column_slice(psi);
    let n2 = v.norm();
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(EprError::BadWitness("not normalized"));
    }
    let e = (v.adjoint() * (&hm * &v))[(0, 0)].re;
    let val: f64 = 1.0 - 2.0 * e;
    Ok(0.5 + val.powi(copies as i32) / 2.0)
}

/// ½ + (1 − 2 λ_min)^N / 2: the honest acceptance.
pub fn honest_formula(h: &CliffordHamiltonian, copies: usize) -> Result<f64, EprError> {
    let lam = h.lambda_min()?;
    let val: f64 = 1.0 - 2.0 * lam;
    Ok(0.5 + val.powi(copies as i32) / 2.0)
}

/// The corrected acceptance predicate C(s) evaluated directly. r[i] holds
/// the outcome bits of copy i in measurement order.
pub fn predicate(
    h: &CliffordHamiltonian,
    l: &[usize],
    r: &[Vec<u8>],
    s0: &BitVec,
    s1: &BitVec,
) -> Result<u8, EprError> {
    let n = h.n();
    let mut parity = 0u8;
    for (i, &li) in l.iter().enumerate() {
        let obs = h.term_paulis(li)?;
        let s0_i = s0.slice(i * n, n);
        let s1_i = s1.slice(i * n, n);
        let mut any = 0u8;
        for (j, o) in obs.iter().enumerate() {
            let (_d, a, b, c) = to_xzy(o)?;
            let corr = a.inner(&s0_i).unwrap()
                ^ b.inner(&s1_i).unwrap()
                ^ c.inner(&s0_i.xor(&s1_i).unwrap()).unwrap();
            any |= r[i][j] ^ corr;
        }
        parity ^= 1 ^ any;
    }
    Ok(parity)
}

/// C as an explicit Boolean circuit over the 2Nn pad bits,
/// x_{0,i,j} at wire i·n+j and x_{1,i,j} at wire Nn+i·n+j.
pub fn accept_circuit(
    h: &CliffordHamiltonian,
    l: &[usize],
    r: &[Vec<u8>],
) -> Result<BooleanCircuit, EprError> {
    let n = h.n();
    let copies = l.len();
    let nn = n * copies;
    let mut bld = CircuitBuilder::new(2 * nn);
    let mut copy_terms = Vec::with_capacity(copies);
    for (i, &li) in l.iter().enumerate() {
        let obs = h.term_paulis(li)?;
        let mut or_acc: Option<usize> = None;
        for (j, o) in obs.iter().enumerate() {
            let (_d, a, b, c) = to_xzy(o)?;
            let mut w: Option<usize> = None;
            let feed = |bld: &mut CircuitBuilder, wire: usize, w: &mut Option<usize>| {
                *w = Some(match *w {
                    None => wire,
                    Some(prev) => bld.xor(prev, wire),
                });
            };
            for q in 0..n {
                if a.get(q) ^ c.get(q) == 1 {
                    feed(&mut bld, i * n + q, &mut w);
                }
                if b.get(q) ^ c.get(q) == 1 {
                    feed(&mut bld, nn + i * n + q, &mut w);
                }
            }
            let mut wire = match w {
                Some(wire) => wire,
                None => bld.const0(),
            };
            if r[i][j] == 1 {
                wire = bld.not(wire);
            }
            or_acc = Some(match or_acc {
                None => wire,
                Some(prev) => bld.or(prev, wire),
            });
        }
        let fired = or_acc.expect("terms are never empty");
        copy_terms.push(bld.not(fired));
    }
    let mut out = copy_terms[0];
    for &t in &copy_terms[1..] {
        out = bld.xor(out, t);
    }
    Ok(bld.finish(out))
}

struct Session {
    n: usize,
    copies: usize,
    s0: BitVec,
    s1: BitVec,
    l: Vec<usize>,
    r: Vec<Vec<u8>>,
}

/// Everything up to the commitment verdict: state preparation, the
/// prover's (possible) teleportation, and the verifier's sequential
/// measurements.
fn run_session(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    prover: &EprProver,
    run: &mut ProtocolRun,
) -> Result<Session, EprError> {
    let n = h.n();
    let copies = config.copies;
    if copies == 0 {
        return Err(EprError::BadConfig("at least one copy"));
    }
    let nn = n * copies;
    if nn > TELEPORT_CAP {
        return Err(EprError::Budget {
            qubits: nn,
            cap: TELEPORT_CAP,
        });
    }
    let layout = RegisterLayout::new(&[("W", nn), ("R", nn), ("Rp", nn)])?;
    let w_off = layout.qubit("W", 0)?;
    let r_off = layout.qubit("R", 0)?;
    let rp = layout.qubits("Rp")?;
    let mut state = SparseState::new(layout);
    state.make_epr("R", "Rp")?;

    let mut s0 = BitVec::zeros(nn);
    let mut s1 = BitVec::zeros(nn);
    if prover.teleports() {
        let witness: Vec<Complex64> = match prover {
            EprProver::WrongWitness(v) => v.clone(),
            _ => h.ground_state()?.iter().copied().collect(),
        };
        if witness.len() != 1 << n {
            return Err(EprError::BadWitness("dimension"));
        }
        let mut full = vec![Complex64::new(1.0, 0.0)];
        for _ in 0..copies {
            let mut next = Vec::with_capacity(full.len() * witness.len());
            for a in &full {
                for b in &witness {
                    next.push(a * b);
                }
            }
            full = next;
        }
        state.load_register("W", &full)?;
        for q in 0..nn {
            let (b0, b1) = run.branch_epr(&mut state, w_off + q, r_off + q)?;
            s0.set(q, b0);
            s1.set(q, b1);
        }
    }

    let mut l = Vec::with_capacity(copies);
    let mut r = Vec::with_capacity(copies);
    for i in 0..copies {
        let li = run.choose_uniform(h.num_terms());
        let obs = h.term_paulis(li)?;
        let block: Vec<usize> = rp[i * n..(i + 1) * n].to_vec();
        let mut ri = Vec::with_capacity(obs.len());
        for o in &obs {
            let observable = Observable::pauli(o.clone(), block.clone())?;
            let (label, _value) = run.branch_measure(&mut state, &observable)?;
            ri.push(label as u8);
        }
        l.push(li);
        r.push(ri);
    }

    Ok(Session {
        n,
        copies,
        s0,
        s1,
        l,
        r,
    })
}

/// One full protocol branch: returns the verifier's accept bit, with the
/// commitment verdict resolved exactly (a weighted branch for forgeries).
fn protocol_body(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    prover: &EprProver,
    run: &mut ProtocolRun,
) -> Result<bool, EprError> {
    let session = run_session(h, config, prover, run)?;
    let nn = session.n * session.copies;

    // The committed pad.
    let (c0, c1) = match prover {
        EprProver::CommitZero | EprProver::Stale => (BitVec::zeros(nn), BitVec::zeros(nn)),
        EprProver::OtpBitFlip(idx) => {
            let mut c0 = session.s0.clone();
            let mut c1 = session.s1.clone();
            if *idx < nn {
                c0.flip(*idx);
            } else {
                c1.flip(*idx - nn);
            }
            (c0, c1)
        }
        _ => (session.s0.clone(), session.s1.clone()),
    };

    let cbit = predicate(h, &session.l, &session.r, &c0, &c1)?;
    match prover {
        EprProver::BadProof if cbit == 1 => {
            // Claims 0 anyway; the forged proof is the composed circuit's
            // own wiring of the commitment, whose acceptance the analyzer
            // gives exactly.
            let q = forged_proof_acceptance(h, config, &session, &c0, &c1)?;
            let pick = run.choose_weighted(&[1.0 - q, q]);
            Ok(pick == 1)
        }
        _ => Ok(cbit == 0),
    }
}

fn forged_proof_acceptance(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    session: &Session,
    c0: &BitVec,
    c1: &BitVec,
) -> Result<f64, EprError> {
    let nn = session.n * session.copies;
    if nn != 1 {
        // The composed circuit only fits the proof system's size cap for a
        // two-bit pad.
        return Err(EprError::ProofCheatTooLarge { bits: 2 * nn });
    }
    let circuit = accept_circuit(h, &session.l, &session.r)?;
    let composed = ioc::composed_circuit(&circuit, 0)?;
    let params = config.ioc_params();
    let verifier = PcppVerifier::new(composed, params.pcpp_params())?;
    let mut s_full = BitVec::zeros(2 * nn);
    for q in 0..nn {
        s_full.set(q, c0.get(q));
        s_full.set(nn + q, c1.get(q));
    }
    let m = ioc::commit(&s_full)?;
    let z = verifier.circuit.wires(&m)?;
    let fa = SideOracle::codeword(z.clone());
    let fb = SideOracle::codeword(z.tensor(&z));
    let single = exact_acceptance(&verifier, &m, &fa, &fb)
        .expect("clean linear tables are analyzable");
    Ok(single.repetition().powi(params.repetitions() as i32))
}

/// Exact acceptance by full branch enumeration.
pub fn exact_acceptance_epr(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    prover: &EprProver,
) -> Result<f64, EprError> {
    let mut failure: Option<EprError> = None;
    let p = branch_enumerate(EPR_BRANCH_CAP, |run| {
        match protocol_body(h, config, prover, run) {
            Ok(b) => Ok(b),
            Err(EprError::Qsim(e)) => Err(e),
            Err(other) => {
                failure = Some(other);
                Err(QsimError::Dimension("protocol failure".into()))
            }
        }
    });
    match (p, failure) {
        (_, Some(e)) => Err(e),
        (Ok(p), None) => Ok(p),
        (Err(e), None) => Err(EprError::Qsim(e)),
    }
}

/// Monte Carlo acceptance through the same protocol body.
pub fn mc_acceptance_epr(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    prover: &EprProver,
    trials: usize,
    rng: &mut ChaCha20Rng,
) -> Result<f64, EprError> {
    let mut failure: Option<EprError> = None;
    let p = monte_carlo(trials, rng, |run| {
        match protocol_body(h, config, prover, run) {
            Ok(b) => Ok(b),
            Err(EprError::Qsim(e)) => Err(e),
            Err(other) => {
                failure = Some(other);
                Err(QsimError::Dimension("protocol failure".into()))
            }
        }
    });
    match (p, failure) {
        (_, Some(e)) => Err(e),
        (Ok(p), None) => Ok(p),
        (Err(e), None) => Err(EprError::Qsim(e)),
    }
}

/// Marginal distribution of the teleportation pad for a teleporting
/// prover, indexed by s0‖s1 read as an integer. A correct run leaves the
/// pad exactly uniform whatever the witness.
pub fn pad_distribution(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    prover: &EprProver,
) -> Result<Vec<f64>, EprError> {
    let nn = h.n() * config.copies;
    let mut dist = vec![0.0; 1usize << (2 * nn)];
    let mut failure: Option<EprError> = None;
    branch_enumerate(EPR_BRANCH_CAP, |run| {
        match run_session(h, config, prover, run) {
            Ok(s) => {
                let idx = ((s.s0.to_index() as usize) << nn) | s.s1.to_index() as usize;
                dist[idx] += run.path_prob;
                Ok(false)
            }
            Err(EprError::Qsim(e)) => Err(e),
            Err(other) => {
                failure = Some(other);
                Err(QsimError::Dimension("protocol failure".into()))
            }
        }
    })
    .map_err(|e| failure.take().unwrap_or(EprError::Qsim(e)))?;
    Ok(dist)
}

/// Transcript of a live run, including the real commitment exchange.
#[derive(Debug, Serialize)]
pub struct EprTranscript {
    pub s0: String,
    pub s1: String,
    pub l: Vec<usize>,
    pub r: Vec<Vec<u8>>,
    pub claimed: u8,
    pub verdict: String,
    pub accepted: bool,
    pub queries: usize,
}

/// A single sampled run of the whole protocol with the commitment
/// executed for real (proof tables materialized, every oracle query
/// issued). Needs n·N = 1.
pub fn live_session(
    h: &CliffordHamiltonian,
    config: &EprConfig,
    rng: &mut ChaCha20Rng,
) -> Result<EprTranscript, EprError> {
    let nn = h.n() * config.copies;
    if nn != 1 {
        return Err(EprError::Budget {
            qubits: nn,
            cap: 1,
        });
    }
    let mut stash: Option<Session> = None;
    let mut failure: Option<EprError> = None;
    monte_carlo(1, rng, |run| {
        match run_session(h, config, &EprProver::Honest, run) {
            Ok(s) => {
                stash = Some(s);
                Ok(true)
            }
            Err(EprError::Qsim(e)) => Err(e),
            Err(other) => {
                failure = Some(other);
                Err(QsimError::Dimension("protocol failure".into()))
            }
        }
    })
    .map_err(|e| failure.take().unwrap_or(EprError::Qsim(e)))?;
    let session = stash.expect("session ran");

    let mut s_full = BitVec::zeros(2);
    s_full.set(0, session.s0.get(0));
    s_full.set(1, session.s1.get(0));
    let circuit = accept_circuit(h, &session.l, &session.r)?;
    let m = ioc::commit(&s_full)?;
    let resp = ioc::respond(&s_full, &circuit)?;
    let params = config.ioc_params();
    let m_fn = |p: usize| m.get(p);
    let out = ioc::verify(
        &circuit,
        &params,
        &m_fn,
        resp.r,
        &resp.proof.fa_oracle(),
        &resp.proof.fb_oracle(),
        rng,
    )?;
    let accepted = out.verdict == IocVerdict::Accept(0);
    Ok(EprTranscript {
        s0: session.s0.to_string(),
        s1: session.s1.to_string(),
        l: session.l,
        r: session.r,
        claimed: resp.r,
        verdict: match out.verdict {
            IocVerdict::Accept(b) => format!("accept({b})"),
            IocVerdict::Reject => "reject".into(),
        },
        accepted,
        queries: out.queries,
    })
}
