//! Last-round energy checks layered on the coded qubit tests.
//!
//! After the two measurement rounds the verifier flips a three-sided coin.
//! With probability 1/3 it runs the qubit tests of [`crate::qubit_tests`]
//! unchanged. With probability 1/3 it asks the prover to measure every
//! stabilizer observable of a random term assignment l on its witness and
//! to report the outcome word in Hadamard-coded form, together with the
//! claimed value of the all-copies-clear parity and a proximity proof that
//! the claim matches the coded word; the verifier accepts iff the claim is
//! 0. With the remaining 1/3 it measures a random masked product of the
//! same observables itself, by phase kickback against a control qubit it
//! threads through both rounds, and accepts iff the prover's masked parity
//! reply agrees with its own outcome, again under a proximity proof.
//!
//! The kickback control starts in |+⟩, picks up the round-one factor
//! through a self-corrected two-point read of the coded message, the
//! round-two factor likewise, then a phase-gate power fixes the i^|c|
//! convention for products with overlapping X and Z parts, and a final
//! Hadamard turns the accumulated sign into a Z-basis outcome. For an
//! honest prover that procedure is distributionally identical to measuring
//! the masked observable on the witness directly.
//!
//! Everything here runs at desk scale: assignments carry at most
//! [`ENERGY_BIT_CAP`] measurement bits, outcome families are dense
//! matrices on the witness register, and acceptances are exact rationals
//! obtained by branch enumeration (masks grouped by the observable they
//! induce) unless a sampled mode is requested explicitly.

use crate::circuit::{BooleanCircuit, CircuitBuilder};
use crate::cliffham::{
    masked_observable, AmplifiedSample, CliffhamError, CliffordHamiltonian, MuKind, MASK_SLOTS,
};
use crate::f2::{BitVec, F2Error};
use crate::hadcode::{blr_reject_exact, blr_test, self_correct, HadError, HadamardCode};
use crate::linalg::{self, CMat, C_ONE};
use crate::pauli::{self, PauliError};
use crate::pcpp::{self, PcppError, PcppParams, PcppProof, PcppVerifier};
use crate::qsim::{
    branch_enumerate, Observable, ProjPart, ProtocolRun, QsimError, RegisterLayout, SparseState,
};
use crate::qubit_tests::{
    apply_ops, build_mqt_adversary, mqt_acceptance, mqt_honest_prover, mqt_run_sampled, mu_table,
    AdversarySpec, MqtCheckSpec, MqtKind, MqtProver, PairDist, QubitTestError, MQT_K_CAP,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::cell::RefCell;
use std::fmt;

/// Cap on realized measurement bits per term assignment.
pub const ENERGY_BIT_CAP: usize = 10;
/// Branch budget for one enumerated protocol run.
pub const ENERGY_BRANCH_CAP: usize = 1 << 22;

#[derive(Debug)]
pub enum EnergyError {
    BadProver(&'static str),
    BadInput(&'static str),
    BadFamily(String),
    Budget { bits: usize, cap: usize },
    Qsim(QsimError),
    Had(HadError),
    Cliffham(CliffhamError),
    Pauli(PauliError),
    Pcpp(PcppError),
    F2(F2Error),
    QubitTest(QubitTestError),
}

impl fmt::Display for EnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyError::BadProver(m) => write!(f, "bad prover: {m}"),
            EnergyError::BadInput(m) => write!(f, "bad input: {m}"),
            EnergyError::BadFamily(m) => write!(f, "unknown adversary family '{m}'"),
            EnergyError::Budget { bits, cap } => {
                write!(f, "assignment carries {bits} measurement bits, cap is {cap}")
            }
            EnergyError::Qsim(e) => write!(f, "simulator: {e}"),
            EnergyError::Had(e) => write!(f, "code: {e}"),
            EnergyError::Cliffham(e) => write!(f, "hamiltonian: {e}"),
            EnergyError::Pauli(e) => write!(f, "pauli: {e}"),
            EnergyError::Pcpp(e) => write!(f, "proximity proof: {e}"),
            EnergyError::F2(e) => write!(f, "bit vector: {e}"),
            EnergyError::QubitTest(e) => write!(f, "qubit tests: {e}"),
        }
    }
}

impl std::error::Error for EnergyError {}

impl From<QsimError> for EnergyError {
    fn from(e: QsimError) -> Self {
        EnergyError::Qsim(e)
    }
}

impl From<HadError> for EnergyError {
    fn from(e: HadError) -> Self {
        EnergyError::Had(e)
    }
}

impl From<CliffhamError> for EnergyError {
    fn from(e: CliffhamError) -> Self {
        EnergyError::Cliffham(e)
    }
}

impl From<PauliError> for EnergyError {
    fn from(e: PauliError) -> Self {
        EnergyError::Pauli(e)
    }
}

impl From<PcppError> for EnergyError {
    fn from(e: PcppError) -> Self {
        EnergyError::Pcpp(e)
    }
}

impl From<F2Error> for EnergyError {
    fn from(e: F2Error) -> Self {
        EnergyError::F2(e)
    }
}

impl From<QubitTestError> for EnergyError {
    fn from(e: QubitTestError) -> Self {
        EnergyError::QubitTest(e)
    }
}

/// Stores a non-simulator failure aside so it can cross the enumeration
/// boundary, which only carries QsimError.
fn stash(slot: &mut Option<EnergyError>, e: EnergyError) -> QsimError {
    match e {
        EnergyError::Qsim(q) => q,
        other => {
            *slot = Some(other);
            QsimError::Dimension("protocol failure".into())
        }
    }
}

/// Knobs of the last-round verifier. The code tester and the proximity
/// proof run a fixed number of times each, independent of problem size.
#[derive(Debug, Clone)]
pub struct EnergyConfig {
    pub pcpp: PcppParams,
    pub tester_reps: usize,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            pcpp: PcppParams::default(),
            tester_reps: 3,
        }
    }
}

/// Exact branch enumeration or seeded sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Exact,
    Sampled { trials: usize, seed: u64 },
}

/// An acceptance estimate, flagged exact when it came from enumeration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyOutcome {
    pub acceptance: f64,
    pub exact: bool,
}

// ---------------------------------------------------------------------------
// Slot bookkeeping.
// ---------------------------------------------------------------------------

/// Realized measurement slots of a term assignment: copy i carries one bit
/// per stabilizer observable of term l_i, in observable order. Mask slots
/// past a term's arity are pinned to the identity and carry no bit.
#[derive(Debug, Clone)]
pub struct SlotMap {
    pub counts: Vec<usize>,
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl SlotMap {
    /// Restricts a full mask-slot vector (MASK_SLOTS per copy) to the
    /// realized bits.
    pub fn restrict(&self, full: &BitVec) -> Result<BitVec, EnergyError> {
        if full.len() != MASK_SLOTS * self.counts.len() {
            return Err(EnergyError::BadInput("slot vector has the wrong width"));
        }
        let mut out = BitVec::zeros(self.total);
        for (i, &cnt) in self.counts.iter().enumerate() {
            for j in 0..cnt {
                out.set(self.offsets[i] + j, full.get(MASK_SLOTS * i + j));
            }
        }
        Ok(out)
    }
}

/// Slot layout of the assignment l against h's terms.
pub fn slot_map(h: &CliffordHamiltonian, l: &[usize]) -> Result<SlotMap, EnergyError> {
    let mut counts = Vec::with_capacity(l.len());
    let mut offsets = Vec::with_capacity(l.len());
    let mut total = 0usize;
    for &li in l {
        let cnt = h.term_paulis(li)?.len();
        offsets.push(total);
        counts.push(cnt);
        total += cnt;
    }
    if total > ENERGY_BIT_CAP {
        return Err(EnergyError::Budget {
            bits: total,
            cap: ENERGY_BIT_CAP,
        });
    }
    Ok(SlotMap {
        counts,
        offsets,
        total,
    })
}

/// The accept parity: XOR over copies of "no observable in the copy fired".
pub fn outcome_bit(map: &SlotMap, word: &BitVec) -> u8 {
    let mut acc = 0u8;
    for (i, &cnt) in map.counts.iter().enumerate() {
        let mut any = 0u8;
        for j in 0..cnt {
            any |= word.get(map.offsets[i] + j);
        }
        acc ^= 1 ^ any;
    }
    acc
}

/// Circuit accepting exactly the words whose outcome parity equals `claim`.
pub fn outcome_circuit(map: &SlotMap, claim: u8) -> BooleanCircuit {
    let mut b = CircuitBuilder::new(map.total);
    let mut acc = b.const0();
    for (i, &cnt) in map.counts.iter().enumerate() {
        let mut any = b.input(map.offsets[i]);
        for j in 1..cnt {
            let w = b.input(map.offsets[i] + j);
            any = b.or(any, w);
        }
        let clear = b.not(any);
        acc = b.xor(acc, clear);
    }
    let target = if claim == 1 { b.const1() } else { b.const0() };
    let out = b.eq(acc, target);
    b.finish(out)
}

/// Circuit accepting exactly the words whose parity against the realized
/// mask equals `claim`.
pub fn mask_circuit(bits: usize, t_realized: &BitVec, claim: u8) -> BooleanCircuit {
    let mut b = CircuitBuilder::new(bits);
    let mut acc = b.const0();
    for p in t_realized.support() {
        let w = b.input(p);
        acc = b.xor(acc, w);
    }
    let target = if claim == 1 { b.const1() } else { b.const0() };
    let out = b.eq(acc, target);
    b.finish(out)
}

// ---------------------------------------------------------------------------
// Provers.
// ---------------------------------------------------------------------------

/// How the prover turns its measured word into the reported one. Bias and
/// fixed patterns are given in full mask-slot indexing (MASK_SLOTS per
/// copy); identity slots are dropped on restriction.
#[derive(Debug, Clone)]
pub enum ReportPolicy {
    /// Report the measured word unchanged.
    Honest,
    /// XOR a fixed slot pattern into the measured word.
    Biased(BitVec),
    /// Ignore the measurement and always report this slot pattern.
    Fixed(BitVec),
}

impl ReportPolicy {
    fn apply(&self, map: &SlotMap, measured: &BitVec) -> Result<BitVec, EnergyError> {
        match self {
            ReportPolicy::Honest => Ok(measured.clone()),
            ReportPolicy::Biased(full) => Ok(measured.xor(&map.restrict(full)?)?),
            ReportPolicy::Fixed(full) => map.restrict(full),
        }
    }
}

/// A last-round prover: the two coded measurement rounds plus the policy
/// that shapes its outcome report. The measurement itself is the canonical
/// one, i.e. undo the rounds, then project onto the joint eigenspaces of
/// the assignment's observables in copy-major, observable-minor order.
#[derive(Debug, Clone)]
pub struct EnergyProver {
    pub copies: usize,
    pub rounds: MqtProver,
    pub report: ReportPolicy,
}

/// Kronecker power of a single-copy state.
pub fn product_witness(single: &[Complex64], copies: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(1.0, 0.0)];
    for _ in 0..copies {
        let mut next = Vec::with_capacity(out.len() * single.len());
        for &a in &out {
            for &b in single {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

/// The honest prover: coded rounds on the given witness (a full state of
/// copies * h.n() qubits) and truthful reports with honest proofs.
pub fn energy_honest_prover(
    h: &CliffordHamiltonian,
    copies: usize,
    witness: &[Complex64],
) -> Result<EnergyProver, EnergyError> {
    check_sizes(h, copies)?;
    let k = copies * h.n();
    let rounds = mqt_honest_prover(k, witness)?;
    Ok(EnergyProver {
        copies,
        rounds,
        report: ReportPolicy::Honest,
    })
}

fn check_sizes(h: &CliffordHamiltonian, copies: usize) -> Result<(), EnergyError> {
    if copies == 0 {
        return Err(EnergyError::BadProver("at least one copy"));
    }
    let bits = copies * MASK_SLOTS;
    if bits > ENERGY_BIT_CAP {
        return Err(EnergyError::Budget {
            bits,
            cap: ENERGY_BIT_CAP,
        });
    }
    let k = copies * h.n();
    if k == 0 || k > MQT_K_CAP {
        return Err(EnergyError::BadProver("witness register exceeds the round cap"));
    }
    Ok(())
}

fn check_prover(h: &CliffordHamiltonian, prover: &EnergyProver) -> Result<(), EnergyError> {
    check_sizes(h, prover.copies)?;
    if prover.rounds.k != prover.copies * h.n() {
        return Err(EnergyError::BadProver("round register does not match h and copies"));
    }
    let full = prover.copies * MASK_SLOTS;
    match &prover.report {
        ReportPolicy::Honest => {}
        ReportPolicy::Biased(v) | ReportPolicy::Fixed(v) => {
            if v.len() != full {
                return Err(EnergyError::BadProver("report pattern has the wrong width"));
            }
        }
    }
    Ok(())
}

/// Builds a last-round prover from a family description. Rounds cheats are
/// delegated with a "rounds:" prefix, e.g. "rounds:classical_z"; the report
/// stays honest for those. All families default to the product ground-state
/// witness.
pub fn build_energy_adversary(
    h: &CliffordHamiltonian,
    copies: usize,
    spec: &AdversarySpec,
) -> Result<EnergyProver, EnergyError> {
    check_sizes(h, copies)?;
    let k = copies * h.n();
    let ground: Vec<Complex64> = h.ground_state()?.iter().copied().collect();
    let witness = product_witness(&ground, copies);
    let full = copies * MASK_SLOTS;
    let slots_pattern = || {
        let mut v = BitVec::zeros(full);
        for &p in &spec.params {
            v.set(p as usize, 1);
        }
        v
    };
    if let Some(fam) = spec.family.strip_prefix("rounds:") {
        let inner = AdversarySpec::new(fam, spec.params.clone(), spec.seed);
        let mut rounds = build_mqt_adversary(k, &inner)?;
        rounds.init = Some(witness);
        return Ok(EnergyProver {
            copies,
            rounds,
            report: ReportPolicy::Honest,
        });
    }
    match spec.family.as_str() {
        "honest" => energy_honest_prover(h, copies, &witness),
        "flip_report" => {
            let mut p = energy_honest_prover(h, copies, &witness)?;
            p.report = ReportPolicy::Biased(slots_pattern());
            Ok(p)
        }
        "fixed_report" => {
            let mut p = energy_honest_prover(h, copies, &witness)?;
            p.report = ReportPolicy::Fixed(slots_pattern());
            Ok(p)
        }
        "wrong_witness" => {
            let level = spec.params.first().copied().unwrap_or(0.0) as usize;
            let s = h.spectrum()?;
            if level >= s.eigenvalues.len() {
                return Err(EnergyError::BadInput("eigenstate index out of range"));
            }
            let single: Vec<Complex64> = s.vectors.column(level).iter().copied().collect();
            energy_honest_prover(h, copies, &product_witness(&single, copies))
        }
        other => Err(EnergyError::BadFamily(other.into())),
    }
}

// ---------------------------------------------------------------------------
// The canonical measurement family.
// ---------------------------------------------------------------------------

/// Dense projector cells of the assignment's outcome family on the witness
/// register: cell r is the ordered product of (I + (-1)^{r_{ij}} O_{l_i,j})/2
/// over copies i ascending, observables j ascending. Zero cells are pruned;
/// the survivors are checked to be pairwise orthogonal and to sum to the
/// identity.
pub fn family_cells(
    h: &CliffordHamiltonian,
    l: &[usize],
    map: &SlotMap,
) -> Result<Vec<(BitVec, CMat)>, EnergyError> {
    let n = h.n();
    let k = l.len() * n;
    let dim = 1usize << k;
    let mut cells: Vec<(Vec<u8>, CMat)> = vec![(Vec::new(), linalg::identity(dim))];
    for (i, &li) in l.iter().enumerate() {
        let sites: Vec<usize> = (i * n..(i + 1) * n).collect();
        for o in h.term_paulis(li)? {
            let od = o.embed(k, &sites).matrix()?;
            let mut next = Vec::with_capacity(cells.len() * 2);
            for (word, kmat) in &cells {
                for bit in 0..2u8 {
                    let sign = if bit == 0 { C_ONE } else { -C_ONE };
                    let proj = (linalg::identity(dim) + &od * sign) * Complex64::new(0.5, 0.0);
                    let m = &proj * kmat;
                    if m.iter().map(|c| c.norm()).fold(0.0, f64::max) > 1e-12 {
                        let mut w = word.clone();
                        w.push(bit);
                        next.push((w, m));
                    }
                }
            }
            cells = next;
        }
    }
    let mut sum = CMat::zeros(dim, dim);
    for (a, (_, ma)) in cells.iter().enumerate() {
        sum += ma;
        for (b, (_, mb)) in cells.iter().enumerate() {
            if a != b && linalg::max_abs_diff(&(ma * mb), &CMat::zeros(dim, dim)) > 1e-9 {
                return Err(EnergyError::BadInput("outcome family is not orthogonal"));
            }
        }
    }
    if linalg::max_abs_diff(&sum, &linalg::identity(dim)) > 1e-9 {
        return Err(EnergyError::BadInput("outcome family does not resolve the identity"));
    }
    Ok(cells
        .into_iter()
        .map(|(w, m)| {
            let mut bv = BitVec::zeros(map.total);
            for (j, &bit) in w.iter().enumerate() {
                bv.set(j, bit);
            }
            (bv, m)
        })
        .collect())
}

fn family_observable(
    cells: &[(BitVec, CMat)],
    p_qubits: Vec<usize>,
) -> Result<Observable, EnergyError> {
    let parts = cells
        .iter()
        .enumerate()
        .map(|(i, (_, m))| ProjPart {
            label: i as u64,
            value: i as f64,
            mat: m.clone(),
        })
        .collect();
    Ok(Observable::projectors(p_qubits, parts)?)
}

// ---------------------------------------------------------------------------
// Kickback measurement of a Pauli through the rounds.
// ---------------------------------------------------------------------------

struct XzyParams {
    p1: u128,
    p2: u128,
    c_pow: u8,
}

fn xzy_params(k: usize, a: &BitVec, b: &BitVec, c: &BitVec) -> Result<XzyParams, EnergyError> {
    if a.len() != k || b.len() != k || c.len() != k {
        return Err(EnergyError::BadInput("pauli pattern width mismatch"));
    }
    if !(a.and(b)?.is_zero() && a.and(c)?.is_zero() && b.and(c)?.is_zero()) {
        return Err(EnergyError::BadInput("pauli supports overlap"));
    }
    Ok(XzyParams {
        p1: b.xor(c)?.to_index(),
        p2: a.xor(c)?.to_index(),
        c_pow: (c.popcount() % 4) as u8,
    })
}

fn key_bit(total: usize, q: usize, key: u128) -> u8 {
    ((key >> (total - 1 - q)) & 1) as u8
}

/// Controlled two-point parity read at fixed randomness x: flips the sign
/// of every basis branch whose control qubit is set and whose coded message
/// has odd parity on {x, x^p}. p = 0 reads the identity and is a no-op.
fn control_read_at(state: &mut SparseState, p: u128, x: usize) -> Result<(), EnergyError> {
    if p == 0 {
        return Ok(());
    }
    let r_qubits = state.layout().qubits("R")?;
    let m_q = state.layout().qubits("M")?[0];
    let total = state.layout().total();
    let y = x ^ p as usize;
    let (qx, qy) = (r_qubits[x], r_qubits[y]);
    state.apply_classical(
        |key| key,
        Some(move |key: u128| {
            if key_bit(total, m_q, key) == 1
                && key_bit(total, qx, key) ^ key_bit(total, qy, key) == 1
            {
                -C_ONE
            } else {
                C_ONE
            }
        }),
    )?;
    Ok(())
}

/// Phase-gate power on the control: multiplies the control-set branches by
/// i^pow.
fn s_power(state: &mut SparseState, pow: u8) -> Result<(), EnergyError> {
    if pow % 4 == 0 {
        return Ok(());
    }
    let m_q = state.layout().qubits("M")?[0];
    let total = state.layout().total();
    let ph = linalg::i_pow(pow % 4);
    state.apply_classical(
        |key| key,
        Some(move |key: u128| {
            if key_bit(total, m_q, key) == 1 {
                ph
            } else {
                C_ONE
            }
        }),
    )?;
    Ok(())
}

fn xzy_layout(prover: &MqtProver) -> Result<SparseState, EnergyError> {
    let layout = RegisterLayout::new(&[("P", prover.k), ("R", prover.code.n), ("M", 1)])?;
    let mut state = SparseState::new(layout);
    if let Some(w) = &prover.init {
        state.load_register("P", w)?;
    }
    let m_q = state.layout().qubits("M")?[0];
    state.apply_unitary(&linalg::gates::h(), &[m_q])?;
    Ok(state)
}

/// Protocol steps of the kickback measurement against an enumeration run;
/// returns the outcome and leaves the state collapsed after the rounds.
fn xzy_run(
    run: &mut ProtocolRun,
    state: &mut SparseState,
    prover: &MqtProver,
    params: &XzyParams,
) -> Result<u8, EnergyError> {
    let n_code = prover.code.n;
    let m_q = state.layout().qubits("M")?[0];
    apply_ops(state, &prover.code, &prover.u1, false)?;
    if params.p1 != 0 {
        let x = run.choose_uniform(n_code);
        control_read_at(state, params.p1, x)?;
    }
    apply_ops(state, &prover.code, &prover.u2, false)?;
    if params.p2 != 0 {
        let x = run.choose_uniform(n_code);
        control_read_at(state, params.p2, x)?;
    }
    s_power(state, params.c_pow)?;
    state.apply_unitary(&linalg::gates::h(), &[m_q])?;
    let (label, _) = run.branch_measure(state, &Observable::z(m_q))?;
    Ok(label as u8)
}

/// Exact Pr[outcome 0] of measuring i^|c| X(a+c) Z(b+c) through the rounds
/// by phase kickback. For an honest prover this equals the +1 weight of
/// X(a)Z(b)Y(c) on the witness.
pub fn measure_xzy(
    prover: &MqtProver,
    a: &BitVec,
    b: &BitVec,
    c: &BitVec,
) -> Result<f64, EnergyError> {
    let params = xzy_params(prover.k, a, b, c)?;
    let mut failure: Option<EnergyError> = None;
    let acc = branch_enumerate(ENERGY_BRANCH_CAP, |run| {
        let mut state = xzy_layout(prover).map_err(|e| stash(&mut failure, e))?;
        let e = xzy_run(run, &mut state, prover, &params).map_err(|e| stash(&mut failure, e))?;
        Ok(e == 0)
    });
    match acc {
        Ok(v) => Ok(v),
        Err(e) => Err(failure.take().unwrap_or(EnergyError::Qsim(e))),
    }
}

/// One sampled kickback measurement; returns the outcome and the
/// post-protocol state (rounds applied, control consumed).
pub fn measure_xzy_sampled(
    prover: &MqtProver,
    a: &BitVec,
    b: &BitVec,
    c: &BitVec,
    rng: &mut ChaCha20Rng,
) -> Result<(u8, SparseState), EnergyError> {
    let params = xzy_params(prover.k, a, b, c)?;
    let n_code = prover.code.n;
    let mut state = xzy_layout(prover)?;
    let m_q = state.layout().qubits("M")?[0];
    apply_ops(&mut state, &prover.code, &prover.u1, false)?;
    if params.p1 != 0 {
        let x = rng.gen_range(0..n_code);
        control_read_at(&mut state, params.p1, x)?;
    }
    apply_ops(&mut state, &prover.code, &prover.u2, false)?;
    if params.p2 != 0 {
        let x = rng.gen_range(0..n_code);
        control_read_at(&mut state, params.p2, x)?;
    }
    s_power(&mut state, params.c_pow)?;
    state.apply_unitary(&linalg::gates::h(), &[m_q])?;
    let (label, _) = rng_measure(&mut state, &Observable::z(m_q), rng)?;
    Ok((label as u8, state))
}

fn rng_measure(
    state: &mut SparseState,
    o: &Observable,
    rng: &mut ChaCha20Rng,
) -> Result<(u64, f64), EnergyError> {
    let branches = state.measure(o)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut idx = branches.len() - 1;
    for (i, b) in branches.iter().enumerate() {
        acc += b.prob;
        if u < acc {
            idx = i;
            break;
        }
    }
    let b = branches.into_iter().nth(idx).unwrap();
    *state = b.state;
    Ok((b.label, b.value))
}

// ---------------------------------------------------------------------------
// The last-round exchange.
// ---------------------------------------------------------------------------

/// One proximity-checked claim about the coded measurement record: the
/// Hadamard-coded word, the claimed parity, the statement circuit and an
/// honest-form proof that the word satisfies it.
#[derive(Debug, Clone)]
pub struct EnergyReply {
    pub message: BitVec,
    pub claim: u8,
    pub circuit: BooleanCircuit,
    pub proof: PcppProof,
}

/// The prover's first-phase reply: coded report, outcome-parity claim,
/// statement circuit and proof.
pub fn outcome_reply(map: &SlotMap, reported: &BitVec) -> Result<EnergyReply, EnergyError> {
    let code = HadamardCode::new(map.total)?;
    let claim = outcome_bit(map, reported);
    let circuit = outcome_circuit(map, claim);
    let proof = pcpp::prove(&circuit, reported)?;
    Ok(EnergyReply {
        message: code.encode(reported)?,
        claim,
        circuit,
        proof,
    })
}

fn mask_reply(
    map: &SlotMap,
    reported: &BitVec,
    t_realized: &BitVec,
) -> Result<EnergyReply, EnergyError> {
    let code = HadamardCode::new(map.total)?;
    let claim = reported.inner(t_realized)?;
    let circuit = mask_circuit(map.total, t_realized, claim);
    let proof = pcpp::prove(&circuit, reported)?;
    Ok(EnergyReply {
        message: code.encode(reported)?,
        claim,
        circuit,
        proof,
    })
}

/// Exact acceptance factor of the verifier's code tester and proximity
/// proof on a reply. Exact mode requires honest-form replies (codeword
/// message, proof of a true statement about the coded word); anything else
/// must go through the sampled path.
fn exact_reply_factor(
    cfg: &EnergyConfig,
    map: &SlotMap,
    reply: &EnergyReply,
) -> Result<f64, EnergyError> {
    let code = HadamardCode::new(map.total)?;
    let word = code
        .decode(&reply.message)
        .map_err(|_| EnergyError::BadInput("exact mode requires codeword messages"))?;
    if code.encode(&word)? != reply.message {
        return Err(EnergyError::BadInput("exact mode requires codeword messages"));
    }
    let verifier = PcppVerifier::new(reply.circuit.clone(), cfg.pcpp.clone())?;
    if !verifier.reference_verify(&word, &reply.proof.fa) {
        return Err(EnergyError::BadInput("exact mode requires honest-form proofs"));
    }
    Ok((1.0 - blr_reject_exact(&reply.message)).powi(cfg.tester_reps as i32))
}

/// Sampled verification of a reply: tester_reps three-point tests on the
/// message, then the full proximity verifier with self-corrected input
/// reads. Returns the verdict and accumulates the verifier's byte reads.
fn sampled_reply_check(
    cfg: &EnergyConfig,
    map: &SlotMap,
    reply: &EnergyReply,
    rng: &mut ChaCha20Rng,
    tally: &mut QueryTally,
) -> Result<bool, EnergyError> {
    let n = reply.message.len();
    if n != 1usize << map.total {
        return Err(EnergyError::BadInput("message length does not match the slot map"));
    }
    let mut ok = true;
    for _ in 0..cfg.tester_reps {
        let x = rng.gen_range(0..n);
        let y = rng.gen_range(0..n);
        ok &= blr_test(&reply.message, x, y) == 1;
        tally.message_reads += 3;
    }
    let verifier = PcppVerifier::new(reply.circuit.clone(), cfg.pcpp.clone())?;
    let bits = map.total;
    let message = reply.message.clone();
    let reader_rng = RefCell::new(ChaCha20Rng::seed_from_u64(rng.gen()));
    let yfn = move |j: usize| {
        let x = reader_rng.borrow_mut().gen_range(0..message.len());
        self_correct(&message, 1usize << (bits - 1 - j), x)
    };
    let fa = reply.proof.fa_oracle();
    let fb = reply.proof.fb_oracle();
    let transcript = verifier.verify(&yfn, &fa, &fb, rng);
    for q in &transcript.queries {
        match q.oracle.as_str() {
            "y" => tally.message_reads += 2,
            _ => tally.proof_reads += 1,
        }
    }
    Ok(ok && transcript.verdict)
}

// ---------------------------------------------------------------------------
// Exact branch acceptances.
// ---------------------------------------------------------------------------

fn assignments(h: &CliffordHamiltonian, copies: usize) -> Vec<Vec<usize>> {
    let m = h.num_terms();
    let count = m.pow(copies as u32);
    let mut out = Vec::with_capacity(count);
    for code in 0..count {
        let mut l = Vec::with_capacity(copies);
        let mut rest = code;
        for _ in 0..copies {
            l.push(rest % m);
            rest /= m;
        }
        out.push(l);
    }
    out
}

/// The energy branch at a chosen mode: blank rounds, the canonical
/// measurement, and the outcome claim under tester and proximity proof,
/// averaged over term assignments.
pub fn run_energy_test(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    mode: &RunMode,
) -> Result<EnergyOutcome, EnergyError> {
    match mode {
        RunMode::Exact => Ok(EnergyOutcome {
            acceptance: energy_acceptance_exact(h, prover, cfg)?,
            exact: true,
        }),
        RunMode::Sampled { trials, seed } => {
            check_prover(h, prover)?;
            if *trials == 0 {
                return Err(EnergyError::BadInput("at least one trial"));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let mut hits = 0usize;
            for _ in 0..*trials {
                hits += energy_verdict(h, prover, cfg, &mut rng)?.accept as usize;
            }
            Ok(EnergyOutcome {
                acceptance: hits as f64 / *trials as f64,
                exact: false,
            })
        }
    }
}

/// The energy-consistency branch at a chosen mode: kickback measurement of
/// a random masked observable against the rounds, then the prover's masked
/// parity reply must match the verifier's outcome (sign-corrected), under
/// tester and proximity proof.
pub fn run_energy_consistency(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    mode: &RunMode,
) -> Result<EnergyOutcome, EnergyError> {
    match mode {
        RunMode::Exact => Ok(EnergyOutcome {
            acceptance: consistency_acceptance_exact(h, prover, cfg)?,
            exact: true,
        }),
        RunMode::Sampled { trials, seed } => {
            check_prover(h, prover)?;
            if *trials == 0 {
                return Err(EnergyError::BadInput("at least one trial"));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let mut hits = 0usize;
            for _ in 0..*trials {
                hits += consistency_verdict(h, prover, cfg, &mut rng)?.accept as usize;
            }
            Ok(EnergyOutcome {
                acceptance: hits as f64 / *trials as f64,
                exact: false,
            })
        }
    }
}

fn energy_acceptance_exact(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
) -> Result<f64, EnergyError> {
    check_prover(h, prover)?;
    let ls = assignments(h, prover.copies);
    let mut total = 0.0;
    for l in &ls {
        let map = slot_map(h, l)?;
        let cells = family_cells(h, l, &map)?;
        let mut factors: BTreeMap<u128, f64> = BTreeMap::new();
        let mut failure: Option<EnergyError> = None;
        let acc = branch_enumerate(ENERGY_BRANCH_CAP, |run| {
            energy_body(run, prover, cfg, &map, &cells, &mut factors)
                .map_err(|e| stash(&mut failure, e))
        });
        match acc {
            Ok(v) => total += v,
            Err(e) => return Err(failure.take().unwrap_or(EnergyError::Qsim(e))),
        }
    }
    Ok(total / ls.len() as f64)
}

fn energy_body(
    run: &mut ProtocolRun,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    map: &SlotMap,
    cells: &[(BitVec, CMat)],
    factors: &mut BTreeMap<u128, f64>,
) -> Result<bool, EnergyError> {
    let rounds = &prover.rounds;
    let layout = RegisterLayout::new(&[("P", rounds.k), ("R", rounds.code.n)])?;
    let mut state = SparseState::new(layout);
    if let Some(w) = &rounds.init {
        state.load_register("P", w)?;
    }
    // Both round requests are blank: the prover just runs its rounds, then
    // undoes them for the canonical measurement.
    apply_ops(&mut state, &rounds.code, &rounds.u1, false)?;
    apply_ops(&mut state, &rounds.code, &rounds.u2, false)?;
    apply_ops(&mut state, &rounds.code, &rounds.u2, true)?;
    apply_ops(&mut state, &rounds.code, &rounds.u1, true)?;
    let p_qubits = state.layout().qubits("P")?;
    let obs = family_observable(cells, p_qubits)?;
    let (label, _) = run.branch_measure(&mut state, &obs)?;
    let measured = &cells[label as usize].0;
    let reported = prover.report.apply(map, measured)?;
    let key = reported.to_index();
    let factor = match factors.get(&key) {
        Some(&f) => f,
        None => {
            let reply = outcome_reply(map, &reported)?;
            let f = if reply.claim == 0 {
                exact_reply_factor(cfg, map, &reply)?
            } else {
                // The claim check fails outright; the proof is not reached.
                0.0
            };
            factors.insert(key, f);
            f
        }
    };
    Ok(run.choose_weighted(&[factor, 1.0 - factor]) == 0)
}

/// Mask classes of one assignment: full masks grouped by the product
/// observable they induce, with one representative sample per class.
fn mask_classes(
    h: &CliffordHamiltonian,
    copies: usize,
    l: &[usize],
) -> Result<Vec<(AmplifiedSample, Vec<BitVec>)>, EnergyError> {
    let slots = MASK_SLOTS * copies;
    let mut classes: BTreeMap<(u8, u128, u128), (AmplifiedSample, Vec<BitVec>)> = BTreeMap::new();
    for code in 0..(1u128 << slots) {
        let t = BitVec::from_index(slots, code);
        let sample = AmplifiedSample::new(h, l.to_vec(), t.clone())?;
        let o = masked_observable(h, &sample)?;
        let (d, a, b, c) = pauli::to_xzy(&o)?;
        let key = (d, a.xor(&c)?.to_index(), b.xor(&c)?.to_index());
        classes
            .entry(key)
            .or_insert_with(|| (sample, Vec::new()))
            .1
            .push(t);
    }
    Ok(classes.into_values().collect())
}

/// Exact consistency acceptance, averaged over assignments and masks, with
/// masks grouped by the observable they induce.
fn consistency_acceptance_exact(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
) -> Result<f64, EnergyError> {
    check_prover(h, prover)?;
    let ls = assignments(h, prover.copies);
    let slots = MASK_SLOTS * prover.copies;
    let t_count = (1u128 << slots) as f64;
    let mut total = 0.0;
    for l in &ls {
        let map = slot_map(h, l)?;
        let cells = family_cells(h, l, &map)?;
        for (sample, ts) in mask_classes(h, prover.copies, l)? {
            let o = masked_observable(h, &sample)?;
            let (d, a, b, c) = pauli::to_xzy(&o)?;
            let params = xzy_params(prover.rounds.k, &a, &b, &c)?;
            let t_realized: Vec<BitVec> = ts
                .iter()
                .map(|t| map.restrict(t))
                .collect::<Result<_, _>>()?;
            let mut factors: BTreeMap<u128, f64> = BTreeMap::new();
            let mut failure: Option<EnergyError> = None;
            let acc = branch_enumerate(ENERGY_BRANCH_CAP, |run| {
                consistency_body(
                    run,
                    prover,
                    cfg,
                    &map,
                    &cells,
                    &params,
                    d,
                    &t_realized,
                    &mut factors,
                )
                .map_err(|e| stash(&mut failure, e))
            });
            match acc {
                Ok(v) => total += v * ts.len() as f64 / t_count,
                Err(e) => return Err(failure.take().unwrap_or(EnergyError::Qsim(e))),
            }
        }
    }
    Ok(total / ls.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn consistency_body(
    run: &mut ProtocolRun,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    map: &SlotMap,
    cells: &[(BitVec, CMat)],
    params: &XzyParams,
    d: u8,
    t_realized: &[BitVec],
    factors: &mut BTreeMap<u128, f64>,
) -> Result<bool, EnergyError> {
    let rounds = &prover.rounds;
    let mut state = xzy_layout(rounds)?;
    let e = xzy_run(run, &mut state, rounds, params)?;
    apply_ops(&mut state, &rounds.code, &rounds.u2, true)?;
    apply_ops(&mut state, &rounds.code, &rounds.u1, true)?;
    let p_qubits = state.layout().qubits("P")?;
    let obs = family_observable(cells, p_qubits)?;
    let (label, _) = run.branch_measure(&mut state, &obs)?;
    let measured = &cells[label as usize].0;
    let reported = prover.report.apply(map, measured)?;
    let key = reported.to_index();
    let factor = match factors.get(&key) {
        Some(&f) => f,
        None => {
            // One representative reply exercises the proof plumbing; the
            // statement is true for every mask by construction.
            let reply = mask_reply(map, &reported, &t_realized[0])?;
            let f = exact_reply_factor(cfg, map, &reply)?;
            factors.insert(key, f);
            f
        }
    };
    let want = e ^ d;
    let good = t_realized
        .iter()
        .filter(|t| reported.inner(t).expect("widths match") == want)
        .count();
    let p_acc = (factor * good as f64 / t_realized.len() as f64).clamp(0.0, 1.0);
    Ok(run.choose_weighted(&[p_acc, 1.0 - p_acc]) == 0)
}

/// The closed-form honest acceptance of the energy branch: the +1 weight of
/// the copies-fold product of (1 - 2H) on the witness, shifted to [0, 1].
pub fn honest_energy_value(
    h: &CliffordHamiltonian,
    copies: usize,
    witness: &[Complex64],
) -> Result<f64, EnergyError> {
    let dim_single = 1usize << h.n();
    let a = linalg::identity(dim_single) - h.matrix()? * Complex64::new(2.0, 0.0);
    let mut t = linalg::identity(1);
    for _ in 0..copies {
        t = linalg::kron(&t, &a);
    }
    let dim = dim_single.pow(copies as u32);
    if witness.len() != dim {
        return Err(EnergyError::BadInput("witness dimension mismatch"));
    }
    let mut quad = Complex64::new(0.0, 0.0);
    let mut norm = 0.0;
    for r in 0..dim {
        norm += witness[r].norm_sqr();
        for cidx in 0..dim {
            quad += witness[r].conj() * t[(r, cidx)] * witness[cidx];
        }
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(EnergyError::BadInput("witness is not normalized"));
    }
    Ok((1.0 + quad.re) / 2.0)
}

// ---------------------------------------------------------------------------
// The full three-branch verifier.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SqiopBranch {
    Qubits,
    Energy,
    Consistency,
}

/// Exact branch acceptances of the full verifier; the three branches are
/// drawn with probability 1/3 each.
#[derive(Debug, Clone, Serialize)]
pub struct SqiopReport {
    pub qubits: f64,
    pub energy: f64,
    pub consistency: f64,
    pub acceptance: f64,
}

/// Exact acceptance of the full verifier against a last-round prover.
pub fn full_sqiop(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
) -> Result<SqiopReport, EnergyError> {
    check_prover(h, prover)?;
    let mu1 = mu_table(h, prover.copies, MuKind::Mu1)?;
    let mu2 = mu_table(h, prover.copies, MuKind::Mu2)?;
    let qubits = mqt_acceptance(&prover.rounds, &mu1, &mu2)?;
    let energy = energy_acceptance_exact(h, prover, cfg)?;
    let consistency = consistency_acceptance_exact(h, prover, cfg)?;
    Ok(SqiopReport {
        qubits,
        energy,
        consistency,
        acceptance: (qubits + energy + consistency) / 3.0,
    })
}

/// Verifier byte/qubit reads of one sampled run, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct QueryTally {
    pub qubit_reads: usize,
    pub message_reads: usize,
    pub proof_reads: usize,
}

/// Record of one sampled verifier run.
#[derive(Debug, Clone, Serialize)]
pub struct SqiopVerdict {
    pub branch: SqiopBranch,
    pub accept: bool,
    pub a1: Option<u8>,
    pub a2: Option<u8>,
    pub e: Option<u8>,
    pub d: Option<u8>,
    pub l: Vec<usize>,
    pub t: Option<String>,
    pub queries: QueryTally,
}

/// Sampled acceptance of the full verifier: `trials` independent runs, each
/// drawing a branch uniformly. Returns the acceptance estimate and the
/// per-run records.
pub fn full_sqiop_sampled(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    trials: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(f64, Vec<SqiopVerdict>), EnergyError> {
    check_prover(h, prover)?;
    if trials == 0 {
        return Err(EnergyError::BadInput("at least one trial"));
    }
    let mu1 = mu_table(h, prover.copies, MuKind::Mu1)?;
    let mu2 = mu_table(h, prover.copies, MuKind::Mu2)?;
    let mut verdicts = Vec::with_capacity(trials);
    let mut accepted = 0usize;
    for _ in 0..trials {
        let v = sampled_verdict(h, prover, cfg, &mu1, &mu2, rng)?;
        accepted += v.accept as usize;
        verdicts.push(v);
    }
    Ok((accepted as f64 / trials as f64, verdicts))
}

fn sample_pair(dist: &PairDist, rng: &mut ChaCha20Rng) -> (usize, usize) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(pair, p) in dist {
        acc += p;
        if u < acc {
            return pair;
        }
    }
    dist.last().expect("nonempty distribution").0
}

/// Draws one qubit-tests check with the same weights as the exact mixture.
fn sample_check(
    mu1: &PairDist,
    mu2: &PairDist,
    rng: &mut ChaCha20Rng,
) -> Result<MqtCheckSpec, EnergyError> {
    let dist = if rng.gen::<bool>() { mu1 } else { mu2 };
    let f = sample_pair(dist, rng);
    let kind = match rng.gen_range(0..3) {
        0 => MqtKind::Consistency,
        1 => MqtKind::Anticommute,
        _ => MqtKind::Validity,
    };
    let spec = match kind {
        MqtKind::Consistency => {
            let u: f64 = rng.gen();
            if u < 0.5 {
                MqtCheckSpec::consistency(1, 0, f)?
            } else if u < 0.75 {
                MqtCheckSpec::consistency(2, 0, f)?
            } else {
                MqtCheckSpec::consistency(2, 1, f)?
            }
        }
        MqtKind::Anticommute => MqtCheckSpec::anticommute(f),
        MqtKind::Validity => match rng.gen_range(1..=3usize) {
            1 => MqtCheckSpec::validity(1, (0, 0), f, 1)?,
            2 => MqtCheckSpec::validity(2, (rng.gen_range(0..2), 0), f, 1)?,
            _ => MqtCheckSpec::validity(
                3,
                (rng.gen_range(0..2), rng.gen_range(0..2)),
                f,
                rng.gen_range(1..=2),
            )?,
        },
    };
    Ok(spec)
}

/// Deterministic read footprint of one qubit-tests check: two coded
/// positions per read or flip, three per tester invocation.
fn check_footprint(check: &MqtCheckSpec) -> usize {
    match check.kind {
        MqtKind::Consistency => 4 + 2 * check.flips.0 as usize,
        MqtKind::Anticommute => 6,
        MqtKind::Validity => {
            3 + 2 * (check.flips.0 as usize + check.flips.1 as usize)
        }
    }
}

/// One sampled run of the qubit-tests branch.
fn qubits_verdict(
    prover: &EnergyProver,
    mu1: &PairDist,
    mu2: &PairDist,
    rng: &mut ChaCha20Rng,
) -> Result<SqiopVerdict, EnergyError> {
    let check = sample_check(mu1, mu2, rng)?;
    let out = mqt_run_sampled(&prover.rounds, &check, 1, rng)?;
    Ok(SqiopVerdict {
        branch: SqiopBranch::Qubits,
        accept: out.acceptance > 0.5,
        a1: None,
        a2: None,
        e: None,
        d: None,
        l: Vec::new(),
        t: None,
        queries: QueryTally {
            qubit_reads: check_footprint(&check),
            ..QueryTally::default()
        },
    })
}

/// One sampled run of the energy branch.
fn energy_verdict(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    rng: &mut ChaCha20Rng,
) -> Result<SqiopVerdict, EnergyError> {
    let m = h.num_terms();
    let slots = MASK_SLOTS * prover.copies;
    let l: Vec<usize> = (0..prover.copies).map(|_| rng.gen_range(0..m)).collect();
    let map = slot_map(h, &l)?;
    let cells = family_cells(h, &l, &map)?;
    let rounds = &prover.rounds;
    let layout = RegisterLayout::new(&[("P", rounds.k), ("R", rounds.code.n)])?;
    let mut state = SparseState::new(layout);
    if let Some(w) = &rounds.init {
        state.load_register("P", w)?;
    }
    apply_ops(&mut state, &rounds.code, &rounds.u1, false)?;
    apply_ops(&mut state, &rounds.code, &rounds.u2, false)?;
    apply_ops(&mut state, &rounds.code, &rounds.u2, true)?;
    apply_ops(&mut state, &rounds.code, &rounds.u1, true)?;
    let p_qubits = state.layout().qubits("P")?;
    let obs = family_observable(&cells, p_qubits)?;
    let (label, _) = rng_measure(&mut state, &obs, rng)?;
    let reported = prover.report.apply(&map, &cells[label as usize].0)?;
    let mut tally = QueryTally::default();
    let reply1 = outcome_reply(&map, &reported)?;
    let ok1 = sampled_reply_check(cfg, &map, &reply1, rng, &mut tally)?;
    let a1 = u8::from(reply1.claim == 0 && ok1);
    let t = BitVec::from_index(slots, rng.gen_range(0..(1u128 << slots)));
    let reply2 = mask_reply(&map, &reported, &map.restrict(&t)?)?;
    let ok2 = sampled_reply_check(cfg, &map, &reply2, rng, &mut tally)?;
    let a2 = u8::from(reply2.claim == 0 && ok2);
    Ok(SqiopVerdict {
        branch: SqiopBranch::Energy,
        accept: a1 == 1,
        a1: Some(a1),
        a2: Some(a2),
        e: Some(0),
        d: Some(0),
        l,
        t: Some(format!("{t}")),
        queries: tally,
    })
}

/// One sampled run of the energy-consistency branch.
fn consistency_verdict(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    rng: &mut ChaCha20Rng,
) -> Result<SqiopVerdict, EnergyError> {
    let m = h.num_terms();
    let slots = MASK_SLOTS * prover.copies;
    let l: Vec<usize> = (0..prover.copies).map(|_| rng.gen_range(0..m)).collect();
    let map = slot_map(h, &l)?;
    let cells = family_cells(h, &l, &map)?;
    let t = BitVec::from_index(slots, rng.gen_range(0..(1u128 << slots)));
    let sample = AmplifiedSample::new(h, l.clone(), t.clone())?;
    let o = masked_observable(h, &sample)?;
    let (d, a, b, c) = pauli::to_xzy(&o)?;
    let params = xzy_params(prover.rounds.k, &a, &b, &c)?;
    let (e, mut state) = measure_xzy_sampled(&prover.rounds, &a, &b, &c, rng)?;
    let rounds = &prover.rounds;
    apply_ops(&mut state, &rounds.code, &rounds.u2, true)?;
    apply_ops(&mut state, &rounds.code, &rounds.u1, true)?;
    let p_qubits = state.layout().qubits("P")?;
    let obs = family_observable(&cells, p_qubits)?;
    let (label, _) = rng_measure(&mut state, &obs, rng)?;
    let reported = prover.report.apply(&map, &cells[label as usize].0)?;
    let reads = 1 + 2 * usize::from(params.p1 != 0) + 2 * usize::from(params.p2 != 0);
    let mut tally = QueryTally {
        qubit_reads: reads,
        ..QueryTally::default()
    };
    let reply1 = outcome_reply(&map, &reported)?;
    let ok1 = sampled_reply_check(cfg, &map, &reply1, rng, &mut tally)?;
    let a1 = u8::from(reply1.claim == 0 && ok1);
    let reply2 = mask_reply(&map, &reported, &map.restrict(&t)?)?;
    let ok2 = sampled_reply_check(cfg, &map, &reply2, rng, &mut tally)?;
    let a2 = u8::from(reply2.claim == e ^ d && ok2);
    Ok(SqiopVerdict {
        branch: SqiopBranch::Consistency,
        accept: a2 == 1,
        a1: Some(a1),
        a2: Some(a2),
        e: Some(e),
        d: Some(d),
        l,
        t: Some(format!("{t}")),
        queries: tally,
    })
}

fn sampled_verdict(
    h: &CliffordHamiltonian,
    prover: &EnergyProver,
    cfg: &EnergyConfig,
    mu1: &PairDist,
    mu2: &PairDist,
    rng: &mut ChaCha20Rng,
) -> Result<SqiopVerdict, EnergyError> {
    match rng.gen_range(0..3) {
        0 => qubits_verdict(prover, mu1, mu2, rng),
        1 => energy_verdict(h, prover, cfg, rng),
        _ => consistency_verdict(h, prover, cfg, rng),
    }
}

/// The frozen cheat corpus: (copies, family) pairs whose exact acceptance
/// stays separated from 1.
pub fn energy_corpus() -> Vec<(usize, AdversarySpec)> {
    vec![
        (1, AdversarySpec::new("flip_report", vec![0.0], 0)),
        (2, AdversarySpec::new("flip_report", vec![5.0], 0)),
        (2, AdversarySpec::new("flip_report", vec![0.0, 5.0], 0)),
        (1, AdversarySpec::new("fixed_report", vec![], 0)),
        (2, AdversarySpec::new("fixed_report", vec![0.0, 5.0], 0)),
        (1, AdversarySpec::new("wrong_witness", vec![1.0], 0)),
        (1, AdversarySpec::new("rounds:classical_z", vec![], 0)),
        (1, AdversarySpec::new("rounds:skip_unmeasure", vec![], 0)),
        (1, AdversarySpec::new("rounds:swap_rounds", vec![], 0)),
        (1, AdversarySpec::new("rounds:round_rot", vec![0.9], 0)),
    ]
}

// ---------------------------------------------------------------------------
// The random-mask second-moment bound.
// ---------------------------------------------------------------------------

/// Both sides of the random-mask second-moment bound: a projective family
/// P_s against the sign products of commuting observables O_i conjugated by
/// V, in the rho-seminorm. s and t index bits little-endian. Returns
/// (lhs, rhs) with lhs <= rhs guaranteed by the bound.
pub fn mask_lemma_gap(
    family: &[CMat],
    obs: &[CMat],
    v: &CMat,
    rho: &CMat,
) -> Result<(f64, f64), EnergyError> {
    let q = obs.len();
    if family.len() != 1 << q {
        return Err(EnergyError::BadInput("family size must be 2^(observable count)"));
    }
    let dim = rho.nrows();
    let id = linalg::identity(dim);
    let mut sum = CMat::zeros(dim, dim);
    for p in family {
        if linalg::max_abs_diff(&(p * p), p) > 1e-8 {
            return Err(EnergyError::BadInput("family member is not idempotent"));
        }
        sum += p;
    }
    if linalg::max_abs_diff(&sum, &id) > 1e-8 {
        return Err(EnergyError::BadInput("family does not resolve the identity"));
    }
    for (i, a) in obs.iter().enumerate() {
        if linalg::max_abs_diff(&(a * a.adjoint()), &id) > 1e-8
            || linalg::max_abs_diff(&a.adjoint(), a) > 1e-8
        {
            return Err(EnergyError::BadInput("observables must be Hermitian unitaries"));
        }
        for bmat in obs.iter().skip(i + 1) {
            if linalg::max_abs_diff(&(a * bmat), &(bmat * a)) > 1e-8 {
                return Err(EnergyError::BadInput("observables must commute"));
            }
        }
    }
    let half = Complex64::new(0.5, 0.0);
    let mut lhs = 0.0;
    for (s, p) in family.iter().enumerate() {
        let mut prod = id.clone();
        for (i, o) in obs.iter().enumerate() {
            let sign = if (s >> i) & 1 == 0 { C_ONE } else { -C_ONE };
            prod = prod * ((&id + o * sign) * half);
        }
        let diff = p - v.adjoint() * prod * v;
        lhs += linalg::sigma_norm2(&diff, rho);
    }
    let count = 1usize << q;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for t in 0..count {
        let mut pt = CMat::zeros(dim, dim);
        for (s, p) in family.iter().enumerate() {
            let sign = if (s & t).count_ones() % 2 == 0 { C_ONE } else { -C_ONE };
            pt += p * sign;
        }
        let mut ot = id.clone();
        for (i, o) in obs.iter().enumerate() {
            if (t >> i) & 1 == 1 {
                ot = ot * o;
            }
        }
        let vo = v.adjoint() * ot * v;
        m1 += linalg::sigma_norm2(&(pt - &vo), rho);
        m2 += linalg::sigma_norm2(&vo, rho);
    }
    let rhs = m1 / count as f64 + 1.0 - m2 / count as f64;
    Ok((lhs, rhs))
}
