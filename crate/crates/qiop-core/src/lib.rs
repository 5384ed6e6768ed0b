//! Desk-scale simulation toolkit for quantum interactive oracle proof
//! protocols: exact Pauli/Clifford algebra, a sparse multi-register state
//! simulator, the Hadamard code with local testing and self-correction, an
//! exponential-size PCP of proximity, interactive oracle commitments, local
//! Clifford-Hamiltonian instances, and the prover/verifier protocols built
//! from them.

pub mod circuit;
pub mod cliffham;
pub mod energy;
pub mod f2;
pub mod hadcode;
pub mod ioc;
pub mod linalg;
pub mod pauli;
pub mod pcpp;
pub mod pcpp_exact;
pub mod qiop_epr;
pub mod qsim;
