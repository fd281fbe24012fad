//! Discrete-probability toolkit for secure cascade channel synthesis.
//!
//! Three nodes share common randomness `K`. Node 1 observes an iid source
//! `X^n` and sends a message `J1` to node 2, which forwards `J2` to node 3.
//! The goal is for the three nodes to hold sequences `(X^n, Y^n, Z^n)` whose
//! joint law is close in total variation to an iid target `Q_XYZ`, while the
//! pair of public messages stays nearly independent of the sequences.
//!
//! The crate provides:
//!
//! * exact finite-alphabet distributions, kernels, and information measures
//!   ([`dist`], [`kernel`], [`info`]);
//! * the achievable rate region over auxiliary variables `(U, V)`, the
//!   cascade and Wyner common informations, an m-node extension, and a
//!   no-eavesdropper inner bound, all computed by penalized multi-start
//!   optimization with a brute-force grid oracle for cross-checks
//!   ([`region`]);
//! * the closed-form task-assignment channel whose region is known exactly,
//!   used as ground truth ([`task`]);
//! * soft-covering (cloud-mixing) and two-encoder codebook simulators with
//!   exact induced distributions at small block lengths ([`softcover`]);
//! * an operational three-node protocol built on nested codebooks and a
//!   likelihood encoder, with exact synthesis/secrecy audits and a
//!   chi-square audit for block lengths beyond exact enumeration
//!   ([`protocol`]).
//!
//! All rates and entropies are in bits. Every randomized operation is
//! deterministic given its seed.

pub mod budget;
pub mod dist;
pub mod error;
pub mod info;
pub mod kernel;
pub mod protocol;
pub mod region;
pub mod seeding;
pub mod softcover;
pub mod task;

pub use budget::Budget;
pub use dist::{Axis, JointDist};
pub use error::Error;
pub use info::ChainSpec;
pub use kernel::Kernel;
pub use region::{AuxSolution, OptimizerConfig, RateTriple};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
