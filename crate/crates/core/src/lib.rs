//! A desk-scale laboratory for quantum-accessible reinforcement learning.
//!
//! The crate builds task environments from Simon and recursive Fourier sampling
//! (RFS) oracle problems, simulates classical and step-level quantum interaction
//! with them (including oraculization of the deterministic part of an
//! environment), and measures the resulting classical/quantum learning gap.
//!
//! Modules, bottom-up:
//! - [`bitkit`]: bit strings and GF(2) linear algebra.
//! - [`oracles`]: Simon and RFS problem instances and black-box reductions.
//! - [`envs`]: MDP task environments and genuineness analysis.
//! - [`qsim`]: statevector simulation and the oraculization protocol.
//! - [`algos`]: quantum and classical solvers with query accounting.
//! - [`agents`]: learning agents and efficiency evaluation.
//! - [`bench`]: seeded experiments, scaling fits and reports.

pub mod agents;
pub mod algos;
pub mod bench;
pub mod bitkit;
pub mod error;
pub mod envs;
pub mod oracles;
pub mod qsim;

pub use bitkit::{dot2, gf2_nullspace, BitString, Gf2Matrix, Gf2Span};
pub use error::{Error, Result};
