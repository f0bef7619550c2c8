//! Time-dependent decoherence-free subspaces (t-DFS) of Markovian open quantum systems.
//!
//! The crate detects t-DFSs as common degenerate eigenspaces of the Lindblad operators, monitors the
//! adiabatic condition and the purity lower bound, propagates the master equation, and synthesises
//! counterdiabatic controls that transport states along the t-DFS at arbitrary speed. The two-level
//! atom in a squeezed-vacuum reservoir is provided in closed form together with its figure scenarios.

pub mod adiabatic_monitor;
pub mod dfs_analysis;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod lindblad_integrator;
pub mod operator_model;
pub mod squeezed_qubit;
pub mod sta_synthesis;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
