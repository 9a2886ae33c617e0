//! Quantum state amplification treated as state transformation.

pub mod channel;
pub mod classify;
pub mod feasibility;
pub mod gaussian;
pub mod homodyne;
pub mod io;
pub mod kraus;
pub mod linalg;
pub mod optim;
pub mod state;
