//! Multi-type general branching processes conditioned on extinction.
//!
//! The crate simulates Crump–Mode–Jagers populations on the Ulam–Harris
//! family tree, computes extinction probabilities, builds the life kernel of
//! the process conditioned on dying out, and checks numerically that the
//! conditioned process is a subcritical branching process.

pub mod cli;
pub mod extinction;
pub mod kernels;
pub mod pedigree;
pub mod simulate;
pub mod stream;
pub mod tilt;
pub mod verify;
