//! Sparse recovery and dictionary learning over overcomplete frames.

pub mod cli;
pub mod convex;
pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod frame_analysis;
pub mod greedy;
pub mod linalg;
pub mod matrix_io;
pub mod recovery;
pub mod relax;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{Frame, Signal, SparseCode};
pub use recovery::{Diagnostic, RecoveryResult};
