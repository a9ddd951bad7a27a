//! Two-point boundary value problems for regular descriptor linear
//! discrete-time systems `F·Y_{k+1} = G·Y_k` with boundary conditions
//! `A1·Y_0 = B1`, `A2·Y_N = B2`.

pub mod error;
pub mod linalg;

pub use error::{BvpError, Result};
pub mod bvp;
pub mod cli;
pub mod oracle;
pub mod pencil;
pub mod problem;
