//! Closed-loop affect control for simulated operators.

pub mod controller;
pub mod data;
pub mod dbn;
pub mod error;
pub mod exec;
pub mod pipeline;
pub mod gp;
pub mod rng;
pub mod serde_mat;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
pub use exec::ExecMode;
