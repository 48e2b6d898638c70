//! Optimal Adams-type difference formulas in `W₂^(2,1)(0,1)`: coefficients,
//! error-functional norms, one-step ODE integrators and a small benchmark suite.

mod dd;

pub mod bench;
pub mod coefficients;
pub mod dense;
pub mod error_norm;
pub mod integrate;
pub mod kernel;
mod numfmt;
pub mod report;
pub mod verify;
