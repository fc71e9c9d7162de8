//! Neural Lyapunov control workbench.
//!
//! `V(x) = ‖Ψ(x)‖²` with `Ψ` a stack of affine coupling layers is positive
//! definite and has a single critical point for every parameter value. The
//! crate trains it (and comparison architectures) against target fields and
//! jointly with controllers, and checks the results numerically.

pub mod diffcore;
pub mod nets;
pub mod dynamics;
pub mod exec;
pub mod train;
pub mod verify;
pub mod expio;
