//! Physics-informed learning of space-time PDE solutions with hidden-layer
//! concatenated networks and block time marching.

pub mod activations;
pub mod autodiff;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod network;
pub mod marching;
pub mod optim;
pub mod pde;
pub mod sampling;
