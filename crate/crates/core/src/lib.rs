#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

//! Gradient interface models on the lattice torus.
//!
//! The crate evaluates the Hamiltonian H(u, φ) = Σ_x Σ_i V(∇_iφ(x) + u_i) for
//! pinned fields, its free energy f(u) = −β⁻¹ log Z(u), and the one-step
//! Gaussian decomposition used to certify uniform convexity of f in the
//! tilt u. Exact tensor quadrature on tiny tori and Langevin Monte Carlo on
//! larger ones provide two independent routes to every quantity.

pub mod cli;
pub mod codec;
pub mod conditions;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod integrate;
pub mod lattice;
pub mod oracle;
pub mod potential;
pub mod renorm;
pub mod sampler;
pub mod stats;

pub use error::{GilError, Result};
