//! Pseudospectral Floer-flow solver and verification toolkit for
//! complex-regularized polysymplectic Hamiltonian systems on the 2-torus.
//!
//! Modules:
//!
//! * [`structure`]: regularized pairs, compatible triples, currents
//! * [`torus`]: fields on `T²`, spectral derivatives, `∂̸`, `Δ`, pairings
//! * [`hamiltonian`]: Hamiltonians with cut-off, residuals, action, Hofer
//!   norm, Legendre transform, De Donder–Weyl system
//! * [`flow`]: the Floer flow, homotopy profiles, energy diagnostics
//! * [`symbol`]: Fourier symbol of the linearized operator
//! * [`cuplength`]: multistart search and solution counting
//! * [`cli`]: the `polyfloer` command line

pub mod cli;
pub mod cuplength;
pub mod error;
pub mod flow;
pub mod hamiltonian;
pub mod structure;
pub mod symbol;
pub mod torus;

pub use error::{Error, Result};
