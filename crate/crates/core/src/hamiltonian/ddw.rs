//! The scalar De Donder–Weyl system for fields `(q, p₁, p₂)` on `T²`:
//!
//! ```text
//! −∂₁p₁ − ∂₂p₂ = ∂H/∂q,   ∂₁q = ∂H/∂p₁,   ∂₂q = ∂H/∂p₂
//! ```

use std::fmt;

use crate::error::{Error, Result};
use crate::torus::{self, Derivative, Layout, TorusField};

/// `H(q, p₁, p₂)` with its gradient.
pub trait DdwHamiltonian: Send + Sync + fmt::Debug {
    fn value(&self, x: [f64; 3]) -> f64;
    fn gradient(&self, x: [f64; 3]) -> [f64; 3];
}

#[derive(Debug, Clone, Copy)]
pub struct FreeDdw;

impl DdwHamiltonian for FreeDdw {
    fn value(&self, _x: [f64; 3]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: [f64; 3]) -> [f64; 3] {
        [0.0; 3]
    }
}

type Potential1d = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// `H = ½(p₁² + p₂²) + V(q)`; the closure returns `(V, V′)`.
pub struct LaplaceDdw {
    potential: Box<Potential1d>,
}

impl LaplaceDdw {
    pub fn new<F>(potential: F) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        Self {
            potential: Box::new(potential),
        }
    }
}

impl fmt::Debug for LaplaceDdw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LaplaceDdw").finish_non_exhaustive()
    }
}

impl DdwHamiltonian for LaplaceDdw {
    fn value(&self, x: [f64; 3]) -> f64 {
        0.5 * (x[1] * x[1] + x[2] * x[2]) + (self.potential)(x[0]).0
    }

    fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        [(self.potential)(x[0]).1, x[1], x[2]]
    }
}

/// Residual of the three De Donder–Weyl equations.
pub fn ddw_residual(h: &dyn DdwHamiltonian, z: &TorusField) -> Result<TorusField> {
    if z.layout() != Layout::DeDonderWeyl {
        return Err(Error::Layout(format!(
            "expected a De Donder–Weyl field, got {:?}",
            z.layout()
        )));
    }
    let d1 = torus::derivative(z, Derivative::D1)?;
    let d2 = torus::derivative(z, Derivative::D2)?;
    let np = z.points();
    let mut data = vec![0.0; 3 * np];
    for idx in 0..np {
        let x = [z.data()[idx], z.data()[np + idx], z.data()[2 * np + idx]];
        let g = h.gradient(x);
        data[idx] = -d1.data()[np + idx] - d2.data()[2 * np + idx] - g[0];
        data[np + idx] = d1.data()[idx] - g[1];
        data[2 * np + idx] = d2.data()[idx] - g[2];
    }
    TorusField::from_data(Layout::DeDonderWeyl, z.grid(), data)
}

/// The kernel element `(q₀, ∂₂ψ, −∂₁ψ)` of the free system.
pub fn ddw_kernel_witness(psi: &TorusField, q0: f64) -> Result<TorusField> {
    if psi.layout() != Layout::Scalar {
        return Err(Error::Layout(format!(
            "expected a scalar field, got {:?}",
            psi.layout()
        )));
    }
    let d1 = torus::derivative(psi, Derivative::D1)?;
    let d2 = torus::derivative(psi, Derivative::D2)?;
    let q = TorusField::constant(Layout::Scalar, psi.grid(), &[q0])?;
    TorusField::stack(Layout::DeDonderWeyl, &[&q, &d2, &d1.scaled(-1.0)])
}
