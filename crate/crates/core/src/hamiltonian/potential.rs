//! Built-in nonlinearities and their JSON configuration.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The nonlinear part `h(t, Z)` of a Hamiltonian `H = ½|p|² + h`.
///
/// `z` has `4n` entries in the block layout `(q₁, q₂, p₁, p₂)`.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn pairs(&self) -> usize;

    fn value(&self, t: [f64; 2], z: &[f64]) -> f64;

    /// Writes `∇_Z h` into `out` (length `4n`).
    fn gradient(&self, t: [f64; 2], z: &[f64], out: &mut [f64]);

    fn hessian(&self, _t: [f64; 2], _z: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    fn time_dependent(&self) -> bool {
        true
    }

    fn momentum_dependent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Zero {
    pub pairs: usize,
}

impl Nonlinearity for Zero {
    fn pairs(&self) -> usize {
        self.pairs
    }

    fn value(&self, _t: [f64; 2], _z: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _t: [f64; 2], _z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }

    fn hessian(&self, _t: [f64; 2], z: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(z.len(), z.len()))
    }

    fn time_dependent(&self) -> bool {
        false
    }

    fn momentum_dependent(&self) -> bool {
        false
    }
}

/// One term `a · cos(k·q + φ) · cos(l·t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    /// Wave vector over the `2n` position components.
    pub q: Vec<i32>,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    /// Time wave vector `l`; `[0, 0]` for a time-independent term.
    #[serde(default)]
    pub t: [i32; 2],
}

fn one() -> f64 {
    1.0
}

/// Potential `V(t, q) = ε Σ a cos(k·q + φ) cos(l·t)` on `T^{2n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPotential {
    pairs: usize,
    epsilon: f64,
    terms: Vec<TrigTerm>,
}

impl TrigPotential {
    pub fn new(pairs: usize, epsilon: f64, terms: Vec<TrigTerm>) -> Result<Self> {
        if pairs == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !epsilon.is_finite() {
            return Err(Error::NonFinite("epsilon"));
        }
        for term in &terms {
            if term.q.len() != 2 * pairs {
                return Err(Error::DimensionMismatch {
                    expected: 2 * pairs,
                    found: term.q.len(),
                });
            }
            if !term.amplitude.is_finite() || !term.phase.is_finite() {
                return Err(Error::NonFinite("trig term"));
            }
        }
        Ok(Self {
            pairs,
            epsilon,
            terms,
        })
    }

    /// `ε Σ_c cos q_c` over all position components.
    pub fn cos_sum(pairs: usize, epsilon: f64) -> Self {
        let terms = (0..2 * pairs)
            .map(|c| TrigTerm {
                q: (0..2 * pairs).map(|d| i32::from(d == c)).collect(),
                amplitude: 1.0,
                phase: 0.0,
                t: [0, 0],
            })
            .collect();
        Self {
            pairs,
            epsilon,
            terms,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    /// Sum of `|ε a|`, an upper bound of `|V|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| (self.epsilon * t.amplitude).abs())
            .sum()
    }

    fn phase_of(term: &TrigTerm, q: &[f64]) -> f64 {
        term.q
            .iter()
            .zip(q)
            .map(|(k, x)| *k as f64 * x)
            .sum::<f64>()
            + term.phase
    }

    fn time_factor(term: &TrigTerm, t: [f64; 2]) -> f64 {
        if term.t == [0, 0] {
            1.0
        } else {
            (term.t[0] as f64 * t[0] + term.t[1] as f64 * t[1]).cos()
        }
    }
}

impl Nonlinearity for TrigPotential {
    fn pairs(&self) -> usize {
        self.pairs
    }

    fn value(&self, t: [f64; 2], z: &[f64]) -> f64 {
        let q = &z[..2 * self.pairs];
        self.epsilon
            * self
                .terms
                .iter()
                .map(|term| {
                    term.amplitude * Self::phase_of(term, q).cos() * Self::time_factor(term, t)
                })
                .sum::<f64>()
    }

    fn gradient(&self, t: [f64; 2], z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let q = &z[..2 * self.pairs];
        for term in &self.terms {
            let s = -self.epsilon
                * term.amplitude
                * Self::phase_of(term, q).sin()
                * Self::time_factor(term, t);
            for (o, k) in out.iter_mut().zip(&term.q) {
                *o += s * *k as f64;
            }
        }
    }

    fn hessian(&self, t: [f64; 2], z: &[f64]) -> Option<DMatrix<f64>> {
        let d = z.len();
        let q = &z[..2 * self.pairs];
        let mut h = DMatrix::zeros(d, d);
        for term in &self.terms {
            let s = -self.epsilon
                * term.amplitude
                * Self::phase_of(term, q).cos()
                * Self::time_factor(term, t);
            for (a, ka) in term.q.iter().enumerate() {
                for (b, kb) in term.q.iter().enumerate() {
                    h[(a, b)] += s * (*ka as f64) * (*kb as f64);
                }
            }
        }
        Some(h)
    }

    fn time_dependent(&self) -> bool {
        self.terms.iter().any(|t| t.t != [0, 0])
    }

    fn momentum_dependent(&self) -> bool {
        false
    }
}

/// `h = ε Σ_j cos(q₁ʲ) cos(p₁ʲ)`, a bounded momentum-coupled nonlinearity.
#[derive(Debug, Clone, Copy)]
pub struct MomentumCoupled {
    pub pairs: usize,
    pub epsilon: f64,
}

impl Nonlinearity for MomentumCoupled {
    fn pairs(&self) -> usize {
        self.pairs
    }

    fn value(&self, _t: [f64; 2], z: &[f64]) -> f64 {
        let n = self.pairs;
        self.epsilon * (0..n).map(|j| z[j].cos() * z[2 * n + j].cos()).sum::<f64>()
    }

    fn gradient(&self, _t: [f64; 2], z: &[f64], out: &mut [f64]) {
        let n = self.pairs;
        out.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..n {
            let (q, p) = (z[j], z[2 * n + j]);
            out[j] = -self.epsilon * q.sin() * p.cos();
            out[2 * n + j] = -self.epsilon * q.cos() * p.sin();
        }
    }

    fn hessian(&self, _t: [f64; 2], z: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.pairs;
        let mut h = DMatrix::zeros(4 * n, 4 * n);
        for j in 0..n {
            let (q, p) = (z[j], z[2 * n + j]);
            let (a, b) = (j, 2 * n + j);
            h[(a, a)] = -self.epsilon * q.cos() * p.cos();
            h[(b, b)] = -self.epsilon * q.cos() * p.cos();
            h[(a, b)] = self.epsilon * q.sin() * p.sin();
            h[(b, a)] = h[(a, b)];
        }
        Some(h)
    }

    fn time_dependent(&self) -> bool {
        false
    }
}

type ValueFn = dyn Fn([f64; 2], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn([f64; 2], &[f64], &mut [f64]) + Send + Sync;

/// Nonlinearity from user closures.
pub struct FnNonlinearity {
    pairs: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
    time_dependent: bool,
    momentum_dependent: bool,
}

impl FnNonlinearity {
    pub fn new<V, G>(pairs: usize, value: V, gradient: G) -> Self
    where
        V: Fn([f64; 2], &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn([f64; 2], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            pairs,
            value: Box::new(value),
            gradient: Box::new(gradient),
            time_dependent: true,
            momentum_dependent: true,
        }
    }

    pub fn with_flags(mut self, time_dependent: bool, momentum_dependent: bool) -> Self {
        self.time_dependent = time_dependent;
        self.momentum_dependent = momentum_dependent;
        self
    }
}

impl fmt::Debug for FnNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnNonlinearity")
            .field("pairs", &self.pairs)
            .finish_non_exhaustive()
    }
}

impl Nonlinearity for FnNonlinearity {
    fn pairs(&self) -> usize {
        self.pairs
    }

    fn value(&self, t: [f64; 2], z: &[f64]) -> f64 {
        (self.value)(t, z)
    }

    fn gradient(&self, t: [f64; 2], z: &[f64], out: &mut [f64]) {
        (self.gradient)(t, z, out)
    }

    fn time_dependent(&self) -> bool {
        self.time_dependent
    }

    fn momentum_dependent(&self) -> bool {
        self.momentum_dependent
    }
}

/// A mode entry: either a bare wave vector or a full term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeSpec {
    Vector(Vec<i32>),
    Term(TrigTerm),
}

impl ModeSpec {
    fn into_term(self) -> TrigTerm {
        match self {
            ModeSpec::Vector(q) => TrigTerm {
                q,
                amplitude: 1.0,
                phase: 0.0,
                t: [0, 0],
            },
            ModeSpec::Term(t) => t,
        }
    }
}

/// JSON selection of the nonlinearity.
///
/// ```json
/// {"kind": "trig_potential", "epsilon": 0.1, "modes": [[1, 0], [0, 1]]}
/// {"kind": "builtin", "name": "cos_time", "epsilon": 0.1}
/// {"kind": "zero"}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    TrigPotential {
        epsilon: f64,
        modes: Vec<ModeSpec>,
    },
    Builtin {
        name: String,
        #[serde(default)]
        epsilon: f64,
    },
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["zero", "cos_sum", "cos_time", "momentum_coupled"];

/// Registry of built-in nonlinearities.
///
/// * `zero`: `h ≡ 0`
/// * `cos_sum`: `ε Σ_c cos q_c`
/// * `cos_time`: `ε cos t₁ cos q₁`
/// * `momentum_coupled`: `ε Σ_j cos q₁ʲ cos p₁ʲ`
pub fn builtin(name: &str, pairs: usize, epsilon: f64) -> Result<Arc<dyn Nonlinearity>> {
    if pairs == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    Ok(match name {
        "zero" => Arc::new(Zero { pairs }),
        "cos_sum" => Arc::new(TrigPotential::cos_sum(pairs, epsilon)),
        "cos_time" => {
            let mut q = vec![0; 2 * pairs];
            q[0] = 1;
            Arc::new(TrigPotential::new(
                pairs,
                epsilon,
                vec![TrigTerm {
                    q,
                    amplitude: 1.0,
                    phase: 0.0,
                    t: [1, 0],
                }],
            )?)
        }
        "momentum_coupled" => Arc::new(MomentumCoupled { pairs, epsilon }),
        other => return Err(Error::UnknownPotential(other.to_string())),
    })
}

impl PotentialConfig {
    pub fn build(&self, pairs: usize) -> Result<Arc<dyn Nonlinearity>> {
        match self {
            PotentialConfig::Zero => builtin("zero", pairs, 0.0),
            PotentialConfig::TrigPotential { epsilon, modes } => {
                let terms = modes.iter().cloned().map(ModeSpec::into_term).collect();
                Ok(Arc::new(TrigPotential::new(pairs, *epsilon, terms)?))
            }
            PotentialConfig::Builtin { name, epsilon } => builtin(name, pairs, *epsilon),
        }
    }

    /// Amplitude parameter `ε` (0 for the zero potential).
    pub fn epsilon(&self) -> f64 {
        match self {
            PotentialConfig::Zero => 0.0,
            PotentialConfig::TrigPotential { epsilon, .. }
            | PotentialConfig::Builtin { epsilon, .. } => *epsilon,
        }
    }

    /// `V = ε Σ_c cos q_c` written as a trig potential.
    pub fn cos_sum(pairs: usize, epsilon: f64) -> Self {
        PotentialConfig::TrigPotential {
            epsilon,
            modes: (0..2 * pairs)
                .map(|c| ModeSpec::Vector((0..2 * pairs).map(|d| i32::from(d == c)).collect()))
                .collect(),
        }
    }
}
