//! Homotopy profiles `β_r(s)` switching the nonlinearity on and off.

use serde::{Deserialize, Serialize};

/// `φ(u) = u²(3 − 2u)` clamped to `[0, 1]`.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * (3.0 - 2.0 * u)
    }
}

pub fn smoothstep_derivative(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        6.0 * u * (1.0 - u)
    }
}

/// `β_r(s) = φ(r) φ(s + 1) φ((k+1)r + 1 − s)`.
///
/// The amplitude `φ(r)` makes the profile vanish as `r → 0` and equals 1 for
/// `r ≥ 1`. Slopes are bounded by `max φ′ = 1.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaProfile {
    pub r: f64,
    pub k: usize,
}

impl BetaProfile {
    /// Profile with the cuplength factor `k = 2n`.
    pub fn new(r: f64, pairs: usize) -> Self {
        Self {
            r: r.max(0.0),
            k: 2 * pairs,
        }
    }

    /// Right end `(k+1)r + 1` of the support.
    pub fn support_end(&self) -> f64 {
        (self.k as f64 + 1.0) * self.r + 1.0
    }

    pub fn amplitude(&self) -> f64 {
        smoothstep(self.r)
    }

    pub fn value(&self, s: f64) -> f64 {
        self.amplitude() * smoothstep(s + 1.0) * smoothstep(self.support_end() - s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let b = self.support_end();
        self.amplitude()
            * (smoothstep_derivative(s + 1.0) * smoothstep(b - s)
                - smoothstep(s + 1.0) * smoothstep_derivative(b - s))
    }
}

/// Weight `β(s)` on the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `β ≡ 1`: the autonomous flow of `H̃ρ`.
    Constant,
    Homotopy(BetaProfile),
}

impl Profile {
    pub fn weight(&self, s: f64) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::Homotopy(b) => b.value(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Profile::Constant => 0.0,
            Profile::Homotopy(b) => b.derivative(s),
        }
    }

    pub fn is_autonomous(&self) -> bool {
        matches!(self, Profile::Constant)
    }
}
