//! The coupled system: kick flow `ẋ = δ(t)(log S)x + εf(x, w, t)`,
//! `ẇ = 1 + εg(x, w, t)` with trigonometric-polynomial couplings.

use crate::trig::TrigPoly;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("epsilon must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
    #[error("coupling.g required")]
    MissingClockCoupling,
}

/// Couplings `f = (f₁, f₂)` on the torus factor and `g` on the clock,
/// with coupling strength ε ≥ 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub f1: TrigPoly,
    pub f2: TrigPoly,
    pub g: TrigPoly,
    pub epsilon: f64,
}

impl CouplingSpec {
    pub fn new(f1: TrigPoly, f2: TrigPoly, g: TrigPoly, epsilon: f64) -> Result<Self, CouplingError> {
        if epsilon < 0.0 {
            return Err(CouplingError::NegativeEpsilon(epsilon));
        }
        if g.terms.is_empty() {
            return Err(CouplingError::MissingClockCoupling);
        }
        Ok(CouplingSpec { f1, f2, g, epsilon })
    }

    /// Same couplings at a different strength.
    pub fn with_epsilon(&self, epsilon: f64) -> CouplingSpec {
        CouplingSpec { epsilon, ..self.clone() }
    }

    pub fn f_is_zero(&self) -> bool {
        self.f1.is_zero() && self.f2.is_zero()
    }
}

/// Clock coupling `g = sin(w − t) + sin(x₂ + w + t)`: dissipative with
/// locked phase `w₀ = π` and contraction rate `Γ = −2π`.
pub fn standard_clock_coupling() -> TrigPoly {
    TrigPoly::sin(1.0, [0, 0, 1, -1]).plus(&TrigPoly::sin(1.0, [0, 1, 1, 1]))
}

/// Torus forcing `f = (cos(x₁ + w + t), 0)` for the bidirectional example.
pub fn standard_torus_forcing() -> (TrigPoly, TrigPoly) {
    (TrigPoly::cos(1.0, [1, 0, 1, 1]), TrigPoly::zero())
}

/// `f = 0` with the standard clock coupling.
pub fn clock_only_spec(epsilon: f64) -> CouplingSpec {
    CouplingSpec::new(TrigPoly::zero(), TrigPoly::zero(), standard_clock_coupling(), epsilon)
        .expect("valid")
}

/// Bidirectional example: standard forcing and clock coupling.
pub fn bidirectional_spec(epsilon: f64) -> CouplingSpec {
    let (f1, f2) = standard_torus_forcing();
    CouplingSpec::new(f1, f2, standard_clock_coupling(), epsilon).expect("valid")
}
