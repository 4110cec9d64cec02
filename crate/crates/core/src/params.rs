//! The sampled parameter block and its deterministic derivations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prior::RegressionModel;
use crate::sir::invert_rho;
use crate::{Compartments, SirRates};

/// `(I(0), PI, PT, κ, λ)` together with the quantities they determine:
/// `ρ = g⁻¹(PI; S0, I(0))`, `β` from the regression prior, `γ = βρ`.
///
/// Fields are private so the derived values can never go stale; construct
/// through [`ModelParams::derive`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    s0: f64,
    i0: f64,
    pi: f64,
    pt: f64,
    kappa: f64,
    lambda: f64,
    rho: f64,
    beta: f64,
    gamma: f64,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        s0: f64,
        i0: f64,
        pi: f64,
        pt: f64,
        kappa: f64,
        lambda: f64,
        model: &RegressionModel,
    ) -> Result<Self> {
        if !(i0 > 0.0 && i0 < 1.0 - s0) {
            return Err(invalid(format!("I(0) = {i0} outside (0, 1 - S(0))")));
        }
        if !(kappa > 0.0 && lambda > 0.0 && kappa.is_finite() && lambda.is_finite()) {
            return Err(invalid(format!(
                "precisions kappa={kappa}, lambda={lambda} must be positive"
            )));
        }
        let rho = invert_rho(pi, s0, i0)?;
        let beta = model.beta(pt, i0, rho)?;
        let gamma = beta * rho;
        if !(beta.is_finite() && beta > 0.0 && gamma > 0.0) {
            return Err(invalid(format!(
                "derived beta={beta} is not a positive rate"
            )));
        }
        Ok(Self {
            s0,
            i0,
            pi,
            pt,
            kappa,
            lambda,
            rho,
            beta,
            gamma,
        })
    }

    /// Same block with a different observation precision.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }
    pub fn i0(&self) -> f64 {
        self.i0
    }
    pub fn pi(&self) -> f64 {
        self.pi
    }
    pub fn pt(&self) -> f64 {
        self.pt
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn r0(&self) -> f64 {
        1.0 / self.rho
    }

    pub fn rates(&self) -> SirRates {
        SirRates {
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    /// `θ(0) = (S0, I(0), 1 − S0 − I(0))`.
    pub fn theta0(&self) -> Compartments {
        Compartments {
            s: self.s0,
            i: self.i0,
            r: 1.0 - self.s0 - self.i0,
        }
    }
}
