//! Joint prior over the initial state, the peak functionals and the precisions.
//!
//! `S(0)` is fixed, `I(0)` is Beta with given mean and variance, the peak
//! intensity and peak timing are truncated normals, `κ` and `λ` are Gamma
//! (shape-rate). `ρ` follows from `(PI, S(0), I(0))` by inverting the peak
//! intensity formula and `β` from the regression in [`regression`].

pub mod regression;

use serde::{Deserialize, Serialize};

pub use regression::{
    build_grid, covariates, fit_beta_regression, ols, simulate_grid, GridOptions, GridPoint,
    GridRow, RegressionFit, RegressionModel, MONOMIALS, N_COVARIATES,
};

use crate::error::{invalid, Error, Result};
use crate::params::ModelParams;
use crate::stats::{
    beta_shapes_from_moments, log_beta_pdf, log_gamma_pdf, log_trunc_normal_pdf, sample_beta,
    sample_gamma, sample_trunc_normal, RngStream, TruncNormalSpec,
};

/// Lower and upper bounds of the peak-timing prior, in days (day 1 = first observation).
pub const PT_BOUNDS: (f64, f64) = (53.0, 413.0);

/// Attempts at drawing a peak intensity that can be inverted for `ρ`.
pub const MAX_PI_RETRIES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub s0: f64,
    pub i0_mean: f64,
    pub i0_var: f64,
    /// Peak intensity; the lower bound is replaced by the current `I(0)`.
    pub pi_spec: TruncNormalSpec,
    pub pt_spec: TruncNormalSpec,
    pub kappa_shape: f64,
    pub kappa_rate: f64,
    pub lambda_shape: f64,
    pub lambda_rate: f64,
}

impl PriorSpec {
    /// Defaults for the Japanese data at identification rate `p`: the `I(0)`
    /// mean is 1.5e-4 for `p = 0.05` and 8e-5 otherwise.
    pub fn japan_2020(p: f64) -> Self {
        let i0_mean = if (p - 0.05).abs() < 1e-12 {
            1.5e-4
        } else {
            8.0e-5
        };
        Self {
            s0: 0.95,
            i0_mean,
            i0_var: 1.0e-8,
            pi_spec: TruncNormalSpec {
                mean: 0.03,
                sd: 0.02,
                lower: 0.0,
                upper: 1.0,
            },
            pt_spec: TruncNormalSpec {
                mean: 180.0,
                sd: 60.0,
                lower: PT_BOUNDS.0,
                upper: PT_BOUNDS.1,
            },
            kappa_shape: 20.0,
            kappa_rate: 1.0e-4,
            lambda_shape: 2.0,
            lambda_rate: 1.0e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0 && self.s0 < 1.0) {
            return Err(invalid(format!("S(0) = {} outside (0, 1)", self.s0)));
        }
        self.i0_shapes()?;
        TruncNormalSpec::new(self.pi_spec.mean, self.pi_spec.sd, 0.0, self.pi_spec.upper)?;
        TruncNormalSpec::new(
            self.pt_spec.mean,
            self.pt_spec.sd,
            self.pt_spec.lower,
            self.pt_spec.upper,
        )?;
        if !(self.pt_spec.lower >= 0.0) {
            return Err(invalid("peak timing support must be non-negative"));
        }
        for (name, v) in [
            ("kappa shape", self.kappa_shape),
            ("kappa rate", self.kappa_rate),
            ("lambda shape", self.lambda_shape),
            ("lambda rate", self.lambda_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Beta shapes `(a, b)` matching the `I(0)` mean and variance.
    pub fn i0_shapes(&self) -> Result<(f64, f64)> {
        beta_shapes_from_moments(self.i0_mean, self.i0_var)
    }

    /// Peak-intensity prior truncated to `(I(0), upper)`.
    pub fn pi_spec_given(&self, i0: f64) -> Result<TruncNormalSpec> {
        self.pi_spec.with_bounds(i0, self.pi_spec.upper)
    }

    /// Log prior density of the `(I(0), PI, PT, κ)` block (up to the constant
    /// point masses on `S(0)` and `β`).
    pub fn log_density_block(&self, i0: f64, pi: f64, pt: f64, kappa: f64) -> f64 {
        let (a, b) = match self.i0_shapes() {
            Ok(ab) => ab,
            Err(_) => return f64::NEG_INFINITY,
        };
        if !(i0 > 0.0 && i0 < self.pi_spec.upper && pi > i0) {
            return f64::NEG_INFINITY;
        }
        let pi_spec = TruncNormalSpec {
            lower: i0,
            ..self.pi_spec
        };
        log_beta_pdf(i0, a, b)
            + log_trunc_normal_pdf(pi, &pi_spec)
            + log_trunc_normal_pdf(pt, &self.pt_spec)
            + log_gamma_pdf(kappa, self.kappa_shape, self.kappa_rate)
    }

    pub fn log_density_lambda(&self, lambda: f64) -> f64 {
        log_gamma_pdf(lambda, self.lambda_shape, self.lambda_rate)
    }

    pub fn log_density(&self, params: &ModelParams) -> f64 {
        self.log_density_block(params.i0(), params.pi(), params.pt(), params.kappa())
            + self.log_density_lambda(params.lambda())
    }
}

/// One draw from the joint prior.
///
/// `I(0)` from its Beta, `PI` from the normal truncated to `(I(0), 1)`, `PT`
/// from its truncated normal, `κ` and `λ` from their Gammas; then `ρ`, `β`,
/// `γ` deterministically. A peak intensity that cannot be inverted is redrawn
/// up to [`MAX_PI_RETRIES`] times.
pub fn sample_prior(
    rng: &mut RngStream,
    spec: &PriorSpec,
    model: &RegressionModel,
) -> Result<ModelParams> {
    let (a, b) = spec.i0_shapes()?;
    let i0 = loop {
        let v = sample_beta(rng, a, b);
        // I(0) must leave room for R(0) = 1 - S(0) - I(0) > 0.
        if v < 1.0 - spec.s0 {
            break v;
        }
    };
    let pt = sample_trunc_normal(rng, &spec.pt_spec);
    let kappa = sample_gamma(rng, spec.kappa_shape, spec.kappa_rate);
    let lambda = sample_gamma(rng, spec.lambda_shape, spec.lambda_rate);
    let pi_spec = spec.pi_spec_given(i0)?;
    for _ in 0..MAX_PI_RETRIES {
        let pi = sample_trunc_normal(rng, &pi_spec);
        match ModelParams::derive(spec.s0, i0, pi, pt, kappa, lambda, model) {
            Ok(params) => return Ok(params),
            Err(Error::PeakOutOfRange { .. }) | Err(Error::InvalidArgument(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::PriorRetriesExhausted(MAX_PI_RETRIES))
}
