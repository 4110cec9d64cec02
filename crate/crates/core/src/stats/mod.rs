//! Distribution layer: the Dirichlet, Beta, Gamma, normal and truncated-normal
//! machinery used throughout the model.

mod density;
mod normal;
mod rng;
mod sample;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use density::{
    log_beta_pdf, log_dirichlet_pdf, log_gamma_fn, log_gamma_pdf, log_trunc_normal_pdf,
};
pub use normal::{std_normal_cdf, std_normal_quantile, std_normal_sf};
pub use rng::RngStream;
pub use sample::{
    sample_beta, sample_dirichlet, sample_gamma, sample_ln_gamma, sample_std_normal,
    sample_trunc_normal,
};

/// Normal distribution with mean `mean` and standard deviation `sd`, truncated to `(lower, upper)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncNormalSpec {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncNormalSpec {
    pub fn new(mean: f64, sd: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(sd > 0.0 && lower < upper && mean.is_finite()) {
            return Err(invalid(format!(
                "truncated normal needs sd > 0 and lower < upper (got sd={sd}, [{lower}, {upper}])"
            )));
        }
        Ok(Self {
            mean,
            sd,
            lower,
            upper,
        })
    }

    /// Same location and scale on a different support.
    pub fn with_bounds(&self, lower: f64, upper: f64) -> Result<Self> {
        Self::new(self.mean, self.sd, lower, upper)
    }
}

/// Shape pair `(a, b)` of the Beta distribution with the given mean and variance.
pub fn beta_shapes_from_moments(mean: f64, var: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0 && var > 0.0 && var < mean * (1.0 - mean)) {
        return Err(invalid(format!(
            "no Beta distribution with mean {mean} and variance {var}"
        )));
    }
    let k = mean * (1.0 - mean) / var - 1.0;
    Ok((mean * k, (1.0 - mean) * k))
}
