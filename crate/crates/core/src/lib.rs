//! State-space SIR model for epidemic nowcasting and intervention forecasts.
//!
//! The latent compartments `θ(t) = (S, I, R)` evolve by a Dirichlet
//! perturbation around the one-day SIR flow map, and the observed infectious
//! proportion is Beta-distributed around `I(t)`. This crate provides:
//!
//! - [`sir`]: fixed-step RK4 dynamics and the peak functionals,
//! - [`stats`]: densities, samplers and reproducible RNG streams,
//! - [`data`]: case-count ingestion and the observation series,
//! - [`prior`]: the joint prior including the regression-based prior for `β`,
//! - [`inference`]: the MH-within-Gibbs posterior sampler and summaries,
//! - [`forecast`]: prior/posterior predictive simulation under intervention scenarios.
//!
//! The deterministic dynamics and log-densities are generic over [`Real`]
//! (`f32`/`f64`); the samplers work in `f64`, and the aliases below name the
//! concrete types used there.

pub mod data;
pub mod error;
pub mod forecast;
pub mod inference;
pub mod params;
pub mod prior;
pub mod real;
pub mod sir;
pub mod stats;

pub use error::{Error, Result};
pub use real::Real;

/// Compartments in double precision, the state type of the sampler.
pub type Compartments = sir::Compartments<f64>;
pub type Compartments32 = sir::Compartments<f32>;
pub type SirRates = sir::SirRates<f64>;
pub type SirRates32 = sir::SirRates<f32>;
pub type PeakTiming = sir::PeakTiming<f64>;

pub use data::ObservationSeries;
pub use forecast::{Forecast, ScenarioSpec};
pub use inference::{ChainConfig, PosteriorDraws};
pub use params::ModelParams;
pub use prior::{PriorSpec, RegressionModel};
pub use stats::RngStream;
