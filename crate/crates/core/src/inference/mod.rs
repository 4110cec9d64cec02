//! Posterior sampling for the state-space SIR model.
//!
//! [`run_chain`] initializes from the prior with a latent path seeded at the
//! observations, adapts step sizes during burn-in and keeps every `thin`-th
//! state afterwards. Several chains run on independent RNG streams via
//! [`run_chains`].

mod io;
pub mod sampler;
mod summary;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{read_draws_json, write_draws_csv, write_draws_json, write_trace_csv};
pub use sampler::{adapt_scale, mh_accept, seeded_state, BlockPoint, Counter, Sampler, StepSizes};
pub use summary::{quantile, DayInterval, Interval, PosteriorSummary};

use crate::error::{invalid, Error, Result};
use crate::params::ModelParams;
use crate::prior::{sample_prior, PriorSpec, RegressionModel};
use crate::sir::{rk4_unit_step, DEFAULT_SUBSTEPS};
use crate::stats::RngStream;
use crate::Compartments;

use sampler::{log_obs, log_transition};

/// Prior draws tried before giving up on a finite starting posterior.
pub const MAX_INIT_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    /// Post-burn-in iterations; every `thin`-th is retained.
    pub iterations: usize,
    pub thin: usize,
    /// Iterations between step-size adaptations during burn-in.
    pub adapt_every: usize,
    /// Acceptance band that triggers a step-size change. It sits inside
    /// [0.2, 0.4] so that post-burn-in rates, which differ from the last
    /// adaptation estimate by sampling noise, still land in that range.
    pub target_accept: (f64, f64),
    pub substeps: usize,
    pub seed: u64,
    pub stream_id: u64,
}

impl ChainConfig {
    /// Full-length run: 10 000 burn-in, 50 000 kept iterations thinned by 10.
    pub fn full(seed: u64) -> Self {
        Self {
            burn_in: 10_000,
            iterations: 50_000,
            thin: 10,
            adapt_every: 100,
            target_accept: (0.25, 0.35),
            substeps: DEFAULT_SUBSTEPS,
            seed,
            stream_id: 0,
        }
    }

    /// Shorter run for smoke tests and interactive use.
    pub fn quick(seed: u64) -> Self {
        Self {
            burn_in: 2_000,
            iterations: 8_000,
            thin: 4,
            ..Self::full(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations must be positive"));
        }
        if self.thin == 0 || !self.iterations.is_multiple_of(self.thin) {
            return Err(invalid(format!(
                "thin = {} must be positive and divide iterations = {}",
                self.thin, self.iterations
            )));
        }
        if self.adapt_every == 0 {
            return Err(invalid("adaptation window must be positive"));
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(invalid(format!(
                "acceptance band ({lo}, {hi}) is not inside (0, 1)"
            )));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps must be positive"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iterations / self.thin
    }
}

/// Latent compartments `θ(1), …, θ(T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPath(pub Vec<Compartments>);

impl LatentPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<&Compartments> {
        self.0.last()
    }
}

/// Parameters, the full latent path from `θ(0)` and the cached one-day means
/// `drift[t] = f(θ(t − 1))`.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub(crate) params: ModelParams,
    pub(crate) theta: Vec<Compartments>,
    pub(crate) drift: Vec<Compartments>,
}

impl ChainState {
    pub fn new(params: ModelParams, path: LatentPath, substeps: usize) -> Result<Self> {
        let mut theta = Vec::with_capacity(path.len() + 1);
        theta.push(params.theta0());
        theta.extend(path.0);
        let rates = params.rates();
        let mut drift = Vec::with_capacity(theta.len());
        drift.push(theta[0]);
        for t in 1..theta.len() {
            drift.push(rk4_unit_step(theta[t - 1], rates, substeps)?);
        }
        Ok(Self {
            params,
            theta,
            drift,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Number of latent days `T`.
    pub fn days(&self) -> usize {
        self.theta.len() - 1
    }

    /// `θ(t)` for `t = 0..=T`.
    pub fn theta(&self, t: usize) -> &Compartments {
        &self.theta[t]
    }

    pub fn path(&self) -> &[Compartments] {
        &self.theta[1..]
    }
}

/// Unnormalized log posterior of `(path, params)` given observations `y`.
pub fn log_posterior(
    path: &LatentPath,
    params: &ModelParams,
    y: &[f64],
    prior: &PriorSpec,
    substeps: usize,
) -> Result<f64> {
    if path.len() != y.len() {
        return Err(invalid(format!(
            "latent path has {} days, data has {}",
            path.len(),
            y.len()
        )));
    }
    let state = ChainState::new(*params, path.clone(), substeps)?;
    Ok(log_posterior_state(&state, y, prior))
}

pub(crate) fn log_posterior_state(state: &ChainState, y: &[f64], prior: &PriorSpec) -> f64 {
    let p = &state.params;
    let mut v = prior.log_density(p);
    for t in 1..=state.days() {
        v += log_transition(&state.theta[t], &state.drift[t], p.kappa())
            + log_obs(y[t - 1], &state.theta[t], p.lambda());
    }
    v
}

/// Post-burn-in acceptance rates of one or more chains.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    /// Per latent day, one rate per ALR coordinate.
    pub theta: Vec<[f64; 2]>,
    pub block: f64,
    pub lambda: f64,
}

impl AcceptanceReport {
    fn from_counters(c: &sampler::Counters) -> Self {
        Self {
            theta: c.theta.iter().map(|p| [p[0].rate(), p[1].rate()]).collect(),
            block: c.block.rate(),
            lambda: c.lambda.rate(),
        }
    }

    /// Smallest and largest latent-state acceptance rate.
    pub fn theta_range(&self) -> (f64, f64) {
        self.theta
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }

    /// Every rate inside `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        let ok = |r: f64| r >= lo && r <= hi;
        self.theta.iter().flatten().all(|&r| ok(r)) && ok(self.block) && ok(self.lambda)
    }
}

/// Retained draws from one or more chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub params: Vec<ModelParams>,
    pub paths: Vec<LatentPath>,
    /// Chain index of each draw.
    pub chain: Vec<usize>,
    /// Post-burn-in iteration (1-based) of each draw.
    pub iteration: Vec<usize>,
    pub log_posterior: Vec<f64>,
    /// One report per chain.
    pub acceptance: Vec<AcceptanceReport>,
    pub step_sizes: Vec<StepSizes>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn days(&self) -> usize {
        self.paths.first().map_or(0, |p| p.len())
    }

    /// Concatenates chains in order, renumbering chain indices.
    pub fn merge(parts: Vec<PosteriorDraws>) -> Self {
        let mut out = Self {
            params: Vec::new(),
            paths: Vec::new(),
            chain: Vec::new(),
            iteration: Vec::new(),
            log_posterior: Vec::new(),
            acceptance: Vec::new(),
            step_sizes: Vec::new(),
        };
        let mut offset = 0;
        for part in parts {
            let chains = part.acceptance.len().max(1);
            out.params.extend(part.params);
            out.paths.extend(part.paths);
            out.chain.extend(part.chain.into_iter().map(|c| c + offset));
            out.iteration.extend(part.iteration);
            out.log_posterior.extend(part.log_posterior);
            out.acceptance.extend(part.acceptance);
            out.step_sizes.extend(part.step_sizes);
            offset += chains;
        }
        out
    }

    pub fn summarize(&self) -> Result<PosteriorSummary> {
        PosteriorSummary::from_draws(self)
    }
}

/// Starting state: a prior draw with the latent path seeded at the data,
/// redrawn until the log posterior is finite.
pub fn initialize(
    y: &[f64],
    prior: &PriorSpec,
    model: &RegressionModel,
    substeps: usize,
    rng: &mut RngStream,
) -> Result<ChainState> {
    for _ in 0..MAX_INIT_ATTEMPTS {
        let params = match sample_prior(rng, prior, model) {
            Ok(p) => p,
            Err(Error::PriorRetriesExhausted(_)) => continue,
            Err(e) => return Err(e),
        };
        let state = match seeded_state(params, y, substeps) {
            Ok(s) => s,
            Err(Error::IntegrationFailure) => continue,
            Err(e) => return Err(e),
        };
        if log_posterior_state(&state, y, prior).is_finite() {
            return Ok(state);
        }
    }
    Err(Error::InitializationFailed(MAX_INIT_ATTEMPTS))
}

/// Runs one chain.
pub fn run_chain(
    y: &[f64],
    prior: &PriorSpec,
    model: &RegressionModel,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    prior.validate()?;
    if y.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(bad) = y.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(invalid(format!("observation {bad} outside (0, 1)")));
    }
    let mut rng = RngStream::new(config.seed, config.stream_id);
    let state = initialize(y, prior, model, config.substeps, &mut rng)?;
    let mut sampler = Sampler::new(y, prior, model, config.substeps, state, rng)?;

    for it in 1..=config.burn_in {
        sampler.sweep();
        if it % config.adapt_every == 0 {
            sampler.adapt_step_sizes(config.target_accept);
        }
    }
    sampler.reset_totals();

    let n = config.retained();
    let mut draws = PosteriorDraws {
        params: Vec::with_capacity(n),
        paths: Vec::with_capacity(n),
        chain: Vec::with_capacity(n),
        iteration: Vec::with_capacity(n),
        log_posterior: Vec::with_capacity(n),
        acceptance: Vec::new(),
        step_sizes: Vec::new(),
    };
    for it in 1..=config.iterations {
        sampler.sweep();
        if it % config.thin == 0 {
            draws.params.push(*sampler.state().params());
            draws.paths.push(sampler.latent_path());
            draws.chain.push(0);
            draws.iteration.push(it);
            draws.log_posterior.push(sampler.log_posterior());
        }
    }
    draws
        .acceptance
        .push(AcceptanceReport::from_counters(sampler.totals()));
    draws.step_sizes.push(sampler.steps().clone());
    log::info!(
        "chain {}: block acceptance {:.3}, lambda acceptance {:.3}",
        config.stream_id,
        draws.acceptance[0].block,
        draws.acceptance[0].lambda
    );
    Ok(draws)
}

/// Runs `chains` chains in parallel on streams `stream_id, stream_id + 1, …`
/// and merges them in stream order.
pub fn run_chains(
    y: &[f64],
    prior: &PriorSpec,
    model: &RegressionModel,
    config: &ChainConfig,
    chains: usize,
) -> Result<PosteriorDraws> {
    if chains == 0 {
        return Err(invalid("at least one chain is required"));
    }
    let parts = (0..chains)
        .into_par_iter()
        .map(|c| {
            let cfg = ChainConfig {
                stream_id: config.stream_id + c as u64,
                ..config.clone()
            };
            run_chain(y, prior, model, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws::merge(parts))
}
