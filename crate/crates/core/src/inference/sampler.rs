//! MH-within-Gibbs updates.
//!
//! Every block is a Gaussian random walk in unconstrained coordinates:
//!
//! - `θ(t)` through the additive log-ratio `z = (log S/R, log I/R)`, one
//!   coordinate at a time, Jacobian `S·I·R`;
//! - `(I(0), PI, PT, κ)` jointly through bounded logits and `log κ`;
//! - `λ` through `log λ`.

use crate::error::Result;
use crate::inference::{ChainState, LatentPath};
use crate::params::ModelParams;
use crate::prior::{PriorSpec, RegressionModel};
use crate::sir::rk4_unit_step;
use crate::stats::{log_beta_pdf, log_dirichlet_pdf, sample_std_normal, RngStream};
use crate::Compartments;

/// Adaptation factors applied when windowed acceptance leaves the target band.
pub const GROW: f64 = 1.25;
pub const SHRINK: f64 = 0.8;

/// Observation log-density `log Beta(y; λI, λ(1 − I))`.
#[inline]
pub fn log_obs(y: f64, theta: &Compartments, lambda: f64) -> f64 {
    log_beta_pdf(y, lambda * theta.i, lambda * (1.0 - theta.i))
}

/// Transition log-density `log Dir(θ; κ·mean)`.
#[inline]
pub fn log_transition(theta: &Compartments, mean: &Compartments, kappa: f64) -> f64 {
    log_dirichlet_pdf(
        &theta.to_array(),
        &[kappa * mean.s, kappa * mean.i, kappa * mean.r],
    )
}

/// Additive log-ratio coordinates `(log S/R, log I/R)`.
#[inline]
pub fn alr(theta: &Compartments) -> [f64; 2] {
    [(theta.s / theta.r).ln(), (theta.i / theta.r).ln()]
}

/// Inverse of [`alr`]; `None` if the result is not strictly interior.
pub fn alr_inv(z: [f64; 2]) -> Option<Compartments> {
    // Shift by the max for overflow safety.
    let m = z[0].max(z[1]).max(0.0);
    let (a, b, c) = ((z[0] - m).exp(), (z[1] - m).exp(), (-m).exp());
    let total = a + b + c;
    let theta = Compartments {
        s: a / total,
        i: b / total,
        r: c / total,
    };
    (theta.is_finite() && theta.is_interior()).then_some(theta)
}

/// `log |∂θ/∂z|` for the additive log-ratio map.
#[inline]
fn alr_log_jacobian(theta: &Compartments) -> f64 {
    theta.s.ln() + theta.i.ln() + theta.r.ln()
}

#[inline]
fn log_normal_step(from: f64, to: f64, scale: f64) -> f64 {
    let z = (to - from) / scale;
    -0.5 * z * z - scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[inline]
fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Accept with probability `min(1, exp(log_ratio))`.
#[inline]
pub fn mh_accept(log_ratio: f64, rng: &mut RngStream) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.open01().ln() < log_ratio
}

/// Multiplicative step-size rule: grow above the band, shrink below, keep inside.
pub fn adapt_scale(scale: f64, rate: f64, band: (f64, f64)) -> f64 {
    if rate > band.1 {
        scale * GROW
    } else if rate < band.0 {
        scale * SHRINK
    } else {
        scale
    }
}

/// The `(I(0), PI, PT, κ)` block as a point in constrained space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockPoint {
    pub i0: f64,
    pub pi: f64,
    pub pt: f64,
    pub kappa: f64,
}

impl From<&ModelParams> for BlockPoint {
    fn from(p: &ModelParams) -> Self {
        Self {
            i0: p.i0(),
            pi: p.pi(),
            pt: p.pt(),
            kappa: p.kappa(),
        }
    }
}

/// Random-walk step sizes for every block.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepSizes {
    /// Per latent day, one scale per ALR coordinate.
    pub theta: Vec<[f64; 2]>,
    /// `(logit I(0), logit PI, logit PT, log κ)`.
    pub block: [f64; 4],
    pub lambda: f64,
}

impl StepSizes {
    pub fn initial(days: usize) -> Self {
        Self {
            theta: vec![[0.02, 0.2]; days],
            block: [0.05, 0.05, 0.05, 0.05],
            lambda: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counter {
    pub accepted: u64,
    pub attempted: u64,
}

impl Counter {
    #[inline]
    fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// Acceptance counters per step size.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Counters {
    pub theta: Vec<[Counter; 2]>,
    pub block: Counter,
    pub lambda: Counter,
}

impl Counters {
    fn new(days: usize) -> Self {
        Self {
            theta: vec![[Counter::default(); 2]; days],
            block: Counter::default(),
            lambda: Counter::default(),
        }
    }
}

/// Weight kept by earlier adaptation windows each time a new one is pooled.
pub const WINDOW_MEMORY: f64 = 0.8;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Pooled {
    accepted: f64,
    attempted: f64,
}

impl Pooled {
    fn push(&mut self, c: &Counter) {
        self.accepted = WINDOW_MEMORY * self.accepted + c.accepted as f64;
        self.attempted = WINDOW_MEMORY * self.attempted + c.attempted as f64;
    }

    fn rate(&self) -> f64 {
        self.accepted / self.attempted
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct PooledCounters {
    theta: Vec<[Pooled; 2]>,
    block: Pooled,
    lambda: Pooled,
}

impl PooledCounters {
    fn new(days: usize) -> Self {
        Self {
            theta: vec![[Pooled::default(); 2]; days],
            ..Self::default()
        }
    }
}

/// One chain's mutable state plus everything needed to update it.
pub struct Sampler<'a> {
    y: &'a [f64],
    prior: &'a PriorSpec,
    model: &'a RegressionModel,
    substeps: usize,
    state: ChainState,
    steps: StepSizes,
    window: Counters,
    memory: PooledCounters,
    total: Counters,
    rng: RngStream,
}

impl<'a> Sampler<'a> {
    pub fn new(
        y: &'a [f64],
        prior: &'a PriorSpec,
        model: &'a RegressionModel,
        substeps: usize,
        state: ChainState,
        rng: RngStream,
    ) -> Result<Self> {
        if state.days() != y.len() {
            return Err(crate::error::invalid(format!(
                "latent path has {} days, data has {}",
                state.days(),
                y.len()
            )));
        }
        let days = y.len();
        Ok(Self {
            y,
            prior,
            model,
            substeps,
            state,
            steps: StepSizes::initial(days),
            window: Counters::new(days),
            memory: PooledCounters::new(days),
            total: Counters::new(days),
            rng,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn set_state(&mut self, state: ChainState) {
        self.state = state;
    }

    pub fn steps(&self) -> &StepSizes {
        &self.steps
    }

    pub fn steps_mut(&mut self) -> &mut StepSizes {
        &mut self.steps
    }

    /// Counters accumulated since the last [`Sampler::reset_totals`].
    pub fn totals(&self) -> &Counters {
        &self.total
    }

    pub fn reset_totals(&mut self) {
        self.total = Counters::new(self.y.len());
    }

    pub fn rng_mut(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    pub fn log_posterior(&self) -> f64 {
        super::log_posterior_state(&self.state, self.y, self.prior)
    }

    // ----- θ(t) -----

    /// Log target of `θ(t)` in ALR coordinates, up to terms not involving `θ(t)`.
    ///
    /// `next_mean` is `f(θ(t))`, required when `t < T`.
    fn theta_local(&self, t: usize, theta: &Compartments, next_mean: Option<&Compartments>) -> f64 {
        let kappa = self.state.params.kappa();
        let mut v = log_transition(theta, &self.state.drift[t], kappa)
            + log_obs(self.y[t - 1], theta, self.state.params.lambda())
            + alr_log_jacobian(theta);
        if t < self.y.len() {
            let mean = next_mean.expect("outgoing mean required before the last day");
            v += log_transition(&self.state.theta[t + 1], mean, kappa);
        }
        v
    }

    /// Log MH ratio for replacing `θ(t)` by `proposal`, with per-coordinate
    /// proposal scales `scales` (symmetric Gaussian in ALR space).
    pub fn log_ratio_theta(
        &self,
        t: usize,
        proposal: &Compartments,
        scales: [f64; 2],
    ) -> Result<f64> {
        let current = &self.state.theta[t];
        let next_prop = if t < self.y.len() {
            Some(rk4_unit_step(
                *proposal,
                self.state.params.rates(),
                self.substeps,
            )?)
        } else {
            None
        };
        let next_cur = (t < self.y.len()).then(|| self.state.drift[t + 1]);
        let (z, zp) = (alr(current), alr(proposal));
        let (mut fwd, mut rev) = (0.0, 0.0);
        for k in 0..2 {
            if zp[k] != z[k] {
                fwd += log_normal_step(z[k], zp[k], scales[k]);
                rev += log_normal_step(zp[k], z[k], scales[k]);
            }
        }
        Ok(self.theta_local(t, proposal, next_prop.as_ref())
            - self.theta_local(t, current, next_cur.as_ref())
            + rev
            - fwd)
    }

    /// Random-walk update of `θ(t)`, one ALR coordinate at a time.
    pub fn update_theta_t(&mut self, t: usize) -> [bool; 2] {
        let mut flags = [false; 2];
        for (k, flag) in flags.iter_mut().enumerate() {
            let scale = self.steps.theta[t - 1][k];
            let mut z = alr(&self.state.theta[t]);
            z[k] += scale * sample_std_normal(&mut self.rng);
            let accepted = match alr_inv(z) {
                Some(proposal) => self.try_theta(t, proposal),
                None => false,
            };
            self.window.theta[t - 1][k].record(accepted);
            self.total.theta[t - 1][k].record(accepted);
            *flag = accepted;
        }
        flags
    }

    fn try_theta(&mut self, t: usize, proposal: Compartments) -> bool {
        let rates = self.state.params.rates();
        let next_prop = if t < self.y.len() {
            match rk4_unit_step(proposal, rates, self.substeps) {
                Ok(m) => Some(m),
                Err(_) => return false,
            }
        } else {
            None
        };
        let current = self.state.theta[t];
        let next_cur = (t < self.y.len()).then(|| self.state.drift[t + 1]);
        let ratio = self.theta_local(t, &proposal, next_prop.as_ref())
            - self.theta_local(t, &current, next_cur.as_ref());
        if mh_accept(ratio, &mut self.rng) {
            self.state.theta[t] = proposal;
            if let Some(m) = next_prop {
                self.state.drift[t + 1] = m;
            }
            true
        } else {
            false
        }
    }

    // ----- (I(0), PI, PT, κ) -----

    fn block_bounds(&self) -> (f64, f64, f64) {
        (
            1.0 - self.prior.s0,
            self.prior.pt_spec.lower,
            self.prior.pt_spec.upper,
        )
    }

    /// Unconstrained coordinates of a block point.
    pub fn block_to_unconstrained(&self, p: &BlockPoint) -> [f64; 4] {
        let (i0_max, lo, hi) = self.block_bounds();
        let pi_max = self.prior.pi_spec.upper;
        [
            logit(p.i0 / i0_max),
            logit((p.pi - p.i0) / (pi_max - p.i0)),
            logit((p.pt - lo) / (hi - lo)),
            p.kappa.ln(),
        ]
    }

    pub fn block_from_unconstrained(&self, u: &[f64; 4]) -> BlockPoint {
        let (i0_max, lo, hi) = self.block_bounds();
        let pi_max = self.prior.pi_spec.upper;
        let i0 = i0_max * sigmoid(u[0]);
        BlockPoint {
            i0,
            pi: i0 + (pi_max - i0) * sigmoid(u[1]),
            pt: lo + (hi - lo) * sigmoid(u[2]),
            kappa: u[3].exp(),
        }
    }

    /// `log |∂(I0, PI, PT, κ)/∂u|` (the map is lower triangular).
    fn block_log_jacobian(&self, p: &BlockPoint) -> f64 {
        let (i0_max, lo, hi) = self.block_bounds();
        let pi_max = self.prior.pi_spec.upper;
        (p.i0 * (i0_max - p.i0) / i0_max).ln()
            + ((p.pi - p.i0) * (pi_max - p.pi) / (pi_max - p.i0)).ln()
            + ((p.pt - lo) * (hi - p.pt) / (hi - lo)).ln()
            + p.kappa.ln()
    }

    /// Derives the full parameter set for a block point, keeping the current `λ`.
    pub fn derive_block(&self, p: &BlockPoint) -> Result<ModelParams> {
        ModelParams::derive(
            self.prior.s0,
            p.i0,
            p.pi,
            p.pt,
            p.kappa,
            self.state.params.lambda(),
            self.model,
        )
    }

    /// Block log target and the recomputed drifts for `params`.
    fn block_local(&self, params: &ModelParams) -> Result<(f64, Vec<Compartments>)> {
        let point = BlockPoint::from(params);
        let prior = self
            .prior
            .log_density_block(point.i0, point.pi, point.pt, point.kappa);
        if !prior.is_finite() {
            return Ok((f64::NEG_INFINITY, Vec::new()));
        }
        let rates = params.rates();
        let kappa = params.kappa();
        let days = self.y.len();
        let mut drift = Vec::with_capacity(days + 1);
        let theta0 = params.theta0();
        drift.push(theta0);
        let mut lik = 0.0;
        for t in 1..=days {
            let prev = if t == 1 {
                theta0
            } else {
                self.state.theta[t - 1]
            };
            let mean = rk4_unit_step(prev, rates, self.substeps)?;
            lik += log_transition(&self.state.theta[t], &mean, kappa);
            drift.push(mean);
        }
        Ok((lik + prior + self.block_log_jacobian(&point), drift))
    }

    /// Log MH ratio for moving the block from the current parameters to `proposal`.
    pub fn log_ratio_block(&self, proposal: &ModelParams) -> Result<f64> {
        let cur = BlockPoint::from(&self.state.params);
        let prop = BlockPoint::from(proposal);
        let (u, up) = (
            self.block_to_unconstrained(&cur),
            self.block_to_unconstrained(&prop),
        );
        let mut q = 0.0;
        for k in 0..4 {
            q += log_normal_step(up[k], u[k], self.steps.block[k])
                - log_normal_step(u[k], up[k], self.steps.block[k]);
        }
        let (lp, _) = self.block_local(proposal)?;
        let (lc, _) = self.block_local(&self.state.params)?;
        Ok(lp - lc + q)
    }

    pub fn update_param_block(&mut self) -> bool {
        let accepted = self.try_block();
        self.window.block.record(accepted);
        self.total.block.record(accepted);
        accepted
    }

    fn try_block(&mut self) -> bool {
        let cur = BlockPoint::from(&self.state.params);
        let mut u = self.block_to_unconstrained(&cur);
        for k in 0..4 {
            u[k] += self.steps.block[k] * sample_std_normal(&mut self.rng);
        }
        let point = self.block_from_unconstrained(&u);
        // Proposals with PI <= I(0) or an uninvertible PI are rejected outright.
        let proposal = match self.derive_block(&point) {
            Ok(p) => p,
            Err(_) => return false,
        };
        let (lp, drift) = match self.block_local(&proposal) {
            Ok(v) => v,
            Err(_) => return false,
        };
        if !lp.is_finite() {
            return false;
        }
        let lc = match self.block_local(&self.state.params) {
            Ok((v, _)) => v,
            Err(_) => f64::NEG_INFINITY,
        };
        if mh_accept(lp - lc, &mut self.rng) {
            self.state.theta[0] = proposal.theta0();
            self.state.drift = drift;
            self.state.params = proposal;
            true
        } else {
            false
        }
    }

    // ----- λ -----

    fn lambda_local(&self, lambda: f64) -> f64 {
        let obs: f64 = self
            .y
            .iter()
            .zip(&self.state.theta[1..])
            .map(|(y, th)| log_obs(*y, th, lambda))
            .sum();
        obs + self.prior.log_density_lambda(lambda) + lambda.ln()
    }

    pub fn log_ratio_lambda(&self, proposal: f64) -> f64 {
        let cur = self.state.params.lambda();
        let (u, up) = (cur.ln(), proposal.ln());
        let q =
            log_normal_step(up, u, self.steps.lambda) - log_normal_step(u, up, self.steps.lambda);
        self.lambda_local(proposal) - self.lambda_local(cur) + q
    }

    pub fn update_lambda(&mut self) -> bool {
        let cur = self.state.params.lambda();
        let proposal = (cur.ln() + self.steps.lambda * sample_std_normal(&mut self.rng)).exp();
        let accepted = proposal > 0.0
            && proposal.is_finite()
            && mh_accept(
                self.lambda_local(proposal) - self.lambda_local(cur),
                &mut self.rng,
            );
        if accepted {
            self.state.params = self.state.params.with_lambda(proposal);
        }
        self.window.lambda.record(accepted);
        self.total.lambda.record(accepted);
        accepted
    }

    /// One full Gibbs sweep: `θ(1..=T)` forward, then the parameter block, then `λ`.
    pub fn sweep(&mut self) {
        for t in 1..=self.y.len() {
            self.update_theta_t(t);
        }
        self.update_param_block();
        self.update_lambda();
    }

    /// Applies the multiplicative rule to every step size.
    ///
    /// The rate compared against `band` pools the windows since the step size
    /// last changed, down-weighting older ones by [`WINDOW_MEMORY`]; a single
    /// 100-iteration window is too noisy to tell 0.38 from 0.42.
    pub fn adapt_step_sizes(&mut self, band: (f64, f64)) {
        fn apply(scales: &mut [f64], window: &Counter, memory: &mut Pooled, band: (f64, f64)) {
            if window.attempted == 0 {
                return;
            }
            memory.push(window);
            let factor = adapt_scale(1.0, memory.rate(), band);
            if factor != 1.0 {
                for s in scales.iter_mut() {
                    *s *= factor;
                }
                *memory = Pooled::default();
            }
        }
        for t in 0..self.y.len() {
            for k in 0..2 {
                apply(
                    std::slice::from_mut(&mut self.steps.theta[t][k]),
                    &self.window.theta[t][k],
                    &mut self.memory.theta[t][k],
                    band,
                );
            }
        }
        apply(
            &mut self.steps.block,
            &self.window.block,
            &mut self.memory.block,
            band,
        );
        apply(
            std::slice::from_mut(&mut self.steps.lambda),
            &self.window.lambda,
            &mut self.memory.lambda,
            band,
        );
        self.window = Counters::new(self.y.len());
    }

    pub fn latent_path(&self) -> LatentPath {
        LatentPath(self.state.theta[1..].to_vec())
    }
}

/// Builds a starting state: parameters from `params`, latent path seeded at
/// the observations (`I(t) = Y(t)`, `S(t) = S(0)`).
pub fn seeded_state(params: ModelParams, y: &[f64], substeps: usize) -> Result<ChainState> {
    let s0 = params.s0();
    let path = y
        .iter()
        .map(|&v| {
            let r = 1.0 - s0 - v;
            if r > 0.0 {
                Compartments { s: s0, i: v, r }
            } else {
                Compartments::normalized(s0, v, 1.0 - s0).unwrap_or(Compartments {
                    s: s0,
                    i: (1.0 - s0) / 2.0,
                    r: (1.0 - s0) / 2.0,
                })
            }
        })
        .collect();
    ChainState::new(params, LatentPath(path), substeps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alr_round_trip() {
        let theta = Compartments {
            s: 0.93,
            i: 2e-4,
            r: 0.0698,
        };
        let back = alr_inv(alr(&theta)).unwrap();
        assert!((back.s - theta.s).abs() < 1e-15);
        assert!((back.i / theta.i - 1.0).abs() < 1e-12);
        assert!(alr_inv([800.0, 0.0]).is_none());
    }

    #[test]
    fn adapt_rule() {
        assert_eq!(adapt_scale(1.0, 0.5, (0.2, 0.4)), 1.25);
        assert_eq!(adapt_scale(1.0, 0.1, (0.2, 0.4)), 0.8);
        assert_eq!(adapt_scale(1.0, 0.3, (0.2, 0.4)), 1.0);
    }

    #[test]
    fn mh_kernel_on_discrete_ring() {
        // Three-state target with a symmetric ±1 proposal on a ring.
        let target: [f64; 3] = [0.2, 0.3, 0.5];
        let mut rng = RngStream::new(99, 0);
        let mut state = 0usize;
        let mut counts = [0usize; 3];
        let n = 1_000_000;
        for _ in 0..n {
            let step = if rng.open01() < 0.5 { 1 } else { 2 };
            let prop = (state + step) % 3;
            if mh_accept((target[prop] / target[state]).ln(), &mut rng) {
                state = prop;
            }
            counts[state] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&target)
            .map(|(c, p)| (*c as f64 / n as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "TV = {tv}");
    }

    #[test]
    fn nan_ratio_rejected() {
        let mut rng = RngStream::new(1, 1);
        assert!(!mh_accept(f64::NAN, &mut rng));
        assert!(mh_accept(0.0, &mut rng));
    }
}
