//! Predictive simulation: prior predictive checks, posterior forecasts and
//! intervention scenarios.
//!
//! A scenario multiplies the infection rate by `c` for forecast days
//! `1..=t_star` and by `c_star` afterwards; `γ` is unchanged. Each draw is
//! simulated on its own RNG substream (indexed by draw position), so results
//! do not depend on thread scheduling and `c = c_star = 1` reproduces the
//! no-intervention forecast exactly.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::{quantile, Interval, PosteriorDraws};
use crate::params::ModelParams;
use crate::prior::{sample_prior, PriorSpec, RegressionModel};
use crate::sir::{rk4_unit_step, DEFAULT_SUBSTEPS};
use crate::stats::{sample_beta, sample_dirichlet, RngStream};
use crate::{Compartments, SirRates};

pub const DEFAULT_HORIZON: usize = 365;

/// Intervention multipliers `c`, `c_star` and duration `t_star` (days from
/// the first forecast day).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub c: f64,
    pub c_star: f64,
    pub t_star: usize,
    pub horizon: usize,
}

impl ScenarioSpec {
    pub fn new(c: f64, c_star: f64, t_star: usize, horizon: usize) -> Result<Self> {
        let s = Self {
            c,
            c_star,
            t_star,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn no_intervention(horizon: usize) -> Self {
        Self {
            c: 1.0,
            c_star: 1.0,
            t_star: 0,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite() && self.c_star > 0.0 && self.c_star.is_finite()) {
            return Err(invalid(format!(
                "scenario multipliers must be positive, got c={}, c_star={}",
                self.c, self.c_star
            )));
        }
        if self.horizon == 0 {
            return Err(invalid("forecast horizon must be at least one day"));
        }
        if self.t_star > self.horizon {
            return Err(invalid(format!(
                "t_star = {} exceeds the horizon {}",
                self.t_star, self.horizon
            )));
        }
        Ok(())
    }

    pub fn is_no_intervention(&self) -> bool {
        self.c == 1.0 && self.c_star == 1.0
    }

    /// Multiplier applied on forecast day `k` (1-based).
    #[inline]
    pub fn multiplier(&self, k: usize) -> f64 {
        if k <= self.t_star {
            self.c
        } else {
            self.c_star
        }
    }

    /// The 6 × 3 × 3 grid of intervention strengths, durations and
    /// post-intervention levels, optionally with the 75-day duration added.
    pub fn default_grid(horizon: usize, extended: bool) -> Vec<Self> {
        let mut t_stars = vec![14, 28, 45];
        if extended {
            t_stars.push(75);
        }
        let mut out = Vec::new();
        for &c in &[0.6, 0.5, 0.4, 0.3, 0.2, 0.1] {
            for &t_star in &t_stars {
                for &c_star in &[1.0, 0.9, 0.8] {
                    out.push(Self {
                        c,
                        c_star,
                        t_star,
                        horizon,
                    });
                }
            }
        }
        out
    }
}

/// Knobs that do not change the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastOptions {
    /// Use at most this many posterior draws, evenly spaced; `None` = all.
    pub max_draws: Option<usize>,
    pub substeps: usize,
    /// Replace every draw's `κ` (e.g. a huge value for a near-deterministic run).
    pub kappa_override: Option<f64>,
    pub lambda_override: Option<f64>,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        Self {
            max_draws: None,
            substeps: DEFAULT_SUBSTEPS,
            kappa_override: None,
            lambda_override: None,
        }
    }
}

/// Pointwise quantiles on one day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Day index counted from `θ(0)`.
    pub day: usize,
    pub q025: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub q975: f64,
}

impl Band {
    fn from_column(day: usize, column: &mut [f64]) -> Self {
        column.sort_by(f64::total_cmp);
        Self {
            day,
            q025: quantile(column, 0.025),
            q25: quantile(column, 0.25),
            median: quantile(column, 0.5),
            q75: quantile(column, 0.75),
            q95: quantile(column, 0.95),
            q975: quantile(column, 0.975),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.q025 <= x && x <= self.q975
    }
}

/// Per-draw peaks of the simulated `I` path, summarized across draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    /// Peak day (from `θ(0)`) over draws whose peak is not at the horizon.
    pub time: Option<Interval>,
    pub intensity: Option<Interval>,
    pub time_q95: Option<f64>,
    pub intensity_q95: Option<f64>,
    /// Share of draws whose `I` path is still non-decreasing at the horizon.
    pub censored_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// `None` for the prior predictive.
    pub scenario: Option<ScenarioSpec>,
    /// Last conditioning day `T`; bands cover `T + 1 ..= T + horizon`.
    pub start_day: usize,
    pub draws: usize,
    pub observed: Vec<Band>,
    pub infectious: Vec<Band>,
    pub peak: PeakSummary,
    /// New infections over the horizon, `S(T) − S(T + horizon)`.
    pub attack: Interval,
}

impl Forecast {
    /// Day of the highest pointwise median of `Y`, with its band. The median
    /// curve is the point prediction; its peak is not the median of per-draw
    /// peaks (see [`Forecast::peak`]).
    pub fn point_prediction_peak(&self) -> &Band {
        self.observed.iter().fold(&self.observed[0], |best, b| {
            if b.median > best.median {
                b
            } else {
                best
            }
        })
    }

    /// Whether the point prediction rises above `level` and falls back before
    /// the horizon.
    pub fn point_prediction_has_interior_peak_above(&self, level: f64) -> bool {
        let peak = self.point_prediction_peak();
        let last = self.observed.last().map_or(0, |b| b.day);
        peak.median > level && peak.day < last
    }
}

/// One simulated forward path.
struct Simulated {
    infectious: Vec<f64>,
    observed: Vec<f64>,
    /// Index into the path (0 = start state) of the highest `I`.
    peak_index: usize,
    peak_value: f64,
    censored: bool,
    attack: f64,
}

/// Infectious fraction below which a simulated path is treated as extinct.
const EXTINCT: f64 = 1e-280;

#[allow(clippy::too_many_arguments)]
fn simulate_forward(
    start: Compartments,
    rates: SirRates,
    kappa: f64,
    lambda: f64,
    scenario: &ScenarioSpec,
    substeps: usize,
    rng: &mut RngStream,
) -> Result<Simulated> {
    let h = scenario.horizon;
    let mut infectious = Vec::with_capacity(h);
    let mut observed = Vec::with_capacity(h);
    let mut x = start;
    let (mut peak_index, mut peak_value) = (0, start.i);
    for k in 1..=h {
        // Once the epidemic is extinct every draw floors I again, and stepping
        // the dynamics would only grind through subnormal arithmetic.
        let mean = if x.i < EXTINCT {
            x
        } else {
            rk4_unit_step(x, rates.scale_beta(scenario.multiplier(k)), substeps)?
        };
        let a = sample_dirichlet(rng, &[kappa * mean.s, kappa * mean.i, kappa * mean.r]);
        x = Compartments::from_array(a);
        let y = sample_beta(rng, lambda * x.i, lambda * (1.0 - x.i));
        if x.i > peak_value {
            peak_value = x.i;
            peak_index = k;
        }
        infectious.push(x.i);
        observed.push(y);
    }
    Ok(Simulated {
        infectious,
        observed,
        peak_index,
        peak_value,
        censored: peak_index == h,
        attack: start.s - x.s,
    })
}

fn summarize(
    sims: Vec<Simulated>,
    start_day: usize,
    scenario: Option<ScenarioSpec>,
) -> Result<Forecast> {
    let n = sims.len();
    if n == 0 {
        return Err(Error::EmptyDraws);
    }
    let h = sims[0].infectious.len();
    let mut column = vec![0.0; n];
    let mut bands = |pick: &dyn Fn(&Simulated, usize) -> f64| -> Vec<Band> {
        (0..h)
            .map(|k| {
                for (c, s) in column.iter_mut().zip(&sims) {
                    *c = pick(s, k);
                }
                Band::from_column(start_day + k + 1, &mut column)
            })
            .collect()
    };
    let observed = bands(&|s, k| s.observed[k]);
    let infectious = bands(&|s, k| s.infectious[k]);

    let peaks: Vec<&Simulated> = sims.iter().filter(|s| !s.censored).collect();
    let censored_fraction = (n - peaks.len()) as f64 / n as f64;
    let (time, intensity, time_q95, intensity_q95) = if peaks.is_empty() {
        (None, None, None, None)
    } else {
        let times = || peaks.iter().map(|s| (start_day + s.peak_index) as f64);
        let values = || peaks.iter().map(|s| s.peak_value);
        let q95 = |it: Vec<f64>| {
            let mut v = it;
            v.sort_by(f64::total_cmp);
            quantile(&v, 0.95)
        };
        (
            Some(Interval::from_sample(times())?),
            Some(Interval::from_sample(values())?),
            Some(q95(times().collect())),
            Some(q95(values().collect())),
        )
    };
    Ok(Forecast {
        scenario,
        start_day,
        draws: n,
        observed,
        infectious,
        peak: PeakSummary {
            time,
            intensity,
            time_q95,
            intensity_q95,
            censored_fraction,
        },
        attack: Interval::from_sample(sims.iter().map(|s| s.attack))?,
    })
}

/// Indices of at most `max` draws out of `n`, evenly spaced.
fn selected(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < n => (0..m).map(|j| j * n / m).collect(),
        _ => (0..n).collect(),
    }
}

/// Simulates forward from each posterior draw's `θ(T)` under `scenario`.
pub fn posterior_forecast(
    draws: &PosteriorDraws,
    scenario: &ScenarioSpec,
    rng: &RngStream,
    options: &ForecastOptions,
) -> Result<Forecast> {
    scenario.validate()?;
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if options.max_draws == Some(0) {
        return Err(invalid("max_draws must be positive"));
    }
    let start_day = draws.days();
    let sims = selected(draws.len(), options.max_draws)
        .into_par_iter()
        .map(|d| {
            let p = &draws.params[d];
            let start = *draws.paths[d].last().ok_or(Error::EmptyDraws)?;
            let mut r = rng.substream(d as u64);
            simulate_forward(
                start,
                p.rates(),
                options.kappa_override.unwrap_or(p.kappa()),
                options.lambda_override.unwrap_or(p.lambda()),
                scenario,
                options.substeps,
                &mut r,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(sims, start_day, Some(*scenario))
}

/// Runs every scenario on substream `i` of `rng` and returns the forecasts
/// in input order.
pub fn scenario_sweep(
    draws: &PosteriorDraws,
    scenarios: &[ScenarioSpec],
    rng: &RngStream,
    options: &ForecastOptions,
) -> Result<Vec<Forecast>> {
    if scenarios.is_empty() {
        return Err(invalid("no scenarios"));
    }
    scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| posterior_forecast(draws, s, &rng.substream(i as u64), options))
        .collect()
}

/// Draws parameters from the prior and simulates `θ(1..=days)`, `Y(1..=days)`
/// from `θ(0)`.
pub fn prior_predictive(
    rng: &RngStream,
    prior: &PriorSpec,
    model: &RegressionModel,
    days: usize,
    n_draws: usize,
    options: &ForecastOptions,
) -> Result<Forecast> {
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let scenario = ScenarioSpec::no_intervention(days);
    scenario.validate()?;
    let sims = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut r = rng.substream(d as u64);
            let p: ModelParams = sample_prior(&mut r, prior, model)?;
            simulate_forward(
                p.theta0(),
                p.rates(),
                options.kappa_override.unwrap_or(p.kappa()),
                options.lambda_override.unwrap_or(p.lambda()),
                &scenario,
                options.substeps,
                &mut r,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(sims, 0, None)
}

/// `day, median, q025, q975, q95_upper` for `Y`, then the same for `I`.
pub fn write_forecast_csv<W: Write>(out: W, forecast: &Forecast) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(band_header(&[]))?;
    for (y, i) in forecast.observed.iter().zip(&forecast.infectious) {
        w.write_record(band_row(&[], y, i))?;
    }
    w.flush()?;
    Ok(())
}

/// All forecasts in one table with `c, c_star, t_star` key columns.
pub fn write_sweep_csv<W: Write>(out: W, forecasts: &[Forecast]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(band_header(&["c", "c_star", "t_star"]))?;
    for f in forecasts {
        let s = f
            .scenario
            .ok_or_else(|| invalid("sweep entry without a scenario"))?;
        let key = [s.c.to_string(), s.c_star.to_string(), s.t_star.to_string()];
        for (y, i) in f.observed.iter().zip(&f.infectious) {
            w.write_record(band_row(&key, y, i))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn band_header(keys: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = keys.iter().map(|s| s.to_string()).collect();
    h.push("day".into());
    for prefix in ["", "i_"] {
        for col in ["median", "q025", "q25", "q75", "q975", "q95_upper"] {
            h.push(format!("{prefix}{col}"));
        }
    }
    h
}

fn band_row(keys: &[String], y: &Band, i: &Band) -> Vec<String> {
    let mut r = keys.to_vec();
    r.push(y.day.to_string());
    for b in [y, i] {
        for v in [b.median, b.q025, b.q25, b.q75, b.q975, b.q95] {
            r.push(v.to_string());
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(ScenarioSpec::default_grid(365, false).len(), 54);
        assert_eq!(ScenarioSpec::default_grid(365, true).len(), 72);
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioSpec::new(0.0, 1.0, 14, 365).is_err());
        assert!(ScenarioSpec::new(0.5, -1.0, 14, 365).is_err());
        assert!(ScenarioSpec::new(0.5, 1.0, 400, 365).is_err());
        assert!(ScenarioSpec::new(0.5, 1.0, 0, 0).is_err());
        let s = ScenarioSpec::new(0.5, 0.9, 14, 365).unwrap();
        assert_eq!(s.multiplier(1), 0.5);
        assert_eq!(s.multiplier(14), 0.5);
        assert_eq!(s.multiplier(15), 0.9);
    }

    use crate::inference::{ChainConfig, LatentPath};
    use crate::sir::simulate_trajectory;

    fn toy_draws(n: usize) -> PosteriorDraws {
        let m = RegressionModel::published();
        let mut rng = RngStream::new(8, 0);
        let prior = PriorSpec::japan_2020(0.1);
        let params: Vec<ModelParams> = (0..n)
            .map(|_| sample_prior(&mut rng, &prior, &m).unwrap())
            .collect();
        let paths = params
            .iter()
            .map(|p| {
                LatentPath(
                    simulate_trajectory(p.theta0(), p.rates(), 10, DEFAULT_SUBSTEPS).unwrap(),
                )
            })
            .collect();
        PosteriorDraws {
            chain: vec![0; n],
            iteration: (1..=n).collect(),
            log_posterior: vec![0.0; n],
            params,
            paths,
            acceptance: vec![],
            step_sizes: vec![],
        }
    }

    #[test]
    fn identity_scenario_matches_no_intervention() {
        let d = toy_draws(50);
        let rng = RngStream::new(1, 2);
        let o = ForecastOptions::default();
        let base = posterior_forecast(&d, &ScenarioSpec::no_intervention(60), &rng, &o).unwrap();
        let same = posterior_forecast(&d, &ScenarioSpec::new(1.0, 1.0, 30, 60).unwrap(), &rng, &o)
            .unwrap();
        assert_eq!(base.observed, same.observed);
        assert_eq!(base.infectious, same.infectious);
        assert_eq!(base.peak, same.peak);
        let other = posterior_forecast(&d, &ScenarioSpec::new(0.5, 1.0, 30, 60).unwrap(), &rng, &o)
            .unwrap();
        assert_ne!(base.infectious, other.infectious);
    }

    #[test]
    fn sweep_of_one_equals_single_forecast() {
        let d = toy_draws(30);
        let rng = RngStream::new(5, 0);
        let o = ForecastOptions::default();
        let s = ScenarioSpec::new(0.3, 0.9, 14, 40).unwrap();
        let single = posterior_forecast(&d, &s, &rng.substream(0), &o).unwrap();
        let sweep = scenario_sweep(&d, &[s], &rng, &o).unwrap();
        assert_eq!(sweep, vec![single]);
        assert!(scenario_sweep(&d, &[], &rng, &o).is_err());
    }

    #[test]
    fn degenerate_noise_limit_follows_ode() {
        let d = toy_draws(40);
        let o = ForecastOptions {
            kappa_override: Some(1e12),
            lambda_override: Some(1e12),
            ..ForecastOptions::default()
        };
        let s = ScenarioSpec::new(0.5, 0.9, 10, 30).unwrap();
        let f = posterior_forecast(&d, &s, &RngStream::new(2, 0), &o).unwrap();
        // Deterministic continuation of every draw, medians taken per day.
        let mut curves = Vec::new();
        for (p, path) in d.params.iter().zip(&d.paths) {
            let mut x = *path.last().unwrap();
            let mut c = Vec::new();
            for k in 1..=30 {
                let r = p.rates().scale_beta(if k <= 10 { 0.5 } else { 0.9 });
                x = rk4_unit_step(x, r, DEFAULT_SUBSTEPS).unwrap();
                c.push(x.i);
            }
            curves.push(c);
        }
        for k in 0..30 {
            let mut col: Vec<f64> = curves.iter().map(|c| c[k]).collect();
            col.sort_by(f64::total_cmp);
            let m = quantile(&col, 0.5);
            assert!((f.infectious[k].median - m).abs() < 1e-4);
            assert!((f.observed[k].median - m).abs() < 1e-4);
        }
    }

    #[test]
    fn single_draw_bands_collapse() {
        let d = toy_draws(1);
        let f = posterior_forecast(
            &d,
            &ScenarioSpec::no_intervention(20),
            &RngStream::new(1, 1),
            &ForecastOptions::default(),
        )
        .unwrap();
        for b in &f.observed {
            assert_eq!(b.q025, b.median);
            assert_eq!(b.q975, b.median);
        }
        assert_eq!(f.draws, 1);
    }

    #[test]
    fn prior_predictive_degenerate_limit() {
        let m = RegressionModel::published();
        let prior = PriorSpec::japan_2020(0.1);
        let rng = RngStream::new(9, 0);
        let o = ForecastOptions {
            kappa_override: Some(1e14),
            lambda_override: Some(1e14),
            ..ForecastOptions::default()
        };
        let f = prior_predictive(&rng, &prior, &m, 30, 1, &o).unwrap();
        let p = sample_prior(&mut rng.substream(0), &prior, &m).unwrap();
        let ode = simulate_trajectory(p.theta0(), p.rates(), 30, DEFAULT_SUBSTEPS).unwrap();
        for (b, th) in f.infectious.iter().zip(&ode) {
            assert!((b.median - th.i).abs() < 1e-6);
        }
        assert_eq!(f.start_day, 0);
        assert_eq!(f.infectious[0].day, 1);
        assert!(prior_predictive(&rng, &prior, &m, 30, 0, &o).is_err());
    }

    #[test]
    fn band_nesting_and_csv() {
        let d = toy_draws(60);
        let f = posterior_forecast(
            &d,
            &ScenarioSpec::new(0.4, 0.8, 5, 25).unwrap(),
            &RngStream::new(3, 3),
            &ForecastOptions::default(),
        )
        .unwrap();
        for b in f.observed.iter().chain(&f.infectious) {
            assert!(b.q025 <= b.q25 && b.q25 <= b.median && b.median <= b.q75 && b.q75 <= b.q975);
            assert!(b.median <= b.q95 && b.q95 <= b.q975);
        }
        assert_eq!(f.observed.first().unwrap().day, 11);
        let mut out = Vec::new();
        write_forecast_csv(&mut out, &f).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("day,median,q025,q25,q75,q975,q95_upper,i_median"));
        assert_eq!(text.lines().count(), 26);
        let mut out = Vec::new();
        write_sweep_csv(&mut out, &[f.clone(), f]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 51);
        let _ = ChainConfig::quick(0);
    }

    #[test]
    fn empty_draws_rejected() {
        let d = PosteriorDraws::merge(vec![]);
        let r = posterior_forecast(
            &d,
            &ScenarioSpec::no_intervention(5),
            &RngStream::new(0, 0),
            &ForecastOptions::default(),
        );
        assert!(matches!(r, Err(Error::EmptyDraws)));
    }

    #[test]
    fn draw_selection() {
        assert_eq!(selected(5, None), vec![0, 1, 2, 3, 4]);
        assert_eq!(selected(10, Some(3)), vec![0, 3, 6]);
        assert_eq!(selected(2, Some(5)), vec![0, 1]);
    }
}
