use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::PosteriorDraws;
use crate::params::ModelParams;

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n − 1)q`). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!(
        (0.0..=1.0).contains(&q),
        "quantile level {q} outside [0, 1]"
    );
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = values.collect();
    if v.iter().any(|x| x.is_nan()) {
        return Err(invalid("NaN in posterior sample"));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Posterior median with a central 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_sample(values: impl Iterator<Item = f64>) -> Result<Self> {
        let v = sorted(values)?;
        if v.is_empty() {
            return Err(Error::EmptyDraws);
        }
        Ok(Self {
            median: quantile(&v, 0.5),
            lower: quantile(&v, 0.025),
            upper: quantile(&v, 0.975),
        })
    }

    /// `"median (lower--upper)"` with `digits` decimals.
    pub fn format(&self, digits: usize) -> String {
        format!(
            "{:.d$} ({:.d$}--{:.d$})",
            self.median,
            self.lower,
            self.upper,
            d = digits
        )
    }

    /// Same layout in scientific notation.
    pub fn format_sci(&self, digits: usize) -> String {
        format!(
            "{:.d$e} ({:.d$e}--{:.d$e})",
            self.median,
            self.lower,
            self.upper,
            d = digits
        )
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayInterval {
    pub day: usize,
    #[serde(flatten)]
    pub interval: Interval,
}

/// Marginal summaries of the parameters and of `I(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub draws: usize,
    pub r0: Interval,
    pub beta: Interval,
    pub gamma: Interval,
    pub i0: Interval,
    pub peak_intensity: Interval,
    pub peak_timing: Interval,
    pub kappa: Interval,
    pub lambda: Interval,
    pub infectious: Vec<DayInterval>,
}

impl PosteriorSummary {
    pub fn from_draws(draws: &PosteriorDraws) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptyDraws);
        }
        let p = &draws.params;
        let of = |f: fn(&ModelParams) -> f64| Interval::from_sample(p.iter().map(f));
        let infectious = (0..draws.days())
            .map(|t| {
                Interval::from_sample(draws.paths.iter().map(|path| path.0[t].i)).map(|interval| {
                    DayInterval {
                        day: t + 1,
                        interval,
                    }
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            draws: draws.len(),
            r0: of(ModelParams::r0)?,
            beta: of(ModelParams::beta)?,
            gamma: of(ModelParams::gamma)?,
            i0: of(ModelParams::i0)?,
            peak_intensity: of(ModelParams::pi)?,
            peak_timing: of(ModelParams::pt)?,
            kappa: of(ModelParams::kappa)?,
            lambda: of(ModelParams::lambda)?,
            infectious,
        })
    }

    /// Named rows in display order.
    pub fn rows(&self) -> Vec<(&'static str, Interval)> {
        vec![
            ("R0", self.r0),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("I0", self.i0),
            ("PI", self.peak_intensity),
            ("PT", self.peak_timing),
            ("kappa", self.kappa),
            ("lambda", self.lambda),
        ]
    }
}
