//! Regression prior for the infection rate.
//!
//! `log β` is regressed on 28 monomials of `(log PT, log I(0), log ρ)` fitted
//! over a grid of simulated SIR curves, and the prior for `β` is the point
//! mass at `exp(x·τ̂ + σ̂²/2)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sir::{invert_rho, peak_timing, PeakTiming, DEFAULT_SUBSTEPS};
use crate::{Compartments, SirRates};

/// Number of regression covariates, intercept included.
pub const N_COVARIATES: usize = 28;

/// Covariate recipe: name and exponents of `(log PT, log I(0), log ρ)`, in
/// coefficient order `τ₁ … τ₂₈`.
pub const MONOMIALS: [(&str, [u8; 3]); N_COVARIATES] = [
    ("intercept", [0, 0, 0]),
    ("log_pt", [1, 0, 0]),
    ("log_pt^2", [2, 0, 0]),
    ("log_i0", [0, 1, 0]),
    ("log_i0^2", [0, 2, 0]),
    ("log_rho", [0, 0, 1]),
    ("log_rho^2", [0, 0, 2]),
    ("log_rho^3", [0, 0, 3]),
    ("log_rho^4", [0, 0, 4]),
    ("log_i0*log_rho", [0, 1, 1]),
    ("log_i0^2*log_rho", [0, 2, 1]),
    ("log_i0*log_rho^2", [0, 1, 2]),
    ("log_i0^2*log_rho^2", [0, 2, 2]),
    ("log_i0*log_rho^3", [0, 1, 3]),
    ("log_i0^2*log_rho^3", [0, 2, 3]),
    ("log_i0*log_rho^4", [0, 1, 4]),
    ("log_i0^2*log_rho^4", [0, 2, 4]),
    ("log_pt*log_i0", [1, 1, 0]),
    ("log_pt*log_rho", [1, 0, 1]),
    ("log_pt^2*log_i0", [2, 1, 0]),
    ("log_pt*log_i0^2", [1, 2, 0]),
    ("log_pt^2*log_rho", [2, 0, 1]),
    ("log_pt^2*log_rho^2", [2, 0, 2]),
    ("log_pt^3", [3, 0, 0]),
    ("log_pt^4", [4, 0, 0]),
    ("log_pt^3*log_i0", [3, 1, 0]),
    ("log_pt^2*log_i0^2", [2, 2, 0]),
    ("log_i0^3", [0, 3, 0]),
];

/// The published coefficient table (three significant figures).
pub const PUBLISHED_COEFFICIENTS_JSON: &str =
    include_str!("../../data/published_coefficients.json");

/// Covariate row for `(pt, i0, rho)`; all three must be positive.
pub fn covariates(pt: f64, i0: f64, rho: f64) -> Result<[f64; N_COVARIATES]> {
    if !(pt > 0.0 && i0 > 0.0 && rho > 0.0) || !(pt.is_finite() && rho.is_finite()) {
        return Err(invalid(format!(
            "regression covariates need positive pt, i0, rho (got {pt}, {i0}, {rho})"
        )));
    }
    let logs = [pt.ln(), i0.ln(), rho.ln()];
    let mut powers = [[1.0f64; 5]; 3];
    for v in 0..3 {
        for e in 1..5 {
            powers[v][e] = powers[v][e - 1] * logs[v];
        }
    }
    let mut row = [0.0; N_COVARIATES];
    for (slot, (_, exps)) in row.iter_mut().zip(MONOMIALS.iter()) {
        *slot =
            powers[0][exps[0] as usize] * powers[1][exps[1] as usize] * powers[2][exps[2] as usize];
    }
    Ok(row)
}

/// Coefficients `τ̂` (ordered as [`MONOMIALS`]) and residual variance `σ̂²`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel {
    tau: [f64; N_COVARIATES],
    sigma2: f64,
}

#[derive(Serialize, Deserialize)]
struct NamedCoefficient {
    name: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct RegressionFile {
    sigma2: f64,
    coefficients: Vec<NamedCoefficient>,
}

impl RegressionModel {
    pub fn new(tau: [f64; N_COVARIATES], sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) || tau.iter().any(|t| !t.is_finite()) {
            return Err(invalid(
                "regression coefficients must be finite and sigma2 non-negative",
            ));
        }
        Ok(Self { tau, sigma2 })
    }

    /// The published coefficients.
    pub fn published() -> Self {
        Self::from_json(PUBLISHED_COEFFICIENTS_JSON).expect("bundled table is valid")
    }

    pub fn tau(&self) -> &[f64; N_COVARIATES] {
        &self.tau
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `exp(x·τ̂ + σ̂²/2)` at `(log pt, log i0, log rho)`.
    pub fn beta(&self, pt: f64, i0: f64, rho: f64) -> Result<f64> {
        let x = covariates(pt, i0, rho)?;
        let eta: f64 = x.iter().zip(&self.tau).map(|(a, b)| a * b).sum();
        Ok((eta + 0.5 * self.sigma2).exp())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RegressionFile = serde_json::from_str(text)?;
        if file.coefficients.len() != N_COVARIATES {
            return Err(invalid(format!(
                "expected {N_COVARIATES} coefficients, found {}",
                file.coefficients.len()
            )));
        }
        let mut tau = [0.0; N_COVARIATES];
        for (k, ((name, _), c)) in MONOMIALS.iter().zip(&file.coefficients).enumerate() {
            if c.name != *name {
                return Err(invalid(format!(
                    "coefficient {} is `{}`, expected `{name}`",
                    k + 1,
                    c.name
                )));
            }
            tau[k] = c.value;
        }
        Self::new(tau, file.sigma2)
    }

    pub fn to_json(&self) -> String {
        let file = RegressionFile {
            sigma2: self.sigma2,
            coefficients: MONOMIALS
                .iter()
                .zip(&self.tau)
                .map(|((name, _), value)| NamedCoefficient {
                    name: (*name).to_string(),
                    value: *value,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }
}

/// One `(β, PI, I(0))` combination of the simulation grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub beta: f64,
    pub pi: f64,
    pub i0: f64,
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        if k + 1 == n {
            b
        } else {
            a + (b - a) * k as f64 / (n - 1) as f64
        }
    })
}

/// 40 values of `β` on `[0.05, 1]`, `PI ∈ {0.01, …, 0.10}`, and 20 values of
/// `I(0)` on `[0.1·Y(1), 0.001]`: 8000 combinations.
pub fn build_grid(y1: f64) -> Result<Vec<GridPoint>> {
    let i0_lo = 0.1 * y1;
    if !(i0_lo > 0.0 && i0_lo < 0.001) {
        return Err(invalid(format!(
            "first observation {y1} gives an empty I(0) grid (need 0 < 0.1·Y(1) < 0.001)"
        )));
    }
    let betas: Vec<f64> = linspace(0.05, 1.0, 40).collect();
    let pis: Vec<f64> = (1..=10).map(|k| k as f64 / 100.0).collect();
    let i0s: Vec<f64> = linspace(i0_lo, 0.001, 20).collect();
    let mut grid = Vec::with_capacity(8000);
    for &beta in &betas {
        for &pi in &pis {
            for &i0 in &i0s {
                grid.push(GridPoint { beta, pi, i0 });
            }
        }
    }
    Ok(grid)
}

#[derive(Clone, Copy, Debug)]
pub struct GridOptions {
    /// Simulation horizon in days; curves peaking later are dropped.
    pub horizon: usize,
    pub substeps: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            horizon: 3000,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

/// A simulated grid point that entered the regression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub beta: f64,
    pub pi: f64,
    pub i0: f64,
    pub rho: f64,
    pub pt: f64,
}

#[derive(Clone, Debug)]
pub struct RegressionFit {
    pub model: RegressionModel,
    pub r_squared: f64,
    pub rows: Vec<GridRow>,
    /// Grid points dropped as non-epidemic or censored.
    pub dropped: usize,
}

/// Simulates every grid point, identifies its peak timing and returns the
/// usable rows (epidemic regime, peak within the horizon).
pub fn simulate_grid(grid: &[GridPoint], s0: f64, options: GridOptions) -> Result<Vec<GridRow>> {
    let rows: Vec<Option<GridRow>> = grid
        .par_iter()
        .map(|g| -> Result<Option<GridRow>> {
            let rho = match invert_rho(g.pi, s0, g.i0) {
                Ok(rho) => rho,
                Err(Error::PeakOutOfRange { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let theta0 = Compartments::initial(s0, g.i0)?;
            let rates = SirRates::new(g.beta, g.beta * rho)?;
            Ok(
                match peak_timing(theta0, rates, options.horizon, options.substeps)? {
                    PeakTiming::Interior { time, .. } => Some(GridRow {
                        beta: g.beta,
                        pi: g.pi,
                        i0: g.i0,
                        rho,
                        pt: time,
                    }),
                    PeakTiming::Censored | PeakTiming::Degenerate => None,
                },
            )
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Ordinary least squares of `log β` on the 28 covariates over the grid.
pub fn fit_beta_regression(
    grid: &[GridPoint],
    s0: f64,
    options: GridOptions,
) -> Result<RegressionFit> {
    let rows = simulate_grid(grid, s0, options)?;
    let dropped = grid.len() - rows.len();
    let (model, r_squared) = ols(&rows)?;
    Ok(RegressionFit {
        model,
        r_squared,
        rows,
        dropped,
    })
}

/// Least squares on pre-simulated rows; returns the model and in-sample `R²`.
pub fn ols(rows: &[GridRow]) -> Result<(RegressionModel, f64)> {
    let n = rows.len();
    if n <= N_COVARIATES {
        return Err(Error::RankDeficient {
            rank: n,
            columns: N_COVARIATES,
        });
    }
    let mut x = DMatrix::<f64>::zeros(n, N_COVARIATES);
    let mut y = DVector::<f64>::zeros(n);
    for (k, row) in rows.iter().enumerate() {
        let cov = covariates(row.pt, row.i0, row.rho)?;
        for j in 0..N_COVARIATES {
            x[(k, j)] = cov[j];
        }
        y[k] = row.beta.ln();
    }
    // Column equilibration: the raw monomials span many orders of magnitude.
    let norms: Vec<f64> = (0..N_COVARIATES).map(|j| x.column(j).norm()).collect();
    for j in 0..N_COVARIATES {
        if norms[j] > 0.0 {
            x.column_mut(j).scale_mut(1.0 / norms[j]);
        }
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * n.max(N_COVARIATES) as f64 * f64::EPSILON;
    let rank = svd.rank(tol);
    if rank < N_COVARIATES {
        return Err(Error::RankDeficient {
            rank,
            columns: N_COVARIATES,
        });
    }
    let scaled = svd
        .solve(&y, tol)
        .map_err(|e| invalid(format!("least squares solve failed: {e}")))?;
    let resid = &y - &x * &scaled;
    let rss = resid.norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let mut tau = [0.0; N_COVARIATES];
    for j in 0..N_COVARIATES {
        tau[j] = if norms[j] > 0.0 {
            scaled[j] / norms[j]
        } else {
            0.0
        };
    }
    let sigma2 = rss / (n - N_COVARIATES) as f64;
    Ok((RegressionModel::new(tau, sigma2)?, 1.0 - rss / tss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_endpoints() {
        let grid = build_grid(1.05e-4).unwrap();
        assert_eq!(grid.len(), 8000);
        let betas: Vec<f64> = grid.iter().map(|g| g.beta).collect();
        assert_eq!(betas.iter().cloned().fold(f64::INFINITY, f64::min), 0.05);
        assert_eq!(betas.iter().cloned().fold(0.0, f64::max), 1.0);
        let i0s: Vec<f64> = grid[..20].iter().map(|g| g.i0).collect();
        assert!((i0s[0] - 1.05e-5).abs() < 1e-18);
        assert_eq!(i0s[19], 0.001);
        let mut pis: Vec<f64> = grid.iter().map(|g| g.pi).collect();
        pis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pis.dedup();
        let expected: Vec<f64> = (1..=10).map(|k| k as f64 * 0.01).collect();
        assert_eq!(pis.len(), 10);
        for (a, b) in pis.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_large_first_observation() {
        assert!(build_grid(0.01).is_err());
        assert!(build_grid(0.0).is_err());
    }

    #[test]
    fn intercept_only_model() {
        let mut tau = [0.0; N_COVARIATES];
        tau[0] = -2.45;
        let m = RegressionModel::new(tau, 0.0).unwrap();
        assert!((m.beta(150.0, 1e-4, 0.7).unwrap() - (-2.45f64).exp()).abs() < 1e-15);
        assert!(m.beta(0.0, 1e-4, 0.7).is_err());
    }

    #[test]
    fn json_round_trip_and_names() {
        let m = RegressionModel::published();
        assert_eq!(m.tau()[0], -2.45);
        assert_eq!(m.tau()[27], -6.46e-4);
        assert_eq!(m.sigma2(), 6.92e-8);
        let back = RegressionModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let broken = m.to_json().replace("log_i0^3", "log_i0^4");
        assert!(RegressionModel::from_json(&broken).is_err());
    }

    #[test]
    fn published_coefficients_at_reported_medians() {
        // PT = 161, R0 = 1.43 and the prior mean of I(0); the implied β must
        // sit inside the reported 95% interval (0.13, 0.43).
        let beta = RegressionModel::published()
            .beta(161.0, 8e-5, 1.0 / 1.43)
            .unwrap();
        assert!((0.13..0.43).contains(&beta), "beta = {beta}");
    }

    #[test]
    fn ols_recovers_exact_polynomial() {
        let mut tau = [0.0; N_COVARIATES];
        for (k, t) in tau.iter_mut().enumerate() {
            *t = ((k * 7919) % 13) as f64 / 100.0 - 0.06;
        }
        let truth = RegressionModel::new(tau, 0.0).unwrap();
        let mut rows = Vec::new();
        for a in 0..8 {
            for b in 0..8 {
                for c in 0..8 {
                    let pt = 20.0 + 60.0 * a as f64;
                    let i0 = 1e-5 * (1.0 + 12.0 * b as f64);
                    let rho = 0.3 + 0.08 * c as f64;
                    let beta = truth.beta(pt, i0, rho).unwrap();
                    rows.push(GridRow {
                        beta,
                        pi: 0.0,
                        i0,
                        rho,
                        pt,
                    });
                }
            }
        }
        let (fit, r2) = ols(&rows).unwrap();
        assert!(r2 > 1.0 - 1e-12);
        for r in rows.iter().step_by(37) {
            let rel = (fit.beta(r.pt, r.i0, r.rho).unwrap() / r.beta - 1.0).abs();
            assert!(rel < 1e-8);
        }
    }

    #[test]
    fn ols_detects_rank_deficiency() {
        let rows: Vec<GridRow> = (0..100)
            .map(|k| GridRow {
                beta: 0.2,
                pi: 0.03,
                i0: 1e-4,
                rho: 0.7,
                pt: 100.0 + k as f64,
            })
            .collect();
        assert!(matches!(ols(&rows), Err(Error::RankDeficient { .. })));
    }
}
