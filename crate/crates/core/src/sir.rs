//! Deterministic SIR dynamics.
//!
//! ```text
//! S' = -β S I,   I' = β S I - γ I,   R' = γ I
//! ```
//!
//! The state-space model only ever needs the flow map over one day,
//! `f(θ; β, γ)`, which is integrated with fixed-step classical RK4 and then
//! projected back onto the simplex. On top of that sit the peak functionals:
//! the closed-form peak intensity `g(S0, I0, ρ)`, its inverse in `ρ`, and a
//! simulated peak timing.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::real::Real;

/// Default number of RK4 sub-intervals per day.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// A point `(S, I, R)` on the 2-simplex.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Compartments<T> {
    pub s: T,
    pub i: T,
    pub r: T,
}

impl<T: Real> Compartments<T> {
    /// Validating constructor: components must be non-negative and sum to one.
    pub fn new(s: T, i: T, r: T) -> Result<Self> {
        let theta = Self { s, i, r };
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        if !theta.is_finite() || s < T::zero() || i < T::zero() || r < T::zero() {
            return Err(invalid(format!(
                "compartments ({s}, {i}, {r}) not on the simplex"
            )));
        }
        if (theta.sum() - T::one()).abs() > tol {
            return Err(invalid(format!(
                "compartments ({s}, {i}, {r}) sum to {} instead of 1",
                theta.sum()
            )));
        }
        Ok(theta)
    }

    /// Initial state with `S(0)` and `I(0)` given; `R(0)` takes up the remainder.
    pub fn initial(s0: T, i0: T) -> Result<Self> {
        let r0 = T::one() - s0 - i0;
        Self::new(s0, i0, r0.max(T::zero()))
    }

    /// Projects non-negative weights onto the simplex by dividing by their sum.
    pub fn normalized(s: T, i: T, r: T) -> Option<Self> {
        let total = s + i + r;
        if !total.is_finite()
            || total <= T::zero()
            || s < T::zero()
            || i < T::zero()
            || r < T::zero()
        {
            return None;
        }
        Some(Self {
            s: s / total,
            i: i / total,
            r: r / total,
        })
    }

    #[inline]
    pub fn sum(&self) -> T {
        self.s + self.i + self.r
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.s, self.i, self.r]
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self {
            s: a[0],
            i: a[1],
            r: a[2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s.is_finite() && self.i.is_finite() && self.r.is_finite()
    }

    /// All three components strictly positive.
    pub fn is_interior(&self) -> bool {
        self.s > T::zero() && self.i > T::zero() && self.r > T::zero()
    }

    #[inline]
    fn axpy(self, h: T, d: Self) -> Self {
        Self {
            s: self.s + h * d.s,
            i: self.i + h * d.i,
            r: self.r + h * d.r,
        }
    }
}

/// Infection rate `β` and removal rate `γ`, both per day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirRates<T> {
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> SirRates<T> {
    pub fn new(beta: T, gamma: T) -> Result<Self> {
        if !(beta > T::zero() && gamma > T::zero() && beta.is_finite() && gamma.is_finite()) {
            return Err(invalid(format!(
                "rates beta={beta}, gamma={gamma} must be positive"
            )));
        }
        Ok(Self { beta, gamma })
    }

    /// `ρ = γ / β`.
    #[inline]
    pub fn rho(&self) -> T {
        self.gamma / self.beta
    }

    /// Basic reproduction number `β / γ`.
    #[inline]
    pub fn r0(&self) -> T {
        self.beta / self.gamma
    }

    /// Same removal rate, infection rate multiplied by `factor`.
    pub fn scale_beta(self, factor: T) -> Self {
        Self {
            beta: self.beta * factor,
            gamma: self.gamma,
        }
    }
}

#[inline]
fn derivative<T: Real>(x: Compartments<T>, rates: SirRates<T>) -> Compartments<T> {
    let infection = rates.beta * x.s * x.i;
    let removal = rates.gamma * x.i;
    Compartments {
        s: -infection,
        i: infection - removal,
        r: removal,
    }
}

#[inline]
fn rk4_substep<T: Real>(x: Compartments<T>, rates: SirRates<T>, h: T) -> Compartments<T> {
    let half = h / T::lit(2.0);
    let k1 = derivative(x, rates);
    let k2 = derivative(x.axpy(half, k1), rates);
    let k3 = derivative(x.axpy(half, k2), rates);
    let k4 = derivative(x.axpy(h, k3), rates);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    Compartments {
        s: x.s + sixth * (k1.s + two * k2.s + two * k3.s + k4.s),
        i: x.i + sixth * (k1.i + two * k2.i + two * k3.i + k4.i),
        r: x.r + sixth * (k1.r + two * k2.r + two * k3.r + k4.r),
    }
}

/// Integrates one day without the final simplex projection.
pub fn rk4_unit_step_raw<T: Real>(
    theta: Compartments<T>,
    rates: SirRates<T>,
    substeps: usize,
) -> Compartments<T> {
    let h = T::one() / T::from_usize(substeps).unwrap_or_else(T::one);
    let mut x = theta;
    for _ in 0..substeps {
        x = rk4_substep(x, rates, h);
    }
    x
}

/// The one-day flow map `f(θ; β, γ)`: `substeps` RK4 steps of width `1/substeps`,
/// followed by division by the component sum.
///
/// A non-finite or negative intermediate state is reported as
/// [`Error::IntegrationFailure`].
pub fn rk4_unit_step<T: Real>(
    theta: Compartments<T>,
    rates: SirRates<T>,
    substeps: usize,
) -> Result<Compartments<T>> {
    if substeps == 0 {
        return Err(invalid("substeps must be at least 1"));
    }
    let x = rk4_unit_step_raw(theta, rates, substeps);
    // Components can dip below zero by rounding when I is ~1e-300; clamp those.
    let clamp = |v: T| {
        if v < T::zero() && v > -T::epsilon() {
            T::zero()
        } else {
            v
        }
    };
    Compartments::normalized(clamp(x.s), clamp(x.i), clamp(x.r)).ok_or(Error::IntegrationFailure)
}

/// `θ(1..=days)` by repeated unit steps from `theta0`.
pub fn simulate_trajectory<T: Real>(
    theta0: Compartments<T>,
    rates: SirRates<T>,
    days: usize,
    substeps: usize,
) -> Result<Vec<Compartments<T>>> {
    let mut out = Vec::with_capacity(days);
    let mut x = theta0;
    for _ in 0..days {
        x = rk4_unit_step(x, rates, substeps)?;
        out.push(x);
    }
    Ok(out)
}

/// Closed-form peak intensity `g(S0, I0, ρ) = I0 + S0 − ρ(log S0 + 1 − log ρ)`.
pub fn peak_intensity<T: Real>(s0: T, i0: T, rho: T) -> Result<T> {
    if !(s0 > T::zero() && s0 < T::one() && i0 > T::zero() && i0 < T::one()) {
        return Err(invalid(format!(
            "peak_intensity: s0={s0}, i0={i0} must lie in (0, 1)"
        )));
    }
    if !(rho > T::zero()) {
        return Err(invalid(format!(
            "peak_intensity: rho={rho} must be positive"
        )));
    }
    if rho > s0 {
        return Err(Error::NonEpidemic {
            rho: rho.as_f64(),
            s0: s0.as_f64(),
        });
    }
    Ok(g_unchecked(s0, i0, rho))
}

#[inline]
fn g_unchecked<T: Real>(s0: T, i0: T, rho: T) -> T {
    i0 + s0 - rho * (s0.ln() + T::one() - rho.ln())
}

/// Lower end of the bisection bracket for [`invert_rho`].
const RHO_FLOOR: f64 = 1e-12;

/// The unique `ρ ∈ (0, S0]` with `g(S0, I0, ρ) = pi`.
///
/// `g` is strictly decreasing in `ρ` on that interval (`∂g/∂ρ = log(ρ/S0)`),
/// so plain bisection on `[1e-12, S0]` converges; the absolute tolerance on `ρ`
/// is `1e-12` (or a few ulps of `S0` for narrower scalar types).
pub fn invert_rho<T: Real>(pi: T, s0: T, i0: T) -> Result<T> {
    if !(s0 > T::zero() && s0 < T::one() && i0 > T::zero() && i0 < T::one()) {
        return Err(invalid(format!(
            "invert_rho: s0={s0}, i0={i0} must lie in (0, 1)"
        )));
    }
    let upper = i0 + s0;
    if !(pi > i0 && pi < upper) {
        return Err(Error::PeakOutOfRange {
            pi: pi.as_f64(),
            lower: i0.as_f64(),
            upper: upper.as_f64(),
        });
    }
    let tol = T::lit(RHO_FLOOR).max(T::epsilon() * s0 * T::lit(4.0));
    let mut lo = T::lit(RHO_FLOOR);
    let mut hi = s0;
    // g(lo) > pi > g(hi) = i0 unless pi is within rounding of i0 + s0.
    if g_unchecked(s0, i0, lo) <= pi {
        return Ok(lo);
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if g_unchecked(s0, i0, mid) > pi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + (hi - lo) / T::lit(2.0))
}

/// Outcome of a simulated peak search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeakTiming<T> {
    /// Maximum of `I` strictly inside `(0, horizon)`, in days since `θ(0)`.
    Interior { time: T, intensity: T },
    /// `I` still non-decreasing at the horizon.
    Censored,
    /// Sub-threshold regime (`ρ ≥ S0`): `I` decays from the start, peak at `t = 0`.
    Degenerate,
}

impl<T: Real> PeakTiming<T> {
    /// Peak time, with `0` for the degenerate case and `None` when censored.
    pub fn time(&self) -> Option<T> {
        match *self {
            PeakTiming::Interior { time, .. } => Some(time),
            PeakTiming::Degenerate => Some(T::zero()),
            PeakTiming::Censored => None,
        }
    }
}

/// Day (at `1/substeps` resolution) where the simulated `I` trajectory peaks
/// within `horizon` days.
///
/// The search stops at the first sub-step after the maximum, since `I` is
/// unimodal in the epidemic regime.
pub fn peak_timing<T: Real>(
    theta0: Compartments<T>,
    rates: SirRates<T>,
    horizon: usize,
    substeps: usize,
) -> Result<PeakTiming<T>> {
    if substeps == 0 || horizon == 0 {
        return Err(invalid(
            "peak_timing: horizon and substeps must be at least 1",
        ));
    }
    if rates.rho() >= theta0.s {
        return Ok(PeakTiming::Degenerate);
    }
    let h = T::one() / T::from_usize(substeps).unwrap();
    let mut x = theta0;
    let mut best = theta0.i;
    let mut best_step = 0usize;
    for day in 0..horizon {
        for k in 0..substeps {
            x = rk4_substep(x, rates, h);
            if !x.is_finite() {
                return Err(Error::IntegrationFailure);
            }
            let step = day * substeps + k + 1;
            if x.i > best {
                best = x.i;
                best_step = step;
            } else if x.i < best {
                return Ok(if best_step == 0 {
                    PeakTiming::Degenerate
                } else {
                    PeakTiming::Interior {
                        time: T::from_usize(best_step).unwrap() * h,
                        intensity: best,
                    }
                });
            }
        }
        x = Compartments::normalized(x.s, x.i, x.r).ok_or(Error::IntegrationFailure)?;
    }
    Ok(PeakTiming::Censored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta(s: f64, i: f64, r: f64) -> Compartments<f64> {
        Compartments { s, i, r }
    }

    /// Independent oracle: forward Euler with a very fine step.
    fn euler(x0: Compartments<f64>, beta: f64, gamma: f64, steps: usize) -> [f64; 3] {
        let h = 1.0 / steps as f64;
        let (mut s, mut i, mut r) = (x0.s, x0.i, x0.r);
        for _ in 0..steps {
            let inf = beta * s * i;
            let rem = gamma * i;
            s -= h * inf;
            i += h * (inf - rem);
            r += h * rem;
        }
        [s, i, r]
    }

    #[test]
    fn closed_form_decay_without_infection() {
        let x0 = theta(0.95, 0.05, 0.0);
        let rates = SirRates {
            beta: 0.0,
            gamma: 0.2,
        };
        let x1 = rk4_unit_step(x0, rates, 10).unwrap();
        assert!((x1.i - 0.05 * (-0.2f64).exp()).abs() < 1e-9);
        assert_eq!(x1.s, 0.95);
    }

    #[test]
    fn disease_free_fixed_point() {
        let x0 = theta(1.0, 0.0, 0.0);
        let x1 = rk4_unit_step(x0, SirRates::new(0.7, 0.1).unwrap(), 10).unwrap();
        assert_eq!(x1, x0);
    }

    #[test]
    fn matches_fine_euler_oracle() {
        let x0 = theta(0.95, 8e-5, 0.04992);
        let rates = SirRates::new(0.23, 0.16).unwrap();
        let rk = rk4_unit_step(x0, rates, 10).unwrap();
        let oracle = euler(x0, 0.23, 0.16, 10_000);
        for (a, b) in rk.to_array().iter().zip(oracle) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn mass_drift_before_projection_is_tiny() {
        let x0 = theta(0.6, 0.3, 0.1);
        let raw = rk4_unit_step_raw(x0, SirRates::new(0.9, 0.3).unwrap(), 10);
        assert!((raw.sum() - 1.0).abs() < 1e-9);
        let x1 = rk4_unit_step(x0, SirRates::new(0.9, 0.3).unwrap(), 10).unwrap();
        assert!((x1.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_substeps_rejected() {
        assert!(rk4_unit_step(theta(0.9, 0.1, 0.0), SirRates::new(0.2, 0.1).unwrap(), 0).is_err());
    }

    #[test]
    fn empty_trajectory() {
        let x0 = theta(0.95, 8e-5, 0.04992);
        let path = simulate_trajectory(x0, SirRates::new(0.23, 0.16).unwrap(), 0, 10).unwrap();
        assert!(path.is_empty());
    }

    #[test]
    fn epidemic_trajectory_is_unimodal() {
        let x0 = theta(0.95, 8e-5, 0.04992);
        let path = simulate_trajectory(x0, SirRates::new(0.23, 0.16).unwrap(), 600, 10).unwrap();
        let (argmax, _) = path
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.i.partial_cmp(&b.1.i).unwrap())
            .unwrap();
        assert!(argmax > 0 && argmax < path.len() - 1);
        assert!(path[..=argmax].windows(2).all(|w| w[1].i >= w[0].i));
        assert!(path[argmax..].windows(2).all(|w| w[1].i <= w[0].i));
    }

    #[test]
    fn sub_threshold_decays() {
        let x0 = theta(0.95, 8e-5, 0.04992);
        let rates = SirRates::new(0.2, 0.19).unwrap();
        let path = simulate_trajectory(x0, rates, 300, 10).unwrap();
        assert!(x0.i >= path[0].i);
        assert!(path.windows(2).all(|w| w[1].i <= w[0].i));
    }

    #[test]
    fn peak_intensity_edge_values() {
        assert_relative_eq!(
            peak_intensity(0.95, 8e-5, 0.95).unwrap(),
            8e-5,
            max_relative = 1e-9
        );
        let near_zero: f64 = peak_intensity(0.95, 8e-5, 1e-14).unwrap();
        assert!((near_zero - (0.95 + 8e-5)).abs() < 1e-11);
        assert!(matches!(
            peak_intensity(0.95, 8e-5, 0.96),
            Err(Error::NonEpidemic { .. })
        ));
    }

    #[test]
    fn peak_intensity_matches_simulated_maximum() {
        let (s0, i0, rho) = (0.95, 8e-5, 0.6);
        let beta = 0.3;
        let rates = SirRates::new(beta, beta * rho).unwrap();
        let x0 = Compartments::initial(s0, i0).unwrap();
        let path = simulate_trajectory(x0, rates, 1500, 10).unwrap();
        let max_i = path.iter().map(|x| x.i).fold(0.0, f64::max);
        let g = peak_intensity(s0, i0, rho).unwrap();
        assert!((g - max_i).abs() < 1e-4, "g={g} sim={max_i}");
    }

    #[test]
    fn invert_rho_against_grid_scan() {
        let (s0, i0, pi) = (0.95, 8e-5, 0.03);
        // Dense scan for the sign change of g - pi.
        let n = 2_000_000;
        let mut prev = f64::NAN;
        let mut bracket = None;
        for k in 1..=n {
            let rho = s0 * k as f64 / n as f64;
            let v = g_unchecked(s0, i0, rho) - pi;
            if prev > 0.0 && v <= 0.0 {
                bracket = Some(rho);
                break;
            }
            prev = v;
        }
        let scan = bracket.unwrap();
        let rho = invert_rho(pi, s0, i0).unwrap();
        assert!((rho - scan).abs() <= s0 / n as f64 + 1e-12);
        assert!((peak_intensity(s0, i0, rho).unwrap() - pi).abs() < 1e-10);
    }

    #[test]
    fn invert_rho_near_lower_boundary_returns_s0() {
        let rho: f64 = invert_rho(8e-5 + 1e-12, 0.95, 8e-5).unwrap();
        assert!((rho - 0.95).abs() < 1e-4);
    }

    #[test]
    fn invert_rho_out_of_range() {
        assert!(matches!(
            invert_rho(5e-5, 0.95, 8e-5),
            Err(Error::PeakOutOfRange { .. })
        ));
        assert!(matches!(
            invert_rho(0.96, 0.95, 8e-5),
            Err(Error::PeakOutOfRange { .. })
        ));
    }

    #[test]
    fn table_point_estimates_consistent() {
        // Peak intensity 3.67% with R0 around 1.43 (credible range 1.22-1.64).
        let rho: f64 = invert_rho(0.0367, 0.95, 8e-5).unwrap();
        let r0 = 1.0 / rho;
        assert!((1.22..=1.64).contains(&r0), "R0 = {r0}");
        assert!((rho - 0.16 / 0.23).abs() < 0.1);
    }

    #[test]
    fn peak_timing_refines_consistently() {
        let x0 = theta(0.95, 8e-5, 0.04992);
        let rates = SirRates::new(0.23, 0.16).unwrap();
        let coarse = peak_timing(x0, rates, 500, 10).unwrap().time().unwrap();
        let fine = peak_timing(x0, rates, 500, 100).unwrap().time().unwrap();
        assert!(coarse > 1.0 && coarse < 499.0);
        assert!((coarse - fine).abs() < 0.5);
    }

    #[test]
    fn peak_timing_flags() {
        let x0 = theta(0.95, 8e-5, 0.04992);
        let sub = SirRates::new(0.2, 0.19).unwrap();
        assert_eq!(
            peak_timing(x0, sub, 100, 10).unwrap(),
            PeakTiming::Degenerate
        );
        let slow = SirRates::new(0.23, 0.16).unwrap();
        assert_eq!(peak_timing(x0, slow, 20, 10).unwrap(), PeakTiming::Censored);
    }

    #[test]
    fn single_precision_step_stays_on_simplex() {
        let x0 = Compartments::<f32> {
            s: 0.95,
            i: 1e-3,
            r: 0.049,
        };
        let x1 = rk4_unit_step(x0, SirRates::new(0.3f32, 0.1).unwrap(), 10).unwrap();
        assert!((x1.sum() - 1.0).abs() < 1e-6);
        assert!(x1.i > x0.i);
    }
}
