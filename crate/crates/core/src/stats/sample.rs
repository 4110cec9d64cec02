//! Random variate generators.

use rand_distr::{Distribution, StandardNormal};

use super::normal::{std_normal_cdf, std_normal_quantile};
use super::{RngStream, TruncNormalSpec};

#[inline]
pub fn sample_std_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Marsaglia-Tsang squeeze sampler for `Gamma(shape, 1)`, `shape ≥ 1`.
fn marsaglia_tsang(rng: &mut RngStream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = sample_std_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.open01();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `log G` with `G ~ Gamma(shape, 1)`.
///
/// Shapes below one use `G(a) = G(a + 1) · U^(1/a)` in log space, so tiny
/// shapes never underflow to an exact zero.
pub fn sample_ln_gamma(rng: &mut RngStream, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        marsaglia_tsang(rng, shape).ln()
    } else {
        let g = marsaglia_tsang(rng, shape + 1.0);
        g.ln() + rng.open01().ln() / shape
    }
}

/// `Gamma(shape, rate)` variate, mean `shape / rate`.
pub fn sample_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0);
    let g = if shape >= 1.0 {
        marsaglia_tsang(rng, shape)
    } else {
        sample_ln_gamma(rng, shape).exp()
    };
    g / rate
}

/// Normalized independent `Gamma(α_j, 1)` variates.
///
/// The normalization runs in log space; components are floored at the
/// smallest positive normal so the draw stays strictly inside the simplex.
pub fn sample_dirichlet(rng: &mut RngStream, alpha: &[f64; 3]) -> [f64; 3] {
    let logs = [
        sample_ln_gamma(rng, alpha[0]),
        sample_ln_gamma(rng, alpha[1]),
        sample_ln_gamma(rng, alpha[2]),
    ];
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = logs.map(|l| (l - m).exp().max(f64::MIN_POSITIVE));
    let total = w[0] + w[1] + w[2];
    w.map(|v| (v / total).max(f64::MIN_POSITIVE))
}

/// `Beta(a, b)` as `X / (X + Y)` with `X ~ Gamma(a)`, `Y ~ Gamma(b)`, strictly inside `(0, 1)`.
pub fn sample_beta(rng: &mut RngStream, a: f64, b: f64) -> f64 {
    let lx = sample_ln_gamma(rng, a);
    let ly = sample_ln_gamma(rng, b);
    // X / (X + Y) = 1 / (1 + exp(ly - lx))
    let y = 1.0 / (1.0 + (ly - lx).exp());
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Truncated normal by inversion of the CDF restricted to the support.
///
/// When the support lies in the upper tail the problem is reflected so the
/// inversion always works where `Φ` has full relative precision.
pub fn sample_trunc_normal(rng: &mut RngStream, spec: &TruncNormalSpec) -> f64 {
    let a = (spec.lower - spec.mean) / spec.sd;
    let b = (spec.upper - spec.mean) / spec.sd;
    let (lo, hi, flip) = if a > 0.0 {
        (-b, -a, true)
    } else {
        (a, b, false)
    };
    let (plo, phi) = (std_normal_cdf(lo), std_normal_cdf(hi));
    for _ in 0..1000 {
        let u = plo + rng.open01() * (phi - plo);
        let mut z = std_normal_quantile(u);
        if flip {
            z = -z;
        }
        let x = spec.mean + spec.sd * z;
        if x > spec.lower && x < spec.upper {
            return x;
        }
    }
    // Support too narrow to resolve in double precision.
    0.5 * (spec.lower + spec.upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Regularized incomplete beta `I_x(a, b)` by Simpson quadrature of the
    /// density; an oracle for KS checks.
    fn beta_cdf_table(a: f64, b: f64, n: usize) -> Vec<f64> {
        use crate::stats::log_beta_pdf;
        let h = 1.0 / n as f64;
        let mut cdf = vec![0.0; n + 1];
        for k in 0..n {
            let x0 = k as f64 * h;
            let xm = x0 + 0.5 * h;
            let x1 = x0 + h;
            let f = |x: f64| {
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    log_beta_pdf(x, a, b).exp()
                }
            };
            cdf[k + 1] = cdf[k] + h / 6.0 * (f(x0) + 4.0 * f(xm) + f(x1));
        }
        cdf
    }

    fn ks_against(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let f = cdf(x);
                (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn gamma_mean_shape_rate() {
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let (shape, rate) = (20.0, 1e-4);
        let mean = (0..n)
            .map(|_| sample_gamma(&mut rng, shape, rate))
            .sum::<f64>()
            / n as f64;
        let se = (shape.sqrt() / rate) / (n as f64).sqrt();
        assert!((mean - 2e5).abs() < 3.0 * se, "mean={mean}");
    }

    #[test]
    fn gamma_unit_shape_is_exponential() {
        let mut rng = RngStream::new(12, 0);
        let mut xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_gamma(&mut rng, 1.0, 1.0))
            .collect();
        let d = ks_against(&mut xs, |x| 1.0 - (-x).exp());
        assert!(d < 0.002, "KS={d}");
    }

    #[test]
    fn gamma_small_shape() {
        let mut rng = RngStream::new(13, 0);
        let n = 400_000;
        let shape = 0.64;
        let xs: Vec<f64> = (0..n).map(|_| sample_gamma(&mut rng, shape, 2.0)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (shape.sqrt() / 2.0) / (n as f64).sqrt();
        assert!((mean - 0.32).abs() < 3.0 * se);
        // Tiny shapes stay representable in log space.
        let l = sample_ln_gamma(&mut rng, 1e-4);
        assert!(l.is_finite());
    }

    #[test]
    fn dirichlet_concentration() {
        let mut rng = RngStream::new(14, 0);
        for _ in 0..1000 {
            let x = sample_dirichlet(&mut rng, &[1e6, 1.0, 1.0]);
            assert!(x[0] > 0.99);
        }
    }

    #[test]
    fn dirichlet_means() {
        let mut rng = RngStream::new(15, 0);
        let n = 1_000_000;
        let alpha = [2.0, 3.0, 5.0];
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let x = sample_dirichlet(&mut rng, &alpha);
            for j in 0..3 {
                sum[j] += x[j];
            }
        }
        for j in 0..3 {
            let m = alpha[j] / 10.0;
            let sd = (m * (1.0 - m) / 11.0).sqrt();
            assert!((sum[j] / n as f64 - m).abs() < 3.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn dirichlet_high_concentration_sd() {
        let mut rng = RngStream::new(16, 0);
        let kappa = 2.6e5;
        let f = [0.949, 1e-3, 0.05];
        let alpha = f.map(|v| kappa * v);
        let n = 100_000;
        let draws: Vec<[f64; 3]> = (0..n).map(|_| sample_dirichlet(&mut rng, &alpha)).collect();
        for j in 0..3 {
            let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let analytic = (f[j] * (1.0 - f[j]) / (kappa + 1.0)).sqrt();
            assert!((var.sqrt() / analytic - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn beta_uniform_ks() {
        let mut rng = RngStream::new(17, 0);
        let mut xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_beta(&mut rng, 1.0, 1.0))
            .collect();
        let d = ks_against(&mut xs, |x| x);
        assert!(d < 0.002, "KS={d}");
    }

    #[test]
    fn beta_prior_regime_mean() {
        let mut rng = RngStream::new(18, 0);
        let (a, b) = (0.64, 7998.0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_beta(&mut rng, a, b)).sum::<f64>() / n as f64;
        let m = a / (a + b);
        let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
        assert!((mean - m).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn beta_extreme_stays_interior() {
        let mut rng = RngStream::new(19, 0);
        let lambda = 1.75e5;
        for _ in 0..100_000 {
            let y = sample_beta(&mut rng, lambda * 1e-4, lambda * (1.0 - 1e-4));
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn dirichlet_first_marginal_is_beta() {
        let mut rng = RngStream::new(20, 0);
        let alpha = [2.0, 1.5, 3.5];
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| sample_dirichlet(&mut rng, &alpha)[0])
            .collect();
        let n = 20_000;
        let table = beta_cdf_table(alpha[0], alpha[1] + alpha[2], n);
        let d = ks_against(&mut xs, |x| {
            let pos = x * n as f64;
            let k = (pos.floor() as usize).min(n - 1);
            table[k] + (pos - k as f64) * (table[k + 1] - table[k])
        });
        assert!(d < 0.005, "KS={d}");
    }

    #[test]
    fn trunc_normal_support() {
        let mut rng = RngStream::new(21, 0);
        let spec = TruncNormalSpec::new(180.0, 60.0, 53.0, 413.0).unwrap();
        for _ in 0..1_000_000 {
            let x = sample_trunc_normal(&mut rng, &spec);
            assert!(x > 53.0 && x < 413.0);
        }
    }

    #[test]
    fn trunc_normal_untruncated_moments() {
        let mut rng = RngStream::new(22, 0);
        let spec = TruncNormalSpec::new(0.0, 1.0, -1e9, 1e9).unwrap();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_trunc_normal(&mut rng, &spec))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let nf = n as f64;
        assert!(mean.abs() < 3.0 / nf.sqrt());
        // SE of the sample variance of a normal: sqrt(2 / (n - 1)).
        assert!((var - 1.0).abs() < 3.0 * (2.0 / (nf - 1.0)).sqrt());
    }

    #[test]
    fn trunc_normal_peak_intensity_prior_mean() {
        let mut rng = RngStream::new(23, 0);
        let spec = TruncNormalSpec::new(0.03, 0.02, 8e-5, 1.0).unwrap();
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_trunc_normal(&mut rng, &spec))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Analytic truncated mean: μ + σ (φ(a) − φ(b)) / (Φ(b) − Φ(a)).
        let a = (spec.lower - spec.mean) / spec.sd;
        let b = (spec.upper - spec.mean) / spec.sd;
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let analytic =
            spec.mean + spec.sd * (phi(a) - phi(b)) / (std_normal_cdf(b) - std_normal_cdf(a));
        assert!((mean - analytic).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn trunc_normal_upper_tail_support() {
        let mut rng = RngStream::new(24, 0);
        let spec = TruncNormalSpec::new(0.0, 1.0, 8.0, 9.0).unwrap();
        for _ in 0..10_000 {
            let x = sample_trunc_normal(&mut rng, &spec);
            assert!(x > 8.0 && x < 9.0);
        }
    }
}
