//! Slotted ALOHA in closed form.
//!
//! Transmitters form a Poisson field of density `lambda`. The interference
//! `W` at a fixed point is positive stable with index `gamma = 2 / alpha`:
//! `E exp(-s W) = exp(-lambda C s^gamma)`, `C = pi Gamma(1 - gamma)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::model::validate_alpha;

/// Envelope growth streak that counts as divergence.
pub const DIVERGENCE_STREAK: usize = 5;

/// Defaults used by [`coverage_probability`].
pub const SERIES_TOL: f64 = 1e-14;
pub const SERIES_MAX_TERMS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlohaParams {
    lambda: f64,
    alpha: f64,
    gamma: f64,
    c: f64,
}

impl AlohaParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density must be finite and non-negative, got {lambda}"
            )));
        }
        validate_alpha(alpha)?;
        let g = 2.0 / alpha;
        Ok(AlohaParams {
            lambda,
            alpha,
            gamma: g,
            c: PI * gamma(1.0 - g),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `pi Gamma(1 - gamma)`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Scale of `W`: `W / scale` has transform `exp(-s^gamma)`.
    pub fn scale(&self) -> f64 {
        (self.c * self.lambda).powf(1.0 / self.gamma)
    }
}

/// `E exp(-s W) = exp(-lambda C s^gamma)`.
pub fn laplace_w(s: f64, params: &AlohaParams) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "transform variable must be >= 0, got {s}"
        )));
    }
    if s == 0.0 || params.lambda == 0.0 {
        return Ok(1.0);
    }
    Ok((-params.lambda * params.c * s.powf(params.gamma)).exp())
}

/// `P(W < x)` by the series in `x^-gamma`, summed until the term envelope
/// drops below `tol` or `n_max` terms. The `n = 0` term is 1.
///
/// The envelope `(C lambda)^n Gamma(n gamma) x^(-n gamma) / (n! pi)` is used
/// for both stopping and divergence detection, since `sin(pi n gamma)` can
/// vanish for individual `n`.
pub fn w_cdf(x: f64, params: &AlohaParams, tol: f64, n_max: usize) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidParameter(format!("x must be > 0, got {x}")));
    }
    if x == f64::INFINITY || params.lambda == 0.0 {
        return Ok(1.0);
    }
    if x == 0.0 {
        return Err(Error::SeriesDiverging { x, terms: 0 });
    }
    let g = params.gamma;
    let log_base = (params.c * params.lambda).ln() - g * x.ln();
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    let mut streak = 0;
    for n in 1..=n_max {
        let nf = n as f64;
        let log_env = nf * log_base + ln_gamma(nf * g) - ln_gamma(nf + 1.0) - PI.ln();
        let env = log_env.exp();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (PI * nf * g).sin() * env;
        if env < tol {
            return Ok(sum.clamp(0.0, 1.0));
        }
        if env > prev {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                return Err(Error::SeriesDiverging { x, terms: n });
            }
        } else {
            streak = 0;
        }
        prev = env;
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// `P(W < x)` from the integral representation of a positive stable law,
/// `(1/pi) int_0^pi exp(-(x/scale)^(-gamma/(1-gamma)) A(phi)) dphi`.
/// Valid for every `x >= 0`; used where the series cannot be summed.
pub fn w_cdf_integral(x: f64, params: &AlohaParams) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidParameter(format!("x must be >= 0, got {x}")));
    }
    if x == f64::INFINITY || params.lambda == 0.0 {
        return Ok(1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let g = params.gamma;
    let y = x / params.scale();
    let k = y.powf(-g / (1.0 - g));
    let a = |phi: f64| {
        let num = (g * phi).sin().powf(g) * ((1.0 - g) * phi).sin().powf(1.0 - g);
        (num / phi.sin()).powf(1.0 / (1.0 - g))
    };
    let f = |phi: f64| {
        if phi <= 0.0 {
            // A(0+) = gamma^(gamma/(1-gamma)) (1 - gamma)
            (-k * g.powf(g / (1.0 - g)) * (1.0 - g)).exp()
        } else if phi >= PI {
            0.0
        } else {
            (-k * a(phi)).exp()
        }
    };
    let v = adaptive_simpson(f, 0.0, PI, 1e-12, 40) / PI;
    Ok(v.clamp(0.0, 1.0))
}

/// Series where it converges, integral representation otherwise.
pub fn w_cdf_auto(x: f64, params: &AlohaParams) -> Result<f64> {
    match w_cdf(x, params, SERIES_TOL, SERIES_MAX_TERMS) {
        Err(Error::SeriesDiverging { .. }) => w_cdf_integral(x, params),
        other => other,
    }
}

/// Probability that a receiver at distance `r` decodes its transmitter:
/// `P(W < r^-alpha / beta)`.
pub fn coverage_probability(r: f64, beta: f64, alpha: f64, lambda: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be >= 0, got {r}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let params = AlohaParams::new(lambda, alpha)?;
    if r == 0.0 {
        return Ok(1.0);
    }
    let x = r.powf(-alpha) / beta;
    w_cdf_auto(x, &params)
}

/// `lambda * sigma = sin(pi gamma) / (pi gamma) * beta^-gamma`.
pub fn sigma_aloha(beta: f64, alpha: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    validate_alpha(alpha)?;
    let g = 2.0 / alpha;
    Ok((PI * g).sin() / (PI * g) * beta.powf(-g))
}

/// Local capacity of slotted ALOHA; equal to [`sigma_aloha`].
pub fn capacity_aloha(beta: f64, alpha: f64) -> Result<f64> {
    sigma_aloha(beta, alpha)
}

/// `2 pi int_0^R p(1, r) r dr` with `R` pushed out until the coverage
/// probability falls below `1e-8`.
pub fn sigma_by_quadrature(beta: f64, alpha: f64) -> Result<f64> {
    let p = |r: f64| coverage_probability(r, beta, alpha, 1.0);
    let mut r_max = 1.0;
    while p(r_max)? >= 1e-8 {
        r_max *= 2.0;
        if r_max > 1e6 {
            return Err(Error::NoConvergence {
                iterations: 20,
                residual: p(r_max)?,
            });
        }
    }
    let mut failure = None;
    let f = |r: f64| match p(r) {
        Ok(v) => 2.0 * PI * r * v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let v = adaptive_simpson(f, 0.0, r_max, 1e-10, 40);
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // split once up front so a symmetric integrand cannot fool the first test
    let n = 8;
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    for k in 0..n {
        let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += step(&mut f, lo, hi, fa, fm, fb, whole, tol / n as f64, max_depth);
    }
    total
}

/// One draw of `W` at the origin from a Poisson field in the plane: the
/// `terms` nearest transmitters exactly (`pi lambda r_k^2` are the arrival
/// times of a unit-rate process), the rest by their mean.
pub fn sample_w<R: Rng + ?Sized>(params: &AlohaParams, terms: usize, rng: &mut R) -> f64 {
    let lambda = params.lambda;
    if lambda == 0.0 {
        return 0.0;
    }
    let a = params.alpha;
    let mut arrival = 0.0;
    let mut w = 0.0;
    for _ in 0..terms {
        let e: f64 = rng.sample(Exp1);
        arrival += e;
        let r2 = arrival / (PI * lambda);
        w += r2.powf(-a / 2.0);
    }
    let r2 = arrival / (PI * lambda);
    w + 2.0 * PI * lambda * r2.powf(1.0 - a / 2.0) / (a - 2.0)
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and
/// `cdf`, over the sample points where `cdf` returns a value. Returns the
/// distance and the number of points compared.
pub fn ks_distance(samples: &[f64], mut cdf: impl FnMut(f64) -> Option<f64>) -> (f64, usize) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for (k, &x) in sorted.iter().enumerate() {
        if let Some(f) = cdf(x) {
            let below = k as f64 / n;
            let upto = (k + 1) as f64 / n;
            worst = worst.max((f - below).abs()).max((upto - f).abs());
            used += 1;
        }
    }
    (worst, used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::sample_seed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::erf::erfc;

    /// For alpha = 4, `W` is Levy distributed: `P(W < x) = erfc(C lambda / (2 sqrt x))`.
    fn levy_cdf(x: f64, lambda: f64) -> f64 {
        let c = PI * gamma(0.5);
        erfc(c * lambda / (2.0 * x.sqrt()))
    }

    #[test]
    fn params_constants() {
        let p = AlohaParams::new(1.0, 4.0).unwrap();
        assert_eq!(p.gamma(), 0.5);
        assert!((p.c() - PI.powf(1.5)).abs() < 1e-12);
        assert!(AlohaParams::new(1.0, 2.0).is_err());
        assert!(AlohaParams::new(-1.0, 4.0).is_err());
    }

    #[test]
    fn laplace_examples() {
        let p = AlohaParams::new(1.0, 4.0).unwrap();
        assert_eq!(laplace_w(0.0, &p).unwrap(), 1.0);
        let v = laplace_w(1.0, &p).unwrap();
        assert!((v - (-PI.powf(1.5)).exp()).abs() < 1e-15);
        assert!((v - 3.817e-3).abs() < 1e-6, "{v}");
        let empty = AlohaParams::new(0.0, 4.0).unwrap();
        assert_eq!(laplace_w(7.0, &empty).unwrap(), 1.0);
        assert!(laplace_w(-1.0, &p).is_err());
    }

    #[test]
    fn series_matches_levy_law() {
        for lambda in [0.5, 1.0, 3.0] {
            let p = AlohaParams::new(lambda, 4.0).unwrap();
            for x in [
                5.0 * lambda * lambda,
                34.0 * lambda * lambda,
                1e3 * lambda * lambda,
                1e6,
            ] {
                let v = w_cdf(x, &p, 1e-15, 500).unwrap();
                assert!((v - levy_cdf(x, lambda)).abs() < 1e-10, "lambda={lambda} x={x}");
            }
        }
    }

    #[test]
    fn series_limits_and_divergence() {
        let p = AlohaParams::new(1.0, 4.0).unwrap();
        assert_eq!(w_cdf(f64::INFINITY, &p, 1e-12, 100).unwrap(), 1.0);
        assert!((w_cdf(1e30, &p, 1e-12, 100).unwrap() - 1.0).abs() < 1e-12);
        let err = w_cdf(1e-3, &p, 1e-12, 500).unwrap_err();
        assert!(matches!(err, Error::SeriesDiverging { .. }));
        assert!(w_cdf(-1.0, &p, 1e-12, 10).is_err());
    }

    #[test]
    fn integral_representation_matches_levy_law() {
        for lambda in [0.2, 1.0] {
            let p = AlohaParams::new(lambda, 4.0).unwrap();
            for x in [0.01, 0.5, 3.0, 34.0, 1e4] {
                let v = w_cdf_integral(x, &p).unwrap();
                assert!((v - levy_cdf(x, lambda)).abs() < 1e-9, "x={x}: {v}");
            }
        }
    }

    #[test]
    fn integral_and_series_agree_for_other_alphas() {
        for alpha in [2.5, 3.0, 5.0, 8.0, 20.0] {
            let p = AlohaParams::new(1.0, alpha).unwrap();
            let mut compared = 0;
            for k in -20..=20 {
                let x = 10f64.powf(k as f64 / 4.0);
                if let Ok(s) = w_cdf(x, &p, 1e-15, 500) {
                    let i = w_cdf_integral(x, &p).unwrap();
                    assert!((s - i).abs() < 1e-7, "alpha={alpha} x={x}: {s} vs {i}");
                    compared += 1;
                }
            }
            assert!(compared > 5, "alpha={alpha}");
        }
    }

    #[test]
    fn cdf_is_nondecreasing() {
        for alpha in [3.0, 4.0, 6.0] {
            let p = AlohaParams::new(1.0, alpha).unwrap();
            let mut last = 0.0;
            for k in -40..=40 {
                let v = w_cdf_auto(10f64.powf(k as f64 / 8.0), &p).unwrap();
                assert!(v >= last - 1e-12, "alpha={alpha} k={k}");
                last = v;
            }
        }
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_probability(0.0, 10.0, 4.0, 1.0).unwrap(), 1.0);
        assert!(coverage_probability(1e-6, 10.0, 4.0, 1.0).unwrap() > 1.0 - 1e-9);
        assert!(coverage_probability(1e3, 10.0, 4.0, 1.0).unwrap() < 1e-12);
        for (beta, alpha) in [(10.0, 4.0), (2.0, 3.0), (5.0, 6.0)] {
            let a = coverage_probability(0.5, beta, alpha, 4.0).unwrap();
            let b = coverage_probability(1.0, beta, alpha, 1.0).unwrap();
            assert!((a - b).abs() < 1e-6, "{beta} {alpha}: {a} {b}");
        }
    }

    #[test]
    fn sigma_examples() {
        let v = sigma_aloha(10.0, 4.0).unwrap();
        assert!((v - 2.0 / PI / 10f64.sqrt()).abs() < 1e-15);
        assert!((v - 0.20132).abs() < 1e-5);
        assert!((sigma_aloha(1.0, 4.0).unwrap() - 2.0 / PI).abs() < 1e-15);
        assert!((sigma_aloha(1.0, 1e6).unwrap() - 1.0).abs() < 1e-6);
        assert!(sigma_aloha(1.0, 2.0 + 1e-9).unwrap() < 1e-8);
        assert_eq!(capacity_aloha(7.0, 3.5).unwrap(), sigma_aloha(7.0, 3.5).unwrap());
        let mut last = f64::INFINITY;
        for beta in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let v = sigma_aloha(beta, 4.0).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(sigma_aloha(0.0, 4.0).is_err());
        assert!(sigma_aloha(1.0, 1.5).is_err());
    }

    #[test]
    fn quadrature_reproduces_closed_form() {
        for (beta, alpha) in [(10.0, 4.0), (1.0, 4.0), (2.0, 3.0), (10.0, 20.0)] {
            let q = sigma_by_quadrature(beta, alpha).unwrap();
            let exact = sigma_aloha(beta, alpha).unwrap();
            assert!((q - exact).abs() / exact < 1e-3, "{beta} {alpha}: {q} vs {exact}");
        }
    }

    #[test]
    fn simpson_on_polynomials_and_trig() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12, 30);
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(f64::sin, 0.0, PI, 1e-12, 30);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn sampled_w_matches_laplace_transform() {
        let p = AlohaParams::new(1.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(11, 0));
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_w(&p, 1000, &mut rng)).collect();
        for s in [0.05, 0.3, 1.0] {
            let mc = draws.iter().map(|w| (-s * w).exp()).sum::<f64>() / n as f64;
            let exact = laplace_w(s, &p).unwrap();
            assert!((mc - exact).abs() / exact < 0.05, "s={s}: {mc} vs {exact}");
        }
        let (ks, used) = ks_distance(&draws, |x| Some(levy_cdf(x, 1.0)));
        assert_eq!(used, n);
        assert!(ks < 0.01, "{ks}");
    }
}
