//! Thin wrappers around common distribution functions.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use statrs::function::gamma as sgamma;

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Upper tail of the chi-square distribution with (possibly non-integer)
/// degrees of freedom.
#[inline]
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    sgamma::gamma_ur(df / 2.0, x / 2.0)
}

#[inline]
pub fn chi2_pdf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").pdf(x)
}

/// Upper `alpha` quantile of the chi-square distribution. The library
/// inversion is polished by Newton steps on the survival function.
pub fn chi2_upper_quantile(alpha: f64, df: f64) -> f64 {
    let dist = ChiSquared::new(df).expect("positive df");
    let mut q = dist.inverse_cdf(1.0 - alpha).max(f64::MIN_POSITIVE);
    for _ in 0..40 {
        let pdf = dist.pdf(q);
        if pdf <= 0.0 {
            break;
        }
        let step = (chi2_sf(q, df) - alpha) / pdf;
        q += step;
        if step.abs() <= 1e-15 * q.abs() {
            break;
        }
    }
    q
}

/// Regularized lower incomplete gamma P(nu, x).
#[inline]
pub fn gamma_lr(nu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    sgamma::gamma_lr(nu, x)
}

/// Regularized upper incomplete gamma Q(nu, x).
#[inline]
pub fn gamma_ur(nu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    sgamma::gamma_ur(nu, x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    sgamma::ln_gamma(x)
}

/// Upper tail of a noncentral chi-square via the Poisson mixture
/// `sum_j Pois(lambda/2)_j * P(chi2(df + 2j) > q)`.
pub fn noncentral_chi2_sf(q: f64, df: f64, lambda: f64) -> f64 {
    assert!(df > 0.0 && lambda >= 0.0);
    if q <= 0.0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return chi2_sf(q, df);
    }
    let half = lambda / 2.0;
    // start at the modal Poisson weight and expand both ways
    let j0 = half.floor() as i64;
    let ln_w0 = -half + (j0 as f64) * half.ln() - ln_gamma(j0 as f64 + 1.0);
    let mut total = 0.0;
    // downward
    let mut w = ln_w0.exp();
    let mut j = j0;
    while j >= 0 {
        let term = w * chi2_sf(q, df + 2.0 * j as f64);
        total += term;
        if w < 1e-18 {
            break;
        }
        w *= j as f64 / half; // weight at j-1
        j -= 1;
    }
    // upward
    let mut w = ln_w0.exp();
    let mut j = j0;
    loop {
        w *= half / (j as f64 + 1.0);
        j += 1;
        let term = w * chi2_sf(q, df + 2.0 * j as f64);
        total += term;
        if w < 1e-18 && j > j0 + 5 {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}
