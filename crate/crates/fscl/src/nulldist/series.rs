//! Arbitrary-precision evaluation of the ordered-gamma sum density.
//!
//! The density of the sum of the `k` largest of `K` iid `Gamma(p'/2, 1)`
//! variables is an alternating series over `r` of terms
//! `(-1)^r d_{r,K-k} l_{r,k} g_{p'K/2 + r}(x) / r!`. The terms grow to about
//! `exp((K-k) x / k)` times the sum before they decay, so double precision
//! is destroyed by cancellation for all but tiny arguments. This module
//! carries the whole computation — the `d` recursion, the `l` moment
//! integrals and the series sum — in MPFR floats with working precision
//! sized from the worst cancellation on the supported argument range.

use crate::error::{Error, Result};
use rug::ops::{CompleteRound, Pow};
use rug::Float;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Guard bits beyond the predicted cancellation.
const GUARD_BITS: u32 = 192;
/// Bits of the working precision reserved for quadrature/table error.
const TABLE_SLACK_BITS: u32 = 96;

fn float(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

/// Upper regularized incomplete gamma `Q_nu(x)` for `nu = p'/2` with integer
/// `p'`, via the closed forms
/// `Q_m(x) = e^{-x} sum_{i<m} x^i/i!` and
/// `Q_{m+1/2}(x) = erfc(sqrt(x)) + e^{-x} sum_{i<m} x^{i+1/2}/Gamma(i+3/2)`.
fn upper_gamma_reg(p_prime: u32, x: &Float, prec: u32) -> Float {
    let emx = (-x.clone()).exp();
    if p_prime % 2 == 0 {
        let m = p_prime / 2;
        let mut sum = float(prec, 1.0);
        let mut term = float(prec, 1.0);
        for i in 1..m {
            term *= x;
            term /= i;
            sum += &term;
        }
        sum * emx
    } else {
        let m = (p_prime - 1) / 2;
        let sqrt_x = x.clone().sqrt();
        let mut q = sqrt_x.erfc();
        if m > 0 {
            // x^{1/2} / Gamma(3/2), then ratio x / (i + 1/2)
            let mut term = x.clone().sqrt() / float(prec, 1.5).gamma();
            let mut sum = term.clone();
            for i in 1..m {
                term *= x;
                term /= float(prec, i as f64 + 0.5);
                sum += &term;
            }
            q += sum * emx;
        }
        q
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], cached per (order, prec).
fn gauss_legendre(order: usize, prec: u32) -> Arc<(Vec<Float>, Vec<Float>)> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<(Vec<Float>, Vec<Float>)>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry((order, prec))
        .or_insert_with(|| {
            let n = order;
            let mut nodes = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            // Newton doubles accuracy per step; a fixed budget reaches any
            // practical precision from the f64 initial guess
            let iters = 8 + (prec as usize).ilog2() as usize;
            for i in 0..n {
                let theta = std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5);
                let mut x = float(prec, theta.cos());
                let mut dp = float(prec, 1.0);
                for _ in 0..iters {
                    // Legendre recurrence for P_n(x) and P_{n-1}(x)
                    let mut p0 = float(prec, 1.0);
                    let mut p1 = x.clone();
                    for j in 2..=n {
                        let p2 = ((2 * j - 1) as f64 * (&x * &p1).complete(prec)
                            - (j - 1) as f64 * p0)
                            / j as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    // P'_n = n (x P_n - P_{n-1}) / (x^2 - 1)
                    let denom = (&x * &x).complete(prec) - 1f64;
                    dp = (n as f64) * ((&x * &p1).complete(prec) - &p0) / denom;
                    let step = p1 / &dp;
                    x -= &step;
                    if step.is_zero() {
                        break;
                    }
                }
                let w = 2f64 / ((1f64 - (&x * &x).complete(prec)) * dp.square());
                nodes.push(x);
                weights.push(w);
            }
            Arc::new((nodes, weights))
        })
        .clone()
}

/// Precomputed series tables for one `(k, K, p', r_max)` configuration.
pub(crate) struct SeriesTables {
    pub k: usize,
    pub big_k: usize,
    pub p_prime: u32,
    pub prec: u32,
    pub r_max: usize,
    /// Supported f_T argument range [0, t_max].
    pub t_max: f64,
    nu_k: f64,
    /// d_{r, K-k}
    d: Vec<Float>,
    /// l_{r, k}
    l: Vec<Float>,
    /// k * C(K,k) / Gamma(nu+1)^{K-k} / 2 (the 1/2 from the chi-square scale)
    prefactor: Float,
    /// 1 / Gamma(nu K)
    inv_gamma_nuk: Float,
}

/// Rigorous upper bound on the f_S argument needed so that the mass beyond
/// it is below `tail`: the minimum of the total-sum bound and the
/// `k * max` bound.
pub(crate) fn support_bound(k: usize, big_k: usize, p_prime: u32, tail: f64) -> f64 {
    use crate::num;
    let nu = p_prime as f64 / 2.0;
    let nuk = nu * big_k as f64;
    // P(sum > t) <= tail
    let t_sum = {
        let g = statrs::distribution::Gamma::new(nuk, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        g.inverse_cdf(1.0 - tail)
    };
    // P(k * Y_(1) > t) <= K Q_nu(t/k) <= tail
    let mut lo = nu;
    let mut hi = nu + 10.0;
    while big_k as f64 * num::gamma_ur(nu, hi) > tail {
        hi *= 1.7;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if big_k as f64 * num::gamma_ur(nu, mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t_sum.min(k as f64 * hi)
}

/// Working precision for a supported f_S argument bound.
fn required_prec(k: usize, big_k: usize, x_max: f64) -> u32 {
    let s = (big_k - k) as f64;
    let u = s * x_max / k as f64;
    (1.4427 * u).ceil() as u32 + GUARD_BITS
}

/// Series order that comfortably passes the term peak at the argument bound.
pub(crate) fn auto_r_max(k: usize, big_k: usize, x_max: f64) -> usize {
    let s = (big_k - k) as f64;
    let u = s * x_max / k as f64;
    (u + 20.0 * u.sqrt()).ceil() as usize + 80
}

impl SeriesTables {
    pub fn build(k: usize, big_k: usize, p_prime: u32, r_max: usize, t_max: f64) -> Result<Self> {
        if k < 1 || k > big_k {
            return Err(Error::invalid("need 1 <= k <= K"));
        }
        if p_prime == 0 {
            return Err(Error::invalid("p_prime must be positive"));
        }
        if !(t_max > 0.0) {
            return Err(Error::invalid("t_max must be positive"));
        }
        let x_max = t_max / 2.0;
        let prec = required_prec(k, big_k, x_max).max(GUARD_BITS);
        let nu = p_prime as f64 / 2.0;
        let s = big_k - k;

        let d = Self::d_column(prec, p_prime, s, r_max);
        let l = Self::l_column(prec, p_prime, k, big_k, r_max)?;

        // prefactor: k C(K,k) / Gamma(nu+1)^{K-k} / 2
        let mut pref = float(prec, k as f64);
        let mut binom = Float::with_val(prec, 1);
        for j in 0..k {
            binom *= (big_k - j) as f64;
            binom /= (j + 1) as f64;
        }
        pref *= binom;
        let gnu1 = float(prec, nu + 1.0).gamma();
        pref /= gnu1.pow(s as u32);
        pref /= 2u32;

        let inv_gamma_nuk = float(prec, nu * big_k as f64).gamma().recip();

        Ok(SeriesTables {
            k,
            big_k,
            p_prime,
            prec,
            r_max,
            t_max,
            nu_k: nu * big_k as f64,
            d,
            l,
            prefactor: pref,
            inv_gamma_nuk,
        })
    }

    /// d_{r,s} column via the positive-term recursion.
    fn d_column(prec: u32, p_prime: u32, s: usize, r_max: usize) -> Vec<Float> {
        if s == 0 {
            let mut col = vec![float(prec, 0.0); r_max + 1];
            col[0] = float(prec, 1.0);
            return col;
        }
        let pp = p_prime as f64;
        let nu = pp / 2.0;
        let mut prev: Vec<Float> = (0..=r_max)
            .map(|r| float(prec, pp) / float(prec, pp + 2.0 * r as f64))
            .collect();
        let mut level = 1usize;
        while level < s {
            level += 1;
            let mut next = vec![float(prec, 0.0); r_max + 1];
            next[0] = float(prec, 1.0);
            let factor = float(prec, pp * level as f64 / 2.0);
            for r in 0..r_max {
                let mut binom = Float::with_val(prec, 1);
                let mut acc = float(prec, 0.0);
                for j in 0..=r {
                    let denom = float(prec, nu + 1.0 + (r - j) as f64);
                    acc += (&binom * &prev[j]).complete(prec) / denom;
                    if j < r {
                        binom *= (r - j) as u32;
                        binom /= (j + 1) as u32;
                    }
                }
                next[r + 1] = (&factor * &acc).complete(prec);
            }
            prev = next;
        }
        prev
    }

    /// l_{r,k} column: closed forms for k = 1 and k = K, quadrature otherwise.
    fn l_column(prec: u32, p_prime: u32, k: usize, big_k: usize, r_max: usize) -> Result<Vec<Float>> {
        let nu = p_prime as f64 / 2.0;
        if k == big_k {
            // only r = 0 survives (d_{r,0} = 0 for r > 0)
            let mut col = vec![float(prec, 0.0); r_max + 1];
            col[0] = float(prec, 1.0) / float(prec, big_k as f64);
            return Ok(col);
        }
        if k == 1 {
            // l_{r,1} = Gamma(nu K + r) / Gamma(nu)
            let mut col = Vec::with_capacity(r_max + 1);
            let mut cur =
                float(prec, nu * big_k as f64).gamma() / float(prec, nu).gamma();
            for r in 0..=r_max {
                col.push(cur.clone());
                cur *= float(prec, nu * big_k as f64 + r as f64);
            }
            return Ok(col);
        }
        Self::l_by_quadrature(prec, p_prime, k, big_k, r_max)
    }

    /// Shared-node Gauss-Legendre quadrature in log space for the whole
    /// family of integrands `x^{nu s + r} Q^{k-1} g_nu(x)`, with one global
    /// refinement check on the vector of results.
    fn l_by_quadrature(
        prec: u32,
        p_prime: u32,
        k: usize,
        big_k: usize,
        r_max: usize,
    ) -> Result<Vec<Float>> {
        let nu = p_prime as f64 / 2.0;
        let s = (big_k - k) as f64;
        let kf = k as f64;
        // decay budget in nats beyond which integrand values are irrelevant
        let budget = (prec as f64 + 64.0) * std::f64::consts::LN_2;

        // envelope exponents of x (including the log-space jacobian):
        // smallest (r = 0): a0 = nu s + nu; largest: a0 + r_max
        let a0 = nu * s + nu;
        let a_max = a0 + r_max as f64;

        // peak (in x) of the largest integrand and its decay point
        let x_peak_max = a_max / kf;
        let f_env = |a: f64, x: f64| a * x.ln() - kf * x;
        let mut hi = x_peak_max;
        let mut width = x_peak_max.max(1.0);
        while f_env(a_max, x_peak_max) - f_env(a_max, x_peak_max + width) < budget {
            width *= 2.0;
        }
        for _ in 0..200 {
            let mid = x_peak_max + width / 2.0;
            if f_env(a_max, x_peak_max) - f_env(a_max, mid) < budget {
                hi = mid;
                width *= 0.75;
            } else {
                width /= 2.0;
            }
            if width < 1e-9 * x_peak_max {
                break;
            }
        }
        let x_hi = (x_peak_max + width).max(hi).max(x_peak_max * 1.01);
        let y_hi = x_hi.ln();
        // left cutoff: below the smallest-exponent peak, decay is at least
        // ~0.63 (a0 + small) per unit of y one unit below the peak
        let x_peak_min = (a0 / kf).max(1e-8);
        let y_lo = x_peak_min.ln() - 1.0 - budget / (0.63 * a0.max(0.5));

        let order = 64usize;
        let gl = gauss_legendre(order, prec);

        let mut result: Option<Vec<Float>> = None;
        for level in 0..4u32 {
            let c_width = 0.5 / 2f64.powi(level as i32);
            // panel boundaries: width c / sqrt(k e^y + 1)
            let mut bounds = vec![y_lo];
            let mut y = y_lo;
            while y < y_hi {
                let w = c_width / (kf * y.exp() + 1.0).sqrt();
                y += w.max(1e-6);
                bounds.push(y.min(y_hi));
            }
            if bounds.len() * order > 2_000_000 {
                return Err(Error::Quadrature("node budget exceeded".into()));
            }

            let mut acc = vec![float(prec, 0.0); r_max + 1];
            let ln_gamma_nu = float(prec, nu).gamma().ln();
            for panel in bounds.windows(2) {
                let (a, b) = (panel[0], panel[1]);
                if b <= a {
                    continue;
                }
                let half = float(prec, (b - a) / 2.0);
                let mid = float(prec, (b + a) / 2.0);
                for i in 0..order {
                    let yi = (&half * &gl.0[i]).complete(prec) + &mid;
                    let x = yi.clone().exp();
                    // base = w * x^{nu s + nu} e^{-x} Q^{k-1} / Gamma(nu)
                    let q = upper_gamma_reg(p_prime, &x, prec);
                    let mut base = (&gl.1[i] * &half).complete(prec);
                    base *= x.clone().pow(float(prec, nu * s + nu)); // includes jacobian x
                    base *= (-x.clone()).exp();
                    base *= q.pow((k - 1) as u32);
                    base *= (-ln_gamma_nu.clone()).exp();
                    // accumulate x^r * base into acc[r]
                    let mut pow_term = base;
                    for slot in acc.iter_mut() {
                        *slot += &pow_term;
                        pow_term *= &x;
                    }
                }
            }

            if let Some(prev) = &result {
                // compare against the previous refinement level
                let mut worst = 0f64;
                for (p, c) in prev.iter().zip(&acc) {
                    let diff = (p - c).complete(prec).abs();
                    let scale = c.clone().abs();
                    if scale.is_zero() {
                        continue;
                    }
                    let rel = (diff / scale).to_f64();
                    worst = worst.max(rel);
                }
                let target = 2f64.powi(-((prec - TABLE_SLACK_BITS) as i32).min(1000));
                if std::env::var("FSCL_DEBUG_QUAD").is_ok() {
                    let mut worst_r = 0;
                    let mut w2 = 0f64;
                    for (r, (p, c)) in prev.iter().zip(&acc).enumerate() {
                        let diff = (p - c).complete(prec).abs();
                        let scale = c.clone().abs();
                        if scale.is_zero() { continue; }
                        let rel = (diff / scale).to_f64();
                        if rel > w2 { w2 = rel; worst_r = r; }
                    }
                    let l0 = acc[0].to_f64();
                    let oracle = crate::nulldist::lintegral::l_integral(0, k, big_k, p_prime, &crate::nulldist::lintegral::QuadSpec::default()).map(|v| v).unwrap_or(f64::NAN);
                    eprintln!("level {level}: panels {} worst {worst:.3e} at r={worst_r}, acc0={l0:.12e} gk={oracle:.12e}", bounds.len());
                }
                if worst <= target.max(1e-300) || worst < f64::MIN_POSITIVE {
                    return Ok(acc);
                }
                result = Some(acc);
            } else {
                result = Some(acc);
            }
        }
        // levels exhausted: accept only if the last two agreed to near target
        Err(Error::Quadrature(
            "l-integral refinement did not stabilize".into(),
        ))
    }

    /// Density of the top-`k` sum at `x` (the f_S scale), in working precision.
    fn density_sum_scale(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::invalid("argument must be nonnegative"));
        }
        if x == 0.0 {
            return Ok(match self.nu_k.partial_cmp(&1.0).unwrap() {
                std::cmp::Ordering::Less => f64::INFINITY,
                std::cmp::Ordering::Equal => {
                    // prefactor * d0 * l0 / Gamma(nu K)
                    let v = (&self.prefactor * &self.d[0]).complete(self.prec)
                        * &self.l[0]
                        * &self.inv_gamma_nuk;
                    2.0 * v.to_f64() // undo the 1/2 in prefactor: f_S scale
                }
                std::cmp::Ordering::Greater => 0.0,
            });
        }
        let prec = self.prec;
        let xf = float(prec, x);
        // g_{nuK + r}(x) = x^{nuK + r - 1} e^{-x} / Gamma(nuK + r):
        // maintain power = x^{nuK - 1 + r}, gam_inv = 1/Gamma(nuK + r),
        // fact_inv = 1/r!
        let mut power = xf.clone().pow(float(prec, self.nu_k - 1.0));
        let emx = (-xf.clone()).exp();
        let mut gam_inv = self.inv_gamma_nuk.clone();
        let mut fact_inv = float(prec, 1.0);
        let mut sum = float(prec, 0.0);
        let mut max_exp: i64 = i64::MIN;
        let mut last_term_exp: i64 = i64::MIN;
        let mut converged_at: Option<usize> = None;
        for r in 0..=self.r_max {
            let mut term = (&self.d[r] * &self.l[r]).complete(prec);
            term *= &power;
            term *= &gam_inv;
            term *= &fact_inv;
            if r % 2 == 1 {
                term = -term;
            }
            sum += &term;
            let texp = term.get_exp().map(|e| e as i64).unwrap_or(i64::MIN);
            last_term_exp = texp;
            max_exp = max_exp.max(texp);
            // early exit once the terms are far past the peak and tiny
            if r > 8 {
                let sexp = sum.get_exp().map(|e| e as i64).unwrap_or(i64::MIN);
                if texp != i64::MIN && sexp != i64::MIN && texp < sexp - 140 && texp < max_exp - 140
                {
                    converged_at = Some(r);
                    break;
                }
                if texp == i64::MIN && max_exp > i64::MIN {
                    converged_at = Some(r);
                    break;
                }
            }
            // advance recurrences
            power *= &xf;
            gam_inv /= float(prec, self.nu_k + r as f64);
            fact_inv /= (r + 1) as u32;
        }
        let sexp = sum.get_exp().map(|e| e as i64).unwrap_or(i64::MIN);
        if converged_at.is_none() {
            // spec tail bound: last term must be below 1e-10 * |sum|
            let bound_ok =
                sexp != i64::MIN && last_term_exp != i64::MIN && last_term_exp < sexp - 34;
            if !bound_ok {
                return Err(Error::SeriesNotConverged {
                    r_max: self.r_max,
                    message: format!(
                        "term magnitude at r_max (2^{last_term_exp}) exceeds 1e-10 x sum (2^{sexp}) at t = {}",
                        2.0 * x
                    ),
                });
            }
        }
        // cancellation sanity: the working precision must cover the gap
        // between the largest term and the sum
        if sexp != i64::MIN && max_exp != i64::MIN && (max_exp - sexp) as u32 + 64 > prec {
            return Err(Error::SeriesNotConverged {
                r_max: self.r_max,
                message: "insufficient working precision for the cancellation".into(),
            });
        }
        let value = ((&self.prefactor * &sum).complete(prec) * emx).to_f64();
        // tiny negative noise near the support edge rounds to zero
        Ok(if value < 0.0 && value > -1e-250 { 0.0 } else { 2.0 * value })
    }

    /// Density of the scaled statistic at `t` (the f_T scale):
    /// `f_T(t) = f_S(t/2) / 2`.
    pub fn density(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::invalid("t must be nonnegative"));
        }
        if t > self.t_max {
            return Err(Error::invalid(format!(
                "t = {t} beyond supported range {}",
                self.t_max
            )));
        }
        Ok(self.density_sum_scale(t / 2.0)? / 2.0)
    }
}
