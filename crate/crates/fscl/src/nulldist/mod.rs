//! Null distributions for the forward-search statistic: the analytic
//! ordered-gamma density, Monte Carlo simulation of top-k chi-square sums,
//! and the permutation-null engine.

pub mod dcoeffs;
pub mod gamma;
pub mod lintegral;
mod series;

pub use dcoeffs::d_coeffs;
pub use gamma::gamma_pdf_cdf;
pub use lintegral::{l_integral, QuadSpec};

use crate::error::{Error, Result};
use crate::model::{gather_rows, GroupSample, ModelSpec};
use crate::seed::{self, role};
use crate::stats::Method;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma as GammaDist};
use rayon::prelude::*;
use series::SeriesTables;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Configuration of the asymptotic null: the distribution of the sum of the
/// `k` largest of `K` independent chi-square(`p'`) variables.
///
/// `r_max` is the series truncation order; evaluations whose terms have not
/// fallen below `1e-10` times the accumulated sum by `r_max` report an
/// error rather than returning a silently truncated value. `t_max` bounds
/// the supported argument range (used to size the working precision);
/// `None` derives it from the distribution's own tail.
#[derive(Debug, Clone)]
pub struct OrderedGammaDensity {
    pub k: usize,
    pub big_k: usize,
    pub p_prime: u32,
    pub r_max: Option<usize>,
    pub t_max: Option<f64>,
    pub quad: QuadSpec,
}

impl OrderedGammaDensity {
    /// Spec-default configuration: `r_max = 80`, tail-derived `t_max`.
    pub fn new(k: usize, big_k: usize, p_prime: u32) -> Self {
        OrderedGammaDensity {
            k,
            big_k,
            p_prime,
            r_max: Some(80),
            t_max: None,
            quad: QuadSpec::default(),
        }
    }

    /// Auto-sized truncation order: enough terms to pass the alternating
    /// peak everywhere on the supported range.
    pub fn auto(k: usize, big_k: usize, p_prime: u32) -> Self {
        OrderedGammaDensity {
            k,
            big_k,
            p_prime,
            r_max: None,
            t_max: None,
            quad: QuadSpec::default(),
        }
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = Some(t_max);
        self
    }

    pub fn with_r_max(mut self, r_max: usize) -> Self {
        self.r_max = Some(r_max);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > self.big_k {
            return Err(Error::invalid("need 1 <= k <= K"));
        }
        if self.p_prime == 0 {
            return Err(Error::invalid("p_prime must be positive"));
        }
        Ok(())
    }

    /// f_T argument beyond which less than `tail` probability remains.
    pub fn support_bound(&self, tail: f64) -> f64 {
        2.0 * series::support_bound(self.k, self.big_k, self.p_prime, tail)
    }

    fn tables(&self) -> Result<Arc<SeriesTables>> {
        self.validate()?;
        let t_max = self.t_max.unwrap_or_else(|| self.support_bound(1e-9));
        // bucket t_max so nearby requests share one table
        let bucket = t_max.max(16.0).log2().ceil().exp2();
        let r_max = self
            .r_max
            .unwrap_or_else(|| series::auto_r_max(self.k, self.big_k, bucket / 2.0));
        let key = (self.k, self.big_k, self.p_prime, r_max, bucket.to_bits());
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u32, usize, u64), Arc<SeriesTables>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let built = Arc::new(SeriesTables::build(
            self.k,
            self.big_k,
            self.p_prime,
            r_max,
            bucket,
        )?);
        cache.lock().unwrap().insert(key, built.clone());
        Ok(built)
    }

    /// Density at `t`, with the series truncation bound recorded as an error
    /// when it fails.
    pub fn density(&self, t: f64) -> Result<f64> {
        self.tables()?.density(t)
    }

    /// Density on a grid (tables are built once).
    pub fn density_grid(&self, ts: &[f64]) -> Result<Vec<f64>> {
        let tables = self.tables()?;
        ts.iter().map(|&t| tables.density(t)).collect()
    }

    /// Integral of the density over `[0, hi]` by adaptive Simpson
    /// quadrature on the evaluated density.
    pub fn integrate(&self, hi: f64, tol: f64) -> Result<f64> {
        let tables = self.tables()?;
        let f = |x: f64| tables.density(x);
        adaptive_simpson(&f, 0.0, hi, tol, 30)
    }

    /// CDF values at sorted arguments, by trapezoid integration on a
    /// refinement of the argument grid.
    pub fn cdf_on_sorted(&self, ts: &[f64]) -> Result<Vec<f64>> {
        let tables = self.tables()?;
        let mut out = Vec::with_capacity(ts.len());
        let mut cum = 0.0;
        let mut prev_t = 0.0;
        let mut prev_f = tables.density(0.0)?;
        if !prev_f.is_finite() {
            prev_f = 0.0; // integrable endpoint singularity
        }
        for &t in ts {
            if t < prev_t {
                return Err(Error::invalid("arguments must be sorted"));
            }
            // refine each gap enough for a smooth density
            let steps = ((t - prev_t) / 0.05).ceil().max(1.0) as usize;
            let h = (t - prev_t) / steps as f64;
            for s in 0..steps {
                let x1 = prev_t + (s as f64 + 1.0) * h;
                let f1 = tables.density(x1)?;
                cum += 0.5 * (prev_f + f1) * h;
                prev_f = f1;
            }
            prev_t = t;
            out.push(cum.min(1.0));
        }
        Ok(out)
    }

    /// Upper-`alpha` quantile by bisection on the integrated density.
    pub fn upper_quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha in (0,1)"));
        }
        let hi = self.support_bound(1e-12);
        let mut lo = 0.0;
        let mut hi = hi;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let mass = self.integrate(mid, 1e-9)?;
            if mass < 1.0 - alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Density `f_T(t | k)` of the forward-search statistic under the
/// independence premise.
pub fn fscl_null_density(t: f64, cfg: &OrderedGammaDensity) -> Result<f64> {
    cfg.density(t)
}

fn adaptive_simpson<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn finite(v: f64) -> f64 {
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }
    struct Rec<'a, F> {
        f: &'a F,
    }
    impl<F: Fn(f64) -> Result<f64>> Rec<'_, F> {
        #[allow(clippy::too_many_arguments)]
        fn go(
            &self,
            a: f64,
            m: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> Result<f64> {
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = finite((self.f)(lm)?);
            let frm = finite((self.f)(rm)?);
            let left = simpson(fa, flm, fm, a, m);
            let right = simpson(fm, frm, fb, m, b);
            if depth == 0 {
                return Err(Error::Quadrature("adaptive Simpson depth exhausted".into()));
            }
            if (left + right - whole).abs() <= 15.0 * tol {
                Ok(left + right + (left + right - whole) / 15.0)
            } else {
                let l = self.go(a, lm, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
                let r = self.go(m, rm, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
                Ok(l + r)
            }
        }
    }
    let m = 0.5 * (a + b);
    let fa = finite(f(a)?);
    let fm = finite(f(m)?);
    let fb = finite(f(b)?);
    let whole = simpson(fa, fm, fb, a, b);
    Rec { f }.go(a, m, b, fa, fm, fb, whole, tol, max_depth)
}

/// Monte Carlo draws of the top-`k` sum of `K` independent chi-square(`p'`)
/// variables, on the f_T scale.
pub fn simulate_null(cfg: &OrderedGammaDensity, n_draws: usize, seed_val: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n_draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let gamma = GammaDist::new(cfg.p_prime as f64 / 2.0, 2.0)
        .map_err(|e| Error::invalid(format!("gamma param: {e}")))?;
    let mut rng = seed::rng_from(seed_val, &[role::NULL_SIM]);
    let mut buf = vec![0.0f64; cfg.big_k];
    let mut out = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        for slot in buf.iter_mut() {
            *slot = gamma.sample(&mut rng);
        }
        buf.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        out.push(buf[..cfg.k].iter().sum());
    }
    Ok(out)
}

/// Sorted permutation replicates of one statistic.
#[derive(Debug, Clone)]
pub struct PermutationNull {
    replicates: Vec<f64>,
    pub b: usize,
    pub stat_tag: Method,
    pub seed: u64,
}

impl PermutationNull {
    pub fn from_replicates(mut replicates: Vec<f64>, stat_tag: Method, seed: u64) -> Result<Self> {
        if replicates.is_empty() {
            return Err(Error::invalid("need at least one replicate"));
        }
        replicates.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(PermutationNull {
            b: replicates.len(),
            replicates,
            stat_tag,
            seed,
        })
    }

    pub fn replicates(&self) -> &[f64] {
        &self.replicates
    }
}

/// Add-one permutation p-value `(1 + #{T*_b >= t_obs}) / (B + 1)`.
pub fn p_value(t_obs: f64, null: &PermutationNull) -> f64 {
    let idx = null.replicates.partition_point(|&v| v < t_obs);
    let count = null.b - idx;
    (1.0 + count as f64) / (null.b as f64 + 1.0)
}

/// Pooled two-group data with fixed group sizes, for permutation schemes.
pub struct PooledSamples {
    pooled: GroupSample,
    pub n0: usize,
    pub n1: usize,
}

impl PooledSamples {
    pub fn new(s0: &GroupSample, s1: &GroupSample) -> Result<Self> {
        if s0.dim() != s1.dim() {
            return Err(Error::invalid("group dimensions differ"));
        }
        let n = s0.n() + s1.n();
        let mut data = nalgebra::DMatrix::zeros(n, s0.dim());
        for i in 0..s0.n() {
            for c in 0..s0.dim() {
                data[(i, c)] = s0.value(i, c);
            }
        }
        for i in 0..s1.n() {
            for c in 0..s1.dim() {
                data[(s0.n() + i, c)] = s1.value(i, c);
            }
        }
        Ok(PooledSamples {
            pooled: GroupSample::new(data, crate::model::Group::Control)?,
            n0: s0.n(),
            n1: s1.n(),
        })
    }

    pub fn pooled(&self) -> &GroupSample {
        &self.pooled
    }

    /// Identity assignment (the observed grouping).
    pub fn observed_split(&self) -> (Vec<usize>, Vec<usize>) {
        ((0..self.n0).collect(), (self.n0..self.n0 + self.n1).collect())
    }

    /// Random relabeling with group sizes preserved, for replicate `b`.
    pub fn permuted_split(&self, seed_val: u64, b: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.n0 + self.n1).collect();
        let mut rng = seed::rng_from(seed_val, &[role::PERM, b as u64]);
        idx.shuffle(&mut rng);
        let idx1 = idx.split_off(self.n0);
        (idx, idx1)
    }
}

/// Compute `stat` on `b` label permutations of the pooled data. The closure
/// receives the pooled sample, the two index sets, and a replicate-specific
/// sub-seed; replicates run in parallel but are collected in replicate
/// order, so results are independent of the worker count.
pub fn permutation_replicates<T, F>(
    s0: &GroupSample,
    s1: &GroupSample,
    b: usize,
    seed_val: u64,
    stat: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&GroupSample, &[usize], &[usize], u64) -> Result<T> + Sync,
{
    if b < 1 {
        return Err(Error::invalid("need B >= 1"));
    }
    let pooled = PooledSamples::new(s0, s1)?;
    (0..b)
        .into_par_iter()
        .map(|rep| {
            let (idx0, idx1) = pooled.permuted_split(seed_val, rep);
            let sub_seed = seed::derive_seed(seed_val, &[role::PERM_BOOT, rep as u64]);
            stat(pooled.pooled(), &idx0, &idx1, sub_seed)
        })
        .collect()
}

/// Permutation null for a single statistic computed on materialized
/// permuted group samples. For forward-search statistics the builder must
/// rerun the entire procedure (selection and covariance estimation
/// included) on each permuted dataset.
pub fn permutation_null<F>(
    _model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    stat_tag: Method,
    b: usize,
    seed_val: u64,
    stat_builder: F,
) -> Result<PermutationNull>
where
    F: Fn(&GroupSample, &GroupSample, u64) -> Result<f64> + Sync,
{
    let reps = permutation_replicates(s0, s1, b, seed_val, |pooled, idx0, idx1, sub_seed| {
        let g0 = gather_rows(pooled, idx0);
        let g1 = gather_rows(pooled, idx1);
        stat_builder(&g0, &g1, sub_seed)
    })?;
    PermutationNull::from_replicates(reps, stat_tag, seed_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num;

    #[test]
    fn simulate_null_moments() {
        // k = K = 1, p' = 2: mean 2
        let cfg = OrderedGammaDensity::new(1, 1, 2);
        let draws = simulate_null(&cfg, 100_000, 5).unwrap();
        let mean: f64 = draws.iter().sum::<f64>() / draws.len() as f64;
        let se = (2.0f64 * 2.0 / draws.len() as f64).sqrt(); // var chi2(2) = 4
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");

        // k = 1, K = 2, p' = 2: max of two Exp(mean 2): mean 3
        let cfg = OrderedGammaDensity::new(1, 2, 2);
        let draws = simulate_null(&cfg, 100_000, 6).unwrap();
        let mean: f64 = draws.iter().sum::<f64>() / draws.len() as f64;
        let var: f64 =
            draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / draws.len() as f64;
        let se = (var / draws.len() as f64).sqrt();
        assert!((mean - 3.0).abs() < 3.0 * se, "mean {mean}");

        // determinism
        let a = simulate_null(&cfg, 100, 7).unwrap();
        let b = simulate_null(&cfg, 100, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simulate_collapse_matches_chi_square_ks() {
        let cfg = OrderedGammaDensity::new(3, 3, 2);
        let mut draws = simulate_null(&cfg, 100_000, 8).unwrap();
        draws.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let n = draws.len() as f64;
        let mut ks = 0.0f64;
        for (i, &t) in draws.iter().enumerate() {
            let f = 1.0 - num::chi2_sf(t, 6.0);
            ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
        }
        // KS critical value at 0.01 for n = 1e5 is about 1.63/sqrt(n)
        assert!(ks < 1.63 / n.sqrt(), "ks {ks}");
    }

    #[test]
    fn p_value_edges() {
        let null =
            PermutationNull::from_replicates((1..=999).map(|i| i as f64).collect(), Method::Fscl, 0)
                .unwrap();
        assert_eq!(p_value(0.5, &null), 1.0);
        assert_eq!(p_value(1000.0, &null), 1.0 / 1000.0);
        let p_med = p_value(500.0, &null);
        assert!((p_med - 0.5).abs() < 1.0 / 999.0);
        // monotone non-increasing
        assert!(p_value(3.0, &null) >= p_value(4.0, &null));

        let single = PermutationNull::from_replicates(vec![1.0], Method::Wald, 0).unwrap();
        assert_eq!(p_value(2.0, &single), 0.5);
        assert_eq!(p_value(0.0, &single), 1.0);
    }

    #[test]
    fn density_integrates_to_one_fig2_config() {
        let cfg = OrderedGammaDensity::auto(1, 5, 5);
        let hi = cfg.support_bound(1e-9);
        let mass = cfg.integrate(hi, 1e-8).unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn permutation_split_preserves_sizes_and_is_deterministic() {
        let m = crate::models::GaussianMeanModel::isotropic(2, 1.0, crate::models::Grouping::Marginal)
            .unwrap();
        let s0 = m.simulate(&[0.0, 0.0], 10, crate::model::Group::Control, 1).unwrap();
        let s1 = m.simulate(&[0.0, 0.0], 7, crate::model::Group::Case, 2).unwrap();
        let pooled = PooledSamples::new(&s0, &s1).unwrap();
        let (a0, a1) = pooled.permuted_split(9, 4);
        let (b0, b1) = pooled.permuted_split(9, 4);
        assert_eq!(a0, b0);
        assert_eq!(a1, b1);
        assert_eq!(a0.len(), 10);
        assert_eq!(a1.len(), 7);
        let mut all: Vec<usize> = a0.iter().chain(a1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..17).collect::<Vec<_>>());
    }
}
