//! Latent multivariate Gaussian model for categorical data.
//!
//! Each of `d` categorical variables takes one of `C` labels; label `k` is
//! observed when the latent Gaussian coordinate falls between thresholds
//! `gamma_{j,k-1}` and `gamma_{j,k}` (with infinite sentinels at the ends).
//! The one-wise marginal composite likelihood treats each variable as a
//! multinomial whose cell probabilities are normal CDF differences, so the
//! block MCLE is the normal quantile of the clamped empirical cumulative
//! frequencies.

use crate::error::{Error, Result};
use crate::model::{Group, GroupSample, ModelSpec};
use crate::num::{normal_cdf, normal_pdf, normal_quantile};
use crate::rule::ParamLayout;
use crate::seed;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Threshold separation used to repair ties after frequency clamping.
pub const EPS_SEP: f64 = 1e-6;

/// Per-variable latent thresholds, strictly increasing along each row.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileParams {
    gamma: Vec<Vec<f64>>,
}

impl QuantileParams {
    pub fn new(gamma: Vec<Vec<f64>>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::invalid("no threshold rows"));
        }
        let width = gamma[0].len();
        for (j, row) in gamma.iter().enumerate() {
            if row.len() != width || width == 0 {
                return Err(Error::invalid("threshold rows must share a positive width"));
            }
            for w in row.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::invalid(format!(
                        "thresholds of variable {j} are not strictly increasing"
                    )));
                }
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "thresholds of variable {j} are not finite"
                )));
            }
        }
        Ok(QuantileParams { gamma })
    }

    /// Same thresholds for every variable.
    pub fn repeated(row: Vec<f64>, d: usize) -> Result<Self> {
        Self::new(vec![row; d])
    }

    pub fn n_vars(&self) -> usize {
        self.gamma.len()
    }

    pub fn n_thresholds(&self) -> usize {
        self.gamma[0].len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.gamma[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.gamma
    }

    /// Stacked copy in variable-major order.
    pub fn stacked(&self) -> Vec<f64> {
        self.gamma.iter().flatten().copied().collect()
    }
}

/// Fit diagnostics: variables whose empirical frequencies hit the clamp
/// bounds or needed tie separation.
#[derive(Debug, Clone, Default)]
pub struct FitNotes {
    pub clamped_vars: Vec<usize>,
    pub repaired_vars: Vec<usize>,
}

/// Probability that a variable with the given thresholds takes label `k`
/// (1-based), i.e. `Phi(gamma_k) - Phi(gamma_{k-1})` with sentinels.
pub fn cell_prob(gamma_row: &[f64], k: usize) -> Result<f64> {
    let c = gamma_row.len() + 1;
    if k < 1 || k > c {
        return Err(Error::invalid(format!("label {k} out of 1..={c}")));
    }
    for w in gamma_row.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::invalid("thresholds are not strictly increasing"));
        }
    }
    let hi = if k == c { 1.0 } else { normal_cdf(gamma_row[k - 1]) };
    let lo = if k == 1 { 0.0 } else { normal_cdf(gamma_row[k - 2]) };
    Ok(hi - lo)
}

/// Quantile lookup table for sample size `n`: entry `j` is
/// `Phi^{-1}(clamp(j / n))` with frequencies clamped away from 0 and 1.
fn quantile_table(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| {
            let nf = n as f64;
            let lo = 1.0 / (2.0 * nf);
            let hi = 1.0 - lo;
            Arc::new(
                (0..=n)
                    .map(|j| normal_quantile((j as f64 / nf).clamp(lo, hi)))
                    .collect(),
            )
        })
        .clone()
}

#[derive(Debug, Clone)]
pub struct LatentCategoricalModel {
    d: usize,
    n_cat: usize,
    sigma: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    layout: ParamLayout,
}

impl LatentCategoricalModel {
    /// `sigma` must be a correlation matrix (symmetric positive definite,
    /// unit diagonal).
    pub fn new(d: usize, n_cat: usize, sigma: DMatrix<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        if n_cat < 2 {
            return Err(Error::invalid("need at least 2 labels"));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::invalid("sigma must be d x d"));
        }
        for i in 0..d {
            if (sigma[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("sigma must have unit diagonal"));
            }
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid("sigma must be symmetric"));
                }
            }
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("sigma is not positive definite"))?;
        Ok(LatentCategoricalModel {
            d,
            n_cat,
            chol_lower: chol.l(),
            sigma,
            layout: ParamLayout::disjoint(vec![n_cat - 1; d])?,
        })
    }

    pub fn identity(d: usize, n_cat: usize) -> Result<Self> {
        Self::new(d, n_cat, DMatrix::identity(d, d))
    }

    pub fn n_cat(&self) -> usize {
        self.n_cat
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn is_identity(&self) -> bool {
        self.sigma == DMatrix::identity(self.d, self.d)
    }

    /// Label counts of variable `j` (1-based labels mapped to 0-based bins).
    fn counts(&self, sample: &GroupSample, j: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; self.n_cat];
        for &v in sample.column(j) {
            let lab = v as usize;
            if v.fract() != 0.0 || lab < 1 || lab > self.n_cat {
                return Err(Error::invalid(format!(
                    "label {v} of variable {j} outside 1..={}",
                    self.n_cat
                )));
            }
            counts[lab - 1] += 1;
        }
        Ok(counts)
    }

    fn counts_indexed(&self, sample: &GroupSample, j: usize, idx: &[usize]) -> Vec<usize> {
        let col = sample.column(j);
        let mut counts = vec![0usize; self.n_cat];
        for &i in idx {
            counts[col[i] as usize - 1] += 1;
        }
        counts
    }

    /// Threshold estimates from label counts: normal quantiles of the clamped
    /// cumulative frequencies, with symmetric `EPS_SEP` splitting when
    /// clamping produces ties.
    fn thresholds_from_counts(counts: &[usize], n: usize, notes: Option<(&mut FitNotes, usize)>) -> Vec<f64> {
        let table = quantile_table(n);
        let mut cum = 0usize;
        let mut out = Vec::with_capacity(counts.len() - 1);
        let mut clamped = false;
        for &c in &counts[..counts.len() - 1] {
            cum += c;
            if cum == 0 || cum == n {
                clamped = true;
            }
            out.push(table[cum]);
        }
        let mut repaired = false;
        // ties can only arise from zero-count cells; separate symmetrically
        let mut i = 0;
        while i < out.len() {
            let mut j = i + 1;
            while j < out.len() && out[j] <= out[i] {
                j += 1;
            }
            let ties = j - i;
            if ties > 1 {
                repaired = true;
                let center = out[i];
                for (t, slot) in (0..ties).zip(i..j) {
                    out[slot] = center + EPS_SEP * (t as f64 - (ties as f64 - 1.0) / 2.0);
                }
            }
            i = j;
        }
        if let Some((notes, var)) = notes {
            if clamped {
                notes.clamped_vars.push(var);
            }
            if repaired {
                notes.repaired_vars.push(var);
            }
        }
        out
    }

    /// One-wise MCLE of all threshold rows, with fit diagnostics.
    pub fn fit_quantiles(&self, sample: &GroupSample) -> Result<(QuantileParams, FitNotes)> {
        if sample.dim() != self.d {
            return Err(Error::invalid("sample dimension mismatch"));
        }
        let mut notes = FitNotes::default();
        let mut rows = Vec::with_capacity(self.d);
        for j in 0..self.d {
            let counts = self.counts(sample, j)?;
            rows.push(Self::thresholds_from_counts(
                &counts,
                sample.n(),
                Some((&mut notes, j)),
            ));
        }
        Ok((QuantileParams::new(rows)?, notes))
    }

    /// Simulate `n` observations by thresholding latent `N_d(0, Sigma)` draws.
    pub fn simulate(
        &self,
        gamma: &QuantileParams,
        n: usize,
        group: Group,
        seed_val: u64,
    ) -> Result<GroupSample> {
        if gamma.n_vars() != self.d || gamma.n_thresholds() != self.n_cat - 1 {
            return Err(Error::invalid("threshold shape mismatch"));
        }
        if n < 2 {
            return Err(Error::invalid("need n >= 2"));
        }
        let mut rng = seed::rng_from(seed_val, &[seed::role::DATA]);
        let mut data = DMatrix::zeros(n, self.d);
        let identity = self.is_identity();
        let mut z = vec![0.0f64; self.d];
        for i in 0..n {
            if identity {
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
            } else {
                let raw: Vec<f64> = (0..self.d).map(|_| StandardNormal.sample(&mut rng)).collect();
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = (0..=j).map(|l| self.chol_lower[(j, l)] * raw[l]).sum();
                }
            }
            for j in 0..self.d {
                let row = gamma.row(j);
                let mut label = 1usize;
                for &g in row {
                    if z[j] > g {
                        label += 1;
                    } else {
                        break;
                    }
                }
                data[(i, j)] = label as f64;
            }
        }
        GroupSample::new(data, group)
    }
}

impl ModelSpec for LatentCategoricalModel {
    fn n_sub(&self) -> usize {
        self.d
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn data_dim(&self) -> usize {
        self.d
    }

    fn fit_sub(&self, k: usize, sample: &GroupSample) -> Result<Vec<f64>> {
        let counts = self.counts(sample, k)?;
        Ok(Self::thresholds_from_counts(&counts, sample.n(), None))
    }

    fn fit_sub_indexed(&self, k: usize, sample: &GroupSample, idx: &[usize]) -> Result<Vec<f64>> {
        if idx.is_empty() {
            return Err(Error::invalid("empty index set"));
        }
        let counts = self.counts_indexed(sample, k, idx);
        Ok(Self::thresholds_from_counts(&counts, idx.len(), None))
    }

    fn loglik_sub(&self, k: usize, theta_k: &[f64], sample: &GroupSample) -> Result<f64> {
        if theta_k.len() != self.n_cat - 1 {
            return Err(Error::invalid("theta block has wrong dimension"));
        }
        let counts = self.counts(sample, k)?;
        let mut acc = 0.0;
        for (lab0, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let p = cell_prob(theta_k, lab0 + 1)?;
            if p <= 0.0 {
                return Err(Error::NumericDomain {
                    index: k,
                    message: format!("cell {} has zero probability but count {c}", lab0 + 1),
                });
            }
            acc += c as f64 * p.ln();
        }
        Ok(acc)
    }

    fn score_sub(
        &self,
        k: usize,
        theta_k: &[f64],
        sample: &GroupSample,
        obs: usize,
    ) -> Result<Vec<f64>> {
        let label = sample.value(obs, k) as usize;
        let p = cell_prob(theta_k, label)?;
        let mut score = vec![0.0; theta_k.len()];
        // d log p(label) / d gamma_t = phi(gamma_t) (1{t = label} - 1{t = label - 1}) / p
        if label <= theta_k.len() {
            score[label - 1] = normal_pdf(theta_k[label - 1]) / p;
        }
        if label >= 2 {
            score[label - 2] -= normal_pdf(theta_k[label - 2]) / p;
        }
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_probs_sum_to_one_and_match_reference() {
        let row = [-0.3, 0.3];
        let p2 = cell_prob(&row, 2).unwrap();
        assert!((p2 - 0.235822844377905266).abs() < 1e-12);
        let total: f64 = (1..=3).map(|k| cell_prob(&row, k).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((cell_prob(&[0.0], 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(cell_prob(&[0.3, -0.3], 1).is_err());
    }

    fn sample_with_counts(counts: &[usize]) -> GroupSample {
        let n: usize = counts.iter().sum();
        let mut col = Vec::with_capacity(n);
        for (lab0, &c) in counts.iter().enumerate() {
            col.extend(std::iter::repeat((lab0 + 1) as f64).take(c));
        }
        GroupSample::new(DMatrix::from_column_slice(n, 1, &col), Group::Control).unwrap()
    }

    #[test]
    fn fit_matches_normal_quantiles() {
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let s = sample_with_counts(&[25, 50, 25]);
        let (q, notes) = m.fit_quantiles(&s).unwrap();
        assert!((q.row(0)[0] + 0.674489750196081705).abs() < 1e-9);
        assert!((q.row(0)[1] - 0.674489750196081705).abs() < 1e-9);
        assert!(notes.clamped_vars.is_empty());
    }

    #[test]
    fn fit_repairs_tied_thresholds() {
        // counts (50, 0, 50): both cumulative frequencies are 0.5
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let s = sample_with_counts(&[50, 0, 50]);
        let (q, _) = m.fit_quantiles(&s).unwrap();
        assert!((q.row(0)[0] + EPS_SEP / 2.0).abs() < 1e-12);
        assert!((q.row(0)[1] - EPS_SEP / 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_flags_degenerate_variable() {
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let s = sample_with_counts(&[100, 0, 0]);
        let (q, notes) = m.fit_quantiles(&s).unwrap();
        assert_eq!(notes.clamped_vars, vec![0]);
        assert!(q.row(0)[0] < q.row(0)[1]);
    }

    #[test]
    fn loglik_matches_multinomial_oracle() {
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let s = sample_with_counts(&[30, 40, 30]);
        let row = [-0.3, 0.3];
        let got = m.loglik_sub(0, &row, &s).unwrap();
        let direct = 30.0 * cell_prob(&row, 1).unwrap().ln()
            + 40.0 * cell_prob(&row, 2).unwrap().ln()
            + 30.0 * cell_prob(&row, 3).unwrap().ln();
        assert!((got - direct).abs() < 1e-10);
    }

    #[test]
    fn loglik_single_count_case() {
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let mut col = vec![1.0, 1.0];
        col[1] = 1.0;
        let s = GroupSample::new(DMatrix::from_column_slice(2, 1, &col), Group::Control).unwrap();
        let got = m.loglik_sub(0, &[0.0, 1.0], &s).unwrap();
        assert!((got - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn simulate_is_deterministic_and_respects_extreme_thresholds() {
        let m = LatentCategoricalModel::identity(2, 3).unwrap();
        let g = QuantileParams::repeated(vec![-1e10, 1e10], 2).unwrap();
        let s = m.simulate(&g, 50, Group::Case, 1).unwrap();
        for i in 0..50 {
            for j in 0..2 {
                assert_eq!(s.value(i, j), 2.0);
            }
        }
        let g2 = QuantileParams::repeated(vec![-0.3, 0.3], 2).unwrap();
        let a = m.simulate(&g2, 40, Group::Case, 7).unwrap();
        let b = m.simulate(&g2, 40, Group::Case, 7).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn fit_is_consistent_on_large_simulation() {
        let m = LatentCategoricalModel::identity(2, 3).unwrap();
        let truth = QuantileParams::repeated(vec![-0.3, 0.3], 2).unwrap();
        let s = m.simulate(&truth, 100_000, Group::Control, 42).unwrap();
        let (q, _) = m.fit_quantiles(&s).unwrap();
        for j in 0..2 {
            assert!((q.row(j)[0] + 0.3).abs() < 0.02);
            assert!((q.row(j)[1] - 0.3).abs() < 0.02);
        }
        // empirical label frequencies converge to cell probabilities
        let mut count2 = 0usize;
        for &v in s.column(0) {
            if v == 2.0 {
                count2 += 1;
            }
        }
        let freq = count2 as f64 / s.n() as f64;
        assert!((freq - 0.235822844377905266).abs() < 0.01);
    }

    #[test]
    fn fitted_thresholds_locally_maximize_loglik() {
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let s = sample_with_counts(&[28, 41, 31]);
        let (q, _) = m.fit_quantiles(&s).unwrap();
        let base = m.loglik_sub(0, q.row(0), &s).unwrap();
        for d0 in [-0.1, 0.0, 0.1] {
            for d1 in [-0.1, 0.0, 0.1] {
                if d0 == 0.0 && d1 == 0.0 {
                    continue;
                }
                let pert = [q.row(0)[0] + d0, q.row(0)[1] + d1];
                if pert[0] >= pert[1] {
                    continue;
                }
                let l = m.loglik_sub(0, &pert, &s).unwrap();
                assert!(l <= base + 1e-9, "perturbed loglik {l} exceeds fitted {base}");
            }
        }
    }

    #[test]
    fn score_matches_numeric_gradient() {
        let m = LatentCategoricalModel::identity(1, 3).unwrap();
        let s = sample_with_counts(&[10, 15, 5]);
        let theta = [-0.4, 0.25];
        // total analytic score
        let mut total = vec![0.0; 2];
        for i in 0..s.n() {
            let sc = m.score_sub(0, &theta, &s, i).unwrap();
            total[0] += sc[0];
            total[1] += sc[1];
        }
        let h = 1e-6;
        for t in 0..2 {
            let mut up = theta;
            up[t] += h;
            let mut dn = theta;
            dn[t] -= h;
            let num = (m.loglik_sub(0, &up, &s).unwrap() - m.loglik_sub(0, &dn, &s).unwrap())
                / (2.0 * h);
            assert!((num - total[t]).abs() < 1e-5, "coord {t}: {num} vs {}", total[t]);
        }
    }
}
