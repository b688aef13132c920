//! Group-wise MCLE, resampling covariance estimates and information matrices.

use crate::error::{Error, Result};
use crate::model::{GroupSample, ModelSpec};
use crate::rule::CompositionRule;
use crate::seed::{self, role};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Relative eigenvalue threshold below which a ridge is applied.
const RIDGE_REL: f64 = 1e-8;
/// Absolute ridge used when the matrix is exactly zero.
const RIDGE_ABS_FLOOR: f64 = 1e-8;

/// Stacked MCLE difference `theta_1(w) - theta_0(w)` over the active blocks.
#[derive(Debug, Clone)]
pub struct DeltaEstimate {
    pub values: DVector<f64>,
    pub rule: CompositionRule,
    pub block_offsets: Vec<usize>,
    pub n0: usize,
    pub n1: usize,
}

impl DeltaEstimate {
    pub fn pooled_n(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// How a covariance estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CovSource {
    Bootstrap,
    Jackknife,
    Known,
}

/// Estimated asymptotic covariance of `sqrt(n) * delta_hat(w)`.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub matrix: DMatrix<f64>,
    pub rule: CompositionRule,
    pub source: CovSource,
    pub b_used: usize,
    /// Smallest eigenvalue before conditioning.
    pub min_eigenvalue: f64,
    /// Ridge added to the diagonal (zero when none was needed).
    pub ridge: f64,
}

impl CovEstimate {
    /// Wrap a known covariance matrix (no conditioning applied).
    pub fn known(matrix: DMatrix<f64>, rule: CompositionRule) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid("covariance must be square"));
        }
        Ok(CovEstimate {
            matrix,
            rule,
            source: CovSource::Known,
            b_used: 0,
            min_eigenvalue: f64::NAN,
            ridge: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Negative-Hessian and score-variance estimates for one group under a rule.
///
/// Both matrices refer to the unnormalized active-block sum of
/// sub-likelihoods, so that `Tr(H^{-1} J)` estimates the effective parameter
/// count `d_w` under correct specification.
#[derive(Debug, Clone)]
pub struct InformationEstimate {
    pub h_hat: DMatrix<f64>,
    pub j_hat: DMatrix<f64>,
    pub rule: CompositionRule,
}

impl InformationEstimate {
    /// Godambe sandwich `G = H J^{-1} H / n`.
    pub fn godambe(&self, n: usize) -> Result<DMatrix<f64>> {
        let lu = self.j_hat.clone().lu();
        let jinv_h = lu
            .solve(&self.h_hat)
            .ok_or_else(|| Error::Conditioning("J is singular".into()))?;
        Ok(&self.h_hat * jinv_h / n as f64)
    }
}

/// MCLE under `rule`: concatenation of the active per-block fits.
pub fn mcle(model: &dyn ModelSpec, sample: &GroupSample, rule: &CompositionRule) -> Result<DVector<f64>> {
    if rule.is_empty() {
        return Err(Error::invalid("mcle needs a nonempty rule"));
    }
    let mut out = Vec::with_capacity(model.layout().effective_dim(rule));
    for &k in rule.active() {
        out.extend(model.fit_sub(k, sample)?);
    }
    Ok(DVector::from_vec(out))
}

fn mcle_indexed(
    model: &dyn ModelSpec,
    sample: &GroupSample,
    idx: &[usize],
    rule: &CompositionRule,
) -> Result<DVector<f64>> {
    let mut out = Vec::with_capacity(model.layout().effective_dim(rule));
    for &k in rule.active() {
        out.extend(model.fit_sub_indexed(k, sample, idx)?);
    }
    Ok(DVector::from_vec(out))
}

/// Blockwise difference of the two group MCLEs.
pub fn delta_mcle(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    rule: &CompositionRule,
) -> Result<DeltaEstimate> {
    let t0 = mcle(model, s0, rule)?;
    let t1 = mcle(model, s1, rule)?;
    Ok(DeltaEstimate {
        values: t1 - t0,
        block_offsets: model.layout().restricted_offsets(rule),
        rule: rule.clone(),
        n0: s0.n(),
        n1: s1.n(),
    })
}

/// Symmetrize, record the smallest eigenvalue, and add a ridge when the
/// spectrum is too close to singular for a stable inverse.
fn condition(mut m: DMatrix<f64>) -> (DMatrix<f64>, f64, f64) {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let eig = m.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    let max_eig = eig.eigenvalues.max();
    let ridge = if min_eig <= RIDGE_REL * max_eig.max(0.0) {
        let trace = m.trace();
        let r = if trace > 0.0 {
            RIDGE_REL * trace / d as f64
        } else {
            RIDGE_ABS_FLOOR
        };
        for i in 0..d {
            m[(i, i)] += r;
        }
        r
    } else {
        0.0
    };
    (m, min_eig, ridge)
}

/// Draw within-group resampling indices for replicate `b`. The stream
/// depends only on `(seed, b)` and the group sizes, never on the rule, so
/// rule-restricted replicates are exact subvectors of full-rule replicates.
fn bootstrap_indices(seed_val: u64, b: usize, n0: usize, n1: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng_from(seed_val, &[role::BOOT, b as u64]);
    let idx0 = (0..n0).map(|_| rng.gen_range(0..n0)).collect();
    let idx1 = (0..n1).map(|_| rng.gen_range(0..n1)).collect();
    (idx0, idx1)
}

fn covariance_of_replicates(reps: &[DVector<f64>], scale: f64) -> DMatrix<f64> {
    let b = reps.len();
    let d = reps[0].len();
    let mut mean = DVector::zeros(d);
    for r in reps {
        mean += r;
    }
    mean /= b as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in reps {
        let c = r - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    // syger fills the lower triangle; mirror it
    for i in 0..d {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov * (scale / (b as f64 - 1.0))
}

/// Nonparametric bootstrap estimate of the covariance of `sqrt(n) delta_hat`,
/// resampling observations within each group. `n` is the pooled sample size.
pub fn bootstrap_cov(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    rule: &CompositionRule,
    b: usize,
    seed_val: u64,
) -> Result<CovEstimate> {
    if b < 2 {
        return Err(Error::invalid("bootstrap needs B >= 2"));
    }
    let n = (s0.n() + s1.n()) as f64;
    let mut reps = Vec::with_capacity(b);
    for rep in 0..b {
        let (idx0, idx1) = bootstrap_indices(seed_val, rep, s0.n(), s1.n());
        let t0 = mcle_indexed(model, s0, &idx0, rule)?;
        let t1 = mcle_indexed(model, s1, &idx1, rule)?;
        reps.push(t1 - t0);
    }
    let cov = covariance_of_replicates(&reps, n);
    let (matrix, min_eigenvalue, ridge) = condition(cov);
    Ok(CovEstimate {
        matrix,
        rule: rule.clone(),
        source: CovSource::Bootstrap,
        b_used: b,
        min_eigenvalue,
        ridge,
    })
}

/// Bootstrap covariance on an index view of pooled data: group `g` is the
/// rows `idx_g` of `pooled`. Replicate index streams are identical to
/// [`bootstrap_cov`], with positions mapped through the views.
pub fn bootstrap_cov_indexed(
    model: &dyn ModelSpec,
    pooled: &GroupSample,
    idx0: &[usize],
    idx1: &[usize],
    rule: &CompositionRule,
    b: usize,
    seed_val: u64,
) -> Result<CovEstimate> {
    if b < 2 {
        return Err(Error::invalid("bootstrap needs B >= 2"));
    }
    let n = (idx0.len() + idx1.len()) as f64;
    let mut reps = Vec::with_capacity(b);
    let mut mapped0 = vec![0usize; idx0.len()];
    let mut mapped1 = vec![0usize; idx1.len()];
    for rep in 0..b {
        let (pos0, pos1) = bootstrap_indices(seed_val, rep, idx0.len(), idx1.len());
        for (m, p) in mapped0.iter_mut().zip(&pos0) {
            *m = idx0[*p];
        }
        for (m, p) in mapped1.iter_mut().zip(&pos1) {
            *m = idx1[*p];
        }
        let t0 = mcle_indexed(model, pooled, &mapped0, rule)?;
        let t1 = mcle_indexed(model, pooled, &mapped1, rule)?;
        reps.push(t1 - t0);
    }
    let cov = covariance_of_replicates(&reps, n);
    let (matrix, min_eigenvalue, ridge) = condition(cov);
    Ok(CovEstimate {
        matrix,
        rule: rule.clone(),
        source: CovSource::Bootstrap,
        b_used: b,
        min_eigenvalue,
        ridge,
    })
}

/// MCLE difference on an index view of pooled data.
pub fn delta_mcle_indexed(
    model: &dyn ModelSpec,
    pooled: &GroupSample,
    idx0: &[usize],
    idx1: &[usize],
    rule: &CompositionRule,
) -> Result<DeltaEstimate> {
    let t0 = mcle_indexed(model, pooled, idx0, rule)?;
    let t1 = mcle_indexed(model, pooled, idx1, rule)?;
    Ok(DeltaEstimate {
        values: t1 - t0,
        block_offsets: model.layout().restricted_offsets(rule),
        rule: rule.clone(),
        n0: idx0.len(),
        n1: idx1.len(),
    })
}

/// Delete-one grouped jackknife estimate of the covariance of
/// `sqrt(n) delta_hat`.
pub fn jackknife_cov(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    rule: &CompositionRule,
) -> Result<CovEstimate> {
    if s0.n() < 2 || s1.n() < 2 {
        return Err(Error::invalid("jackknife needs at least 2 observations per group"));
    }
    let n = (s0.n() + s1.n()) as f64;
    let d = model.layout().effective_dim(rule);
    let full0 = mcle(model, s0, rule)?;
    let full1 = mcle(model, s1, rule)?;
    let mut cov = DMatrix::zeros(d, d);
    for (g, (sample, other_theta)) in [(s0, &full1), (s1, &full0)].into_iter().enumerate() {
        let ng = sample.n();
        let mut reps = Vec::with_capacity(ng);
        let mut idx: Vec<usize> = (0..ng).collect();
        for leave in 0..ng {
            idx.clear();
            idx.extend((0..ng).filter(|&i| i != leave));
            let t = mcle_indexed(model, sample, &idx, rule)?;
            // delta with the other group's full-sample estimate held fixed
            let delta = if g == 0 { other_theta - &t } else { &t - other_theta };
            reps.push(delta);
        }
        let mut mean = DVector::zeros(d);
        for r in &reps {
            mean += r;
        }
        mean /= ng as f64;
        let mut acc = DMatrix::zeros(d, d);
        for r in &reps {
            let c = r - &mean;
            acc.syger(1.0, &c, &c, 1.0);
        }
        for i in 0..d {
            for j in 0..i {
                acc[(j, i)] = acc[(i, j)];
            }
        }
        cov += acc * ((ng as f64 - 1.0) / ng as f64);
    }
    cov *= n;
    let (matrix, min_eigenvalue, ridge) = condition(cov);
    Ok(CovEstimate {
        matrix,
        rule: rule.clone(),
        source: CovSource::Jackknife,
        b_used: s0.n() + s1.n(),
        min_eigenvalue,
        ridge,
    })
}

/// Total unnormalized composite score at `theta` (stacked active blocks).
fn total_score(
    model: &dyn ModelSpec,
    sample: &GroupSample,
    theta: &[f64],
    rule: &CompositionRule,
) -> Result<DVector<f64>> {
    let layout = model.layout();
    let offsets = layout.restricted_offsets(rule);
    let d = layout.effective_dim(rule);
    let mut total = DVector::zeros(d);
    for (pos, &k) in rule.active().iter().enumerate() {
        let dim = layout.block_dim(k);
        let theta_k = &theta[offsets[pos]..offsets[pos] + dim];
        for obs in 0..sample.n() {
            let sc = model.score_sub(k, theta_k, sample, obs)?;
            for (t, &v) in sc.iter().enumerate() {
                total[offsets[pos] + t] += v;
            }
        }
    }
    Ok(total)
}

/// Hessian and score-variance estimates at the group MCLE.
///
/// The negative Hessian is obtained by central finite differences of the
/// analytic score (relative step `1e-5`); the score variance is `n` times the
/// empirical covariance of the per-observation score contributions.
pub fn estimate_information(
    model: &dyn ModelSpec,
    sample: &GroupSample,
    theta_hat: &[f64],
    rule: &CompositionRule,
) -> Result<InformationEstimate> {
    let layout = model.layout();
    let d = layout.effective_dim(rule);
    if theta_hat.len() != d {
        return Err(Error::invalid("theta_hat has wrong dimension"));
    }
    let offsets = layout.restricted_offsets(rule);

    // H via central differences of the total score
    let mut h = DMatrix::zeros(d, d);
    let mut theta = theta_hat.to_vec();
    for j in 0..d {
        let hj = 1e-5 * theta_hat[j].abs().max(1.0);
        theta[j] = theta_hat[j] + hj;
        let up = total_score(model, sample, &theta, rule)?;
        theta[j] = theta_hat[j] - hj;
        let dn = total_score(model, sample, &theta, rule)?;
        theta[j] = theta_hat[j];
        for i in 0..d {
            let v = (up[i] - dn[i]) / (2.0 * hj);
            if !v.is_finite() {
                return Err(Error::NumericDomain {
                    index: j,
                    message: "non-finite score derivative".into(),
                });
            }
            h[(i, j)] = -v;
        }
    }
    // symmetrize
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }

    // J = n * empirical covariance of per-observation scores
    let n = sample.n();
    let mut scores: Vec<DVector<f64>> = Vec::with_capacity(n);
    for obs in 0..n {
        let mut psi = DVector::zeros(d);
        for (pos, &k) in rule.active().iter().enumerate() {
            let dim = layout.block_dim(k);
            let theta_k = &theta_hat[offsets[pos]..offsets[pos] + dim];
            let sc = model.score_sub(k, theta_k, sample, obs)?;
            for (t, &v) in sc.iter().enumerate() {
                psi[offsets[pos] + t] = v;
            }
        }
        scores.push(psi);
    }
    let j_hat = covariance_of_replicates(&scores, n as f64);

    Ok(InformationEstimate {
        h_hat: h,
        j_hat,
        rule: rule.clone(),
    })
}
