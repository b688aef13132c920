//! Forward step-up search over composition rules.
//!
//! Starting from the empty rule, each step evaluates every inactive
//! candidate `i` through the Wald quadratic form
//! `lambda_i = n delta(w + i)' V(w + i)^{-1} delta(w + i)` and adds the
//! maximizer. After `N_cl*` steps the final quadratic form is the test
//! statistic. In shared-covariance mode all `V(w)` are principal submatrices
//! of one full-rule estimate, which is identical to re-estimating per rule
//! for disjoint-block models and keeps the trajectory exactly monotone.

use crate::error::{Error, Result};
use crate::estimate::{bootstrap_cov, delta_mcle, CovEstimate, DeltaEstimate};
use crate::model::{GroupSample, ModelSpec};
use crate::rule::{CompositionRule, ParamLayout};
use crate::stats::{quad_form, Method, NullSource, TestResult};
use nalgebra::{DMatrix, DVector};

/// Relative difference below which two candidate scores count as tied.
const TIE_REL_TOL: f64 = 1e-12;

/// Covariance estimation strategy for the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMode {
    /// One full-rule bootstrap; submatrices serve every candidate rule.
    Shared,
    /// Re-estimate the covariance for every candidate rule.
    PerRule,
}

/// One step of the forward search.
#[derive(Debug, Clone)]
pub struct SearchStep {
    /// Index added at this step.
    pub chosen: usize,
    /// `(candidate index, lambda)` for every candidate evaluated, in index order.
    pub lambdas: Vec<(usize, f64)>,
    /// Statistic after the step (lambda of the chosen candidate).
    pub statistic: f64,
    /// Whether the argmax was tied within the declared tolerance.
    pub tie: bool,
}

/// Full record of a forward search.
#[derive(Debug, Clone)]
pub struct SearchTrajectory {
    pub steps: Vec<SearchStep>,
    pub final_rule: CompositionRule,
    /// Number of candidate quadratic-form evaluations performed.
    pub mcle_evals: usize,
}

impl SearchTrajectory {
    /// Statistic after step `t` (1-based), i.e. the FS-CL statistic for
    /// `N_cl* = t` along this path.
    pub fn statistic_at(&self, t: usize) -> f64 {
        self.steps[t - 1].statistic
    }

    /// Rule after step `t` (1-based).
    pub fn rule_at(&self, t: usize) -> CompositionRule {
        let idx: Vec<usize> = self.steps[..t].iter().map(|s| s.chosen).collect();
        CompositionRule::make_rule(&idx, self.final_rule.n_sub()).expect("valid prefix rule")
    }
}

/// Supplies `V(w)` for candidate rules during the search.
pub trait CovProvider {
    fn cov_for(&self, rule: &CompositionRule) -> Result<DMatrix<f64>>;
}

/// Principal-submatrix extraction from one full-rule covariance.
pub struct SharedCov<'a> {
    pub full: &'a DMatrix<f64>,
    pub layout: &'a ParamLayout,
}

impl CovProvider for SharedCov<'_> {
    fn cov_for(&self, rule: &CompositionRule) -> Result<DMatrix<f64>> {
        let coords = self.layout.active_coords(rule);
        let mut sub = DMatrix::zeros(coords.len(), coords.len());
        for (i, &ci) in coords.iter().enumerate() {
            for (j, &cj) in coords.iter().enumerate() {
                sub[(i, j)] = self.full[(ci, cj)];
            }
        }
        Ok(sub)
    }
}

struct PerRuleCov<'a> {
    model: &'a dyn ModelSpec,
    s0: &'a GroupSample,
    s1: &'a GroupSample,
    b: usize,
    seed: u64,
}

impl CovProvider for PerRuleCov<'_> {
    fn cov_for(&self, rule: &CompositionRule) -> Result<DMatrix<f64>> {
        Ok(bootstrap_cov(self.model, self.s0, self.s1, rule, self.b, self.seed)?.matrix)
    }
}

fn restrict(delta_full: &DVector<f64>, layout: &ParamLayout, rule: &CompositionRule) -> DVector<f64> {
    let coords = layout.active_coords(rule);
    DVector::from_iterator(coords.len(), coords.iter().map(|&c| delta_full[c]))
}

/// Run the forward search for `n_max` steps given the full-rule MCLE
/// difference. Returns the trajectory and the final statistic.
pub fn forward_search(
    delta_full: &DVector<f64>,
    layout: &ParamLayout,
    n_mult: f64,
    n_max: usize,
    provider: &dyn CovProvider,
) -> Result<(SearchTrajectory, f64)> {
    let n_sub = layout.n_blocks();
    if n_max == 0 || n_max > n_sub {
        return Err(Error::invalid(format!(
            "n_max must be in 1..={n_sub}, got {n_max}"
        )));
    }
    if delta_full.len() != layout.total_dim() {
        return Err(Error::invalid("delta must cover the full layout"));
    }

    let mut rule = CompositionRule::empty(n_sub);
    let mut steps = Vec::with_capacity(n_max);
    let mut evals = 0usize;
    for _ in 0..n_max {
        let mut lambdas = Vec::with_capacity(n_sub - rule.size());
        let mut best: Option<(usize, f64)> = None;
        let mut tie = false;
        for i in 0..n_sub {
            if rule.is_active(i) {
                continue;
            }
            let cand = rule.augment(i)?;
            let d = restrict(delta_full, layout, &cand);
            let v = provider.cov_for(&cand)?;
            let lambda = quad_form(&d, &v, n_mult)?;
            evals += 1;
            lambdas.push((i, lambda));
            match best {
                None => best = Some((i, lambda)),
                Some((_, best_l)) => {
                    let scale = best_l.abs().max(lambda.abs()).max(f64::MIN_POSITIVE);
                    if (lambda - best_l).abs() <= TIE_REL_TOL * scale {
                        tie = true; // smallest index keeps the win
                    } else if lambda > best_l {
                        best = Some((i, lambda));
                    }
                }
            }
        }
        let (chosen, statistic) = best.expect("at least one candidate");
        rule = rule.augment(chosen)?;
        steps.push(SearchStep {
            chosen,
            lambdas,
            statistic,
            tie,
        });
    }

    let final_stat = steps.last().expect("n_max >= 1").statistic;
    Ok((
        SearchTrajectory {
            steps,
            final_rule: rule,
            mcle_evals: evals,
        },
        final_stat,
    ))
}

fn result_from(trajectory: &SearchTrajectory, layout: &ParamLayout, statistic: f64) -> TestResult {
    TestResult {
        method: Method::Fscl,
        statistic,
        rule: trajectory.final_rule.clone(),
        d_w: layout.effective_dim(&trajectory.final_rule),
        p_value: None,
        null_source: NullSource::Pending,
        alpha: None,
    }
}

/// Forward step-up composite likelihood test statistic from data.
///
/// Fits the full-rule MCLE difference, estimates the covariance by
/// nonparametric bootstrap (shared or per-rule per `cov_mode`) and runs the
/// search for `n_max` steps. The returned result carries no p-value; attach
/// one from a permutation null or, when the independence premise holds, the
/// ordered-gamma null.
pub fn fscl_search(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    n_max: usize,
    cov_mode: CovMode,
    b: usize,
    seed: u64,
) -> Result<(SearchTrajectory, TestResult)> {
    let full = CompositionRule::full(model.n_sub());
    let delta = delta_mcle(model, s0, s1, &full)?;
    let layout = model.layout();
    let n_mult = delta.pooled_n() as f64;
    let (trajectory, stat) = match cov_mode {
        CovMode::Shared => {
            let cov = bootstrap_cov(model, s0, s1, &full, b, seed)?;
            let provider = SharedCov {
                full: &cov.matrix,
                layout,
            };
            forward_search(&delta.values, layout, n_mult, n_max, &provider)?
        }
        CovMode::PerRule => {
            let provider = PerRuleCov {
                model,
                s0,
                s1,
                b,
                seed,
            };
            forward_search(&delta.values, layout, n_mult, n_max, &provider)?
        }
    };
    let result = result_from(&trajectory, layout, stat);
    Ok((trajectory, result))
}

/// Forward search with a known covariance of `sqrt(n) delta`, for settings
/// where the sampling distribution of the MCLE is given rather than
/// estimated. `delta_full` is interpreted on the same scale as the
/// covariance, with `n_mult` the multiplier of the quadratic form.
pub fn fscl_search_known(
    delta_full: &DVector<f64>,
    v_full: &DMatrix<f64>,
    layout: &ParamLayout,
    n_mult: f64,
    n_max: usize,
) -> Result<(SearchTrajectory, TestResult)> {
    let provider = SharedCov {
        full: v_full,
        layout,
    };
    let (trajectory, stat) = forward_search(delta_full, layout, n_mult, n_max, &provider)?;
    let result = result_from(&trajectory, layout, stat);
    Ok((trajectory, result))
}

/// Wald statistic computed against the same shared covariance used by the
/// search, so the full-path collapse identity holds exactly.
pub fn wald_from_shared(
    delta: &DeltaEstimate,
    cov: &CovEstimate,
) -> Result<TestResult> {
    crate::stats::wald_stat(delta, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Group;
    use crate::models::{GaussianMeanModel, Grouping};
    use crate::stats::{uminp_stat, wald_stat};

    fn toy_layout(n: usize, p: usize) -> ParamLayout {
        ParamLayout::disjoint(vec![p; n]).unwrap()
    }

    #[test]
    fn known_cov_search_orders_by_signal() {
        let layout = toy_layout(4, 1);
        let delta = DVector::from_column_slice(&[0.1, 3.0, 1.0, 0.2]);
        let v = DMatrix::identity(4, 4);
        let (traj, res) = fscl_search_known(&delta, &v, &layout, 1.0, 2).unwrap();
        assert_eq!(traj.steps[0].chosen, 1);
        assert_eq!(traj.steps[1].chosen, 2);
        assert!((res.statistic - (9.0 + 1.0)).abs() < 1e-12);
        assert_eq!(traj.mcle_evals, 4 + 3);
    }

    #[test]
    fn eval_count_matches_bound() {
        let layout = toy_layout(20, 1);
        let delta = DVector::from_fn(20, |i, _| (i as f64 * 0.37).sin());
        let v = DMatrix::identity(20, 20);
        for n_max in [1usize, 5, 10, 20] {
            let (traj, _) = fscl_search_known(&delta, &v, &layout, 1.0, n_max).unwrap();
            let bound = n_max as f64 * (20.0 - 0.5 * (n_max as f64 - 1.0));
            assert_eq!(traj.mcle_evals as f64, bound);
        }
    }

    #[test]
    fn trajectory_is_monotone_under_shared_cov() {
        let layout = toy_layout(6, 1);
        let delta = DVector::from_column_slice(&[0.5, -1.2, 0.3, 2.0, -0.1, 0.9]);
        let mut v = DMatrix::identity(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    v[(i, j)] = 0.3 / (1.0 + (i as f64 - j as f64).abs());
                }
            }
        }
        let (traj, _) = fscl_search_known(&delta, &v, &layout, 2.0, 6).unwrap();
        for w in traj.steps.windows(2) {
            assert!(w[1].statistic >= w[0].statistic - 1e-10);
        }
    }

    #[test]
    fn tie_break_prefers_smallest_index() {
        let layout = toy_layout(3, 1);
        let delta = DVector::from_column_slice(&[1.0, 1.0, 0.5]);
        let v = DMatrix::identity(3, 3);
        let (traj, _) = fscl_search_known(&delta, &v, &layout, 1.0, 1).unwrap();
        assert_eq!(traj.steps[0].chosen, 0);
        assert!(traj.steps[0].tie);
    }

    #[test]
    fn index_relabeling_permutes_selection() {
        let layout = toy_layout(4, 1);
        let delta = DVector::from_column_slice(&[0.1, 3.0, 1.0, 0.2]);
        let v = DMatrix::identity(4, 4);
        let (t1, _) = fscl_search_known(&delta, &v, &layout, 1.0, 2).unwrap();
        // swap blocks 1 and 3
        let delta2 = DVector::from_column_slice(&[0.1, 0.2, 1.0, 3.0]);
        let (t2, _) = fscl_search_known(&delta2, &v, &layout, 1.0, 2).unwrap();
        let sel1: Vec<usize> = t1.steps.iter().map(|s| s.chosen).collect();
        let sel2: Vec<usize> = t2.steps.iter().map(|s| s.chosen).collect();
        assert_eq!(sel1, vec![1, 2]);
        assert_eq!(sel2, vec![3, 2]);
    }

    #[test]
    fn full_path_collapses_to_wald_and_first_step_to_uminp_squared() {
        let m = GaussianMeanModel::isotropic(5, 4.0, Grouping::Marginal).unwrap();
        let s0 = m.simulate(&[0.0; 5], 40, Group::Control, 1).unwrap();
        let s1 = m
            .simulate(&[0.8, 0.0, 0.0, 0.0, 0.0], 40, Group::Case, 2)
            .unwrap();
        let full = CompositionRule::full(5);
        let delta = delta_mcle(&m, &s0, &s1, &full).unwrap();
        let cov = bootstrap_cov(&m, &s0, &s1, &full, 300, 9).unwrap();

        let provider = SharedCov {
            full: &cov.matrix,
            layout: m.layout(),
        };
        let (traj, _) = forward_search(
            &delta.values,
            m.layout(),
            delta.pooled_n() as f64,
            5,
            &provider,
        )
        .unwrap();

        let wald = wald_stat(&delta, &cov).unwrap();
        let rel = (traj.statistic_at(5) - wald.statistic).abs() / wald.statistic;
        assert!(rel < 1e-10, "collapse to Wald: rel {rel}");

        let uminp = uminp_stat(&delta, &cov).unwrap();
        let rel =
            (traj.statistic_at(1) - uminp.statistic * uminp.statistic).abs() / traj.statistic_at(1);
        assert!(rel < 1e-10, "first step vs UminP^2: rel {rel}");
    }

    #[test]
    fn shared_and_per_rule_agree_on_disjoint_blocks() {
        let m = GaussianMeanModel::isotropic(4, 1.0, Grouping::Marginal).unwrap();
        let s0 = m.simulate(&[0.0; 4], 30, Group::Control, 5).unwrap();
        let s1 = m.simulate(&[0.5, 0.0, 0.3, 0.0], 30, Group::Case, 6).unwrap();
        let (ta, ra) = fscl_search(&m, &s0, &s1, 3, CovMode::Shared, 120, 77).unwrap();
        let (tb, rb) = fscl_search(&m, &s0, &s1, 3, CovMode::PerRule, 120, 77).unwrap();
        let sel_a: Vec<usize> = ta.steps.iter().map(|s| s.chosen).collect();
        let sel_b: Vec<usize> = tb.steps.iter().map(|s| s.chosen).collect();
        assert_eq!(sel_a, sel_b);
        assert!((ra.statistic - rb.statistic).abs() < 1e-10 * ra.statistic.abs().max(1.0));
    }
}
