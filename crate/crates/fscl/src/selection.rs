//! Complexity selection over the forward path via the composite-likelihood
//! information criterion and its induced posterior.

use crate::error::{Error, Result};
use crate::estimate::{bootstrap_cov, delta_mcle, estimate_information, mcle, InformationEstimate};
use crate::model::{composite_loglik, GroupSample, ModelSpec};
use crate::rule::CompositionRule;
use crate::search::{forward_search, CovMode, SearchTrajectory, SharedCov};

/// Effective degrees of freedom `Tr(H^{-1} J)`.
pub fn effective_dof(info: &InformationEstimate) -> Result<f64> {
    let lu = info.h_hat.clone().lu();
    let sol = lu
        .solve(&info.j_hat)
        .ok_or_else(|| Error::Conditioning("H is singular".into()))?;
    Ok(sol.trace())
}

/// Two-sample information criterion for a composition rule:
/// `-2 {l0(theta0_hat; w) + l1(theta1_hat; w)} + log10(n) {p*_0 + p*_1}`
/// with group-specific MCLEs, pooled `n`, and effective degrees of freedom
/// from the group information matrices.
pub fn cl_bic_two_sample(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    rule: &CompositionRule,
) -> Result<f64> {
    let (value, _) = cl_bic_parts(model, s0, s1, rule)?;
    Ok(value)
}

/// Criterion value together with the summed effective degrees of freedom.
pub fn cl_bic_parts(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    rule: &CompositionRule,
) -> Result<(f64, f64)> {
    if rule.is_empty() {
        return Err(Error::invalid("rule must be nonempty"));
    }
    let n = (s0.n() + s1.n()) as f64;
    let mut loglik = 0.0;
    let mut dof = 0.0;
    for sample in [s0, s1] {
        let theta = mcle(model, sample, rule)?;
        loglik += composite_loglik(model, sample, theta.as_slice(), rule)?;
        let info = estimate_information(model, sample, theta.as_slice(), rule)?;
        dof += effective_dof(&info)?;
    }
    Ok((-2.0 * loglik + n.log10() * dof, dof))
}

/// One step of the selection path.
#[derive(Debug, Clone)]
pub struct ClBicEntry {
    pub rule: CompositionRule,
    pub cl_bic: f64,
    /// `p*_0 + p*_1` at this rule.
    pub dof_sum: f64,
    pub posterior: f64,
}

/// Criterion values along the nested forward path with the posterior over
/// the complexity parameter and its maximum a posteriori choice.
#[derive(Debug, Clone)]
pub struct CLBicPath {
    pub entries: Vec<ClBicEntry>,
    /// MAP complexity (1-based step count; ties resolve to the smallest).
    pub map_choice: usize,
    pub trajectory: SearchTrajectory,
}

impl CLBicPath {
    pub fn posterior(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.posterior).collect()
    }
}

/// Softmax of `-values` with log-domain stabilization.
pub(crate) fn stabilized_posterior(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = values.iter().map(|v| (-(v - min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Run the forward search to the full path and evaluate the criterion at
/// every prefix. Prefix rules are nested, so a single pass suffices.
pub fn select_ncl(
    model: &dyn ModelSpec,
    s0: &GroupSample,
    s1: &GroupSample,
    cov_mode: CovMode,
    b: usize,
    seed: u64,
) -> Result<CLBicPath> {
    let n_sub = model.n_sub();
    let full = CompositionRule::full(n_sub);
    let delta = delta_mcle(model, s0, s1, &full)?;
    let n_mult = delta.pooled_n() as f64;
    let trajectory = match cov_mode {
        CovMode::Shared => {
            let cov = bootstrap_cov(model, s0, s1, &full, b, seed)?;
            let provider = SharedCov {
                full: &cov.matrix,
                layout: model.layout(),
            };
            forward_search(&delta.values, model.layout(), n_mult, n_sub, &provider)?.0
        }
        CovMode::PerRule => {
            return Err(Error::invalid(
                "per-rule covariance is not supported for path selection",
            ))
        }
    };

    let mut values = Vec::with_capacity(n_sub);
    let mut dofs = Vec::with_capacity(n_sub);
    for t in 1..=n_sub {
        let rule = trajectory.rule_at(t);
        let (v, dof) = cl_bic_parts(model, s0, s1, &rule)?;
        values.push(v);
        dofs.push(dof);
    }
    let posterior = stabilized_posterior(&values);
    let mut map_choice = 1usize;
    for t in 2..=n_sub {
        if values[t - 1] < values[map_choice - 1] {
            map_choice = t;
        }
    }
    let entries = (0..n_sub)
        .map(|i| ClBicEntry {
            rule: trajectory.rule_at(i + 1),
            cl_bic: values[i],
            dof_sum: dofs[i],
            posterior: posterior[i],
        })
        .collect();
    Ok(CLBicPath {
        entries,
        map_choice,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Group;
    use crate::models::{LatentCategoricalModel, QuantileParams};
    use nalgebra::DMatrix;

    #[test]
    fn effective_dof_identities() {
        let rule = CompositionRule::full(3);
        let info = InformationEstimate {
            h_hat: DMatrix::identity(3, 3),
            j_hat: DMatrix::identity(3, 3),
            rule: rule.clone(),
        };
        assert!((effective_dof(&info).unwrap() - 3.0).abs() < 1e-14);

        let info = InformationEstimate {
            h_hat: DMatrix::identity(2, 2) * 2.0,
            j_hat: DMatrix::identity(2, 2),
            rule: CompositionRule::full(2),
        };
        assert!((effective_dof(&info).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn posterior_is_shift_invariant_and_normalized() {
        // dyadic values and shift so the additions round nowhere; the
        // min-subtraction then cancels the shift bitwise
        let v = vec![431.75, 440.5, 449.125];
        let p1 = stabilized_posterior(&v);
        let shifted: Vec<f64> = v.iter().map(|x| x + 128.0).collect();
        let p2 = stabilized_posterior(&shifted);
        assert_eq!(p1, p2);
        let sum: f64 = p1.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        // non-dyadic shifts agree to rounding
        let p3 = stabilized_posterior(&v.iter().map(|x| x + 123.4).collect::<Vec<_>>());
        for (a, b) in p1.iter().zip(&p3) {
            assert!((a - b).abs() < 1e-12);
        }

        let flat = stabilized_posterior(&[5.0, 5.0, 5.0, 5.0]);
        for w in &flat {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn select_prefers_single_informative_block() {
        let model = LatentCategoricalModel::identity(4, 3).unwrap();
        let g0 = QuantileParams::repeated(vec![-0.3, 0.3], 4).unwrap();
        let mut rows1 = g0.rows().to_vec();
        rows1[0] = vec![-0.9, 0.9];
        let g1 = QuantileParams::new(rows1).unwrap();
        let s0 = model.simulate(&g0, 150, Group::Control, 31).unwrap();
        let s1 = model.simulate(&g1, 150, Group::Case, 32).unwrap();
        let path = select_ncl(&model, &s0, &s1, CovMode::Shared, 150, 77).unwrap();
        assert_eq!(path.map_choice, 1);
        assert_eq!(path.trajectory.steps[0].chosen, 0);
        // nested path: each rule extends the previous by one index
        for t in 1..path.entries.len() {
            let prev = &path.entries[t - 1].rule;
            let cur = &path.entries[t].rule;
            assert_eq!(cur.size(), prev.size() + 1);
            for &i in prev.active() {
                assert!(cur.is_active(i));
            }
        }
        let total: f64 = path.posterior().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cl_bic_termwise_decomposition() {
        let model = LatentCategoricalModel::identity(3, 3).unwrap();
        let g = QuantileParams::repeated(vec![-0.3, 0.3], 3).unwrap();
        let s0 = model.simulate(&g, 80, Group::Control, 1).unwrap();
        let s1 = model.simulate(&g, 80, Group::Case, 2).unwrap();
        let rule = CompositionRule::make_rule(&[1], 3).unwrap();
        let (v, dof) = cl_bic_parts(&model, &s0, &s1, &rule).unwrap();
        // recompute termwise with the public pieces
        let mut loglik = 0.0;
        let mut dof2 = 0.0;
        for s in [&s0, &s1] {
            let theta = mcle(&model, s, &rule).unwrap();
            loglik += composite_loglik(&model, s, theta.as_slice(), &rule).unwrap();
            let info = estimate_information(&model, s, theta.as_slice(), &rule).unwrap();
            dof2 += effective_dof(&info).unwrap();
        }
        let expect = -2.0 * loglik + 160f64.log10() * dof2;
        assert!((v - expect).abs() < 1e-10);
        assert!((dof - dof2).abs() < 1e-12);
        // determinism
        let (v2, _) = cl_bic_parts(&model, &s0, &s1, &rule).unwrap();
        assert_eq!(v, v2);
    }
}
