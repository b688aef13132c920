//! Independent Gaussian means with known variance.
//!
//! Coordinates are grouped into sub-likelihoods either one per coordinate
//! (marginal) or two per coordinate pair (paired blocks). The block MCLE is
//! the per-coordinate sample mean since the variance is known.

use crate::error::{Error, Result};
use crate::model::{Group, GroupSample, ModelSpec};
use crate::rule::ParamLayout;
use crate::seed;
use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Assignment of data coordinates to sub-likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// One coordinate per sub-likelihood, `N_cl = d`.
    Marginal,
    /// Consecutive coordinate pairs, `N_cl = d / 2`.
    PairedBlocks,
}

#[derive(Debug, Clone)]
pub struct GaussianMeanModel {
    d: usize,
    sigma2: Vec<f64>,
    grouping: Grouping,
    layout: ParamLayout,
}

impl GaussianMeanModel {
    pub fn new(d: usize, sigma2: Vec<f64>, grouping: Grouping) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if sigma2.len() != d {
            return Err(Error::invalid("sigma2 must have one entry per coordinate"));
        }
        if sigma2.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("sigma2 must be positive elementwise"));
        }
        if grouping == Grouping::PairedBlocks && d % 2 != 0 {
            return Err(Error::invalid("paired blocks need an even dimension"));
        }
        let block_dims = match grouping {
            Grouping::Marginal => vec![1; d],
            Grouping::PairedBlocks => vec![2; d / 2],
        };
        Ok(GaussianMeanModel {
            d,
            sigma2,
            grouping,
            layout: ParamLayout::disjoint(block_dims)?,
        })
    }

    /// Convenience constructor with a common variance.
    pub fn isotropic(d: usize, sigma2: f64, grouping: Grouping) -> Result<Self> {
        Self::new(d, vec![sigma2; d], grouping)
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    fn block_coords(&self, k: usize) -> std::ops::Range<usize> {
        match self.grouping {
            Grouping::Marginal => k..k + 1,
            Grouping::PairedBlocks => 2 * k..2 * k + 2,
        }
    }

    /// Simulate `n` independent rows with the given mean vector.
    pub fn simulate(&self, mean: &[f64], n: usize, group: Group, seed_val: u64) -> Result<GroupSample> {
        if mean.len() != self.d {
            return Err(Error::invalid("mean length must equal dimension"));
        }
        let mut rng = seed::rng_from(seed_val, &[seed::role::DATA]);
        let mut data = DMatrix::zeros(n, self.d);
        for i in 0..n {
            for j in 0..self.d {
                let dist = Normal::new(mean[j], self.sigma2[j].sqrt()).unwrap();
                data[(i, j)] = dist.sample(&mut rng);
            }
        }
        GroupSample::new(data, group)
    }
}

impl ModelSpec for GaussianMeanModel {
    fn n_sub(&self) -> usize {
        self.layout.n_blocks()
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn data_dim(&self) -> usize {
        self.d
    }

    fn fit_sub(&self, k: usize, sample: &GroupSample) -> Result<Vec<f64>> {
        if sample.n() == 0 {
            return Err(Error::invalid("empty sample"));
        }
        let n = sample.n() as f64;
        Ok(self
            .block_coords(k)
            .map(|c| sample.column(c).iter().sum::<f64>() / n)
            .collect())
    }

    fn fit_sub_indexed(&self, k: usize, sample: &GroupSample, idx: &[usize]) -> Result<Vec<f64>> {
        if idx.is_empty() {
            return Err(Error::invalid("empty index set"));
        }
        let n = idx.len() as f64;
        Ok(self
            .block_coords(k)
            .map(|c| {
                let col = sample.column(c);
                idx.iter().map(|&i| col[i]).sum::<f64>() / n
            })
            .collect())
    }

    fn loglik_sub(&self, k: usize, theta_k: &[f64], sample: &GroupSample) -> Result<f64> {
        let coords: Vec<usize> = self.block_coords(k).collect();
        if theta_k.len() != coords.len() {
            return Err(Error::invalid("theta block has wrong dimension"));
        }
        let mut acc = 0.0;
        for (t, &c) in theta_k.iter().zip(&coords) {
            let v = self.sigma2[c];
            let col = sample.column(c);
            let ss: f64 = col.iter().map(|&y| (y - t) * (y - t)).sum();
            acc += -0.5 * (sample.n() as f64) * (LN_2PI + v.ln()) - 0.5 * ss / v;
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
        let coords: Vec<usize> = self.block_coords(k).collect();
        Ok(coords
            .iter()
            .zip(theta_k)
            .map(|(&c, &t)| (sample.value(obs, c) - t) / self.sigma2[c])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::composite_loglik;
    use crate::rule::CompositionRule;

    fn sample_from_rows(rows: &[&[f64]]) -> GroupSample {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        GroupSample::new(DMatrix::from_row_slice(rows.len(), d, &flat), Group::Control).unwrap()
    }

    #[test]
    fn fit_is_column_mean() {
        let m = GaussianMeanModel::isotropic(2, 1.0, Grouping::Marginal).unwrap();
        let s = sample_from_rows(&[&[1.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(m.fit_sub(0, &s).unwrap(), vec![2.0]);
        assert_eq!(m.fit_sub(1, &s).unwrap(), vec![0.0]);
    }

    #[test]
    fn fit_matches_direct_mean_oracle() {
        let m = GaussianMeanModel::isotropic(1, 9.0, Grouping::Marginal).unwrap();
        let s = m.simulate(&[0.5], 18, Group::Control, 99).unwrap();
        // independent summation oracle
        let mut acc = 0.0;
        for i in 0..s.n() {
            acc += s.value(i, 0);
        }
        let oracle = acc / 18.0;
        assert!((m.fit_sub(0, &s).unwrap()[0] - oracle).abs() < 1e-14);
    }

    #[test]
    fn single_marginal_loglik_matches_direct_normal_pdf() {
        // sample {0, 2}, theta = 1, sigma2 = 9
        let m = GaussianMeanModel::isotropic(1, 9.0, Grouping::Marginal).unwrap();
        let s = sample_from_rows(&[&[0.0], &[2.0]]);
        let rule = CompositionRule::full(1);
        let got = composite_loglik(&m, &s, &[1.0], &rule).unwrap();
        let direct: f64 = [0.0f64, 2.0]
            .iter()
            .map(|&y| -0.5 * (LN_2PI + 9f64.ln()) - 0.5 * (y - 1.0) * (y - 1.0) / 9.0)
            .sum();
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn composite_loglik_is_mean_of_blocks() {
        let m = GaussianMeanModel::isotropic(2, 1.0, Grouping::Marginal).unwrap();
        let s = sample_from_rows(&[&[0.1, -0.4], &[0.8, 0.3], &[-0.2, 0.6]]);
        let full = CompositionRule::full(2);
        let l0 = m.loglik_sub(0, &[0.2], &s).unwrap();
        let l1 = m.loglik_sub(1, &[0.1], &s).unwrap();
        let cl = composite_loglik(&m, &s, &[0.2, 0.1], &full).unwrap();
        assert!((cl - 0.5 * (l0 + l1)).abs() < 1e-12);
    }

    #[test]
    fn mcle_under_rule_is_subvector_of_full() {
        let m = GaussianMeanModel::isotropic(4, 2.0, Grouping::PairedBlocks).unwrap();
        let s = sample_from_rows(&[&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 5.0, 0.0]]);
        let f0 = m.fit_sub(0, &s).unwrap();
        let f1 = m.fit_sub(1, &s).unwrap();
        assert_eq!(f0, vec![1.5, 1.5]);
        assert_eq!(f1, vec![4.0, 2.0]);
    }
}
