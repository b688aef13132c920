//! Composition rules and parameter layout bookkeeping.
//!
//! A composition rule is a binary weight vector over the `N_cl` candidate
//! sub-likelihoods; the active set lists the indices with weight one.
//! `ParamLayout` maps sub-likelihood parameter blocks into the stacked
//! parameter vector and computes effective dimensions under a rule.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Binary weight vector selecting which sub-likelihoods enter the composite
/// likelihood. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompositionRule {
    weights: Vec<bool>,
    active: Vec<usize>,
}

impl CompositionRule {
    /// Rule with exactly the given indices active.
    ///
    /// Errors if any index is out of range or duplicated.
    pub fn make_rule(active_indices: &[usize], n_sub: usize) -> Result<Self> {
        if n_sub == 0 {
            return Err(Error::invalid("n_sub must be at least 1"));
        }
        let mut weights = vec![false; n_sub];
        for &i in active_indices {
            if i >= n_sub {
                return Err(Error::invalid(format!(
                    "index {i} out of range for {n_sub} sub-likelihoods"
                )));
            }
            if weights[i] {
                return Err(Error::invalid(format!("duplicate index {i}")));
            }
            weights[i] = true;
        }
        let active = (0..n_sub).filter(|&i| weights[i]).collect();
        Ok(CompositionRule { weights, active })
    }

    /// The all-ones rule.
    pub fn full(n_sub: usize) -> Self {
        CompositionRule {
            weights: vec![true; n_sub],
            active: (0..n_sub).collect(),
        }
    }

    /// The empty rule. Only valid as an algorithm-internal start state;
    /// statistics require at least one active component.
    pub fn empty(n_sub: usize) -> Self {
        CompositionRule {
            weights: vec![false; n_sub],
            active: Vec::new(),
        }
    }

    /// Copy of this rule with index `i` additionally active.
    pub fn augment(&self, i: usize) -> Result<Self> {
        if i >= self.n_sub() {
            return Err(Error::invalid(format!("index {i} out of range")));
        }
        if self.weights[i] {
            return Err(Error::invalid(format!("index {i} already active")));
        }
        let mut weights = self.weights.clone();
        weights[i] = true;
        let active = (0..weights.len()).filter(|&j| weights[j]).collect();
        Ok(CompositionRule { weights, active })
    }

    /// Copy of this rule with index `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        if i >= self.n_sub() || !self.weights[i] {
            return Err(Error::invalid(format!("index {i} not active")));
        }
        let mut weights = self.weights.clone();
        weights[i] = false;
        let active = (0..weights.len()).filter(|&j| weights[j]).collect();
        Ok(CompositionRule { weights, active })
    }

    pub fn n_sub(&self) -> usize {
        self.weights.len()
    }

    /// Number of active sub-likelihoods, `‖w‖`.
    pub fn size(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.weights.get(i).copied().unwrap_or(false)
    }

    /// Active indices in increasing order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn weights(&self) -> &[bool] {
        &self.weights
    }

    /// Hamming distance to another rule of the same length.
    pub fn hamming(&self, other: &CompositionRule) -> usize {
        assert_eq!(self.n_sub(), other.n_sub());
        self.weights
            .iter()
            .zip(other.weights.iter())
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Per-sub-likelihood parameter dimensions and their positions in the
/// stacked parameter vector.
///
/// The two bundled models use disjoint blocks, so the effective dimension of
/// a rule is the sum of its active block dimensions. `shared_map`, when set,
/// maps block coordinates onto shared effective coordinates for designs where
/// sub-likelihoods overlap in parameters; the parameter-cardinality of such a
/// design can exceed the effective dimension, but no algorithm here consumes
/// that quantity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    block_dims: Vec<usize>,
    offsets: Vec<usize>,
    total_dim: usize,
    shared_map: Option<Vec<Vec<usize>>>,
}

impl ParamLayout {
    /// Layout with disjoint per-block parameters.
    pub fn disjoint(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("block dimensions must be positive"));
        }
        let mut offsets = Vec::with_capacity(block_dims.len());
        let mut total = 0;
        for &d in &block_dims {
            offsets.push(total);
            total += d;
        }
        Ok(ParamLayout {
            block_dims,
            offsets,
            total_dim: total,
            shared_map: None,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn block_dim(&self, k: usize) -> usize {
        self.block_dims[k]
    }

    /// Coordinate range of block `k` in the full stacked vector.
    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.block_dims[k]
    }

    /// Total dimension `q` of the full stacked parameter vector.
    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Effective dimension `d_w` of the parameter under `rule`.
    pub fn effective_dim(&self, rule: &CompositionRule) -> usize {
        debug_assert!(self.shared_map.is_none(), "shared maps are not exercised");
        rule.active().iter().map(|&k| self.block_dims[k]).sum()
    }

    /// Full-vector coordinates of the active blocks, in stacked order.
    /// These index both the restricted parameter vector layout and the
    /// principal submatrix extraction used by shared-covariance search.
    pub fn active_coords(&self, rule: &CompositionRule) -> Vec<usize> {
        let mut coords = Vec::with_capacity(self.effective_dim(rule));
        for &k in rule.active() {
            coords.extend(self.block_range(k));
        }
        coords
    }

    /// Offsets of each active block within the restricted stacked vector.
    pub fn restricted_offsets(&self, rule: &CompositionRule) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(rule.size());
        let mut acc = 0;
        for &k in rule.active() {
            offsets.push(acc);
            acc += self.block_dims[k];
        }
        offsets
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_rule_basic() {
        let r = CompositionRule::make_rule(&[0], 20).unwrap();
        assert_eq!(r.size(), 1);
        assert!(r.is_active(0));
        assert!(!r.is_active(1));

        let full = CompositionRule::make_rule(&(0..20).collect::<Vec<_>>(), 20).unwrap();
        assert_eq!(full.size(), 20);
        assert_eq!(full, CompositionRule::full(20));

        let r = CompositionRule::make_rule(&[1, 4], 6).unwrap();
        assert_eq!(r.weights(), &[false, true, false, false, true, false]);
    }

    #[test]
    fn make_rule_rejects_bad_indices() {
        assert!(CompositionRule::make_rule(&[6], 6).is_err());
        assert!(CompositionRule::make_rule(&[1, 1], 6).is_err());
        assert!(CompositionRule::make_rule(&[0], 0).is_err());
    }

    #[test]
    fn augment_cases() {
        let r = CompositionRule::make_rule(&[0], 3).unwrap();
        let r2 = r.augment(1).unwrap();
        assert_eq!(r2.weights(), &[true, true, false]);
        assert_eq!(r.weights(), &[true, false, false]); // input unchanged

        let e = CompositionRule::empty(2);
        assert_eq!(e.augment(0).unwrap().weights(), &[true, false]);

        let e5 = CompositionRule::empty(5);
        assert_eq!(
            e5.augment(2).unwrap().weights(),
            &[false, false, true, false, false]
        );

        assert!(r2.augment(1).is_err()); // already active
    }

    #[test]
    fn augment_then_remove_is_identity() {
        let r = CompositionRule::make_rule(&[1, 3], 5).unwrap();
        for i in [0usize, 2, 4] {
            assert_eq!(r.augment(i).unwrap().without(i).unwrap(), r);
        }
    }

    #[test]
    fn layout_dims() {
        let l = ParamLayout::disjoint(vec![2, 2, 2]).unwrap();
        assert_eq!(l.total_dim(), 6);
        let full = CompositionRule::full(3);
        assert_eq!(l.effective_dim(&full), l.total_dim());
        let r = CompositionRule::make_rule(&[0, 2], 3).unwrap();
        assert_eq!(l.effective_dim(&r), 4);
        assert_eq!(l.active_coords(&r), vec![0, 1, 4, 5]);
        assert_eq!(l.restricted_offsets(&r), vec![0, 2]);
    }
}
