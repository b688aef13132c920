//! Growing numbers of candidate sub-likelihoods: power of the depth-1
//! forward-search test against the Wald, LSSB and LSSBw tests as the
//! variable count grows from 6 to 20 with a single informative variable.

use crate::error::Result;
use crate::harness::pipeline::two_group_stats;
use crate::harness::report::{fmt_f, ExperimentReport};
use crate::harness::proportion_se;
use crate::model::Group;
use crate::models::{LatentCategoricalModel, QuantileParams};
use crate::nulldist::PooledSamples;
use crate::seed::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

const EX3_DATA0: u64 = 0x45_58_33_00;
const EX3_DATA1: u64 = 0x45_58_33_01;
const EX3_BOOT: u64 = 0x45_58_33_B0;
const EX3_PERM: u64 = 0x45_58_33_AA;

#[derive(Debug, Clone, Serialize)]
pub struct Example3Config {
    /// Candidate counts (data dimensions), each in 6..=20.
    pub n_cl_values: Vec<usize>,
    pub reps: usize,
    pub n0: usize,
    pub n1: usize,
    pub n_cat: usize,
    /// Threshold shift of the informative variable.
    pub effect: f64,
    pub b_boot: usize,
    pub b_perm: usize,
    pub alpha: f64,
    pub base_seed: u64,
    /// Search depth of the forward-search test.
    pub n_cl_star: usize,
}

impl Example3Config {
    pub fn desk(base_seed: u64) -> Self {
        Example3Config {
            n_cl_values: (6..=20).collect(),
            reps: 200,
            n0: 60,
            n1: 60,
            n_cat: 3,
            effect: 0.8,
            b_boot: 200,
            b_perm: 200,
            alpha: 0.05,
            base_seed,
            n_cl_star: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Example3Row {
    pub n_cl: usize,
    /// Power per method: fscl (at the configured depth), wald, lssb, lssbw.
    pub power: [f64; 4],
    /// 95% normal-approximation probability intervals per method.
    pub interval: [(f64, f64); 4],
}

pub struct Example3Outcome {
    pub rows: Vec<Example3Row>,
    pub report: ExperimentReport,
}

pub fn run_example3(cfg: &Example3Config) -> Result<Example3Outcome> {
    if cfg.n_cl_values.iter().any(|&d| !(6..=20).contains(&d)) {
        return Err(crate::Error::invalid("candidate counts must lie in 6..=20"));
    }
    let mut rows = Vec::new();
    for (di, &d) in cfg.n_cl_values.iter().enumerate() {
        let model = LatentCategoricalModel::identity(d, cfg.n_cat)?;
        let g0 = QuantileParams::repeated(vec![-0.3, 0.3], d)?;
        let mut rows1 = g0.rows().to_vec();
        rows1[0][0] -= cfg.effect;
        rows1[0][1] += cfg.effect;
        let g1 = QuantileParams::new(rows1)?;

        let rejects: Vec<[bool; 4]> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| -> Result<[bool; 4]> {
                let tags = |role: u64| [role, di as u64, rep as u64];
                let s0 = model.simulate(
                    &g0,
                    cfg.n0,
                    Group::Control,
                    derive_seed(cfg.base_seed, &tags(EX3_DATA0)),
                )?;
                let s1 = model.simulate(
                    &g1,
                    cfg.n1,
                    Group::Case,
                    derive_seed(cfg.base_seed, &tags(EX3_DATA1)),
                )?;
                let boot_seed = derive_seed(cfg.base_seed, &tags(EX3_BOOT));
                let perm_seed = derive_seed(cfg.base_seed, &tags(EX3_PERM));
                let pooled = PooledSamples::new(&s0, &s1)?;
                let (obs0, obs1) = pooled.observed_split();
                let observed =
                    two_group_stats(&model, pooled.pooled(), &obs0, &obs1, cfg.b_boot, boot_seed)?;
                let reps: Vec<crate::harness::pipeline::PipelineStats> = (0..cfg.b_perm)
                    .map(|b| {
                        let (p0, p1) = pooled.permuted_split(perm_seed, b);
                        let sub =
                            derive_seed(perm_seed, &[crate::seed::role::PERM_BOOT, b as u64]);
                        two_group_stats(&model, pooled.pooled(), &p0, &p1, cfg.b_boot, sub)
                    })
                    .collect::<Result<_>>()?;
                let bp1 = (cfg.b_perm + 1) as f64;
                let p_of = |obs: f64,
                            pick: &dyn Fn(&crate::harness::pipeline::PipelineStats) -> f64|
                 -> f64 {
                    let exceed = reps.iter().filter(|r| pick(r) >= obs).count();
                    (1.0 + exceed as f64) / bp1
                };
                let t = cfg.n_cl_star.min(d);
                Ok([
                    p_of(observed.fscl(t), &|r| r.fscl(t)) <= cfg.alpha,
                    p_of(observed.wald(), &|r| r.wald()) <= cfg.alpha,
                    p_of(observed.lssb, &|r| r.lssb) <= cfg.alpha,
                    p_of(observed.lssbw, &|r| r.lssbw) <= cfg.alpha,
                ])
            })
            .collect::<Result<_>>()?;

        let mut power = [0.0f64; 4];
        for r in &rejects {
            for (i, &b) in r.iter().enumerate() {
                if b {
                    power[i] += 1.0;
                }
            }
        }
        for p in power.iter_mut() {
            *p /= cfg.reps as f64;
        }
        let mut interval = [(0.0, 0.0); 4];
        for i in 0..4 {
            let se = proportion_se(power[i], cfg.reps);
            interval[i] = (
                (power[i] - 1.96 * se).max(0.0),
                (power[i] + 1.96 * se).min(1.0),
            );
        }
        rows.push(Example3Row {
            n_cl: d,
            power,
            interval,
        });
    }

    let mut report = ExperimentReport::new(
        "ex3-v1",
        "ex3",
        cfg.base_seed,
        cfg,
        vec!["n_cl", "method", "power", "se", "ci_lo", "ci_hi"],
    )?;
    for row in &rows {
        for (i, method) in ["fscl", "wald", "lssb", "lssbw"].iter().enumerate() {
            report.push_row(vec![
                row.n_cl.to_string(),
                method.to_string(),
                fmt_f(row.power[i], 6),
                fmt_f(proportion_se(row.power[i], cfg.reps), 6),
                fmt_f(row.interval[i].0, 6),
                fmt_f(row.interval[i].1, 6),
            ]);
        }
    }
    Ok(Example3Outcome { rows, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replicate_single_point() {
        let mut cfg = Example3Config::desk(17);
        cfg.n_cl_values = vec![6];
        cfg.reps = 1;
        cfg.b_boot = 30;
        cfg.b_perm = 19;
        let out = run_example3(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        for p in out.rows[0].power {
            assert!(p == 0.0 || p == 1.0);
        }
    }

    #[test]
    fn rejects_out_of_range_dimension() {
        let mut cfg = Example3Config::desk(17);
        cfg.n_cl_values = vec![5];
        assert!(run_example3(&cfg).is_err());
    }
}
