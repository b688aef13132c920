//! Latent Gaussian categorical two-group study: power and Type I error of
//! the forward-search statistic at every depth against the Wald, LSSB and
//! LSSBw tests, with permutation nulls throughout, plus the information
//! criterion path and its MAP complexity choice.

use crate::error::Result;
use crate::harness::pipeline::two_group_stats;
use crate::harness::report::{fmt_f, ExperimentReport};
use crate::harness::proportion_se;
use crate::model::Group;
use crate::models::{LatentCategoricalModel, QuantileParams};
use crate::nulldist::PooledSamples;
use crate::search::CovMode;
use crate::seed::derive_seed;
use crate::selection::select_ncl;
use rayon::prelude::*;
use serde::Serialize;

const EX2: u64 = 0x45_58_32;
const EX2_DATA0: u64 = 0x45_58_32_00;
const EX2_DATA1: u64 = 0x45_58_32_01;
const EX2_BOOT: u64 = 0x45_58_32_B0;
const EX2_PERM: u64 = 0x45_58_32_AA;

#[derive(Debug, Clone, Serialize)]
pub struct Example2Config {
    pub epsilons: Vec<f64>,
    pub reps: usize,
    pub n0: usize,
    pub n1: usize,
    pub d: usize,
    pub n_cat: usize,
    pub b_boot: usize,
    pub b_perm: usize,
    pub alpha: f64,
    pub base_seed: u64,
}

impl Example2Config {
    pub fn desk(base_seed: u64) -> Self {
        Example2Config {
            epsilons: vec![0.0, 0.3, 0.4, 0.5],
            reps: 200,
            n0: 100,
            n1: 100,
            d: 6,
            n_cat: 3,
            b_boot: 200,
            b_perm: 200,
            alpha: 0.05,
            base_seed,
        }
    }

    pub fn paper(base_seed: u64) -> Self {
        Example2Config {
            reps: 1000,
            b_boot: 1000,
            b_perm: 1000,
            ..Self::desk(base_seed)
        }
    }
}

/// Rejection rates and criterion averages for one effect size.
#[derive(Debug, Clone, Serialize)]
pub struct Example2Row {
    pub epsilon: f64,
    /// Rejection rate of the forward-search test at depth `t` (index `t-1`);
    /// the last entry is the all-components Wald test.
    pub fscl_power: Vec<f64>,
    pub lssb_power: f64,
    pub lssbw_power: f64,
    /// Average criterion value per depth.
    pub cl_bic_mean: Vec<f64>,
    /// Fraction of replicates whose MAP complexity choice was 1.
    pub map_one_rate: f64,
}

pub struct Example2Outcome {
    pub rows: Vec<Example2Row>,
    pub report: ExperimentReport,
}

struct RepOutcome {
    fscl_reject: Vec<bool>,
    lssb_reject: bool,
    lssbw_reject: bool,
    cl_bic: Vec<f64>,
    map_is_one: bool,
}

fn gamma_pair(d: usize, epsilon: f64) -> (QuantileParams, QuantileParams) {
    let g0 = QuantileParams::repeated(vec![-0.3, 0.3], d).unwrap();
    let mut rows = g0.rows().to_vec();
    rows[0][0] -= epsilon;
    rows[0][1] += epsilon;
    (g0, QuantileParams::new(rows).unwrap())
}

fn run_replicate(
    cfg: &Example2Config,
    model: &LatentCategoricalModel,
    eps_idx: usize,
    epsilon: f64,
    rep: usize,
) -> Result<RepOutcome> {
    let (g0, g1) = gamma_pair(cfg.d, epsilon);
    let tags = |role: u64| [role, eps_idx as u64, rep as u64];
    let s0 = model.simulate(
        &g0,
        cfg.n0,
        Group::Control,
        derive_seed(cfg.base_seed, &tags(EX2_DATA0)),
    )?;
    let s1 = model.simulate(
        &g1,
        cfg.n1,
        Group::Case,
        derive_seed(cfg.base_seed, &tags(EX2_DATA1)),
    )?;
    let boot_seed = derive_seed(cfg.base_seed, &tags(EX2_BOOT));
    let perm_seed = derive_seed(cfg.base_seed, &tags(EX2_PERM));

    let pooled = PooledSamples::new(&s0, &s1)?;
    let (obs0, obs1) = pooled.observed_split();
    let observed = two_group_stats(model, pooled.pooled(), &obs0, &obs1, cfg.b_boot, boot_seed)?;

    // permutation replicates rerun the full pipeline, bootstrap included
    let replicates: Vec<crate::harness::pipeline::PipelineStats> = (0..cfg.b_perm)
        .map(|b| {
            let (p0, p1) = pooled.permuted_split(perm_seed, b);
            let sub_seed = derive_seed(perm_seed, &[crate::seed::role::PERM_BOOT, b as u64]);
            two_group_stats(model, pooled.pooled(), &p0, &p1, cfg.b_boot, sub_seed)
        })
        .collect::<Result<_>>()?;

    let bp1 = (cfg.b_perm + 1) as f64;
    let p_of = |obs: f64, pick: &dyn Fn(&crate::harness::pipeline::PipelineStats) -> f64| -> f64 {
        let exceed = replicates.iter().filter(|r| pick(r) >= obs).count();
        (1.0 + exceed as f64) / bp1
    };

    let mut fscl_reject = Vec::with_capacity(cfg.d);
    for t in 1..=cfg.d {
        let p = p_of(observed.fscl(t), &|r| r.fscl(t));
        fscl_reject.push(p <= cfg.alpha);
    }
    let lssb_reject = p_of(observed.lssb, &|r| r.lssb) <= cfg.alpha;
    let lssbw_reject = p_of(observed.lssbw, &|r| r.lssbw) <= cfg.alpha;

    let path = select_ncl(model, &s0, &s1, CovMode::Shared, cfg.b_boot, boot_seed)?;
    let cl_bic: Vec<f64> = path.entries.iter().map(|e| e.cl_bic).collect();
    Ok(RepOutcome {
        fscl_reject,
        lssb_reject,
        lssbw_reject,
        cl_bic,
        map_is_one: path.map_choice == 1,
    })
}

pub fn run_example2(cfg: &Example2Config) -> Result<Example2Outcome> {
    let model = LatentCategoricalModel::identity(cfg.d, cfg.n_cat)?;
    let mut rows = Vec::new();
    for (eps_idx, &epsilon) in cfg.epsilons.iter().enumerate() {
        let outcomes: Vec<RepOutcome> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| run_replicate(cfg, &model, eps_idx, epsilon, rep))
            .collect::<Result<_>>()?;
        let reps = cfg.reps as f64;
        let mut fscl_power = vec![0.0; cfg.d];
        let mut lssb = 0.0;
        let mut lssbw = 0.0;
        let mut cl_bic_mean = vec![0.0; cfg.d];
        let mut map_one = 0.0;
        for o in &outcomes {
            for t in 0..cfg.d {
                if o.fscl_reject[t] {
                    fscl_power[t] += 1.0;
                }
                cl_bic_mean[t] += o.cl_bic[t];
            }
            if o.lssb_reject {
                lssb += 1.0;
            }
            if o.lssbw_reject {
                lssbw += 1.0;
            }
            if o.map_is_one {
                map_one += 1.0;
            }
        }
        for v in fscl_power.iter_mut() {
            *v /= reps;
        }
        for v in cl_bic_mean.iter_mut() {
            *v /= reps;
        }
        rows.push(Example2Row {
            epsilon,
            fscl_power,
            lssb_power: lssb / reps,
            lssbw_power: lssbw / reps,
            cl_bic_mean,
            map_one_rate: map_one / reps,
        });
    }

    let mut report = ExperimentReport::new(
        "ex2-v1",
        "ex2",
        cfg.base_seed,
        cfg,
        vec!["epsilon", "method", "rate", "se", "cl_bic_mean", "map_one_rate"],
    )?;
    for row in &rows {
        for t in 1..=cfg.d {
            let rate = row.fscl_power[t - 1];
            let label = if t == cfg.d {
                "wald".to_string()
            } else {
                format!("fscl{t}")
            };
            report.push_row(vec![
                fmt_f(row.epsilon, 2),
                label,
                fmt_f(rate, 6),
                fmt_f(proportion_se(rate, cfg.reps), 6),
                fmt_f(row.cl_bic_mean[t - 1], 4),
                if t == 1 {
                    fmt_f(row.map_one_rate, 6)
                } else {
                    String::new()
                },
            ]);
        }
        for (label, rate) in [("lssb", row.lssb_power), ("lssbw", row.lssbw_power)] {
            report.push_row(vec![
                fmt_f(row.epsilon, 2),
                label.to_string(),
                fmt_f(rate, 6),
                fmt_f(proportion_se(rate, cfg.reps), 6),
                String::new(),
                String::new(),
            ]);
        }
    }
    let _ = EX2; // experiment tag reserved for future sub-streams
    Ok(Example2Outcome { rows, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_run_shapes_and_determinism() {
        let mut cfg = Example2Config::desk(5);
        cfg.reps = 3;
        cfg.b_boot = 40;
        cfg.b_perm = 19;
        cfg.n0 = 40;
        cfg.n1 = 40;
        cfg.epsilons = vec![0.5];
        let a = run_example2(&cfg).unwrap();
        let b = run_example2(&cfg).unwrap();
        assert_eq!(a.report.to_csv(), b.report.to_csv());
        assert_eq!(a.rows[0].fscl_power.len(), 6);
        assert_eq!(a.rows[0].cl_bic_mean.len(), 6);
    }
}
