//! Power-curve and null-density figure data.

use crate::error::Result;
use crate::estimate::delta_mcle;
use crate::harness::example1::upper_quantile;
use crate::harness::report::{fmt_f, ExperimentReport};
use crate::model::{Group, ModelSpec};
use crate::models::{GaussianMeanModel, Grouping};
use crate::nulldist::{simulate_null, OrderedGammaDensity};
use crate::rule::CompositionRule;
use crate::search::fscl_search_known;
use crate::seed::derive_seed;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

const FIG1_DATA: u64 = 0x46_31_00;
const FIG1_NULL: u64 = 0x46_31_4E;
const FIG2_HIST: u64 = 0x46_32_48;

/// Power of the forward-search test at several depths for a one-coordinate
/// mean shift in 20-dimensional Gaussian data with known variance.
#[derive(Debug, Clone, Serialize)]
pub struct Figure1Config {
    pub delta0_grid: Vec<f64>,
    pub depths: Vec<usize>,
    pub reps: usize,
    pub n_per_group: usize,
    pub dim: usize,
    pub sigma2: f64,
    pub alpha: f64,
    pub base_seed: u64,
    pub null_draws: usize,
}

impl Figure1Config {
    pub fn new(base_seed: u64) -> Self {
        Figure1Config {
            delta0_grid: (0..=10).map(|i| i as f64 * 0.5).collect(),
            depths: vec![1, 5, 10, 20],
            reps: 10_000,
            n_per_group: 18,
            dim: 20,
            sigma2: 9.0,
            alpha: 0.05,
            base_seed,
            null_draws: 2_000_000,
        }
    }
}

pub struct Figure1Outcome {
    /// `power[g][k_idx]` for grid point `g` and depth index `k_idx`.
    pub power: Vec<Vec<f64>>,
    pub report: ExperimentReport,
}

pub fn run_figure1(cfg: &Figure1Config) -> Result<Figure1Outcome> {
    if cfg.delta0_grid.is_empty() {
        return Err(crate::Error::invalid("empty delta0 grid"));
    }
    let d = cfg.dim;
    let model = GaussianMeanModel::isotropic(d, cfg.sigma2, Grouping::Marginal)?;
    let n = 2 * cfg.n_per_group;
    // known covariance of sqrt(n) * delta_hat: n * (s2/n1 + s2/n0) per coord
    let v_jj = n as f64 * 2.0 * cfg.sigma2 / cfg.n_per_group as f64;
    let v_full = DMatrix::from_diagonal_element(d, d, v_jj);
    let full_rule = CompositionRule::full(d);

    // simulated thresholds per depth
    let mut thresholds = Vec::with_capacity(cfg.depths.len());
    for &k in &cfg.depths {
        let null_cfg = OrderedGammaDensity::new(k, d, 1);
        let draws = simulate_null(
            &null_cfg,
            cfg.null_draws,
            derive_seed(cfg.base_seed, &[FIG1_NULL, k as u64]),
        )?;
        thresholds.push(upper_quantile(draws, cfg.alpha));
    }

    let max_depth = *cfg.depths.iter().max().unwrap();
    let mut power = Vec::with_capacity(cfg.delta0_grid.len());
    for (gi, &delta0) in cfg.delta0_grid.iter().enumerate() {
        let mut mean1 = vec![0.0; d];
        mean1[0] = delta0;
        let counts: Vec<Vec<bool>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| -> Result<Vec<bool>> {
                let s0 = model.simulate(
                    &vec![0.0; d],
                    cfg.n_per_group,
                    Group::Control,
                    derive_seed(cfg.base_seed, &[FIG1_DATA, gi as u64, rep as u64, 0]),
                )?;
                let s1 = model.simulate(
                    &mean1,
                    cfg.n_per_group,
                    Group::Case,
                    derive_seed(cfg.base_seed, &[FIG1_DATA, gi as u64, rep as u64, 1]),
                )?;
                let delta = delta_mcle(&model, &s0, &s1, &full_rule)?;
                let (traj, _) =
                    fscl_search_known(&delta.values, &v_full, model.layout(), n as f64, max_depth)?;
                Ok(cfg
                    .depths
                    .iter()
                    .zip(&thresholds)
                    .map(|(&k, &q)| traj.statistic_at(k) > q)
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut rates = vec![0.0; cfg.depths.len()];
        for row in &counts {
            for (i, &r) in row.iter().enumerate() {
                if r {
                    rates[i] += 1.0;
                }
            }
        }
        for r in rates.iter_mut() {
            *r /= cfg.reps as f64;
        }
        power.push(rates);
    }

    let mut report = ExperimentReport::new(
        "fig1-v1",
        "fig1",
        cfg.base_seed,
        cfg,
        vec!["delta0", "n_cl_star", "power", "se"],
    )?;
    for (gi, &delta0) in cfg.delta0_grid.iter().enumerate() {
        for (ki, &k) in cfg.depths.iter().enumerate() {
            report.push_row(vec![
                fmt_f(delta0, 2),
                k.to_string(),
                fmt_f(power[gi][ki], 6),
                fmt_f(crate::harness::proportion_se(power[gi][ki], cfg.reps), 6),
            ]);
        }
    }
    Ok(Figure1Outcome { power, report })
}

/// Analytic null densities on a grid plus a Monte Carlo histogram.
#[derive(Debug, Clone, Serialize)]
pub struct Figure2Config {
    pub k_values: Vec<usize>,
    pub big_k: usize,
    pub p_prime: u32,
    pub t_max: f64,
    pub t_step: f64,
    pub hist_draws: usize,
    pub hist_bin_width: f64,
    pub base_seed: u64,
}

impl Figure2Config {
    pub fn new(base_seed: u64) -> Self {
        Figure2Config {
            k_values: vec![1, 2, 5],
            big_k: 5,
            p_prime: 5,
            t_max: 60.0,
            t_step: 0.25,
            hist_draws: 100_000,
            hist_bin_width: 1.0,
            base_seed,
        }
    }
}

pub struct Figure2Outcome {
    pub grid: Vec<f64>,
    /// `densities[k_idx][t_idx]`.
    pub densities: Vec<Vec<f64>>,
    /// Normalization checks per k (integral of the density over the support).
    pub normalization: Vec<f64>,
    /// Histogram of simulated draws for the first configured depth:
    /// (lo, hi, count, empirical density).
    pub histogram: Vec<(f64, f64, usize, f64)>,
    pub report: ExperimentReport,
    pub hist_report: ExperimentReport,
}

pub fn run_figure2(cfg: &Figure2Config) -> Result<Figure2Outcome> {
    let grid: Vec<f64> = {
        let mut g = Vec::new();
        let mut t = 0.0;
        while t <= cfg.t_max + 1e-9 {
            g.push(t);
            t += cfg.t_step;
        }
        g
    };
    let mut densities = Vec::new();
    let mut normalization = Vec::new();
    for &k in &cfg.k_values {
        let dens_cfg =
            OrderedGammaDensity::auto(k, cfg.big_k, cfg.p_prime).with_t_max(cfg.t_max.max(
                2.0 * OrderedGammaDensity::auto(k, cfg.big_k, cfg.p_prime).support_bound(1e-9),
            ));
        let vals = dens_cfg.density_grid(&grid)?;
        let hi = dens_cfg.support_bound(1e-9);
        normalization.push(dens_cfg.integrate(hi, 1e-8)?);
        densities.push(vals);
    }

    // Monte Carlo histogram for the first depth
    let k0 = cfg.k_values[0];
    let null_cfg = OrderedGammaDensity::new(k0, cfg.big_k, cfg.p_prime);
    let draws = simulate_null(
        &null_cfg,
        cfg.hist_draws,
        derive_seed(cfg.base_seed, &[FIG2_HIST]),
    )?;
    let n_bins = (cfg.t_max / cfg.hist_bin_width).ceil() as usize;
    let mut counts = vec![0usize; n_bins];
    for &v in &draws {
        let b = (v / cfg.hist_bin_width) as usize;
        if b < n_bins {
            counts[b] += 1;
        }
    }
    let histogram: Vec<(f64, f64, usize, f64)> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let lo = b as f64 * cfg.hist_bin_width;
            (
                lo,
                lo + cfg.hist_bin_width,
                c,
                c as f64 / (cfg.hist_draws as f64 * cfg.hist_bin_width),
            )
        })
        .collect();

    let mut columns = vec!["t".to_string()];
    for &k in &cfg.k_values {
        columns.push(format!("density_k{k}"));
    }
    let mut report = ExperimentReport::new(
        "fig2-v1",
        "fig2",
        cfg.base_seed,
        cfg,
        columns.iter().map(|s| s.as_str()).collect(),
    )?;
    for (ti, &t) in grid.iter().enumerate() {
        let mut row = vec![fmt_f(t, 4)];
        for dens in &densities {
            row.push(format!("{:.10e}", dens[ti]));
        }
        report.push_row(row);
    }
    report.extra = serde_json::json!({
        "normalization": cfg
            .k_values
            .iter()
            .zip(&normalization)
            .map(|(k, n)| serde_json::json!({"k": k, "integral": n}))
            .collect::<Vec<_>>(),
    });

    let mut hist_report = ExperimentReport::new(
        "fig2-hist-v1",
        "fig2_hist",
        cfg.base_seed,
        cfg,
        vec!["bin_lo", "bin_hi", "count", "density"],
    )?;
    for &(lo, hi, c, dens) in &histogram {
        hist_report.push_row(vec![
            fmt_f(lo, 4),
            fmt_f(hi, 4),
            c.to_string(),
            fmt_f(dens, 8),
        ]);
    }

    Ok(Figure2Outcome {
        grid,
        densities,
        normalization,
        histogram,
        report,
        hist_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure2_collapse_curve_matches_chi_square() {
        let mut cfg = Figure2Config::new(3);
        cfg.k_values = vec![5];
        cfg.t_step = 5.0;
        cfg.hist_draws = 1000;
        let out = run_figure2(&cfg).unwrap();
        for (ti, &t) in out.grid.iter().enumerate() {
            let exact = crate::num::chi2_pdf(t, 25.0);
            assert!(
                (out.densities[0][ti] - exact).abs() < 1e-8,
                "t={t}: {} vs {exact}",
                out.densities[0][ti]
            );
        }
        assert!((out.normalization[0] - 1.0).abs() < 1e-6);
    }
}
