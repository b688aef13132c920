//! Command implementations behind the binary: single-dataset testing,
//! null-density tabulation and schema export.

use crate::dataio::CaseControlDataset;
use crate::error::{Error, Result};
use crate::harness::pipeline::{two_group_stats, PipelineStats};
use crate::harness::report::{fmt_f, ExperimentReport};
use crate::models::LatentCategoricalModel;
use crate::nulldist::{OrderedGammaDensity, PooledSamples};
use crate::search::CovMode;
use crate::seed::{derive_seed, role};
use crate::selection::select_ncl;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct TestOptions {
    /// Fixed search depth; `None` selects by the information criterion.
    pub n_cl_star: Option<usize>,
    pub alpha: f64,
    pub b_boot: usize,
    pub b_perm: usize,
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            n_cl_star: None,
            alpha: 0.05,
            b_boot: 1000,
            b_perm: 1000,
            seed: 0,
        }
    }
}

/// Per-depth summary of the forward path.
#[derive(Debug, Clone, Serialize)]
pub struct DepthSummary {
    pub n_cl_star: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub cl_bic: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReportData {
    pub n_vars: usize,
    pub n_control: usize,
    pub n_case: usize,
    pub n_cat: usize,
    pub depths: Vec<DepthSummary>,
    /// MAP depth from the information criterion.
    pub map_choice: usize,
    /// Depth whose statistic is reported as the headline result.
    pub chosen_depth: usize,
    pub fscl_statistic: f64,
    pub fscl_p_value: f64,
    /// Variables selected by the search at the chosen depth, in selection order.
    pub selected_variables: Vec<String>,
    pub wald_p_value: f64,
    pub lssb_p_value: f64,
    pub lssbw_p_value: f64,
    pub uminp_p_value: f64,
    pub alpha: f64,
}

pub struct TestOutcome {
    pub data: TestReportData,
    pub report: ExperimentReport,
}

/// Full single-dataset analysis: statistics, permutation p-values for every
/// method, the information-criterion path, and the selected variables.
pub fn cmd_test(dataset: &CaseControlDataset, options: &TestOptions) -> Result<TestOutcome> {
    let d = dataset.n_vars();
    if let Some(t) = options.n_cl_star {
        if t < 1 || t > d {
            return Err(Error::invalid(format!("n_cl_star must be in 1..={d}")));
        }
    }
    let model = LatentCategoricalModel::identity(d, dataset.n_cat)?;
    let (s0, s1) = dataset.to_group_samples()?;
    let boot_seed = derive_seed(options.seed, &[role::BOOT]);
    let perm_seed = derive_seed(options.seed, &[role::PERM]);

    let pooled = PooledSamples::new(&s0, &s1)?;
    let (obs0, obs1) = pooled.observed_split();
    let observed = two_group_stats(&model, pooled.pooled(), &obs0, &obs1, options.b_boot, boot_seed)?;

    let replicates: Vec<PipelineStats> = (0..options.b_perm)
        .map(|b| {
            let (p0, p1) = pooled.permuted_split(perm_seed, b);
            let sub = derive_seed(perm_seed, &[role::PERM_BOOT, b as u64]);
            two_group_stats(&model, pooled.pooled(), &p0, &p1, options.b_boot, sub)
        })
        .collect::<Result<_>>()?;
    let bp1 = (options.b_perm + 1) as f64;
    let p_of = |obs: f64, pick: &dyn Fn(&PipelineStats) -> f64| -> f64 {
        (1.0 + replicates.iter().filter(|r| pick(r) >= obs).count() as f64) / bp1
    };

    let path = select_ncl(&model, &s0, &s1, CovMode::Shared, options.b_boot, boot_seed)?;
    let mut depths = Vec::with_capacity(d);
    for t in 1..=d {
        depths.push(DepthSummary {
            n_cl_star: t,
            statistic: observed.fscl(t),
            p_value: p_of(observed.fscl(t), &|r| r.fscl(t)),
            cl_bic: path.entries[t - 1].cl_bic,
            posterior: path.entries[t - 1].posterior,
        });
    }
    let chosen_depth = options.n_cl_star.unwrap_or(path.map_choice);
    let selected_variables: Vec<String> = observed.selected[..chosen_depth]
        .iter()
        .map(|&j| dataset.variables[j].clone())
        .collect();

    let data = TestReportData {
        n_vars: d,
        n_control: s0.n(),
        n_case: s1.n(),
        n_cat: dataset.n_cat,
        map_choice: path.map_choice,
        chosen_depth,
        fscl_statistic: observed.fscl(chosen_depth),
        fscl_p_value: depths[chosen_depth - 1].p_value,
        selected_variables,
        wald_p_value: p_of(observed.wald(), &|r| r.wald()),
        lssb_p_value: p_of(observed.lssb, &|r| r.lssb),
        lssbw_p_value: p_of(observed.lssbw, &|r| r.lssbw),
        uminp_p_value: p_of(observed.uminp, &|r| r.uminp),
        alpha: options.alpha,
        depths,
    };

    let mut report = ExperimentReport::new(
        "test-v1",
        "test",
        options.seed,
        options,
        vec!["n_cl_star", "statistic", "p_value", "cl_bic", "posterior", "is_map", "is_chosen"],
    )?;
    for t in 1..=d {
        let row = &data.depths[t - 1];
        report.push_row(vec![
            t.to_string(),
            fmt_f(row.statistic, 6),
            fmt_f(row.p_value, 6),
            fmt_f(row.cl_bic, 4),
            fmt_f(row.posterior, 6),
            u8::from(t == data.map_choice).to_string(),
            u8::from(t == data.chosen_depth).to_string(),
        ]);
    }
    report.extra = serde_json::to_value(&data).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(TestOutcome { data, report })
}

/// Tabulated null density `(t, f_T(t|k))` with a normalization check.
pub struct NullDensityTable {
    pub rows: Vec<(f64, f64)>,
    pub normalization: f64,
    pub k: usize,
    pub big_k: usize,
    pub p_prime: u32,
}

impl NullDensityTable {
    /// Render as CSV with the normalization recorded on a comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# k={} K={} p_prime={} normalization={:.8}\n",
            self.k, self.big_k, self.p_prime, self.normalization
        );
        out.push_str("t,density\n");
        for &(t, f) in &self.rows {
            out.push_str(&format!("{},{:.10e}\n", fmt_f(t, 4), f));
        }
        out
    }
}

pub fn cmd_nulldensity(
    k: usize,
    big_k: usize,
    p_prime: u32,
    t_max: f64,
    t_step: f64,
) -> Result<NullDensityTable> {
    if !(t_max > 0.0) || !(t_step > 0.0) {
        return Err(Error::invalid("t_max and t_step must be positive"));
    }
    let cfg = OrderedGammaDensity::auto(k, big_k, p_prime)
        .with_t_max(t_max.max(2.0 * OrderedGammaDensity::auto(k, big_k, p_prime).support_bound(1e-9)));
    let mut grid = Vec::new();
    let mut t = 0.0;
    while t <= t_max + 1e-9 {
        grid.push(t);
        t += t_step;
    }
    let vals = cfg.density_grid(&grid)?;
    let hi = cfg.support_bound(1e-9);
    let normalization = cfg.integrate(hi, 1e-8)?;
    Ok(NullDensityTable {
        rows: grid.into_iter().zip(vals).collect(),
        normalization,
        k,
        big_k,
        p_prime,
    })
}

/// Machine-readable description of every file schema the binary emits.
pub fn export_schema() -> serde_json::Value {
    serde_json::json!({
        "schemas": [
            {
                "name": "ex1-v1",
                "file": "ex1.csv",
                "columns": ["m", "n_cl_star", "method", "type1", "type1_se", "power", "power_se", "hamming_per_coord"],
            },
            {
                "name": "ex2-v1",
                "file": "ex2.csv",
                "columns": ["epsilon", "method", "rate", "se", "cl_bic_mean", "map_one_rate"],
            },
            {
                "name": "ex3-v1",
                "file": "ex3.csv",
                "columns": ["n_cl", "method", "power", "se", "ci_lo", "ci_hi"],
            },
            {
                "name": "fig1-v1",
                "file": "fig1.csv",
                "columns": ["delta0", "n_cl_star", "power", "se"],
            },
            {
                "name": "fig2-v1",
                "file": "fig2.csv",
                "columns": ["t", "density_k{k}..."],
            },
            {
                "name": "fig2-hist-v1",
                "file": "fig2_hist.csv",
                "columns": ["bin_lo", "bin_hi", "count", "density"],
            },
            {
                "name": "test-v1",
                "file": "test.csv",
                "columns": ["n_cl_star", "statistic", "p_value", "cl_bic", "posterior", "is_map", "is_chosen"],
            },
            {
                "name": "null-density-v1",
                "file": "null_density.csv",
                "columns": ["t", "density"],
                "comment_header": "# k K p_prime normalization",
            },
        ],
        "json_envelope": {
            "fields": ["schema", "experiment", "version", "seed", "config_sha256", "config", "columns", "rows", "extra"],
        },
        "input": {
            "format": "UTF-8 CSV, comma-delimited, header row required",
            "group_column": "group (values case/control or 1/0)",
            "codes": "integers 0..C-1, no missing values",
        },
        "exit_codes": {"ok": 0, "input_error": 2, "numeric_failure": 3},
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_density_table_chi2_case() {
        let table = cmd_nulldensity(1, 1, 5, 10.0, 1.0).unwrap();
        assert!((table.normalization - 1.0).abs() < 1e-6);
        // row at t = 3 equals the chi-square(5) density there
        let (t3, f3) = table.rows[3];
        assert_eq!(t3, 3.0);
        assert!((f3 - 0.1541803298037693).abs() < 1e-10);
    }

    #[test]
    fn schema_export_lists_all_files() {
        let v = export_schema();
        let schemas = v["schemas"].as_array().unwrap();
        assert!(schemas.len() >= 8);
    }
}
