//! Report containers with deterministic CSV/JSON rendering.
//!
//! Reports embed the seed, crate version, schema version and a hash of the
//! generating configuration. Rendering is fully specified (fixed column
//! orders, fixed float formatting), so a fixed seed produces byte-identical
//! files at any worker count. Wall-clock metadata is deliberately kept out
//! of the files; runners log it to stderr instead.

use crate::error::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// One CSV row: values already rendered to strings.
pub type ReportRow = Vec<String>;

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Experiment-specific side data (posteriors, metadata, checks).
    pub extra: serde_json::Value,
}

impl ExperimentReport {
    pub fn new<C: Serialize>(
        schema: &str,
        experiment: &str,
        seed: u64,
        config: &C,
        columns: Vec<&str>,
    ) -> Result<Self> {
        let config_value =
            serde_json::to_value(config).map_err(|e| Error::Parse(e.to_string()))?;
        let canonical =
            serde_json::to_string(&config_value).map_err(|e| Error::Parse(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let config_sha256 = hex_lower(&hasher.finalize());
        Ok(ExperimentReport {
            schema: schema.to_string(),
            experiment: experiment.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256,
            config: config_value,
            columns: columns.into_iter().map(String::from).collect(),
            rows: Vec::new(),
            extra: serde_json::Value::Null,
        })
    }

    pub fn push_row(&mut self, row: ReportRow) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Write `<base>.csv` and `<base>.json` under `dir`.
    pub fn write(&self, dir: &Path, base: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{base}.csv"));
        let json_path = dir.join(format!("{base}.json"));
        std::fs::write(&csv_path, self.to_csv())?;
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(&json_path, json)?;
        Ok((csv_path, json_path))
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixed-point rendering used in CSV cells.
pub fn fmt_f(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.digits$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Cfg {
        reps: usize,
    }

    #[test]
    fn csv_rendering_is_stable() {
        let mut r =
            ExperimentReport::new("test-v1", "toy", 7, &Cfg { reps: 3 }, vec!["a", "b"]).unwrap();
        r.push_row(vec![fmt_f(0.5, 4), fmt_f(1.0 / 3.0, 4)]);
        assert_eq!(r.to_csv(), "a,b\n0.5000,0.3333\n");
        let again =
            ExperimentReport::new("test-v1", "toy", 7, &Cfg { reps: 3 }, vec!["a", "b"]).unwrap();
        assert_eq!(r.config_sha256, again.config_sha256);
    }
}
