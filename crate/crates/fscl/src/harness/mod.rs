//! Monte Carlo experiment driver with deterministic seeding and
//! CSV/JSON reports.

pub mod example1;
pub mod example2;
pub mod example3;
pub mod figures;
pub mod pipeline;
pub mod report;

pub use report::{ExperimentReport, ReportRow};

/// Scale preset: `Paper` preserves published replication counts, `Desk`
/// shrinks resampling sizes so full runs finish in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Scale {
    Paper,
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(crate::Error::invalid(format!("unknown scale '{other}'"))),
        }
    }
}

/// Monte Carlo standard error of a proportion.
pub fn proportion_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}
