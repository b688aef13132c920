//! Case-control dataset ingestion and export.
//!
//! Input files are UTF-8, comma-delimited CSV with a header row. One column
//! (default name `group`) carries the group label (`case`/`control` or
//! `1`/`0`); every other column is a categorical variable coded
//! `0..C-1`. Codes are remapped to `1..C` internally. Missing cells are
//! rejected with the offending row and column named.

use crate::error::{Error, Result};
use crate::model::{Group, GroupSample};
use nalgebra::DMatrix;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Name of the group column.
    pub group_column: String,
    /// Force the number of labels; inferred from the data when `None`.
    pub categories: Option<usize>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            group_column: "group".into(),
            categories: None,
        }
    }
}

/// Parsed case-control dataset with file-convention codes (`0..C-1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CaseControlDataset {
    pub variables: Vec<String>,
    /// Group label per subject.
    pub groups: Vec<Group>,
    /// Codes per subject x variable, in file convention.
    pub codes: Vec<Vec<u32>>,
    /// Number of labels `C`.
    pub n_cat: usize,
}

impl CaseControlDataset {
    pub fn n_subjects(&self) -> usize {
        self.codes.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let n1 = self.groups.iter().filter(|g| **g == Group::Case).count();
        (self.groups.len() - n1, n1)
    }

    /// Split into control/case samples with codes remapped to `1..C`.
    pub fn to_group_samples(&self) -> Result<(GroupSample, GroupSample)> {
        let d = self.n_vars();
        let mut rows0 = Vec::new();
        let mut rows1 = Vec::new();
        for (subj, g) in self.groups.iter().enumerate() {
            let row: Vec<f64> = self.codes[subj].iter().map(|&c| (c + 1) as f64).collect();
            match g {
                Group::Control => rows0.push(row),
                Group::Case => rows1.push(row),
            }
        }
        let build = |rows: Vec<Vec<f64>>, group| {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            GroupSample::new(DMatrix::from_row_slice(rows.len(), d, &flat), group)
        };
        Ok((build(rows0, Group::Control)?, build(rows1, Group::Case)?))
    }
}

fn parse_group(raw: &str) -> Option<Group> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "case" | "1" => Some(Group::Case),
        "control" | "0" => Some(Group::Control),
        _ => None,
    }
}

/// Read a dataset from `path`.
pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<CaseControlDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("header: {e}")))?
        .clone();
    let group_col = headers
        .iter()
        .position(|h| h == options.group_column)
        .ok_or_else(|| {
            Error::invalid(format!(
                "group column '{}' not found in header",
                options.group_column
            ))
        })?;
    let variables: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != group_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if variables.is_empty() {
        return Err(Error::invalid("no variable columns"));
    }

    let mut groups = Vec::new();
    let mut codes: Vec<Vec<u32>> = Vec::new();
    let mut max_code = 0u32;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("row {}: {e}", row_idx + 2)))?;
        let raw_group = record.get(group_col).unwrap_or("");
        let group = parse_group(raw_group).ok_or_else(|| {
            Error::Parse(format!(
                "row {}, column '{}': unknown group label '{raw_group}'",
                row_idx + 2,
                options.group_column
            ))
        })?;
        let mut row = Vec::with_capacity(variables.len());
        for (col_idx, cell) in record.iter().enumerate() {
            if col_idx == group_col {
                continue;
            }
            let name = headers.get(col_idx).unwrap_or("?");
            if cell.is_empty() {
                return Err(Error::Parse(format!(
                    "row {}, column '{name}': missing value",
                    row_idx + 2
                )));
            }
            let code: u32 = cell.parse().map_err(|_| {
                Error::Parse(format!(
                    "row {}, column '{name}': invalid code '{cell}'",
                    row_idx + 2
                ))
            })?;
            max_code = max_code.max(code);
            row.push(code);
        }
        groups.push(group);
        codes.push(row);
    }

    let inferred = (max_code + 1).max(2) as usize;
    let n_cat = match options.categories {
        Some(c) => {
            if c < inferred {
                return Err(Error::invalid(format!(
                    "--categories {c} is below the largest observed code {max_code}"
                )));
            }
            c
        }
        None => inferred,
    };
    let n_case = groups.iter().filter(|g| **g == Group::Case).count();
    let n_control = groups.len() - n_case;
    if n_case < 2 || n_control < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 subjects per group (control {n_control}, case {n_case})"
        )));
    }
    Ok(CaseControlDataset {
        variables,
        groups,
        codes,
        n_cat,
    })
}

/// Write a dataset back to CSV in the same file convention.
pub fn export_csv(dataset: &CaseControlDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let mut header = vec!["group".to_string()];
    header.extend(dataset.variables.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::Parse(e.to_string()))?;
    for (subj, g) in dataset.groups.iter().enumerate() {
        let mut row = vec![match g {
            Group::Case => "case".to_string(),
            Group::Control => "control".to_string(),
        }];
        row.extend(dataset.codes[subj].iter().map(|c| c.to_string()));
        writer
            .write_record(&row)
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_toy_file() {
        let f = write_tmp("group,snp1,snp2\ncase,0,1\ncase,2,1\ncontrol,1,0\ncontrol,0,0\n");
        let ds = ingest_csv(f.path(), &IngestOptions::default()).unwrap();
        assert_eq!(ds.n_vars(), 2);
        assert_eq!(ds.n_cat, 3);
        assert_eq!(ds.group_sizes(), (2, 2));
        let (s0, s1) = ds.to_group_samples().unwrap();
        assert_eq!(s0.n(), 2);
        assert_eq!(s1.n(), 2);
        // code remap 0 -> 1
        assert_eq!(s1.value(0, 0), 1.0);
        assert_eq!(s1.value(1, 0), 3.0);
    }

    #[test]
    fn ingest_rejects_missing_cell() {
        let f = write_tmp("group,snp1\ncase,0\ncase,\ncontrol,1\ncontrol,0\n");
        let err = ingest_csv(f.path(), &IngestOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("snp1"), "{msg}");
    }

    #[test]
    fn ingest_rejects_unknown_group_and_single_group() {
        let f = write_tmp("group,snp1\ncase,0\nweird,1\ncontrol,1\ncontrol,0\n");
        assert!(ingest_csv(f.path(), &IngestOptions::default()).is_err());
        let f = write_tmp("group,snp1\ncase,0\ncase,1\ncase,1\ncase,0\n");
        assert!(ingest_csv(f.path(), &IngestOptions::default()).is_err());
    }

    #[test]
    fn export_then_ingest_round_trips() {
        let f = write_tmp("group,a,b\ncase,0,2\ncase,1,1\ncontrol,2,0\ncontrol,1,1\n");
        let ds = ingest_csv(f.path(), &IngestOptions::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        export_csv(&ds, out.path()).unwrap();
        let ds2 = ingest_csv(out.path(), &IngestOptions::default()).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn forced_categories() {
        let f = write_tmp("group,a\ncase,0\ncase,1\ncontrol,1\ncontrol,0\n");
        let opts = IngestOptions {
            categories: Some(3),
            ..Default::default()
        };
        let ds = ingest_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.n_cat, 3);
        let bad = IngestOptions {
            categories: Some(1),
            ..Default::default()
        };
        assert!(ingest_csv(f.path(), &bad).is_err());
    }
}
