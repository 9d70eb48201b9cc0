//! Deterministic artifact writers. CSV tables are assembled line by line
//! with shortest round-trip float formatting; JSON reports are serialized
//! from fixed-order structs and stamped with a schema version, so repeated
//! runs of the same scenario produce byte-identical files.

use std::path::Path;

use beamspace_core::C64;
use nalgebra::Matrix4;
use serde::Serialize;

use crate::{validation, CliError};

/// Layout tag stamped into every JSON artifact; bump when a field is added,
/// removed or reordered so golden-file consumers notice.
pub const SCHEMA_VERSION: u32 = 1;

/// Shortest representation that parses back to exactly the same value;
/// non-finite values use the spellings `inf`, `-inf` and `NaN`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::from("NaN")
    } else if v == f64::INFINITY {
        String::from("inf")
    } else if v == f64::NEG_INFINITY {
        String::from("-inf")
    } else {
        format!("{v}")
    }
}

/// Incremental CSV assembler with a fixed header row.
pub struct CsvTable {
    columns: usize,
    text: String,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.len(),
            text: columns.join(",") + "\n",
        }
    }

    /// Appends one row; the field count must match the header.
    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(
            fields.len(),
            self.columns,
            "CSV row width must match the header"
        );
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn rows_written(&self) -> usize {
        self.text.lines().count() - 1
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Creates the parent directory if needed and writes the artifact.
pub fn write_artifact(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| validation(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| validation(format!("{}: {e}", path.display())))
}

/// Serializes a report as pretty JSON with a trailing newline.
pub fn to_json_text<T: Serialize>(report: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| validation(format!("serializing report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// `[re, im]` pair used for complex values in JSON artifacts.
pub fn complex_pair(v: C64) -> [f64; 2] {
    [v.re, v.im]
}

/// Row-major nested-array form of a 4×4 complex matrix.
pub fn matrix4_rows(m: &Matrix4<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..4)
        .map(|r| (0..4).map(|c| complex_pair(m[(r, c)])).collect())
        .collect()
}
