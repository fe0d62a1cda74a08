//! Fixed-schema CSV emission and strict parsing for experiment grids.
//!
//! Floats are written with 10 significant digits; grid rows store values
//! already normalized to that precision, so emit/parse round-trips are
//! exact byte-for-byte.

use std::path::Path;

use thiserror::Error;

use crate::analysis::{ExperimentGrid, GridRow};

pub const CSV_HEADER: &str =
    "model_size,strategy,n_samples,replicate,accuracy,policy_tokens,reward_tokens,flops";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("grid has no rows")]
    EmptyGrid,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Scientific notation with 10 significant digits.
pub fn fmt_sig10(x: f64) -> String {
    format!("{x:.9e}")
}

/// Round to the nearest 10-significant-digit decimal.
pub fn round_sig10(x: f64) -> f64 {
    fmt_sig10(x).parse().expect("formatted float parses")
}

/// Render the grid as CSV: fixed header, rows sorted by
/// (model_size, strategy, n_samples, replicate).
pub fn emit_csv(grid: &ExperimentGrid) -> Result<String, CsvError> {
    if grid.rows.is_empty() {
        return Err(CsvError::EmptyGrid);
    }
    let mut rows: Vec<&GridRow> = grid.rows.iter().collect();
    rows.sort_by(|a, b| {
        (a.model_size, &a.strategy, a.n_samples, a.replicate).cmp(&(
            b.model_size,
            &b.strategy,
            b.n_samples,
            b.replicate,
        ))
    });
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        debug_assert!(!row.strategy.contains([',', '"', '\n']));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.model_size,
            row.strategy,
            row.n_samples,
            row.replicate,
            fmt_sig10(row.accuracy),
            row.policy_tokens,
            row.reward_tokens,
            fmt_sig10(row.flops),
        ));
    }
    Ok(out)
}

pub fn write_csv(grid: &ExperimentGrid, path: &Path) -> Result<(), CsvError> {
    std::fs::write(path, emit_csv(grid)?)?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, name: &str) -> Result<T, CsvError> {
    raw.parse().map_err(|_| CsvError::Parse {
        line,
        message: format!("cannot parse {name} from `{raw}`"),
    })
}

/// Strict parser for the exact format `emit_csv` writes.
pub fn parse_csv(text: &str) -> Result<ExperimentGrid, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(CsvError::Parse {
                line: 1,
                message: format!("unexpected header `{header}`"),
            })
        }
        None => {
            return Err(CsvError::Parse {
                line: 1,
                message: "empty input".to_string(),
            })
        }
    }
    let mut rows = Vec::new();
    for (index, raw) in lines {
        let line = index + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 8 {
            return Err(CsvError::Parse {
                line,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let strategy = fields[1].to_string();
        if strategy.is_empty() {
            return Err(CsvError::Parse {
                line,
                message: "empty strategy label".to_string(),
            });
        }
        let accuracy: f64 = parse_field(fields[4], line, "accuracy")?;
        let flops: f64 = parse_field(fields[7], line, "flops")?;
        if !accuracy.is_finite() || !(0.0..=1.0).contains(&accuracy) {
            return Err(CsvError::Parse {
                line,
                message: format!("accuracy {accuracy} out of range"),
            });
        }
        if !flops.is_finite() || flops < 0.0 {
            return Err(CsvError::Parse {
                line,
                message: format!("flops {flops} out of range"),
            });
        }
        rows.push(GridRow {
            model_size: parse_field(fields[0], line, "model_size")?,
            strategy,
            n_samples: parse_field(fields[2], line, "n_samples")?,
            replicate: parse_field(fields[3], line, "replicate")?,
            accuracy,
            policy_tokens: parse_field(fields[5], line, "policy_tokens")?,
            reward_tokens: parse_field(fields[6], line, "reward_tokens")?,
            flops,
        });
    }
    if rows.is_empty() {
        return Err(CsvError::EmptyGrid);
    }
    Ok(ExperimentGrid { rows })
}
