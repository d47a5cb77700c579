//! Per-episode time series as CSV.

use std::io::{Read, Write};
use std::path::Path;

use super::simulate::{ExperimentRecord, RecordRow};

pub const CSV_HEADER: [&str; 7] = [
    "episode",
    "contamination_amount",
    "reward_manipulations",
    "action_manipulations",
    "target_matches",
    "total_steps",
    "true_regret",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed record file: {0}")]
    Format(String),
}

/// Decimal notation with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    // round through scientific notation, then print positionally
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let exponent = rounded.abs().log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(record: &ExperimentRecord, out: W) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in &record.rows {
        w.write_record([
            row.episode.to_string(),
            format_sig12(row.contamination_amount),
            row.reward_manipulations.to_string(),
            row.action_manipulations.to_string(),
            row.target_matches.to_string(),
            row.total_steps.to_string(),
            format_sig12(row.true_regret),
        ])?;
    }
    w.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

/// Writes the record's time series to `path`.
pub fn emit_csv(record: &ExperimentRecord, path: &Path) -> Result<(), CsvError> {
    let file = std::fs::File::create(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(record, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<RecordRow>, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CsvError::Format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let int = |i: usize| -> Result<u64, CsvError> {
            rec[i].parse().map_err(|e| CsvError::Format(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let real = |i: usize| -> Result<f64, CsvError> {
            rec[i].parse().map_err(|e| CsvError::Format(format!("column {}: {e}", CSV_HEADER[i])))
        };
        rows.push(RecordRow {
            episode: int(0)?,
            contamination_amount: real(1)?,
            reward_manipulations: int(2)?,
            action_manipulations: int(3)?,
            target_matches: int(4)?,
            total_steps: int(5)?,
            true_regret: real(6)?,
        });
    }
    Ok(rows)
}
