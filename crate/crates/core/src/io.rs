//! CSV output with a single `# {json}` provenance line on top, so a file
//! can be traced back to the run configuration that produced it.

use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("missing '# ' configuration header")]
    MissingHeader,
}

/// Writes `# <config json>` followed by the CSV rows (with a header row).
pub fn write_csv<W: Write, C: Serialize, R: Serialize>(mut w: W, config: &C, rows: &[R]) -> Result<(), IoError> {
    writeln!(w, "# {}", serde_json::to_string(config)?)?;
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_csv`].
pub fn read_csv<Rd: Read, C: DeserializeOwned, R: DeserializeOwned>(r: Rd) -> Result<(C, Vec<R>), IoError> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first.strip_prefix("# ").ok_or(IoError::MissingHeader)?;
    let config = serde_json::from_str(json.trim_end())?;
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(reader).deserialize() {
        rows.push(rec?);
    }
    Ok((config, rows))
}
