use std::io::{BufRead, Write};

use crate::driver::DiagnosticsRecord;
use crate::error::{Error, Result};

/// Appends one record as a single JSON line.
pub fn write_record(out: &mut impl Write, rec: &DiagnosticsRecord) -> Result<()> {
    let line = serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{line}")?;
    out.flush()?;
    Ok(())
}

pub fn read_records(input: impl BufRead) -> Result<Vec<DiagnosticsRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
