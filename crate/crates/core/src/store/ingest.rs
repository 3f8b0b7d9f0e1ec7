//! Bulk ingestion of `subject<TAB>relation<TAB>object[<TAB>provenance]` lines.

use std::io::BufRead;

use super::{MemoryStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BulkRecord {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct IngestError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines_read: usize,
    pub inserted: usize,
    pub duplicates: usize,
    pub errors: Vec<IngestError>,
}

/// Parses one bulk line. Blank lines and `#` comments yield `Ok(None)`.
pub fn parse_bulk_line(line: &str, line_no: usize) -> Result<Option<BulkRecord>, IngestError> {
    let line = line.trim_end_matches(['\n', '\r']);
    if line.trim().is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    let err = |message: String| IngestError {
        line: line_no,
        message,
    };
    if !(3..=4).contains(&fields.len()) {
        return Err(err(format!(
            "expected 3 or 4 tab-separated fields, found {}",
            fields.len()
        )));
    }
    for (i, role) in ["subject", "relation", "object"].iter().enumerate() {
        if fields[i].trim().is_empty() {
            return Err(err(format!("empty {role}")));
        }
    }
    Ok(Some(BulkRecord {
        subject: fields[0].trim().to_string(),
        relation: fields[1].trim().to_string(),
        object: fields[2].trim().to_string(),
        provenance: fields
            .get(3)
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(str::to_string),
    }))
}

const BATCH: usize = 4096;

impl MemoryStore {
    /// Reads bulk lines and inserts them with deduplication.
    ///
    /// With `continue_on_error` malformed lines are collected in the report;
    /// otherwise the first one aborts ingestion (already-flushed batches stay
    /// inserted).
    pub fn ingest_reader<R: BufRead>(
        &mut self,
        reader: R,
        continue_on_error: bool,
    ) -> Result<IngestReport, IngestOutcomeError> {
        let mut report = IngestReport::default();
        let mut batch = Vec::with_capacity(BATCH);
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(StoreError::from)?;
            report.lines_read += 1;
            match parse_bulk_line(&line, idx + 1) {
                Ok(Some(rec)) => batch.push(rec),
                Ok(None) => {}
                Err(e) if continue_on_error => report.errors.push(e),
                Err(e) => {
                    self.flush_batch(&mut batch, &mut report)?;
                    return Err(IngestOutcomeError::Line(e));
                }
            }
            if batch.len() >= BATCH {
                self.flush_batch(&mut batch, &mut report)?;
            }
        }
        self.flush_batch(&mut batch, &mut report)?;
        Ok(report)
    }

    fn flush_batch(
        &mut self,
        batch: &mut Vec<super::BulkRecord>,
        report: &mut IngestReport,
    ) -> Result<(), StoreError> {
        for (_, inserted) in self.insert_batch(batch)? {
            if inserted {
                report.inserted += 1;
            } else {
                report.duplicates += 1;
            }
        }
        batch.clear();
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestOutcomeError {
    #[error(transparent)]
    Line(IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
