//! Line-delimited example files.
//!
//! The first line is a header `{"format":"tripmem-examples","version":1}`.
//! Every following line is one example tagged with `kind` (`write` or
//! `read`). Each record also carries its full `text` and the character
//! `loss_spans` that receive training loss; both are checked on import.

use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::read::ReadExample;
use super::write::WriteExample;
use super::DatagenError;

pub const EXPORT_FORMAT: &str = "tripmem-examples";
pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Example {
    Write(WriteExample),
    Read(ReadExample),
}

impl Example {
    pub fn text(&self) -> String {
        match self {
            Example::Write(w) => format!("{}{}", w.input, w.target),
            Example::Read(r) => r.text(),
        }
    }

    pub fn loss_spans(&self) -> Vec<Range<usize>> {
        match self {
            Example::Write(w) => {
                let a = w.input.chars().count();
                vec![a..a + w.target.chars().count()]
            }
            Example::Read(r) => r.loss_spans(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    example: Example,
    text: String,
    loss_spans: Vec<[usize; 2]>,
}

pub fn write_examples<W: Write>(mut out: W, examples: &[Example]) -> Result<(), DatagenError> {
    serde_json::to_writer(
        &mut out,
        &Header {
            format: EXPORT_FORMAT.into(),
            version: EXPORT_VERSION,
        },
    )
    .map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for ex in examples {
        let record = Record {
            text: ex.text(),
            loss_spans: ex
                .loss_spans()
                .into_iter()
                .map(|r| [r.start, r.end])
                .collect(),
            example: ex.clone(),
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_examples<R: BufRead>(reader: R) -> Result<Vec<Example>, DatagenError> {
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, message: String| DatagenError::Parse { line, message };
    let header_line = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format != EXPORT_FORMAT || header.version != EXPORT_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(idx + 1, e.to_string()))?;
        let spans: Vec<[usize; 2]> = rec
            .example
            .loss_spans()
            .into_iter()
            .map(|r| [r.start, r.end])
            .collect();
        if rec.text != rec.example.text() || rec.loss_spans != spans {
            return Err(parse_err(
                idx + 1,
                "text or loss spans do not match the example fields".into(),
            ));
        }
        out.push(rec.example);
    }
    Ok(out)
}

pub fn export_examples(
    path: impl AsRef<std::path::Path>,
    examples: &[Example],
) -> Result<(), DatagenError> {
    let file = std::fs::File::create(path)?;
    write_examples(std::io::BufWriter::new(file), examples)
}

pub fn import_examples(path: impl AsRef<std::path::Path>) -> Result<Vec<Example>, DatagenError> {
    let file = std::fs::File::open(path)?;
    read_examples(std::io::BufReader::new(file))
}
