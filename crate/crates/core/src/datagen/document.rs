//! Annotated input documents.
//!
//! One JSON object per line:
//!
//! ```json
//! {"id": "d1",
//!  "sentences": ["Tiziano Ferro released Alla Mia Età.", "It sold well."],
//!  "mentions": [{"entity": "Tiziano Ferro", "sentence": 0, "start": 0, "end": 13, "full": true},
//!               {"entity": "Alla Mia Età", "sentence": 1, "start": 0, "end": 2, "full": false}],
//!  "triples": [{"subject": "Alla Mia Età", "relation": "performer", "object": "Tiziano Ferro", "evidence": [0]}]}
//! ```
//!
//! Spans are character offsets within the sentence. The document text is the
//! sentences joined by single spaces; `position`, when given, must equal the
//! mention's character offset in that text.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::protocol::sanitize_name;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub entity: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    /// A named mention rather than a pronoun or other reference.
    pub full: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

impl DocTriple {
    pub fn key(&self) -> (String, String, String) {
        (
            self.subject.clone(),
            self.relation.clone(),
            self.object.clone(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub sentences: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<Mention>,
    #[serde(default)]
    pub triples: Vec<DocTriple>,
}

/// Original name to sanitized name (`None` when the name was dropped).
pub type SanitizeLog = BTreeMap<String, Option<String>>;

impl AnnotatedDocument {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }

    /// Character offset of each sentence in [`AnnotatedDocument::text`].
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sentences.len());
        let mut at = 0;
        for s in &self.sentences {
            offsets.push(at);
            at += s.chars().count() + 1;
        }
        offsets
    }

    /// Document-level character offset of a mention.
    pub fn position(&self, m: &Mention) -> usize {
        self.sentence_offsets()[m.sentence] + m.start
    }

    /// Mentions with their positions, sorted by position (stable).
    pub fn mentions_in_order(&self) -> Vec<(usize, &Mention)> {
        let offsets = self.sentence_offsets();
        let mut v: Vec<(usize, &Mention)> = self
            .mentions
            .iter()
            .map(|m| (offsets[m.sentence] + m.start, m))
            .collect();
        v.sort_by_key(|(p, _)| *p);
        v
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let invalid = |msg: String| DatagenError::InvalidDocument {
            id: self.id.clone(),
            message: msg,
        };
        let offsets = self.sentence_offsets();
        let mut seen_positions = HashSet::new();
        for (i, m) in self.mentions.iter().enumerate() {
            let Some(sentence) = self.sentences.get(m.sentence) else {
                return Err(invalid(format!(
                    "mention {i}: sentence {} out of range",
                    m.sentence
                )));
            };
            if m.start >= m.end || m.end > sentence.chars().count() {
                return Err(invalid(format!(
                    "mention {i}: span {}..{} out of bounds",
                    m.start, m.end
                )));
            }
            let pos = offsets[m.sentence] + m.start;
            if let Some(p) = m.position {
                if p != pos {
                    return Err(invalid(format!(
                        "mention {i}: position {p} does not match offset {pos}"
                    )));
                }
            }
            if !seen_positions.insert((m.entity.as_str(), pos)) {
                return Err(invalid(format!(
                    "mention {i}: duplicate mention of {:?} at {pos}",
                    m.entity
                )));
            }
            if m.entity.trim().is_empty() {
                return Err(invalid(format!("mention {i}: empty entity name")));
            }
        }
        for (i, t) in self.triples.iter().enumerate() {
            if t.subject.trim().is_empty()
                || t.relation.trim().is_empty()
                || t.object.trim().is_empty()
            {
                return Err(invalid(format!("triple {i}: empty field")));
            }
            if let Some(e) = t.evidence.iter().find(|e| **e >= self.sentences.len()) {
                return Err(invalid(format!(
                    "triple {i}: evidence sentence {e} out of range"
                )));
            }
        }
        Ok(())
    }

    /// Rewrites names so they serialize cleanly; drops what cannot be kept.
    pub fn sanitized(&self, log: &mut SanitizeLog) -> Self {
        let mut clean = |name: &str| -> Option<String> {
            let s = sanitize_name(name);
            if s.as_deref() != Some(name) {
                log.insert(name.to_string(), s.clone());
            }
            s
        };
        let mentions = self
            .mentions
            .iter()
            .filter_map(|m| {
                Some(Mention {
                    entity: clean(&m.entity)?,
                    ..m.clone()
                })
            })
            .collect();
        let triples = self
            .triples
            .iter()
            .filter_map(|t| {
                Some(DocTriple {
                    subject: clean(&t.subject)?,
                    relation: clean(&t.relation)?,
                    object: clean(&t.object)?,
                    evidence: t.evidence.clone(),
                })
            })
            .collect();
        Self {
            id: self.id.clone(),
            sentences: self.sentences.clone(),
            mentions,
            triples,
        }
    }
}

/// Reads documents, one JSON object per non-blank line.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<AnnotatedDocument>, DatagenError> {
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: AnnotatedDocument =
            serde_json::from_str(&line).map_err(|e| DatagenError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Character range `start..end` of `text` as a byte slice.
pub(crate) fn char_slice(text: &str, start: usize, end: Option<usize>) -> &str {
    let mut idx = text.char_indices().map(|(b, _)| b).chain([text.len()]);
    let b0 = idx.nth(start).unwrap_or(text.len());
    let b1 = match end {
        Some(e) if e >= start => {
            let mut idx = text.char_indices().map(|(b, _)| b).chain([text.len()]);
            idx.nth(e).unwrap_or(text.len())
        }
        _ => text.len(),
    };
    &text[b0..b1]
}
