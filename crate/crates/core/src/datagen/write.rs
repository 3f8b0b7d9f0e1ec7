//! Memory-write examples, one per sentence.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::document::AnnotatedDocument;
use super::DatagenError;
use crate::harness::WriteScanInput;
use crate::protocol::{serialize_write, TripleText, WriteCall};

/// Input is the write-scan text; loss applies to `target` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    pub sentence: usize,
    pub input: String,
    pub target: String,
}

/// Triples extractable from sentence `i`: one participant has a full mention
/// in sentence `i` and the other a full mention in sentences `0..=i`.
pub fn sentence_triples(doc: &AnnotatedDocument, i: usize) -> Vec<TripleText> {
    let full_in = |entity: &str, pred: &dyn Fn(usize) -> bool| {
        doc.mentions
            .iter()
            .any(|m| m.full && m.entity == entity && pred(m.sentence))
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in &doc.triples {
        let here_s = full_in(&t.subject, &|s| s == i);
        let here_o = full_in(&t.object, &|s| s == i);
        let upto_s = full_in(&t.subject, &|s| s <= i);
        let upto_o = full_in(&t.object, &|s| s <= i);
        if ((here_s && upto_o) || (here_o && upto_s)) && seen.insert(t.key()) {
            out.push(TripleText::new(&t.subject, &t.relation, &t.object));
        }
    }
    out
}

/// One example per sentence; sentences without qualifying triples get an empty call.
pub fn generate_write_examples(doc: &AnnotatedDocument) -> Result<Vec<WriteExample>, DatagenError> {
    (0..doc.sentences.len())
        .map(|i| {
            let input = WriteScanInput::new(doc.sentences[..i].to_vec(), doc.sentences[i].clone());
            let call = WriteCall {
                triples: sentence_triples(doc, i),
            };
            Ok(WriteExample {
                doc: doc.id.clone(),
                sentence: i,
                input: input.serialize(),
                target: serialize_write(&call)?,
            })
        })
        .collect()
}
