//! Knowledge editing through the memory.
//!
//! Edits are turned into write-scan inputs (`question It is or they are
//! answer`), extracted into triples and upserted so a later edit of the same
//! subject and relation replaces the earlier object. Evaluation asks each
//! question with a few-shot QA prompt and a read call forced right after the
//! question mark.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::embedding::normalize_text;
use crate::harness::{
    run_read_decode_with, HarnessError, LateStopConfig, LateStopDecoder, ReadDecodeConfig,
    ReadDecodeOutcome, TokenGenerator, WriteExtractor, WriteScanInput,
};
use crate::par::{IntoParallelRefIterator, ParallelIterator};
use crate::protocol::{serialize_read, EventKind, ParserConfig, ReadCall, StreamParser, READ_OPEN};
use crate::retrieval::{AmbiguityList, MemoryQuery, RetrievalThresholds};
use crate::store::MemoryStore;

pub const EDIT_BRIDGE: &str = " It is or they are ";

#[derive(Debug, thiserror::Error)]
pub enum EditingError {
    #[error("invalid edit case: {0}")]
    InvalidEdit(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCase {
    pub prompt: String,
    pub edit_answer: String,
    pub generalization_prompt: String,
    pub locality_prompt: String,
    pub locality_expected: String,
}

impl EditCase {
    pub fn validate(&self) -> Result<(), EditingError> {
        for (name, v) in [
            ("prompt", &self.prompt),
            ("edit_answer", &self.edit_answer),
            ("generalization_prompt", &self.generalization_prompt),
            ("locality_prompt", &self.locality_prompt),
            ("locality_expected", &self.locality_expected),
        ] {
            if v.trim().is_empty() {
                return Err(EditingError::InvalidEdit(format!("{name} is empty")));
            }
        }
        Ok(())
    }
}

/// Reads one JSON edit case per non-blank line.
pub fn read_edit_cases<R: BufRead>(reader: R) -> Result<Vec<EditCase>, EditingError> {
    let mut cases = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case: EditCase = serde_json::from_str(&line).map_err(|e| EditingError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        case.validate().map_err(|e| EditingError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        cases.push(case);
    }
    Ok(cases)
}

/// The focus sentence is the question followed by the bridge and the answer; no pretext.
pub fn format_edit_input(case: &EditCase) -> Result<WriteScanInput, EditingError> {
    if case.prompt.trim().is_empty() {
        return Err(EditingError::InvalidEdit("prompt is empty".into()));
    }
    if case.edit_answer.trim().is_empty() {
        return Err(EditingError::InvalidEdit("edit answer is empty".into()));
    }
    Ok(WriteScanInput::new(
        Vec::new(),
        format!("{}{EDIT_BRIDGE}{}", case.prompt, case.edit_answer),
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseWriteReport {
    pub index: usize,
    pub extracted: usize,
    pub inserted: usize,
    pub replaced: usize,
    pub empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub cases: Vec<CaseWriteReport>,
}

impl EditReport {
    pub fn extracted(&self) -> usize {
        self.cases.iter().map(|c| c.extracted).sum()
    }

    pub fn replaced(&self) -> usize {
        self.cases.iter().map(|c| c.replaced).sum()
    }

    pub fn empty(&self) -> usize {
        self.cases.iter().filter(|c| c.empty).count()
    }

    pub fn failed(&self) -> usize {
        self.cases.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Extracts and upserts each edit in order. Failures are recorded per case.
pub fn apply_edits_with(
    cases: &[EditCase],
    extractor: &dyn WriteExtractor,
    store: &mut MemoryStore,
) -> EditReport {
    let mut report = EditReport::default();
    for (index, case) in cases.iter().enumerate() {
        let mut r = CaseWriteReport {
            index,
            ..Default::default()
        };
        let outcome = format_edit_input(case)
            .and_then(|input| Ok(extractor.extract(&input)?))
            .and_then(|call| {
                r.extracted = call.triples.len();
                r.empty = call.triples.is_empty();
                for t in &call.triples {
                    let u = store
                        .upsert_edit_triple(&t.subject, &t.relation, &t.object)
                        .map_err(HarnessError::from)?;
                    r.inserted += usize::from(u.inserted);
                    r.replaced += u.replaced.len();
                }
                Ok(())
            });
        if let Err(e) = outcome {
            r.error = Some(e.to_string());
        }
        report.cases.push(r);
    }
    report
}

/// [`apply_edits_with`] using late-stopping decoding over `generator`.
pub fn apply_edits(
    cases: &[EditCase],
    generator: &dyn TokenGenerator,
    store: &mut MemoryStore,
    config: &LateStopConfig,
) -> EditReport {
    let decoder = LateStopDecoder {
        generator,
        config: *config,
    };
    apply_edits_with(cases, &decoder, store)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExemplar {
    pub question: String,
    pub answer: String,
    /// A complete read call placed after the question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read: Option<ReadCall>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPrompt {
    pub exemplars: Vec<QaExemplar>,
}

impl Default for QaPrompt {
    fn default() -> Self {
        let plain = |q: &str, a: &str| QaExemplar {
            question: q.into(),
            answer: a.into(),
            read: None,
        };
        Self {
            exemplars: vec![
                plain("What is the capital of France?", "Paris"),
                plain("Who wrote Hamlet?", "William Shakespeare"),
                plain("Which river flows through Cairo?", "Nile"),
                plain("What language is spoken in Brazil?", "Portuguese"),
                QaExemplar {
                    question: "Which country is Naples located in?".into(),
                    answer: "Italy".into(),
                    read: Some(ReadCall {
                        queries: vec![MemoryQuery::object("Naples", "country")],
                        results: Some(vec!["Italy".into()]),
                    }),
                },
            ],
        }
    }
}

impl QaPrompt {
    /// Exemplars as `Q: question A: answer` lines, then `Q: question` for the test item.
    pub fn render(&self, question: &str) -> Result<String, EditingError> {
        let mut s = String::new();
        for ex in &self.exemplars {
            s.push_str("Q: ");
            s.push_str(&ex.question);
            if let Some(call) = &ex.read {
                s.push_str(&serialize_read(call).map_err(HarnessError::from)?);
            }
            s.push_str(" A: ");
            s.push_str(&ex.answer);
            s.push('\n');
        }
        s.push_str("Q: ");
        s.push_str(question);
        Ok(s)
    }
}

/// Plain text of generated output with call spans removed, cut at the first line break,
/// and without a leading `A:`.
pub fn extract_answer(generated: &str) -> String {
    let events = StreamParser::parse_all(generated, ParserConfig::default());
    let plain: String = events
        .iter()
        .filter(|e| e.kind == EventKind::PlainText)
        .map(|e| e.raw.as_str())
        .collect();
    let plain = plain.trim_start();
    let plain = plain.strip_prefix("A:").unwrap_or(plain);
    plain.lines().next().unwrap_or("").trim().to_string()
}

/// Lowercased, punctuation and articles removed, whitespace collapsed.
pub fn normalize_answer(answer: &str) -> String {
    let no_punct: String = answer
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    normalize_text(&no_punct)
        .split(' ')
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn answers_match(predicted: &str, expected: &str) -> bool {
    normalize_answer(predicted) == normalize_answer(expected)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EditScores {
    pub reliability: f64,
    pub generalization: f64,
    pub locality: f64,
    pub average: f64,
}

impl EditScores {
    pub fn new(reliability: f64, generalization: f64, locality: f64) -> Self {
        Self {
            reliability,
            generalization,
            locality,
            average: (reliability + generalization + locality) / 3.0,
        }
    }
}

/// Why a reliability prompt was answered wrongly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditFailure {
    /// The edited answer is not in memory.
    WriteMiss,
    /// It is in memory but the read did not return it.
    ReadMiss,
    /// It was returned but not used in the answer.
    UseMiss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub index: usize,
    pub reliability_answer: String,
    pub generalization_answer: String,
    pub locality_answer: String,
    pub reliable: bool,
    pub general: bool,
    pub local: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<EditFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEvaluation {
    pub scores: EditScores,
    pub cases: Vec<CaseEvaluation>,
}

#[derive(Debug, Clone)]
pub struct EditEvalConfig {
    pub thresholds: RetrievalThresholds,
    pub ambiguity: AmbiguityList,
    pub prompt: QaPrompt,
    pub decode: ReadDecodeConfig,
}

impl Default for EditEvalConfig {
    fn default() -> Self {
        Self {
            thresholds: RetrievalThresholds::editing(),
            ambiguity: AmbiguityList::default(),
            prompt: QaPrompt::default(),
            decode: ReadDecodeConfig {
                max_new_tokens: 64,
                stop_sequences: vec!["\n".into()],
                ..Default::default()
            },
        }
    }
}

fn ask(
    question: &str,
    generator: &dyn TokenGenerator,
    store: &MemoryStore,
    config: &EditEvalConfig,
) -> Result<ReadDecodeOutcome, EditingError> {
    let prompt = config.prompt.render(question)?;
    Ok(run_read_decode_with(
        &prompt,
        READ_OPEN,
        generator,
        store,
        &config.thresholds,
        &config.ambiguity,
        &config.decode,
    )?)
}

fn evaluate_case(
    index: usize,
    case: &EditCase,
    generator: &dyn TokenGenerator,
    store: &MemoryStore,
    config: &EditEvalConfig,
) -> Result<CaseEvaluation, EditingError> {
    let rel = ask(&case.prompt, generator, store, config)?;
    let gen = ask(&case.generalization_prompt, generator, store, config)?;
    let loc = ask(&case.locality_prompt, generator, store, config)?;
    let reliability_answer = extract_answer(&rel.generated);
    let reliable = answers_match(&reliability_answer, &case.edit_answer);
    let failure = if reliable {
        None
    } else {
        let wanted = normalize_answer(&case.edit_answer);
        let stored = store
            .entities()
            .any(|e| normalize_answer(&e.name) == wanted);
        let retrieved = rel
            .reads
            .iter()
            .any(|r| r.results.iter().any(|n| normalize_answer(n) == wanted));
        Some(if !stored {
            EditFailure::WriteMiss
        } else if !retrieved {
            EditFailure::ReadMiss
        } else {
            EditFailure::UseMiss
        })
    };
    let generalization_answer = extract_answer(&gen.generated);
    let locality_answer = extract_answer(&loc.generated);
    Ok(CaseEvaluation {
        index,
        general: answers_match(&generalization_answer, &case.edit_answer),
        local: answers_match(&locality_answer, &case.locality_expected),
        reliability_answer,
        generalization_answer,
        locality_answer,
        reliable,
        failure,
    })
}

/// Scores every case against a frozen store. Cases run in parallel.
pub fn evaluate_edits(
    cases: &[EditCase],
    generator: &dyn TokenGenerator,
    store: &MemoryStore,
    config: &EditEvalConfig,
) -> Result<EditEvaluation, EditingError> {
    let indexed: Vec<(usize, &EditCase)> = cases.iter().enumerate().collect();
    let evaluated: Vec<CaseEvaluation> = indexed
        .par_iter()
        .map(|(i, c)| evaluate_case(*i, c, generator, store, config))
        .collect::<Result<_, _>>()?;
    let frac = |f: fn(&CaseEvaluation) -> bool| {
        if evaluated.is_empty() {
            0.0
        } else {
            evaluated.iter().filter(|c| f(c)).count() as f64 / evaluated.len() as f64
        }
    };
    Ok(EditEvaluation {
        scores: EditScores::new(frac(|c| c.reliable), frac(|c| c.general), frac(|c| c.local)),
        cases: evaluated,
    })
}
