//! Decoding with memory reads.
//!
//! Generated tokens are fed to a [`StreamParser`]. When a read call reaches
//! `)-->` its queries run against the store. A useful result is appended to
//! the context and decoding resumes. An empty or oversized result rewinds
//! the context to the token that started the call, bans that token there and
//! lets the generator continue with its next-ranked candidate. When a new
//! read call starts, the previous one is removed from the context.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::generator::{context_hash, TokenGenerator, EOS};
use super::HarnessError;
use crate::protocol::{
    rewrite_plan_from, sanitize_name, serialize_results, EventKind, ParserConfig, StreamParser,
    READ_OPEN,
};
use crate::retrieval::{execute_batch, AmbiguityList, MemoryQuery, RetrievalThresholds};
use crate::store::MemoryStore;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadDecodeConfig {
    pub max_new_tokens: usize,
    /// Decoding stops once the generated text ends with one of these.
    pub stop_sequences: Vec<String>,
    pub parser: ParserConfig,
}

impl Default for ReadDecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 256,
            stop_sequences: Vec::new(),
            parser: ParserConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadStatus {
    /// Results were appended and the call is still in the context.
    Kept,
    /// No entities came back; the call was dropped.
    Empty,
    /// More than `q_thr` entities came back; the call was dropped.
    Overflow,
    /// A later read call replaced it.
    Superseded,
    /// Decoding ended inside the call.
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadRecord {
    pub queries: Vec<MemoryQuery>,
    pub results: Vec<String>,
    pub status: ReadStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EndOfSequence,
    StopSequence,
    MaxTokens,
    /// Every candidate was banned.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadDecodeOutcome {
    /// Prompt plus generated text after all rewrites.
    pub text: String,
    /// `text` without the prompt.
    pub generated: String,
    pub reads: Vec<ReadRecord>,
    pub stop: StopReason,
}

#[derive(Clone)]
struct TokenEntry {
    start: usize,
    token: String,
    parser: StreamParser,
    forced: bool,
}

struct OpenCall {
    start: usize,
    record: Option<usize>,
}

struct Decoder<'a> {
    generator: &'a dyn TokenGenerator,
    store: &'a MemoryStore,
    thresholds: &'a RetrievalThresholds,
    ambiguity: &'a AmbiguityList,
    config: &'a ReadDecodeConfig,
    protected: usize,
    context: String,
    parser: StreamParser,
    history: Vec<TokenEntry>,
    banned: HashMap<u64, HashSet<String>>,
    reads: Vec<ReadRecord>,
    open: Option<OpenCall>,
    /// Record of the read call currently kept in the context.
    kept: Option<usize>,
}

enum Step {
    Continue,
    Rewound,
}

impl Decoder<'_> {
    fn push_token(&mut self, token: &str, forced: bool) -> Result<Step, HarnessError> {
        self.history.push(TokenEntry {
            start: self.context.len(),
            token: token.to_string(),
            parser: self.parser.clone(),
            forced,
        });
        let mut buf = [0u8; 4];
        for c in token.chars() {
            self.context.push(c);
            for ev in self.parser.feed(c.encode_utf8(&mut buf)) {
                match &ev.kind {
                    EventKind::ReadCallStart => {
                        if let Some(r) =
                            rewrite_plan_from(&self.context, &ev, self.thresholds, self.protected)
                        {
                            self.remove_range(r);
                            if let Some(k) = self.kept.take() {
                                self.reads[k].status = ReadStatus::Superseded;
                            }
                        }
                        self.open = Some(OpenCall {
                            start: self.context.len() - READ_OPEN.len(),
                            record: None,
                        });
                    }
                    EventKind::ReadCallOpen(call) => {
                        let result = execute_batch(
                            self.store,
                            &call.queries,
                            self.thresholds,
                            self.ambiguity,
                        )?;
                        let names: Vec<String> = result
                            .names()
                            .into_iter()
                            .filter_map(sanitize_name)
                            .collect();
                        let status = if result.overflowed {
                            Some(ReadStatus::Overflow)
                        } else if names.is_empty() {
                            Some(ReadStatus::Empty)
                        } else {
                            None
                        };
                        self.reads.push(ReadRecord {
                            queries: call.queries.clone(),
                            results: names.clone(),
                            status: status.unwrap_or(ReadStatus::Kept),
                        });
                        if status.is_some() {
                            self.reject_open_call();
                            return Ok(Step::Rewound);
                        }
                        if let Some(open) = &mut self.open {
                            open.record = Some(self.reads.len() - 1);
                        }
                        let text = serialize_results(&names)?;
                        self.context.push_str(&text);
                        self.parser.feed(&text);
                        self.kept = self.open.take().and_then(|o| o.record);
                        // The rest of the token is dropped: results come from memory.
                        return Ok(Step::Continue);
                    }
                    _ => {}
                }
            }
        }
        Ok(Step::Continue)
    }

    fn remove_range(&mut self, r: std::ops::Range<usize>) {
        let len = r.end - r.start;
        self.context.replace_range(r.clone(), "");
        self.history
            .retain(|e| e.start < r.start || e.start >= r.end);
        for e in &mut self.history {
            if e.start >= r.end {
                e.start -= len;
            }
        }
    }

    /// Drops the call that just failed and arranges for a different continuation.
    fn reject_open_call(&mut self) {
        let Some(open) = self.open.take() else {
            return;
        };
        // The token holding the first character of the call marker.
        let idx = self
            .history
            .iter()
            .rposition(|e| e.start <= open.start)
            .expect("call start inside history");
        let entry = self.history[idx].clone();
        self.history.truncate(idx);
        if entry.forced || entry.start < self.protected {
            // Nothing to ban: drop the call text and continue from its start.
            let mut parser = entry.parser;
            self.context.truncate(entry.start);
            let keep = self.context.len();
            let prefix = entry.token[..open
                .start
                .saturating_sub(entry.start)
                .min(entry.token.len())]
                .to_string();
            self.context.push_str(&prefix);
            parser.feed(&prefix);
            debug_assert!(self.context.len() >= keep);
            self.parser = parser;
            return;
        }
        self.context.truncate(entry.start);
        self.parser = entry.parser;
        self.banned
            .entry(context_hash(&self.context))
            .or_default()
            .insert(entry.token);
    }

    fn generated_ends_with_stop(&self) -> bool {
        let generated = &self.context[self.protected..];
        !self.parser.in_call()
            && self
                .config
                .stop_sequences
                .iter()
                .any(|s| !s.is_empty() && generated.ends_with(s.as_str()))
    }

    fn run(mut self, forced_prefix: &str) -> Result<ReadDecodeOutcome, HarnessError> {
        if !forced_prefix.is_empty() {
            self.push_token(forced_prefix, true)?;
        }
        let mut steps = 0usize;
        let stop = loop {
            if steps >= self.config.max_new_tokens {
                break StopReason::MaxTokens;
            }
            if self.generated_ends_with_stop() {
                break StopReason::StopSequence;
            }
            steps += 1;
            let dist = self.generator.next_distribution(&self.context)?;
            let banned = self.banned.get(&context_hash(&self.context));
            let Some(choice) = dist
                .iter()
                .find(|t| banned.is_none_or(|b| !b.contains(&t.token)))
            else {
                break StopReason::Exhausted;
            };
            if choice.token == EOS {
                break StopReason::EndOfSequence;
            }
            let token = choice.token.clone();
            self.push_token(&token, false)?;
        };

        if self.parser.in_call() {
            if let Some(open) = self.open.take() {
                self.context.truncate(open.start);
                self.reads.push(ReadRecord {
                    queries: Vec::new(),
                    results: Vec::new(),
                    status: ReadStatus::Unfinished,
                });
            }
        }
        let generated = self.context[self.protected..].to_string();
        Ok(ReadDecodeOutcome {
            text: self.context,
            generated,
            reads: self.reads,
            stop,
        })
    }
}

/// Decodes after `prompt`, starting with `forced_prefix` as if generated.
///
/// Read calls inside `prompt` are never rewritten.
pub fn run_read_decode_with(
    prompt: &str,
    forced_prefix: &str,
    generator: &dyn TokenGenerator,
    store: &MemoryStore,
    thresholds: &RetrievalThresholds,
    ambiguity: &AmbiguityList,
    config: &ReadDecodeConfig,
) -> Result<ReadDecodeOutcome, HarnessError> {
    let mut parser = StreamParser::new(config.parser);
    parser.feed(prompt);
    if parser.in_call() {
        return Err(HarnessError::Decode("prompt ends inside a call".into()));
    }
    let decoder = Decoder {
        generator,
        store,
        thresholds,
        ambiguity,
        config,
        protected: prompt.len(),
        context: prompt.to_string(),
        parser,
        history: Vec::new(),
        banned: HashMap::new(),
        reads: Vec::new(),
        open: None,
        kept: None,
    };
    decoder.run(forced_prefix)
}

/// Decodes after `prompt` with the default ambiguity list and decoding limits.
pub fn run_read_decode(
    prompt: &str,
    generator: &dyn TokenGenerator,
    store: &MemoryStore,
    thresholds: &RetrievalThresholds,
) -> Result<ReadDecodeOutcome, HarnessError> {
    run_read_decode_with(
        prompt,
        "",
        generator,
        store,
        thresholds,
        &AmbiguityList::default(),
        &ReadDecodeConfig::default(),
    )
}
