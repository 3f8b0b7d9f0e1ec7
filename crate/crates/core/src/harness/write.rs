//! Memory-write decoding with late stopping.
//!
//! Decoding is greedy except when the top candidate is the call close. Each
//! such close is recorded with the average logprob of the sequence ending in
//! it, and decoding continues with the second-ranked token. After `patience`
//! consecutive closes without a strictly better average the output is cut at
//! the best recorded close.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::generator::{TokenGenerator, EOS};
use super::HarnessError;
use crate::protocol::{parse_write_call, WriteCall, CALL_CLOSE, USER_END, USER_ST};
use crate::store::MemoryStore;

/// Pretext sentences plus the focus sentence a write call is extracted from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteScanInput {
    pub pretext_sentences: Vec<String>,
    pub focus_sentence: String,
}

impl WriteScanInput {
    pub fn new(pretext_sentences: Vec<String>, focus_sentence: impl Into<String>) -> Self {
        Self {
            pretext_sentences,
            focus_sentence: focus_sentence.into(),
        }
    }

    /// Pretext joined by spaces, then the focus sentence between user tags.
    pub fn serialize(&self) -> String {
        let mut s = self.pretext_sentences.join(" ");
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(USER_ST);
        s.push_str(&self.focus_sentence);
        s.push_str(USER_END);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LateStopConfig {
    /// Consecutive non-improving closes before halting.
    pub patience: usize,
    pub max_new_tokens: usize,
}

impl Default for LateStopConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            max_new_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloseRecord {
    /// Tokens generated before the close.
    pub position: usize,
    /// Mean logprob over those tokens and the close itself.
    pub avg_logprob: f64,
    /// Byte length of the output before the close.
    pub output_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    Patience,
    EndOfSequence,
    MaxTokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateStopTrace {
    pub closes: Vec<CloseRecord>,
    /// Index into `closes`.
    pub best: Option<usize>,
    pub halt: HaltReason,
    pub tokens: Vec<String>,
    /// The cut output that was parsed.
    pub output: String,
}

impl LateStopTrace {
    pub fn best_close(&self) -> Option<&CloseRecord> {
        self.best.map(|i| &self.closes[i])
    }

    /// Closes recorded after the best one.
    pub fn non_improving_after_best(&self) -> usize {
        self.best.map_or(0, |b| self.closes.len() - b - 1)
    }
}

/// Runs late-stopping decoding after `context` and parses the cut output.
pub fn decode_write_context(
    context: &str,
    generator: &dyn TokenGenerator,
    config: &LateStopConfig,
) -> Result<(WriteCall, LateStopTrace), HarnessError> {
    let mut output = String::new();
    let mut tokens = Vec::new();
    let mut closes: Vec<CloseRecord> = Vec::new();
    let mut best: Option<usize> = None;
    let mut stale = 0usize;
    let mut sum = 0.0f64;
    let mut ctx = context.to_string();

    let halt = loop {
        if tokens.len() >= config.max_new_tokens {
            break HaltReason::MaxTokens;
        }
        let dist = generator.next_distribution(&ctx)?;
        let top = dist
            .first()
            .ok_or_else(|| HarnessError::Decode("empty distribution".into()))?;
        let chosen = if top.token == CALL_CLOSE {
            let n = tokens.len();
            let avg = (sum + top.logprob) / (n + 1) as f64;
            closes.push(CloseRecord {
                position: n,
                avg_logprob: avg,
                output_len: output.len(),
            });
            let improved = best.is_none_or(|b| avg > closes[b].avg_logprob);
            if improved {
                best = Some(closes.len() - 1);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break HaltReason::Patience;
                }
            }
            dist.get(1).ok_or_else(|| {
                HarnessError::Decode("generator returned fewer than 2 candidates".into())
            })?
        } else {
            top
        };
        if chosen.token == EOS {
            break HaltReason::EndOfSequence;
        }
        output.push_str(&chosen.token);
        ctx.push_str(&chosen.token);
        sum += chosen.logprob;
        tokens.push(chosen.token.clone());
    };

    let mut cut = match best {
        Some(b) => output[..closes[b].output_len].to_string(),
        None => output.clone(),
    };
    cut.push_str(CALL_CLOSE);
    let cut = cut.trim_start().to_string();
    let call = parse_write_call(&cut).map_err(|e| HarnessError::Malformed {
        raw: cut.clone(),
        reason: e.to_string(),
    })?;
    Ok((
        call,
        LateStopTrace {
            closes,
            best,
            halt,
            tokens,
            output: cut,
        },
    ))
}

pub fn decode_write(
    input: &WriteScanInput,
    generator: &dyn TokenGenerator,
    config: &LateStopConfig,
) -> Result<(WriteCall, LateStopTrace), HarnessError> {
    decode_write_context(&input.serialize(), generator, config)
}

/// Turns a write-scan input into a write call.
pub trait WriteExtractor {
    fn extract(&self, input: &WriteScanInput) -> Result<WriteCall, HarnessError>;
}

/// Late-stopping decoding over a token generator.
pub struct LateStopDecoder<G> {
    pub generator: G,
    pub config: LateStopConfig,
}

impl<G: TokenGenerator> LateStopDecoder<G> {
    pub fn new(generator: G) -> Self {
        Self {
            generator,
            config: LateStopConfig::default(),
        }
    }
}

impl<G: TokenGenerator> WriteExtractor for LateStopDecoder<G> {
    fn extract(&self, input: &WriteScanInput) -> Result<WriteCall, HarnessError> {
        decode_write(input, &self.generator, &self.config).map(|(call, _)| call)
    }
}

/// Returns fixed calls keyed by focus sentence; unknown sentences give an empty call.
#[derive(Debug, Clone, Default)]
pub struct OracleExtractor {
    pub calls: HashMap<String, WriteCall>,
}

impl OracleExtractor {
    pub fn insert(&mut self, focus_sentence: impl Into<String>, call: WriteCall) {
        self.calls.insert(focus_sentence.into(), call);
    }
}

impl WriteExtractor for OracleExtractor {
    fn extract(&self, input: &WriteScanInput) -> Result<WriteCall, HarnessError> {
        Ok(self
            .calls
            .get(&input.focus_sentence)
            .cloned()
            .unwrap_or_default())
    }
}

/// Extracts a write call for every sentence and stores its triples.
///
/// Sentence `i` is decoded with sentences `0..i` as pretext.
pub fn run_write_scan(
    sentences: &[String],
    extractor: &dyn WriteExtractor,
    store: &mut MemoryStore,
) -> Result<Vec<WriteCall>, HarnessError> {
    let mut calls = Vec::with_capacity(sentences.len());
    for (i, focus) in sentences.iter().enumerate() {
        let input = WriteScanInput::new(sentences[..i].to_vec(), focus.clone());
        let call = extractor
            .extract(&input)
            .map_err(|e| HarnessError::Sentence {
                index: i,
                source: Box::new(e),
            })?;
        for t in &call.triples {
            store.insert_triple(&t.subject, &t.relation, &t.object, None)?;
        }
        calls.push(call);
    }
    Ok(calls)
}
