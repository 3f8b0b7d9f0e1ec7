//! Perplexity with memory reads at annotated positions.
//!
//! Each token's probability mixes the reading and non-reading paths:
//! `p = p_mr * p_trigger + p_no_mr * (1 - p_trigger)`, where `p_trigger` is
//! the probability of starting a call. `p_mr` is zero wherever no read is
//! annotated or the annotated read returns nothing useful. A single path is
//! followed: the context keeps the last successful read call until the next
//! one replaces it.

use serde::{Deserialize, Serialize};

use super::generator::TokenGenerator;
use super::HarnessError;
use crate::protocol::{serialize_read, ReadCall, CALL_OPEN};
use crate::retrieval::{execute_batch, AmbiguityList, MemoryQuery, RetrievalThresholds};
use crate::store::MemoryStore;

fn check_probability(name: &str, p: f64) -> Result<(), HarnessError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(HarnessError::Domain(format!(
            "{name} = {p} is outside [0, 1]"
        )))
    }
}

pub fn combine_token_probability(
    p_no_mr: f64,
    p_mr: f64,
    p_trigger: f64,
) -> Result<f64, HarnessError> {
    check_probability("p_no_mr", p_no_mr)?;
    check_probability("p_mr", p_mr)?;
    check_probability("p_trigger", p_trigger)?;
    Ok(p_mr * p_trigger + p_no_mr * (1.0 - p_trigger))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplToken {
    pub text: String,
    /// Part of a target entity.
    #[serde(default)]
    pub target: bool,
    /// Part of any entity mention.
    #[serde(default)]
    pub entity: bool,
    /// Queries of a memory read placed right before this token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read: Option<Vec<MemoryQuery>>,
}

impl PplToken {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            target: false,
            entity: false,
            read: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PplDocument {
    /// Conditioning text that is not scored.
    #[serde(default)]
    pub prefix: String,
    pub tokens: Vec<PplToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub overall: Option<f64>,
    pub target: Option<f64>,
    pub entity: Option<f64>,
    /// Per-token combined probabilities.
    pub probabilities: Vec<f64>,
    /// Annotated reads that returned a usable result.
    pub reads_used: usize,
}

/// `exp(-mean(ln p))`, `None` for an empty set.
pub fn perplexity(probabilities: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for p in probabilities {
        n += 1;
        sum += p.ln();
    }
    (n > 0).then(|| (-sum / n as f64).exp())
}

fn prob(generator: &dyn TokenGenerator, ctx: &str, token: &str) -> Result<f64, HarnessError> {
    Ok(generator.token_logprob(ctx, token)?.map_or(0.0, f64::exp))
}

pub fn evaluate_perplexity(
    doc: &PplDocument,
    generator: &dyn TokenGenerator,
    store: &MemoryStore,
    thresholds: &RetrievalThresholds,
    ambiguity: &AmbiguityList,
) -> Result<PerplexityReport, HarnessError> {
    // Text emitted so far, split around the read call currently in context.
    let mut before_call = doc.prefix.clone();
    let mut call_text = String::new();
    let mut after_call = String::new();
    let mut probabilities = Vec::with_capacity(doc.tokens.len());
    let mut reads_used = 0;

    for tok in &doc.tokens {
        let ctx = format!("{before_call}{call_text}{after_call}");
        let p_no_mr = prob(generator, &ctx, &tok.text)?;
        let p_trigger = prob(generator, &ctx, CALL_OPEN)?;
        let mut p_mr = 0.0;
        if let Some(queries) = &tok.read {
            let result = execute_batch(store, queries, thresholds, ambiguity)?;
            if !result.is_empty() && !result.overflowed {
                let call = ReadCall {
                    queries: queries.clone(),
                    results: Some(result.names().into_iter().map(str::to_string).collect()),
                };
                let text = serialize_read(&call)?;
                before_call.push_str(&after_call);
                after_call.clear();
                call_text = text;
                let mr_ctx = format!("{before_call}{call_text}");
                p_mr = prob(generator, &mr_ctx, &tok.text)?;
                reads_used += 1;
            }
        }
        probabilities.push(combine_token_probability(p_no_mr, p_mr, p_trigger)?);
        after_call.push_str(&tok.text);
    }

    let subset = |f: fn(&PplToken) -> bool| {
        perplexity(
            doc.tokens
                .iter()
                .zip(&probabilities)
                .filter(|(t, _)| f(t))
                .map(|(_, p)| *p),
        )
    };
    Ok(PerplexityReport {
        overall: perplexity(probabilities.iter().copied()),
        target: subset(|t| t.target),
        entity: subset(|t| t.entity),
        probabilities,
        reads_used,
    })
}
