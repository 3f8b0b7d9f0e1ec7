//! Embedding providers for entity and relation names.
//!
//! Every stored vector is unit-norm, so cosine similarity is a plain dot
//! product. [`ReferenceEmbedder`] hashes character bigrams and trigrams into
//! a fixed number of buckets; it needs no model and is fully deterministic,
//! while still scoring near-identical surface forms ("US" / "USA") higher
//! than unrelated names.

use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

/// Smallest dimension a provider may declare.
pub const MIN_DIMENSION: usize = 8;

/// Tolerance on the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty or whitespace-only text")]
    InvalidText,
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("vector is not unit-norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

/// A unit-norm embedding.
#[derive(Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl fmt::Debug for EmbeddingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmbeddingVector(dim={})", self.values.len())
    }
}

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on an empty or all-zero input.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::NotUnitNorm(norm));
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { values })
    }

    /// Wraps values that are already unit-norm (within [`NORM_TOLERANCE`]).
    pub fn from_unit(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbeddingError::NotUnitNorm(norm));
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> EmbeddingVector {
        EmbeddingVector {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::Dimension {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    Ok(dot(a.values(), b.values()))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowercases and collapses whitespace. Used wherever names are compared.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    ReferenceHash,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    #[serde(rename = "provider")]
    pub provider_kind: ProviderKind,
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            provider_kind: ProviderKind::ReferenceHash,
            dimension: 256,
            seed: 0,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension < MIN_DIMENSION {
            return Err(EmbeddingError::InvalidConfig(format!(
                "dimension {} is below the minimum of {MIN_DIMENSION}",
                self.dimension
            )));
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint written into snapshots.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write_u8(match self.provider_kind {
            ProviderKind::ReferenceHash => 1,
            ProviderKind::External => 2,
        });
        h.write(&(self.dimension as u64).to_le_bytes());
        h.write(&self.seed.to_le_bytes());
        h.finish()
    }
}

/// Turns names into unit vectors.
///
/// Implementations must be deterministic for a fixed configuration and must
/// report their dimension up front.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn config(&self) -> EmbeddingProviderConfig;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Builds the provider described by `config`. External providers have to be
/// constructed by the caller and passed to the store directly.
pub fn build_provider(
    config: &EmbeddingProviderConfig,
) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
    config.validate()?;
    match config.provider_kind {
        ProviderKind::ReferenceHash => Ok(Box::new(ReferenceEmbedder::new(
            config.dimension,
            config.seed,
        )?)),
        ProviderKind::External => Err(EmbeddingError::InvalidConfig(
            "external providers cannot be built from a config file".into(),
        )),
    }
}

/// Character n-gram (n = 2, 3) hashing embedder.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    dimension: usize,
    seed: u64,
}

impl ReferenceEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbeddingError> {
        EmbeddingProviderConfig {
            provider_kind: ProviderKind::ReferenceHash,
            dimension,
            seed,
        }
        .validate()?;
        Ok(Self { dimension, seed })
    }

    fn bucket(&self, gram: &[char]) -> usize {
        // FNV offset basis perturbed by the seed.
        let mut h = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ self.seed);
        for c in gram {
            h.write(&(*c as u32).to_le_bytes());
        }
        (h.finish() % self.dimension as u64) as usize
    }
}

impl EmbeddingProvider for ReferenceEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn config(&self) -> EmbeddingProviderConfig {
        EmbeddingProviderConfig {
            provider_kind: ProviderKind::ReferenceHash,
            dimension: self.dimension,
            seed: self.seed,
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let normalized = normalize_text(text);
        if normalized.is_empty() {
            return Err(EmbeddingError::InvalidText);
        }
        // '\u{2}' / '\u{3}' mark the word boundaries so short names still
        // produce bigrams and trigrams.
        let mut chars = Vec::with_capacity(normalized.len() + 2);
        chars.push('\u{2}');
        chars.extend(normalized.chars());
        chars.push('\u{3}');

        let mut counts = vec![0.0f64; self.dimension];
        for n in [2usize, 3] {
            for gram in chars.windows(n) {
                counts[self.bucket(gram)] += 1.0;
            }
        }
        EmbeddingVector::normalized(counts)
    }
}
