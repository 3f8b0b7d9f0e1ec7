//! Token generators: the model side of the decoding loops.

use std::collections::HashMap;
use std::hash::Hasher;
use std::path::Path;
use std::sync::Arc;

use fnv::FnvHasher;

use crate::protocol::{EventKind, ParserConfig, StreamParser, CALL_OPEN};

/// Generator-level end of sequence.
pub const EOS: &str = "</s>";

#[derive(Debug, Clone, PartialEq)]
pub struct RankedToken {
    pub token: String,
    pub logprob: f64,
}

impl RankedToken {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        Self {
            token: token.into(),
            logprob,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("no distribution scripted for context {0}")]
    NoDistribution(String),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ranked top-k next-token candidates for a raw string context.
pub trait TokenGenerator: Send + Sync {
    /// At least two candidates, logprobs non-increasing and `<= 0`.
    fn next_distribution(&self, context: &str) -> Result<Vec<RankedToken>, GeneratorError>;

    /// Log probability of `token` after `context`; `None` means probability zero.
    fn token_logprob(&self, context: &str, token: &str) -> Result<Option<f64>, GeneratorError> {
        Ok(self
            .next_distribution(context)?
            .into_iter()
            .find(|t| t.token == token)
            .map(|t| t.logprob))
    }
}

impl<G: TokenGenerator + ?Sized> TokenGenerator for Arc<G> {
    fn next_distribution(&self, context: &str) -> Result<Vec<RankedToken>, GeneratorError> {
        (**self).next_distribution(context)
    }

    fn token_logprob(&self, context: &str, token: &str) -> Result<Option<f64>, GeneratorError> {
        (**self).token_logprob(context, token)
    }
}

impl<G: TokenGenerator + ?Sized> TokenGenerator for &G {
    fn next_distribution(&self, context: &str) -> Result<Vec<RankedToken>, GeneratorError> {
        (**self).next_distribution(context)
    }

    fn token_logprob(&self, context: &str, token: &str) -> Result<Option<f64>, GeneratorError> {
        (**self).token_logprob(context, token)
    }
}

pub fn validate_distribution(dist: &[RankedToken]) -> Result<(), GeneratorError> {
    if dist.len() < 2 {
        return Err(GeneratorError::InvalidDistribution(format!(
            "need at least 2 candidates, got {}",
            dist.len()
        )));
    }
    for (i, t) in dist.iter().enumerate() {
        if !(t.logprob <= 0.0) {
            return Err(GeneratorError::InvalidDistribution(format!(
                "logprob {} of {:?} is not <= 0",
                t.logprob, t.token
            )));
        }
        if i > 0 && t.logprob > dist[i - 1].logprob {
            return Err(GeneratorError::InvalidDistribution(format!(
                "logprobs increase at rank {}",
                i + 1
            )));
        }
    }
    Ok(())
}

pub fn context_hash(context: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(context.as_bytes());
    h.finish()
}

pub fn context_hash_hex(context: &str) -> String {
    format!("{:016x}", context_hash(context))
}

fn escape(token: &str) -> String {
    token
        .replace('\t', "\\t")
        .replace('\n', "\\n")
        .replace('\r', "\\r")
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.peek() {
                Some('t') => {
                    chars.next();
                    out.push('\t');
                }
                Some('n') => {
                    chars.next();
                    out.push('\n');
                }
                Some('r') => {
                    chars.next();
                    out.push('\r');
                }
                _ => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Replays fixed distributions keyed by the FNV-64 hash of the context.
///
/// Script lines are `context_hash<TAB>token<TAB>logprob<TAB>rank`, with the
/// hash as 16 hex digits or `*` for the fallback used when no entry matches.
/// In tokens `\t`, `\n` and `\r` are escapes; any other backslash is literal.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGenerator {
    table: HashMap<u64, Vec<RankedToken>>,
    fallback: Option<Vec<RankedToken>>,
}

impl ScriptedGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty() && self.fallback.is_none()
    }

    /// Sets the distribution after `context`, replacing any earlier entry.
    pub fn insert(
        &mut self,
        context: &str,
        dist: Vec<RankedToken>,
    ) -> Result<&mut Self, GeneratorError> {
        validate_distribution(&dist)?;
        self.table.insert(context_hash(context), dist);
        Ok(self)
    }

    pub fn set_fallback(&mut self, dist: Vec<RankedToken>) -> Result<&mut Self, GeneratorError> {
        validate_distribution(&dist)?;
        self.fallback = Some(dist);
        Ok(self)
    }

    /// Scripts `tokens` as the greedy continuation of `prompt`.
    ///
    /// Each step gives the scripted token `logprob` and an alternative
    /// (`EOS`, or a space when the token is `EOS`) a lower score.
    pub fn chain<S: AsRef<str>>(
        &mut self,
        prompt: &str,
        tokens: &[S],
        logprob: f64,
    ) -> Result<&mut Self, GeneratorError> {
        let mut ctx = prompt.to_string();
        for t in tokens {
            let t = t.as_ref();
            let alt = if t == EOS { " " } else { EOS };
            self.insert(
                &ctx,
                vec![
                    RankedToken::new(t, logprob),
                    RankedToken::new(alt, logprob - 5.0),
                ],
            )?;
            ctx.push_str(t);
        }
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self, GeneratorError> {
        let mut rows: HashMap<Option<u64>, Vec<(usize, RankedToken)>> = HashMap::new();
        let mut first_line: HashMap<Option<u64>, usize> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| GeneratorError::Script {
                line: line_no,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let key = if fields[0] == "*" {
                None
            } else {
                Some(
                    u64::from_str_radix(fields[0], 16)
                        .map_err(|e| err(format!("bad context hash: {e}")))?,
                )
            };
            let logprob: f64 = fields[2]
                .parse()
                .map_err(|e| err(format!("bad logprob: {e}")))?;
            let rank: usize = fields[3]
                .parse()
                .map_err(|e| err(format!("bad rank: {e}")))?;
            if rank == 0 {
                return Err(err("ranks start at 1".into()));
            }
            first_line.entry(key).or_insert(line_no);
            rows.entry(key)
                .or_default()
                .push((rank, RankedToken::new(unescape(fields[1]), logprob)));
        }
        let mut gen = Self::new();
        for (key, mut entries) in rows {
            entries.sort_by_key(|(rank, _)| *rank);
            for (i, (rank, _)) in entries.iter().enumerate() {
                if *rank != i + 1 {
                    return Err(GeneratorError::Script {
                        line: first_line[&key],
                        message: format!("ranks must be 1..n without gaps, found {rank}"),
                    });
                }
            }
            let dist: Vec<RankedToken> = entries.into_iter().map(|(_, t)| t).collect();
            validate_distribution(&dist).map_err(|e| GeneratorError::Script {
                line: first_line[&key],
                message: e.to_string(),
            })?;
            match key {
                Some(h) => {
                    gen.table.insert(h, dist);
                }
                None => gen.fallback = Some(dist),
            }
        }
        Ok(gen)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes to the script format, entries sorted by hash.
    pub fn to_script(&self) -> String {
        let mut out = String::new();
        let mut keys: Vec<_> = self.table.keys().copied().collect();
        keys.sort_unstable();
        let mut write = |key: &str, dist: &[RankedToken]| {
            for (i, t) in dist.iter().enumerate() {
                out.push_str(&format!(
                    "{key}\t{}\t{:?}\t{}\n",
                    escape(&t.token),
                    t.logprob,
                    i + 1
                ));
            }
        };
        for k in keys {
            write(&format!("{k:016x}"), &self.table[&k]);
        }
        if let Some(f) = &self.fallback {
            write("*", f);
        }
        out
    }
}

impl TokenGenerator for ScriptedGenerator {
    fn next_distribution(&self, context: &str) -> Result<Vec<RankedToken>, GeneratorError> {
        let h = context_hash(context);
        self.table
            .get(&h)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| GeneratorError::NoDistribution(format!("{h:016x}")))
    }
}

/// Assigns every vocabulary token the same probability `1 / |vocab|`.
#[derive(Debug, Clone)]
pub struct UniformGenerator {
    vocab: Vec<String>,
}

impl UniformGenerator {
    pub fn new<S: Into<String>>(vocab: impl IntoIterator<Item = S>) -> Self {
        let mut vocab: Vec<String> = vocab.into_iter().map(Into::into).collect();
        vocab.sort();
        vocab.dedup();
        assert!(!vocab.is_empty(), "vocabulary must not be empty");
        Self { vocab }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn logprob(&self) -> f64 {
        -(self.vocab.len() as f64).ln()
    }
}

impl TokenGenerator for UniformGenerator {
    fn next_distribution(&self, _context: &str) -> Result<Vec<RankedToken>, GeneratorError> {
        let lp = self.logprob();
        let mut dist: Vec<RankedToken> = self
            .vocab
            .iter()
            .map(|t| RankedToken::new(t.clone(), lp))
            .collect();
        if dist.len() < 2 {
            dist.push(RankedToken::new(EOS, f64::NEG_INFINITY));
        }
        Ok(dist)
    }

    fn token_logprob(&self, _context: &str, token: &str) -> Result<Option<f64>, GeneratorError> {
        Ok(self
            .vocab
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()
            .map(|_| self.logprob()))
    }
}

/// Copies the results of a just-closed read call into its output.
///
/// When the context ends with a completed read call, optionally followed by
/// a prefix of `prefix + results + suffix`, the remainder of that string is
/// emitted as one token and then `EOS`. Every other context is delegated to
/// `inner`.
pub struct EchoGenerator<G> {
    pub inner: G,
    pub prefix: String,
    pub suffix: String,
}

impl<G: TokenGenerator> EchoGenerator<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            prefix: String::new(),
            suffix: "\n".into(),
        }
    }

    pub fn with_affixes(inner: G, prefix: impl Into<String>, suffix: impl Into<String>) -> Self {
        Self {
            inner,
            prefix: prefix.into(),
            suffix: suffix.into(),
        }
    }

    /// The echo still to be emitted, if the context tail is a closed read call.
    fn pending_echo(&self, context: &str) -> Option<String> {
        let start = context.rfind(crate::protocol::READ_OPEN)?;
        let tail = &context[start..];
        let mut parser = StreamParser::new(ParserConfig::default());
        let events = parser.feed(tail);
        let (results, end_chars) = events.iter().find_map(|e| match &e.kind {
            EventKind::ReadCallClosed { call, .. } => {
                Some((call.results.clone().unwrap_or_default(), e.span.end))
            }
            _ => None,
        })?;
        let after: String = tail.chars().skip(end_chars).collect();
        let full = format!("{}{}{}", self.prefix, results.join(", "), self.suffix);
        full.strip_prefix(after.as_str()).map(str::to_string)
    }
}

impl<G: TokenGenerator> TokenGenerator for EchoGenerator<G> {
    fn next_distribution(&self, context: &str) -> Result<Vec<RankedToken>, GeneratorError> {
        match self.pending_echo(context) {
            Some(rest) if rest.is_empty() => Ok(vec![
                RankedToken::new(EOS, 0.0),
                RankedToken::new(CALL_OPEN, -20.0),
            ]),
            Some(rest) => Ok(vec![
                RankedToken::new(rest, 0.0),
                RankedToken::new(EOS, -20.0),
            ]),
            None => self.inner.next_distribution(context),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_round_trip_with_escapes() {
        let mut g = ScriptedGenerator::new();
        g.insert(
            "ctx",
            vec![
                RankedToken::new("\\})", -0.1),
                RankedToken::new("a\tb\n", -0.5),
            ],
        )
        .unwrap();
        g.set_fallback(vec![
            RankedToken::new(EOS, 0.0),
            RankedToken::new(" ", -1.0),
        ])
        .unwrap();
        let text = g.to_script();
        let back = ScriptedGenerator::parse(&text).unwrap();
        let d = back.next_distribution("ctx").unwrap();
        assert_eq!(d[0].token, "\\})");
        assert_eq!(d[1].token, "a\tb\n");
        assert_eq!(back.next_distribution("other").unwrap()[0].token, EOS);
        assert_eq!(back.to_script(), text);
    }

    #[test]
    fn script_errors_carry_line_numbers() {
        let e = ScriptedGenerator::parse("# c\nzz\tx\t-1\t1\n").unwrap_err();
        assert!(matches!(e, GeneratorError::Script { line: 2, .. }));
        let e = ScriptedGenerator::parse("*\tx\t-1\t1\n*\ty\t-0.5\t2\n").unwrap_err();
        assert!(matches!(e, GeneratorError::Script { .. }));
        let e = ScriptedGenerator::parse("*\tx\t-1\t1\n*\ty\t-2\t3\n").unwrap_err();
        assert!(matches!(e, GeneratorError::Script { .. }));
    }

    #[test]
    fn missing_context_is_an_error() {
        let g = ScriptedGenerator::new();
        assert!(matches!(
            g.next_distribution("x"),
            Err(GeneratorError::NoDistribution(_))
        ));
    }

    #[test]
    fn chain_scripts_greedy_path() {
        let mut g = ScriptedGenerator::new();
        g.chain("P", &["a", "b", EOS], -0.2).unwrap();
        assert_eq!(g.next_distribution("P").unwrap()[0].token, "a");
        assert_eq!(g.next_distribution("Pab").unwrap()[0].token, EOS);
        assert_eq!(g.next_distribution("Pab").unwrap()[1].token, " ");
    }

    #[test]
    fn uniform_logprob() {
        let g = UniformGenerator::new(["a", "b", "c", "d"]);
        assert_eq!(g.token_logprob("", "c").unwrap(), Some(-(4f64).ln()));
        assert_eq!(g.token_logprob("", "(\\{").unwrap(), None);
    }

    #[test]
    fn echo_copies_results() {
        let mut inner = ScriptedGenerator::new();
        inner
            .set_fallback(vec![
                RankedToken::new("x", -1.0),
                RankedToken::new(EOS, -2.0),
            ])
            .unwrap();
        let g = EchoGenerator::with_affixes(inner, " A: ", "\n");
        let ctx = "Q: q?(\\{MEM_READ(a>>b>>)-->Naples,Rome\\})";
        let d = g.next_distribution(ctx).unwrap();
        assert_eq!(d[0].token, " A: Naples, Rome\n");
        let d = g
            .next_distribution(&format!("{ctx} A: Naples, Rome\n"))
            .unwrap();
        assert_eq!(d[0].token, EOS);
        assert_eq!(g.next_distribution("plain").unwrap()[0].token, "x");
    }
}
