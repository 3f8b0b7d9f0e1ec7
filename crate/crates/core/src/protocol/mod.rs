//! Memory API call grammar.
//!
//! ```text
//! (\{MEM_WRITE-->s1>>r1>>o1;s2>>r2>>o2\})
//! (\{MEM_READ(s>>r>>;>>r>>o)-->e1,e2\})
//! ```
//!
//! Markers are plain character sequences so any tokenizer can produce them.

mod rewrite;
mod stream;

use serde::{Deserialize, Serialize};

use crate::retrieval::{MemoryQuery, QueryDirection};

pub use rewrite::{rewrite_context, rewrite_context_from, rewrite_plan, rewrite_plan_from};
pub use stream::{EventKind, ParserConfig, StreamEvent, StreamParser};

pub const CALL_OPEN: &str = "(\\{";
pub const CALL_CLOSE: &str = "\\})";
pub const USER_ST: &str = "(\\{USER_ST\\})";
pub const USER_END: &str = "(\\{USER_END\\})";
pub const WRITE_OPEN: &str = "(\\{MEM_WRITE-->";
pub const READ_OPEN: &str = "(\\{MEM_READ(";
pub const READ_EXEC: &str = ")-->";
pub const FIELD_SEP: &str = ">>";
pub const ITEM_SEP: &str = ";";
pub const RESULT_SEP: &str = ",";

/// Substrings that may not appear inside a name.
pub const RESERVED: [&str; 6] = [
    FIELD_SEP, ITEM_SEP, RESULT_SEP, CALL_OPEN, CALL_CLOSE, READ_EXEC,
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("name {name:?} contains reserved substring {token:?}")]
    ReservedToken { name: String, token: &'static str },
    #[error("invalid name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("malformed call: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripleText {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl TripleText {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteCall {
    pub triples: Vec<TripleText>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadCall {
    pub queries: Vec<MemoryQuery>,
    /// `None` before execution.
    pub results: Option<Vec<String>>,
}

/// Checks that `name` can be serialized and parsed back unchanged.
pub fn validate_name(name: &str) -> Result<(), ProtocolError> {
    let invalid = |reason| ProtocolError::InvalidName {
        name: name.to_string(),
        reason,
    };
    if name.is_empty() {
        return Err(invalid("empty"));
    }
    if name.trim() != name {
        return Err(invalid("leading or trailing whitespace"));
    }
    if name.starts_with('>') || name.ends_with('>') {
        return Err(invalid("starts or ends with '>'"));
    }
    for token in RESERVED {
        if name.contains(token) {
            return Err(ProtocolError::ReservedToken {
                name: name.to_string(),
                token,
            });
        }
    }
    if boundary_conflict(name).is_some() {
        return Err(invalid("forms a reserved token with an adjacent separator"));
    }
    Ok(())
}

/// Text that can directly precede or follow a name in a serialized call.
const PRECEDERS: [&str; 6] = [
    FIELD_SEP, ITEM_SEP, RESULT_SEP, READ_OPEN, WRITE_OPEN, READ_EXEC,
];
const FOLLOWERS: [&str; 5] = [FIELD_SEP, ITEM_SEP, RESULT_SEP, READ_EXEC, CALL_CLOSE];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Start,
    End,
}

/// Whether a reserved token would straddle the name and a neighbouring separator.
fn boundary_conflict(name: &str) -> Option<Side> {
    let straddles = |joined: &str, cut: usize| {
        RESERVED.iter().any(|t| {
            joined
                .match_indices(t)
                .any(|(i, m)| i < cut && i + m.len() > cut)
        })
    };
    for p in PRECEDERS {
        if straddles(&format!("{p}{name}"), p.len()) {
            return Some(Side::Start);
        }
    }
    for f in FOLLOWERS {
        if straddles(&format!("{name}{f}"), name.len()) {
            return Some(Side::End);
        }
    }
    None
}

/// Replaces reserved substrings with spaces and collapses whitespace.
/// Valid names come back unchanged; `None` when nothing usable is left.
pub fn sanitize_name(name: &str) -> Option<String> {
    if validate_name(name).is_ok() {
        return Some(name.to_string());
    }
    let mut s = name.to_string();
    loop {
        let before = s.len();
        for token in RESERVED {
            s = s.replace(token, " ");
        }
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
        s = s.trim_matches('>').trim().to_string();
        while let Some(side) = boundary_conflict(&s) {
            match side {
                Side::Start => s.remove(0),
                Side::End => s.pop().unwrap_or_default(),
            };
            s = s.trim().to_string();
        }
        if s.len() == before {
            break;
        }
    }
    (!s.is_empty() && validate_name(&s).is_ok()).then_some(s)
}

fn serialize_query(q: &MemoryQuery, out: &mut String) -> Result<(), ProtocolError> {
    validate_name(&q.entity)?;
    validate_name(&q.relation)?;
    match q.direction {
        QueryDirection::Object => {
            out.push_str(&q.entity);
            out.push_str(FIELD_SEP);
            out.push_str(&q.relation);
            out.push_str(FIELD_SEP);
        }
        QueryDirection::Subject => {
            out.push_str(FIELD_SEP);
            out.push_str(&q.relation);
            out.push_str(FIELD_SEP);
            out.push_str(&q.entity);
        }
    }
    Ok(())
}

/// `e_s>>t>>` or `>>t>>e_o`.
pub fn serialize_query_string(q: &MemoryQuery) -> Result<String, ProtocolError> {
    let mut out = String::new();
    serialize_query(q, &mut out)?;
    Ok(out)
}

pub fn serialize_write(call: &WriteCall) -> Result<String, ProtocolError> {
    let mut out = String::from(WRITE_OPEN);
    for (i, t) in call.triples.iter().enumerate() {
        if i > 0 {
            out.push_str(ITEM_SEP);
        }
        for (j, part) in [&t.subject, &t.relation, &t.object].into_iter().enumerate() {
            validate_name(part)?;
            if j > 0 {
                out.push_str(FIELD_SEP);
            }
            out.push_str(part);
        }
    }
    out.push_str(CALL_CLOSE);
    Ok(out)
}

/// The call up to and including `)-->`.
pub fn serialize_read_open(queries: &[MemoryQuery]) -> Result<String, ProtocolError> {
    if queries.is_empty() {
        return Err(ProtocolError::Malformed("read call without queries".into()));
    }
    let mut out = String::from(READ_OPEN);
    for (i, q) in queries.iter().enumerate() {
        if i > 0 {
            out.push_str(ITEM_SEP);
        }
        serialize_query(q, &mut out)?;
    }
    out.push_str(READ_EXEC);
    Ok(out)
}

/// `e1,e2,...\})`
pub fn serialize_results<S: AsRef<str>>(results: &[S]) -> Result<String, ProtocolError> {
    let mut out = String::new();
    for (i, r) in results.iter().enumerate() {
        validate_name(r.as_ref())?;
        if i > 0 {
            out.push_str(RESULT_SEP);
        }
        out.push_str(r.as_ref());
    }
    out.push_str(CALL_CLOSE);
    Ok(out)
}

pub fn serialize_read(call: &ReadCall) -> Result<String, ProtocolError> {
    let mut out = serialize_read_open(&call.queries)?;
    if let Some(results) = &call.results {
        out.push_str(&serialize_results(results)?);
    }
    Ok(out)
}

fn malformed(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed(msg.into())
}

/// Parses the body between `(\{MEM_WRITE-->` and `\})`.
pub fn parse_write_body(body: &str) -> Result<WriteCall, ProtocolError> {
    if body.trim().is_empty() {
        return Ok(WriteCall::default());
    }
    let mut triples = Vec::new();
    for item in body.split(ITEM_SEP) {
        let parts: Vec<&str> = item.trim().split(FIELD_SEP).map(str::trim).collect();
        if parts.len() != 3 {
            return Err(malformed(format!("write triple {item:?} needs 3 fields")));
        }
        for p in &parts {
            validate_name(p)?;
        }
        triples.push(TripleText::new(parts[0], parts[1], parts[2]));
    }
    Ok(WriteCall { triples })
}

/// Parses a single query such as `a>>b>>` or `>>b>>c`.
pub fn parse_query(text: &str) -> Result<MemoryQuery, ProtocolError> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(FIELD_SEP).map(str::trim).collect();
    if parts.len() != 3 {
        return Err(malformed(format!("query {text:?} needs 3 fields")));
    }
    let q = match (parts[0].is_empty(), parts[2].is_empty()) {
        (false, true) => MemoryQuery::object(parts[0], parts[1]),
        (true, false) => MemoryQuery::subject(parts[1], parts[2]),
        _ => {
            return Err(malformed(format!(
                "query {text:?} must bind exactly one entity"
            )))
        }
    };
    validate_name(&q.entity)?;
    validate_name(&q.relation)?;
    Ok(q)
}

/// Parses the queries between `(\{MEM_READ(` and `)-->`.
pub fn parse_read_queries(body: &str) -> Result<Vec<MemoryQuery>, ProtocolError> {
    if body.trim().is_empty() {
        return Err(malformed("read call without queries"));
    }
    body.split(ITEM_SEP).map(parse_query).collect()
}

/// Parses the results between `)-->` and `\})`.
pub fn parse_results(body: &str) -> Result<Vec<String>, ProtocolError> {
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    body.split(RESULT_SEP)
        .map(|r| {
            let r = r.trim();
            validate_name(r)?;
            Ok(r.to_string())
        })
        .collect()
}

/// Parses a complete write call string.
pub fn parse_write_call(text: &str) -> Result<WriteCall, ProtocolError> {
    let body = text
        .strip_prefix(WRITE_OPEN)
        .and_then(|r| r.strip_suffix(CALL_CLOSE))
        .ok_or_else(|| malformed("missing write markers"))?;
    parse_write_body(body)
}

/// Parses a read call with or without its result part.
pub fn parse_read_call(text: &str) -> Result<ReadCall, ProtocolError> {
    let rest = text
        .strip_prefix(READ_OPEN)
        .ok_or_else(|| malformed("missing read marker"))?;
    let (queries, tail) = rest
        .split_once(READ_EXEC)
        .ok_or_else(|| malformed("missing `)-->`"))?;
    let queries = parse_read_queries(queries)?;
    let results = if tail.is_empty() {
        None
    } else {
        let body = tail
            .strip_suffix(CALL_CLOSE)
            .ok_or_else(|| malformed("missing call close"))?;
        Some(parse_results(body)?)
    };
    Ok(ReadCall { queries, results })
}

/// Builds a write-scan input: pretext, then the focus sentence between user tags.
pub fn write_scan_input(pretext: &str, focus: &str) -> String {
    let mut s = String::with_capacity(pretext.len() + focus.len() + 32);
    s.push_str(pretext);
    s.push_str(USER_ST);
    s.push_str(focus);
    s.push_str(USER_END);
    s
}
