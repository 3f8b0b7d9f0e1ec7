//! Relation patterns whose queries return too many entities to be useful.

use std::collections::HashSet;
use std::path::Path;

use super::{MemoryQuery, QueryDirection};
use crate::embedding::normalize_text;

/// Relations filtered for subject queries `<*, r, o>`.
pub const DEFAULT_SUBJECT_QUERY_RELATIONS: [&str; 23] = [
    "country of citizenship",
    "country",
    "country of origin",
    "religion",
    "place of birth",
    "place of death",
    "work location",
    "location",
    "basin country",
    "residence",
    "location of formation",
    "publication date",
    "production company",
    "platform",
    "original language of work",
    "applies to jurisdiction",
    "located in the administrative territorial entity",
    "headquarters location",
    "inception",
    "employer",
    "date of birth",
    "date of death",
    "educated at",
];

/// Relations filtered for object queries `<s, r, *>`.
pub const DEFAULT_OBJECT_QUERY_RELATIONS: [&str; 1] =
    ["contains administrative territorial entity"];

#[derive(Debug, thiserror::Error)]
pub enum AmbiguityListError {
    #[error("line {line}: expected `S:` or `O:` prefix")]
    Prefix { line: usize },
    #[error("line {line}: empty relation name")]
    Empty { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Relation names per query direction, compared after normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguityList {
    subject: HashSet<String>,
    object: HashSet<String>,
}

impl Default for AmbiguityList {
    fn default() -> Self {
        Self::from_names(
            DEFAULT_SUBJECT_QUERY_RELATIONS,
            DEFAULT_OBJECT_QUERY_RELATIONS,
        )
    }
}

impl AmbiguityList {
    pub fn empty() -> Self {
        Self {
            subject: HashSet::new(),
            object: HashSet::new(),
        }
    }

    pub fn from_names<S, O>(subject: S, object: O) -> Self
    where
        S: IntoIterator,
        S::Item: AsRef<str>,
        O: IntoIterator,
        O::Item: AsRef<str>,
    {
        Self {
            subject: subject
                .into_iter()
                .map(|r| normalize_text(r.as_ref()))
                .collect(),
            object: object
                .into_iter()
                .map(|r| normalize_text(r.as_ref()))
                .collect(),
        }
    }

    /// Parses `S:relation` / `O:relation` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, AmbiguityListError> {
        let mut list = Self::empty();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (set, rest) = if let Some(rest) = line.strip_prefix("S:") {
                (&mut list.subject, rest)
            } else if let Some(rest) = line.strip_prefix("O:") {
                (&mut list.object, rest)
            } else {
                return Err(AmbiguityListError::Prefix { line: line_no });
            };
            let name = normalize_text(rest);
            if name.is_empty() {
                return Err(AmbiguityListError::Empty { line: line_no });
            }
            set.insert(name);
        }
        Ok(list)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AmbiguityListError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes to the line format accepted by [`AmbiguityList::parse`], sorted.
    pub fn to_file_string(&self) -> String {
        let mut s: Vec<_> = self.subject.iter().collect();
        let mut o: Vec<_> = self.object.iter().collect();
        s.sort();
        o.sort();
        let mut out = String::new();
        for r in s {
            out.push_str("S:");
            out.push_str(r);
            out.push('\n');
        }
        for r in o {
            out.push_str("O:");
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn is_ambiguous(&self, query: &MemoryQuery) -> bool {
        let relation = normalize_text(&query.relation);
        match query.direction {
            QueryDirection::Subject => self.subject.contains(&relation),
            QueryDirection::Object => self.object.contains(&relation),
        }
    }

    pub fn len(&self) -> usize {
        self.subject.len() + self.object.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
