//! Incremental call recognition over a character stream.
//!
//! The parser is a character-level state machine, so the event sequence only
//! depends on the concatenated input. Plain text is held back until a call
//! starts or [`StreamParser::finish`] is called.

use std::ops::Range;

use super::{
    parse_read_queries, parse_results, parse_write_body, ReadCall, WriteCall, CALL_CLOSE,
    READ_EXEC, READ_OPEN, WRITE_OPEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParserConfig {
    /// Maximum characters of a read call's query or result section.
    pub read_lookahead: usize,
    /// Maximum characters of a write call body.
    pub write_lookahead: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            read_lookahead: 512,
            write_lookahead: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    PlainText,
    WriteCall(WriteCall),
    /// `(\{MEM_READ(` has been seen.
    ReadCallStart,
    /// `)-->` has been seen; the queries are ready to run.
    ReadCallOpen(ReadCall),
    /// The result list has been closed by `\})`.
    ReadCallClosed {
        call: ReadCall,
        /// Character range of the whole call, from `(\{MEM_READ(` to `\})`.
        call_span: Range<usize>,
    },
    Malformed {
        reason: String,
    },
}

/// One parsed piece of the stream.
///
/// `raw` is the exact source text consumed by this event and `span` its
/// character range; concatenating `raw` over all events gives the input back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamEvent {
    pub kind: EventKind,
    pub span: Range<usize>,
    pub raw: String,
}

impl StreamEvent {
    pub fn text(&self) -> &str {
        &self.raw
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Mode {
    Text,
    WriteBody,
    ReadQueries,
    ReadResults { call: ReadCall, call_start: usize },
}

#[derive(Debug, Clone)]
pub struct StreamParser {
    config: ParserConfig,
    mode: Mode,
    buf: String,
    buf_start: usize,
    buf_chars: usize,
    pos: usize,
}

impl Default for StreamParser {
    fn default() -> Self {
        Self::new(ParserConfig::default())
    }
}

impl StreamParser {
    pub fn new(config: ParserConfig) -> Self {
        Self {
            config,
            mode: Mode::Text,
            buf: String::new(),
            buf_start: 0,
            buf_chars: 0,
            pos: 0,
        }
    }

    /// Characters consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// True while inside a call.
    pub fn in_call(&self) -> bool {
        self.mode != Mode::Text
    }

    pub fn feed(&mut self, chunk: &str) -> Vec<StreamEvent> {
        let mut events = Vec::new();
        for c in chunk.chars() {
            self.push_char(c, &mut events);
        }
        events
    }

    /// Flushes pending text. An unfinished call becomes a malformed event.
    pub fn finish(&mut self) -> Vec<StreamEvent> {
        let mut events = Vec::new();
        if !self.buf.is_empty() {
            let kind = match self.mode {
                Mode::Text => EventKind::PlainText,
                _ => EventKind::Malformed {
                    reason: "unterminated call".into(),
                },
            };
            self.emit_buf(kind, &mut events);
        }
        self.mode = Mode::Text;
        events
    }

    /// Parses a complete string.
    pub fn parse_all(text: &str, config: ParserConfig) -> Vec<StreamEvent> {
        let mut p = Self::new(config);
        let mut events = p.feed(text);
        events.extend(p.finish());
        events
    }

    fn emit_buf(&mut self, kind: EventKind, events: &mut Vec<StreamEvent>) {
        let raw = std::mem::take(&mut self.buf);
        events.push(StreamEvent {
            kind,
            span: self.buf_start..self.buf_start + self.buf_chars,
            raw,
        });
        self.buf_start += self.buf_chars;
        self.buf_chars = 0;
    }

    /// Splits a just-completed `marker` off the end of the text buffer.
    fn split_marker(&mut self, marker: &str, events: &mut Vec<StreamEvent>) {
        let marker_chars = marker.chars().count();
        let cut = self.buf.len() - marker.len();
        let tail = self.buf.split_off(cut);
        if !self.buf.is_empty() {
            self.buf_chars -= marker_chars;
            self.emit_buf(EventKind::PlainText, events);
        }
        self.buf = tail;
        self.buf_chars = marker_chars;
    }

    fn push_char(&mut self, c: char, events: &mut Vec<StreamEvent>) {
        self.buf.push(c);
        self.buf_chars += 1;
        self.pos += 1;
        match &self.mode {
            Mode::Text => {
                if self.buf.ends_with(READ_OPEN) {
                    self.split_marker(READ_OPEN, events);
                    self.emit_buf(EventKind::ReadCallStart, events);
                    self.mode = Mode::ReadQueries;
                } else if self.buf.ends_with(WRITE_OPEN) {
                    self.split_marker(WRITE_OPEN, events);
                    self.mode = Mode::WriteBody;
                }
            }
            Mode::WriteBody => {
                if self.buf.ends_with(super::CALL_CLOSE) {
                    let body = &self.buf[WRITE_OPEN.len()..self.buf.len() - CALL_CLOSE.len()];
                    let kind = match parse_write_body(body) {
                        Ok(call) => EventKind::WriteCall(call),
                        Err(e) => EventKind::Malformed {
                            reason: e.to_string(),
                        },
                    };
                    self.emit_buf(kind, events);
                    self.mode = Mode::Text;
                } else if self.buf_chars - WRITE_OPEN.len() >= self.config.write_lookahead {
                    self.emit_buf(
                        EventKind::Malformed {
                            reason: "write call exceeds lookahead limit".into(),
                        },
                        events,
                    );
                    self.mode = Mode::Text;
                }
            }
            Mode::ReadQueries => {
                if self.buf.ends_with(READ_EXEC) {
                    let body = &self.buf[..self.buf.len() - READ_EXEC.len()];
                    match parse_read_queries(body) {
                        Ok(queries) => {
                            let call = ReadCall {
                                queries,
                                results: None,
                            };
                            let call_start = self.buf_start - READ_OPEN.chars().count();
                            self.emit_buf(EventKind::ReadCallOpen(call.clone()), events);
                            self.mode = Mode::ReadResults { call, call_start };
                        }
                        Err(e) => {
                            self.emit_buf(
                                EventKind::Malformed {
                                    reason: e.to_string(),
                                },
                                events,
                            );
                            self.mode = Mode::Text;
                        }
                    }
                } else if self.buf_chars >= self.config.read_lookahead {
                    self.emit_buf(
                        EventKind::Malformed {
                            reason: "read queries exceed lookahead limit".into(),
                        },
                        events,
                    );
                    self.mode = Mode::Text;
                }
            }
            Mode::ReadResults { call, call_start } => {
                if self.buf.ends_with(CALL_CLOSE) {
                    let body = &self.buf[..self.buf.len() - CALL_CLOSE.len()];
                    let kind = match parse_results(body) {
                        Ok(results) => EventKind::ReadCallClosed {
                            call: ReadCall {
                                queries: call.queries.clone(),
                                results: Some(results),
                            },
                            call_span: *call_start..self.pos,
                        },
                        Err(e) => EventKind::Malformed {
                            reason: e.to_string(),
                        },
                    };
                    self.emit_buf(kind, events);
                    self.mode = Mode::Text;
                } else if self.buf_chars >= self.config.read_lookahead {
                    self.emit_buf(
                        EventKind::Malformed {
                            reason: "read results exceed lookahead limit".into(),
                        },
                        events,
                    );
                    self.mode = Mode::Text;
                }
            }
        }
    }
}
