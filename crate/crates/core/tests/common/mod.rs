//! Generators and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tripmem_core::datagen::{AnnotatedDocument, DocTriple, Mention, ReadExample};
use tripmem_core::editing::{format_edit_input, EditCase};
use tripmem_core::harness::{EchoGenerator, OracleExtractor, RankedToken, ScriptedGenerator, EOS};
use tripmem_core::protocol::rewrite_context_from;
use tripmem_core::protocol::{
    serialize_read, serialize_write, validate_name, EventKind, ReadCall, StreamParser, TripleText,
    WriteCall, CALL_CLOSE, CALL_OPEN, READ_EXEC, READ_OPEN, WRITE_OPEN,
};
use tripmem_core::retrieval::{
    execute_query, AmbiguityList, MemoryQuery, QueryDirection, RetrievalThresholds,
};
use tripmem_core::store::MemoryStore;
use tripmem_core::{cosine, EmbeddingVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ter", "sa", "vin", "dor", "pe", "ru", "zan", "qui", "bel", "nor", "ta",
    "gri", "mo", "les", "fa", "xo", "dri", "um", "ven", "hal", "sy",
];

/// A capitalized pseudo-word of `n` syllables.
pub fn word(rng: &mut impl Rng, n: usize) -> String {
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    w[..1].make_ascii_uppercase();
    w
}

/// `count` distinct entity names of one or two words.
pub fn entity_names(rng: &mut impl Rng, count: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let name = if rng.gen_bool(0.5) {
            let n = rng.gen_range(2..=4);
            word(rng, n)
        } else {
            let n = rng.gen_range(2..=3);
            format!("{} {}", word(rng, 2), word(rng, n))
        };
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

/// Swaps two adjacent characters or drops one.
pub fn typo(rng: &mut impl Rng, name: &str) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    if chars.len() < 3 {
        return name.to_string();
    }
    let i = rng.gen_range(1..chars.len() - 1);
    if rng.gen_bool(0.5) {
        chars.swap(i, i + 1);
    } else {
        chars.remove(i);
    }
    chars.into_iter().collect::<String>().trim().to_string()
}

const NAME_ALPHABET: &[char] = &[
    'a', 'b', 'Z', 'é', '中', ' ', '(', ')', '-', '\\', '{', '}', '>', ',', ';', '.', '\'', 'M',
    'E', '_', 'R', 'W', 'D', 'A',
];

/// A random string over an alphabet rich in marker characters.
pub fn raw_name(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(1..14);
    (0..len)
        .map(|_| *NAME_ALPHABET.choose(rng).unwrap())
        .collect()
}

/// A random name accepted by `validate_name`.
pub fn protocol_name(rng: &mut impl Rng) -> String {
    loop {
        let n = raw_name(rng);
        if validate_name(&n).is_ok() {
            return n;
        }
    }
}

pub fn random_query(rng: &mut impl Rng) -> MemoryQuery {
    if rng.gen_bool(0.5) {
        MemoryQuery::object(protocol_name(rng), protocol_name(rng))
    } else {
        MemoryQuery::subject(protocol_name(rng), protocol_name(rng))
    }
}

pub fn random_write(rng: &mut impl Rng) -> WriteCall {
    WriteCall {
        triples: (0..rng.gen_range(0..4))
            .map(|_| TripleText::new(protocol_name(rng), protocol_name(rng), protocol_name(rng)))
            .collect(),
    }
}

pub fn random_read(rng: &mut impl Rng, max_results: usize) -> ReadCall {
    ReadCall {
        queries: (0..rng.gen_range(1..4))
            .map(|_| random_query(rng))
            .collect(),
        results: Some(
            (0..rng.gen_range(0..=max_results))
                .map(|_| protocol_name(rng))
                .collect(),
        ),
    }
}

const TEXT_PIECES: [&str; 16] = [
    "the", "cat", "Rome", "(", ")", "-", ">", "{", "}", ",", ";", "é", "中", "A:", "\n", "MEM_READ",
];

/// Plain text that cannot contain any marker (it has no backslash).
pub fn plain_text(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..8);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(TEXT_PIECES.choose(rng).unwrap());
        if rng.gen_bool(0.5) {
            s.push(' ');
        }
    }
    s
}

/// A token stream mixing text, calls, near-miss markers and broken calls.
pub fn fixture_stream(rng: &mut impl Rng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(3..14) {
        match rng.gen_range(0..9) {
            0..=2 => s.push_str(&plain_text(rng)),
            3 => s.push_str(&serialize_write(&random_write(rng)).unwrap()),
            4 => s.push_str(&serialize_read(&random_read(rng, 4)).unwrap()),
            5 => {
                let mut call = random_read(rng, 0);
                call.results = None;
                s.push_str(&tripmem_core::protocol::serialize_read_open(&call.queries).unwrap());
            }
            6 => s.push_str(
                ["(\\", "(\\{MEM", "\\}", ")--", "(\\{MEM_WRITE"]
                    .choose(rng)
                    .unwrap(),
            ),
            7 => {
                s.push_str(READ_OPEN);
                s.push_str(&"x".repeat(rng.gen_range(500..560)));
            }
            _ => {
                s.push_str(WRITE_OPEN);
                s.push_str("a>>b");
                s.push_str(CALL_CLOSE);
            }
        }
    }
    s
}

/// Splits `text` at `cuts` random character boundaries.
pub fn random_chunks(rng: &mut impl Rng, text: &str, cuts: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut points: Vec<usize> = (0..cuts).map(|_| rng.gen_range(0..=chars.len())).collect();
    points.push(0);
    points.push(chars.len());
    points.sort_unstable();
    points.dedup();
    points
        .windows(2)
        .map(|w| chars[w[0]..w[1]].iter().collect())
        .collect()
}

// ---------------------------------------------------------------- retrieval

/// Plain dot product; stored vectors are unit length.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exhaustive evaluation of a query over every stored triple.
pub fn brute_force_query(
    store: &MemoryStore,
    query: &MemoryQuery,
    thresholds: &RetrievalThresholds,
) -> HashMap<String, f64> {
    let qe = store.embed(&query.entity).unwrap();
    let qr = store.embed(&query.relation).unwrap();
    let mut e_cos: HashMap<String, f64> = HashMap::new();
    let mut r_cos: HashMap<String, f64> = HashMap::new();
    let mut out: HashMap<String, f64> = HashMap::new();
    for t in store.triples() {
        let (s, r, o) = store.resolve(t);
        let (bound, open) = match query.direction {
            QueryDirection::Object => (s, o),
            QueryDirection::Subject => (o, s),
        };
        let ce = *e_cos
            .entry(bound.to_string())
            .or_insert_with(|| dot(qe.values(), store.embed(bound).unwrap().values()));
        let ct = *r_cos
            .entry(r.to_string())
            .or_insert_with(|| dot(qr.values(), store.embed(r).unwrap().values()));
        let score = 0.5 * (ce + ct);
        if ce >= thresholds.tau_e && ct >= thresholds.tau_t && score >= thresholds.tau_r {
            let best = out.entry(open.to_string()).or_insert(score);
            *best = best.max(score);
        }
    }
    out
}

// ------------------------------------------------------------------ rewrite

#[derive(Debug, Clone)]
pub enum Piece {
    Text(String),
    Write(String),
    Read {
        text: String,
        results: usize,
    },
    /// An opened read call that never closes.
    Broken(String),
}

impl Piece {
    pub fn text(&self) -> &str {
        match self {
            Piece::Text(s) | Piece::Write(s) | Piece::Broken(s) => s,
            Piece::Read { text, .. } => text,
        }
    }
}

pub fn rewrite_pieces(rng: &mut impl Rng, q_thr: usize) -> Vec<Piece> {
    (0..rng.gen_range(1..12))
        .map(|_| match rng.gen_range(0..10) {
            0..=2 => Piece::Text(plain_text(rng)),
            3 => Piece::Write(serialize_write(&random_write(rng)).unwrap()),
            4 => {
                let mut s = READ_OPEN.to_string();
                s.push_str(&"y".repeat(600));
                Piece::Broken(s)
            }
            _ => {
                let call = random_read(rng, q_thr + 2);
                Piece::Read {
                    results: call.results.as_ref().unwrap().len(),
                    text: serialize_read(&call).unwrap(),
                }
            }
        })
        .collect()
}

/// Expected context after applying the removal rules piece by piece.
pub fn rewrite_oracle(prompt: &str, pieces: &[Piece], q_thr: usize) -> String {
    let mut removed = vec![false; pieces.len()];
    let mut kept: Option<usize> = None;
    for (i, p) in pieces.iter().enumerate() {
        match p {
            Piece::Read { results, .. } => {
                if let Some(k) = kept.take() {
                    removed[k] = true;
                }
                if *results == 0 || *results > q_thr {
                    removed[i] = true;
                } else {
                    kept = Some(i);
                }
            }
            Piece::Broken(_) => {
                if let Some(k) = kept.take() {
                    removed[k] = true;
                }
            }
            _ => {}
        }
    }
    let mut out = prompt.to_string();
    for (p, r) in pieces.iter().zip(removed) {
        if !r {
            out.push_str(p.text());
        }
    }
    out
}

/// Streams `chunks` after `prompt` and rewrites the context on every read event.
pub fn rewrite_replay(prompt: &str, chunks: &[String], thresholds: &RetrievalThresholds) -> String {
    let mut parser = StreamParser::default();
    parser.feed(prompt);
    let protected = prompt.len();
    let mut ctx = prompt.to_string();
    let base = prompt.chars().count();
    let generated: Vec<char> = chunks.concat().chars().collect();
    let mut appended = base;
    let mut chunk_end = base;
    for chunk in chunks {
        chunk_end += chunk.chars().count();
        for ev in parser.feed(chunk) {
            if ev.span.end > appended {
                ctx.extend(&generated[appended - base..ev.span.end - base]);
                appended = ev.span.end;
            }
            if matches!(
                ev.kind,
                EventKind::ReadCallStart | EventKind::ReadCallClosed { .. }
            ) {
                ctx = rewrite_context_from(&ctx, &ev, thresholds, protected);
            }
        }
        ctx.extend(&generated[appended - base..chunk_end - base]);
        appended = chunk_end;
    }
    ctx
}

// ---------------------------------------------------------------- late stop

#[derive(Debug, Clone)]
pub struct Step {
    pub token: String,
    pub logprob: f64,
    /// Log-probability of closing here, ranked above `token`.
    pub close: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LateStopExpectation {
    pub close_positions: Vec<usize>,
    pub averages: Vec<f64>,
    pub best: Option<usize>,
    pub patience_halt: bool,
    pub output: String,
}

/// Scripts `steps` after `context`; running out of steps yields `EOS`.
pub fn script_steps(context: &str, steps: &[Step]) -> ScriptedGenerator {
    let mut g = ScriptedGenerator::new();
    let mut ctx = context.to_string();
    for s in steps {
        let dist = match s.close {
            Some(c) => vec![
                RankedToken::new(CALL_CLOSE, c),
                RankedToken::new(&s.token, s.logprob),
            ],
            None => vec![
                RankedToken::new(&s.token, s.logprob),
                RankedToken::new(EOS, s.logprob - 5.0),
            ],
        };
        g.insert(&ctx, dist).unwrap();
        ctx.push_str(&s.token);
    }
    g.insert(
        &ctx,
        vec![RankedToken::new(EOS, 0.0), RankedToken::new(";", -9.0)],
    )
    .unwrap();
    g
}

/// Straight replay of the late-stopping rule.
pub fn late_stop_oracle(steps: &[Step], patience: usize) -> LateStopExpectation {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut positions = Vec::new();
    let mut averages: Vec<f64> = Vec::new();
    let mut best: Option<usize> = None;
    let mut stale = 0;
    let mut patience_halt = false;
    for s in steps {
        if let Some(c) = s.close {
            let avg = (sum + c) / (n as f64 + 1.0);
            positions.push(n);
            averages.push(avg);
            match best {
                Some(b) if avg <= averages[b] => {
                    stale += 1;
                    if stale == patience {
                        patience_halt = true;
                        break;
                    }
                }
                _ => {
                    best = Some(averages.len() - 1);
                    stale = 0;
                }
            }
        }
        sum += s.logprob;
        n += 1;
    }
    let cut = best.map_or(steps.len(), |b| positions[b]);
    let mut output: String = steps[..cut.min(steps.len())]
        .iter()
        .map(|s| s.token.as_str())
        .collect();
    output.push_str(CALL_CLOSE);
    LateStopExpectation {
        close_positions: positions,
        averages,
        best,
        patience_halt,
        output,
    }
}

/// A write call emitted token by token with closes offered between triples.
pub fn random_late_stop_steps(rng: &mut impl Rng) -> Vec<Step> {
    let mut steps = vec![Step {
        token: WRITE_OPEN.into(),
        logprob: -rng.gen_range(0.01..0.5),
        close: None,
    }];
    for k in 0..rng.gen_range(3..16) {
        let mut tokens = vec![
            format!("S{k}"),
            ">>".into(),
            "rel".into(),
            ">>".into(),
            format!("O{k}"),
        ];
        if k > 0 {
            tokens.insert(0, ";".into());
        }
        for (j, token) in tokens.into_iter().enumerate() {
            let logprob = -rng.gen_range(0.01..2.5);
            let offer = j == 0 && (k > 0 || rng.gen_bool(0.3));
            steps.push(Step {
                token,
                logprob,
                close: offer.then(|| (logprob + rng.gen_range(0.0..2.0)).min(0.0)),
            });
        }
    }
    steps.push(Step {
        token: ";".into(),
        logprob: -3.0,
        close: Some(-rng.gen_range(0.01..3.0)),
    });
    steps
}

// ------------------------------------------------------------------ datagen

pub const DOC_RELATIONS: [&str; 8] = [
    "member of",
    "located in",
    "spouse",
    "country",
    "part of",
    "author",
    "contains",
    "sibling",
];

pub struct Corpus {
    pub docs: Vec<AnnotatedDocument>,
    pub memory: MemoryStore,
}

/// Synthetic annotated documents plus a memory holding their facts,
/// distractors and one hub entity with too many neighbours.
pub fn synthetic_corpus(seed: u64, n_docs: usize) -> Corpus {
    let mut rng = rng(seed);
    let pool = entity_names(&mut rng, 60);
    let mut memory = MemoryStore::with_reference_embedder(256, seed);
    let hub = "Grand Hub";
    for k in 0..40 {
        memory
            .insert_triple(hub, "contains", &format!("Ward {k}"), None)
            .unwrap();
    }
    let mut docs = Vec::new();
    for d in 0..n_docs {
        let size = rng.gen_range(3..7);
        let mut cast: Vec<String> = pool.choose_multiple(&mut rng, size).cloned().collect();
        if rng.gen_bool(0.3) {
            cast.push(hub.to_string());
        }
        let mut sentences = Vec::new();
        let mut mentions = Vec::new();
        for si in 0..rng.gen_range(2..7) {
            let mut s = String::new();
            for j in 0..rng.gen_range(1..4) {
                if j > 0 {
                    s.push_str(["and ", "met ", ", near "].choose(&mut rng).unwrap());
                }
                let e = cast.choose(&mut rng).unwrap();
                let full = rng.gen_bool(0.75);
                let surface = if full { e.as_str() } else { "it" };
                let start = s.chars().count();
                s.push_str(surface);
                s.push(' ');
                if !mentions
                    .iter()
                    .any(|m: &Mention| m.sentence == si && m.start == start)
                {
                    mentions.push(Mention {
                        entity: e.clone(),
                        sentence: si,
                        start,
                        end: start + surface.chars().count(),
                        full,
                        position: None,
                    });
                }
            }
            s.push_str("was noted.");
            sentences.push(s);
        }
        let mut triples = Vec::new();
        for _ in 0..rng.gen_range(2..9) {
            let pair: Vec<&String> = cast.choose_multiple(&mut rng, 2).collect();
            let t = DocTriple {
                subject: pair[0].clone(),
                relation: DOC_RELATIONS.choose(&mut rng).unwrap().to_string(),
                object: pair[1].clone(),
                evidence: vec![],
            };
            if rng.gen_bool(0.9) {
                memory
                    .insert_triple(&t.subject, &t.relation, &t.object, None)
                    .unwrap();
            }
            triples.push(t);
        }
        if rng.gen_bool(0.4) {
            triples.push(triples[0].clone());
        }
        docs.push(AnnotatedDocument {
            id: Some(format!("doc{d}")),
            sentences,
            mentions,
            triples,
        });
    }
    for _ in 0..200 {
        let a = pool.choose(&mut rng).unwrap();
        let b = pool.choose(&mut rng).unwrap();
        if a != b {
            memory
                .insert_triple(a, DOC_RELATIONS.choose(&mut rng).unwrap(), b, None)
                .unwrap();
        }
    }
    Corpus { docs, memory }
}

fn format_query(q: &MemoryQuery) -> String {
    match q.direction {
        QueryDirection::Object => format!("{}>>{}>>", q.entity, q.relation),
        QueryDirection::Subject => format!(">>{}>>{}", q.relation, q.entity),
    }
}

fn char_range(text: &str, from: usize, to: usize) -> String {
    text.chars().skip(from).take(to - from).collect()
}

/// Literal replay of the read-example pseudocode over a corpus with shared seen state.
pub fn read_examples_oracle(
    docs: &[AnnotatedDocument],
    memory: &MemoryStore,
    thresholds: &RetrievalThresholds,
    ambiguity: &AmbiguityList,
) -> Vec<ReadExample> {
    let mut seen_triples: HashSet<(String, String, String)> = HashSet::new();
    let mut seen_entities: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for doc in docs {
        let text = doc.sentences.join(" ");
        let total = text.chars().count();
        let mut offset = 0;
        let mut starts = Vec::new();
        for s in &doc.sentences {
            starts.push(offset);
            offset += s.chars().count() + 1;
        }
        let mut order: Vec<(usize, &Mention)> = doc
            .mentions
            .iter()
            .map(|m| (starts[m.sentence] + m.start, m))
            .collect();
        order.sort_by_key(|p| p.0);

        // (position, target, [(query, names, count)])
        let mut reads: Vec<(usize, String, Vec<(MemoryQuery, Vec<String>, usize)>)> = Vec::new();
        for (pos, m) in order {
            if !m.full {
                continue;
            }
            let target = &m.entity;
            let mut picked: Vec<(MemoryQuery, Vec<String>, usize)> = Vec::new();
            for t in &doc.triples {
                let (other, q) = if &t.subject == target && &t.object != target {
                    (&t.object, MemoryQuery::subject(&t.relation, &t.object))
                } else if &t.object == target && &t.subject != target {
                    (&t.subject, MemoryQuery::object(&t.subject, &t.relation))
                } else if &t.subject == target {
                    (target, MemoryQuery::subject(&t.relation, &t.object))
                } else {
                    continue;
                };
                let key = (t.subject.clone(), t.relation.clone(), t.object.clone());
                if seen_triples.contains(&key) || !seen_entities.contains(other) {
                    continue;
                }
                seen_triples.insert(key);
                if picked.iter().any(|p| p.0 == q) || ambiguity.is_ambiguous(&q) {
                    continue;
                }
                let r = execute_query(memory, &q, thresholds).unwrap();
                if r.raw_count > thresholds.q_thr {
                    continue;
                }
                let names = r.names().into_iter().map(String::from).collect();
                picked.push((q, names, r.raw_count));
            }
            if !picked.is_empty() {
                picked.sort_by_key(|p| p.2);
                picked.truncate(3);
                reads.push((pos, target.clone(), picked));
            }
            seen_entities.insert(target.clone());
        }

        let n = reads.len();
        for (i, (pos, target, picked)) in reads.iter().enumerate() {
            let mut results: Vec<String> = Vec::new();
            for (_, names, _) in picked {
                for name in names {
                    if !results.contains(name) {
                        results.push(name.clone());
                    }
                }
            }
            if results.is_empty() {
                results.push(target.clone());
            }
            let posttext = if i + 1 < n {
                format!("{}{CALL_OPEN}", char_range(&text, *pos, reads[i + 1].0))
            } else {
                char_range(&text, *pos, total)
            };
            out.push(ReadExample {
                doc: doc.id.clone(),
                target: target.clone(),
                read_position: *pos,
                pretext: format!("{}{CALL_OPEN}", char_range(&text, 0, *pos)),
                call_text: format!(
                    "MEM_READ({}){}",
                    picked
                        .iter()
                        .map(|p| format_query(&p.0))
                        .collect::<Vec<_>>()
                        .join(";"),
                    &READ_EXEC[1..]
                ),
                results_text: format!("{}{CALL_CLOSE}", results.join(",")),
                posttext,
                queries: picked.iter().map(|p| p.0.clone()).collect(),
                query_result_counts: picked.iter().map(|p| p.2).collect(),
                results,
                loss_on_pretext: i == 0,
            });
        }
    }
    out
}

// ------------------------------------------------------------------ editing

pub struct EditFixture {
    pub cases: Vec<EditCase>,
    pub extractor: OracleExtractor,
    pub qa: EchoGenerator<ScriptedGenerator>,
    pub memory: MemoryStore,
}

/// Edit cases over people with pairwise dissimilar names, a memory holding
/// their old birthplaces and unrelated locality facts, a perfect extractor
/// and a QA model that copies read results into its answer.
pub fn edit_fixture(seed: u64, n: usize, prompt: &tripmem_core::editing::QaPrompt) -> EditFixture {
    let mut rng = rng(seed);
    let mut memory = MemoryStore::with_reference_embedder(256, seed);
    let tau = RetrievalThresholds::editing().tau_e;
    let mut taken: Vec<EmbeddingVector> = Vec::new();
    let mut fresh = |rng: &mut ChaCha8Rng, make: &dyn Fn(&mut ChaCha8Rng) -> String| loop {
        let name = make(rng);
        let v = memory.embed(&name).unwrap();
        if taken.iter().all(|t| cosine(&v, t).unwrap() < tau) {
            taken.push(v);
            return name;
        }
    };
    let mut people = Vec::new();
    let mut books = Vec::new();
    for _ in 0..n {
        people.push(fresh(&mut rng, &|r| {
            format!("{} {}", word(r, 2), word(r, 3))
        }));
        books.push(fresh(&mut rng, &|r| format!("Volume {}", word(r, 4))));
    }
    let mut qa = ScriptedGenerator::new();
    let mut extractor = OracleExtractor::default();
    let mut cases = Vec::new();
    for (i, person) in people.iter().enumerate() {
        let old_city = format!("Oldtown {i}");
        let new_city = format!("{} City", word(&mut rng, 3));
        let book = &books[i];
        let author = format!("{} {}", word(&mut rng, 2), word(&mut rng, 2));
        memory
            .insert_triple(person, "place of birth", &old_city, None)
            .unwrap();
        memory.insert_triple(book, "author", &author, None).unwrap();
        let case = EditCase {
            prompt: format!("What city was {person} born in?"),
            edit_answer: new_city.clone(),
            generalization_prompt: format!("Where was {person} born?"),
            locality_prompt: format!("Who wrote {book}?"),
            locality_expected: author,
        };
        extractor.insert(
            format_edit_input(&case).unwrap().focus_sentence,
            WriteCall {
                triples: vec![TripleText::new(person, "place of birth", &new_city)],
            },
        );
        for (question, query) in [
            (&case.prompt, format!("{person}>>place of birth>>")),
            (
                &case.generalization_prompt,
                format!("{person}>>place of birth>>"),
            ),
            (&case.locality_prompt, format!("{book}>>author>>")),
        ] {
            let ctx = format!("{}{READ_OPEN}", prompt.render(question).unwrap());
            qa.chain(&ctx, &[query.as_str(), READ_EXEC], -0.05).unwrap();
        }
        cases.push(case);
    }
    qa.set_fallback(vec![
        RankedToken::new(EOS, -0.1),
        RankedToken::new(" ", -3.0),
    ])
    .unwrap();
    EditFixture {
        cases,
        extractor,
        qa: EchoGenerator::with_affixes(qa, " A: ", "\n"),
        memory,
    }
}
