use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use tripmem_core::config::{EngineConfig, ThresholdProfile};
use tripmem_core::datagen::{
    export_examples, generate_read_corpus, generate_write_examples, read_documents, Example,
    ReadGenConfig,
};
use tripmem_core::editing::{apply_edits, evaluate_edits, read_edit_cases, EditEvalConfig};
use tripmem_core::harness::{
    run_read_decode_with, run_write_scan, LateStopConfig, LateStopDecoder, ReadDecodeConfig,
    ScriptedGenerator,
};
use tripmem_core::protocol::{parse_read_queries, serialize_write};
use tripmem_core::retrieval::{execute_query, AmbiguityList, RetrievalThresholds};
use tripmem_core::store::{MemoryStats, MemoryStore};

use crate::error::{
    CliError, CliResult, EXIT_AMBIGUOUS, EXIT_DATA, EXIT_GENERATOR, EXIT_OK, EXIT_OVERFLOW,
    EXIT_STORAGE,
};
use crate::{Cli, Command, ExampleKind, GlobalArgs, OutputFormat, Profile, SnapshotCommand};

struct Ctx<'a> {
    cfg: EngineConfig,
    store_path: Option<PathBuf>,
    global: &'a GlobalArgs,
    out: std::io::StdoutLock<'static>,
}

impl Ctx<'_> {
    fn records(&self) -> bool {
        self.global.format == OutputFormat::Records
    }

    fn record<T: Serialize>(&mut self, kind: &str, value: &T) -> CliResult<()> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::new(EXIT_DATA, e))?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("record".into(), json!(kind));
        }
        self.line(&v.to_string())
    }

    fn line(&mut self, s: &str) -> CliResult<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::new(EXIT_STORAGE, e))
    }

    /// Threshold profile from the flag, else the config, else `fallback`.
    fn thresholds(&self, fallback: ThresholdProfile) -> CliResult<RetrievalThresholds> {
        let mut cfg = self.cfg.clone();
        if let Some(p) = self.global.profile {
            cfg.profile = Some(match p {
                Profile::Default => ThresholdProfile::Default,
                Profile::Editing => ThresholdProfile::Editing,
            });
        }
        let g = self.global;
        let o = &mut cfg.thresholds;
        o.tau_e = g.tau_e.or(o.tau_e);
        o.tau_t = g.tau_t.or(o.tau_t);
        o.tau_r = g.tau_r.or(o.tau_r);
        o.q_thr = g.q_thr.or(o.q_thr);
        let t = cfg.thresholds_or(fallback);
        t.validate().map_err(CliError::usage)?;
        Ok(t)
    }

    fn require_store_path(&self) -> CliResult<&Path> {
        self.store_path
            .as_deref()
            .ok_or_else(|| CliError::usage("no store given (use --store or snapshot_path)"))
    }

    /// The store snapshot, or an empty store when the file does not exist yet.
    fn open_store(&self) -> CliResult<MemoryStore> {
        let fresh = self.cfg.new_store()?;
        let mut store = match &self.store_path {
            Some(p) if p.exists() => {
                MemoryStore::load_snapshot_with(p, fresh.provider().clone())
                    .map_err(|e| CliError::from(e).context(format!("loading {}", p.display())))?
            }
            _ => fresh,
        };
        store.set_edit_match_mode(self.cfg.edit_match_mode);
        Ok(store)
    }

    fn save_store(&self, store: &MemoryStore) -> CliResult<()> {
        if let Some(p) = &self.store_path {
            store
                .save_snapshot(p)
                .map_err(|e| CliError::from(e).context(format!("saving {}", p.display())))?;
        }
        Ok(())
    }

    fn ambiguity(&self) -> CliResult<AmbiguityList> {
        Ok(self.cfg.ambiguity_list()?)
    }

    fn print_stats(&mut self, stats: &MemoryStats) -> CliResult<()> {
        if self.records() {
            return self.record("stats", stats);
        }
        self.line(&stats_text(stats))
    }
}

pub fn stats_text(s: &MemoryStats) -> String {
    format!(
        "triples: {}\nentities: {}\nrelations: {}\nredundancy_fraction: {:.6}",
        s.triple_count, s.unique_entity_count, s.unique_relation_count, s.redundancy_fraction
    )
}

fn open_input(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::new(EXIT_DATA, e).context(format!("opening {}", path.display())))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_DATA, e).context(format!("reading {}", path.display())))
}

/// Parses a `scripted:<path>` generator spec.
fn load_generator(spec: &str) -> CliResult<ScriptedGenerator> {
    let path = spec.strip_prefix("scripted:").ok_or_else(|| {
        CliError::usage(format!(
            "unsupported generator {spec:?}; expected scripted:<path>"
        ))
    })?;
    ScriptedGenerator::load(path)
        .map_err(|e| CliError::new(EXIT_GENERATOR, e).context(format!("loading script {path}")))
}

pub fn run(cli: &Cli) -> CliResult<u8> {
    let cfg = match &cli.global.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    let store_path = cli
        .global
        .store
        .clone()
        .or_else(|| cfg.snapshot_path.clone());
    let mut ctx = Ctx {
        cfg,
        store_path,
        global: &cli.global,
        out: std::io::stdout().lock(),
    };
    match &cli.command {
        Command::Ingest {
            file,
            continue_on_error,
        } => ingest(&mut ctx, file, *continue_on_error),
        Command::Query {
            query,
            no_ambiguity_filter,
        } => query_cmd(&mut ctx, query, *no_ambiguity_filter),
        Command::Scan {
            file,
            generator,
            patience,
            max_new_tokens,
        } => scan(
            &mut ctx,
            file,
            generator,
            LateStopConfig {
                patience: *patience,
                max_new_tokens: *max_new_tokens,
            },
        ),
        Command::Read {
            prompt,
            prompt_file,
            generator,
            force,
            stop,
            max_new_tokens,
        } => {
            let prompt = match (prompt, prompt_file) {
                (Some(p), _) => p.clone(),
                (None, Some(f)) => read_text(f)?,
                (None, None) => {
                    return Err(CliError::usage("--prompt or --prompt-file is required"))
                }
            };
            let decode = ReadDecodeConfig {
                max_new_tokens: *max_new_tokens,
                stop_sequences: stop.clone(),
                ..Default::default()
            };
            read_cmd(&mut ctx, &prompt, force, generator, &decode)
        }
        Command::Datagen {
            documents,
            out,
            kind,
            keep_ambiguous,
        } => datagen(&mut ctx, documents, out, *kind, *keep_ambiguous),
        Command::EditEval {
            cases,
            generator,
            write_generator,
            withhold_edits,
            save,
        } => edit_eval(
            &mut ctx,
            cases,
            generator,
            write_generator.as_deref(),
            *withhold_edits,
            *save,
        ),
        Command::Stats => {
            let path = ctx.require_store_path()?.to_path_buf();
            let store = MemoryStore::load_snapshot(&path)?;
            ctx.print_stats(&store.get_stats())?;
            Ok(EXIT_OK)
        }
        Command::Snapshot(cmd) => snapshot(&mut ctx, cmd),
    }
}

fn ingest(ctx: &mut Ctx, file: &Path, continue_on_error: bool) -> CliResult<u8> {
    let mut store = ctx.open_store()?;
    let report = store.ingest_reader(open_input(file)?, continue_on_error)?;
    for e in &report.errors {
        log::warn!("skipped {e}");
    }
    ctx.save_store(&store)?;
    let stats = store.get_stats();
    if ctx.records() {
        ctx.record(
            "ingest",
            &json!({
                "lines_read": report.lines_read,
                "inserted": report.inserted,
                "duplicates": report.duplicates,
                "errors": report.errors.iter().map(|e| json!({"line": e.line, "message": e.message})).collect::<Vec<_>>(),
            }),
        )?;
    } else {
        ctx.line(&format!(
            "inserted: {}\nduplicates: {}\nskipped: {}",
            report.inserted,
            report.duplicates,
            report.errors.len()
        ))?;
    }
    ctx.print_stats(&stats)?;
    Ok(EXIT_OK)
}

fn query_cmd(ctx: &mut Ctx, text: &str, no_filter: bool) -> CliResult<u8> {
    let queries = parse_read_queries(text)?;
    let thresholds = ctx.thresholds(ThresholdProfile::Default)?;
    let ambiguity = if no_filter {
        AmbiguityList::empty()
    } else {
        ctx.ambiguity()?
    };
    let store = ctx.open_store()?;
    let mut code = EXIT_OK;
    for q in &queries {
        if ambiguity.is_ambiguous(q) {
            if ctx.records() {
                ctx.record("query", &json!({"query": q, "ambiguous": true}))?;
            } else {
                eprintln!("ambiguous query skipped: {}", q.relation);
            }
            if code == EXIT_OK {
                code = EXIT_AMBIGUOUS;
            }
            continue;
        }
        let r = execute_query(&store, q, &thresholds)?;
        if r.overflowed {
            code = EXIT_OVERFLOW;
        }
        if ctx.records() {
            ctx.record(
                "query",
                &json!({"query": q, "ambiguous": false, "result": r}),
            )?;
        } else {
            if r.overflowed {
                eprintln!(
                    "query returned {} results, above q_thr = {}",
                    r.raw_count, thresholds.q_thr
                );
            }
            for e in &r.entities {
                ctx.line(&format!("{}\t{:.6}", e.name, e.score))?;
            }
        }
    }
    Ok(code)
}

fn scan(ctx: &mut Ctx, file: &Path, generator: &str, config: LateStopConfig) -> CliResult<u8> {
    let sentences: Vec<String> = read_text(file)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let generator = load_generator(generator)?;
    let decoder = LateStopDecoder { generator, config };
    let mut store = ctx.open_store()?;
    let calls = run_write_scan(&sentences, &decoder, &mut store)?;
    ctx.save_store(&store)?;
    for (i, call) in calls.iter().enumerate() {
        if ctx.records() {
            ctx.record("write", &json!({"sentence": i, "triples": call.triples}))?;
        } else {
            ctx.line(&format!("{i}\t{}", serialize_write(call)?))?;
        }
    }
    ctx.print_stats(&store.get_stats())?;
    Ok(EXIT_OK)
}

fn read_cmd(
    ctx: &mut Ctx,
    prompt: &str,
    force: &str,
    generator: &str,
    decode: &ReadDecodeConfig,
) -> CliResult<u8> {
    let generator = load_generator(generator)?;
    let thresholds = ctx.thresholds(ThresholdProfile::Default)?;
    let ambiguity = ctx.ambiguity()?;
    let store = ctx.open_store()?;
    let outcome = run_read_decode_with(
        prompt,
        force,
        &generator,
        &store,
        &thresholds,
        &ambiguity,
        decode,
    )?;
    if ctx.records() {
        ctx.record("read", &outcome)?;
    } else {
        ctx.line(&outcome.generated)?;
    }
    Ok(EXIT_OK)
}

fn datagen(
    ctx: &mut Ctx,
    documents: &Path,
    out: &Path,
    kind: ExampleKind,
    keep_ambiguous: bool,
) -> CliResult<u8> {
    let docs = read_documents(open_input(documents)?)?;
    for d in &docs {
        d.validate()?;
    }
    let mut examples: Vec<Example> = Vec::new();
    if kind != ExampleKind::Read {
        for d in &docs {
            examples.extend(generate_write_examples(d)?.into_iter().map(Example::Write));
        }
    }
    let mut read_count = 0;
    if kind != ExampleKind::Write {
        let config = ReadGenConfig {
            thresholds: ctx.thresholds(ThresholdProfile::Default)?,
            ambiguity: ctx.ambiguity()?,
            filter_ambiguous: !keep_ambiguous,
            seen_scope: ctx.cfg.seen_scope,
            ..Default::default()
        };
        let store = ctx.open_store()?;
        let (reads, log) = generate_read_corpus(&docs, &store, &config)?;
        for (from, to) in &log {
            match to {
                Some(to) => log::warn!("renamed {from:?} to {to:?}"),
                None => log::warn!("dropped unusable name {from:?}"),
            }
        }
        read_count = reads.len();
        examples.extend(reads.into_iter().map(Example::Read));
    }
    export_examples(out, &examples)?;
    let write_count = examples.len() - read_count;
    if ctx.records() {
        ctx.record(
            "datagen",
            &json!({"documents": docs.len(), "write_examples": write_count, "read_examples": read_count}),
        )?;
    } else {
        ctx.line(&format!(
            "documents: {}\nwrite_examples: {write_count}\nread_examples: {read_count}",
            docs.len()
        ))?;
    }
    Ok(EXIT_OK)
}

fn edit_eval(
    ctx: &mut Ctx,
    cases_path: &Path,
    generator: &str,
    write_generator: Option<&str>,
    withhold: bool,
    save: bool,
) -> CliResult<u8> {
    let cases = read_edit_cases(open_input(cases_path)?)?;
    let qa = load_generator(generator)?;
    let mut store = ctx.open_store()?;
    if !withhold {
        let writer = match write_generator {
            Some(spec) => load_generator(spec)?,
            None => qa.clone(),
        };
        let report = apply_edits(&cases, &writer, &mut store, &LateStopConfig::default());
        for c in report.cases.iter().filter(|c| c.error.is_some()) {
            log::warn!(
                "edit {}: {}",
                c.index,
                c.error.as_deref().unwrap_or_default()
            );
        }
        if ctx.records() {
            ctx.record("edits", &report)?;
        } else {
            ctx.line(&format!(
                "edits: {} extracted: {} replaced: {} empty: {} failed: {}",
                cases.len(),
                report.extracted(),
                report.replaced(),
                report.empty(),
                report.failed()
            ))?;
        }
    }
    let config = EditEvalConfig {
        thresholds: ctx.thresholds(ThresholdProfile::Editing)?,
        ambiguity: ctx.ambiguity()?,
        prompt: ctx.cfg.qa_prompt()?,
        ..Default::default()
    };
    let eval = evaluate_edits(&cases, &qa, &store, &config)?;
    if ctx.records() {
        for c in &eval.cases {
            ctx.record("case", c)?;
        }
        ctx.record("scores", &eval.scores)?;
    } else {
        for c in &eval.cases {
            let diag = match c.failure {
                Some(f) => serde_json::to_value(f)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                None => "ok".into(),
            };
            ctx.line(&format!(
                "case {}\trel={}\tgen={}\tloc={}\t{diag}\t{:?}",
                c.index, c.reliable as u8, c.general as u8, c.local as u8, c.reliability_answer
            ))?;
        }
        let s = eval.scores;
        ctx.line(&format!(
            "reliability: {:.4}\ngeneralization: {:.4}\nlocality: {:.4}\naverage: {:.4}",
            s.reliability, s.generalization, s.locality, s.average
        ))?;
    }
    if save {
        ctx.require_store_path()?;
        ctx.save_store(&store)?;
    }
    Ok(EXIT_OK)
}

fn snapshot(ctx: &mut Ctx, cmd: &SnapshotCommand) -> CliResult<u8> {
    match cmd {
        SnapshotCommand::Save { path } => {
            let src = ctx.require_store_path()?.to_path_buf();
            let store = MemoryStore::load_snapshot(&src)?;
            store.save_snapshot(path)?;
            ctx.print_stats(&store.get_stats())?;
        }
        SnapshotCommand::Load { path } => {
            let dst = ctx.require_store_path()?.to_path_buf();
            let store = MemoryStore::load_snapshot(path)?;
            store.save_snapshot(&dst)?;
            ctx.print_stats(&store.get_stats())?;
        }
        SnapshotCommand::Verify { path } => {
            let store = MemoryStore::load_snapshot(path)?;
            let hash = format!("{:016x}", store.state_hash());
            if ctx.records() {
                ctx.record(
                    "verify",
                    &json!({"ok": true, "state_hash": hash, "stats": store.get_stats()}),
                )?;
            } else {
                ctx.line(&format!("ok\nstate_hash: {hash}"))?;
                ctx.print_stats(&store.get_stats())?;
            }
        }
    }
    Ok(EXIT_OK)
}
