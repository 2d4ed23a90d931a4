use std::collections::HashSet;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use serde_json::{json, Value};

use strata_core::attribution::{apply_attribution, Outcome};
use strata_core::config::EngineConfig;
use strata_core::consolidation::{run_consolidation_pass, schedule, Extractor, HeuristicExtractor, HttpExtractor};
use strata_core::eval::{
    run_ablation, run_benchmark, AblationGrid, BenchOptions, Benchmark, Dataset, EchoReader, EvalMode, HttpReader,
    OracleReader, Reader,
};
use strata_core::exec::Execution;
use strata_core::learning::{train, QaEnv, RewardMode, WeightPolicy};
use strata_core::retrieval::{
    Embedder, HashEmbedder, HttpEmbedder, RetrievalConfig, RetrievalMode, RetrievalResult, Retriever,
};
use strata_core::store::{parse_timestamp, AgentView, EpisodicEntry, Store};
use strata_core::synthetic::{qa_corpus, qa_corpus_scaled, QA_SEED};
use strata_core::{Error, Result};

use crate::output::{write_file, write_report, Output};
use crate::{Cli, Command, RetrievalFlags};

struct Ctx {
    cfg: EngineConfig,
    out: Output,
}

impl Ctx {
    fn store(&self) -> Store {
        Store::open(&self.cfg.workspace)
    }

    fn config_echo(&self) -> Value {
        serde_json::to_value(&self.cfg).expect("config serialises")
    }

    fn retrieval(&self, flags: &RetrievalFlags, mode: Option<&str>) -> Result<RetrievalConfig> {
        let mut r = self.cfg.retrieval.clone();
        if let Some(k) = flags.k {
            r.stage2_k = k;
        }
        if let Some(k1) = &flags.k1 {
            r.stage1_k1 = k1.parse()?;
        }
        if let Some(b) = flags.budget {
            r.token_budget = b;
        }
        if let Some(v) = &flags.variant {
            r.variant = v.parse()?;
        }
        if let Some(m) = mode {
            r.mode = m.parse()?;
        }
        r.validate()?;
        Ok(r)
    }

    fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        Ok(match &self.cfg.embedder {
            Some(e) => Arc::new(HttpEmbedder::new(&e.endpoint, e.dimension)),
            None => {
                log::info!("no embedder configured, using the hashing embedder");
                Arc::new(HashEmbedder::default())
            }
        })
    }

    fn embedder_for(&self, mode: RetrievalMode) -> Result<Option<Arc<dyn Embedder>>> {
        match mode {
            RetrievalMode::Bm25 => Ok(None),
            _ => self.embedder().map(Some),
        }
    }

    fn extractor(&self) -> Box<dyn Extractor> {
        match &self.cfg.extractor {
            Some(e) => Box::new(HttpExtractor::new(e)),
            None => Box::new(HeuristicExtractor),
        }
    }

    fn reader(&self, name: Option<&str>, dataset: &Dataset) -> Result<Box<dyn Reader>> {
        match name {
            Some("oracle") => Ok(Box::new(OracleReader::from_dataset(dataset))),
            Some("echo") => Ok(Box::new(EchoReader)),
            Some("http") | None => match &self.cfg.reader {
                Some(ep) => Ok(Box::new(HttpReader::new(ep))),
                None => Err(Error::Validation(
                    "no reader configured: set reader.url or pass --reader oracle|echo".into(),
                )),
            },
            Some(other) => Err(Error::Validation(format!("unknown reader {other:?}"))),
        }
    }

    fn benchmark(&self, dataset: Dataset, mode: RetrievalMode) -> Result<Benchmark> {
        let extractor = self.extractor();
        Benchmark::prepare(dataset, extractor.as_ref(), self.embedder_for(mode)?, Execution::Parallel)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    if let Some(w) = cli.workspace {
        cfg.workspace = w;
    }
    let ctx = Ctx {
        cfg,
        out: Output { pretty: cli.pretty },
    };
    match cli.command {
        Command::Append {
            project,
            session,
            agent,
            content,
            outcome,
            id,
            timestamp,
        } => append(&ctx, project, session, agent, content, outcome, id, timestamp),
        Command::Retrieve {
            project,
            query,
            agent,
            mode,
            retrieval,
            explain,
        } => retrieve(&ctx, &project, &query, agent, mode.as_deref(), &retrieval, explain),
        Command::Consolidate {
            project,
            watch,
            max_passes,
        } => consolidate(&ctx, project, watch, max_passes),
        Command::Attribute {
            project,
            entries,
            answer,
            outcome,
        } => attribute(&ctx, &project, &entries, &answer, &outcome),
        Command::Train {
            dataset,
            out,
            seed,
            reader,
            reward,
            epochs,
            batch_size,
            questions,
            retrieval_mode,
            retrieval,
        } => {
            let mut ctx = ctx;
            if let Some(e) = epochs {
                ctx.cfg.train.epochs = e;
            }
            if let Some(b) = batch_size {
                ctx.cfg.train.batch_size = b;
            }
            if let Some(q) = questions {
                ctx.cfg.train.question_count = q;
            }
            if let Some(s) = seed {
                ctx.cfg.seed = s;
            }
            ctx.cfg.retrieval = ctx.retrieval(&retrieval, retrieval_mode.as_deref())?;
            ctx.cfg.validate()?;
            train_cmd(&ctx, &dataset, out.as_deref(), reader.as_deref(), &reward)
        }
        Command::Eval {
            dataset,
            mode,
            retrieval_mode,
            out,
            seed,
            reader,
            attribute,
            retrieval,
        } => {
            let mut ctx = ctx;
            if let Some(s) = seed {
                ctx.cfg.seed = s;
            }
            ctx.cfg.retrieval = ctx.retrieval(&retrieval, retrieval_mode.as_deref())?;
            eval_cmd(&ctx, &dataset, mode.parse()?, out.as_deref(), reader.as_deref(), attribute)
        }
        Command::Ablate {
            dataset,
            grid,
            out,
            seed,
            reader,
            retrieval,
        } => {
            let mut ctx = ctx;
            if let Some(s) = seed {
                ctx.cfg.seed = s;
            }
            ctx.cfg.retrieval = ctx.retrieval(&retrieval, None)?;
            ablate_cmd(&ctx, &dataset, &grid, out.as_deref(), reader.as_deref())
        }
        Command::Synth { out, copies, seed } => {
            let ds = match (copies, seed) {
                (1, None) => qa_corpus(),
                (n, s) => qa_corpus_scaled(n, s.unwrap_or(QA_SEED)),
            };
            write_file(&out, &ds.to_jsonl())?;
            ctx.out.json(&json!({"path": out, "questions": ds.len()}));
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn append(
    ctx: &Ctx,
    project: String,
    session: String,
    agent: String,
    content: String,
    outcome: Option<String>,
    id: Option<String>,
    timestamp: Option<String>,
) -> Result<()> {
    let outcome: Option<Outcome> = outcome.as_deref().map(str::parse).transpose()?;
    let ts = match timestamp {
        Some(t) => parse_timestamp(&t)?,
        None => Utc::now(),
    };
    let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let store = ctx.store();
    let entry_id = store.append_entry(EpisodicEntry::new(id, ts, &session, agent, &project, &content))?;

    let mut attributed = Vec::new();
    if let Some(o) = outcome {
        let scope: HashSet<String> = [session].into();
        let loaded = store.load_entries(&project, Some(&scope), &AgentView::Orchestrator)?;
        let earlier: Vec<&EpisodicEntry> = loaded.entries.iter().filter(|e| e.id != entry_id).collect();
        for (id, cw) in apply_attribution(&store, &earlier, &content, o.reward(), &ctx.cfg.attribution)? {
            attributed.push(json!({"entry_id": id, "cognitive_weight": cw}));
        }
    }
    ctx.out.json(&json!({
        "entry_id": entry_id,
        "outcome": outcome.map(|o| o.reward()),
        "attributed": attributed,
        "config": ctx.config_echo(),
    }));
    Ok(())
}

fn ranked_json(res: &RetrievalResult, explain: bool) -> Vec<Value> {
    res.ranked
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = json!({
                "rank": i + 1,
                "entry_id": r.entry.id,
                "session_id": r.entry.session_id,
                "agent_id": r.entry.agent_id,
                "timestamp": r.entry.timestamp,
                "content": r.entry.content,
                "score": r.breakdown.composite,
                "packed": res.packed_entry_ids.contains(&r.entry.id),
            });
            if let Some(d) = r.dense_similarity {
                v["dense_similarity"] = d.into();
            }
            if let Some(f) = r.fused_score {
                v["fused_score"] = f.into();
            }
            if explain {
                v["breakdown"] = serde_json::to_value(&r.breakdown).expect("breakdown serialises");
            }
            v
        })
        .collect()
}

fn retrieve(
    ctx: &Ctx,
    project: &str,
    query: &str,
    agent: Option<String>,
    mode: Option<&str>,
    flags: &RetrievalFlags,
    explain: bool,
) -> Result<()> {
    let rcfg = ctx.retrieval(flags, mode)?;
    let view = agent.map_or(AgentView::Orchestrator, AgentView::Agent);
    let snap = ctx.store().snapshot(project, &view)?;
    let mut retriever = Retriever::new(snap.entries, snap.facts, Utc::now())?;
    if let Some(e) = ctx.embedder_for(rcfg.mode)? {
        retriever = retriever.with_embedder(e);
    }
    let res = retriever.retrieve(query, &rcfg)?;
    if ctx.out.pretty {
        let mut s = String::new();
        for (i, r) in res.ranked.iter().enumerate() {
            s += &format!(
                "{:>2}. {:>8.4}  {}  [{}]  {}\n",
                i + 1,
                r.breakdown.composite,
                r.entry.id,
                r.entry.session_id,
                r.entry.content
            );
            if explain {
                let b = &r.breakdown;
                s += &format!(
                    "      bm25 raw {:.4} norm {:.4}  decay {:.4}  cw {:.4}  tier {:?} bonus {:.4}  bypass_reason={}\n",
                    b.phi_bm25_raw,
                    b.phi_bm25,
                    b.phi_decay,
                    b.phi_cw,
                    b.tier,
                    b.tier_bonus,
                    serde_json::to_value(b.bypass_reason).expect("reason serialises").as_str().unwrap_or("")
                );
            }
        }
        s += &format!(
            "sessions ratio {:.2} ({} of {}), mode {}, variant {}, k1 {}\n",
            res.sessions_ratio,
            res.scoped_session_ids.len(),
            res.total_sessions,
            res.mode,
            res.variant,
            res.stage1_k1
        );
        s += &format!(
            "latency: stage1 {}us, stage2 {}us, dense {}us\n",
            res.latency.stage1_micros, res.latency.stage2_micros, res.latency.dense_micros
        );
        ctx.out.text(&s);
    } else {
        ctx.out.json(&json!({
            "query": query,
            "mode": res.mode,
            "variant": res.variant,
            "stage1_k1": res.stage1_k1,
            "sessions_ratio": res.sessions_ratio,
            "scoped_session_ids": res.scoped_session_ids,
            "stage1_fallback": res.stage1_fallback,
            "ranked": ranked_json(&res, explain),
            "packed_entry_ids": res.packed_entry_ids,
            "packed_token_count": res.packed_token_count,
            "latency": res.latency,
            "skipped_lines": snap.skipped_lines,
            "config": ctx.config_echo(),
        }));
    }
    Ok(())
}

fn consolidate(ctx: &Ctx, project: String, watch: bool, max_passes: Option<u64>) -> Result<()> {
    let extractor = ctx.extractor();
    if !watch {
        let report = run_consolidation_pass(&ctx.store(), extractor.as_ref(), &project)?;
        ctx.out.json(&json!({"report": report, "config": ctx.config_echo()}));
        return Ok(());
    }
    let store = ctx.store();
    let out = ctx.out;
    let echo = ctx.config_echo();
    let daemon = schedule(Duration::from_secs(ctx.cfg.consolidation.interval_seconds), move || {
        let report = run_consolidation_pass(&store, extractor.as_ref(), &project)?;
        out.json(&json!({"report": report, "config": echo}));
        Ok(())
    })?;
    loop {
        std::thread::sleep(Duration::from_millis(50));
        if max_passes.is_some_and(|m| daemon.passes() >= m) {
            break;
        }
    }
    let stats = daemon.stop();
    log::info!(
        "consolidation stopped after {} passes ({} failed, {} skipped)",
        stats.passes.load(Ordering::SeqCst),
        stats.failed_passes.load(Ordering::SeqCst),
        stats.skipped.load(Ordering::SeqCst)
    );
    Ok(())
}

fn attribute(ctx: &Ctx, project: &str, ids: &[String], answer: &str, outcome: &str) -> Result<()> {
    let outcome: Outcome = outcome.parse()?;
    let store = ctx.store();
    let loaded = store.load_entries(project, None, &AgentView::Orchestrator)?;
    let entries = ids
        .iter()
        .map(|id| {
            loaded
                .entries
                .iter()
                .find(|e| &e.id == id)
                .ok_or_else(|| Error::NotFound(format!("entry {id} in project {project}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let updated = apply_attribution(&store, &entries, answer, outcome.reward(), &ctx.cfg.attribution)?;
    ctx.out.json(&json!({
        "reward": outcome.reward(),
        "updated": updated.iter().map(|(id, cw)| json!({"entry_id": id, "cognitive_weight": cw})).collect::<Vec<_>>(),
        "config": ctx.config_echo(),
    }));
    Ok(())
}

fn config_line(ctx: &Ctx) -> String {
    json!({"kind": "engine_config", "config": ctx.config_echo()}).to_string() + "\n"
}

fn train_cmd(
    ctx: &Ctx,
    dataset: &std::path::Path,
    out: Option<&std::path::Path>,
    reader: Option<&str>,
    reward: &str,
) -> Result<()> {
    let ds = Dataset::load(dataset)?;
    let reader = ctx.reader(reader, &ds)?;
    let bench = ctx.benchmark(ds, ctx.cfg.retrieval.mode)?;
    let env = QaEnv {
        bench: &bench,
        reader: reader.as_ref(),
        retrieval: ctx.cfg.retrieval.clone(),
        mode: reward.parse::<RewardMode>()?,
    };
    let policy = WeightPolicy::new(ctx.cfg.retrieval.weights, ctx.cfg.train.sigma)?;
    let outcome = train(&env, policy, &ctx.cfg.train, ctx.cfg.seed, Execution::Parallel)?;
    let log = config_line(ctx) + &outcome.log_jsonl();
    match out {
        Some(p) => write_file(p, &log)?,
        None if !ctx.out.pretty => print!("{log}"),
        None => {}
    }
    ctx.out.json(&json!({
        "kind": "summary",
        "seed": outcome.seed,
        "batches": outcome.log.len(),
        "initial": outcome.initial.mean,
        "final": outcome.policy.mean,
        "deltas": outcome.deltas(),
        "questions": outcome.question_ids.len(),
        "reward": reward,
        "config": ctx.config_echo(),
    }));
    Ok(())
}

fn eval_cmd(
    ctx: &Ctx,
    dataset: &std::path::Path,
    mode: EvalMode,
    out: Option<&std::path::Path>,
    reader: Option<&str>,
    attribute: bool,
) -> Result<()> {
    let ds = Dataset::load(dataset)?;
    let reader = ctx.reader(reader, &ds)?;
    let bench = ctx.benchmark(ds, ctx.cfg.retrieval.mode)?;
    let opts = BenchOptions {
        mode,
        retrieval: ctx.cfg.retrieval.clone(),
        attribute_on_eval: attribute,
        attribution: ctx.cfg.attribution.clone(),
        execution: Execution::Parallel,
        record_timing: false,
    };
    let report = run_benchmark(&bench, reader.as_ref(), &opts)?;
    let jsonl = config_line(ctx) + &report.to_jsonl();
    let table = report.to_table();
    if let Some(p) = out {
        write_report(p, &jsonl, &table)?;
    }
    ctx.out.report(&jsonl, &table);
    Ok(())
}

fn ablate_cmd(
    ctx: &Ctx,
    dataset: &std::path::Path,
    grid: &str,
    out: Option<&std::path::Path>,
    reader: Option<&str>,
) -> Result<()> {
    let grid = match grid {
        "default" => AblationGrid::default_plan(),
        other => return Err(Error::Validation(format!("unknown grid {other:?} (expected default)"))),
    };
    let ds = Dataset::load(dataset)?;
    let reader = ctx.reader(reader, &ds)?;
    let bench = ctx.benchmark(ds, ctx.cfg.retrieval.mode)?;
    let base = BenchOptions {
        retrieval: ctx.cfg.retrieval.clone(),
        attribution: ctx.cfg.attribution.clone(),
        ..BenchOptions::default()
    };
    let table = run_ablation(&bench, reader.as_ref(), &grid, &base)?;
    let jsonl = config_line(ctx) + &table.to_jsonl();
    let text = table.to_table();
    if let Some(p) = out {
        write_report(p, &jsonl, &text)?;
    }
    ctx.out.report(&jsonl, &text);
    Ok(())
}
