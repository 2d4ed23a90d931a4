//! Benchmark runner: context construction, reading, scoring, aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attribution::{apply_attribution, AttributionConfig, CwTable};
use crate::consolidation::{facts_from_drafts, Extractor};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::retrieval::{oracle_context, Embedder, GoldSession, RetrievalConfig, RetrievalResult, Retriever, StageLatency};
use crate::store::{EpisodicEntry, SemanticFact};

use super::dataset::{BenchmarkQuestion, Dataset};
use super::metrics::{ndcg_at_k, recall_at_k, soft_em, token_f1, wilson_ci, wilson_interval};
use super::reader::{Reader, ReaderQuery, PROMPT_TEMPLATE};

/// Project label given to benchmark entries.
pub const BENCH_PROJECT: &str = "bench";

/// Number of gold sessions injected in oracle mode.
pub const ORACLE_SESSION_LIMIT: usize = 3;

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    NoRetrieval,
    #[default]
    Retrieval,
    Oracle,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_retrieval" => Ok(EvalMode::NoRetrieval),
            "retrieval" => Ok(EvalMode::Retrieval),
            "oracle" => Ok(EvalMode::Oracle),
            other => Err(Error::validation(format!("unknown eval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub mode: EvalMode,
    pub retrieval: RetrievalConfig,
    /// Apply `r = +1` attribution after each correct answer. Forces
    /// sequential evaluation so CW updates are ordered.
    pub attribute_on_eval: bool,
    pub attribution: AttributionConfig,
    pub execution: Execution,
    /// Include wall-clock latency (makes reports run-dependent).
    pub record_timing: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::Retrieval,
            retrieval: RetrievalConfig::recommended(),
            attribute_on_eval: false,
            attribution: AttributionConfig::default(),
            execution: Execution::Parallel,
            record_timing: false,
        }
    }
}

/// A dataset with its semantic tier pre-populated and per-question
/// retrievers built.
///
/// Pre-population runs the extractor once per distinct session and never
/// sees a question.
pub struct Benchmark {
    dataset: Dataset,
    facts_by_session: HashMap<String, Vec<SemanticFact>>,
    embedder: Option<Arc<dyn Embedder>>,
    retrievers: Vec<Retriever>,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("questions", &self.dataset.len())
            .field("sessions_with_facts", &self.facts_by_session.len())
            .finish_non_exhaustive()
    }
}

impl Benchmark {
    pub fn prepare(
        dataset: Dataset,
        extractor: &dyn Extractor,
        embedder: Option<Arc<dyn Embedder>>,
        execution: Execution,
    ) -> Result<Self> {
        let sessions = dataset.unique_sessions();
        let extracted: Vec<Result<(String, Vec<SemanticFact>)>> = exec::map(execution, &sessions, |s| {
            let drafts = extractor.extract(&s.session_id, &s.text())?;
            let sources: BTreeSet<String> = s
                .to_entries(BENCH_PROJECT)
                .into_iter()
                .map(|e| e.id)
                .collect();
            Ok((s.session_id.clone(), facts_from_drafts(&s.session_id, drafts, &sources, s.date)))
        });
        let facts_by_session = extracted.into_iter().collect::<Result<HashMap<_, _>>>()?;
        let mut bench = Self {
            dataset,
            facts_by_session,
            embedder,
            retrievers: Vec::new(),
        };
        let retrievers = exec::map_range(execution, bench.dataset.len(), |i| bench.build_retriever(i, None));
        bench.retrievers = retrievers.into_iter().collect::<Result<_>>()?;
        Ok(bench)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn retriever(&self, idx: usize) -> &Retriever {
        &self.retrievers[idx]
    }

    pub fn facts_for_session(&self, session_id: &str) -> &[SemanticFact] {
        self.facts_by_session
            .get(session_id)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    fn question_entries(&self, q: &BenchmarkQuestion, cw: Option<&CwTable>) -> Vec<EpisodicEntry> {
        let mut entries: Vec<EpisodicEntry> = q
            .sessions
            .iter()
            .flat_map(|s| s.to_entries(BENCH_PROJECT))
            .collect();
        if let Some(table) = cw {
            for e in &mut entries {
                e.cognitive_weight = table.get(&e.id);
            }
        }
        entries
    }

    fn build_retriever(&self, idx: usize, cw: Option<&CwTable>) -> Result<Retriever> {
        let q = &self.dataset.questions[idx];
        let facts: Vec<SemanticFact> = q
            .sessions
            .iter()
            .flat_map(|s| self.facts_for_session(&s.session_id).iter().cloned())
            .collect();
        let r = Retriever::new(self.question_entries(q, cw), facts, q.reference_time())?;
        Ok(match &self.embedder {
            Some(e) => r.with_embedder(Arc::clone(e)),
            None => r,
        })
    }

    /// Gold sessions (up to the limit) plus their facts, no retrieval.
    pub fn oracle_context(&self, idx: usize) -> Result<String> {
        let q = &self.dataset.questions[idx];
        let gold: Vec<GoldSession> = q
            .gold_sessions()
            .into_iter()
            .take(ORACLE_SESSION_LIMIT)
            .map(|s| GoldSession {
                session_id: &s.session_id,
                text: s.text(),
            })
            .collect();
        let facts: Vec<String> = gold
            .iter()
            .flat_map(|g| self.facts_for_session(g.session_id))
            .map(SemanticFact::searchable_text)
            .collect();
        oracle_context(&gold, &facts, ORACLE_SESSION_LIMIT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub ranked_entry_ids: Vec<String>,
    pub packed_entry_ids: Vec<String>,
    pub scoped_session_ids: Vec<String>,
    pub sessions_ratio: f64,
    pub stage1_fallback: bool,
    pub packed_token_count: u64,
    pub recall_at_1: f64,
    pub recall_at_2: f64,
    pub recall_at_4: f64,
    pub ndcg_at_4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question_type: String,
    pub gold: String,
    pub prediction: String,
    pub em: bool,
    pub f1: f64,
    /// Gold answer text (case-insensitive) present in the context.
    pub gold_in_context: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub accuracy_ci: (f64, f64),
    pub f1_ci: (f64, f64),
}

impl Summary {
    fn from_records<'a>(records: impl Iterator<Item = &'a QuestionRecord>) -> Result<Self> {
        let (mut n, mut correct, mut f1_sum) = (0usize, 0usize, 0.0);
        for r in records {
            n += 1;
            correct += r.em as usize;
            f1_sum += r.f1;
        }
        if n == 0 {
            return Ok(Summary {
                n,
                correct,
                accuracy: 0.0,
                f1: 0.0,
                accuracy_ci: (0.0, 0.0),
                f1_ci: (0.0, 0.0),
            });
        }
        let f1 = f1_sum / n as f64;
        Ok(Summary {
            n,
            correct,
            accuracy: correct as f64 / n as f64,
            f1,
            accuracy_ci: wilson_ci(correct as u64, n as u64, Z_95)?,
            f1_ci: wilson_interval(f1.clamp(0.0, 1.0), n as u64, Z_95)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub recall_at_1: f64,
    pub recall_at_2: f64,
    pub recall_at_4: f64,
    pub ndcg_at_4: f64,
    pub mean_sessions_ratio: f64,
    pub gold_in_context_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mean_stage1_micros: f64,
    pub mean_stage2_micros: f64,
    pub mean_dense_micros: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub mode: EvalMode,
    pub reader: String,
    pub retrieval: RetrievalConfig,
    pub attribute_on_eval: bool,
    pub prompt_template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub questions: Vec<QuestionRecord>,
    pub per_type: BTreeMap<String, Summary>,
    pub overall: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalSummary>,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingSummary>,
}

impl EvalReport {
    /// Config line, one line per question, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let config = serde_json::json!({"kind": "config", "config": self.config});
        out.push_str(&config.to_string());
        out.push('\n');
        for q in &self.questions {
            let mut v = serde_json::to_value(q).expect("record serialises");
            v["kind"] = "question".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "kind": "summary",
            "overall": self.overall,
            "per_type": self.per_type,
            "retrieval": self.retrieval,
            "failures": self.failures,
            "timing": self.timing,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>5} {:>7} {:>7}", "type", "n", "acc", "f1");
        for (t, s) in &self.per_type {
            let _ = writeln!(out, "{:<28} {:>5} {:>7.3} {:>7.3}", t, s.n, s.accuracy, s.f1);
        }
        let o = &self.overall;
        let _ = writeln!(out, "{:<28} {:>5} {:>7.3} {:>7.3}", "overall", o.n, o.accuracy, o.f1);
        let _ = writeln!(
            out,
            "95% Wilson CI: acc [{:.3}-{:.3}]  f1 [{:.3}-{:.3}]",
            o.accuracy_ci.0, o.accuracy_ci.1, o.f1_ci.0, o.f1_ci.1
        );
        if let Some(r) = &self.retrieval {
            let _ = writeln!(
                out,
                "recall@1 {:.3}  recall@2 {:.3}  recall@4 {:.3}  ndcg@4 {:.3}  sessions ratio {:.3}",
                r.recall_at_1, r.recall_at_2, r.recall_at_4, r.ndcg_at_4, r.mean_sessions_ratio
            );
        }
        out
    }
}

fn trace(result: &RetrievalResult, gold: &std::collections::HashSet<String>) -> Result<RetrievalTrace> {
    let sessions: Vec<&str> = result.full_order.iter().map(|r| r.session_id.as_str()).collect();
    Ok(RetrievalTrace {
        ranked_entry_ids: result.ranked.iter().map(|r| r.entry.id.clone()).collect(),
        packed_entry_ids: result.packed_entry_ids.clone(),
        scoped_session_ids: result.scoped_session_ids.clone(),
        sessions_ratio: result.sessions_ratio,
        stage1_fallback: result.stage1_fallback,
        packed_token_count: result.packed_token_count,
        recall_at_1: recall_at_k(&sessions, gold, 1)?,
        recall_at_2: recall_at_k(&sessions, gold, 2)?,
        recall_at_4: recall_at_k(&sessions, gold, 4)?,
        ndcg_at_4: ndcg_at_k(&sessions, gold, 4)?,
    })
}

struct Evaluated {
    record: QuestionRecord,
    latency: Option<StageLatency>,
    result: Option<RetrievalResult>,
}

fn evaluate_question(
    bench: &Benchmark,
    idx: usize,
    retriever: &Retriever,
    reader: &dyn Reader,
    opts: &BenchOptions,
) -> Result<Evaluated> {
    let q = &bench.dataset.questions[idx];
    let (context, result) = match opts.mode {
        EvalMode::NoRetrieval => (String::new(), None),
        EvalMode::Oracle => (bench.oracle_context(idx)?, None),
        EvalMode::Retrieval => {
            let r = retriever.retrieve(&q.question, &opts.retrieval)?;
            (r.packed_context.clone(), Some(r))
        }
    };
    let retrieval = result
        .as_ref()
        .map(|r| trace(r, &q.gold_set()))
        .transpose()?;
    let query = ReaderQuery {
        question_id: &q.question_id,
        question: &q.question,
    };
    let (prediction, error) = match reader.answer(&query, &context) {
        Ok(p) => (p, None),
        Err(e) => {
            log::warn!("reader failed on {}: {e}", q.question_id);
            (String::new(), Some(e.to_string()))
        }
    };
    let (em, f1) = if error.is_some() {
        (false, 0.0)
    } else {
        (soft_em(&prediction, &q.answer), token_f1(&prediction, &q.answer))
    };
    Ok(Evaluated {
        record: QuestionRecord {
            question_id: q.question_id.clone(),
            question_type: q.question_type.to_string(),
            gold: q.answer.clone(),
            prediction,
            em,
            f1,
            gold_in_context: !q.answer.is_empty() && context.to_lowercase().contains(&q.answer.to_lowercase()),
            retrieval,
            error,
        },
        latency: result.as_ref().map(|r| r.latency),
        result,
    })
}

pub fn run_benchmark(bench: &Benchmark, reader: &dyn Reader, opts: &BenchOptions) -> Result<EvalReport> {
    opts.retrieval.validate()?;
    let evaluated: Vec<Evaluated> = if opts.attribute_on_eval && opts.mode == EvalMode::Retrieval {
        let table = CwTable::new();
        let mut out = Vec::with_capacity(bench.len());
        for idx in 0..bench.len() {
            let retriever = bench.build_retriever(idx, Some(&table))?;
            let ev = evaluate_question(bench, idx, &retriever, reader, opts)?;
            if ev.record.em {
                if let Some(r) = &ev.result {
                    let entries: Vec<&EpisodicEntry> = r.ranked.iter().map(|x| &x.entry).collect();
                    apply_attribution(&table, &entries, &ev.record.prediction, 1.0, &opts.attribution)?;
                }
            }
            out.push(ev);
        }
        out
    } else {
        exec::map_range(opts.execution, bench.len(), |idx| {
            evaluate_question(bench, idx, bench.retriever(idx), reader, opts)
        })
        .into_iter()
        .collect::<Result<_>>()?
    };

    let timing = opts.record_timing.then(|| {
        let lat: Vec<StageLatency> = evaluated.iter().filter_map(|e| e.latency).collect();
        let n = lat.len().max(1) as f64;
        TimingSummary {
            mean_stage1_micros: lat.iter().map(|l| l.stage1_micros as f64).sum::<f64>() / n,
            mean_stage2_micros: lat.iter().map(|l| l.stage2_micros as f64).sum::<f64>() / n,
            mean_dense_micros: lat.iter().map(|l| l.dense_micros as f64).sum::<f64>() / n,
        }
    });
    let questions: Vec<QuestionRecord> = evaluated.into_iter().map(|e| e.record).collect();

    let mut per_type = BTreeMap::new();
    let types: BTreeSet<&str> = questions.iter().map(|q| q.question_type.as_str()).collect();
    for t in types {
        per_type.insert(
            t.to_string(),
            Summary::from_records(questions.iter().filter(|q| q.question_type == t))?,
        );
    }
    let overall = Summary::from_records(questions.iter())?;

    let retrieval = (opts.mode == EvalMode::Retrieval && !questions.is_empty()).then(|| {
        let traces: Vec<&RetrievalTrace> = questions.iter().filter_map(|q| q.retrieval.as_ref()).collect();
        let n = traces.len().max(1) as f64;
        let mean = |f: fn(&RetrievalTrace) -> f64| traces.iter().map(|t| f(t)).sum::<f64>() / n;
        RetrievalSummary {
            recall_at_1: mean(|t| t.recall_at_1),
            recall_at_2: mean(|t| t.recall_at_2),
            recall_at_4: mean(|t| t.recall_at_4),
            ndcg_at_4: mean(|t| t.ndcg_at_4),
            mean_sessions_ratio: mean(|t| t.sessions_ratio),
            gold_in_context_rate: questions.iter().filter(|q| q.gold_in_context).count() as f64
                / questions.len() as f64,
        }
    });

    Ok(EvalReport {
        config: ReportConfig {
            mode: opts.mode,
            reader: reader.name().to_string(),
            retrieval: opts.retrieval.clone(),
            attribute_on_eval: opts.attribute_on_eval,
            prompt_template: PROMPT_TEMPLATE.to_string(),
        },
        failures: questions.iter().filter(|q| q.error.is_some()).count(),
        questions,
        per_type,
        overall,
        retrieval,
        timing,
    })
}
