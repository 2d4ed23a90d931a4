//! Episodic → semantic promotion.
//!
//! A pass groups a project's unpromoted entries by session, asks an
//! [`Extractor`] for facts, and writes the facts plus promotion records in
//! one batch. Extractors see transcripts only; there is no way to hand them
//! an evaluation question.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::http::{Endpoint, JsonClient};
use crate::store::{AgentView, EpisodicEntry, PromotionRecord, SemanticFact, Store};

/// Longest subject or value the heuristic extractor keeps, in words.
pub const MAX_FIELD_TOKENS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactDraft {
    pub subject: String,
    pub relation: String,
    pub value: String,
}

impl FactDraft {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            value: value.into(),
        }
    }
}

pub trait Extractor: Send + Sync {
    fn extract(&self, session_id: &str, session_text: &str) -> Result<Vec<FactDraft>>;
}

/// Rule-based extraction with the relation vocabulary
/// `{kv, is_a, prefers, mentioned_in}`.
///
/// Per line, the first matching structural rule wins (`A: B`, then
/// `A prefers/likes B`, then `A is B`); independently, every run of two or
/// more capitalised words yields a `mentioned_in` fact.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicExtractor;

impl Extractor for HeuristicExtractor {
    fn extract(&self, session_id: &str, session_text: &str) -> Result<Vec<FactDraft>> {
        Ok(extract_facts_heuristic(session_id, session_text))
    }
}

pub fn extract_facts_heuristic(session_id: &str, text: &str) -> Vec<FactDraft> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |d: FactDraft| {
        if d.subject.is_empty() || d.value.is_empty() {
            return;
        }
        let key = (d.subject.to_lowercase(), d.relation.clone(), d.value.to_lowercase());
        if seen.insert(key) {
            out.push(d);
        }
    };
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(d) = structural_rule(line) {
            push(d);
        }
        for entity in capitalised_runs(line) {
            push(FactDraft::new(entity, "mentioned_in", session_id));
        }
    }
    out
}

fn structural_rule(line: &str) -> Option<FactDraft> {
    if let Some((a, b)) = line.split_once(':') {
        return Some(FactDraft::new(clean(a), "kv", clean(b)));
    }
    let lower = line.to_lowercase();
    for verb in [" prefers ", " likes "] {
        if let Some(at) = lower.find(verb) {
            return Some(FactDraft::new(
                clean(&line[..at]),
                "prefers",
                clean(&line[at + verb.len()..]),
            ));
        }
    }
    lower
        .find(" is ")
        .map(|at| FactDraft::new(clean(&line[..at]), "is_a", clean(&line[at + 4..])))
}

fn clean(field: &str) -> String {
    let trimmed = field
        .trim()
        .trim_end_matches(['.', ',', '!', '?', ';'])
        .trim();
    trimmed
        .split_whitespace()
        .take(MAX_FIELD_TOKENS)
        .collect::<Vec<_>>()
        .join(" ")
}

fn capitalised_runs(line: &str) -> Vec<String> {
    let mut runs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let flush = |current: &mut Vec<&str>, runs: &mut Vec<String>| {
        if current.len() >= 2 {
            runs.push(current.iter().take(MAX_FIELD_TOKENS).copied().collect::<Vec<_>>().join(" "));
        }
        current.clear();
    };
    for raw in line.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let capitalised = word.chars().next().is_some_and(char::is_uppercase);
        if capitalised {
            current.push(word);
        } else {
            flush(&mut current, &mut runs);
        }
        // punctuation after a word ends the run ("Paris, France" is two)
        if capitalised && raw.ends_with([',', '.', ';', ':', '!', '?']) {
            flush(&mut current, &mut runs);
        }
    }
    flush(&mut current, &mut runs);
    runs
}

#[derive(Serialize)]
struct ExtractRequest<'a> {
    session_id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct ExtractResponse {
    facts: Vec<FactDraft>,
}

/// Client for `POST /extract {"session_id", "text"}` → `{"facts": [...]}`.
pub struct HttpExtractor {
    client: JsonClient,
}

impl HttpExtractor {
    pub fn new(endpoint: &Endpoint) -> Self {
        Self {
            client: endpoint.client(),
        }
    }
}

impl Extractor for HttpExtractor {
    fn extract(&self, session_id: &str, session_text: &str) -> Result<Vec<FactDraft>> {
        let resp: ExtractResponse = self
            .client
            .post("/extract", &ExtractRequest { session_id, text: session_text })?;
        Ok(resp.facts)
    }
}

/// Content-addressed fact id, so re-extracting the same fact is a no-op.
pub fn fact_id(session_ids: &BTreeSet<String>, draft: &FactDraft) -> String {
    let mut h = Sha256::new();
    for s in session_ids {
        h.update(s.as_bytes());
        h.update([0x1f]);
    }
    for part in [&draft.subject, &draft.relation, &draft.value] {
        h.update([0x1e]);
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Turns drafts from one session into stored-fact form.
pub fn facts_from_drafts(
    session_id: &str,
    drafts: Vec<FactDraft>,
    source_entry_ids: &BTreeSet<String>,
    created_at: DateTime<Utc>,
) -> Vec<SemanticFact> {
    let sessions: BTreeSet<String> = [session_id.to_string()].into();
    drafts
        .into_iter()
        .map(|d| SemanticFact {
            id: fact_id(&sessions, &d),
            subject: d.subject,
            relation: d.relation,
            value: d.value,
            session_ids: sessions.clone(),
            source_entry_ids: source_entry_ids.clone(),
            created_at,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFailure {
    pub session_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub sessions_scanned: usize,
    pub facts_emitted: usize,
    pub entries_promoted: usize,
    pub failures: Vec<SessionFailure>,
    pub duration_micros: u64,
}

/// One consolidation pass over `project`.
///
/// A session is processed when any of its non-system entries is still
/// unpromoted; processing promotes all of them, so an immediate second pass
/// finds nothing to do. Sessions whose extraction fails stay unpromoted and
/// are retried on the next pass.
pub fn run_consolidation_pass(
    store: &Store,
    extractor: &dyn Extractor,
    project: &str,
) -> Result<ConsolidationReport> {
    let started = Instant::now();
    let loaded = store.load_entries(project, None, &AgentView::Orchestrator)?;

    let mut sessions: BTreeMap<String, Vec<EpisodicEntry>> = BTreeMap::new();
    for e in loaded.entries.into_iter().filter(|e| !e.system) {
        sessions.entry(e.session_id.clone()).or_default().push(e);
    }
    sessions.retain(|_, entries| entries.iter().any(|e| !e.promoted));

    let now = Utc::now();
    let mut report = ConsolidationReport::default();
    let mut facts = Vec::new();
    let mut promotions = Vec::new();
    for (session_id, mut entries) in sessions {
        report.sessions_scanned += 1;
        entries.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        let text = entries
            .iter()
            .map(|e| e.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let drafts = match extractor.extract(&session_id, &text) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("extraction failed for session {session_id}: {e}");
                report.failures.push(SessionFailure {
                    session_id,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let sources: BTreeSet<String> = entries.iter().map(|e| e.id.clone()).collect();
        let session_facts = facts_from_drafts(&session_id, drafts, &sources, now);
        let first_fact = session_facts.first().map(|f| f.id.clone());
        for e in entries.iter().filter(|e| !e.promoted) {
            promotions.push(PromotionRecord {
                entry_id: e.id.clone(),
                fact_id: first_fact.clone(),
                promoted_at: now,
            });
        }
        facts.extend(session_facts);
    }
    report.entries_promoted = promotions.len();
    report.facts_emitted = store.append_batch(facts, promotions)?;
    report.duration_micros = started.elapsed().as_micros() as u64;
    Ok(report)
}

/// Default cadence of the background pass.
pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(300);

#[derive(Debug, Default)]
pub struct DaemonStats {
    pub passes: AtomicU64,
    pub failed_passes: AtomicU64,
    /// Ticks dropped because the previous pass was still running.
    pub skipped: AtomicU64,
}

/// Handle to a running background pass loop.
pub struct Daemon {
    stop: Arc<(Mutex<bool>, Condvar)>,
    stats: Arc<DaemonStats>,
    handle: Option<JoinHandle<()>>,
}

impl Daemon {
    pub fn stats(&self) -> &DaemonStats {
        &self.stats
    }

    pub fn passes(&self) -> u64 {
        self.stats.passes.load(Ordering::SeqCst)
    }

    pub fn skipped(&self) -> u64 {
        self.stats.skipped.load(Ordering::SeqCst)
    }

    /// Stops the loop and waits for an in-flight pass to finish.
    pub fn stop(mut self) -> Arc<DaemonStats> {
        self.shutdown();
        Arc::clone(&self.stats)
    }

    fn shutdown(&mut self) {
        let (flag, cv) = &*self.stop;
        *flag.lock() = true;
        cv.notify_all();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Runs `pass` every `interval` on a background thread.
///
/// Passes never overlap: ticks that elapse while a pass is running are
/// skipped and counted rather than queued.
pub fn schedule<F>(interval: Duration, mut pass: F) -> Result<Daemon>
where
    F: FnMut() -> Result<()> + Send + 'static,
{
    if interval.is_zero() {
        return Err(Error::validation("schedule interval must be positive"));
    }
    let stop = Arc::new((Mutex::new(false), Condvar::new()));
    let stats = Arc::new(DaemonStats::default());
    let (stop_t, stats_t) = (Arc::clone(&stop), Arc::clone(&stats));
    let handle = std::thread::Builder::new()
        .name("consolidation".into())
        .spawn(move || {
            let (flag, cv) = &*stop_t;
            let mut next = Instant::now() + interval;
            loop {
                {
                    let mut stopped = flag.lock();
                    while !*stopped {
                        let now = Instant::now();
                        if now >= next {
                            break;
                        }
                        cv.wait_for(&mut stopped, next - now);
                    }
                    if *stopped {
                        return;
                    }
                }
                if let Err(e) = pass() {
                    log::warn!("consolidation pass failed: {e}");
                    stats_t.failed_passes.fetch_add(1, Ordering::SeqCst);
                }
                stats_t.passes.fetch_add(1, Ordering::SeqCst);
                next += interval;
                let now = Instant::now();
                while next <= now {
                    next += interval;
                    stats_t.skipped.fetch_add(1, Ordering::SeqCst);
                }
            }
        })
        .map_err(|e| Error::External(format!("spawning consolidation thread: {e}")))?;
    Ok(Daemon {
        stop,
        stats,
        handle: Some(handle),
    })
}
