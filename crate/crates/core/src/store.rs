//! Append-only JSONL persistence for the episodic and semantic tiers.
//!
//! Layout under the workspace root:
//!
//! ```text
//! memory/episodic/YYYY-MM-DD.jsonl   one EpisodicEntry per line
//! memory/semantic/facts.jsonl        one SemanticFact per line
//! memory/cw_ledger.jsonl             cognitive-weight deltas
//! memory/promotions.jsonl            episodic -> semantic promotions
//! ```
//!
//! Entry lines are never rewritten. Cognitive weight and the promoted flag
//! are derived at load time by replaying the two sidecar ledgers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Content prefix marking entries that are stored but never retrieved.
pub const SYSTEM_PREFIX: &str = "[system]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicEntry {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub session_id: String,
    pub agent_id: String,
    pub project: String,
    pub content: String,
    #[serde(default)]
    pub tokens: u64,
    #[serde(default)]
    pub promoted: bool,
    #[serde(default)]
    pub cognitive_weight: f64,
    /// Derived from the content prefix on load; not persisted.
    #[serde(skip)]
    pub system: bool,
}

impl EpisodicEntry {
    pub fn new(
        id: impl Into<String>,
        timestamp: DateTime<Utc>,
        session_id: impl Into<String>,
        agent_id: impl Into<String>,
        project: impl Into<String>,
        content: impl Into<String>,
    ) -> Self {
        let content = content.into();
        Self {
            id: id.into(),
            timestamp,
            session_id: session_id.into(),
            agent_id: agent_id.into(),
            project: project.into(),
            tokens: whitespace_tokens(&content),
            system: is_system_content(&content),
            content,
            promoted: false,
            cognitive_weight: 0.0,
        }
    }
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn is_system_content(content: &str) -> bool {
    content.starts_with(SYSTEM_PREFIX)
}

/// Parses an RFC 3339 instant into UTC.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::validation(format!("malformed timestamp {raw:?}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticFact {
    pub id: String,
    pub subject: String,
    pub relation: String,
    pub value: String,
    pub session_ids: BTreeSet<String>,
    #[serde(default)]
    pub source_entry_ids: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
}

impl SemanticFact {
    /// Text indexed for Stage-1 lookup.
    pub fn searchable_text(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwLedgerRecord {
    pub entry_id: String,
    pub delta: f64,
    pub reward: f64,
    pub applied_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionRecord {
    pub entry_id: String,
    /// `None` when the session was processed but yielded no facts.
    pub fact_id: Option<String>,
    pub promoted_at: DateTime<Utc>,
}

/// Whose episodic entries a reader may see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentView {
    Agent(String),
    Orchestrator,
}

impl AgentView {
    pub fn admits(&self, agent_id: &str) -> bool {
        match self {
            AgentView::Agent(a) => a == agent_id,
            AgentView::Orchestrator => true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedEntries {
    pub entries: Vec<EpisodicEntry>,
    /// Unparseable lines across episodic files and ledgers.
    pub skipped_lines: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedFacts {
    pub facts: Vec<SemanticFact>,
    pub skipped_lines: usize,
}

/// Immutable view of one project: its visible entries and the facts that
/// reference any of the project's sessions.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub entries: Vec<EpisodicEntry>,
    pub facts: Vec<SemanticFact>,
    pub skipped_lines: usize,
}

pub struct Store {
    root: PathBuf,
    io: RwLock<()>,
    cw_cache: Mutex<Option<HashMap<String, f64>>>,
    fact_ids: Mutex<Option<HashSet<String>>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

impl Store {
    /// Opens a workspace; directories are created lazily on first write.
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            io: RwLock::new(()),
            cw_cache: Mutex::new(None),
            fact_ids: Mutex::new(None),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn episodic_dir(&self) -> PathBuf {
        self.root.join("memory").join("episodic")
    }

    pub fn facts_path(&self) -> PathBuf {
        self.root.join("memory").join("semantic").join("facts.jsonl")
    }

    pub fn cw_ledger_path(&self) -> PathBuf {
        self.root.join("memory").join("cw_ledger.jsonl")
    }

    pub fn promotions_path(&self) -> PathBuf {
        self.root.join("memory").join("promotions.jsonl")
    }

    pub fn daily_path(&self, timestamp: &DateTime<Utc>) -> PathBuf {
        self.episodic_dir()
            .join(format!("{}.jsonl", timestamp.format("%Y-%m-%d")))
    }

    pub fn append_entry(&self, mut entry: EpisodicEntry) -> Result<String> {
        if entry.project.trim().is_empty() {
            return Err(Error::validation("entry project must be non-empty"));
        }
        if entry.id.trim().is_empty() {
            return Err(Error::validation("entry id must be non-empty"));
        }
        if !(-1.0..=1.0).contains(&entry.cognitive_weight) {
            return Err(Error::validation(format!(
                "cognitive weight {} outside [-1, 1]",
                entry.cognitive_weight
            )));
        }
        entry.tokens = whitespace_tokens(&entry.content);
        entry.promoted = false;

        let _guard = self.io.write();
        append_lines(&self.daily_path(&entry.timestamp), std::slice::from_ref(&entry))?;
        if let Some(cache) = self.cw_cache.lock().as_mut() {
            cache.insert(entry.id.clone(), entry.cognitive_weight);
        }
        Ok(entry.id)
    }

    /// Loads a project's entries with ledger-derived CW and promotion state.
    ///
    /// System entries are returned flagged; filtering them is the caller's job.
    pub fn load_entries(
        &self,
        project: &str,
        session_scope: Option<&HashSet<String>>,
        view: &AgentView,
    ) -> Result<LoadedEntries> {
        let _guard = self.io.read();
        let (all, skipped) = self.load_project_unlocked(project)?;
        let entries = all
            .into_iter()
            .filter(|e| view.admits(&e.agent_id))
            .filter(|e| session_scope.is_none_or(|s| s.contains(&e.session_id)))
            .collect();
        Ok(LoadedEntries {
            entries,
            skipped_lines: skipped,
        })
    }

    pub fn load_facts(&self) -> Result<LoadedFacts> {
        let _guard = self.io.read();
        let (facts, skipped_lines) = read_jsonl::<SemanticFact>(&self.facts_path())?;
        Ok(LoadedFacts {
            facts,
            skipped_lines,
        })
    }

    /// Entries visible to `view` plus the facts tied to the project's sessions,
    /// read under one lock so the two tiers are mutually consistent.
    pub fn snapshot(&self, project: &str, view: &AgentView) -> Result<Snapshot> {
        let _guard = self.io.read();
        let (all, mut skipped) = self.load_project_unlocked(project)?;
        let sessions: HashSet<&str> = all.iter().map(|e| e.session_id.as_str()).collect();
        let (facts, fact_skips) = read_jsonl::<SemanticFact>(&self.facts_path())?;
        skipped += fact_skips;
        let facts = facts
            .into_iter()
            .filter(|f| f.session_ids.iter().any(|s| sessions.contains(s.as_str())))
            .collect();
        let entries = all
            .into_iter()
            .filter(|e| view.admits(&e.agent_id))
            .collect();
        Ok(Snapshot {
            entries,
            facts,
            skipped_lines: skipped,
        })
    }

    pub fn append_fact(&self, fact: SemanticFact) -> Result<String> {
        let id = fact.id.clone();
        self.append_batch(vec![fact], Vec::new())?;
        Ok(id)
    }

    /// Appends facts and promotion records under a single write lock.
    ///
    /// Facts whose id is already stored are skipped. Returns the number of
    /// facts actually written.
    pub fn append_batch(
        &self,
        facts: Vec<SemanticFact>,
        promotions: Vec<PromotionRecord>,
    ) -> Result<usize> {
        for f in &facts {
            if f.session_ids.is_empty() {
                return Err(Error::validation(format!(
                    "fact {} has no session ids",
                    f.id
                )));
            }
        }
        let _guard = self.io.write();
        let mut ids = self.fact_ids.lock();
        if ids.is_none() {
            let (existing, _) = read_jsonl::<SemanticFact>(&self.facts_path())?;
            *ids = Some(existing.into_iter().map(|f| f.id).collect());
        }
        let ids = ids.as_mut().expect("initialised above");
        let fresh: Vec<SemanticFact> = facts
            .into_iter()
            .filter(|f| ids.insert(f.id.clone()))
            .collect();
        if !fresh.is_empty() {
            append_lines(&self.facts_path(), &fresh)?;
        }
        if !promotions.is_empty() {
            append_lines(&self.promotions_path(), &promotions)?;
        }
        Ok(fresh.len())
    }

    /// `CW ← clip(CW + delta, −1, 1)`, recorded in the CW ledger.
    pub fn apply_cw_delta(&self, entry_id: &str, delta: f64, reward: f64) -> Result<f64> {
        if !delta.is_finite() {
            return Err(Error::validation(format!("non-finite CW delta {delta}")));
        }
        let _guard = self.io.write();
        let mut cache = self.cw_cache.lock();
        if cache.is_none() {
            *cache = Some(self.build_cw_cache_unlocked()?);
        }
        let cache = cache.as_mut().expect("initialised above");
        let cw = cache
            .get_mut(entry_id)
            .ok_or_else(|| Error::NotFound(format!("entry {entry_id:?}")))?;
        let updated = clip_cw(*cw + delta);
        let record = CwLedgerRecord {
            entry_id: entry_id.to_string(),
            delta,
            reward,
            applied_at: Utc::now(),
        };
        append_lines(&self.cw_ledger_path(), std::slice::from_ref(&record))?;
        *cw = updated;
        Ok(updated)
    }

    fn build_cw_cache_unlocked(&self) -> Result<HashMap<String, f64>> {
        let mut cws = HashMap::new();
        for path in self.daily_files()? {
            let (entries, _) = read_jsonl::<EpisodicEntry>(&path)?;
            for e in entries {
                cws.insert(e.id, e.cognitive_weight);
            }
        }
        let (ledger, _) = read_jsonl::<CwLedgerRecord>(&self.cw_ledger_path())?;
        for rec in ledger {
            if let Some(cw) = cws.get_mut(&rec.entry_id) {
                *cw = clip_cw(*cw + rec.delta);
            }
        }
        Ok(cws)
    }

    fn daily_files(&self) -> Result<Vec<PathBuf>> {
        let dir = self.episodic_dir();
        let rd = match fs::read_dir(&dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::storage(dir, e)),
        };
        let mut files = Vec::new();
        for item in rd {
            let path = item.map_err(|e| Error::storage(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "jsonl") {
                files.push(path);
            }
        }
        files.sort();
        Ok(files)
    }

    fn load_project_unlocked(&self, project: &str) -> Result<(Vec<EpisodicEntry>, usize)> {
        let mut skipped = 0;
        let mut entries = Vec::new();
        for path in self.daily_files()? {
            let (lines, bad) = read_jsonl::<EpisodicEntry>(&path)?;
            skipped += bad;
            entries.extend(lines.into_iter().filter(|e| e.project == project));
        }
        let index: HashMap<String, usize> = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        for e in &mut entries {
            e.system = is_system_content(&e.content);
            e.promoted = false;
        }

        let (ledger, bad) = read_jsonl::<CwLedgerRecord>(&self.cw_ledger_path())?;
        skipped += bad;
        for rec in ledger {
            if let Some(&i) = index.get(&rec.entry_id) {
                let e = &mut entries[i];
                e.cognitive_weight = clip_cw(e.cognitive_weight + rec.delta);
            }
        }
        let (promotions, bad) = read_jsonl::<PromotionRecord>(&self.promotions_path())?;
        skipped += bad;
        for rec in promotions {
            if let Some(&i) = index.get(&rec.entry_id) {
                entries[i].promoted = true;
            }
        }
        Ok((entries, skipped))
    }
}

pub fn clip_cw(cw: f64) -> f64 {
    cw.clamp(-1.0, 1.0)
}

fn append_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)
            .map_err(|e| Error::Data(format!("serialising record: {e}")))?;
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::storage(parent, e))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::storage(path, e))?;
    file.write_all(&buf).map_err(|e| Error::storage(path, e))
}

/// Reads a JSONL file, skipping (and counting) lines that fail to parse.
/// A missing file reads as empty.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize)> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(Error::storage(path, e)),
    };
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(file).split(b'\n') {
        let line = line.map_err(|e| Error::storage(path, e))?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice::<T>(&line) {
            Ok(v) => out.push(v),
            Err(e) => {
                skipped += 1;
                log::warn!("{}: skipping corrupt line: {e}", path.display());
            }
        }
    }
    Ok((out, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(day: u32, hour: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, day, hour, 0, 0).unwrap()
    }

    fn entry(id: &str, agent: &str, session: &str, content: &str) -> EpisodicEntry {
        EpisodicEntry::new(id, ts(1, 9), session, agent, "proj", content)
    }

    fn fact(id: &str, sessions: &[&str]) -> SemanticFact {
        SemanticFact {
            id: id.into(),
            subject: "alice".into(),
            relation: "is_a".into(),
            value: "engineer".into(),
            session_ids: sessions.iter().map(|s| s.to_string()).collect(),
            source_entry_ids: BTreeSet::new(),
            created_at: ts(1, 0),
        }
    }

    #[test]
    fn missing_cw_defaults_to_zero() {
        let line = r#"{"id":"e","timestamp":"2025-03-01T00:00:00Z","session_id":"s","agent_id":"a","project":"p","content":"x y"}"#;
        let e: EpisodicEntry = serde_json::from_str(line).unwrap();
        assert_eq!(e.cognitive_weight, 0.0);
        assert!(!e.promoted);
    }

    #[test]
    fn line_has_exact_field_names() {
        let e = entry("e1", "a", "s", "hello there");
        let v = serde_json::to_value(&e).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let expect: BTreeSet<&str> = [
            "id",
            "timestamp",
            "session_id",
            "agent_id",
            "project",
            "content",
            "tokens",
            "promoted",
            "cognitive_weight",
        ]
        .into();
        assert_eq!(keys, expect);
    }

    #[test]
    fn same_day_appends_share_a_file_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        store.append_entry(entry("e1", "a", "s", "first")).unwrap();
        let mut second = entry("e2", "a", "s", "second");
        second.timestamp = ts(1, 23);
        store.append_entry(second).unwrap();

        let text = fs::read_to_string(dir.path().join("memory/episodic/2025-03-01.jsonl")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("\"e1\"") && lines[1].contains("\"e2\""));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn system_entries_flagged_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        store
            .append_entry(entry("sys", "a", "s", "[system] compaction marker"))
            .unwrap();
        let loaded = store
            .load_entries("proj", None, &AgentView::Orchestrator)
            .unwrap();
        assert_eq!(loaded.entries.len(), 1);
        assert!(loaded.entries[0].system);
    }

    #[test]
    fn agent_privacy_and_orchestrator_view() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        store.append_entry(entry("a1", "A", "s1", "from a")).unwrap();
        store.append_entry(entry("b1", "B", "s2", "from b")).unwrap();

        let a = store
            .load_entries("proj", None, &AgentView::Agent("A".into()))
            .unwrap();
        assert_eq!(a.entries.len(), 1);
        assert_eq!(a.entries[0].id, "a1");

        let all = store
            .load_entries("proj", None, &AgentView::Orchestrator)
            .unwrap();
        assert_eq!(all.entries.len(), 2);

        let scoped: HashSet<String> = ["s2".to_string()].into();
        let s = store
            .load_entries("proj", Some(&scoped), &AgentView::Orchestrator)
            .unwrap();
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[0].id, "b1");
    }

    #[test]
    fn empty_project_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        let loaded = store
            .load_entries("nothing", None, &AgentView::Orchestrator)
            .unwrap();
        assert!(loaded.entries.is_empty());
        assert_eq!(loaded.skipped_lines, 0);
    }

    #[test]
    fn corrupt_lines_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        store.append_entry(entry("e1", "a", "s", "ok")).unwrap();
        let path = dir.path().join("memory/episodic/2025-03-01.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{not json\n").unwrap();
        store.append_entry(entry("e2", "a", "s", "ok too")).unwrap();

        let loaded = store
            .load_entries("proj", None, &AgentView::Orchestrator)
            .unwrap();
        assert_eq!(loaded.entries.len(), 2);
        assert_eq!(loaded.skipped_lines, 1);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        let mut e = entry("e", "a", "s", "x");
        e.project = String::new();
        assert!(matches!(store.append_entry(e), Err(Error::Validation(_))));
        assert!(matches!(
            parse_timestamp("yesterday-ish"),
            Err(Error::Validation(_))
        ));
        assert_eq!(parse_timestamp("2025-03-01T09:00:00+02:00").unwrap(), ts(1, 7));
    }

    #[test]
    fn unwritable_root_is_storage_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let store = Store::open(&blocker);
        let err = store.append_entry(entry("e", "a", "s", "x")).unwrap_err();
        assert!(matches!(err, Error::Storage { .. }));
    }

    #[test]
    fn facts_append_in_order_and_are_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        for id in ["f1", "f2", "f3"] {
            store.append_fact(fact(id, &["s1", "s2"])).unwrap();
        }
        store.append_fact(fact("f2", &["s1"])).unwrap();
        let text = fs::read_to_string(store.facts_path()).unwrap();
        assert_eq!(text.lines().count(), 3);
        let loaded = store.load_facts().unwrap().facts;
        let ids: Vec<&str> = loaded.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["f1", "f2", "f3"]);
        assert!(loaded[0].session_ids.contains("s2"));

        let err = store.append_fact(fact("f4", &[])).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn cw_delta_examples_and_clipping() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        store.append_entry(entry("e", "a", "s", "x")).unwrap();
        assert_eq!(store.apply_cw_delta("e", 0.1, 1.0).unwrap(), 0.1);

        let mut hi = entry("hi", "a", "s", "x");
        hi.cognitive_weight = 0.98;
        store.append_entry(hi).unwrap();
        assert_eq!(store.apply_cw_delta("hi", 0.1, 1.0).unwrap(), 1.0);

        let mut lo = entry("lo", "a", "s", "x");
        lo.cognitive_weight = -0.95;
        store.append_entry(lo).unwrap();
        assert_eq!(store.apply_cw_delta("lo", -0.2, -0.5).unwrap(), -1.0);

        assert!(matches!(
            store.apply_cw_delta("nope", 0.1, 1.0),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn ledger_replay_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = Store::open(dir.path());
            store.append_entry(entry("e", "a", "s", "x")).unwrap();
            for d in [0.3, 0.4, 0.5, -0.05] {
                store.apply_cw_delta("e", d, 1.0).unwrap();
            }
        }
        let store = Store::open(dir.path());
        let loaded = store
            .load_entries("proj", None, &AgentView::Orchestrator)
            .unwrap();
        let expect = clip_cw(clip_cw(clip_cw(clip_cw(0.3) + 0.4) + 0.5) - 0.05);
        assert_eq!(loaded.entries[0].cognitive_weight, expect);
        assert_eq!(store.apply_cw_delta("e", 0.0, 0.0).unwrap(), expect);
    }

    #[test]
    fn promotions_mark_entries() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path());
        store.append_entry(entry("e", "a", "s", "x")).unwrap();
        store
            .append_batch(
                vec![fact("f", &["s"])],
                vec![PromotionRecord {
                    entry_id: "e".into(),
                    fact_id: Some("f".into()),
                    promoted_at: ts(2, 0),
                }],
            )
            .unwrap();
        let snap = store.snapshot("proj", &AgentView::Orchestrator).unwrap();
        assert!(snap.entries[0].promoted);
        assert_eq!(snap.facts.len(), 1);
        // facts not touching this project's sessions are excluded
        store.append_fact(fact("g", &["elsewhere"])).unwrap();
        let snap = store.snapshot("proj", &AgentView::Orchestrator).unwrap();
        assert_eq!(snap.facts.len(), 1);
    }
}
