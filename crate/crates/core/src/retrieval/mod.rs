//! Two-stage retrieval.
//!
//! Stage 1 ranks semantic facts with BM25 and collects the sessions of the
//! top facts. Stage 2 scores the episodic entries of those sessions with the
//! composite formula (optionally fused with a dense ranking) and packs the
//! winners into a token-bounded context.

mod dense;
mod fusion;
mod pack;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use dense::{dense_rank, dot, rank_by_similarity, DenseCandidate, Embedder, HashEmbedder, HttpEmbedder};
pub use fusion::rrf_fuse;
pub use pack::{oracle_context, pack_context, GoldSession, PackedContext};

use crate::error::{Error, Result};
use crate::lexical::{tokenize, Bm25Index};
use crate::scoring::{
    score_pool, DecayConfig, NormVariant, ScoreBreakdown, ScoringContext, SignalInputs, Tier,
    TierConfig, WeightVector,
};
use crate::store::{EpisodicEntry, SemanticFact};

/// How many sessions Stage 1 may hand to Stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage1K {
    Finite(usize),
    /// Scoping disabled: Stage 2 sees every session.
    Unbounded,
}

impl Default for Stage1K {
    fn default() -> Self {
        Stage1K::Finite(5)
    }
}

impl fmt::Display for Stage1K {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage1K::Finite(k) => write!(f, "{k}"),
            Stage1K::Unbounded => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Stage1K {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" | "unbounded" => Ok(Stage1K::Unbounded),
            n => n
                .parse::<usize>()
                .ok()
                .filter(|k| *k > 0)
                .map(Stage1K::Finite)
                .ok_or_else(|| Error::validation(format!("invalid stage-1 k {s:?}"))),
        }
    }
}

impl Serialize for Stage1K {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Stage1K::Finite(k) => s.serialize_u64(*k as u64),
            Stage1K::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Stage1K {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("stage-1 k must be positive")),
            Raw::Num(k) => Ok(Stage1K::Finite(k as usize)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    #[default]
    Bm25,
    Dense,
    HybridRrf,
}

impl RetrievalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Bm25 => "bm25",
            RetrievalMode::Dense => "dense",
            RetrievalMode::HybridRrf => "hybrid_rrf",
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bm25" => Ok(RetrievalMode::Bm25),
            "dense" => Ok(RetrievalMode::Dense),
            "hybrid_rrf" | "hybrid" => Ok(RetrievalMode::HybridRrf),
            other => Err(Error::validation(format!("unknown retrieval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub stage1_k1: Stage1K,
    pub stage2_k: usize,
    pub token_budget: u64,
    pub weights: WeightVector,
    pub variant: NormVariant,
    pub mode: RetrievalMode,
    pub rrf_k: u32,
    pub decay: DecayConfig,
    pub tiers: TierConfig,
    /// Prefix each packed entry with its timestamp.
    pub prepend_timestamps: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            stage1_k1: Stage1K::default(),
            stage2_k: 4,
            token_budget: 300,
            weights: WeightVector::default(),
            variant: NormVariant::Raw,
            mode: RetrievalMode::Bm25,
            rrf_k: 60,
            decay: DecayConfig::default(),
            tiers: TierConfig::default(),
            prepend_timestamps: false,
        }
    }
}

impl RetrievalConfig {
    /// `k = 2` and a 600-token budget, the best-performing operating point.
    pub fn recommended() -> Self {
        Self {
            stage2_k: 2,
            token_budget: 600,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage2_k == 0 {
            return Err(Error::validation("stage2_k must be positive"));
        }
        if self.token_budget == 0 {
            return Err(Error::validation("token_budget must be positive"));
        }
        if self.rrf_k == 0 {
            return Err(Error::validation("rrf_k must be positive"));
        }
        if let Stage1K::Finite(0) = self.stage1_k1 {
            return Err(Error::validation("stage1_k1 must be positive"));
        }
        self.decay.validate()?;
        self.tiers.validate()
    }
}

/// Sessions of the best-matching facts, in rank order, until `k1` distinct
/// sessions are gathered. A multi-session fact contributes all of its
/// sessions at its rank. Only facts with a positive score count.
pub fn stage1_scope(
    query_tokens: &[String],
    facts: &[SemanticFact],
    index: &Bm25Index,
    k1: Stage1K,
) -> Vec<String> {
    let scores = index.score_all(query_tokens);
    let mut ranked: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.0).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let limit = match k1 {
        Stage1K::Finite(k) => k,
        Stage1K::Unbounded => usize::MAX,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    'facts: for i in ranked {
        for sid in &facts[i].session_ids {
            if out.len() >= limit {
                break 'facts;
            }
            if seen.insert(sid.as_str()) {
                out.push(sid.clone());
            }
        }
    }
    out
}

/// Composite-score order: score desc, then newer, then smaller id.
fn composite_order(entries: &[&EpisodicEntry], breakdowns: &[ScoreBreakdown]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        breakdowns[b]
            .composite
            .total_cmp(&breakdowns[a].composite)
            .then_with(|| entries[b].timestamp.cmp(&entries[a].timestamp))
            .then_with(|| entries[a].id.cmp(&entries[b].id))
    });
    order
}

/// Ages in whole-and-fractional days; entries dated after `now` count as age 0.
pub fn age_days(now: DateTime<Utc>, ts: DateTime<Utc>) -> f64 {
    let ms = (now - ts).num_milliseconds();
    (ms.max(0) as f64) / 86_400_000.0
}

/// Scores `candidates` with the composite formula and returns indices in
/// rank order with their breakdowns. Stage-2 BM25 statistics come from the
/// candidate pool itself.
pub fn stage2_retrieve(
    query_tokens: &[String],
    candidates: &[&EpisodicEntry],
    semantic_scope: &HashSet<String>,
    now: DateTime<Utc>,
    cfg: &RetrievalConfig,
) -> Result<Vec<(usize, ScoreBreakdown)>> {
    let index = Bm25Index::build(
        candidates
            .iter()
            .map(|e| (e.id.clone(), e.content.as_str())),
    )?;
    let raw = index.score_all(query_tokens);
    let inputs: Vec<SignalInputs> = candidates
        .iter()
        .zip(&raw)
        .map(|(e, &bm25)| SignalInputs {
            raw_bm25: bm25,
            age_days: age_days(now, e.timestamp),
            cognitive_weight: e.cognitive_weight,
            tier: Tier::Episodic,
            session_id: &e.session_id,
        })
        .collect();
    let ctx = ScoringContext {
        weights: cfg.weights,
        tiers: &cfg.tiers,
        decay: &cfg.decay,
        semantic_scope,
    };
    let breakdowns = score_pool(&inputs, &ctx, cfg.variant)?;
    let order = composite_order(candidates, &breakdowns);
    let mut slots: Vec<Option<ScoreBreakdown>> = breakdowns.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .map(|i| (i, slots[i].take().expect("each index once")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub entry: EpisodicEntry,
    pub breakdown: ScoreBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage1_micros: u64,
    pub stage2_micros: u64,
    pub dense_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRef {
    pub entry_id: String,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub mode: RetrievalMode,
    pub variant: NormVariant,
    pub stage1_k1: Stage1K,
    /// Top `stage2_k` entries.
    pub ranked: Vec<RankedEntry>,
    /// The whole candidate pool in final rank order.
    pub full_order: Vec<RankRef>,
    /// Sessions Stage 2 searched.
    pub scoped_session_ids: Vec<String>,
    /// Stage-1 sessions used by the decay bypass.
    pub semantic_scope: Vec<String>,
    pub scoping_enabled: bool,
    /// Stage 1 produced nothing and Stage 2 ran unscoped.
    pub stage1_fallback: bool,
    pub total_sessions: usize,
    pub sessions_ratio: f64,
    pub packed_context: String,
    pub packed_entry_ids: Vec<String>,
    pub packed_token_count: u64,
    pub latency: StageLatency,
}

/// Read-only retrieval over one memory snapshot.
///
/// Holds the non-system entries and the semantic index; weights and other
/// knobs arrive per call so one instance serves sweeps and training.
pub struct Retriever {
    entries: Vec<EpisodicEntry>,
    facts: Vec<SemanticFact>,
    fact_index: Bm25Index,
    sessions: Vec<String>,
    now: DateTime<Utc>,
    embedder: Option<Arc<dyn Embedder>>,
    entry_vectors: Mutex<Option<Arc<Vec<Vec<f64>>>>>,
}

impl fmt::Debug for Retriever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Retriever")
            .field("entries", &self.entries.len())
            .field("facts", &self.facts.len())
            .field("sessions", &self.sessions.len())
            .field("now", &self.now)
            .finish_non_exhaustive()
    }
}

impl Retriever {
    /// System entries are dropped here and never reach any ranking.
    pub fn new(entries: Vec<EpisodicEntry>, facts: Vec<SemanticFact>, now: DateTime<Utc>) -> Result<Self> {
        let entries: Vec<EpisodicEntry> = entries.into_iter().filter(|e| !e.system).collect();
        let fact_index = Bm25Index::build(
            facts
                .iter()
                .map(|f| (f.id.clone(), f.searchable_text())),
        )?;
        let mut sessions: Vec<String> = entries.iter().map(|e| e.session_id.clone()).collect();
        sessions.sort();
        sessions.dedup();
        Ok(Self {
            entries,
            facts,
            fact_index,
            sessions,
            now,
            embedder: None,
            entry_vectors: Mutex::new(None),
        })
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn entries(&self) -> &[EpisodicEntry] {
        &self.entries
    }

    pub fn facts(&self) -> &[SemanticFact] {
        &self.facts
    }

    pub fn sessions(&self) -> &[String] {
        &self.sessions
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.now
    }

    pub fn stage1(&self, query: &str, k1: Stage1K) -> Vec<String> {
        stage1_scope(&tokenize(query), &self.facts, &self.fact_index, k1)
    }

    fn entry_vectors(&self, embedder: &dyn Embedder) -> Result<Arc<Vec<Vec<f64>>>> {
        let mut slot = self.entry_vectors.lock();
        if let Some(v) = slot.as_ref() {
            return Ok(Arc::clone(v));
        }
        let texts: Vec<&str> = self.entries.iter().map(|e| e.content.as_str()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::External("embedder returned wrong vector count".into()));
        }
        let vectors = Arc::new(vectors);
        *slot = Some(Arc::clone(&vectors));
        Ok(vectors)
    }

    pub fn retrieve(&self, query: &str, cfg: &RetrievalConfig) -> Result<RetrievalResult> {
        cfg.validate()?;
        let tokens = tokenize(query);

        let t1 = Instant::now();
        let stage1 = stage1_scope(&tokens, &self.facts, &self.fact_index, cfg.stage1_k1);
        let stage1_micros = t1.elapsed().as_micros() as u64;

        let finite = matches!(cfg.stage1_k1, Stage1K::Finite(_));
        let scoping_enabled = finite && !stage1.is_empty();
        let stage1_fallback = finite && stage1.is_empty();
        let semantic_scope: HashSet<String> = stage1.iter().cloned().collect();

        let t2 = Instant::now();
        let pool: Vec<usize> = (0..self.entries.len())
            .filter(|&i| !scoping_enabled || semantic_scope.contains(&self.entries[i].session_id))
            .collect();
        let pool_entries: Vec<&EpisodicEntry> = pool.iter().map(|&i| &self.entries[i]).collect();
        let scored = stage2_retrieve(&tokens, &pool_entries, &semantic_scope, self.now, cfg)?;
        let mut stage2_micros = t2.elapsed().as_micros() as u64;

        let mut breakdowns: Vec<Option<ScoreBreakdown>> = vec![None; pool.len()];
        let composite_rank: Vec<usize> = scored
            .into_iter()
            .map(|(i, b)| {
                breakdowns[i] = Some(b);
                i
            })
            .collect();

        let mut dense_sims: Option<Vec<f64>> = None;
        let mut fused: HashMap<usize, f64> = HashMap::new();
        let mut dense_micros = 0;
        let final_rank: Vec<usize> = match cfg.mode {
            RetrievalMode::Bm25 => composite_rank,
            RetrievalMode::Dense | RetrievalMode::HybridRrf => {
                let embedder = self.embedder.as_deref().ok_or_else(|| {
                    Error::validation(format!("mode {} needs an embedder", cfg.mode))
                })?;
                let td = Instant::now();
                let vectors = self.entry_vectors(embedder)?;
                let q = embedder
                    .embed(&[query])?
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::External("embedder returned no query vector".into()))?;
                let sims: Vec<f64> = pool.iter().map(|&i| dot(&q, &vectors[i])).collect();
                let dense_cands: Vec<DenseCandidate> = pool_entries
                    .iter()
                    .map(|e| DenseCandidate {
                        id: &e.id,
                        text: &e.content,
                        timestamp: e.timestamp,
                    })
                    .collect();
                let dense_order: Vec<usize> = rank_by_similarity(&dense_cands, &sims)
                    .into_iter()
                    .map(|(i, _)| i)
                    .collect();
                dense_sims = Some(sims);
                let order = if cfg.mode == RetrievalMode::Dense {
                    dense_order
                } else {
                    rrf_fuse(&composite_rank, &dense_order, cfg.rrf_k)
                        .into_iter()
                        .map(|(i, s)| {
                            fused.insert(i, s);
                            i
                        })
                        .collect()
                };
                dense_micros = td.elapsed().as_micros() as u64;
                stage2_micros += dense_micros;
                order
            }
        };

        let full_order = final_rank
            .iter()
            .map(|&i| RankRef {
                entry_id: pool_entries[i].id.clone(),
                session_id: pool_entries[i].session_id.clone(),
            })
            .collect();
        let top: Vec<usize> = final_rank.iter().copied().take(cfg.stage2_k).collect();
        let ranked: Vec<RankedEntry> = top
            .iter()
            .map(|&i| RankedEntry {
                entry: pool_entries[i].clone(),
                breakdown: breakdowns[i].clone().expect("every pool entry scored"),
                dense_similarity: dense_sims.as_ref().map(|s| s[i]),
                fused_score: fused.get(&i).copied(),
            })
            .collect();

        let refs: Vec<&EpisodicEntry> = ranked.iter().map(|r| &r.entry).collect();
        let packed = pack_context(&refs, cfg.token_budget, cfg.prepend_timestamps);

        let scoped_session_ids = if scoping_enabled {
            stage1.clone()
        } else {
            self.sessions.clone()
        };
        let total_sessions = self.sessions.len();
        let sessions_ratio = if total_sessions == 0 {
            0.0
        } else if scoping_enabled {
            let present: HashSet<&str> = self.sessions.iter().map(String::as_str).collect();
            scoped_session_ids
                .iter()
                .filter(|s| present.contains(s.as_str()))
                .count() as f64
                / total_sessions as f64
        } else {
            1.0
        };

        Ok(RetrievalResult {
            mode: cfg.mode,
            variant: cfg.variant,
            stage1_k1: cfg.stage1_k1,
            packed_entry_ids: packed.used.iter().map(|&i| ranked[i].entry.id.clone()).collect(),
            packed_token_count: packed.token_count,
            packed_context: packed.text,
            ranked,
            full_order,
            scoped_session_ids,
            semantic_scope: stage1,
            scoping_enabled,
            stage1_fallback,
            total_sessions,
            sessions_ratio,
            latency: StageLatency {
                stage1_micros,
                stage2_micros,
                dense_micros,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use std::collections::BTreeSet;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 6, 1, 12, 0, 0).unwrap()
    }

    fn entry(id: &str, session: &str, content: &str, age_days: i64) -> EpisodicEntry {
        EpisodicEntry::new(id, now() - Duration::days(age_days), session, "a", "p", content)
    }

    fn fact(id: &str, sessions: &[&str], text: &str) -> SemanticFact {
        SemanticFact {
            id: id.into(),
            subject: text.into(),
            relation: "kv".into(),
            value: String::new(),
            session_ids: sessions.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            source_entry_ids: BTreeSet::new(),
            created_at: now(),
        }
    }

    #[test]
    fn stage1_k1_one_picks_dominant_session() {
        let facts = vec![
            fact("f1", &["s1"], "zebra zebra migration"),
            fact("f2", &["s2"], "zebra and lions"),
            fact("f3", &["s3"], "unrelated"),
        ];
        let idx = Bm25Index::build(facts.iter().map(|f| (f.id.clone(), f.searchable_text()))).unwrap();
        let q = tokenize("zebra migration");
        assert_eq!(stage1_scope(&q, &facts, &idx, Stage1K::Finite(1)), ["s1"]);
        assert_eq!(stage1_scope(&q, &facts, &idx, Stage1K::Unbounded), ["s1", "s2"]);
    }

    #[test]
    fn stage1_k1_parsing() {
        assert_eq!("inf".parse::<Stage1K>().unwrap(), Stage1K::Unbounded);
        assert_eq!("3".parse::<Stage1K>().unwrap(), Stage1K::Finite(3));
        assert!("0".parse::<Stage1K>().is_err());
        let v: Stage1K = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(v, Stage1K::Unbounded);
        let v: Stage1K = serde_json::from_str("5").unwrap();
        assert_eq!(v, Stage1K::Finite(5));
    }

    #[test]
    fn higher_bm25_ranks_first() {
        let es = [entry("lo", "s", "apple pie recipe", 0), entry("hi", "s", "apple apple apple", 0)];
        let refs: Vec<&EpisodicEntry> = es.iter().collect();
        let out = stage2_retrieve(&tokenize("apple"), &refs, &HashSet::new(), now(), &RetrievalConfig::default()).unwrap();
        assert_eq!(out[0].0, 1);
    }

    #[test]
    fn bypass_lets_old_strong_match_win() {
        // constructed so raw bm25 lands near 2.5 for the old entry and 1.9 for the fresh one
        let es = [
            entry("old", "s1", "quasar telescope", 90),
            entry("new", "s2", "quasar pulsar nebula orbit", 0),
            entry("f1", "s3", "dust", 0),
            entry("f2", "s3", "rocks", 0),
            entry("f3", "s3", "sand", 0),
            entry("f4", "s3", "wind", 0),
        ];
        let refs: Vec<&EpisodicEntry> = es.iter().collect();
        let q = tokenize("quasar telescope");
        let out = stage2_retrieve(&q, &refs, &HashSet::new(), now(), &RetrievalConfig::default()).unwrap();
        let (first, b) = &out[0];
        assert_eq!(es[*first].id, "old");
        assert!(b.phi_bm25_raw > 2.0);
        assert!(b.bypass_applied);
        assert_eq!(b.phi_decay, 1.0);
    }

    #[test]
    fn ties_break_newer_then_id() {
        let es = [entry("b", "s", "same text", 1), entry("a", "s", "same text", 1), entry("c", "s", "same text", 0)];
        let refs: Vec<&EpisodicEntry> = es.iter().collect();
        let cfg = RetrievalConfig {
            weights: WeightVector::bm25_only(),
            ..RetrievalConfig::default()
        };
        let out = stage2_retrieve(&tokenize("same"), &refs, &HashSet::new(), now(), &cfg).unwrap();
        let ids: Vec<&str> = out.iter().map(|(i, _)| es[*i].id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    fn retriever() -> Retriever {
        let mut entries = vec![
            entry("e1", "s1", "my dog is named Rex", 3),
            entry("e2", "s1", "walked the dog in the park", 2),
            entry("e3", "s2", "booked flights to Lisbon", 10),
            entry("e4", "s3", "dentist appointment on friday", 1),
        ];
        let mut sys = entry("sys", "s1", "[system] dog dog dog", 0);
        sys.system = true;
        entries.push(sys);
        let facts = vec![
            fact("f1", &["s1"], "dog name rex"),
            fact("f2", &["s2"], "trip lisbon flights"),
        ];
        Retriever::new(entries, facts, now()).unwrap()
    }

    #[test]
    fn scoping_and_system_exclusion() {
        let r = retriever();
        let res = r.retrieve("what is my dog named", &RetrievalConfig::default()).unwrap();
        assert!(res.scoping_enabled);
        assert_eq!(res.scoped_session_ids, ["s1"]);
        assert!(res.ranked.iter().all(|x| x.entry.session_id == "s1"));
        assert!(res.ranked.iter().all(|x| !x.entry.system));
        assert!(!res.packed_context.contains("[system]"));
        assert_eq!(res.ranked[0].entry.id, "e1");
        assert!((res.sessions_ratio - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_k1_disables_scoping() {
        let r = retriever();
        let cfg = RetrievalConfig {
            stage1_k1: Stage1K::Unbounded,
            ..RetrievalConfig::default()
        };
        let res = r.retrieve("dog", &cfg).unwrap();
        assert!(!res.scoping_enabled);
        assert_eq!(res.sessions_ratio, 1.0);
        assert_eq!(res.full_order.len(), 4);
    }

    #[test]
    fn empty_semantic_tier_falls_back() {
        let r = Retriever::new(vec![entry("e", "s", "hello", 0)], vec![], now()).unwrap();
        let res = r.retrieve("hello", &RetrievalConfig::default()).unwrap();
        assert!(res.stage1_fallback);
        assert_eq!(res.ranked.len(), 1);
    }

    #[test]
    fn stage2_k_caps_results() {
        let r = retriever();
        let cfg = RetrievalConfig {
            stage2_k: 1,
            stage1_k1: Stage1K::Unbounded,
            ..RetrievalConfig::default()
        };
        assert_eq!(r.retrieve("dog", &cfg).unwrap().ranked.len(), 1);
    }

    #[test]
    fn dense_and_hybrid_need_embedder_and_record_latency() {
        let r = retriever();
        let mut cfg = RetrievalConfig {
            mode: RetrievalMode::HybridRrf,
            ..RetrievalConfig::default()
        };
        assert!(r.retrieve("dog", &cfg).is_err());
        let r = retriever().with_embedder(Arc::new(HashEmbedder::default()));
        let res = r.retrieve("dog", &cfg).unwrap();
        assert_eq!(res.mode, RetrievalMode::HybridRrf);
        assert!(res.ranked.iter().all(|x| x.fused_score.is_some()));
        cfg.mode = RetrievalMode::Dense;
        let res = r.retrieve("dog", &cfg).unwrap();
        assert!(res.ranked.iter().all(|x| x.dense_similarity.is_some()));
    }

    #[test]
    fn packed_tokens_within_budget() {
        let r = retriever();
        let cfg = RetrievalConfig {
            token_budget: 6,
            stage1_k1: Stage1K::Unbounded,
            ..RetrievalConfig::default()
        };
        let res = r.retrieve("dog park", &cfg).unwrap();
        assert!(res.packed_token_count <= 6);
    }
}
