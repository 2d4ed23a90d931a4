//! Cognitive-weight credit assignment.
//!
//! After an answer is produced from `k` retrieved entries, each entry gets a
//! raw attribution `a_i` (token-set Jaccard against the answer), normalised
//! to `â_i = a_i / Σ a_j`, and its CW moves by `α · r · â_i`, clipped to
//! `[-1, 1]` by the sink.

use std::collections::{HashMap, HashSet};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::tokenize;
use crate::store::{clip_cw, EpisodicEntry, Store};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub alpha: f64,
    pub reward_values: Vec<f64>,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            reward_values: vec![-0.5, 0.0, 1.0],
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::validation(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Tool-outcome label attached to a session record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Neutral,
    Failure,
}

impl Outcome {
    pub fn reward(self) -> f64 {
        match self {
            Outcome::Success => 1.0,
            Outcome::Neutral => 0.0,
            Outcome::Failure => -0.5,
        }
    }
}

impl std::str::FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(Outcome::Success),
            "neutral" => Ok(Outcome::Neutral),
            "failure" => Ok(Outcome::Failure),
            other => Err(Error::validation(format!("unknown outcome {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryCredit {
    pub entry_id: String,
    pub raw: f64,
    pub normalised: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributionOutcome {
    pub credits: Vec<EntryCredit>,
    /// True when no entry overlapped the answer and credit was split evenly.
    pub uniform_fallback: bool,
}

/// Anything that can absorb a clipped CW update.
pub trait CwSink {
    fn apply_cw_delta(&self, entry_id: &str, delta: f64, reward: f64) -> Result<f64>;
}

impl CwSink for Store {
    fn apply_cw_delta(&self, entry_id: &str, delta: f64, reward: f64) -> Result<f64> {
        Store::apply_cw_delta(self, entry_id, delta, reward)
    }
}

/// In-memory CW table used by evaluation runs; unseen entries start at 0.
#[derive(Debug, Default)]
pub struct CwTable {
    values: Mutex<HashMap<String, f64>>,
}

impl CwTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, entry_id: &str) -> f64 {
        self.values.lock().get(entry_id).copied().unwrap_or(0.0)
    }

    pub fn snapshot(&self) -> HashMap<String, f64> {
        self.values.lock().clone()
    }
}

impl CwSink for CwTable {
    fn apply_cw_delta(&self, entry_id: &str, delta: f64, _reward: f64) -> Result<f64> {
        let mut values = self.values.lock();
        let cw = values.entry(entry_id.to_string()).or_insert(0.0);
        *cw = clip_cw(*cw + delta);
        Ok(*cw)
    }
}

/// `|T(a) ∩ T(b)| / |T(a) ∪ T(b)|` over deduplicated tokens; 0 when both are empty.
pub fn jaccard_attribution(answer: &str, entry: &str) -> f64 {
    let a: HashSet<String> = tokenize(answer).into_iter().collect();
    let b: HashSet<String> = tokenize(entry).into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Computes per-entry credit without touching any store.
///
/// `entries` are `(id, content)` pairs in retrieval order.
pub fn compute_attribution(
    entries: &[(&str, &str)],
    answer: &str,
    reward: f64,
    cfg: &AttributionConfig,
) -> Result<AttributionOutcome> {
    if !cfg.reward_values.contains(&reward) {
        return Err(Error::validation(format!(
            "reward {reward} not in {:?}",
            cfg.reward_values
        )));
    }
    if entries.is_empty() {
        return Ok(AttributionOutcome::default());
    }
    let raw: Vec<f64> = entries
        .iter()
        .map(|(_, content)| jaccard_attribution(answer, content))
        .collect();
    let total: f64 = raw.iter().sum();
    let uniform = total <= 0.0;
    let k = entries.len() as f64;
    let credits = entries
        .iter()
        .zip(&raw)
        .map(|((id, _), &a)| {
            let normalised = if uniform { 1.0 / k } else { a / total };
            EntryCredit {
                entry_id: id.to_string(),
                raw: a,
                normalised,
                delta: cfg.alpha * reward * normalised,
            }
        })
        .collect();
    Ok(AttributionOutcome {
        credits,
        uniform_fallback: uniform,
    })
}

/// Distributes `reward` over the retrieved entries and applies the deltas.
///
/// System entries never receive credit. Returns `(entry id, new CW)` per
/// credited entry; a zero delta leaves the sink untouched.
pub fn apply_attribution(
    sink: &dyn CwSink,
    entries: &[&EpisodicEntry],
    answer: &str,
    reward: f64,
    cfg: &AttributionConfig,
) -> Result<Vec<(String, f64)>> {
    let eligible: Vec<&EpisodicEntry> = entries.iter().copied().filter(|e| !e.system).collect();
    let pairs: Vec<(&str, &str)> = eligible
        .iter()
        .map(|e| (e.id.as_str(), e.content.as_str()))
        .collect();
    let outcome = compute_attribution(&pairs, answer, reward, cfg)?;
    outcome
        .credits
        .iter()
        .zip(&eligible)
        .map(|(c, e)| {
            let cw = if c.delta == 0.0 {
                e.cognitive_weight
            } else {
                sink.apply_cw_delta(&c.entry_id, c.delta, reward)?
            };
            Ok((c.entry_id.clone(), cw))
        })
        .collect()
}
