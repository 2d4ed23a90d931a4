//! Benchmark question files.
//!
//! One JSON object per question (either a JSON array or JSON Lines) with
//! the fields `question_id`, `question_type`, `question`, `answer`,
//! `haystack_sessions`, `haystack_dates`, `answer_session_ids` and
//! optionally `haystack_session_ids` / `question_date`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EpisodicEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionType {
    SingleSessionUser,
    SingleSessionAssistant,
    KnowledgeUpdate,
    TemporalReasoning,
    MultiSession,
    SingleSessionPreference,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::SingleSessionUser,
        QuestionType::SingleSessionAssistant,
        QuestionType::KnowledgeUpdate,
        QuestionType::TemporalReasoning,
        QuestionType::MultiSession,
        QuestionType::SingleSessionPreference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::SingleSessionUser => "single-session-user",
            QuestionType::SingleSessionAssistant => "single-session-assistant",
            QuestionType::KnowledgeUpdate => "knowledge-update",
            QuestionType::TemporalReasoning => "temporal-reasoning",
            QuestionType::MultiSession => "multi-session",
            QuestionType::SingleSessionPreference => "single-session-preference",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub session_id: String,
    pub date: DateTime<Utc>,
    pub turns: Vec<Turn>,
}

impl Session {
    /// Turn contents, one per line.
    pub fn text(&self) -> String {
        self.turns
            .iter()
            .map(|t| t.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// One episodic entry per turn, one second apart from the session date.
    pub fn to_entries(&self, project: &str) -> Vec<EpisodicEntry> {
        self.turns
            .iter()
            .enumerate()
            .map(|(i, t)| {
                EpisodicEntry::new(
                    format!("{}#{i}", self.session_id),
                    self.date + chrono::Duration::seconds(i as i64),
                    &self.session_id,
                    &t.role,
                    project,
                    &t.content,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkQuestion {
    pub question_id: String,
    pub question_type: QuestionType,
    pub question: String,
    pub answer: String,
    pub question_date: Option<DateTime<Utc>>,
    pub sessions: Vec<Session>,
    pub answer_session_ids: Vec<String>,
}

impl BenchmarkQuestion {
    /// Reference time for recency: the question date, else the newest session.
    pub fn reference_time(&self) -> DateTime<Utc> {
        self.question_date
            .or_else(|| self.sessions.iter().map(|s| s.date).max())
            .unwrap_or(DateTime::UNIX_EPOCH)
    }

    pub fn gold_set(&self) -> HashSet<String> {
        self.answer_session_ids.iter().cloned().collect()
    }

    /// Gold sessions in haystack order.
    pub fn gold_sessions(&self) -> Vec<&Session> {
        let gold = self.gold_set();
        self.sessions
            .iter()
            .filter(|s| gold.contains(&s.session_id))
            .collect()
    }
}

#[derive(Deserialize)]
struct RawQuestion {
    question_id: String,
    question_type: QuestionType,
    question: String,
    answer: serde_json::Value,
    #[serde(default)]
    question_date: Option<String>,
    haystack_sessions: Vec<Vec<Turn>>,
    haystack_dates: Vec<String>,
    #[serde(default)]
    haystack_session_ids: Option<Vec<String>>,
    answer_session_ids: Vec<String>,
}

/// Accepts `2023/05/20 (Sat) 02:21`, RFC 3339, `YYYY-MM-DD HH:MM[:SS]`
/// and bare `YYYY-MM-DD`; naive forms are read as UTC.
pub fn parse_dataset_date(raw: &str) -> Result<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    // strip a parenthesised weekday: "2023/05/20 (Sat) 02:21"
    let cleaned: String = match (s.find('('), s.find(')')) {
        (Some(a), Some(b)) if a < b => format!("{}{}", &s[..a], &s[b + 1..]),
        _ => s.to_string(),
    };
    let cleaned = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    for fmt in ["%Y/%m/%d %H:%M", "%Y/%m/%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(&cleaned, fmt) {
            return Ok(t.and_utc());
        }
    }
    for fmt in ["%Y/%m/%d", "%Y-%m-%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(&cleaned, fmt) {
            return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
        }
    }
    Err(Error::Data(format!("unrecognised date {raw:?}")))
}

fn answer_text(v: serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

impl TryFrom<RawQuestion> for BenchmarkQuestion {
    type Error = Error;

    fn try_from(raw: RawQuestion) -> Result<Self> {
        let n = raw.haystack_sessions.len();
        if raw.haystack_dates.len() != n {
            return Err(Error::Data(format!(
                "question {}: {} sessions but {} dates",
                raw.question_id,
                n,
                raw.haystack_dates.len()
            )));
        }
        let ids = match raw.haystack_session_ids {
            Some(ids) if ids.len() == n => ids,
            Some(ids) => {
                return Err(Error::Data(format!(
                    "question {}: {} sessions but {} session ids",
                    raw.question_id,
                    n,
                    ids.len()
                )))
            }
            None => (0..n).map(|i| format!("{}_s{i}", raw.question_id)).collect(),
        };
        let known: HashSet<&str> = ids.iter().map(String::as_str).collect();
        if let Some(missing) = raw.answer_session_ids.iter().find(|g| !known.contains(g.as_str())) {
            return Err(Error::Data(format!(
                "question {}: gold session {missing} not in haystack",
                raw.question_id
            )));
        }
        let sessions = ids
            .into_iter()
            .zip(raw.haystack_dates)
            .zip(raw.haystack_sessions)
            .map(|((session_id, date), turns)| {
                Ok(Session {
                    session_id,
                    date: parse_dataset_date(&date)?,
                    turns,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BenchmarkQuestion {
            question_id: raw.question_id,
            question_type: raw.question_type,
            question: raw.question,
            answer: answer_text(raw.answer),
            question_date: raw.question_date.as_deref().map(parse_dataset_date).transpose()?,
            sessions,
            answer_session_ids: raw.answer_session_ids,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Dataset {
    pub questions: Vec<BenchmarkQuestion>,
}

impl Dataset {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let raws: Vec<RawQuestion> = if trimmed.starts_with('[') {
            serde_json::from_str(trimmed).map_err(|e| Error::Data(format!("dataset: {e}")))?
        } else {
            trimmed
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str(l)
                        .map_err(|e| Error::Data(format!("dataset line {}: {e}", i + 1)))
                })
                .collect::<Result<_>>()?
        };
        let questions = raws
            .into_iter()
            .map(BenchmarkQuestion::try_from)
            .collect::<Result<Vec<_>>>()?;
        let mut seen = HashSet::new();
        if let Some(dup) = questions.iter().find(|q| !seen.insert(q.question_id.as_str())) {
            return Err(Error::Data(format!("duplicate question id {}", dup.question_id)));
        }
        Ok(Dataset { questions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Every distinct session across the dataset, first occurrence wins.
    pub fn unique_sessions(&self) -> Vec<&Session> {
        let mut seen = HashSet::new();
        self.questions
            .iter()
            .flat_map(|q| q.sessions.iter())
            .filter(|s| seen.insert(s.session_id.as_str()))
            .collect()
    }

    pub fn counts_by_type(&self) -> BTreeMap<QuestionType, usize> {
        let mut out = BTreeMap::new();
        for q in &self.questions {
            *out.entry(q.question_type).or_default() += 1;
        }
        out
    }

    /// Serialises back to the JSON Lines file format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.questions {
            let value = serde_json::json!({
                "question_id": q.question_id,
                "question_type": q.question_type,
                "question": q.question,
                "answer": q.answer,
                "question_date": q.question_date.map(|d| d.to_rfc3339()),
                "haystack_session_ids": q.sessions.iter().map(|s| &s.session_id).collect::<Vec<_>>(),
                "haystack_dates": q.sessions.iter().map(|s| s.date.to_rfc3339()).collect::<Vec<_>>(),
                "haystack_sessions": q.sessions.iter().map(|s| &s.turns).collect::<Vec<_>>(),
                "answer_session_ids": q.answer_session_ids,
            });
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }
}
