use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EpisodicEntry;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PackedContext {
    pub text: String,
    /// Indices into the ranked input, in rank order.
    pub used: Vec<usize>,
    pub token_count: u64,
}

/// Greedy in-rank-order packing under a token budget.
///
/// An entry that would overflow the budget is skipped and the next one is
/// tried, so a short entry further down can still fit.
pub fn pack_context(ranked: &[&EpisodicEntry], token_budget: u64, prepend_timestamps: bool) -> PackedContext {
    let mut out = PackedContext::default();
    let mut pieces = Vec::new();
    for (i, entry) in ranked.iter().enumerate() {
        if out.token_count + entry.tokens > token_budget {
            continue;
        }
        out.token_count += entry.tokens;
        out.used.push(i);
        if prepend_timestamps {
            pieces.push(format!(
                "[{}] {}",
                entry.timestamp.format("%Y-%m-%d %H:%M"),
                entry.content
            ));
        } else {
            pieces.push(entry.content.clone());
        }
    }
    out.text = pieces.join("\n");
    out
}

/// A gold-supporting session handed to the oracle context builder.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSession<'a> {
    pub session_id: &'a str,
    pub text: String,
}

/// Builds a context straight from gold evidence: the first `limit` gold
/// sessions (in dataset order) followed by the gold facts.
pub fn oracle_context(gold_sessions: &[GoldSession<'_>], gold_facts: &[String], limit: usize) -> Result<String> {
    if gold_sessions.is_empty() && gold_facts.is_empty() {
        return Err(Error::validation(
            "oracle context needs gold sessions or gold facts",
        ));
    }
    let mut parts: Vec<&str> = gold_sessions
        .iter()
        .take(limit)
        .map(|s| s.text.as_str())
        .collect();
    parts.extend(gold_facts.iter().map(String::as_str));
    Ok(parts.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn sized(id: &str, tokens: usize) -> EpisodicEntry {
        let content = vec!["w"; tokens].join(" ");
        EpisodicEntry::new(id, Utc::now(), "s", "a", "p", content)
    }

    #[test]
    fn packs_until_budget() {
        let es: Vec<_> = (0..5).map(|i| sized(&i.to_string(), 100)).collect();
        let refs: Vec<&EpisodicEntry> = es.iter().collect();
        let p = pack_context(&refs, 300, false);
        assert_eq!(p.used, vec![0, 1, 2]);
        assert_eq!(p.token_count, 300);
    }

    #[test]
    fn oversized_entry_is_skipped() {
        let es = [sized("big", 700), sized("small", 200)];
        let refs: Vec<&EpisodicEntry> = es.iter().collect();
        let p = pack_context(&refs, 300, false);
        assert_eq!(p.used, vec![1]);
    }

    #[test]
    fn smaller_budget_packs_a_subset() {
        let es: Vec<_> = [120, 40, 200, 90, 30, 300]
            .iter()
            .enumerate()
            .map(|(i, &n)| sized(&i.to_string(), n))
            .collect();
        let refs: Vec<&EpisodicEntry> = es.iter().collect();
        let small = pack_context(&refs, 150, false);
        let large = pack_context(&refs, 600, false);
        assert!(small.used.iter().all(|i| large.used.contains(i)));
        assert!(small.token_count <= 150 && large.token_count <= 600);
    }

    #[test]
    fn oracle_context_rules() {
        let sessions: Vec<GoldSession> = (0..5)
            .map(|i| GoldSession {
                session_id: "s",
                text: format!("session {i}"),
            })
            .collect();
        let ctx = oracle_context(&sessions, &[], 3).unwrap();
        assert_eq!(ctx, "session 0\nsession 1\nsession 2");
        let one = oracle_context(&sessions[..1], &[], 3).unwrap();
        assert_eq!(one, "session 0");
        let facts = oracle_context(&[], &["alice is_a engineer".to_string()], 3).unwrap();
        assert_eq!(facts, "alice is_a engineer");
        assert!(oracle_context(&[], &[], 3).is_err());
    }
}
