//! Store, consolidation, retrieval and attribution working together.

use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use tempfile::TempDir;

use strata_core::attribution::{apply_attribution, AttributionConfig, Outcome};
use strata_core::consolidation::{run_consolidation_pass, HeuristicExtractor};
use strata_core::retrieval::{HashEmbedder, RetrievalConfig, RetrievalMode, Retriever, Stage1K};
use strata_core::scoring::BypassReason;
use strata_core::store::{AgentView, EpisodicEntry, Store};

fn seeded_store() -> (TempDir, Store) {
    let dir = TempDir::new().unwrap();
    let store = Store::open(dir.path());
    let t0 = Utc.with_ymd_and_hms(2024, 3, 1, 10, 0, 0).unwrap();
    let rows = [
        ("s1", "alice", "Deploy target: staging cluster in Frankfurt"),
        ("s1", "alice", "The rollout window is Tuesday night"),
        ("s2", "bob", "Bob prefers dark roast coffee"),
        ("s2", "bob", "Lunch order went to the wrong desk"),
        ("s3", "alice", "[system] context window trimmed"),
        ("s3", "alice", "Unrelated chatter about the weather"),
    ];
    for (i, (sid, agent, text)) in rows.iter().enumerate() {
        store
            .append_entry(EpisodicEntry::new(
                format!("e{i}"),
                t0 + Duration::hours(i as i64),
                *sid,
                *agent,
                "ops",
                *text,
            ))
            .unwrap();
    }
    (dir, store)
}

fn retriever(store: &Store, view: &AgentView) -> Retriever {
    let snap = store.snapshot("ops", view).unwrap();
    let now = Utc.with_ymd_and_hms(2024, 3, 20, 0, 0, 0).unwrap();
    Retriever::new(snap.entries, snap.facts, now).unwrap()
}

#[test]
fn consolidate_then_retrieve_through_facts() {
    let (_dir, store) = seeded_store();
    let report = run_consolidation_pass(&store, &HeuristicExtractor, "ops").unwrap();
    assert!(report.facts_emitted > 0);
    assert!(report.failures.is_empty());
    let again = run_consolidation_pass(&store, &HeuristicExtractor, "ops").unwrap();
    assert_eq!(again.facts_emitted, 0);

    let r = retriever(&store, &AgentView::Orchestrator);
    let res = r.retrieve("deploy target location", &RetrievalConfig::default()).unwrap();
    assert_eq!(res.ranked[0].entry.id, "e0");
    assert!(res.scoped_session_ids.contains(&"s1".to_string()));
    assert!(!res.stage1_fallback);
    assert!(res.packed_context.contains("Frankfurt"));
    assert!(res.ranked.iter().all(|x| !x.entry.content.starts_with("[system]")));
    let b = &res.ranked[0].breakdown;
    assert!(b.bypass_applied);
    assert_ne!(b.bypass_reason, BypassReason::None);
}

#[test]
fn strong_lexical_match_bypasses_decay() {
    let (_dir, store) = seeded_store();
    let r = retriever(&store, &AgentView::Orchestrator);
    let cfg = RetrievalConfig {
        stage1_k1: Stage1K::Unbounded,
        ..RetrievalConfig::default()
    };
    let res = r.retrieve("Frankfurt staging cluster deploy target", &cfg).unwrap();
    let top = &res.ranked[0];
    assert!(top.breakdown.phi_bm25_raw > 2.0);
    assert_eq!(top.breakdown.bypass_reason, BypassReason::Bm25Threshold);
    assert_eq!(top.breakdown.phi_decay, 1.0);
    assert_eq!(res.sessions_ratio, 1.0);
}

#[test]
fn agent_view_limits_entries() {
    let (_dir, store) = seeded_store();
    let bob = retriever(&store, &AgentView::Agent("bob".into()));
    assert!(bob.entries().iter().all(|e| e.agent_id == "bob"));
    let all = retriever(&store, &AgentView::Orchestrator);
    assert_eq!(all.entries().len(), 5);
}

#[test]
fn dense_and_hybrid_modes() {
    let (_dir, store) = seeded_store();
    let r = retriever(&store, &AgentView::Orchestrator).with_embedder(Arc::new(HashEmbedder::default()));
    for mode in [RetrievalMode::Dense, RetrievalMode::HybridRrf] {
        let cfg = RetrievalConfig {
            mode,
            stage1_k1: Stage1K::Unbounded,
            ..RetrievalConfig::default()
        };
        let res = r.retrieve("dark roast coffee", &cfg).unwrap();
        assert_eq!(res.ranked[0].entry.id, "e2", "{mode}");
        assert!(res.ranked[0].dense_similarity.is_some());
        if mode == RetrievalMode::HybridRrf {
            assert!(res.ranked[0].fused_score.is_some());
        }
    }
    let plain = retriever(&store, &AgentView::Orchestrator);
    let cfg = RetrievalConfig {
        mode: RetrievalMode::Dense,
        ..RetrievalConfig::default()
    };
    assert!(plain.retrieve("coffee", &cfg).is_err());
}

#[test]
fn attribution_persists_through_reopen() {
    let (dir, store) = seeded_store();
    let r = retriever(&store, &AgentView::Orchestrator);
    let res = r
        .retrieve(
            "deploy target rollout",
            &RetrievalConfig {
                stage1_k1: Stage1K::Unbounded,
                ..RetrievalConfig::default()
            },
        )
        .unwrap();
    let entries: Vec<&EpisodicEntry> = res.ranked.iter().map(|x| &x.entry).collect();
    let cfg = AttributionConfig::default();
    let updated = apply_attribution(&store, &entries, "staging cluster in Frankfurt", Outcome::Failure.reward(), &cfg).unwrap();
    let e0 = updated.iter().find(|(id, _)| id == "e0").unwrap().1;
    assert!(e0 < 0.0);

    let reopened = Store::open(dir.path());
    let snap = reopened.snapshot("ops", &AgentView::Orchestrator).unwrap();
    let cw = snap.entries.iter().find(|e| e.id == "e0").unwrap().cognitive_weight;
    assert_eq!(cw, e0);
    let ledger = std::fs::read_to_string(reopened.cw_ledger_path()).unwrap();
    assert!(ledger.lines().count() >= 1);
}
