//! Tiered agent memory.
//!
//! An append-only episodic tier and a distilled semantic tier, searched by a
//! two-stage pipeline that scores candidates with a weighted mix of lexical
//! relevance, recency, learned usefulness and tier. Around that core sit the
//! cognitive-weight attribution loop, the consolidation pass that promotes
//! episodes into facts, a policy-gradient trainer for the retrieval weights
//! and a deterministic QA evaluation harness.
//!
//! Every model dependency (reader, embedder, fact extractor) is a trait with
//! an HTTP client implementation and an offline test double.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod config;
pub mod consolidation;
pub mod error;
pub mod eval;
pub mod exec;
pub mod http;
pub mod learning;
pub mod lexical;
pub mod retrieval;
pub mod scoring;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
