//! The reading model that turns (question, context) into an answer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{Endpoint, JsonClient};

use super::dataset::Dataset;

/// Prompt layout used by the external reader service.
pub const PROMPT_TEMPLATE: &str = "Context:\n{context}\n\nQuestion: {question}\nAnswer:";

/// Longest answer kept from an external reader, in whitespace tokens.
pub const MAX_ANSWER_TOKENS: usize = 30;

#[derive(Debug, Clone, Copy)]
pub struct ReaderQuery<'a> {
    pub question_id: &'a str,
    pub question: &'a str,
}

pub trait Reader: Send + Sync {
    fn name(&self) -> &str;

    fn answer(&self, query: &ReaderQuery<'_>, context: &str) -> Result<String>;
}

pub fn render_prompt(question: &str, context: &str) -> String {
    PROMPT_TEMPLATE
        .replace("{context}", context)
        .replace("{question}", question)
}

pub fn truncate_answer(answer: &str) -> String {
    answer
        .split_whitespace()
        .take(MAX_ANSWER_TOKENS)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Answers with the gold answer iff it appears (case-insensitively) in the
/// context, otherwise with the empty string.
#[derive(Debug, Clone, Default)]
pub struct OracleReader {
    gold: HashMap<String, String>,
}

impl OracleReader {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self {
            gold: dataset
                .questions
                .iter()
                .map(|q| (q.question_id.clone(), q.answer.clone()))
                .collect(),
        }
    }
}

impl Reader for OracleReader {
    fn name(&self) -> &str {
        "oracle"
    }

    fn answer(&self, query: &ReaderQuery<'_>, context: &str) -> Result<String> {
        let gold = self
            .gold
            .get(query.question_id)
            .ok_or_else(|| Error::NotFound(format!("no gold for question {}", query.question_id)))?;
        if !gold.is_empty() && context.to_lowercase().contains(&gold.to_lowercase()) {
            Ok(gold.clone())
        } else {
            Ok(String::new())
        }
    }
}

/// Answers with the first packed entry (the first context line).
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoReader;

impl Reader for EchoReader {
    fn name(&self) -> &str {
        "echo"
    }

    fn answer(&self, _query: &ReaderQuery<'_>, context: &str) -> Result<String> {
        Ok(context.lines().next().unwrap_or_default().to_string())
    }
}

#[derive(Serialize)]
struct AnswerRequest<'a> {
    question: &'a str,
    context: &'a str,
}

#[derive(Deserialize)]
struct AnswerResponse {
    answer: String,
}

/// Client for `POST /answer {"question", "context"}` → `{"answer"}`.
pub struct HttpReader {
    client: JsonClient,
}

impl HttpReader {
    pub fn new(endpoint: &Endpoint) -> Self {
        Self {
            client: endpoint.client(),
        }
    }
}

impl Reader for HttpReader {
    fn name(&self) -> &str {
        "http"
    }

    fn answer(&self, query: &ReaderQuery<'_>, context: &str) -> Result<String> {
        let resp: AnswerResponse = self.client.post(
            "/answer",
            &AnswerRequest {
                question: query.question,
                context,
            },
        )?;
        Ok(truncate_answer(&resp.answer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_and_echo() {
        let mut oracle = OracleReader::default();
        oracle.gold.insert("q".into(), "Biscuit".into());
        let q = ReaderQuery {
            question_id: "q",
            question: "cat?",
        };
        assert_eq!(oracle.answer(&q, "my cat biscuit").unwrap(), "Biscuit");
        assert_eq!(oracle.answer(&q, "no cats").unwrap(), "");
        let missing = ReaderQuery {
            question_id: "zz",
            question: "?",
        };
        assert!(oracle.answer(&missing, "").is_err());

        assert_eq!(EchoReader.answer(&q, "first\nsecond").unwrap(), "first");
        assert_eq!(EchoReader.answer(&q, "").unwrap(), "");
    }

    #[test]
    fn truncation_and_prompt() {
        let long = (0..50).map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        assert_eq!(truncate_answer(&long).split_whitespace().count(), 30);
        let p = render_prompt("Q?", "C");
        assert!(p.find("C").unwrap() < p.find("Q?").unwrap());
    }
}
