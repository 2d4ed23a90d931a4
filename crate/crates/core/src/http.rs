//! Minimal blocking JSON-over-HTTP client shared by the pluggable backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    30.0
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub(crate) fn client(&self) -> JsonClient {
        JsonClient::new(&self.url, Duration::from_secs_f64(self.timeout_secs))
    }
}

pub(crate) struct JsonClient {
    base: String,
    agent: ureq::Agent,
}

impl JsonClient {
    pub(crate) fn new(base: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub(crate) fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base, path);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| Error::External(format!("POST {url}: {e}")))?;
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| Error::External(format!("POST {url}: bad response body: {e}")))
    }
}
