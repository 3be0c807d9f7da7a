//! Blocking HTTP JSON transport shared by the explorer, generator and remote
//! scoring clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the environment variable holding an optional bearer token.
pub const CREDENTIAL_ENV: &str = "ASPECTRAG_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first failed one.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpJsonClient {
    agent: ureq::Agent,
    config: EndpointConfig,
    credential: Option<String>,
}

impl HttpJsonClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        HttpJsonClient {
            agent,
            config,
            credential: std::env::var(CREDENTIAL_ENV).ok().filter(|s| !s.is_empty()),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.config.url
    }

    /// POSTs `body` and decodes the JSON reply, retrying transport and decode failures.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            match self.post_once(body) {
                Ok(resp) => return Ok(resp),
                Err(e) => {
                    log::warn!(
                        "request to {} failed (attempt {}): {e}",
                        self.config.url,
                        attempt + 1
                    );
                    last = e;
                }
            }
        }
        Err(Error::Transport(format!("{}: {last}", self.config.url)))
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> std::result::Result<Resp, String> {
        let mut request = self.agent.post(&self.config.url);
        if let Some(token) = &self.credential {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_json::<Resp>()
            .map_err(|e| e.to_string())
    }
}
