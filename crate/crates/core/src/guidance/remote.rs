use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::wire::{WireRequest, WireResponse, PROTOCOL};
use super::{ScoreProvider, ScoreRequest};
use crate::distill::ScoreBatch;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            max_attempts: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
        }
    }
}

/// HTTP client for a score service speaking the wire protocol.
pub struct RemoteProvider {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Mutex<usize>,
    freed: Condvar,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider").field("config", &self.config).finish()
    }
}

enum Attempt {
    Retry(String),
    Fail(Error),
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.max_attempts == 0 || config.max_in_flight == 0 {
            return Err(invalid("remote provider needs at least one attempt and one in-flight slot"));
        }
        if !config.endpoint.starts_with("http://") && !config.endpoint.starts_with("https://") {
            return Err(invalid(format!("endpoint {:?} is not an http(s) URL", config.endpoint)));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(Self {
            slots: Mutex::new(config.max_in_flight),
            freed: Condvar::new(),
            config,
            agent,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    /// `GET /healthz`; succeeds when the service reports this protocol.
    pub fn health(&self) -> Result<()> {
        let mut resp = self
            .agent
            .get(self.url("/healthz"))
            .call()
            .map_err(|e| Error::Transport {
                attempts: 1,
                message: e.to_string(),
            })?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Protocol(e.to_string()))?;
        let v: serde_json::Value = serde_json::from_str(&body).map_err(|e| Error::Protocol(e.to_string()))?;
        if v["status"] == "ok" && v["protocol"] == PROTOCOL {
            Ok(())
        } else {
            Err(Error::Protocol(format!("unexpected health response {body}")))
        }
    }

    fn acquire(&self) {
        let mut free = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.slots.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.freed.notify_one();
    }

    fn attempt(&self, body: &str, shape: [usize; 4]) -> std::result::Result<ScoreBatch, Attempt> {
        let mut resp = self
            .agent
            .post(self.url("/v1/score"))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200 => {
                let wire: WireResponse = serde_json::from_str(&text)
                    .map_err(|e| Attempt::Fail(Error::Protocol(format!("malformed response: {e}"))))?;
                wire.into_batch(shape).map_err(Attempt::Fail)
            }
            429 | 500..=599 => Err(Attempt::Retry(format!("status {status}: {text}"))),
            _ => Err(Attempt::Fail(Error::Protocol(format!("status {status}: {text}")))),
        }
    }
}

impl ScoreProvider for RemoteProvider {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreBatch> {
        request.validate()?;
        let body = serde_json::to_string(&WireRequest::from_request(request))
            .map_err(|e| Error::Protocol(e.to_string()))?;
        self.acquire();
        let mut last = String::new();
        let mut result = None;
        for k in 0..self.config.max_attempts {
            if k > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(k - 1));
            }
            match self.attempt(&body, request.frames.shape) {
                Ok(b) => {
                    result = Some(Ok(b));
                    break;
                }
                Err(Attempt::Fail(e)) => {
                    result = Some(Err(e));
                    break;
                }
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        self.release();
        result.unwrap_or(Err(Error::Transport {
            attempts: self.config.max_attempts,
            message: last,
        }))
    }
}
