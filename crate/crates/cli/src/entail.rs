//! HTTP client for an external entailment service.
//!
//! `POST {base}/v1/equivalence` with `{"question", "answer_a", "answer_b"}`;
//! the reply `{"a_entails_b": bool, "b_entails_a": bool}` counts as
//! equivalence only when both directions hold. Non-200 or malformed replies
//! are retried with exponential backoff before the question is reported as
//! [`uqkit_core::Error::BackendUnavailable`]. Decisions are cached per
//! question and unordered answer pair for the life of the client.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use uqkit_core::EquivalenceBackend;

pub const ENDPOINT: &str = "/v1/equivalence";

#[derive(Debug, Clone)]
pub struct EntailmentConfig {
    /// Service base URL; [`ENDPOINT`] is appended unless already present.
    pub url: String,
    pub timeout: Duration,
    pub attempts: u32,
    /// Delay before the second attempt; doubled for each further attempt.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl EntailmentConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(10),
            attempts: 3,
            backoff: Duration::from_millis(100),
            max_in_flight: 8,
        }
    }

    pub fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with(ENDPOINT) {
            base.to_string()
        } else {
            format!("{base}{ENDPOINT}")
        }
    }
}

#[derive(Serialize)]
struct EquivalenceRequest<'a> {
    question: &'a str,
    answer_a: &'a str,
    answer_b: &'a str,
}

#[derive(Debug, Deserialize)]
struct EquivalenceResponse {
    a_entails_b: bool,
    b_entails_a: bool,
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

type PairKey = (String, String, String);

pub struct EntailmentClient {
    config: EntailmentConfig,
    endpoint: String,
    agent: ureq::Agent,
    gate: Gate,
    cache: Mutex<HashMap<PairKey, bool>>,
}

impl EntailmentClient {
    pub fn new(config: EntailmentConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: config.endpoint(),
            gate: Gate::new(config.max_in_flight),
            config,
            agent,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Number of cached pair decisions.
    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    fn key(question: &str, a: &str, b: &str) -> PairKey {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        (question.to_string(), lo.to_string(), hi.to_string())
    }

    fn request_once(&self, body: &str) -> Result<bool, String> {
        let _slot = self.gate.enter();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        if status != 200 {
            return Err(format!("status {status}"));
        }
        let parsed: EquivalenceResponse =
            serde_json::from_str(&text).map_err(|e| format!("malformed response: {e}"))?;
        Ok(parsed.a_entails_b && parsed.b_entails_a)
    }

    fn query(&self, a: &str, b: &str, question: &str) -> uqkit_core::Result<bool> {
        let body = serde_json::to_string(&EquivalenceRequest {
            question,
            answer_a: a,
            answer_b: b,
        })
        .expect("request serializes");
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * (1 << (attempt - 1)));
            }
            match self.request_once(&body) {
                Ok(decision) => return Ok(decision),
                Err(e) => last = e,
            }
        }
        Err(uqkit_core::Error::BackendUnavailable(format!(
            "{} failed after {attempts} attempts: {last}",
            self.endpoint
        )))
    }
}

impl EquivalenceBackend for EntailmentClient {
    fn name(&self) -> &str {
        "external"
    }

    fn equivalent(&self, a: &str, b: &str, question: &str) -> uqkit_core::Result<bool> {
        let key = Self::key(question, a, b);
        if let Some(&hit) = self
            .cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&key)
        {
            return Ok(hit);
        }
        let decision = self.query(a, b, question)?;
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, decision);
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_joining() {
        assert_eq!(
            EntailmentConfig::new("http://h:1").endpoint(),
            "http://h:1/v1/equivalence"
        );
        assert_eq!(
            EntailmentConfig::new("http://h:1/").endpoint(),
            "http://h:1/v1/equivalence"
        );
        assert_eq!(
            EntailmentConfig::new("http://h:1/v1/equivalence").endpoint(),
            "http://h:1/v1/equivalence"
        );
    }

    #[test]
    fn cache_key_is_unordered() {
        assert_eq!(
            EntailmentClient::key("q", "b", "a"),
            EntailmentClient::key("q", "a", "b")
        );
        assert_ne!(
            EntailmentClient::key("q", "a", "b"),
            EntailmentClient::key("r", "a", "b")
        );
    }

    #[test]
    fn defaults() {
        let c = EntailmentConfig::new("x");
        assert_eq!(c.timeout, Duration::from_secs(10));
        assert_eq!(c.attempts, 3);
    }
}
