//! Advisor backed by a chat-completions style HTTP endpoint.

use std::sync::OnceLock;
use std::time::Duration;

use serde_json::{json, Value};

use cmdr_core::advisor::{parse_llm_reply, Advisor, AdvisorConfig, AdvisorError, AdvisorReply, Backend, Stage};
use cmdr_core::bt::PolicyLibrary;
use cmdr_core::summarizer::AdvisorRequest;

const INITIAL_NOTE: &str = "This is the player's opening instruction. Pick the preset that fits it best as `basis` and leave `deltas` empty unless the instruction asks for more.";
const ADJUST_NOTE: &str =
    "The game is running. Keep the current preset as `basis` unless the player asks for a different style.";

/// Blocking client; call it from a worker thread, never from async code.
pub struct HttpAdvisor {
    endpoint: String,
    model: String,
    temperature: f64,
    timeout_ms: u64,
    api_key: Option<String>,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl HttpAdvisor {
    /// Reads the API key from the environment variable named in `config`;
    /// a missing key is allowed for local endpoints.
    pub fn new(config: &AdvisorConfig) -> Result<Self, AdvisorError> {
        if config.backend != Backend::Http {
            return Err(AdvisorError::Config("HttpAdvisor needs backend = http".into()));
        }
        config.validate()?;
        Ok(HttpAdvisor {
            endpoint: config.endpoint.clone().unwrap_or_default(),
            model: config.model.clone().unwrap_or_default(),
            temperature: config.temperature,
            timeout_ms: config.timeout_ms,
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            client: OnceLock::new(),
        })
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, AdvisorError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(self.timeout_ms))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| AdvisorError::Unavailable(e.clone()))
    }

    /// The request body sent for `prompt`.
    pub fn body(&self, stage: Stage, prompt: &str) -> Value {
        let note = match stage {
            Stage::Initial => INITIAL_NOTE,
            Stage::Adjust => ADJUST_NOTE,
        };
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                { "role": "system", "content": note },
                { "role": "user", "content": prompt },
            ],
        })
    }
}

impl Advisor for HttpAdvisor {
    fn backend(&self) -> Backend {
        Backend::Http
    }

    fn propose(
        &self,
        stage: Stage,
        request: &AdvisorRequest,
        library: &PolicyLibrary,
    ) -> Result<AdvisorReply, AdvisorError> {
        let prompt = request.render().map_err(|e| AdvisorError::Malformed(e.to_string()))?;
        let mut req = self.client()?.post(&self.endpoint).json(&self.body(stage, &prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                AdvisorError::Timeout(self.timeout_ms)
            } else {
                AdvisorError::Unavailable(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AdvisorError::Unavailable(format!("endpoint returned {status}")));
        }
        let body: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                AdvisorError::Timeout(self.timeout_ms)
            } else {
                AdvisorError::Malformed(format!("response body is not JSON: {e}"))
            }
        })?;
        let content = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| AdvisorError::Malformed("response has no choices[0].message.content".into()))?;
        parse_llm_reply(content, &request.current_policy, library)
    }
}
