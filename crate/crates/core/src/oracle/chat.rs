//! Client for chat-completion HTTP endpoints.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::replay::{request_hash, FixtureRecord};
use super::{
    interpret_answer, parse_judgment, Judgment, KnowledgeOracle, KnowledgeQuery, OracleAnswer, OracleError,
    DEFAULT_REFUSAL_PHRASES,
};
use crate::store::{RelationId, RelationMeta};

pub const TOKEN_ENV: &str = "CHAINEDIT_ORACLE_TOKEN";

const ANSWER_SYSTEM: &str =
    "Complete the sentence with the name of a single entity. Reply with the entity name only.";

const JUDGE_SYSTEM: &str = "You are given a logical rule. State the rule you rely on to support or \
oppose it, then finish with `Answer:` followed by exactly one of: True, Usually True, Sometimes True, \
False, Uncertain.";

const JUDGE_EXAMPLES: [(&str, &str); 2] = [
    (
        "When the father of X is Y, then the sibling of X is the child of Y.",
        "A person's siblings are the other children of that person's father. Answer: True",
    ),
    (
        "When the country of X is Y, then the continent of X is the continent of Y.",
        "A place nearly always lies on the continent of the country that contains it. Answer: Usually True",
    ),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: &str) -> Self {
        Self {
            role: role.to_string(),
            content: content.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Full URL the chat request is POSTed to.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// Global cap across threads; `None` means unlimited.
    pub max_requests_per_second: Option<f64>,
    #[serde(skip_serializing)]
    pub token: Option<String>,
    pub refusal_phrases: Vec<String>,
    /// Append `{request_hash, response_text}` lines here for later replay.
    pub record_to: Option<PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 60.0,
            max_requests_per_second: None,
            token: None,
            refusal_phrases: DEFAULT_REFUSAL_PHRASES.iter().map(|s| s.to_string()).collect(),
            record_to: None,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::Config(m.to_string()));
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return bad("endpoint must be an http(s) URL");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout must be positive");
        }
        if self.max_requests_per_second.is_some_and(|r| !(r > 0.0)) {
            return bad("request-rate cap must be positive");
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

/// Live oracle speaking the chat-completion wire protocol.
pub struct ChatOracle {
    cfg: OracleConfig,
    client: reqwest::blocking::Client,
    next_slot: Mutex<Instant>,
    recorder: Option<Mutex<File>>,
}

impl std::fmt::Debug for ChatOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatOracle")
            .field("endpoint", &self.cfg.endpoint)
            .field("model", &self.cfg.model)
            .finish()
    }
}

impl ChatOracle {
    pub fn new(mut cfg: OracleConfig) -> Result<Self, OracleError> {
        cfg.validate()?;
        if cfg.token.is_none() {
            cfg.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| OracleError::Config(e.to_string()))?;
        let recorder = match &cfg.record_to {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| OracleError::File {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?,
            )),
            None => None,
        };
        Ok(Self {
            cfg,
            client,
            next_slot: Mutex::new(Instant::now()),
            recorder,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    fn wait_for_slot(&self) {
        let Some(rate) = self.cfg.max_requests_per_second else {
            return;
        };
        let interval = Duration::from_secs_f64(1.0 / rate);
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    /// Sends one conversation and returns the assistant's reply text.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String, OracleError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &self.cfg.model,
            messages,
            temperature: self.cfg.temperature,
        })
        .expect("chat request serializes");

        let mut last_error = String::new();
        let attempts = self.cfg.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = 200u64.saturating_mul(1 << (attempt - 1).min(5));
                thread::sleep(Duration::from_millis(backoff));
            }
            self.wait_for_slot();
            let mut req = self
                .client
                .post(&self.cfg.endpoint)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone());
            if let Some(token) = &self.cfg.token {
                req = req.bearer_auth(token);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let text = resp.text().unwrap_or_default();
            if status.as_u16() == 429 || status.is_server_error() {
                last_error = format!("HTTP {status}: {text}");
                continue;
            }
            if !status.is_success() {
                return Err(OracleError::Protocol(format!("HTTP {status}: {text}")));
            }
            let content = extract_content(&text)?;
            self.record(&body, &content)?;
            return Ok(content);
        }
        Err(OracleError::Transport {
            attempts,
            message: last_error,
        })
    }

    fn record(&self, body: &str, response: &str) -> Result<(), OracleError> {
        let Some(rec) = &self.recorder else {
            return Ok(());
        };
        let line = serde_json::to_string(&FixtureRecord {
            request_hash: request_hash(body),
            response_text: response.to_string(),
        })
        .expect("fixture serializes");
        let mut f = rec.lock().expect("recorder poisoned");
        writeln!(f, "{line}").map_err(|e| OracleError::File {
            path: self.cfg.record_to.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            message: e.to_string(),
        })
    }

    fn answer_prompt(&self, prompt: &str) -> Result<OracleAnswer, OracleError> {
        let messages = [ChatMessage::new("system", ANSWER_SYSTEM), ChatMessage::new("user", prompt)];
        let raw = self.chat(&messages)?;
        Ok(interpret_answer(&raw, &self.cfg.refusal_phrases))
    }
}

fn extract_content(text: &str) -> Result<String, OracleError> {
    let v: Value = serde_json::from_str(text).map_err(|e| OracleError::Protocol(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| OracleError::Protocol("response lacks choices[0].message.content".to_string()))
}

/// Conversation used to judge a rule: instructions, the two worked
/// examples, then the rule.
pub fn judge_messages(nl_rule: &str) -> Vec<ChatMessage> {
    let mut m = vec![ChatMessage::new("system", JUDGE_SYSTEM)];
    for (user, assistant) in JUDGE_EXAMPLES {
        m.push(ChatMessage::new("user", user));
        m.push(ChatMessage::new("assistant", assistant));
    }
    m.push(ChatMessage::new("user", nl_rule));
    m
}

impl KnowledgeOracle for ChatOracle {
    fn answer_query(&self, q: &KnowledgeQuery, meta: &RelationMeta) -> Result<OracleAnswer, OracleError> {
        if q.subject.trim().is_empty() {
            return Err(OracleError::InvalidQuery("empty subject".to_string()));
        }
        self.answer_prompt(&meta.prompt(&q.subject))
    }

    fn answer_inverse_query(
        &self,
        _relation: &RelationId,
        object: &str,
        meta: &RelationMeta,
    ) -> Result<OracleAnswer, OracleError> {
        if object.trim().is_empty() {
            return Err(OracleError::InvalidQuery("empty object".to_string()));
        }
        self.answer_prompt(&meta.inverse_prompt(object))
    }

    fn judge_rule(&self, nl_rule: &str) -> Result<Judgment, OracleError> {
        if nl_rule.trim().is_empty() {
            return Err(OracleError::InvalidQuery("empty rule text".to_string()));
        }
        let raw = self.chat(&judge_messages(nl_rule))?;
        Ok(parse_judgment(&raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(OracleConfig::default().validate().is_err());
        let ok = OracleConfig {
            endpoint: "http://localhost:1/v1/chat/completions".into(),
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
        let neg = OracleConfig {
            temperature: -1.0,
            ..ok.clone()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn judge_conversation_shape() {
        let m = judge_messages("If the father of A is B, then the mother of A is the spouse of B");
        assert_eq!(m.len(), 6);
        assert_eq!(m[2].content, "A person's siblings are the other children of that person's father. Answer: True");
        assert!(m[4].content.ends_with("Answer: Usually True"));
        assert_eq!(m[5].role, "user");
    }

    #[test]
    fn content_extraction() {
        assert_eq!(
            extract_content(r#"{"choices":[{"message":{"role":"assistant","content":"Mary"}}]}"#).unwrap(),
            "Mary"
        );
        assert!(extract_content("{}").is_err());
        assert!(extract_content("nope").is_err());
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let o = ChatOracle::new(OracleConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            max_retries: 1,
            timeout_secs: 2.0,
            ..Default::default()
        })
        .unwrap();
        let err = o
            .answer_query(&KnowledgeQuery::new("Carol", "spouse"), &RelationMeta::nominal("spouse", "spouse"))
            .unwrap_err();
        assert!(matches!(err, OracleError::Transport { attempts: 2, .. }));
    }
}
