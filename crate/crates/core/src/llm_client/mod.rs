//! Chat-completion access: a live OpenAI-compatible HTTP backend, record
//! and replay by content hash, and a canned sequence for tests.

mod extract;

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use extract::{extract_code, NoCode};

use crate::patcher::sha256_hex;

/// System message sent with every request. It is part of the prompt hash.
pub const PREAMBLE: &str = "You are an expert SAT solver engineer. Reply with the complete \
replacement code only, inside a single fenced code block, with no explanation.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Live,
    Replay { dir: PathBuf },
    Record { dir: PathBuf },
    Canned { responses: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env_var: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubled after each failed attempt.
    pub retry_base_delay_s: f64,
    pub backend: Backend,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.deepseek.com/v1/chat/completions".into(),
            model_name: "deepseek-coder".into(),
            api_key_env_var: "DEEPSEEK_API_KEY".into(),
            temperature: 0.7,
            max_tokens: 2048,
            request_timeout_s: 120.0,
            max_retries: 3,
            retry_base_delay_s: 1.0,
            backend: Backend::Live,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub model_name: String,
    pub finish_reason: FinishReason,
    pub prompt_hash: String,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("environment variable {0} with the API key is not set")]
    MissingApiKey(String),
    #[error("recording directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("no recording for request hash {0}")]
    ReplayMiss(String),
    #[error("canned responses exhausted after {0} calls")]
    CannedExhausted(usize),
    #[error("request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Hash identifying a request: preamble, prompt, temperature and model.
pub fn request_hash(prompt: &str, temperature: f64, model_name: &str) -> String {
    sha256_hex(&[
        PREAMBLE.as_bytes(),
        prompt.as_bytes(),
        format!("{temperature:?}").as_bytes(),
        model_name.as_bytes(),
    ])
}

/// One file per request hash in record/replay directories. Repeated
/// requests with the same hash are kept in call order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub prompt_hash: String,
    pub model_name: String,
    pub temperature: f64,
    pub responses: Vec<RecordedText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedText {
    pub text: String,
    pub finish_reason: FinishReason,
}

fn recording_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.json"))
}

pub fn read_recording(dir: &Path, hash: &str) -> Result<Option<Recording>, LlmError> {
    let path = recording_path(dir, hash);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| LlmError::BadResponse(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(LlmError::Io { path, source }),
    }
}

/// Writes a recording via temp file and rename.
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<(), LlmError> {
    use std::io::Write;
    let path = recording_path(dir, &rec.prompt_hash);
    let io = |source| LlmError::Io {
        path: path.clone(),
        source,
    };
    let json = serde_json::to_vec_pretty(rec).expect("recording serializes");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&json).map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Serializes read-modify-write of recording files within the process.
static RECORD_LOCK: Mutex<()> = Mutex::new(());

/// Appends `resp` to the recording for its hash.
pub fn append_recording(dir: &Path, resp: &LlmResponse, temperature: f64) -> Result<(), LlmError> {
    let _guard = RECORD_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut rec = read_recording(dir, &resp.prompt_hash)?.unwrap_or_else(|| Recording {
        prompt_hash: resp.prompt_hash.clone(),
        model_name: resp.model_name.clone(),
        temperature,
        responses: Vec::new(),
    });
    rec.responses.push(RecordedText {
        text: resp.text.clone(),
        finish_reason: resp.finish_reason,
    });
    write_recording(dir, &rec)
}

pub struct LlmClient {
    config: LlmConfig,
    api_key: Option<String>,
    canned_cursor: Mutex<usize>,
    /// Per-hash position in replayed recordings.
    replay_cursors: Mutex<HashMap<String, usize>>,
    calls: AtomicU64,
    /// Responses served before the backend, keyed by request hash.
    preloaded: Mutex<HashMap<String, VecDeque<LlmResponse>>>,
    /// Every successful response is also recorded here when set.
    mirror_dir: Option<PathBuf>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("model", &self.config.model_name)
            .field("backend", &self.config.backend)
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    /// Checks the configuration up front: live and record backends need the
    /// API key variable, record and replay need their directory.
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let api_key = match &config.backend {
            Backend::Live | Backend::Record { .. } => Some(
                std::env::var(&config.api_key_env_var)
                    .ok()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| LlmError::MissingApiKey(config.api_key_env_var.clone()))?,
            ),
            _ => None,
        };
        if let Backend::Replay { dir } | Backend::Record { dir } = &config.backend {
            if !dir.is_dir() {
                return Err(LlmError::MissingDir(dir.clone()));
            }
        }
        Ok(Self {
            config,
            api_key,
            canned_cursor: Mutex::new(0),
            replay_cursors: Mutex::new(HashMap::new()),
            calls: AtomicU64::new(0),
            preloaded: Mutex::new(HashMap::new()),
            mirror_dir: None,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn with_mirror(mut self, dir: &Path) -> Result<Self, LlmError> {
        std::fs::create_dir_all(dir).map_err(|source| LlmError::Io {
            path: dir.to_owned(),
            source,
        })?;
        self.mirror_dir = Some(dir.to_owned());
        Ok(self)
    }

    /// Backend calls made so far, failed ones included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Positions the canned sequence, e.g. after resuming.
    pub fn set_canned_cursor(&self, position: usize) {
        *self.canned_cursor.lock().unwrap_or_else(|e| e.into_inner()) = position;
    }

    pub fn preload(&self, response: LlmResponse) {
        let mut map = self.preloaded.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(response.prompt_hash.clone()).or_default().push_back(response);
    }

    pub fn complete(&self, prompt: &str, temperature: f64) -> Result<LlmResponse, LlmError> {
        self.complete_traced(prompt, temperature).map(|(r, _)| r)
    }

    /// Like `complete`, also telling whether the response came from the
    /// backend (true) or from a preloaded entry (false).
    pub fn complete_traced(&self, prompt: &str, temperature: f64) -> Result<(LlmResponse, bool), LlmError> {
        let hash = request_hash(prompt, temperature, &self.config.model_name);
        let served = self
            .preloaded
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get_mut(&hash)
            .and_then(VecDeque::pop_front);
        if let Some(resp) = served {
            return Ok((resp, false));
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let resp = match self.backend_call(prompt, temperature, &hash) {
            Ok(resp) => resp,
            Err(
                e @ (LlmError::CannedExhausted(_)
                | LlmError::RetriesExhausted { .. }
                | LlmError::Rejected { .. }
                | LlmError::BadResponse(_)),
            ) => {
                // Failed calls are recorded too, so a replay fails the same way.
                let failed = LlmResponse {
                    text: e.to_string(),
                    model_name: self.config.model_name.clone(),
                    finish_reason: FinishReason::Error,
                    prompt_hash: hash,
                };
                self.record(&failed, temperature)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        self.record(&resp, temperature)?;
        Ok((resp, true))
    }

    fn record(&self, resp: &LlmResponse, temperature: f64) -> Result<(), LlmError> {
        if let Backend::Record { dir } = &self.config.backend {
            append_recording(dir, resp, temperature)?;
        }
        match &self.mirror_dir {
            Some(dir) if !matches!(&self.config.backend, Backend::Record { dir: d } if d == dir) => {
                append_recording(dir, resp, temperature)
            }
            _ => Ok(()),
        }
    }

    /// Replayed failures come back as responses with `FinishReason::Error`.
    fn backend_call(&self, prompt: &str, temperature: f64, hash: &str) -> Result<LlmResponse, LlmError> {
        let hash = hash.to_string();
        Ok(match &self.config.backend {
            Backend::Live | Backend::Record { .. } => self.live(prompt, temperature, &hash)?,
            Backend::Replay { dir } => {
                let rec = read_recording(dir, &hash)?
                    .filter(|r| !r.responses.is_empty())
                    .ok_or_else(|| LlmError::ReplayMiss(hash.clone()))?;
                let mut cursors = self.replay_cursors.lock().unwrap_or_else(|e| e.into_inner());
                let cursor = cursors.entry(hash.clone()).or_insert(0);
                // Past the end, the last response repeats.
                let entry = &rec.responses[(*cursor).min(rec.responses.len() - 1)];
                *cursor += 1;
                LlmResponse {
                    text: entry.text.clone(),
                    model_name: rec.model_name.clone(),
                    finish_reason: entry.finish_reason,
                    prompt_hash: hash,
                }
            }
            Backend::Canned { responses } => {
                let mut cursor = self.canned_cursor.lock().unwrap_or_else(|e| e.into_inner());
                let text = responses
                    .get(*cursor)
                    .cloned()
                    .ok_or(LlmError::CannedExhausted(*cursor))?;
                *cursor += 1;
                LlmResponse {
                    text,
                    model_name: self.config.model_name.clone(),
                    finish_reason: FinishReason::Stop,
                    prompt_hash: hash,
                }
            }
        })
    }

    fn live(&self, prompt: &str, temperature: f64, hash: &str) -> Result<LlmResponse, LlmError> {
        let key = self.api_key.as_deref().unwrap_or_default();
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": PREAMBLE},
                {"role": "user", "content": prompt},
            ],
            "temperature": temperature,
            "max_tokens": self.config.max_tokens,
        });
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(self.config.request_timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut last = String::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.retry_base_delay_s * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(delay));
            }
            let sent = agent
                .post(&self.config.endpoint_url)
                .header("Authorization", &format!("Bearer {key}"))
                .send_json(&body);
            let mut resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            if status == 429 || status >= 500 {
                last = format!("HTTP {status}");
                continue;
            }
            if status >= 400 {
                return Err(LlmError::Rejected {
                    status,
                    body: text.chars().take(500).collect(),
                });
            }
            return parse_chat_response(&text, &self.config.model_name, hash);
        }
        Err(LlmError::RetriesExhausted { attempts, last })
    }
}

/// Reads `choices[0].message.content` and `finish_reason` from an
/// OpenAI-style chat-completions body.
pub fn parse_chat_response(body: &str, model_name: &str, hash: &str) -> Result<LlmResponse, LlmError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    let choice = &v["choices"][0];
    let text = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))?;
    let finish_reason = match choice["finish_reason"].as_str() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    Ok(LlmResponse {
        text: text.to_string(),
        model_name: v["model"].as_str().unwrap_or(model_name).to_string(),
        finish_reason,
        prompt_hash: hash.to_string(),
    })
}

#[cfg(test)]
mod tests;
