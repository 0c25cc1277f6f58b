//! Chat-completions backends: live HTTP, scripted mock, and a
//! content-addressed response cache that wraps either.

use super::prompt::Message;
use super::BenchError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        // Deterministic decoding for every benchmark call.
        GenConfig { temperature: 0.0, top_p: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestLimits {
    pub max_concurrent: usize,
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for RequestLimits {
    fn default() -> Self {
        RequestLimits { max_concurrent: 4, retries: 3, timeout_secs: 60 }
    }
}

/// One configured model endpoint. The auth token is never stored here, only
/// the name of the environment variable holding it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    pub model_id: String,
    pub auth_env: Option<String>,
    #[serde(default)]
    pub limits: RequestLimits,
}

/// A backend that can answer one chat request. `tag` identifies the sample
/// for scripted mocks; live backends ignore it.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, tag: &str, messages: &[Message], gen: &GenConfig)
        -> Result<String, BenchError>;
    /// Stable identifier mixed into cache keys.
    fn id(&self) -> String;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Live HTTP backend speaking the chat-completions contract.
pub struct HttpBackend {
    endpoint: ModelEndpoint,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(endpoint: ModelEndpoint) -> Result<HttpBackend, BenchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.limits.timeout_secs))
            .build()
            .map_err(|e| BenchError::Http { endpoint: endpoint.name.clone(), msg: e.to_string() })?;
        Ok(HttpBackend { endpoint, client })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn auth_token(&self) -> Result<Option<String>, BenchError> {
        match &self.endpoint.auth_env {
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BenchError::MissingAuth(var.clone())),
            None => Ok(None),
        }
    }

    fn attempt(&self, messages: &[Message], gen: &GenConfig) -> Result<String, String> {
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.endpoint.model_id,
            messages,
            temperature: gen.temperature,
            top_p: gen.top_p,
        };
        let mut req = self.client.post(&url).json(&body);
        if let Ok(Some(token)) = self.auth_token() {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "response had no choices".to_string())
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        _tag: &str,
        messages: &[Message],
        gen: &GenConfig,
    ) -> Result<String, BenchError> {
        self.auth_token()?;
        let mut last_err = String::new();
        for attempt in 0..=self.endpoint.limits.retries {
            match self.attempt(messages, gen) {
                Ok(content) => return Ok(content),
                Err(e) => last_err = e,
            }
            if attempt < self.endpoint.limits.retries {
                // Exponential backoff with a little jitter to spread retries.
                let base = 500u64.saturating_mul(1 << attempt.min(6));
                let jitter = u64::from(rand::random::<u8>());
                std::thread::sleep(Duration::from_millis(base + jitter));
            }
        }
        Err(BenchError::Http { endpoint: self.endpoint.name.clone(), msg: last_err })
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.endpoint.base_url, self.endpoint.model_id)
    }
}

/// Scripted backend: a JSON object mapping sample id to canned reply, with an
/// optional `"*"` fallback entry.
pub struct MockBackend {
    replies: BTreeMap<String, String>,
    script_id: String,
}

impl MockBackend {
    pub fn from_script_file(path: impl AsRef<Path>) -> Result<MockBackend, BenchError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let replies: BTreeMap<String, String> =
            serde_json::from_str(&content).map_err(|source| BenchError::Json {
                path: path.display().to_string(),
                source,
            })?;
        Ok(MockBackend { replies, script_id: path.display().to_string() })
    }

    pub fn from_map(replies: BTreeMap<String, String>) -> MockBackend {
        MockBackend { replies, script_id: "inline".to_string() }
    }
}

impl ChatBackend for MockBackend {
    fn complete(
        &self,
        tag: &str,
        _messages: &[Message],
        _gen: &GenConfig,
    ) -> Result<String, BenchError> {
        self.replies
            .get(tag)
            .or_else(|| self.replies.get("*"))
            .cloned()
            .ok_or_else(|| BenchError::MockMissing(tag.to_string()))
    }

    fn id(&self) -> String {
        format!("mock:{}", self.script_id)
    }
}

#[derive(Serialize)]
struct CacheKey<'a> {
    backend: &'a str,
    messages: &'a [Message],
    gen: &'a GenConfig,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    backend: String,
    response: String,
}

/// Content-addressed response cache. A hit for the same `(backend, messages,
/// gen)` triple skips the wrapped backend entirely; writes go through a
/// temp file and rename, so a concurrent reader never sees a partial entry.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ChatBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> CachedBackend<B> {
        CachedBackend { inner, dir: dir.into() }
    }

    fn path_for(&self, key_hex: &str) -> PathBuf {
        self.dir.join(&key_hex[..2]).join(format!("{key_hex}.json"))
    }

    fn key(&self, messages: &[Message], gen: &GenConfig) -> String {
        use sha2::{Digest, Sha256};
        let backend = self.inner.id();
        let key = CacheKey { backend: &backend, messages, gen };
        let bytes = serde_json::to_vec(&key).expect("cache key serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

impl<B: ChatBackend> ChatBackend for CachedBackend<B> {
    fn complete(
        &self,
        tag: &str,
        messages: &[Message],
        gen: &GenConfig,
    ) -> Result<String, BenchError> {
        let key = self.key(messages, gen);
        let path = self.path_for(&key);
        if let Ok(content) = std::fs::read_to_string(&path) {
            if let Ok(entry) = serde_json::from_str::<CacheEntry>(&content) {
                return Ok(entry.response);
            }
        }
        let response = self.inner.complete(tag, messages, gen)?;
        let entry = CacheEntry { backend: self.inner.id(), response: response.clone() };
        let parent = path.parent().expect("cache path has parent");
        let io_err = |source: std::io::Error| BenchError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(parent).map_err(io_err)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&entry).expect("cache entry serializes"))
            .map_err(io_err)?;
        std::fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(response)
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}
