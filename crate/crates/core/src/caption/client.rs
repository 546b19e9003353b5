use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{clean_text, Caption, CaptionIssue, CaptionOrigin, IssueKind, NameForm, PromptKind, PromptSet};
use crate::ingest::Recording;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaptionRequest {
    pub prompt_kind: PromptKind,
    pub prompt: String,
    pub species_name: String,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaptionResponse {
    text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("model refused: {0}")]
    Refused(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

/// Anything that turns a caption request into caption text.
pub trait CaptionClient: Send + Sync {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError>;
}

impl<C: CaptionClient + ?Sized> CaptionClient for &C {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError> {
        (**self).caption(request)
    }
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct EchoClient(pub String);

impl CaptionClient for EchoClient {
    fn caption(&self, _: &CaptionRequest) -> Result<String, ClientError> {
        Ok(self.0.clone())
    }
}

/// Replays a fixed sequence of outcomes, one per call; once exhausted every
/// call fails with [`ClientError::Refused`].
#[derive(Debug, Default)]
pub struct ScriptedClient {
    script: Mutex<VecDeque<Result<String, ClientError>>>,
    calls: AtomicUsize,
    requests: Mutex<Vec<CaptionRequest>>,
}

impl ScriptedClient {
    pub fn new(script: impl IntoIterator<Item = Result<String, ClientError>>) -> Self {
        ScriptedClient {
            script: Mutex::new(script.into_iter().collect()),
            ..Default::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<CaptionRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl CaptionClient for ScriptedClient {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(request.clone());
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(ClientError::Refused("script exhausted".into())))
    }
}

/// Wraps a closure; handy for request-dependent mock behavior.
pub struct FnClient<F>(pub F);

impl<F> CaptionClient for FnClient<F>
where
    F: Fn(&CaptionRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HttpClientConfig {
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

/// POSTs the JSON request to an endpoint and expects `{"text": "..."}` back.
pub struct HttpCaptionClient {
    config: HttpClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpCaptionClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpCaptionClient { config, http })
    }
}

impl CaptionClient for HttpCaptionClient {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError> {
        let mut req = self.http.post(&self.config.endpoint).json(request);
        if let Some(token) = &self.config.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ClientError::Refused(format!("HTTP {status}")));
        }
        resp.json::<CaptionResponse>()
            .map(|r| r.text)
            .map_err(|e| ClientError::BadResponse(e.to_string()))
    }
}

pub(crate) fn metadata_of(record: &Recording) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    put("callType", record.call_type.clone());
    put("behavior", record.behavior.clone());
    put("numAnimals", record.num_animals.map(|n| n.to_string()));
    if !record.background_species.is_empty() {
        put("backgroundSpecies", Some(record.background_species.join(", ")));
    }
    m
}

pub(crate) fn build_request(
    record: &Recording,
    kind: PromptKind,
    species: &str,
    previous: &str,
    prompts: &PromptSet,
) -> CaptionRequest {
    let notes = record.notes.clone().unwrap_or_default();
    let metadata = metadata_of(record);
    let meta_text = metadata
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join("; ");
    CaptionRequest {
        prompt_kind: kind,
        prompt: prompts.render(kind, species, &notes, &meta_text, previous),
        species_name: species.to_string(),
        notes,
        metadata,
    }
}

/// One captioning-model call. Failures come back as data, never as panics or errors.
pub fn llm_caption(
    record: &Recording,
    prompt_kind: PromptKind,
    name_form: NameForm,
    previous: Option<&str>,
    client: &dyn CaptionClient,
    prompts: &PromptSet,
    origin: CaptionOrigin,
) -> Result<Caption, CaptionIssue> {
    let issue = |kind, detail: String| CaptionIssue {
        recording_id: record.id.clone(),
        kind,
        detail,
    };
    let species = name_form
        .name_in(record)
        .ok_or_else(|| issue(IssueKind::MissingSpecies, format!("record has no {name_form} name")))?;
    let request = build_request(record, prompt_kind, species, previous.unwrap_or(""), prompts);
    match client.caption(&request) {
        Err(e) => Err(issue(IssueKind::ClientError, e.to_string())),
        Ok(text) if clean_text(&text).is_empty() => {
            Err(issue(IssueKind::EmptyOutput, "client returned no text".into()))
        }
        Ok(text) => Ok(Caption::new(record.id.clone(), &text, name_form, origin)
            .expect("non-empty after cleaning")),
    }
}
