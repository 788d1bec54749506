//! Peer-list providers for the semantic strategy: a bundled static map that
//! replays fixed peer sets, and an HTTP client for an external text
//! generation service.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use guardrail_core::{GuardrailError, PeerCandidateList, PeerProvider, PeerSource};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_ENTITIES: usize = 5;

const BUNDLED_PEERS: &str = include_str!("../../../data/peers/static_peers.json");
pub(crate) const BUNDLED_ALIASES: &str = include_str!("../../../data/peers/aliases.json");
const COVID_PROMPT: &str = include_str!("../../../data/prompts/covid.txt");
const STOCKS_PROMPT: &str = include_str!("../../../data/prompts/stocks.txt");

fn provider_error(message: impl Into<String>) -> GuardrailError {
    GuardrailError::Provider { message: message.into(), diagnostics: Vec::new() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AliasEntry {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Free-form category, e.g. `country` or `company`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// Case-insensitive map from names (and ids) to normalized ids.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    lookup: HashMap<String, String>,
    names: BTreeMap<String, String>,
}

#[derive(Deserialize)]
pub(crate) struct AliasFile {
    pub(crate) entries: Vec<AliasEntry>,
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

impl AliasTable {
    pub fn new(entries: impl IntoIterator<Item = AliasEntry>) -> Self {
        let mut table = Self::default();
        for entry in entries {
            for key in std::iter::once(&entry.id).chain([&entry.name]).chain(&entry.aliases) {
                table.lookup.entry(fold(key)).or_insert_with(|| entry.id.clone());
            }
            table.names.entry(entry.id.clone()).or_insert(entry.name);
        }
        table
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        Ok(Self::new(serde_json::from_str::<AliasFile>(text)?.entries))
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_ALIASES).expect("bundled alias table is valid")
    }

    /// Id for a name, id, or alias.
    pub fn resolve(&self, name: &str) -> Option<&str> {
        self.lookup.get(&fold(name)).map(String::as_str)
    }

    /// Display name for an id, falling back to the id.
    pub fn display_name<'a>(&'a self, id: &'a str) -> &'a str {
        self.names.get(id).map_or(id, String::as_str)
    }
}

/// Strips list markers ("1.", "2)", "-", "*") and surrounding quotes or
/// punctuation from one response entry.
fn clean_entry(raw: &str) -> &str {
    let mut s = raw.trim();
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 && s[digits..].starts_with(['.', ')', ':']) {
        s = &s[digits + 1..];
    }
    s = s.trim_start_matches(['-', '*', '•']);
    s.trim_matches(|c: char| c.is_whitespace() || "\"'`.;:".contains(c))
}

fn resolve_entry<'t>(aliases: &'t AliasTable, entry: &str) -> Option<&'t str> {
    if let Some(id) = aliases.resolve(entry) {
        return Some(id);
    }
    // "Italy (ITA)" or "ITA (Italy)"
    let (outer, inner) = entry.split_once('(')?;
    let inner = inner.trim_end_matches(')');
    aliases.resolve(outer).or_else(|| aliases.resolve(inner))
}

/// Result of parsing one free-text response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub ids: Vec<String>,
    /// Entries beyond the first `max_entities`.
    pub truncated: Vec<String>,
    /// Entries the alias table does not know.
    pub unknown: Vec<String>,
}

/// Parses comma-, semicolon-, newline- or numbered-list responses. Only the
/// first `max_entities` entries are considered; unknown names are dropped.
pub fn parse_response(text: &str, aliases: &AliasTable, max_entities: usize) -> ParsedResponse {
    let entries: Vec<&str> = text.split(['\n', ',', ';']).map(clean_entry).filter(|e| !e.is_empty()).collect();
    let (head, tail) = entries.split_at(entries.len().min(max_entities));
    let mut parsed = ParsedResponse {
        ids: Vec::new(),
        truncated: tail.iter().map(|s| s.to_string()).collect(),
        unknown: Vec::new(),
    };
    for entry in head {
        match resolve_entry(aliases, entry) {
            Some(id) if !parsed.ids.iter().any(|x| x == id) => parsed.ids.push(id.into()),
            Some(_) => {}
            None => parsed.unknown.push(entry.to_string()),
        }
    }
    parsed
}

/// Replays fixed peer sets: every sample is the same list, so the consensus
/// filter returns it unchanged.
#[derive(Debug, Clone)]
pub struct StaticPeers {
    map: BTreeMap<String, Vec<String>>,
    aliases: AliasTable,
}

impl StaticPeers {
    pub fn new(map: BTreeMap<String, Vec<String>>, aliases: AliasTable) -> Self {
        Self { map, aliases }
    }

    pub fn from_json(text: &str, aliases: AliasTable) -> serde_json::Result<Self> {
        Ok(Self::new(serde_json::from_str(text)?, aliases))
    }

    pub fn from_path(path: &Path, aliases: AliasTable) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading static peer map {}: {e}", path.display()))?;
        Ok(Self::from_json(&text, aliases)?)
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_PEERS, AliasTable::bundled()).expect("bundled peer map is valid")
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// `m` copies of the mapped list. The focal may be given by id or name.
    pub fn static_peers(&self, focal: &str, m: usize) -> Result<Vec<PeerCandidateList>, GuardrailError> {
        let (key, peers) = self
            .map
            .get_key_value(focal)
            .or_else(|| self.aliases.resolve(focal).and_then(|id| self.map.get_key_value(id)))
            .ok_or_else(|| {
                let known: Vec<&str> = self.keys().collect();
                provider_error(format!("no static peers for `{focal}`; known: {}", known.join(", ")))
            })?;
        let list = PeerCandidateList::new(key, peers.iter().cloned(), PeerSource::Static);
        Ok(vec![list; m])
    }
}

impl PeerProvider for StaticPeers {
    fn candidate_lists(&self, focal_id: &str, samples: usize) -> guardrail_core::Result<Vec<PeerCandidateList>> {
        self.static_peers(focal_id, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    #[default]
    Static,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_ms: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeerProviderConfig {
    pub mode: ProviderMode,
    /// Bundled map when absent.
    pub static_map_path: Option<PathBuf>,
    /// Bundled alias table when absent.
    pub alias_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub prompt_template_id: String,
    pub samples: usize,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
    pub task_context: String,
}

impl Default for PeerProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Static,
            static_map_path: None,
            alias_path: None,
            endpoint: None,
            prompt_template_id: "covid".into(),
            samples: 10,
            timeout_ms: 30_000,
            retry: RetryPolicy::default(),
            task_context: "estimate the highlighted item's percentile rank in the dataset".into(),
        }
    }
}

impl PeerProviderConfig {
    pub fn validate(&self) -> Result<(), GuardrailError> {
        if self.mode == ProviderMode::External && self.endpoint.is_none() {
            return Err(provider_error("external mode requires an endpoint"));
        }
        if self.samples == 0 || self.retry.max_attempts == 0 {
            return Err(provider_error("samples and retry.max_attempts must be at least 1"));
        }
        prompt_template(&self.prompt_template_id)?;
        Ok(())
    }

    fn aliases(&self) -> anyhow::Result<AliasTable> {
        match &self.alias_path {
            Some(path) => Ok(AliasTable::from_json(&std::fs::read_to_string(path)?)?),
            None => Ok(AliasTable::bundled()),
        }
    }

    /// Provider selected by `mode`.
    pub fn build(&self) -> anyhow::Result<Box<dyn PeerProvider + Send + Sync>> {
        self.validate()?;
        let aliases = self.aliases()?;
        Ok(match self.mode {
            ProviderMode::Static => Box::new(match &self.static_map_path {
                Some(path) => StaticPeers::from_path(path, aliases)?,
                None => StaticPeers::from_json(BUNDLED_PEERS, aliases)?,
            }),
            ProviderMode::External => Box::new(ExternalPeers::new(self.clone(), aliases)?),
        })
    }
}

pub fn prompt_template(id: &str) -> Result<&'static str, GuardrailError> {
    match id {
        "covid" => Ok(COVID_PROMPT),
        "stocks" => Ok(STOCKS_PROMPT),
        other => Err(provider_error(format!("unknown prompt template `{other}`; known: covid, stocks"))),
    }
}

pub fn render_prompt(template: &str, focal: &str, task_context: &str) -> String {
    template.replace("{focal}", focal).replace("{task}", task_context)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_index: usize,
    pub prompt: String,
    pub raw_response: Option<String>,
    pub parsed_ids: Vec<String>,
}

/// Rebuilds candidate lists from a recorded transcript by re-parsing every
/// raw response; requests that failed are skipped.
pub fn replay_transcript(
    focal_id: &str,
    transcript: &[TranscriptEntry],
    aliases: &AliasTable,
) -> Vec<PeerCandidateList> {
    let mut entries: Vec<&TranscriptEntry> = transcript.iter().collect();
    entries.sort_by_key(|e| e.request_index);
    entries
        .into_iter()
        .filter_map(|e| {
            let raw = e.raw_response.as_ref()?;
            let parsed = parse_response(raw, aliases, DEFAULT_MAX_ENTITIES);
            (!parsed.ids.is_empty()).then(|| {
                PeerCandidateList::new(focal_id, parsed.ids, PeerSource::External).with_raw_response(raw.clone())
            })
        })
        .collect()
}

/// Replays a transcript file as a provider.
#[derive(Debug, Clone)]
pub struct TranscriptPeers {
    pub focal_id: String,
    pub transcript: Vec<TranscriptEntry>,
    pub aliases: AliasTable,
}

impl PeerProvider for TranscriptPeers {
    fn candidate_lists(&self, focal_id: &str, samples: usize) -> guardrail_core::Result<Vec<PeerCandidateList>> {
        if focal_id != self.focal_id {
            return Err(provider_error(format!("transcript was recorded for `{}`", self.focal_id)));
        }
        let mut lists = replay_transcript(focal_id, &self.transcript, &self.aliases);
        lists.truncate(samples);
        Ok(lists)
    }
}

#[derive(Serialize)]
struct PromptBody<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

/// Client for an endpoint accepting `{"prompt": ...}` and answering
/// `{"text": ...}`. Requests run concurrently; every request gives up after
/// `timeout × max_attempts`.
pub struct ExternalPeers {
    config: PeerProviderConfig,
    endpoint: String,
    aliases: AliasTable,
    last_transcript: Mutex<Vec<TranscriptEntry>>,
}

impl ExternalPeers {
    pub fn new(config: PeerProviderConfig, aliases: AliasTable) -> Result<Self, GuardrailError> {
        config.validate()?;
        let endpoint = config.endpoint.clone().ok_or_else(|| provider_error("no endpoint"))?;
        Ok(Self { config, endpoint, aliases, last_transcript: Mutex::new(Vec::new()) })
    }

    /// Transcript of the most recent batch.
    pub fn last_transcript(&self) -> Vec<TranscriptEntry> {
        self.last_transcript.lock().map(|t| t.clone()).unwrap_or_default()
    }

    fn request(&self, prompt: &str) -> Result<String, String> {
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let deadline = Instant::now() + timeout * self.config.retry.max_attempts;
        let backoff = Duration::from_millis(self.config.retry.backoff_ms);
        let mut last_error = String::from("no attempt made");
        for attempt in 1..=self.config.retry.max_attempts {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            let agent: ureq::Agent =
                ureq::Agent::config_builder().timeout_global(Some(timeout.min(remaining))).build().into();
            let outcome = agent
                .post(&self.endpoint)
                .send_json(PromptBody { prompt })
                .map_err(|e| e.to_string())
                .and_then(|mut r| r.body_mut().read_json::<TextBody>().map_err(|e| e.to_string()));
            match outcome {
                Ok(body) => return Ok(body.text),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "peer request failed");
                    last_error = e;
                }
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            if attempt < self.config.retry.max_attempts && remaining > backoff * attempt {
                std::thread::sleep(backoff * attempt);
            }
        }
        Err(last_error)
    }

    /// Issues `m` requests and parses each answer. At least `ceil(m / 2)`
    /// answers must yield a non-empty list.
    pub fn external_peers(
        &self,
        focal_id: &str,
        task_context: &str,
        m: usize,
    ) -> Result<(Vec<PeerCandidateList>, Vec<TranscriptEntry>), GuardrailError> {
        let template = prompt_template(&self.config.prompt_template_id)?;
        let prompt = render_prompt(template, self.aliases.display_name(focal_id), task_context);
        let responses: Vec<Result<String, String>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..m).map(|_| scope.spawn(|| self.request(&prompt))).collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("request thread panicked".into()))).collect()
        });

        let mut lists = Vec::new();
        let mut transcript = Vec::with_capacity(m);
        let mut diagnostics = Vec::new();
        for (request_index, response) in responses.into_iter().enumerate() {
            let mut entry =
                TranscriptEntry { request_index, prompt: prompt.clone(), raw_response: None, parsed_ids: Vec::new() };
            match response {
                Ok(text) => {
                    let parsed = parse_response(&text, &self.aliases, DEFAULT_MAX_ENTITIES);
                    if !parsed.truncated.is_empty() {
                        tracing::info!(request_index, dropped = ?parsed.truncated, "response truncated to five entries");
                    }
                    if !parsed.unknown.is_empty() {
                        tracing::warn!(request_index, unknown = ?parsed.unknown, "dropped unrecognized names");
                    }
                    if !parsed.ids.is_empty() {
                        lists.push(
                            PeerCandidateList::new(focal_id, parsed.ids.iter().cloned(), PeerSource::External)
                                .with_raw_response(text.clone()),
                        );
                    } else {
                        diagnostics.push(format!("request {request_index}: no recognizable names in {text:?}"));
                    }
                    entry.parsed_ids = parsed.ids;
                    entry.raw_response = Some(text);
                }
                Err(e) => diagnostics.push(format!("request {request_index}: {e}")),
            }
            transcript.push(entry);
        }
        if let Ok(mut last) = self.last_transcript.lock() {
            *last = transcript.clone();
        }
        if lists.len() < m.div_ceil(2) {
            diagnostics.extend(transcript.iter().map(|t| serde_json::to_string(t).unwrap_or_default()));
            return Err(GuardrailError::Provider {
                message: format!("only {} of {m} responses were usable", lists.len()),
                diagnostics,
            });
        }
        Ok((lists, transcript))
    }
}

impl PeerProvider for ExternalPeers {
    fn candidate_lists(&self, focal_id: &str, samples: usize) -> guardrail_core::Result<Vec<PeerCandidateList>> {
        Ok(self.external_peers(focal_id, &self.config.task_context, samples)?.0)
    }
}
