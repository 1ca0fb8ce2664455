//! Reply-generation prediction: ask a generative model for the replies a
//! message would likely receive, classify them, and score the result.
//!
//! Generated replies are only ever scored on their own; they are never mixed
//! with observed replies.

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chat::{ChatClient, ChatCompletion, ChatMessage, RetryPolicy};
use crate::error::{Error, Result};
use crate::ingest::CorpusStore;
use crate::metric::ponos_basic;
use crate::sentiment::prompt::indexed_lines;
use crate::sentiment::{classify_replies, ClassificationRequest, ReplyClassifier};
use crate::template;
use crate::thread_model::{ContentItem, ContextDescriptor, PonosScore};

pub const DEFAULT_K_REPLIES: usize = 5;
pub const DEFAULT_TEMPLATE: &str = include_str!("../data/generator_prompt.txt");
pub const DEFAULT_SYSTEM_MESSAGE: &str = include_str!("../data/generator_system.txt");

/// A similar message and the replies it actually received, shown to the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub content: String,
    pub replies: Vec<String>,
}

impl Exemplar {
    /// The stored item's text and its top `max_replies` replies by score.
    pub fn from_store(store: &CorpusStore, content_id: &str, max_replies: usize) -> Result<Self> {
        let item = store
            .get(content_id)
            .ok_or_else(|| Error::MissingContent(content_id.to_string()))?;
        Ok(Self {
            content: item.body.clone(),
            replies: store.top_replies(content_id, max_replies).into_iter().map(|r| r.body).collect(),
        })
    }
}

fn default_k() -> usize {
    DEFAULT_K_REPLIES
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

fn default_system() -> String {
    DEFAULT_SYSTEM_MESSAGE.trim().to_string()
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_k")]
    pub k_replies: usize,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_system")]
    pub system_message: String,
    #[serde(default)]
    pub retrieved_neighbors: Vec<Exemplar>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl GeneratorConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            k_replies: DEFAULT_K_REPLIES,
            prompt_template: default_template(),
            system_message: default_system(),
            retrieved_neighbors: Vec::new(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_replies == 0 {
            return Err(Error::InvalidConfig("k_replies must be at least 1".into()));
        }
        if self.endpoint_url.trim().is_empty() || self.model_name.trim().is_empty() {
            return Err(Error::InvalidConfig("generator needs endpoint_url and model_name".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::InvalidConfig("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn client(&self, api_key: Option<&str>, seed: Option<u64>) -> Arc<dyn ChatCompletion> {
        let mut client = ChatClient::new(
            self.endpoint_url.clone(),
            self.model_name.clone(),
            Duration::from_secs_f64(self.timeout_secs),
            RetryPolicy {
                max_retries: self.max_retries,
                base_delay: Duration::from_millis(self.backoff_base_ms),
                ..RetryPolicy::default()
            },
            seed,
        );
        if let Some(key) = api_key {
            client = client.with_api_key(key);
        }
        Arc::new(client)
    }
}

fn exemplar_block(exemplars: &[Exemplar]) -> String {
    if exemplars.is_empty() {
        return "(none)".to_string();
    }
    exemplars
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let replies: Vec<String> =
                ex.replies.iter().enumerate().map(|(j, r)| format!("{}: {r}", j + 1)).collect();
            format!("Message {}:\n{}\nReplies:\n{}", i + 1, ex.content, replies.join("\n"))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The chat messages sent to the generator for `candidate`.
pub fn generation_messages(
    candidate: &ContentItem,
    context: &ContextDescriptor,
    config: &GeneratorConfig,
) -> Result<Vec<ChatMessage>> {
    let mut candidate_text = String::new();
    if let Some(title) = &candidate.title {
        candidate_text.push_str(&format!("Title: {title}\n"));
    }
    candidate_text.push_str(&candidate.body);
    if let Some(desc) = &candidate.image_desc {
        candidate_text.push_str(&format!("\nImage description: {desc}"));
    }
    let user = template::render(
        &config.prompt_template,
        &[
            ("community", context.community_id()),
            ("exemplars", &exemplar_block(&config.retrieved_neighbors)),
            ("candidate", &candidate_text),
            ("k", &config.k_replies.to_string()),
        ],
    )?;
    Ok(vec![ChatMessage::system(config.system_message.clone()), ChatMessage::user(user)])
}

/// Asks the generator for `k_replies` replies to `candidate`.
///
/// The answer must hold a non-empty `<index>: <text>` line for every index
/// from 1 to `k_replies`; extra lines are ignored.
pub fn predict_replies(
    candidate: &ContentItem,
    context: &ContextDescriptor,
    config: &GeneratorConfig,
    generator: &dyn ChatCompletion,
) -> Result<Vec<ContentItem>> {
    config.validate()?;
    if candidate.body.trim().is_empty() {
        return Err(Error::InvalidContent(format!("candidate {} has an empty body", candidate.id)));
    }
    let answer = generator.complete(&generation_messages(candidate, context, config)?)?;
    let k = config.k_replies;
    let mut texts: Vec<Option<&str>> = vec![None; k];
    for (index, text) in indexed_lines(&answer) {
        if (1..=k).contains(&index) && !text.is_empty() && texts[index - 1].is_none() {
            texts[index - 1] = Some(text);
        }
    }
    let obtained = texts.iter().filter(|t| t.is_some()).count();
    if obtained < k {
        return Err(Error::GenerationIncomplete { obtained, requested: k });
    }
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            ContentItem::comment(
                format!("{}#gen{}", candidate.id, i + 1),
                candidate.id.clone(),
                text.expect("all present"),
                candidate.created_at,
                context.clone(),
            )
        })
        .collect())
}

/// Predicted PONOS: generate replies, classify them, take the basic score.
pub fn predict_ponos(
    candidate: &ContentItem,
    context: &ContextDescriptor,
    config: &GeneratorConfig,
    generator: &dyn ChatCompletion,
    classifier: &dyn ReplyClassifier,
) -> Result<PonosScore> {
    let replies = predict_replies(candidate, context, config, generator)?;
    let mut request = ClassificationRequest::new(candidate.clone(), replies, context.clone())?;
    request.post_title = candidate.title.clone();
    request.post_image_desc = candidate.image_desc.clone();
    let records = classify_replies(&request, classifier)?;
    ponos_basic(&records, classifier.classifier_id())
}

/// One line of a prediction batch input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub id: String,
    pub body: String,
    pub context: String,
}

impl CandidateLine {
    pub fn into_item(self) -> Result<(ContentItem, ContextDescriptor)> {
        let ctx = ContextDescriptor::new(self.context)?;
        let item = ContentItem::post(self.id, self.body, 0, ctx.clone());
        item.validate()?;
        Ok((item, ctx))
    }
}

pub fn read_candidates<R: BufRead>(input: R) -> Result<Vec<CandidateLine>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::parse_at(n + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse_at(n + 1, e.to_string()))?);
    }
    Ok(out)
}
