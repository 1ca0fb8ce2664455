//! Reply classification: the sentiment model whose identity is part of every score.
//!
//! Three backends sit behind [`ReplyClassifier`]:
//! - `lexicon`: word-list counts, offline and deterministic;
//! - `gold_passthrough`: replays assessor labels, used as ground truth;
//! - `remote`: a chat-completions model prompted with the whole reply bundle.

pub mod lexicon;
pub mod prompt;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chat::{ChatClient, ChatCompletion, ChatMessage, RetryPolicy};
use crate::error::{Error, Result};
use crate::ingest::CorpusStore;
use crate::thread_model::{
    map_assessor_label, AssessorLabel, ContentItem, ContentKind, ContextDescriptor,
    ReactionRecord, SentimentPolarity,
};

pub use prompt::{build_prompt, parse_label_lines, FewShotExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Lexicon,
    GoldPassthrough,
    Remote,
}

fn default_template() -> String {
    prompt::DEFAULT_TEMPLATE.to_string()
}

fn default_system() -> String {
    prompt::DEFAULT_SYSTEM_MESSAGE.trim().to_string()
}

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_parallel() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    250
}

/// Identifies and parameterizes the classifier model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub backend: BackendKind,
    pub classifier_id: String,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_system")]
    pub system_message: String,
    #[serde(default = "prompt::default_examples")]
    pub few_shot_examples: Vec<FewShotExample>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl ClassifierConfig {
    pub fn new(backend: BackendKind, classifier_id: impl Into<String>) -> Self {
        Self {
            backend,
            classifier_id: classifier_id.into(),
            endpoint_url: None,
            model_name: None,
            prompt_template: default_template(),
            system_message: default_system(),
            few_shot_examples: prompt::default_examples(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_parallel_requests: default_parallel(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn remote(
        classifier_id: impl Into<String>,
        endpoint_url: impl Into<String>,
        model_name: impl Into<String>,
    ) -> Self {
        let mut cfg = Self::new(BackendKind::Remote, classifier_id);
        cfg.endpoint_url = Some(endpoint_url.into());
        cfg.model_name = Some(model_name.into());
        cfg
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
        if self.classifier_id.trim().is_empty() {
            return Err(Error::InvalidConfig("classifier_id must be non-empty".into()));
        }
        if self.backend == BackendKind::Remote
            && (self.endpoint_url.is_none() || self.model_name.is_none())
        {
            return Err(Error::InvalidConfig(
                "remote backend requires endpoint_url and model_name".into(),
            ));
        }
        if self.max_parallel_requests == 0 {
            return Err(Error::InvalidConfig("max_parallel_requests must be positive".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::InvalidConfig("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.backoff_base_ms),
            ..RetryPolicy::default()
        }
    }
}

/// Everything the classifier sees for one target: the target, all of its
/// replies to label, and the surrounding post.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRequest {
    pub target: ContentItem,
    pub replies: Vec<ContentItem>,
    pub post_title: Option<String>,
    pub post_body: Option<String>,
    pub post_image_desc: Option<String>,
    pub context: ContextDescriptor,
}

impl ClassificationRequest {
    pub fn new(
        target: ContentItem,
        replies: Vec<ContentItem>,
        context: ContextDescriptor,
    ) -> Result<Self> {
        if replies.is_empty() {
            return Err(Error::NoReplies);
        }
        if let Some(stray) = replies.iter().find(|r| r.parent_id.as_deref() != Some(&target.id)) {
            return Err(Error::InvalidContent(format!(
                "{} is not a reply to {}",
                stray.id, target.id
            )));
        }
        Ok(Self {
            target,
            replies,
            post_title: None,
            post_body: None,
            post_image_desc: None,
            context,
        })
    }

    /// Builds a request and fills post details from the thread's root post.
    ///
    /// When the target is itself the post, its body is the target text and
    /// only the title and image description are added as post details.
    pub fn from_store(
        store: &CorpusStore,
        target: &ContentItem,
        replies: Vec<ContentItem>,
    ) -> Result<Self> {
        let mut req = Self::new(target.clone(), replies, target.context.clone())?;
        if target.kind == ContentKind::Post {
            req.post_title = target.title.clone();
            req.post_image_desc = target.image_desc.clone();
        } else if let Some(post) = store.root_post(&target.id) {
            req.post_title = post.title.clone();
            req.post_body = Some(post.body.clone()).filter(|b| !b.is_empty());
            req.post_image_desc = post.image_desc.clone();
        }
        Ok(req)
    }
}

/// The classifier's decision for one reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplyVerdict {
    pub polarity: SentimentPolarity,
    /// Assessor labels the polarity was aggregated from, when replaying gold data.
    pub raw_labels: Option<Vec<AssessorLabel>>,
}

impl From<SentimentPolarity> for ReplyVerdict {
    fn from(polarity: SentimentPolarity) -> Self {
        Self { polarity, raw_labels: None }
    }
}

/// A sentiment model. Implementations must be shareable across threads.
pub trait ReplyClassifier: Send + Sync {
    fn classifier_id(&self) -> &str;

    /// One verdict per reply, in reply order.
    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<ReplyVerdict>>;
}

/// Classifies every reply of `request`, producing one record per reply in input order.
pub fn classify_replies(
    request: &ClassificationRequest,
    classifier: &dyn ReplyClassifier,
) -> Result<Vec<ReactionRecord>> {
    let verdicts = classifier.classify(request)?;
    if verdicts.len() != request.replies.len() {
        return Err(Error::ShapeError(format!(
            "classifier {} returned {} verdicts for {} replies",
            classifier.classifier_id(),
            verdicts.len(),
            request.replies.len()
        )));
    }
    let id = Some(classifier.classifier_id().to_string());
    request
        .replies
        .iter()
        .zip(verdicts)
        .map(|(reply, verdict)| match verdict.raw_labels {
            Some(labels) => ReactionRecord::from_labels(reply.clone(), labels, id.clone()),
            None => ReactionRecord::new(reply.clone(), verdict.polarity, id.clone()),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    id: String,
}

impl LexiconClassifier {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl ReplyClassifier for LexiconClassifier {
    fn classifier_id(&self) -> &str {
        &self.id
    }

    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<ReplyVerdict>> {
        Ok(request.replies.iter().map(|r| lexicon::classify_text(&r.body).into()).collect())
    }
}

/// Replays assessor labels keyed by reply id.
#[derive(Debug, Clone, Default)]
pub struct GoldPassthrough {
    id: String,
    labels: HashMap<String, Vec<AssessorLabel>>,
}

impl GoldPassthrough {
    pub fn new(id: impl Into<String>, gold: &[ReactionRecord]) -> Self {
        let labels = gold
            .iter()
            .filter_map(|r| Some((r.reply().id.clone(), r.raw_labels()?.to_vec())))
            .collect();
        Self { id: id.into(), labels }
    }
}

impl ReplyClassifier for GoldPassthrough {
    fn classifier_id(&self) -> &str {
        &self.id
    }

    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<ReplyVerdict>> {
        request
            .replies
            .iter()
            .map(|reply| {
                let labels = self
                    .labels
                    .get(&reply.id)
                    .ok_or_else(|| Error::MissingGold(reply.id.clone()))?;
                Ok(ReplyVerdict {
                    polarity: crate::thread_model::aggregate_assessor_labels(labels)?,
                    raw_labels: Some(labels.clone()),
                })
            })
            .collect()
    }
}

/// Prompts a chat model with the whole reply bundle in a single request.
pub struct RemoteClassifier {
    config: ClassifierConfig,
    chat: Arc<dyn ChatCompletion>,
}

impl RemoteClassifier {
    pub fn new(config: ClassifierConfig, chat: Arc<dyn ChatCompletion>) -> Self {
        Self { config, chat }
    }

    pub fn messages(&self, request: &ClassificationRequest) -> Result<Vec<ChatMessage>> {
        Ok(vec![
            ChatMessage::system(self.config.system_message.clone()),
            ChatMessage::user(build_prompt(request, &self.config)?),
        ])
    }
}

impl ReplyClassifier for RemoteClassifier {
    fn classifier_id(&self) -> &str {
        &self.config.classifier_id
    }

    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<ReplyVerdict>> {
        let answer = self.chat.complete(&self.messages(request)?)?;
        let labels = parse_label_lines(&answer, request.replies.len())?;
        Ok(labels.into_iter().map(|l| map_assessor_label(l).into()).collect())
    }
}

/// A classifier built from a [`ClassifierConfig`].
pub enum Classifier {
    Lexicon(LexiconClassifier),
    Gold(GoldPassthrough),
    Remote(RemoteClassifier),
}

impl Classifier {
    /// `gold` feeds the gold-passthrough backend and is ignored otherwise.
    /// `api_key` is sent as a bearer token by the remote backend.
    pub fn from_config(
        config: &ClassifierConfig,
        gold: Option<&[ReactionRecord]>,
        api_key: Option<&str>,
        seed: Option<u64>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(match config.backend {
            BackendKind::Lexicon => Self::Lexicon(LexiconClassifier::new(&config.classifier_id)),
            BackendKind::GoldPassthrough => {
                Self::Gold(GoldPassthrough::new(&config.classifier_id, gold.unwrap_or_default()))
            }
            BackendKind::Remote => {
                let mut client = ChatClient::new(
                    config.endpoint_url.clone().expect("validated"),
                    config.model_name.clone().expect("validated"),
                    config.timeout(),
                    config.retry_policy(),
                    seed,
                );
                if let Some(key) = api_key {
                    client = client.with_api_key(key);
                }
                Self::Remote(RemoteClassifier::new(config.clone(), Arc::new(client)))
            }
        })
    }

    fn inner(&self) -> &dyn ReplyClassifier {
        match self {
            Self::Lexicon(c) => c,
            Self::Gold(c) => c,
            Self::Remote(c) => c,
        }
    }
}

impl ReplyClassifier for Classifier {
    fn classifier_id(&self) -> &str {
        self.inner().classifier_id()
    }

    fn classify(&self, request: &ClassificationRequest) -> Result<Vec<ReplyVerdict>> {
        self.inner().classify(request)
    }
}
