//! Domain types shared by every module: content items, reactions, labels and scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The community whose norms define what counts as a negative reaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextDescriptor {
    community_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    locale: Option<String>,
}

impl ContextDescriptor {
    pub fn new(community_id: impl Into<String>) -> Result<Self> {
        let community_id = community_id.into();
        if community_id.trim().is_empty() {
            return Err(Error::InvalidContent("community id must be non-empty".into()));
        }
        Ok(Self { community_id, locale: None })
    }

    pub fn with_locale(mut self, locale: impl Into<String>) -> Self {
        self.locale = Some(locale.into());
        self
    }

    pub fn community_id(&self) -> &str {
        &self.community_id
    }

    pub fn locale(&self) -> Option<&str> {
        self.locale.as_deref()
    }
}

impl fmt::Display for ContextDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.community_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Post,
    Comment,
}

/// A post or a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentItem {
    pub id: String,
    pub kind: ContentKind,
    pub parent_id: Option<String>,
    pub title: Option<String>,
    pub body: String,
    pub image_desc: Option<String>,
    /// Community vote score; negative values are kept as-is.
    pub score: i64,
    /// Seconds since the Unix epoch.
    pub created_at: i64,
    pub context: ContextDescriptor,
}

impl ContentItem {
    pub fn post(
        id: impl Into<String>,
        body: impl Into<String>,
        created_at: i64,
        context: ContextDescriptor,
    ) -> Self {
        Self {
            id: id.into(),
            kind: ContentKind::Post,
            parent_id: None,
            title: None,
            body: body.into(),
            image_desc: None,
            score: 0,
            created_at,
            context,
        }
    }

    pub fn comment(
        id: impl Into<String>,
        parent_id: impl Into<String>,
        body: impl Into<String>,
        created_at: i64,
        context: ContextDescriptor,
    ) -> Self {
        Self {
            id: id.into(),
            kind: ContentKind::Comment,
            parent_id: Some(parent_id.into()),
            title: None,
            body: body.into(),
            image_desc: None,
            score: 0,
            created_at,
            context,
        }
    }

    pub fn with_score(mut self, score: i64) -> Self {
        self.score = score;
        self
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn with_image_desc(mut self, desc: impl Into<String>) -> Self {
        self.image_desc = Some(desc.into());
        self
    }

    /// Checks the per-item invariants (id present, kind/parent agreement, timestamp).
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidContent("id must be non-empty".into()));
        }
        match (self.kind, &self.parent_id) {
            (ContentKind::Post, Some(_)) => Err(Error::InvalidContent(format!(
                "post {} must not have a parent_id",
                self.id
            ))),
            (ContentKind::Comment, None) => Err(Error::InvalidContent(format!(
                "comment {} requires a parent_id",
                self.id
            ))),
            (ContentKind::Comment, Some(p)) if p.is_empty() => Err(Error::InvalidContent(
                format!("comment {} has an empty parent_id", self.id),
            )),
            _ if self.created_at < 0 => Err(Error::InvalidContent(format!(
                "item {} has negative created_at {}",
                self.id, self.created_at
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentPolarity {
    Negative,
    Neutral,
    Positive,
}

impl SentimentPolarity {
    pub const ALL: [SentimentPolarity; 3] = [Self::Negative, Self::Neutral, Self::Positive];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentPolarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five-way reaction label assigned by human assessors (and by remote models).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AssessorLabel {
    ApprovalComment,
    ApprovalSubject,
    Neutral,
    CondemnationComment,
    CondemnationSubject,
}

impl AssessorLabel {
    pub const ALL: [AssessorLabel; 5] = [
        Self::ApprovalComment,
        Self::ApprovalSubject,
        Self::Neutral,
        Self::CondemnationComment,
        Self::CondemnationSubject,
    ];

    /// The canonical label string, as it appears in gold files and model output.
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ApprovalComment => "approval (comment)",
            Self::ApprovalSubject => "approval (subject)",
            Self::Neutral => "neutral",
            Self::CondemnationComment => "condemnation (comment)",
            Self::CondemnationSubject => "condemnation (subject)",
        }
    }
}

impl fmt::Display for AssessorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssessorLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::parse(format!("unknown assessor label {s:?}")))
    }
}

impl TryFrom<String> for AssessorLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AssessorLabel> for String {
    fn from(l: AssessorLabel) -> Self {
        l.as_str().to_string()
    }
}

/// Maps an assessor label onto the polarity counted by the metric.
///
/// Only a reply condemning the comment itself is negative. Shared condemnation
/// of the comment's subject is agreement with the commenter and counts as positive.
pub fn map_assessor_label(label: AssessorLabel) -> SentimentPolarity {
    match label {
        AssessorLabel::CondemnationComment => SentimentPolarity::Negative,
        AssessorLabel::Neutral => SentimentPolarity::Neutral,
        AssessorLabel::ApprovalComment
        | AssessorLabel::ApprovalSubject
        | AssessorLabel::CondemnationSubject => SentimentPolarity::Positive,
    }
}

/// Majority vote over mapped labels; a tie for first place resolves to neutral.
pub fn aggregate_assessor_labels(labels: &[AssessorLabel]) -> Result<SentimentPolarity> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("assessor label list"));
    }
    let mut counts = [0usize; 3];
    for &label in labels {
        counts[polarity_slot(map_assessor_label(label))] += 1;
    }
    let best = *counts.iter().max().expect("three slots");
    let leaders: Vec<_> = SentimentPolarity::ALL
        .into_iter()
        .filter(|&p| counts[polarity_slot(p)] == best)
        .collect();
    Ok(match leaders.as_slice() {
        [only] => *only,
        _ => SentimentPolarity::Neutral,
    })
}

fn polarity_slot(p: SentimentPolarity) -> usize {
    match p {
        SentimentPolarity::Negative => 0,
        SentimentPolarity::Neutral => 1,
        SentimentPolarity::Positive => 2,
    }
}

/// A reply to some content, with its classified polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionRecord {
    reply: ContentItem,
    target_id: String,
    polarity: SentimentPolarity,
    raw_labels: Option<Vec<AssessorLabel>>,
    classifier_id: Option<String>,
}

impl ReactionRecord {
    pub fn new(
        reply: ContentItem,
        polarity: SentimentPolarity,
        classifier_id: Option<String>,
    ) -> Result<Self> {
        let target_id = Self::check_reply(&reply)?;
        Ok(Self { reply, target_id, polarity, raw_labels: None, classifier_id })
    }

    /// Builds a record from assessor labels; the polarity is their aggregate.
    pub fn from_labels(
        reply: ContentItem,
        labels: Vec<AssessorLabel>,
        classifier_id: Option<String>,
    ) -> Result<Self> {
        let target_id = Self::check_reply(&reply)?;
        let polarity = aggregate_assessor_labels(&labels)?;
        Ok(Self { reply, target_id, polarity, raw_labels: Some(labels), classifier_id })
    }

    fn check_reply(reply: &ContentItem) -> Result<String> {
        match (&reply.kind, &reply.parent_id) {
            (ContentKind::Comment, Some(parent)) => Ok(parent.clone()),
            _ => Err(Error::InvalidContent(format!(
                "reaction {} must be a comment with a parent",
                reply.id
            ))),
        }
    }

    pub fn reply(&self) -> &ContentItem {
        &self.reply
    }

    pub fn target_id(&self) -> &str {
        &self.target_id
    }

    pub fn polarity(&self) -> SentimentPolarity {
        self.polarity
    }

    pub fn raw_labels(&self) -> Option<&[AssessorLabel]> {
        self.raw_labels.as_deref()
    }

    pub fn classifier_id(&self) -> Option<&str> {
        self.classifier_id.as_deref()
    }
}

/// Anything that carries a sentiment polarity can be scored.
pub trait HasPolarity {
    fn polarity(&self) -> SentimentPolarity;
}

impl HasPolarity for SentimentPolarity {
    fn polarity(&self) -> SentimentPolarity {
        *self
    }
}

impl HasPolarity for ReactionRecord {
    fn polarity(&self) -> SentimentPolarity {
        self.polarity
    }
}

impl<T: HasPolarity> HasPolarity for &T {
    fn polarity(&self) -> SentimentPolarity {
        (**self).polarity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    Basic,
    Weighted,
    Net,
}

impl ScoreVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::Weighted => "weighted",
            Self::Net => "net",
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Self::Basic),
            "weighted" => Ok(Self::Weighted),
            "net" => Ok(Self::Net),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

const ERROR_RULE_TOLERANCE: f64 = 1e-12;

/// A PONOS value together with its sample size and measurement error.
///
/// Only constructed through [`PonosScore::new`], which enforces the range of
/// each variant and, for the basic variant, the `1 / (2N)` error rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PonosScore {
    value: f64,
    n_replies: usize,
    error: f64,
    variant: ScoreVariant,
    lambda: Option<f64>,
    classifier_id: Option<String>,
}

impl PonosScore {
    pub fn new(
        value: f64,
        n_replies: usize,
        error: f64,
        variant: ScoreVariant,
        lambda: Option<f64>,
        classifier_id: Option<String>,
    ) -> Result<Self> {
        if n_replies == 0 {
            return Err(Error::NoReplies);
        }
        let (lo, hi) = match variant {
            ScoreVariant::Basic | ScoreVariant::Weighted => (0.0, 1.0),
            ScoreVariant::Net => (-1.0, 1.0),
        };
        if !value.is_finite() || value < lo || value > hi {
            return Err(Error::InvalidContent(format!(
                "{variant} score {value} outside [{lo}, {hi}]"
            )));
        }
        if !error.is_finite() || error < 0.0 {
            return Err(Error::InvalidContent(format!("measurement error {error} is invalid")));
        }
        if variant == ScoreVariant::Basic {
            let expected = 1.0 / (2.0 * n_replies as f64);
            if (error - expected).abs() > ERROR_RULE_TOLERANCE {
                return Err(Error::InvalidContent(format!(
                    "basic score error {error} does not equal 1/(2*{n_replies})"
                )));
            }
        }
        if let Some(l) = lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::InvalidLambda(l));
            }
        }
        Ok(Self { value, n_replies, error, variant, lambda, classifier_id })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn n_replies(&self) -> usize {
        self.n_replies
    }

    pub fn error(&self) -> f64 {
        self.error
    }

    pub fn variant(&self) -> ScoreVariant {
        self.variant
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn classifier_id(&self) -> Option<&str> {
        self.classifier_id.as_deref()
    }

    pub fn with_classifier_id(mut self, id: impl Into<String>) -> Self {
        self.classifier_id = Some(id.into());
        self
    }
}
