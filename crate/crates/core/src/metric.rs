//! PONOS and its weighted and net variants, measurement error, and
//! aggregation of duplicate content.
//!
//! All functions are pure. Negativity counts are accumulated as integers so
//! that exact-rational inputs yield correctly rounded results.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thread_model::{
    ContextDescriptor, HasPolarity, PonosScore, ScoreVariant, SentimentPolarity,
};

/// Half the resolution of a proportion measured on `n_replies` replies.
pub fn measurement_error(n_replies: usize) -> Result<f64> {
    if n_replies == 0 {
        return Err(Error::NoReplies);
    }
    Ok(1.0 / (2.0 * n_replies as f64))
}

/// Fraction of reactions classified negative.
pub fn ponos_basic<R: HasPolarity>(reactions: &[R], classifier_id: &str) -> Result<PonosScore> {
    let n = reactions.len();
    if n == 0 {
        return Err(Error::NoReplies);
    }
    let negatives = count(reactions, SentimentPolarity::Negative);
    PonosScore::new(
        negatives as f64 / n as f64,
        n,
        measurement_error(n)?,
        ScoreVariant::Basic,
        None,
        Some(classifier_id.to_string()),
    )
}

/// `exp(-lambda * (reference_time - reply_time))`, times in seconds.
pub fn time_decay_weight(reply_time: i64, reference_time: i64, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidLambda(lambda));
    }
    if reply_time > reference_time {
        return Err(Error::InvalidTimestamp { reply_time, reference_time });
    }
    let diff = (reference_time as i128 - reply_time as i128) as f64;
    Ok((-lambda * diff).exp())
}

/// A reaction paired with a non-negative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedReaction<R> {
    reaction: R,
    weight: f64,
}

impl<R> WeightedReaction<R> {
    pub fn new(reaction: R, weight: f64) -> Result<Self> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::InvalidWeight(weight));
        }
        Ok(Self { reaction, weight })
    }

    pub fn reaction(&self) -> &R {
        &self.reaction
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// `sum(w_i * n_i) / sum(w_i)` where `n_i` is 1 for a negative reaction.
///
/// Weights are rescaled by their maximum before summing, so equal weights
/// reproduce [`ponos_basic`] bit for bit.
pub fn ponos_weighted<R: HasPolarity>(
    reactions: &[WeightedReaction<R>],
    classifier_id: &str,
) -> Result<PonosScore> {
    weighted_score(reactions, None, classifier_id)
}

fn weighted_score<R: HasPolarity>(
    reactions: &[WeightedReaction<R>],
    lambda: Option<f64>,
    classifier_id: &str,
) -> Result<PonosScore> {
    let n = reactions.len();
    if n == 0 {
        return Err(Error::NoReplies);
    }
    let max_weight = reactions.iter().map(|r| r.weight).fold(0.0_f64, f64::max);
    if max_weight <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for r in reactions {
        let w = r.weight / max_weight;
        if r.reaction.polarity() == SentimentPolarity::Negative {
            numerator += w;
        }
        denominator += w;
    }
    // numerator is a sub-sum of denominator; clamp guards the last ulp
    let value = (numerator / denominator).clamp(0.0, 1.0);
    PonosScore::new(
        value,
        n,
        measurement_error(n)?,
        ScoreVariant::Weighted,
        lambda,
        Some(classifier_id.to_string()),
    )
}

/// Weighted PONOS with recency weights `exp(-lambda * (reference_time - t_i))`.
pub fn ponos_time_weighted<R: HasPolarity>(
    reactions: &[(R, i64)],
    reference_time: i64,
    lambda: f64,
    classifier_id: &str,
) -> Result<PonosScore> {
    let weighted = reactions
        .iter()
        .map(|(r, t)| WeightedReaction::new(r, time_decay_weight(*t, reference_time, lambda)?))
        .collect::<Result<Vec<_>>>()?;
    weighted_score(&weighted, Some(lambda), classifier_id)
}

/// `sum(s_i) / N` with `s_i` = +1 positive, -1 negative, 0 neutral.
///
/// Higher values mean a more positive reception, the opposite orientation to
/// [`ponos_basic`].
pub fn ponos_net<R: HasPolarity>(reactions: &[R], classifier_id: &str) -> Result<PonosScore> {
    let n = reactions.len();
    if n == 0 {
        return Err(Error::NoReplies);
    }
    let positives = count(reactions, SentimentPolarity::Positive) as i64;
    let negatives = count(reactions, SentimentPolarity::Negative) as i64;
    PonosScore::new(
        (positives - negatives) as f64 / n as f64,
        n,
        measurement_error(n)?,
        ScoreVariant::Net,
        None,
        Some(classifier_id.to_string()),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Pool every reply across occurrences, then take the proportion.
    #[default]
    Micro,
    /// Mean of per-occurrence proportions.
    Macro,
}

/// Scores content that appeared several times in the same context.
pub fn aggregate_duplicates<R: HasPolarity>(
    occurrences: &[Vec<R>],
    mode: AggregationMode,
    classifier_id: &str,
) -> Result<PonosScore> {
    if occurrences.is_empty() || occurrences.iter().any(Vec::is_empty) {
        return Err(Error::NoReplies);
    }
    let pooled: Vec<&R> = occurrences.iter().flatten().collect();
    match mode {
        AggregationMode::Micro => ponos_basic(&pooled, classifier_id),
        AggregationMode::Macro => {
            let mut total = 0.0;
            for occurrence in occurrences {
                total += ponos_basic(occurrence, classifier_id)?.value();
            }
            let n = pooled.len();
            PonosScore::new(
                (total / occurrences.len() as f64).clamp(0.0, 1.0),
                n,
                measurement_error(n)?,
                ScoreVariant::Basic,
                None,
                Some(classifier_id.to_string()),
            )
        }
    }
}

/// Wire shape of one score-report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreLine {
    content_id: String,
    context: String,
    variant: ScoreVariant,
    value: f64,
    n_replies: usize,
    error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    classifier_id: Option<String>,
}

/// A score attached to the content item it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScoreLine", try_from = "ScoreLine")]
pub struct ScoreRecord {
    pub content_id: String,
    pub context: ContextDescriptor,
    pub score: PonosScore,
}

impl ScoreRecord {
    pub fn new(content_id: impl Into<String>, context: ContextDescriptor, score: PonosScore) -> Self {
        Self { content_id: content_id.into(), context, score }
    }
}

impl From<ScoreRecord> for ScoreLine {
    fn from(r: ScoreRecord) -> Self {
        Self {
            content_id: r.content_id,
            context: r.context.community_id().to_string(),
            variant: r.score.variant(),
            value: r.score.value(),
            n_replies: r.score.n_replies(),
            error: r.score.error(),
            lambda: r.score.lambda(),
            classifier_id: r.score.classifier_id().map(str::to_string),
        }
    }
}

impl TryFrom<ScoreLine> for ScoreRecord {
    type Error = Error;

    fn try_from(l: ScoreLine) -> Result<Self> {
        let score =
            PonosScore::new(l.value, l.n_replies, l.error, l.variant, l.lambda, l.classifier_id)?;
        Ok(Self { content_id: l.content_id, context: ContextDescriptor::new(l.context)?, score })
    }
}

pub const INSUFFICIENT_REPLIES: &str = "insufficient replies";

/// Marker for a target that has replies, but fewer than the reliability bar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsufficientReplies {
    pub content_id: String,
    pub context: String,
    pub status: String,
    pub n_replies: usize,
}

impl InsufficientReplies {
    pub fn new(content_id: impl Into<String>, context: &ContextDescriptor, n_replies: usize) -> Self {
        Self {
            content_id: content_id.into(),
            context: context.community_id().to_string(),
            status: INSUFFICIENT_REPLIES.to_string(),
            n_replies,
        }
    }
}

/// One line of a score report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReportLine {
    Scored(ScoreRecord),
    Insufficient(InsufficientReplies),
}

impl ReportLine {
    pub fn parse(line: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::parse(e.to_string()))?;
        let parsed = if value.get("status").is_some() {
            serde_json::from_value(value).map(ReportLine::Insufficient)
        } else {
            serde_json::from_value(value).map(ReportLine::Scored)
        };
        parsed.map_err(|e| Error::parse(e.to_string()))
    }

    pub fn content_id(&self) -> &str {
        match self {
            Self::Scored(r) => &r.content_id,
            Self::Insufficient(r) => &r.content_id,
        }
    }
}

/// Serializes report lines as JSONL.
pub fn render_report(lines: &[ReportLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("report lines serialize"));
        out.push('\n');
    }
    out
}

/// Reads the scored lines of a JSONL score report; insufficient-reply markers are skipped.
pub fn read_score_report(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match ReportLine::parse(&line).map_err(|e| Error::parse_at(n + 1, e.to_string()))? {
            ReportLine::Scored(r) => out.push(r),
            ReportLine::Insufficient(_) => {}
        }
    }
    Ok(out)
}

fn count<R: HasPolarity>(reactions: &[R], polarity: SentimentPolarity) -> usize {
    reactions.iter().filter(|r| r.polarity() == polarity).count()
}
