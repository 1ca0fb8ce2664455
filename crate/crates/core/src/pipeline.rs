//! Batch scoring of a stored corpus.

use crate::error::{Error, Result};
use crate::ingest::{select_test_set, CorpusStore};
use crate::metric::{
    ponos_basic, ponos_net, ponos_time_weighted, InsufficientReplies, ReportLine, ScoreRecord,
};
use crate::pool::bounded_map;
use crate::sentiment::{classify_replies, ClassificationRequest, ReplyClassifier};
use crate::thread_model::{ContentItem, PonosScore, ReactionRecord, ScoreVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringOptions {
    pub variant: ScoreVariant,
    /// Decay rate for the weighted variant; 0 weights every reply equally.
    pub lambda: Option<f64>,
    pub min_replies: usize,
    pub max_replies: usize,
    pub workers: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            variant: ScoreVariant::Basic,
            lambda: None,
            min_replies: crate::ingest::DEFAULT_MIN_REPLIES,
            max_replies: crate::ingest::DEFAULT_MAX_REPLIES,
            workers: 1,
        }
    }
}

impl ScoringOptions {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_some() && self.variant != ScoreVariant::Weighted {
            return Err(Error::InvalidConfig(format!(
                "lambda only applies to the weighted variant, not {}",
                self.variant
            )));
        }
        if let Some(l) = self.lambda {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::InvalidLambda(l));
            }
        }
        Ok(())
    }
}

/// Scores one classified reply set with the requested variant.
///
/// The weighted variant decays from the newest reply, so the most recent
/// reaction always has weight 1.
pub fn score_reactions(
    reactions: &[ReactionRecord],
    variant: ScoreVariant,
    lambda: Option<f64>,
    classifier_id: &str,
) -> Result<PonosScore> {
    match variant {
        ScoreVariant::Basic => ponos_basic(reactions, classifier_id),
        ScoreVariant::Net => ponos_net(reactions, classifier_id),
        ScoreVariant::Weighted => {
            let reference = reactions
                .iter()
                .map(|r| r.reply().created_at)
                .max()
                .ok_or(Error::NoReplies)?;
            let timed: Vec<_> = reactions.iter().map(|r| (r, r.reply().created_at)).collect();
            ponos_time_weighted(&timed, reference, lambda.unwrap_or(0.0), classifier_id)
        }
    }
}

/// Scores every eligible target in `store`.
///
/// Targets with fewer than `min_replies` replies (but at least one) yield an
/// insufficient-replies line instead of a score. Lines are ordered by target id.
pub fn score_store(
    store: &CorpusStore,
    classifier: &dyn ReplyClassifier,
    options: &ScoringOptions,
) -> Result<Vec<ReportLine>> {
    options.validate()?;
    let selected = select_test_set(store, options.min_replies, options.max_replies)?;
    let scored = bounded_map(&selected, options.workers, |(target, replies)| {
        score_target(store, classifier, options, target, replies.clone())
    });
    let mut lines = scored
        .into_iter()
        .map(|r| r.map(ReportLine::Scored))
        .collect::<Result<Vec<_>>>()?;
    for target in store.reply_targets() {
        let n = store.replies_of(&target.id).len();
        if n < options.min_replies {
            lines.push(ReportLine::Insufficient(InsufficientReplies::new(
                &target.id,
                &target.context,
                n,
            )));
        }
    }
    lines.sort_by(|a, b| a.content_id().cmp(b.content_id()));
    Ok(lines)
}

fn score_target(
    store: &CorpusStore,
    classifier: &dyn ReplyClassifier,
    options: &ScoringOptions,
    target: &ContentItem,
    replies: Vec<ContentItem>,
) -> Result<ScoreRecord> {
    let request = ClassificationRequest::from_store(store, target, replies)?;
    let reactions = classify_replies(&request, classifier)?;
    let score = score_reactions(&reactions, options.variant, options.lambda, classifier.classifier_id())?;
    Ok(ScoreRecord::new(&target.id, target.context.clone(), score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::LexiconClassifier;
    use crate::thread_model::ContextDescriptor;

    fn store() -> CorpusStore {
        let ctx = ContextDescriptor::new("town").unwrap();
        let mut items = vec![ContentItem::post("p", "", 0, ctx.clone()).with_title("Library hours")];
        let bodies = ["this is awful", "great idea", "terrible plan", "ok", "love it"];
        for (i, b) in bodies.iter().enumerate() {
            items.push(ContentItem::comment(format!("c{i}"), "p", *b, 10 + i as i64, ctx.clone()));
        }
        items.push(ContentItem::comment("r0", "c0", "awful indeed", 50, ctx.clone()));
        CorpusStore::from_items(ctx, items).unwrap()
    }

    #[test]
    fn scores_and_marks_insufficient() {
        let s = store();
        let lines = score_store(&s, &LexiconClassifier::new("lex"), &ScoringOptions::default()).unwrap();
        assert_eq!(lines.len(), 2);
        match &lines[0] {
            ReportLine::Insufficient(m) => assert_eq!((m.content_id.as_str(), m.n_replies), ("c0", 1)),
            other => panic!("unexpected {other:?}"),
        }
        match &lines[1] {
            ReportLine::Scored(r) => {
                assert_eq!(r.content_id, "p");
                assert_eq!(r.score.n_replies(), 5);
                assert_eq!(r.score.value(), 0.4);
                assert_eq!(r.score.classifier_id(), Some("lex"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = store();
        let seq = score_store(&s, &LexiconClassifier::new("lex"), &ScoringOptions::default()).unwrap();
        let par = score_store(
            &s,
            &LexiconClassifier::new("lex"),
            &ScoringOptions { workers: 8, ..Default::default() },
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn lambda_requires_weighted() {
        let opts = ScoringOptions { variant: ScoreVariant::Net, lambda: Some(0.1), ..Default::default() };
        assert!(matches!(
            score_store(&store(), &LexiconClassifier::new("lex"), &opts),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn weighted_with_zero_lambda_equals_basic() {
        let s = store();
        let opts = ScoringOptions { variant: ScoreVariant::Weighted, lambda: Some(0.0), ..Default::default() };
        let lines = score_store(&s, &LexiconClassifier::new("lex"), &opts).unwrap();
        let ReportLine::Scored(r) = &lines[1] else { panic!() };
        assert_eq!(r.score.value(), 0.4);
        assert_eq!(r.score.lambda(), Some(0.0));
    }
}
