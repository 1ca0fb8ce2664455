//! Classifier evaluation against assessor labels: binary F1 on negative
//! replies, and MAE/MSE between classifier-derived and gold PONOS per target.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CorpusStore;
use crate::metric::{ponos_basic, ScoreRecord};
use crate::pool::bounded_map;
use crate::sentiment::{classify_replies, ClassificationRequest, ReplyClassifier};
use crate::thread_model::{ReactionRecord, SentimentPolarity};

/// Classifier id recorded on scores derived from assessor labels.
pub const GOLD_ID: &str = "gold";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NegativeConfusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl NegativeConfusion {
    pub fn tally(predicted: &[SentimentPolarity], gold: &[SentimentPolarity]) -> Result<Self> {
        if predicted.len() != gold.len() {
            return Err(Error::ShapeError(format!(
                "{} predictions for {} gold labels",
                predicted.len(),
                gold.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            let p = p == SentimentPolarity::Negative;
            let g = g == SentimentPolarity::Negative;
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// `2TP / (2TP + FP + FN)`, 0 when there are no negatives on either side.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// Binary F1 with "negative" as the positive class.
pub fn f1_negative(predicted: &[SentimentPolarity], gold: &[SentimentPolarity]) -> Result<f64> {
    if gold.is_empty() && predicted.is_empty() {
        return Err(Error::EmptyInput("label vectors"));
    }
    Ok(NegativeConfusion::tally(predicted, gold)?.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreErrors {
    pub mae: f64,
    pub mse: f64,
}

/// Mean absolute and mean squared error between scores joined on content id.
pub fn score_errors(predicted: &[ScoreRecord], gold: &[ScoreRecord]) -> Result<ScoreErrors> {
    if predicted.is_empty() || gold.is_empty() {
        return Err(Error::EmptyInput("score lists"));
    }
    let mut by_id: HashMap<&str, &ScoreRecord> = HashMap::new();
    let mut dupes = Vec::new();
    for g in gold {
        if by_id.insert(g.content_id.as_str(), g).is_some() {
            dupes.push(g.content_id.clone());
        }
    }
    let mut seen = HashSet::new();
    let mut unmatched = Vec::new();
    let mut pairs = Vec::with_capacity(predicted.len());
    for p in predicted {
        if !seen.insert(p.content_id.as_str()) {
            dupes.push(p.content_id.clone());
            continue;
        }
        match by_id.get(p.content_id.as_str()) {
            Some(g) => pairs.push((p, *g)),
            None => unmatched.push(p.content_id.clone()),
        }
    }
    unmatched.extend(gold.iter().filter(|g| !seen.contains(g.content_id.as_str())).map(|g| g.content_id.clone()));
    unmatched.extend(dupes);
    if !unmatched.is_empty() {
        unmatched.sort();
        unmatched.dedup();
        return Err(Error::JoinError(unmatched));
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, g) in &pairs {
        if p.score.variant() != g.score.variant() {
            return Err(Error::VariantMismatch(format!(
                "{}: {} vs {}",
                p.content_id,
                p.score.variant(),
                g.score.variant()
            )));
        }
        let d = p.score.value() - g.score.value();
        abs += d.abs();
        sq += d * d;
    }
    let n = pairs.len() as f64;
    Ok(ScoreErrors { mae: abs / n, mse: sq / n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEvaluation {
    pub content_id: String,
    pub n_replies: usize,
    pub f1: f64,
    pub predicted_ponos: f64,
    pub gold_ponos: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classifier_id: String,
    pub n_targets: usize,
    pub n_replies: usize,
    /// F1 over all evaluated replies pooled together.
    pub f1: f64,
    pub mae: f64,
    pub mse: f64,
    pub per_target: Vec<TargetEvaluation>,
}

impl EvaluationReport {
    /// Aligned plain-text rendering.
    pub fn render_table(&self) -> String {
        let id_width = self
            .per_target
            .iter()
            .map(|t| t.content_id.chars().count())
            .chain(["content_id".len(), "ALL".len()])
            .max()
            .unwrap_or(10);
        let mut out = String::new();
        let _ = writeln!(out, "classifier: {}", self.classifier_id);
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>9}  {:>6}  {:>9}  {:>9}  {:>9}",
            "content_id", "n_replies", "f1", "predicted", "gold", "abs_error"
        );
        for t in &self.per_target {
            let _ = writeln!(
                out,
                "{:<id_width$}  {:>9}  {:>6.3}  {:>9.4}  {:>9.4}  {:>9.4}",
                t.content_id, t.n_replies, t.f1, t.predicted_ponos, t.gold_ponos, t.abs_error
            );
        }
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>9}  {:>6.3}  mae={:.4}  mse={:.4}  targets={}",
            "ALL", self.n_replies, self.f1, self.mae, self.mse, self.n_targets
        );
        out
    }
}

/// Runs `classifier` on every gold target and compares with the assessor labels.
///
/// Targets are evaluated on up to `workers` threads; any classifier error
/// aborts the whole evaluation.
pub fn evaluate_classifier(
    store: &CorpusStore,
    gold: &[ReactionRecord],
    classifier: &dyn ReplyClassifier,
    workers: usize,
) -> Result<EvaluationReport> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("gold reactions"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&ReactionRecord>> = HashMap::new();
    for r in gold {
        let entry = groups.entry(r.target_id()).or_default();
        if entry.is_empty() {
            order.push(r.target_id());
        }
        entry.push(r);
    }
    let jobs: Vec<(&str, Vec<&ReactionRecord>)> =
        order.iter().map(|id| (*id, groups.remove(id).expect("grouped"))).collect();

    let results = bounded_map(&jobs, workers, |(target_id, golds)| {
        let target = store
            .get(target_id)
            .ok_or_else(|| Error::MissingContent(target_id.to_string()))?;
        let replies = golds.iter().map(|g| g.reply().clone()).collect();
        let request = ClassificationRequest::from_store(store, target, replies)?;
        let predicted = classify_replies(&request, classifier)?;
        Ok::<_, Error>((target.clone(), golds.clone(), predicted))
    });

    let mut per_target = Vec::with_capacity(jobs.len());
    let mut all_pred = Vec::new();
    let mut all_gold = Vec::new();
    let mut pred_scores = Vec::new();
    let mut gold_scores = Vec::new();
    for result in results {
        let (target, golds, predicted) = result?;
        let p: Vec<_> = predicted.iter().map(|r| r.polarity()).collect();
        let g: Vec<_> = golds.iter().map(|r| r.polarity()).collect();
        let p_score = ponos_basic(&predicted, classifier.classifier_id())?;
        let g_score = ponos_basic(&golds, GOLD_ID)?;
        per_target.push(TargetEvaluation {
            content_id: target.id.clone(),
            n_replies: golds.len(),
            f1: f1_negative(&p, &g)?,
            predicted_ponos: p_score.value(),
            gold_ponos: g_score.value(),
            abs_error: (p_score.value() - g_score.value()).abs(),
        });
        pred_scores.push(ScoreRecord::new(&target.id, target.context.clone(), p_score));
        gold_scores.push(ScoreRecord::new(&target.id, target.context.clone(), g_score));
        all_pred.extend(p);
        all_gold.extend(g);
    }
    let errors = score_errors(&pred_scores, &gold_scores)?;
    Ok(EvaluationReport {
        classifier_id: classifier.classifier_id().to_string(),
        n_targets: per_target.len(),
        n_replies: all_gold.len(),
        f1: f1_negative(&all_pred, &all_gold)?,
        mae: errors.mae,
        mse: errors.mse,
        per_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thread_model::{ContextDescriptor, PonosScore, ScoreVariant};
    use proptest::prelude::*;
    use SentimentPolarity::*;

    const TOL: f64 = 1e-12;

    /// Precision/recall route, independent of the 2TP form used above.
    fn f1_oracle(p: &[SentimentPolarity], g: &[SentimentPolarity]) -> f64 {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for i in 0..p.len() {
            match (p[i] == Negative, g[i] == Negative) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    #[test]
    fn f1_examples() {
        let g = [Negative, Positive, Negative, Neutral];
        assert_eq!(f1_negative(&g, &g).unwrap(), 1.0);
        // TP=2 FP=1 FN=1
        let pred = [Negative, Negative, Negative, Neutral, Positive];
        let gold = [Negative, Negative, Positive, Negative, Positive];
        let c = NegativeConfusion::tally(&pred, &gold).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
        assert!((f1_negative(&pred, &gold).unwrap() - 2.0 / 3.0).abs() < TOL);
        assert_eq!(f1_negative(&[Neutral, Positive], &[Positive, Positive]).unwrap(), 0.0);
        assert!(matches!(f1_negative(&[Neutral], &[]), Err(Error::ShapeError(_))));
        assert!(f1_negative(&[], &[]).is_err());
    }

    #[test]
    fn f1_matches_confusion_oracle_exhaustively() {
        // every pair of label vectors of length <= 6 over the binary
        // negative / non-negative split, with the non-negative side
        // alternating neutral and positive
        for n in 1..=6usize {
            for pm in 0..(1u32 << n) {
                for gm in 0..(1u32 << n) {
                    let to_labels = |mask: u32| -> Vec<SentimentPolarity> {
                        (0..n)
                            .map(|i| if mask >> i & 1 == 1 { Negative } else if i % 2 == 0 { Neutral } else { Positive })
                            .collect()
                    };
                    let (p, g) = (to_labels(pm), to_labels(gm));
                    assert!((f1_negative(&p, &g).unwrap() - f1_oracle(&p, &g)).abs() < TOL);
                }
            }
        }
    }

    fn rec(id: &str, v: f64) -> ScoreRecord {
        // n_replies chosen so the basic error rule holds
        ScoreRecord::new(
            id,
            ContextDescriptor::new("sub").unwrap(),
            PonosScore::new(v, 4, 0.125, ScoreVariant::Basic, None, None).unwrap(),
        )
    }

    #[test]
    fn score_error_examples() {
        let p = [rec("a", 0.5), rec("b", 0.0)];
        assert_eq!(score_errors(&p, &p).unwrap(), ScoreErrors { mae: 0.0, mse: 0.0 });
        let g = [rec("b", 0.0), rec("a", 0.25)];
        let e = score_errors(&p, &g).unwrap();
        assert_eq!(e.mae, 0.125);
        assert_eq!(e.mse, 0.03125);
        let e = score_errors(&[rec("x", 1.0)], &[rec("x", 0.0)]).unwrap();
        assert_eq!((e.mae, e.mse), (1.0, 1.0));
    }

    #[test]
    fn score_error_join_failures() {
        let err = score_errors(&[rec("a", 0.5), rec("b", 0.0)], &[rec("a", 0.5), rec("c", 0.0)]).unwrap_err();
        assert!(matches!(err, Error::JoinError(ids) if ids == vec!["b".to_string(), "c".to_string()]));
        let net = ScoreRecord::new(
            "a",
            ContextDescriptor::new("sub").unwrap(),
            PonosScore::new(0.5, 4, 0.125, ScoreVariant::Net, None, None).unwrap(),
        );
        assert!(matches!(score_errors(&[net], &[rec("a", 0.5)]), Err(Error::VariantMismatch(_))));
        assert!(score_errors(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn mse_bounded_by_mae_and_permutation_invariant(
            pairs in prop::collection::vec((0usize..=4, 0usize..=4), 1..20),
            seed in any::<u64>(),
        ) {
            let p: Vec<_> = pairs.iter().enumerate().map(|(i, (a, _))| rec(&format!("t{i}"), *a as f64 / 4.0)).collect();
            let g: Vec<_> = pairs.iter().enumerate().map(|(i, (_, b))| rec(&format!("t{i}"), *b as f64 / 4.0)).collect();
            let e = score_errors(&p, &g).unwrap();
            prop_assert!(e.mse <= e.mae + TOL);
            let mut rotated = g.clone();
            rotated.rotate_left((seed as usize) % g.len());
            let e2 = score_errors(&p, &rotated).unwrap();
            prop_assert!((e.mae - e2.mae).abs() < TOL && (e.mse - e2.mse).abs() < TOL);
        }
    }
}
