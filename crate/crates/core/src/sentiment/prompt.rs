//! Prompt rendering for the remote classifier and parsing of its answers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClassificationRequest, ClassifierConfig};
use crate::error::{Error, Result};
use crate::template;
use crate::thread_model::AssessorLabel;

pub const DEFAULT_TEMPLATE: &str = include_str!("../../data/classifier_prompt.txt");
pub const DEFAULT_SYSTEM_MESSAGE: &str = include_str!("../../data/classifier_system.txt");

/// One labelled demonstration shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_title: Option<String>,
    pub comment: String,
    pub reply: String,
    pub label: AssessorLabel,
}

pub fn default_examples() -> Vec<FewShotExample> {
    let title = "City council votes to close the public library at 5pm";
    let comment = "Closing at 5 is going to hurt every kid who studies there after school.";
    [
        ("Exactly this, you said it better than I could.", AssessorLabel::ApprovalComment),
        ("Libraries deserve more funding, full stop.", AssessorLabel::ApprovalSubject),
        ("Does anyone know if the weekend hours change too?", AssessorLabel::Neutral),
        ("Nobody asked for your hot take, go touch grass.", AssessorLabel::CondemnationComment),
        ("That council never cared about those kids anyway.", AssessorLabel::CondemnationSubject),
    ]
    .into_iter()
    .map(|(reply, label)| FewShotExample {
        post_title: Some(title.to_string()),
        comment: comment.to_string(),
        reply: reply.to_string(),
        label,
    })
    .collect()
}

fn post_block(request: &ClassificationRequest) -> String {
    let mut lines = Vec::new();
    if let Some(t) = &request.post_title {
        lines.push(format!("Post title: {t}"));
    }
    if let Some(b) = &request.post_body {
        lines.push(format!("Post text: {b}"));
    }
    if let Some(d) = &request.post_image_desc {
        lines.push(format!("Post image description: {d}"));
    }
    if lines.is_empty() {
        "Post: (no post details)".to_string()
    } else {
        lines.join("\n")
    }
}

fn examples_block(examples: &[FewShotExample]) -> String {
    if examples.is_empty() {
        return "(none)".to_string();
    }
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut s = format!("Example {}\n", i + 1);
            if let Some(t) = &ex.post_title {
                s.push_str(&format!("Post title: {t}\n"));
            }
            s.push_str(&format!("Comment: {}\nReplies:\n[1] {}\nAnswer:\n1: {}", ex.comment, ex.reply, ex.label));
            s
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Renders the user message for one classification request.
///
/// Sections appear in the order of the template; the default template puts
/// the community, post details, comment, indexed replies, label set and
/// few-shot examples in that order. Replies are indexed from 1.
pub fn build_prompt(request: &ClassificationRequest, config: &ClassifierConfig) -> Result<String> {
    let replies = request
        .replies
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] {}", i + 1, r.body))
        .collect::<Vec<_>>()
        .join("\n");
    let labels =
        AssessorLabel::ALL.iter().map(|l| format!("- {l}")).collect::<Vec<_>>().join("\n");
    template::render(
        &config.prompt_template,
        &[
            ("community", request.context.community_id()),
            ("post", &post_block(request)),
            ("target", &request.target.body),
            ("replies", &replies),
            ("labels", &labels),
            ("examples", &examples_block(&config.few_shot_examples)),
        ],
    )
}

/// Splits `<index>: <text>` lines; other lines are skipped.
pub(crate) fn indexed_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().filter_map(|line| {
        let line = line.trim().trim_start_matches(['*', '-', ' ']);
        let (head, rest) = line.split_once(':')?;
        let head = head.trim().trim_start_matches('[').trim_end_matches(']').trim();
        let index = head.parse::<usize>().ok()?;
        Some((index, rest.trim()))
    })
}

fn normalize_label(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '*' | '`' | '.'))
        .trim()
        .to_lowercase()
}

/// Parses the model's answer into one label per reply, in reply order.
///
/// Every index from 1 to `n_replies` must carry a known label; a missing,
/// out-of-range, contradictory or unknown entry fails the whole answer.
pub fn parse_label_lines(text: &str, n_replies: usize) -> Result<Vec<AssessorLabel>> {
    let mut found: BTreeMap<usize, AssessorLabel> = BTreeMap::new();
    for (index, raw) in indexed_lines(text) {
        if index == 0 || index > n_replies {
            return Err(Error::UnparseableLabel(format!(
                "reply index {index} outside 1..={n_replies}"
            )));
        }
        let label: AssessorLabel = normalize_label(raw).parse().map_err(|_| {
            Error::UnparseableLabel(format!("reply {index}: {raw:?} is not an allowed label"))
        })?;
        if let Some(previous) = found.insert(index, label) {
            if previous != label {
                return Err(Error::UnparseableLabel(format!(
                    "reply {index} labelled both {previous:?} and {label:?}"
                )));
            }
        }
    }
    (1..=n_replies)
        .map(|i| {
            found
                .get(&i)
                .copied()
                .ok_or_else(|| Error::UnparseableLabel(format!("no label for reply {i}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::BackendKind;
    use crate::thread_model::{ContentItem, ContextDescriptor};

    fn request(n: usize, title: Option<&str>) -> ClassificationRequest {
        let ctx = ContextDescriptor::new("BlackPeopleTwitter").unwrap();
        let target = ContentItem::comment("c", "p", "the comment body", 0, ctx.clone());
        let replies = (0..n)
            .map(|i| ContentItem::comment(format!("r{i}"), "c", format!("reply number {i}"), 1, ctx.clone()))
            .collect();
        let mut req = ClassificationRequest::new(target, replies, ctx).unwrap();
        req.post_title = title.map(str::to_string);
        req
    }

    #[test]
    fn contains_sections_in_order() {
        let mut req = request(3, Some("T"));
        req.post_body = Some("post text here".into());
        let cfg = ClassifierConfig::new(BackendKind::Lexicon, "lex");
        let out = build_prompt(&req, &cfg).unwrap();
        let positions: Vec<usize> = [
            "BlackPeopleTwitter",
            "Post title: T",
            "post text here",
            "the comment body",
            "[1] reply number 0",
            "[2] reply number 1",
            "[3] reply number 2",
            "approval (comment)",
            "condemnation (subject)",
            "Example 1",
        ]
        .iter()
        .map(|needle| out.find(needle).unwrap_or_else(|| panic!("missing {needle}")))
        .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{positions:?}");
        assert!(!out.contains("[4]"));
        for ex in &cfg.few_shot_examples {
            assert!(out.contains(&ex.reply));
        }
    }

    #[test]
    fn deterministic() {
        let req = request(2, None);
        let cfg = ClassifierConfig::new(BackendKind::Lexicon, "lex");
        assert_eq!(build_prompt(&req, &cfg).unwrap(), build_prompt(&req, &cfg).unwrap());
    }

    #[test]
    fn template_errors() {
        let req = request(1, None);
        let mut cfg = ClassifierConfig::new(BackendKind::Lexicon, "lex");
        cfg.prompt_template = "{community} {post} {target} {replies} {labels} {examples} {mood}".into();
        assert!(matches!(build_prompt(&req, &cfg), Err(Error::TemplateError(_))));
        cfg.prompt_template = "{community} {target} {replies}".into();
        assert!(matches!(build_prompt(&req, &cfg), Err(Error::TemplateError(_))));
    }

    #[test]
    fn parses_labels() {
        let text = "Sure, here you go:\n1: condemnation (comment)\n2: \"Neutral\".\n3: approval (subject)";
        assert_eq!(
            parse_label_lines(text, 3).unwrap(),
            vec![AssessorLabel::CondemnationComment, AssessorLabel::Neutral, AssessorLabel::ApprovalSubject]
        );
        let shuffled = "2: neutral\n1: approval (comment)";
        assert_eq!(
            parse_label_lines(shuffled, 2).unwrap(),
            vec![AssessorLabel::ApprovalComment, AssessorLabel::Neutral]
        );
    }

    #[test]
    fn label_parse_failures() {
        for (text, n) in [
            ("1: neutral", 2),
            ("1: neutral\n2: furious", 2),
            ("1: neutral\n2: neutral\n3: neutral", 2),
            ("1: neutral\n1: approval (comment)", 1),
            ("", 1),
        ] {
            assert!(matches!(parse_label_lines(text, n), Err(Error::UnparseableLabel(_))), "{text:?}");
        }
    }
}
