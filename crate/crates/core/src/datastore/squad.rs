//! Read-only SQuAD v1.1 input.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GoldAnswer, QaInstance};
use crate::error::{Error, Result};

const REPAIR_WINDOW: usize = 5;

#[derive(Deserialize)]
struct SquadFile {
    #[serde(default)]
    version: Option<String>,
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    #[serde(default)]
    title: String,
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<Qa>,
}

#[derive(Deserialize)]
struct Qa {
    id: String,
    question: String,
    answers: Vec<Answer>,
}

#[derive(Deserialize)]
struct Answer {
    text: String,
    answer_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarningKind {
    /// Offset moved to the nearest verbatim occurrence.
    Repaired { from: usize, to: usize },
    /// Text occurs in the context, but not within the repair window.
    OffsetUnrecoverable { answer_start: usize },
    /// Text does not occur in the context at all; the item is flagged.
    AnswerNotInContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadWarning {
    pub qa_id: String,
    pub answer_index: usize,
    #[serde(flatten)]
    pub kind: WarningKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SquadItem {
    pub id: String,
    pub title: String,
    pub question: String,
    pub context: String,
    pub answers: Vec<GoldAnswer>,
    /// False when some answer text is missing from the context.
    pub valid: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SquadDataset {
    pub version: Option<String>,
    pub items: Vec<SquadItem>,
    pub warnings: Vec<LoadWarning>,
}

impl SquadDataset {
    pub fn instances(&self) -> Vec<QaInstance> {
        self.items
            .iter()
            .map(|it| QaInstance {
                id: it.id.clone(),
                question: it.question.clone(),
                passages: vec![it.context.clone()],
                answers: it.answers.clone(),
            })
            .collect()
    }

    pub fn invalid_count(&self) -> usize {
        self.items.iter().filter(|i| !i.valid).count()
    }
}

fn matches_at(context: &[char], answer: &[char], start: usize) -> bool {
    context.get(start..start + answer.len()) == Some(answer)
}

/// Exact offset, else nearest verbatim occurrence within the window (earlier
/// position wins a distance tie).
fn locate(context: &[char], answer: &[char], start: usize) -> Option<usize> {
    (0..=REPAIR_WINDOW).find_map(|d| {
        [start.checked_sub(d), Some(start + d)]
            .into_iter()
            .flatten()
            .find(|&s| matches_at(context, answer, s))
    })
}

fn occurs(context: &[char], answer: &[char]) -> bool {
    !answer.is_empty() && context.windows(answer.len()).any(|w| w == answer)
}

pub fn parse_squad(json: &str) -> Result<SquadDataset> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let file: SquadFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let mut out = SquadDataset {
        version: file.version,
        ..Default::default()
    };
    for article in file.data {
        for para in article.paragraphs {
            let chars: Vec<char> = para.context.chars().collect();
            for qa in para.qas {
                let mut valid = true;
                let mut answers = Vec::with_capacity(qa.answers.len());
                for (i, a) in qa.answers.iter().enumerate() {
                    let ans: Vec<char> = a.text.chars().collect();
                    let located = locate(&chars, &ans, a.answer_start);
                    let warn = |kind| LoadWarning {
                        qa_id: qa.id.clone(),
                        answer_index: i,
                        kind,
                    };
                    match located {
                        Some(s) if s == a.answer_start => {}
                        Some(s) => out.warnings.push(warn(WarningKind::Repaired {
                            from: a.answer_start,
                            to: s,
                        })),
                        None if occurs(&chars, &ans) => {
                            out.warnings.push(warn(WarningKind::OffsetUnrecoverable {
                                answer_start: a.answer_start,
                            }))
                        }
                        None => {
                            valid = false;
                            out.warnings.push(warn(WarningKind::AnswerNotInContext));
                        }
                    }
                    answers.push(GoldAnswer {
                        text: a.text.clone(),
                        char_start: located,
                    });
                }
                out.items.push(SquadItem {
                    id: qa.id,
                    title: article.title.clone(),
                    question: qa.question,
                    context: para.context.clone(),
                    answers,
                    valid,
                });
            }
        }
    }
    Ok(out)
}

pub fn load_squad(path: &Path) -> Result<SquadDataset> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_squad(&s)
}
