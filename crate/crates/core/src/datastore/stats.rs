use serde::Serialize;

use super::ParallelQaDataset;
use crate::error::{Error, Result};
use crate::textproc::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub num_pairs: usize,
    pub num_qas: usize,
    pub num_answers: usize,
    pub mean_answer_len_tokens: f64,
    /// Capitalization heuristic, not an NER model.
    pub named_entity_answer_rate: f64,
    pub named_entity_rate_is_approximate: bool,
    /// Answer counts located in passage a and passage b.
    pub answers_per_passage_index: [usize; 2],
}

/// An answer counts as a named entity when at least half of its tokens are
/// capitalized or numeric. Answers are verbatim passage spans, so the
/// surface casing is the in-passage casing.
pub fn looks_like_named_entity(answer: &str) -> bool {
    let t = tokenize(answer);
    if t.is_empty() {
        return false;
    }
    let marked = t
        .tokens
        .iter()
        .filter(|tok| {
            tok.surface.chars().next().is_some_and(char::is_uppercase)
                || tok.surface.chars().all(|c| c.is_ascii_digit())
        })
        .count();
    2 * marked >= t.len()
}

pub fn compute_stats(dataset: &ParallelQaDataset) -> Result<DatasetStats> {
    let answers: Vec<_> = dataset
        .pairs
        .iter()
        .flat_map(|p| p.qas.iter())
        .flat_map(|qa| qa.answers.iter())
        .collect();
    let num_qas = dataset.num_qas();
    if num_qas == 0 || answers.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total_tokens: usize = answers.iter().map(|a| tokenize(&a.text).len()).sum();
    let ne = answers.iter().filter(|a| looks_like_named_entity(&a.text)).count();
    let mut per_index = [0usize; 2];
    for a in &answers {
        if let Some(slot) = per_index.get_mut(a.passage_index) {
            *slot += 1;
        }
    }
    Ok(DatasetStats {
        num_pairs: dataset.pairs.len(),
        num_qas,
        num_answers: answers.len(),
        mean_answer_len_tokens: total_tokens as f64 / answers.len() as f64,
        named_entity_answer_rate: ne as f64 / answers.len() as f64,
        named_entity_rate_is_approximate: true,
        answers_per_passage_index: per_index,
    })
}
