//! Sentence-retrieval diagnostics: how often the passage sentence most
//! lexically similar to the question contains the gold answer.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{GoldAnswer, QaInstance};
use crate::error::{Error, Result};
use crate::lexmetrics::{bm25, build_corpus_stats, cosine, jaccard, tfidf_vector, Bm25Params, CorpusStats};
use crate::textproc::{char_len, normalize_answer, tokenize, SentenceSpan, TokenizedText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Jaccard,
    Tfidf,
    Bm25,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Jaccard, Metric::Tfidf, Metric::Bm25];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::Tfidf => "tfidf",
            Metric::Bm25 => "bm25",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Jaccard => "Jaccard",
            Metric::Tfidf => "TF-IDF",
            Metric::Bm25 => "BM25",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jaccard" => Ok(Metric::Jaccard),
            "tfidf" | "tf-idf" => Ok(Metric::Tfidf),
            "bm25" => Ok(Metric::Bm25),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

/// Score every sentence against the question.
pub fn score_sentences(
    question: &TokenizedText,
    sentences: &[TokenizedText],
    metric: Metric,
    stats: &CorpusStats,
    params: Bm25Params,
) -> Vec<f64> {
    match metric {
        Metric::Jaccard => sentences.iter().map(|s| jaccard(question, s)).collect(),
        Metric::Tfidf => {
            let q = tfidf_vector(question, stats);
            sentences
                .iter()
                .map(|s| cosine(&q, &tfidf_vector(s, stats)))
                .collect()
        }
        Metric::Bm25 => sentences
            .iter()
            .map(|s| bm25(question, s, stats, params))
            .collect(),
    }
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax_first(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

pub fn top_sentence(
    question: &TokenizedText,
    passage: &str,
    sentences: &[SentenceSpan],
    metric: Metric,
    stats: &CorpusStats,
    params: Bm25Params,
) -> Result<(usize, f64)> {
    let toks: Vec<TokenizedText> = sentences.iter().map(|s| tokenize(s.text(passage))).collect();
    argmax_first(&score_sentences(question, &toks, metric, stats, params)).ok_or(Error::EmptyPassage)
}

/// Offset overlap when the gold offset is known, normalized substring match
/// otherwise.
pub fn contains_answer(passage: &str, sentence: &SentenceSpan, answer: &GoldAnswer) -> bool {
    match answer.char_start {
        Some(start) => {
            let end = start + char_len(&answer.text).max(1);
            start < sentence.char_end && end > sentence.char_start
        }
        None => {
            let needle = normalize_answer(&answer.text);
            !needle.is_empty() && normalize_answer(sentence.text(passage)).contains(&needle)
        }
    }
}

/// Per-item scoring context: the joined passages, their sentences and the
/// sentence-level corpus statistics that tf-idf and BM25 use.
pub struct ItemContext {
    pub context: String,
    pub sentences: Vec<SentenceSpan>,
    pub sentence_tokens: Vec<TokenizedText>,
    pub stats: Option<CorpusStats>,
}

impl ItemContext {
    pub fn new(item: &QaInstance) -> Self {
        let context = item.context();
        let sentences = item.sentences();
        let sentence_tokens: Vec<TokenizedText> =
            sentences.iter().map(|s| tokenize(s.text(&context))).collect();
        let stats = build_corpus_stats(&sentence_tokens).ok();
        Self {
            context,
            sentences,
            sentence_tokens,
            stats,
        }
    }

    pub fn top_sentence(&self, question: &TokenizedText, metric: Metric, params: Bm25Params) -> Option<(usize, f64)> {
        let stats = self.stats.as_ref()?;
        argmax_first(&score_sentences(question, &self.sentence_tokens, metric, stats, params))
    }

    pub fn sentence_has_answer(&self, index: usize, answers: &[GoldAnswer]) -> bool {
        answers
            .iter()
            .any(|a| contains_answer(&self.context, &self.sentences[index], a))
    }

    /// Sentence holding scalar offset `pos`.
    pub fn sentence_at(&self, pos: usize) -> Option<usize> {
        self.sentences
            .iter()
            .position(|s| s.char_start <= pos && pos < s.char_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalItem {
    pub qa_id: String,
    pub top_sentence_index: Option<usize>,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub metric: Metric,
    pub total: usize,
    pub hits: usize,
    pub rate: f64,
    /// Sorted by qa id.
    pub per_item: Vec<RetrievalItem>,
}

pub fn diagnose_item(item: &QaInstance, metric: Metric, params: Bm25Params) -> RetrievalItem {
    let ctx = ItemContext::new(item);
    let question = tokenize(&item.question);
    let top = ctx.top_sentence(&question, metric, params).map(|(i, _)| i);
    RetrievalItem {
        qa_id: item.id.clone(),
        top_sentence_index: top,
        hit: top.is_some_and(|i| ctx.sentence_has_answer(i, &item.answers)),
    }
}

pub fn retrieval_rate(items: &[QaInstance], metric: Metric, params: Bm25Params) -> RetrievalReport {
    let mut per_item: Vec<RetrievalItem> = items
        .par_iter()
        .map(|item| diagnose_item(item, metric, params))
        .collect();
    per_item.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    let total = per_item.len();
    let hits = per_item.iter().filter(|i| i.hit).count();
    RetrievalReport {
        metric,
        total,
        hits,
        rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        per_item,
    }
}

/// One line per metric, percentages to two decimals.
pub fn format_table(dataset_label: &str, reports: &[RetrievalReport]) -> String {
    let mut out = format!("{:<8} {:>10} {:>10}\n", "Metric", dataset_label, "hits");
    for r in reports {
        out.push_str(&format!(
            "{:<8} {:>9.2}% {:>10}\n",
            r.metric.label(),
            r.rate * 100.0,
            format!("{}/{}", r.hits, r.total)
        ));
    }
    out
}

/// Serialized form shared by the CLI and the HTTP service.
pub fn report_json<T: Serialize>(report: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::pilot_dataset;
    use crate::textproc::split_sentences;

    fn instance(id: &str, question: &str, passage: &str, answer: &str) -> QaInstance {
        QaInstance {
            id: id.into(),
            question: question.into(),
            passages: vec![passage.into()],
            answers: vec![GoldAnswer {
                text: answer.into(),
                char_start: passage.find(answer).map(|b| passage[..b].chars().count()),
            }],
        }
    }

    fn top(question: &str, passage: &str, metric: Metric) -> (usize, f64) {
        let spans = split_sentences(passage);
        let toks: Vec<_> = spans.iter().map(|s| tokenize(s.text(passage))).collect();
        let stats = build_corpus_stats(&toks).unwrap();
        top_sentence(&tokenize(question), passage, &spans, metric, &stats, Bm25Params::default()).unwrap()
    }

    const PASSAGE: &str = "Alpha beta gamma. Delta epsilon zeta. Eta theta iota. Kappa lambda mu nu. Xi omicron pi.";

    #[test]
    fn one_sentence_forced() {
        for m in Metric::ALL {
            assert_eq!(top("anything", "Only one sentence here.", m).0, 0);
        }
    }

    #[test]
    fn verbatim_copy_wins() {
        for m in Metric::ALL {
            assert_eq!(top("Kappa lambda mu nu.", PASSAGE, m).0, 3, "{m}");
        }
    }

    #[test]
    fn zero_scores_tie_to_first() {
        for m in Metric::ALL {
            assert_eq!(top("unrelated words", PASSAGE, m), (0, 0.0));
        }
    }

    #[test]
    fn empty_passage_errors() {
        let stats = build_corpus_stats(&[tokenize("x")]).unwrap();
        assert!(matches!(
            top_sentence(&tokenize("q"), "", &[], Metric::Jaccard, &stats, Bm25Params::default()),
            Err(Error::EmptyPassage)
        ));
    }

    #[test]
    fn contains_answer_rules() {
        let passage = "Banda lost. Bakili Muluzi of the United Democratic Front (UDF) won.";
        let spans = split_sentences(passage);
        let span_in_second = GoldAnswer {
            text: "Bakili Muluzi".into(),
            char_start: Some(12),
        };
        assert!(contains_answer(passage, &spans[1], &span_in_second));
        assert!(!contains_answer(passage, &spans[0], &span_in_second));
        let udf = GoldAnswer {
            text: "UDF".into(),
            char_start: None,
        };
        assert!(contains_answer(passage, &spans[1], &udf));
        assert!(!contains_answer(passage, &spans[0], &udf));
    }

    #[test]
    fn perfect_fixture_rate() {
        let items = vec![
            instance("1", "Where is gamma?", PASSAGE, "gamma"),
            instance("2", "Which comes after lambda?", PASSAGE, "mu"),
            instance("3", "What follows omicron?", PASSAGE, "pi"),
        ];
        for m in Metric::ALL {
            let r = retrieval_rate(&items, m, Bm25Params::default());
            assert_eq!((r.total, r.hits, r.rate), (3, 3, 1.0), "{m}");
        }
    }

    #[test]
    fn report_order_free() {
        let mut items = pilot_dataset().instances();
        let a = retrieval_rate(&items, Metric::Bm25, Bm25Params::default());
        items.reverse();
        let b = retrieval_rate(&items, Metric::Bm25, Bm25Params::default());
        assert_eq!(a, b);
        assert_eq!(a.per_item.len(), a.total);
    }

    #[test]
    fn gold_sentence_as_question_hits() {
        for mut item in pilot_dataset().instances() {
            let ctx = ItemContext::new(&item);
            let pos = item.answers[0].char_start.unwrap();
            let s = ctx.sentence_at(pos).unwrap();
            item.question = ctx.sentences[s].text(&ctx.context).to_string();
            for m in Metric::ALL {
                assert!(diagnose_item(&item, m, Bm25Params::default()).hit, "{} {m}", item.id);
            }
        }
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("TFIDF".parse::<Metric>().unwrap(), Metric::Tfidf);
        assert!("cosine".parse::<Metric>().is_err());
    }

    #[test]
    fn table_layout() {
        let r = retrieval_rate(&pilot_dataset().instances(), Metric::Jaccard, Bm25Params::default());
        let t = format_table("ParallelQA", &[r]);
        assert!(t.lines().nth(1).unwrap().starts_with("Jaccard"));
        assert!(t.contains("11.11%"));
    }
}
