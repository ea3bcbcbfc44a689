//! SQuAD-convention exact match and token F1, plus a coarse automatic error
//! categorization of wrong predictions.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::QaInstance;
use crate::diagnostics::{ItemContext, Metric};
use crate::error::{Error, Result};
use crate::lexmetrics::Bm25Params;
use crate::textproc::{normalize_answer, tokenize};

/// qa id → predicted answer string, the usual SQuAD predictions file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionSet(pub BTreeMap<String, String>);

impl PredictionSet {
    pub fn get(&self, id: &str) -> Option<&str> {
        self.0.get(id).map(String::as_str)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

impl FromIterator<(String, String)> for PredictionSet {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        PredictionSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Correct,
    HighOverlapWrongSentence,
    BoundaryError,
    /// Includes missing-inference and entity-type errors, which need
    /// semantics this tool does not model.
    OtherWrong,
}

pub const CATEGORY_NOTE: &str = "other_wrong also covers missing logical inference and entity type confusion, \
which cannot be detected lexically";

pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> Result<u8> {
    if golds.is_empty() {
        return Err(Error::NoGoldAnswers);
    }
    let p = normalize_answer(pred);
    Ok(golds.iter().any(|g| normalize_answer(g.as_ref()) == p) as u8)
}

fn token_f1(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return (pred.is_empty() && gold.is_empty()) as u8 as f64;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max over golds of the normalized-token F1.
pub fn f1_score<S: AsRef<str>>(pred: &str, golds: &[S]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::NoGoldAnswers);
    }
    let p = normalize_answer(pred);
    let pt: Vec<&str> = p.split_whitespace().collect();
    Ok(golds
        .iter()
        .map(|g| {
            let g = normalize_answer(g.as_ref());
            let gt: Vec<&str> = g.split_whitespace().collect();
            token_f1(&pt, &gt)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub qa_id: String,
    pub em: u8,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<ErrorCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub em: f64,
    pub f1: f64,
    /// Sorted by qa id.
    pub per_item: Vec<EvalItem>,
    /// Dataset ids with no prediction; scored 0.
    pub missing: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_counts: Option<BTreeMap<ErrorCategory, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_note: Option<String>,
}

impl EvalReport {
    pub fn table_row(&self, label: &str) -> String {
        format!("{label:<12} {:>7.2} {:>7.2}", self.em, self.f1)
    }

    pub fn format_table(&self, label: &str) -> String {
        let mut out = format!("{:<12} {:>7} {:>7}\n{}\n", "Model", "EM", "F1", self.table_row(label));
        if let Some(counts) = &self.category_counts {
            for (cat, n) in counts {
                let name = serde_json::to_value(cat).ok();
                let name = name.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
                out.push_str(&format!("  {name:<28} {n}\n"));
            }
        }
        out
    }
}

fn golds(item: &QaInstance) -> Vec<&str> {
    item.answers.iter().map(|a| a.text.as_str()).collect()
}

fn score_item(item: &QaInstance, preds: &PredictionSet) -> (u8, f64) {
    let golds = golds(item);
    match preds.get(&item.id) {
        Some(p) if !golds.is_empty() => (
            exact_match(p, &golds).unwrap_or(0),
            f1_score(p, &golds).unwrap_or(0.0),
        ),
        _ => (0, 0.0),
    }
}

fn aggregate(mut per_item: Vec<EvalItem>, missing: Vec<String>) -> EvalReport {
    per_item.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    let total = per_item.len();
    let (em, f1) = if total == 0 {
        (0.0, 0.0)
    } else {
        let hits = per_item.iter().filter(|i| i.em == 1).count();
        let f1_sum: f64 = per_item.iter().map(|i| i.f1).sum();
        (100.0 * hits as f64 / total as f64, 100.0 * f1_sum / total as f64)
    };
    let mut missing = missing;
    missing.sort();
    EvalReport {
        total,
        em,
        f1,
        per_item,
        missing,
        category_counts: None,
        category_note: None,
    }
}

fn missing_ids(items: &[QaInstance], preds: &PredictionSet) -> Vec<String> {
    items
        .iter()
        .filter(|i| preds.get(&i.id).is_none())
        .map(|i| i.id.clone())
        .collect()
}

/// EM/F1 over the dataset. Missing predictions score zero.
pub fn evaluate(items: &[QaInstance], preds: &PredictionSet) -> EvalReport {
    let per_item = items
        .par_iter()
        .map(|item| {
            let (em, f1) = score_item(item, preds);
            EvalItem {
                qa_id: item.id.clone(),
                em,
                f1,
                category: None,
            }
        })
        .collect();
    aggregate(per_item, missing_ids(items, preds))
}

/// Scalar offset of the first case-insensitive occurrence of `needle`.
pub fn find_case_insensitive(haystack: &str, needle: &str) -> Option<usize> {
    let fold = |c: char| c.to_lowercase().next().unwrap_or(c);
    let hay: Vec<char> = haystack.chars().map(fold).collect();
    let pat: Vec<char> = needle.trim().chars().map(fold).collect();
    if pat.is_empty() {
        return None;
    }
    hay.windows(pat.len()).position(|w| w == pat.as_slice())
}

pub fn categorize_item(
    item: &QaInstance,
    ctx: &ItemContext,
    pred: Option<&str>,
    metric: Metric,
    params: Bm25Params,
) -> ErrorCategory {
    let golds = golds(item);
    let Some(pred) = pred.filter(|_| !golds.is_empty()) else {
        return ErrorCategory::OtherWrong;
    };
    if exact_match(pred, &golds).unwrap_or(0) == 1 {
        return ErrorCategory::Correct;
    }
    if f1_score(pred, &golds).unwrap_or(0.0) > 0.0 {
        return ErrorCategory::BoundaryError;
    }
    let Some(pos) = find_case_insensitive(&ctx.context, pred) else {
        return ErrorCategory::OtherWrong;
    };
    let question = tokenize(&item.question);
    match (ctx.sentence_at(pos), ctx.top_sentence(&question, metric, params)) {
        (Some(s), Some((top, _))) if s == top && !ctx.sentence_has_answer(s, &item.answers) => {
            ErrorCategory::HighOverlapWrongSentence
        }
        _ => ErrorCategory::OtherWrong,
    }
}

pub fn categorize_errors(
    items: &[QaInstance],
    preds: &PredictionSet,
    metric: Metric,
    params: Bm25Params,
) -> Vec<(String, ErrorCategory)> {
    items
        .par_iter()
        .map(|item| {
            let ctx = ItemContext::new(item);
            (
                item.id.clone(),
                categorize_item(item, &ctx, preds.get(&item.id), metric, params),
            )
        })
        .collect()
}

/// [`evaluate`] with a category on every item.
pub fn evaluate_with_categories(
    items: &[QaInstance],
    preds: &PredictionSet,
    metric: Metric,
    params: Bm25Params,
) -> EvalReport {
    let per_item = items
        .par_iter()
        .map(|item| {
            let (em, f1) = score_item(item, preds);
            let ctx = ItemContext::new(item);
            EvalItem {
                qa_id: item.id.clone(),
                em,
                f1,
                category: Some(categorize_item(item, &ctx, preds.get(&item.id), metric, params)),
            }
        })
        .collect();
    let mut report = aggregate(per_item, missing_ids(items, preds));
    let mut counts = BTreeMap::new();
    for i in &report.per_item {
        if let Some(c) = i.category {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    report.category_counts = Some(counts);
    report.category_note = Some(CATEGORY_NOTE.to_string());
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{pilot_dataset, GoldAnswer};

    #[test]
    fn em_examples() {
        assert_eq!(exact_match("UDF", &["UDF"]).unwrap(), 1);
        assert_eq!(exact_match("the UDF", &["UDF"]).unwrap(), 1);
        assert_eq!(exact_match("MCP", &["UDF"]).unwrap(), 0);
        assert_eq!(exact_match("MCP", &["UDF", "mcp."]).unwrap(), 1);
        assert!(matches!(exact_match::<&str>("x", &[]), Err(Error::NoGoldAnswers)));
        assert!(matches!(f1_score::<&str>("x", &[]), Err(Error::NoGoldAnswers)));
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score("Todd Martin", &["Todd Martin"]).unwrap(), 1.0);
        let f = f1_score(
            "Bakili Muluzi of the United Democratic Front",
            &["United Democratic Front (UDF)"],
        )
        .unwrap();
        assert!((f - 0.6).abs() < 1e-12);
        assert_eq!(f1_score("MCP", &["UDF"]).unwrap(), 0.0);
        assert_eq!(f1_score("the", &["a"]).unwrap(), 1.0);
        assert_eq!(f1_score("the", &["UDF"]).unwrap(), 0.0);
    }

    #[test]
    fn f1_counts_multiset_overlap() {
        // pred "a a b" vs gold "a b b": overlap 2
        let f = f1_score("x x y", &["x y y"]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_predictions_score_zero() {
        let items = pilot_dataset().instances();
        let preds: PredictionSet = items[1..]
            .iter()
            .map(|i| (i.id.clone(), i.answers[0].text.clone()))
            .collect();
        let r = evaluate(&items, &preds);
        assert_eq!(r.missing, vec![items[0].id.clone()]);
        assert!((r.em - 800.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_error_from_span_variant() {
        let passage = "They withdrew from a zone around the eastern Bosnian enclave of Gorazde on Sunday.";
        let item = QaInstance {
            id: "b".into(),
            question: "Where in Bosnia was the exclusion zone?".into(),
            passages: vec![passage.into()],
            answers: vec![GoldAnswer {
                text: "eastern Bosnian enclave of Gorazde".into(),
                char_start: Some(37),
            }],
        };
        let ctx = ItemContext::new(&item);
        let cat = |p: &str| categorize_item(&item, &ctx, Some(p), Metric::Jaccard, Bm25Params::default());
        assert_eq!(cat("eastern Bosnian enclave"), ErrorCategory::BoundaryError);
        assert_eq!(cat("Gorazde"), ErrorCategory::BoundaryError);
        assert_eq!(cat("eastern Bosnian enclave of Gorazde"), ErrorCategory::Correct);
        // top sentence, but it also holds the gold answer
        assert_eq!(cat("Sunday"), ErrorCategory::OtherWrong);
    }

    #[test]
    fn high_overlap_wrong_sentence() {
        let passage = "The UN is the most powerful intergovernmental organisation in the world. \
                       Envoy Yasushi Akashi called a meeting of all parties.";
        let item = QaInstance {
            id: "h".into(),
            question: "Who was the envoy of the most powerful intergovernmental organisation in the world?".into(),
            passages: vec![passage.into()],
            answers: vec![GoldAnswer {
                text: "Yasushi Akashi".into(),
                char_start: passage.find("Yasushi Akashi"),
            }],
        };
        let ctx = ItemContext::new(&item);
        for m in Metric::ALL {
            assert_eq!(
                categorize_item(&item, &ctx, Some("The UN"), m, Bm25Params::default()),
                ErrorCategory::HighOverlapWrongSentence,
                "{m}"
            );
        }
        // not locatable in the passage
        assert_eq!(
            categorize_item(&item, &ctx, Some("NATO"), Metric::Jaccard, Bm25Params::default()),
            ErrorCategory::OtherWrong
        );
        assert_eq!(
            categorize_item(&item, &ctx, None, Metric::Jaccard, Bm25Params::default()),
            ErrorCategory::OtherWrong
        );
    }

    #[test]
    fn categories_match_em() {
        let items = pilot_dataset().instances();
        let preds: PredictionSet = items
            .iter()
            .enumerate()
            .map(|(n, i)| {
                let p = if n % 2 == 0 { i.answers[0].text.clone() } else { "Sampras".to_string() };
                (i.id.clone(), p)
            })
            .collect();
        let r = evaluate_with_categories(&items, &preds, Metric::Tfidf, Bm25Params::default());
        for it in &r.per_item {
            assert_eq!(it.category == Some(ErrorCategory::Correct), it.em == 1);
        }
        assert_eq!(r.category_counts.as_ref().unwrap().values().sum::<usize>(), 9);
        let cats = categorize_errors(&items, &preds, Metric::Tfidf, Bm25Params::default());
        assert_eq!(cats.len(), 9);
    }

    #[test]
    fn case_insensitive_search() {
        assert_eq!(find_case_insensitive("Hello World", "world"), Some(6));
        assert_eq!(find_case_insensitive("Zürich ÜBER", "über"), Some(7));
        assert_eq!(find_case_insensitive("abc", "  "), None);
    }
}
