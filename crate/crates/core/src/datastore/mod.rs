//! Dataset schemas, validation, statistics and the annotation journal.
//!
//! The ParallelQA file format (`"version": "pqa-1"`) is a single JSON
//! document. All answer offsets are Unicode scalar-value indices into the
//! passage string they point at.

mod journal;
mod squad;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::{char_len, char_slice, split_sentences, tokenize, SentenceSpan, SourceKind};

pub use journal::{AnnotationStore, JournalRecord, Receipt, JOURNAL_FILE};
pub use squad::{load_squad, parse_squad, LoadWarning, SquadDataset, SquadItem, WarningKind};
pub use stats::{compute_stats, DatasetStats};

pub const PQA_VERSION: &str = "pqa-1";
pub const MAX_ANSWER_TOKENS: usize = 50;

const PILOT_FIXTURE: &str = include_str!("../../assets/fixtures/pilot_pairs.json");
const GUIDELINES: &str = include_str!("../../assets/guidelines.md");

/// Annotator guidelines shipped with the tool.
pub fn guidelines() -> &'static str {
    GUIDELINES
}

/// The three example pairs (nine QA items) bundled with the crate.
pub fn pilot_dataset() -> ParallelQaDataset {
    ParallelQaDataset::from_json(PILOT_FIXTURE).expect("bundled fixture is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceType {
    Referential,
    Figurative,
    PartWhole,
    Numeric,
    Lexical,
    Denotation,
    Spatial,
    Temporal,
}

/// One row of the inference-type taxonomy, as served to annotators.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceTypeInfo {
    pub name: InferenceType,
    pub meaning: &'static str,
    pub example: &'static str,
    pub needs: &'static str,
}

impl InferenceType {
    pub const ALL: [InferenceType; 8] = [
        InferenceType::Referential,
        InferenceType::Figurative,
        InferenceType::PartWhole,
        InferenceType::Numeric,
        InferenceType::Lexical,
        InferenceType::Denotation,
        InferenceType::Spatial,
        InferenceType::Temporal,
    ];

    pub fn info(self) -> InferenceTypeInfo {
        use InferenceType::*;
        let (meaning, example, needs) = match self {
            Referential => (
                "coreference and referring expressions",
                "the author of the letter = the prime minister",
                "a link from the expression to the entity it denotes",
            ),
            Figurative => (
                "metaphor and idiom",
                "a baseline slogging match = a dull, defensive game",
                "knowledge of common figures of speech",
            ),
            PartWhole => (
                "inclusion and hierarchy",
                "a college is part of a university",
                "an ontology of part-of and is-a relations",
            ),
            Numeric => (
                "units and arithmetic",
                "two years after 1970 is 1972",
                "unit conversion and basic operations",
            ),
            Lexical => (
                "word sense from context",
                "a 'seed' in a tennis draw is a ranked player",
                "contextual cues such as neighbouring words or entity types",
            ),
            Denotation => (
                "conventional meaning of an expression",
                "a white flag signals surrender",
                "world knowledge plus context",
            ),
            Spatial => (
                "reasoning about place",
                "Harare is in Zimbabwe, which is in Africa",
                "world knowledge plus containment rules",
            ),
            Temporal => (
                "reasoning about time",
                "a 1997 coup came after the 1993 elections",
                "world knowledge plus ordering rules",
            ),
        };
        InferenceTypeInfo {
            name: self,
            meaning,
            example,
            needs,
        }
    }

    pub fn taxonomy() -> Vec<InferenceTypeInfo> {
        Self::ALL.iter().map(|t| t.info()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub source_kind: SourceKind,
    pub origin_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub passage_index: usize,
    pub char_start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    pub answers: Vec<AnswerSpan>,
    pub inference_type: InferenceType,
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassagePair {
    pub id: String,
    pub passage_a: Passage,
    pub passage_b: Passage,
    #[serde(default)]
    pub qas: Vec<QaItem>,
}

impl PassagePair {
    pub fn passage(&self, index: usize) -> Option<&Passage> {
        match index {
            0 => Some(&self.passage_a),
            1 => Some(&self.passage_b),
            _ => None,
        }
    }

    /// Pair-level checks (QA items are validated separately).
    pub fn check(&self) -> Result<()> {
        if self.passage_a.text.trim().is_empty() || self.passage_b.text.trim().is_empty() {
            return Err(Error::InvalidDataset(format!("pair {}: empty passage text", self.id)));
        }
        if self.passage_a.origin_id == self.passage_b.origin_id {
            return Err(Error::InvalidDataset(format!(
                "pair {}: both passages come from {}",
                self.id, self.passage_a.origin_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelQaDataset {
    pub version: String,
    pub pairs: Vec<PassagePair>,
}

impl ParallelQaDataset {
    pub fn new(pairs: Vec<PassagePair>) -> Self {
        Self {
            version: PQA_VERSION.to_string(),
            pairs,
        }
    }

    /// Parse and validate a `pqa-1` document.
    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let ds: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        ds.check()?;
        Ok(ds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn check(&self) -> Result<()> {
        if self.version != PQA_VERSION {
            return Err(Error::InvalidDataset(format!("unsupported version {:?}", self.version)));
        }
        let mut pair_ids = HashSet::new();
        let mut qa_ids = HashSet::new();
        for pair in &self.pairs {
            if !pair_ids.insert(pair.id.as_str()) {
                return Err(Error::DuplicateId(pair.id.clone()));
            }
            pair.check()?;
            for qa in &pair.qas {
                if !qa_ids.insert(qa.id.as_str()) {
                    return Err(Error::DuplicateId(qa.id.clone()));
                }
                let violations = validate_annotation(pair, qa);
                if !violations.is_empty() {
                    return Err(Error::InvalidDataset(format!(
                        "qa {}: {}",
                        qa.id,
                        violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ")
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pair(&self, id: &str) -> Option<&PassagePair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    pub fn num_qas(&self) -> usize {
        self.pairs.iter().map(|p| p.qas.len()).sum()
    }

    /// Flattened per-question view: both passages, answers re-based onto the
    /// joined context.
    pub fn instances(&self) -> Vec<QaInstance> {
        self.pairs
            .iter()
            .flat_map(|pair| {
                let passages = vec![pair.passage_a.text.clone(), pair.passage_b.text.clone()];
                let shift = char_len(&pair.passage_a.text) + CONTEXT_SEPARATOR.len();
                pair.qas.iter().map(move |qa| QaInstance {
                    id: qa.id.clone(),
                    question: qa.question.clone(),
                    passages: passages.clone(),
                    answers: qa
                        .answers
                        .iter()
                        .map(|a| GoldAnswer {
                            text: a.text.clone(),
                            char_start: Some(a.char_start + if a.passage_index == 1 { shift } else { 0 }),
                        })
                        .collect(),
                })
            })
            .collect()
    }
}

/// Joins the passages of a multi-passage item.
pub const CONTEXT_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    /// Offset into [`QaInstance::context`], when known.
    pub char_start: Option<usize>,
}

/// A question with its passage(s), independent of the source format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaInstance {
    pub id: String,
    pub question: String,
    pub passages: Vec<String>,
    pub answers: Vec<GoldAnswer>,
}

impl QaInstance {
    pub fn context(&self) -> String {
        self.passages.join(CONTEXT_SEPARATOR)
    }

    /// Sentences of every passage, offsets into [`Self::context`].
    pub fn sentences(&self) -> Vec<SentenceSpan> {
        let mut out = Vec::new();
        let mut shift = 0;
        for passage in &self.passages {
            for s in split_sentences(passage) {
                out.push(SentenceSpan {
                    char_start: s.char_start + shift,
                    char_end: s.char_end + shift,
                    index: out.len(),
                });
            }
            shift += char_len(passage) + CONTEXT_SEPARATOR.len();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    SpanMismatch,
    EmptyQuestion,
    MissingQuestionMark,
    AnswerTooLong,
    BadPassageIndex,
    NoAnswers,
    EmptyAnswer,
    MissingField,
    InvalidValue,
    UnknownPair,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Every rule a QA item must satisfy against its pair. Never fails; an empty
/// list means the annotation is acceptable.
pub fn validate_annotation(pair: &PassagePair, qa: &QaItem) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();
    let question = qa.question.trim();
    if question.is_empty() {
        out.push(Violation::new(EmptyQuestion, "question", "empty question"));
    } else if !question.ends_with('?') {
        out.push(Violation::new(MissingQuestionMark, "question", "question must end with ?"));
    }
    if qa.answers.is_empty() {
        out.push(Violation::new(NoAnswers, "answers", "at least one answer is required"));
    }
    for (i, a) in qa.answers.iter().enumerate() {
        let field = format!("answers[{i}]");
        let Some(passage) = pair.passage(a.passage_index) else {
            out.push(Violation::new(BadPassageIndex, &field, "passage_index must be 0 or 1"));
            continue;
        };
        if a.text.is_empty() {
            out.push(Violation::new(EmptyAnswer, &field, "empty answer"));
            continue;
        }
        let len = char_len(&a.text);
        let end = a.char_start + len;
        if end > char_len(&passage.text) || char_slice(&passage.text, a.char_start, end) != a.text {
            out.push(Violation::new(SpanMismatch, &field, "span mismatch"));
        }
        if tokenize(&a.text).len() > MAX_ANSWER_TOKENS {
            out.push(Violation::new(
                AnswerTooLong,
                &field,
                format!("answer longer than {MAX_ANSWER_TOKENS} tokens"),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2_pair() -> PassagePair {
        let mut p = pilot_dataset().pairs[0].clone();
        p.qas.clear();
        p
    }

    fn qa(question: &str, text: &str, passage_index: usize, char_start: usize) -> QaItem {
        QaItem {
            id: "q".into(),
            question: question.into(),
            answers: vec![AnswerSpan {
                text: text.into(),
                passage_index,
                char_start,
            }],
            inference_type: InferenceType::Referential,
            annotator_id: "a1".into(),
        }
    }

    #[test]
    fn fixture_shape() {
        let ds = pilot_dataset();
        assert_eq!(ds.pairs.len(), 3);
        assert_eq!(ds.num_qas(), 9);
        assert_eq!(ds.instances().len(), 9);
    }

    #[test]
    fn table2_answer_validates() {
        let pair = table2_pair();
        let start = pair.passage_b.text.find("United Democratic Front (UDF)").unwrap();
        let q = qa("Who emerged victorious between the MCP and UDF?", "United Democratic Front (UDF)", 1, start);
        assert!(validate_annotation(&pair, &q).is_empty());
    }

    #[test]
    fn violations() {
        let pair = table2_pair();
        let v = validate_annotation(&pair, &qa("Who won?", "United Democratic Front (UDF)", 1, 3));
        assert_eq!(v[0].code, ViolationCode::SpanMismatch);
        assert_eq!(v[0].message, "span mismatch");

        let v = validate_annotation(&pair, &qa("  ", "Banda", 0, 0));
        assert!(v.iter().any(|v| v.message == "empty question"));

        let v = validate_annotation(&pair, &qa("Who won", "Hastings", 0, 0));
        assert_eq!(v[0].code, ViolationCode::MissingQuestionMark);

        let v = validate_annotation(&pair, &qa("Who?", "Hastings", 2, 0));
        assert_eq!(v[0].code, ViolationCode::BadPassageIndex);

        let v = validate_annotation(&pair, &qa("Who?", "Hastings", 0, 100_000));
        assert_eq!(v[0].code, ViolationCode::SpanMismatch);

        let long = pair.passage_a.text.clone();
        let v = validate_annotation(&pair, &qa("Who?", &long, 0, 0));
        assert!(v.iter().any(|v| v.code == ViolationCode::AnswerTooLong));

        let mut empty = qa("Who?", "x", 0, 0);
        empty.answers.clear();
        assert_eq!(validate_annotation(&pair, &empty)[0].code, ViolationCode::NoAnswers);
    }

    #[test]
    fn round_trip() {
        let ds = pilot_dataset();
        let back = ParallelQaDataset::from_json(&ds.to_json().unwrap()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rejects_bad_documents() {
        let mut ds = pilot_dataset();
        ds.version = "pqa-0".into();
        assert!(ParallelQaDataset::from_json(&ds.to_json().unwrap()).is_err());

        let mut ds = pilot_dataset();
        ds.pairs[1].passage_b.origin_id = ds.pairs[1].passage_a.origin_id.clone();
        assert!(ParallelQaDataset::from_json(&ds.to_json().unwrap()).is_err());

        let mut ds = pilot_dataset();
        ds.pairs[1].qas[0].id = ds.pairs[0].qas[0].id.clone();
        assert!(matches!(
            ParallelQaDataset::from_json(&ds.to_json().unwrap()),
            Err(Error::DuplicateId(_))
        ));

        let err = ParallelQaDataset::from_json(r#"{"version":"pqa-1","pairs":[{"id":"x"}]}"#).unwrap_err();
        assert!(err.to_string().contains("pairs[0]"), "{err}");
    }

    #[test]
    fn instance_offsets_point_into_context() {
        for inst in pilot_dataset().instances() {
            let ctx = inst.context();
            for a in &inst.answers {
                let s = a.char_start.unwrap();
                assert_eq!(char_slice(&ctx, s, s + char_len(&a.text)), a.text);
            }
            for s in inst.sentences() {
                assert!(!s.text(&ctx).contains('\n'));
            }
        }
    }

    #[test]
    fn taxonomy_has_eight_types() {
        let t = InferenceType::taxonomy();
        assert_eq!(t.len(), 8);
        let json = serde_json::to_string(&t[2]).unwrap();
        assert!(json.contains("\"part_whole\""));
    }
}
