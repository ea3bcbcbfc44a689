//! News/encyclopedia passage pairing.
//!
//! 1. rank the frequently mentioned entities of each news article,
//! 2. cut encyclopedia documents into passages of at most `max_words`,
//! 3. pair each news article with its nearest passage under
//!    `λ · tfidf_cosine + (1 − λ) · topic_cosine`.
//!
//! At most one pair is emitted per news article; one passage may serve
//! several articles.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{Passage, PassagePair};
use crate::error::{Error, Result};
use crate::lexmetrics::{build_corpus_stats, cosine, tfidf_vector};
use crate::textproc::{char_slice, split_sentences, tokenize, RawDocument, SourceKind, TokenizedText};
use crate::topicmodel::{infer_topics, TopicModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub entities_per_article: usize,
    pub k_neighbors: usize,
    /// Weight of the tf-idf score in the combined score.
    pub lambda: f64,
    pub max_words: usize,
    pub min_score: f64,
    pub infer_iterations: usize,
    pub infer_seed: u64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            entities_per_article: 3,
            k_neighbors: 5,
            lambda: 0.5,
            max_words: 500,
            min_score: 0.05,
            infer_iterations: 50,
            infer_seed: 0,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig("lambda must be in [0, 1]".into()));
        }
        if self.max_words < 1 {
            return Err(Error::InvalidConfig("max_words must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassageFragment {
    pub parent_id: String,
    pub fragment_index: usize,
    pub text: String,
    pub word_count: usize,
    /// A single sentence longer than `max_words`.
    #[serde(default)]
    pub oversized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FragmentRef {
    pub parent_id: String,
    pub fragment_index: usize,
}

impl PassageFragment {
    pub fn reference(&self) -> FragmentRef {
        FragmentRef {
            parent_id: self.parent_id.clone(),
            fragment_index: self.fragment_index,
        }
    }

    pub fn origin_id(&self) -> String {
        format!("{}#{}", self.parent_id, self.fragment_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassagePairCandidate {
    pub news_id: String,
    pub wiki_fragment: FragmentRef,
    pub score: f64,
    pub tfidf_score: f64,
    pub topic_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedNews {
    pub news_id: String,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingOutcome {
    /// One per retained news article, in input order.
    pub pairs: Vec<PassagePairCandidate>,
    /// Retained top-k neighbours per news article, best first.
    pub neighbors: BTreeMap<String, Vec<PassagePairCandidate>>,
    pub skipped: Vec<SkippedNews>,
}

fn is_capitalized(surface: &str) -> bool {
    surface.chars().next().is_some_and(char::is_uppercase)
}

/// Frequently mentioned entities by a capitalization heuristic.
///
/// Candidates are maximal runs of capitalized tokens separated only by
/// whitespace. A run opening a sentence counts only if the same string also
/// appears mid-sentence somewhere in the document. Ranked by count, ties
/// lexicographic.
pub fn extract_entities(doc: &RawDocument, top_n: usize) -> Vec<(String, usize)> {
    let text = &doc.text;
    let mut inner: BTreeMap<String, usize> = BTreeMap::new();
    let mut initial: BTreeMap<String, usize> = BTreeMap::new();
    for sentence in split_sentences(text) {
        let stext = sentence.text(text);
        let toks = tokenize(stext).tokens;
        let mut i = 0;
        while i < toks.len() {
            if !is_capitalized(&toks[i].surface) {
                i += 1;
                continue;
            }
            let start = i;
            while i + 1 < toks.len()
                && is_capitalized(&toks[i + 1].surface)
                && char_slice(stext, toks[i].char_end, toks[i + 1].char_start)
                    .chars()
                    .all(char::is_whitespace)
            {
                i += 1;
            }
            let entity = toks[start..=i]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let bucket = if start == 0 { &mut initial } else { &mut inner };
            *bucket.entry(entity).or_insert(0) += 1;
            i += 1;
        }
    }
    for (entity, n) in initial {
        if let Some(c) = inner.get_mut(&entity) {
            *c += n;
        }
    }
    rank_counts(inner, top_n)
}

fn rank_counts(counts: BTreeMap<String, usize>, top_n: usize) -> Vec<(String, usize)> {
    let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    ranked
}

/// Rank a supplied entity list by occurrence count in the document text,
/// replacing the heuristic.
pub fn rank_listed_entities(doc: &RawDocument, entities: &[String], top_n: usize) -> Vec<(String, usize)> {
    let counts = entities
        .iter()
        .filter(|e| !e.is_empty())
        .map(|e| (e.clone(), doc.text.matches(e.as_str()).count()))
        .collect();
    rank_counts(counts, top_n)
}

/// Greedy packing of whole sentences into fragments of at most `max_words`
/// whitespace-separated words.
pub fn fragment(doc: &RawDocument, max_words: usize) -> Vec<PassageFragment> {
    let text = &doc.text;
    let mut out = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None; // start, end, words
    let flush = |out: &mut Vec<PassageFragment>, (s, e, w): (usize, usize, usize)| {
        out.push(PassageFragment {
            parent_id: doc.id.clone(),
            fragment_index: out.len(),
            text: char_slice(text, s, e).to_string(),
            word_count: w,
            oversized: w > max_words,
        });
    };
    for sentence in split_sentences(text) {
        let words = sentence.text(text).split_whitespace().count();
        current = match current {
            Some((s, _, w)) if w + words <= max_words => Some((s, sentence.char_end, w + words)),
            Some(frag) => {
                flush(&mut out, frag);
                Some((sentence.char_start, sentence.char_end, words))
            }
            None => Some((sentence.char_start, sentence.char_end, words)),
        };
        if let Some(frag) = current.filter(|f| f.2 > max_words) {
            flush(&mut out, frag);
            current = None;
        }
    }
    if let Some(frag) = current {
        flush(&mut out, frag);
    }
    out
}

/// Best first; ties go to the lower parent id, then fragment index.
fn candidate_order(a: &PassagePairCandidate, b: &PassagePairCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.wiki_fragment.cmp(&b.wiki_fragment))
}

pub fn pair_passages(
    news: &[RawDocument],
    wiki_pool: &[PassageFragment],
    model: &TopicModel,
    config: &PairingConfig,
) -> Result<PairingOutcome> {
    config.validate()?;
    if wiki_pool.is_empty() {
        return Err(Error::EmptyWikiPool);
    }
    let news_tokens: Vec<TokenizedText> = news.iter().map(|d| tokenize(&d.text)).collect();
    let wiki_tokens: Vec<TokenizedText> = wiki_pool.iter().map(|f| tokenize(&f.text)).collect();
    let pooled: Vec<TokenizedText> = news_tokens.iter().chain(&wiki_tokens).cloned().collect();
    let stats = build_corpus_stats(&pooled)?;

    let infer = |t: &TokenizedText| infer_topics(model, t, config.infer_iterations, config.infer_seed);
    let wiki_tfidf: Vec<_> = wiki_tokens.par_iter().map(|t| tfidf_vector(t, &stats)).collect();
    let wiki_topics: Vec<_> = wiki_tokens.par_iter().map(infer).collect();

    let ranked: Vec<Vec<PassagePairCandidate>> = news
        .par_iter()
        .zip(&news_tokens)
        .map(|(doc, toks)| {
            let tv = tfidf_vector(toks, &stats);
            let topics = infer(toks);
            let mut cands: Vec<PassagePairCandidate> = wiki_pool
                .iter()
                .enumerate()
                .map(|(j, frag)| {
                    let tfidf_score = cosine(&tv, &wiki_tfidf[j]);
                    let topic_score = topics.cosine(&wiki_topics[j]);
                    PassagePairCandidate {
                        news_id: doc.id.clone(),
                        wiki_fragment: frag.reference(),
                        score: config.lambda * tfidf_score + (1.0 - config.lambda) * topic_score,
                        tfidf_score,
                        topic_score,
                    }
                })
                .collect();
            cands.sort_by(candidate_order);
            cands
        })
        .collect();

    let mut outcome = PairingOutcome {
        pairs: Vec::new(),
        neighbors: BTreeMap::new(),
        skipped: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    for (doc, cands) in news.iter().zip(ranked) {
        if !seen.insert(doc.id.clone()) {
            continue;
        }
        let best_score = cands.first().map(|c| c.score);
        let kept: Vec<PassagePairCandidate> = cands
            .into_iter()
            .filter(|c| c.score >= config.min_score)
            .take(config.k_neighbors)
            .collect();
        match kept.first() {
            Some(top) => {
                outcome.pairs.push(top.clone());
                outcome.neighbors.insert(doc.id.clone(), kept);
            }
            None => outcome.skipped.push(SkippedNews {
                news_id: doc.id.clone(),
                best_score,
            }),
        }
    }
    Ok(outcome)
}

/// Dataset skeleton (no questions yet) for an emitted pair.
pub fn to_passage_pair(news: &RawDocument, fragment: &PassageFragment) -> PassagePair {
    PassagePair {
        id: format!("{}__{}", news.id, fragment.origin_id()),
        passage_a: Passage {
            source_kind: news.source,
            origin_id: news.id.clone(),
            text: news.text.clone(),
        },
        passage_b: Passage {
            source_kind: SourceKind::Wiki,
            origin_id: fragment.origin_id(),
            text: fragment.text.clone(),
        },
        qas: Vec::new(),
    }
}

/// Write candidates as JSON lines.
pub fn candidates_to_jsonl(pairs: &[PassagePairCandidate]) -> Result<String> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

/// Documents from a directory of UTF-8 `.txt` files (id = file stem, sorted)
/// or from a JSON-lines file of `{id, source, title, text}`.
pub fn read_corpus(path: &Path, source: SourceKind) -> Result<Vec<RawDocument>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let docs = if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let mut docs = Vec::with_capacity(files.len());
        for f in files {
            docs.push(read_text_document(&f, source)?);
        }
        docs
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut docs = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let doc: RawDocument = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: format!("{}:{}", path.display(), n + 1),
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        docs
    };
    check_corpus(&docs)?;
    Ok(docs)
}

pub fn read_text_document(path: &Path, source: SourceKind) -> Result<RawDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RawDocument {
        id,
        source,
        title: String::new(),
        text,
    })
}

fn check_corpus(docs: &[RawDocument]) -> Result<()> {
    let mut ids = BTreeSet::new();
    for d in docs {
        if d.id.is_empty() || d.text.trim().is_empty() {
            return Err(Error::InvalidDataset(format!("document {:?} has an empty id or text", d.id)));
        }
        if !ids.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

/// Entity name → local document, standing in for an encyclopedia lookup.
#[derive(Debug, Clone, Default)]
pub struct EntityManifest {
    base_dir: PathBuf,
    entries: HashMap<String, PathBuf>,
}

impl EntityManifest {
    /// JSON object mapping entity → path relative to the manifest file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: HashMap<String, PathBuf> = serde_json::from_str(&text)?;
        Ok(Self {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn resolve(&self, entity: &str) -> Option<PathBuf> {
        self.entries.get(entity).map(|p| self.base_dir.join(p))
    }

    /// Encyclopedia documents for the top entities of every news article,
    /// deduplicated, in first-seen order.
    pub fn documents_for(&self, news: &[RawDocument], entities_per_article: usize) -> Result<Vec<RawDocument>> {
        let mut seen = BTreeSet::new();
        let mut docs = Vec::new();
        for article in news {
            for (entity, _) in extract_entities(article, entities_per_article) {
                let Some(path) = self.resolve(&entity) else { continue };
                if seen.insert(path.clone()) {
                    docs.push(read_text_document(&path, SourceKind::Wiki)?);
                }
            }
        }
        Ok(docs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::pilot_dataset;
    use crate::topicmodel::{train_lda, LdaConfig};

    fn doc(id: &str, source: SourceKind, text: &str) -> RawDocument {
        RawDocument {
            id: id.into(),
            source,
            title: String::new(),
            text: text.into(),
        }
    }

    fn sentence(words: usize, tag: &str) -> String {
        let mut s = (0..words).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ");
        s.replace_range(0..1, &tag[..1].to_uppercase());
        s + "."
    }

    #[test]
    fn entities_over_banda_passage() {
        let pair = &pilot_dataset().pairs[0];
        let d = doc("w", SourceKind::Wiki, &pair.passage_a.text);
        let ents = extract_entities(&d, 3);
        assert_eq!(ents[0], ("Malawi".to_string(), 5));
        assert_eq!(ents[1], ("MCP".to_string(), 2));
        assert_eq!(ents[2], ("President".to_string(), 2));
    }

    #[test]
    fn entities_ranked_by_count() {
        let text = "Leaders met Hastings Kamuzu Banda. Crowds in Malawi cheered Banda. \
                    Reporters said Malawi voted. Banda spoke in Malawi. Malawi watched Banda. \
                    Later, Malawi waited for Banda.";
        let ents = extract_entities(&doc("n", SourceKind::News, text), 10);
        assert_eq!(ents[0], ("Malawi".to_string(), 5));
        assert_eq!(ents[1], ("Banda".to_string(), 4));
        assert!(ents.contains(&("Hastings Kamuzu Banda".to_string(), 1)));
        // "Leaders", "Crowds", "Later" only open sentences
        assert!(!ents.iter().any(|(e, _)| e == "Leaders" || e == "Later"));
        assert_eq!(extract_entities(&doc("n", SourceKind::News, text), 1).len(), 1);
    }

    #[test]
    fn no_entities_in_lowercase_text() {
        assert!(extract_entities(&doc("n", SourceKind::News, "all lower case. nothing here."), 5).is_empty());
    }

    #[test]
    fn listed_entities_override() {
        let d = doc("n", SourceKind::News, "the un met. the un agreed. nato too.");
        let ents = rank_listed_entities(&d, &["nato".into(), "the un".into(), "eu".into()], 5);
        assert_eq!(ents, vec![("the un".into(), 2), ("nato".into(), 1)]);
    }

    #[test]
    fn fragment_under_limit_is_whole_doc() {
        let text = (0..4).map(|i| sentence(100, &format!("s{i}w"))).collect::<Vec<_>>().join(" ");
        let frags = fragment(&doc("w", SourceKind::Wiki, &text), 500);
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].text, text);
        assert_eq!(frags[0].word_count, 400);
    }

    #[test]
    fn fragment_greedy_split() {
        let text = format!("{} {}", sentence(480, "a"), sentence(220, "b"));
        let frags = fragment(&doc("w", SourceKind::Wiki, &text), 500);
        let counts: Vec<_> = frags.iter().map(|f| f.word_count).collect();
        assert_eq!(counts, [480, 220]);
        assert!(frags.iter().all(|f| !f.oversized));
        assert_eq!(frags.iter().map(|f| f.fragment_index).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn oversized_sentence_flagged() {
        let text = sentence(600, "a");
        let frags = fragment(&doc("w", SourceKind::Wiki, &text), 500);
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].word_count, 600);
        assert!(frags[0].oversized);

        let text = format!("{} {} {}", sentence(10, "x"), sentence(600, "a"), sentence(10, "y"));
        let frags = fragment(&doc("w", SourceKind::Wiki, &text), 500);
        let counts: Vec<_> = frags.iter().map(|f| (f.word_count, f.oversized)).collect();
        assert_eq!(counts, [(10, false), (600, true), (10, false)]);
    }

    #[test]
    fn fragments_reconstruct_parent() {
        let text = pilot_dataset().pairs[1].passage_b.text.clone();
        for max in [1, 10, 40, 500] {
            let frags = fragment(&doc("w", SourceKind::Wiki, &text), max);
            let joined: Vec<&str> = frags.iter().flat_map(|f| f.text.split_whitespace()).collect();
            assert_eq!(joined, text.split_whitespace().collect::<Vec<_>>());
            assert!(frags.iter().all(|f| f.oversized || f.word_count <= max));
        }
    }

    fn toy_model(texts: &[&str]) -> TopicModel {
        let corpus: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
        let cfg = LdaConfig {
            num_topics: 2,
            alpha: 0.1,
            beta: 0.01,
            iterations: 30,
            seed: 1,
            min_term_freq: 1,
            drop_stopwords: true,
        };
        train_lda(&corpus, &cfg).unwrap()
    }

    #[test]
    fn single_fragment_pool_forces_choice() {
        let news = vec![
            doc("n1", SourceKind::News, "apple banana cherry"),
            doc("n2", SourceKind::News, "delta echo foxtrot"),
        ];
        let wiki = fragment(&doc("w1", SourceKind::Wiki, "apple delta banana echo."), 500);
        let model = toy_model(&["apple banana cherry", "delta echo foxtrot", "apple delta banana echo"]);
        let cfg = PairingConfig {
            min_score: 0.0,
            ..Default::default()
        };
        let out = pair_passages(&news, &wiki, &model, &cfg).unwrap();
        assert_eq!(out.pairs.len(), 2);
        assert!(out.pairs.iter().all(|p| p.wiki_fragment.parent_id == "w1"));
        for p in &out.pairs {
            assert!((p.score - (0.5 * p.tfidf_score + 0.5 * p.topic_score)).abs() < 1e-9);
        }
    }

    #[test]
    fn shared_fragment_allowed() {
        let news = vec![
            doc("n1", SourceKind::News, "apple banana cherry apple"),
            doc("n2", SourceKind::News, "banana cherry apple cherry"),
        ];
        let mut pool = fragment(&doc("wa", SourceKind::Wiki, "apple banana cherry."), 500);
        pool.extend(fragment(&doc("wb", SourceKind::Wiki, "delta echo foxtrot."), 500));
        let model = toy_model(&["apple banana cherry", "delta echo foxtrot"]);
        let out = pair_passages(&news, &pool, &model, &PairingConfig::default()).unwrap();
        assert_eq!(out.pairs.len(), 2);
        assert!(out.pairs.iter().all(|p| p.wiki_fragment.parent_id == "wa"));
    }

    #[test]
    fn min_score_skips() {
        let news = vec![doc("n1", SourceKind::News, "zulu yankee xray")];
        let pool = fragment(&doc("wa", SourceKind::Wiki, "apple banana cherry."), 500);
        let model = toy_model(&["apple banana cherry", "delta echo foxtrot"]);
        let cfg = PairingConfig {
            lambda: 1.0,
            ..Default::default()
        };
        let out = pair_passages(&news, &pool, &model, &cfg).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.skipped[0].news_id, "n1");
    }

    #[test]
    fn empty_pool_and_bad_config() {
        let model = toy_model(&["apple banana", "cherry delta"]);
        assert!(matches!(
            pair_passages(&[], &[], &model, &PairingConfig::default()),
            Err(Error::EmptyWikiPool)
        ));
        let pool = fragment(&doc("wa", SourceKind::Wiki, "apple banana cherry."), 500);
        let cfg = PairingConfig {
            lambda: 1.5,
            ..Default::default()
        };
        assert!(pair_passages(&[], &pool, &model, &cfg).is_err());
    }

    #[test]
    fn corpus_readers() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "Second doc.").unwrap();
        fs::write(dir.path().join("a.txt"), "First doc.").unwrap();
        fs::write(dir.path().join("skip.md"), "ignored").unwrap();
        let docs = read_corpus(dir.path(), SourceKind::News).unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);

        let jl = dir.path().join("c.jsonl");
        fs::write(&jl, "{\"id\":\"x\",\"source\":\"wiki\",\"title\":\"X\",\"text\":\"Body.\"}\n\n").unwrap();
        let docs = read_corpus(&jl, SourceKind::News).unwrap();
        assert_eq!(docs[0].source, SourceKind::Wiki);

        fs::write(&jl, "{\"id\":\"x\"}\n").unwrap();
        assert!(read_corpus(&jl, SourceKind::News).is_err());
    }

    #[test]
    fn manifest_lookup() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("wiki")).unwrap();
        fs::write(dir.path().join("wiki/malawi.txt"), "Malawi is a country.").unwrap();
        fs::write(dir.path().join("manifest.json"), r#"{"Malawi": "wiki/malawi.txt"}"#).unwrap();
        let m = EntityManifest::load(&dir.path().join("manifest.json")).unwrap();
        let news = vec![doc("n", SourceKind::News, "People in Malawi voted. Malawi cheered.")];
        let docs = m.documents_for(&news, 2).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "malawi");
    }
}
