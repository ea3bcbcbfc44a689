//! Tokenization, sentence segmentation and answer normalization.
//!
//! Every offset in this crate is a Unicode scalar-value index into the
//! source string (what `str::chars` yields), never a byte index. Use
//! [`char_slice`] to cut text by those offsets.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

const ABBREVIATIONS_ASSET: &str = include_str!("../assets/abbreviations.txt");

static ABBREVIATIONS: LazyLock<HashSet<&'static str>> = LazyLock::new(|| {
    ABBREVIATIONS_ASSET
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
});

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());

/// Source of a raw document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    News,
    Wiki,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub source: SourceKind,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    /// Case-folded form used by every comparison.
    pub fn term(&self) -> String {
        self.surface.to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub source: String,
    pub tokens: Vec<Token>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Case-folded terms in token order.
    pub fn terms(&self) -> Vec<String> {
        self.tokens.iter().map(Token::term).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub index: usize,
}

impl SentenceSpan {
    pub fn text<'a>(&self, passage: &'a str) -> &'a str {
        char_slice(passage, self.char_start, self.char_end)
    }
}

/// Slice `text` by scalar-value offsets. Offsets past the end are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let byte_at = |n: usize| {
        text.char_indices()
            .nth(n)
            .map(|(b, _)| b)
            .unwrap_or(text.len())
    };
    let b0 = byte_at(start);
    let b1 = if end <= start { b0 } else { byte_at(end) };
    &text[b0..b1]
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Maximal runs of letters/digits; an apostrophe is kept only between two
/// alphanumeric characters ("Queen's").
pub fn tokenize(text: &str) -> TokenizedText {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() {
            if chars[i].is_alphanumeric() {
                i += 1;
            } else if is_apostrophe(chars[i])
                && i + 1 < chars.len()
                && chars[i + 1].is_alphanumeric()
            {
                i += 2;
            } else {
                break;
            }
        }
        tokens.push(Token {
            surface: chars[start..i].iter().collect(),
            char_start: start,
            char_end: i,
        });
    }
    TokenizedText {
        source: text.to_string(),
        tokens,
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{2019}' | '\u{201D}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201C}' | '\u{2018}')
}

fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(is_opening);
    if ABBREVIATIONS.contains(word) {
        return true;
    }
    // single initial, "J."
    let mut it = word.chars();
    matches!((it.next(), it.next(), it.next()), (Some(c), Some('.'), None) if c.is_uppercase())
}

/// Rule-based sentence splitter.
///
/// A sentence ends at `.`, `?` or `!` (plus any closing quotes/brackets) when
/// followed by whitespace and then an uppercase letter or digit, optionally
/// behind an opening quote. A period that ends a listed abbreviation or a
/// single initial never ends a sentence.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let push = |spans: &mut Vec<SentenceSpan>, s: usize, e: usize| {
        let index = spans.len();
        spans.push(SentenceSpan {
            char_start: s,
            char_end: e,
            index,
        });
    };

    let mut i = 0;
    while i < n {
        let c = chars[i];
        if start.is_none() && !c.is_whitespace() {
            start = Some(i);
        }
        if let (Some(s), true) = (start, is_terminator(c)) {
            let mut j = i + 1;
            while j < n && is_closing(chars[j]) {
                j += 1;
            }
            let mut k = j;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            let mut m = k;
            while m < n && is_opening(chars[m]) {
                m += 1;
            }
            let boundary = k > j && m < n && (chars[m].is_uppercase() || chars[m].is_ascii_digit());
            if boundary {
                let abbreviated = c == '.' && {
                    let mut w = i;
                    while w > 0 && !chars[w - 1].is_whitespace() {
                        w -= 1;
                    }
                    let word: String = chars[w..=i].iter().collect();
                    is_abbreviation(&word)
                };
                if !abbreviated {
                    push(&mut spans, s, j);
                    start = None;
                    i = j;
                    continue;
                }
            }
        }
        i += 1;
    }
    if let Some(s) = start {
        let mut e = n;
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        push(&mut spans, s, e);
    }
    spans
}

/// SQuAD answer normalization: lowercase, drop ASCII punctuation, drop the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(t: &TokenizedText) -> Vec<&str> {
        t.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_offsets() {
        let t = tokenize("Banda ran for president.");
        assert_eq!(surfaces(&t), ["Banda", "ran", "for", "president"]);
        let offs: Vec<_> = t.tokens.iter().map(|t| (t.char_start, t.char_end)).collect();
        assert_eq!(offs, [(0, 5), (6, 9), (10, 13), (14, 23)]);
    }

    #[test]
    fn hyphen_separates() {
        assert_eq!(surfaces(&tokenize("7-6 7-6 victory")), ["7", "6", "7", "6", "victory"]);
    }

    #[test]
    fn apostrophes_word_internal_only() {
        assert_eq!(
            surfaces(&tokenize("Queen's 'quoted' Martin's players'")),
            ["Queen's", "quoted", "Martin's", "players"]
        );
    }

    #[test]
    fn single_sentence() {
        let s = "He died in South Africa in 1997.";
        let spans = split_sentences(s);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].char_start, spans[0].char_end), (0, char_len(s)));
    }

    #[test]
    fn splits_after_terminator() {
        let s = "Let talks begin. He added more.";
        let spans = split_sentences(s);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].text(s), "Let talks begin.");
        assert_eq!(spans[1].text(s), "He added more.");
    }

    #[test]
    fn abbreviation_does_not_split() {
        let s = "Dr. Banda won. He left.";
        let spans = split_sentences(s);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].text(s), "Dr. Banda won.");
        let s = "He was world No. 1 for years. U.S. Olympic Committee. Then J. Smith came.";
        let texts: Vec<_> = split_sentences(s).iter().map(|x| x.text(s).to_string()).collect();
        assert_eq!(
            texts,
            ["He was world No. 1 for years.", "U.S. Olympic Committee.", "Then J. Smith came."]
        );
    }

    #[test]
    fn quotes_around_boundaries() {
        let s = "It should be \"free and fair.\" Meanwhile, he told them. \"Let talks begin,\" he added.";
        let texts: Vec<_> = split_sentences(s).iter().map(|x| x.text(s).to_string()).collect();
        assert_eq!(
            texts,
            [
                "It should be \"free and fair.\"",
                "Meanwhile, he told them.",
                "\"Let talks begin,\" he added."
            ]
        );
    }

    #[test]
    fn lowercase_after_period_does_not_split() {
        assert_eq!(split_sentences("a 3.5 b. c d").len(), 1);
    }

    #[test]
    fn no_terminator_one_sentence() {
        let spans = split_sentences("  no terminator here  ");
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].char_start, spans[0].char_end), (2, 20));
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_answer("The UDF"), "udf");
        assert_eq!(normalize_answer("udf"), "udf");
        assert_eq!(
            normalize_answer("United Democratic Front (UDF)"),
            "united democratic front udf"
        );
        assert_eq!(normalize_answer("  A  theory, an idea "), "theory idea");
    }

    #[test]
    fn char_slice_unicode() {
        let s = "Zürich – Genève";
        assert_eq!(char_slice(s, 9, 15), "Genève");
        assert_eq!(char_slice(s, 9, 100), "Genève");
        assert_eq!(char_slice(s, 4, 2), "");
    }

    proptest! {
        #[test]
        fn token_round_trip(s in "\\PC{0,80}") {
            let t = tokenize(&s);
            let mut last = 0;
            for tok in &t.tokens {
                prop_assert!(tok.char_start < tok.char_end);
                prop_assert!(tok.char_start >= last);
                last = tok.char_end;
                prop_assert_eq!(char_slice(&s, tok.char_start, tok.char_end), tok.surface.as_str());
            }
            prop_assert!(last <= char_len(&s));
        }

        #[test]
        fn normalize_idempotent(s in "\\PC{0,60}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once.clone());
        }

        #[test]
        fn sentences_partition(s in "[A-Za-z0-9 .?!\"']{0,120}") {
            let spans = split_sentences(&s);
            let mut last = 0;
            let chars: Vec<char> = s.chars().collect();
            for (i, sp) in spans.iter().enumerate() {
                prop_assert_eq!(sp.index, i);
                prop_assert!(sp.char_start >= last && sp.char_start < sp.char_end);
                // gaps hold whitespace only
                prop_assert!(chars[last..sp.char_start].iter().all(|c| c.is_whitespace()));
                last = sp.char_end;
            }
            prop_assert!(chars[last..].iter().all(|c| c.is_whitespace()));
            prop_assert_eq!(split_sentences(&s), spans);
        }
    }
}
