//! Text normalization, tokenization and document-frequency statistics.
//!
//! Normalization runs a fixed sequence: strip markup tags, fold non-ASCII
//! letters to their ASCII compatibility decomposition (dropping whatever is
//! left), lowercase, apply an ordered regex rule table, split on
//! whitespace. The default rule table ships in `data/normalization_rules.tsv`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const DEFAULT_RULES: &str = include_str!("../data/normalization_rules.tsv");

/// Lowercase ASCII tokens produced by [`Normalizer::normalize`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NormalizedText {
    tokens: Vec<String>,
}

impl NormalizedText {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: Regex,
    replacement: String,
}

#[derive(Debug, Clone)]
pub struct Normalizer {
    tags: Regex,
    rules: Vec<Rule>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::from_rules(DEFAULT_RULES).expect("shipped rule table parses")
    }
}

impl Normalizer {
    /// Parses a rule table: one `pattern<TAB>replacement` pair per line,
    /// `#` comments and blank lines skipped.
    pub fn from_rules(table: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (idx, line) in table.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, replacement) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected <pattern><TAB><replacement>"))?;
            let pattern = Regex::new(pattern).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
            rules.push(Rule {
                pattern,
                replacement: replacement.to_string(),
            });
        }
        Ok(Normalizer {
            tags: Regex::new(r"<[^>]*>").expect("static regex"),
            rules,
        })
    }

    pub fn normalize(&self, raw: &str) -> NormalizedText {
        let stripped = self.tags.replace_all(raw, " ");
        let mut text = fold_ascii(&stripped);
        text.make_ascii_lowercase();
        for rule in &self.rules {
            if let std::borrow::Cow::Owned(s) =
                rule.pattern.replace_all(&text, rule.replacement.as_str())
            {
                text = s;
            }
        }
        NormalizedText {
            tokens: text.split_whitespace().map(str::to_string).collect(),
        }
    }
}

/// Normalizes with the shipped rule table.
pub fn normalize(raw: &str) -> NormalizedText {
    static DEFAULT: OnceLock<Normalizer> = OnceLock::new();
    DEFAULT.get_or_init(Normalizer::default).normalize(raw)
}

/// Non-ASCII letters go through NFKD and keep their ASCII part; any other
/// non-ASCII character becomes a space.
fn fold_ascii(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii() {
            out.push(c);
        } else if c.is_alphabetic() {
            out.extend(std::iter::once(c).nfkd().filter(char::is_ascii));
        } else {
            out.push(' ');
        }
    }
    out
}

/// Token ids and document frequencies over a document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Ids are assigned in order of first occurrence.
    pub fn build<'a, I, D>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        let mut vocab = Vocabulary {
            ids: HashMap::new(),
            tokens: Vec::new(),
            doc_freq: Vec::new(),
            n_docs: 0,
        };
        let mut seen = HashSet::new();
        for doc in corpus {
            vocab.n_docs += 1;
            seen.clear();
            for token in doc {
                let id = match vocab.ids.get(token.as_str()) {
                    Some(&id) => id,
                    None => {
                        let id = vocab.tokens.len();
                        vocab.ids.insert(token.clone(), id);
                        vocab.tokens.push(token.clone());
                        vocab.doc_freq.push(0);
                        id
                    }
                };
                if seen.insert(id) {
                    vocab.doc_freq[id] += 1;
                }
            }
        }
        if vocab.n_docs == 0 {
            return Err(Error::Empty("corpus"));
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.id(token).map_or(0, |id| self.doc_freq[id])
    }

    /// `ln(n_docs / doc_freq)`; zero for tokens never seen.
    pub fn idf(&self, token: &str) -> f64 {
        match self.id(token) {
            Some(id) => (self.n_docs as f64 / self.doc_freq[id] as f64).ln(),
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toks(raw: &str) -> Vec<String> {
        normalize(raw).into_tokens()
    }

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.iter().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn apostrophe_after_digits_means_feet() {
        assert_eq!(toks("6' Cable"), ["6", "feet", "cable"]);
        assert_eq!(toks("10'HDMI"), ["10", "feet", "hdmi"]);
        assert_eq!(toks("55\" TV"), ["55", "inch", "tv"]);
        // not after a digit: plain punctuation
        assert_eq!(toks("kid's desk"), ["kid", "s", "desk"]);
    }

    #[test]
    fn empty_input() {
        assert!(normalize("").is_empty());
        assert!(normalize("  \t\n ").is_empty());
        assert!(normalize("<br/>").is_empty());
    }

    #[test]
    fn tags_and_symbols_dropped() {
        // strip tags -> " TV  Remote™"; ™ is not a letter -> space;
        // lowercase -> " tv  remote "; split
        assert_eq!(toks("<b>TV</b> Remote™"), ["tv", "remote"]);
    }

    #[test]
    fn accented_letters_fold() {
        assert_eq!(toks("Café Crème"), ["cafe", "creme"]);
        assert_eq!(toks("Belleze©  Chair — Red"), ["belleze", "chair", "red"]);
    }

    #[test]
    fn sample_queries_tokenize_on_whitespace() {
        for q in [
            "epson ink cartridges",
            "batteries aa",
            "microsd 128gb",
            "accent chair",
            "bar stool red 2",
            "bookshelf with doors",
        ] {
            let expected: Vec<&str> = q.split_whitespace().collect();
            assert_eq!(toks(q), expected);
        }
    }

    #[test]
    fn custom_rule_table() {
        let n = Normalizer::from_rules("tv\ttelevision\n").unwrap();
        assert_eq!(n.normalize("TV stand").tokens(), ["television", "stand"]);
        assert!(matches!(
            Normalizer::from_rules("# c\nno tab here\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Normalizer::from_rules("(\tx"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn vocabulary_counts_documents() {
        let v = Vocabulary::build(&docs(&[&["a", "b"], &["b"]])).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.doc_freq("b"), 2);
        assert_eq!(v.doc_freq("a"), 1);

        let v = Vocabulary::build(&docs(&[&["a"], &["a"]])).unwrap();
        assert_eq!(v.doc_freq("a"), 2);

        let v = Vocabulary::build(&docs(&[&["a", "a", "a"]])).unwrap();
        assert_eq!(v.doc_freq("a"), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(matches!(Vocabulary::build(&empty), Err(Error::Empty(_))));
    }

    #[test]
    fn idf_values() {
        let v = Vocabulary::build(&docs(&[&["a", "x"], &["a"], &["a"], &["a"]])).unwrap();
        assert_eq!(v.idf("a"), 0.0);
        assert!((v.idf("x") - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(v.idf("unknown"), 0.0);
    }

    #[test]
    fn doc_freq_matches_recount() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let corpus: Vec<Vec<String>> = (0..1000)
            .map(|_| {
                let n = rng.gen_range(0..12);
                (0..n)
                    .map(|_| format!("t{}", rng.gen_range(0..60)))
                    .collect()
            })
            .collect();
        let v = Vocabulary::build(&corpus).unwrap();
        let sets: Vec<HashSet<&String>> = corpus.iter().map(|d| d.iter().collect()).collect();
        for token in v.tokens() {
            let recount = sets.iter().filter(|s| s.contains(token)).count();
            assert_eq!(v.doc_freq(token), recount, "{token}");
        }
        assert_eq!(v.n_docs(), 1000);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn normalization_is_idempotent(raw in "\\PC{0,40}") {
            let once = normalize(&raw);
            let twice = normalize(&once.to_string());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_clean(raw in "[ -~é™<>'\"0-9]{0,40}") {
            for t in normalize(&raw).tokens() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()));
            }
        }

        #[test]
        fn idf_non_increasing_in_doc_freq(n in 1usize..200, a in 1usize..200, b in 1usize..200) {
            let (lo, hi) = (a.min(b).min(n), a.max(b).min(n));
            let corpus: Vec<Vec<String>> = (0..n)
                .map(|i| {
                    let mut d = vec!["pad".to_string()];
                    if i < lo { d.push("x".into()); }
                    if i < hi { d.push("y".into()); }
                    d
                })
                .collect();
            let v = Vocabulary::build(&corpus).unwrap();
            prop_assert!(v.idf("x") >= v.idf("y"));
        }
    }
}
