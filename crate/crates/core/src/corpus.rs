//! Pre-annotated manual text: loading, validation and evaluation transforms.
//!
//! A corpus file starts with the header line `#textstrat-corpus v1` followed by one JSON
//! object per sentence. Dependency parses and gold predicate labels are authored offline
//! and shipped with the file; nothing here tokenizes or parses.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORPUS_HEADER: &str = "#textstrat-corpus v1";

pub const BUNDLED_MANUAL: &str = include_str!("../data/manual.jsonl");
pub const BUNDLED_DISTRACTORS: &str = include_str!("../data/distractors.jsonl");
pub const BUNDLED_VOCABULARY: &str = include_str!("../data/vocabulary.txt");

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("sentence {id}: {msg}")]
    Invalid { id: usize, msg: String },
    #[error("need {needed} distractor sentences, pool has {available}")]
    NotEnoughDistractors { needed: usize, available: usize },
    #[error("vocabulary line {line}: {msg}")]
    Vocabulary { line: usize, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Predicate label of a word: action description, state description or background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "A")]
    Action,
    #[serde(rename = "S")]
    State,
    #[serde(rename = "B")]
    Background,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Action, Label::State, Label::Background];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Label::Action => "A",
            Label::State => "S",
            Label::Background => "B",
        }
    }

    pub fn from_code(s: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.code() == s)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Manual,
    Distractor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    #[serde(rename = "w")]
    pub word: String,
    pub pos: String,
    pub head: i32,
    #[serde(rename = "dep")]
    pub dep_label: String,
}

impl Token {
    pub fn new(word: &str, pos: &str, head: i32, dep_label: &str) -> Token {
        Token {
            word: word.to_string(),
            pos: pos.to_string(),
            head,
            dep_label: dep_label.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub source: Source,
    pub tokens: Vec<Token>,
    #[serde(rename = "gold", default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<Vec<Label>>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.word.as_str())
    }

    /// Index of the root token, if the sentence is non-empty.
    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.head < 0)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |msg: String| CorpusError::Invalid { id: self.id, msg };
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.word.is_empty() || t.word.chars().any(char::is_whitespace) {
                return Err(invalid(format!("token {i} has an empty or spaced word")));
            }
            if t.word.to_lowercase() != t.word {
                return Err(invalid(format!("token {i} ({:?}) is not lowercase", t.word)));
            }
            if t.head < -1 || t.head >= n as i32 || t.head == i as i32 {
                return Err(invalid(format!("token {i} has head {} out of range", t.head)));
            }
        }
        let roots = self.tokens.iter().filter(|t| t.head == -1).count();
        if n > 0 && roots != 1 {
            return Err(invalid(format!("expected exactly one root, found {roots}")));
        }
        for start in 0..n {
            let mut cur = start as i32;
            let mut steps = 0;
            while cur >= 0 {
                cur = self.tokens[cur as usize].head;
                steps += 1;
                if steps > n {
                    return Err(invalid(format!("head links from token {start} form a cycle")));
                }
            }
        }
        if let Some(gold) = &self.gold_labels {
            if gold.len() != n {
                return Err(invalid(format!(
                    "{} gold labels for {n} tokens",
                    gold.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(sentences: Vec<Sentence>) -> Document {
        Document { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (i, s) in self.sentences.iter().enumerate() {
            if s.id != i {
                return Err(CorpusError::Invalid {
                    id: s.id,
                    msg: format!("ids must be dense, expected {i}"),
                });
            }
            s.validate()?;
        }
        Ok(())
    }

    fn renumbered(mut sentences: Vec<Sentence>) -> Document {
        for (i, s) in sentences.iter_mut().enumerate() {
            s.id = i;
        }
        Document { sentences }
    }

    pub fn bundled_manual() -> Document {
        parse_document(BUNDLED_MANUAL).expect("bundled manual is valid")
    }

    pub fn bundled_distractors() -> Document {
        parse_document(BUNDLED_DISTRACTORS).expect("bundled distractors are valid")
    }
}

pub fn parse_document(text: &str) -> Result<Document, CorpusError> {
    let mut lines = text.lines().enumerate();
    let mut sentences = Vec::new();
    match lines.next() {
        None => return Ok(Document::default()),
        Some((_, first)) if first.trim_end() == CORPUS_HEADER => {}
        Some((_, first)) if first.trim().is_empty() && text.trim().is_empty() => {
            return Ok(Document::default())
        }
        Some(_) => {
            return Err(CorpusError::Malformed {
                line: 1,
                msg: format!("missing header {CORPUS_HEADER:?}"),
            })
        }
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let sentence: Sentence = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            msg: e.to_string(),
        })?;
        sentences.push(sentence);
    }
    let doc = Document { sentences };
    doc.validate()?;
    Ok(doc)
}

pub fn load_document(path: impl AsRef<Path>) -> Result<Document, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_document(&text)
}

/// Canonical file form; `parse_document(&serialize_document(d)) == d`.
pub fn serialize_document(doc: &Document) -> String {
    let mut out = String::from(CORPUS_HEADER);
    out.push('\n');
    for s in &doc.sentences {
        out.push_str(&serde_json::to_string(s).expect("sentences serialize"));
        out.push('\n');
    }
    out
}

/// Permutes every word token across the whole document. Each word carries its POS tag,
/// dependency label and gold label; the head structure stays with the positions.
pub fn randomize_document(doc: &Document, seed: u64) -> Document {
    let mut carried: Vec<(String, String, String, Option<Label>)> = doc
        .sentences
        .iter()
        .flat_map(|s| {
            s.tokens.iter().enumerate().map(move |(j, t)| {
                (
                    t.word.clone(),
                    t.pos.clone(),
                    t.dep_label.clone(),
                    s.gold_labels.as_ref().map(|g| g[j]),
                )
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    carried.shuffle(&mut rng);
    let mut it = carried.into_iter();
    let sentences = doc
        .sentences
        .iter()
        .map(|s| {
            let mut gold = Vec::with_capacity(s.len());
            let tokens = s
                .tokens
                .iter()
                .map(|t| {
                    let (word, pos, dep_label, g) = it.next().unwrap();
                    gold.push(g);
                    Token {
                        word,
                        pos,
                        head: t.head,
                        dep_label,
                    }
                })
                .collect();
            let gold_labels = if gold.iter().all(Option::is_some) && s.gold_labels.is_some() {
                Some(gold.into_iter().flatten().collect())
            } else {
                None
            };
            Sentence {
                id: s.id,
                source: s.source,
                tokens,
                gold_labels,
            }
        })
        .collect();
    Document { sentences }
}

/// The manual plus an equal number of distractor sentences drawn without replacement,
/// shuffled together. Each sentence keeps its source tag.
pub fn build_relevance_eval_document(
    manual: &Document,
    distractors: &Document,
    seed: u64,
) -> Result<Document, CorpusError> {
    if distractors.len() < manual.len() {
        return Err(CorpusError::NotEnoughDistractors {
            needed: manual.len(),
            available: distractors.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<Sentence> = manual.sentences.clone();
    let mut drawn: Vec<Sentence> = distractors
        .sentences
        .choose_multiple(&mut rng, manual.len())
        .cloned()
        .collect();
    for s in &mut drawn {
        s.source = Source::Distractor;
    }
    all.extend(drawn);
    all.shuffle(&mut rng);
    Ok(Document::renumbered(all))
}

/// Keeps `round(fraction * n)` sentences chosen at random, in their original order.
pub fn subsample_document(doc: &Document, fraction: f64, seed: u64) -> Document {
    let keep = ((fraction.clamp(0.0, 1.0)) * doc.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..doc.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(keep);
    idx.sort_unstable();
    Document::renumbered(idx.into_iter().map(|i| doc.sentences[i].clone()).collect())
}

/// `k` single-token pseudo-sentences `latent_0 … latent_{k-1}`. Run through the
/// relevance layer they act as hidden units driven by game features alone.
pub fn latent_document(k: usize) -> Document {
    Document::new(
        (0..k)
            .map(|id| Sentence {
                id,
                source: Source::Manual,
                tokens: vec![Token::new(&format!("latent_{id}"), "LAT", -1, "root")],
                gold_labels: None,
            })
            .collect(),
    )
}

/// Mapping from game attribute and action identifiers to their label words.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedVocabulary {
    entries: Vec<(String, String)>,
    by_key: FxHashMap<String, usize>,
}

impl SeedVocabulary {
    pub fn empty() -> SeedVocabulary {
        SeedVocabulary::default()
    }

    pub fn bundled() -> SeedVocabulary {
        SeedVocabulary::parse(BUNDLED_VOCABULARY).expect("bundled vocabulary is valid")
    }

    pub fn parse(text: &str) -> Result<SeedVocabulary, CorpusError> {
        let mut vocab = SeedVocabulary::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| CorpusError::Vocabulary {
                line: i + 1,
                msg: msg.to_string(),
            };
            let (key, word) = line.split_once('=').ok_or_else(|| err("expected key = word"))?;
            let (key, word) = (key.trim(), word.trim());
            if key.is_empty() || word.is_empty() || word.contains(char::is_whitespace) {
                return Err(err("key and a single word are required"));
            }
            if word.to_lowercase() != word {
                return Err(err("label words must be lowercase"));
            }
            vocab.insert(key, word).map_err(|m| err(&m))?;
        }
        Ok(vocab)
    }

    pub fn insert(&mut self, key: &str, word: &str) -> Result<(), String> {
        if self.by_key.contains_key(key) {
            return Err(format!("duplicate key {key}"));
        }
        self.by_key.insert(key.to_string(), self.entries.len());
        self.entries.push((key.to_string(), word.to_string()));
        Ok(())
    }

    pub fn word(&self, key: &str) -> Option<&str> {
        self.by_key.get(key).map(|&i| self.entries[i].1.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, w)| (k.as_str(), w.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Distinct label words.
    pub fn label_words(&self) -> FxHashSet<&str> {
        self.entries.iter().map(|(_, w)| w.as_str()).collect()
    }

    /// Label words of keys with the given prefix, e.g. `"unit."`.
    pub fn words_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> {
        self.entries
            .iter()
            .filter(move |(k, _)| k.starts_with(prefix))
            .map(|(_, w)| w.as_str())
    }
}

/// Fraction of distinct word types and of word tokens in `doc` that are label words.
pub fn vocabulary_overlap_stats(doc: &Document, vocab: &SeedVocabulary) -> (f64, f64) {
    let labels = vocab.label_words();
    let mut types: FxHashSet<&str> = FxHashSet::default();
    let mut tokens = 0usize;
    let mut hits = 0usize;
    for w in doc.sentences.iter().flat_map(|s| s.words()) {
        tokens += 1;
        types.insert(w);
        if labels.contains(w) {
            hits += 1;
        }
    }
    if tokens == 0 {
        return (0.0, 0.0);
    }
    let type_hits = types.iter().filter(|w| labels.contains(*w)).count();
    (
        type_hits as f64 / types.len() as f64,
        hits as f64 / tokens as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(id: usize, words: &[&str], heads: &[i32]) -> Sentence {
        Sentence {
            id,
            source: Source::Manual,
            tokens: words
                .iter()
                .zip(heads)
                .map(|(w, h)| Token::new(w, "NN", *h, "dep"))
                .collect(),
            gold_labels: None,
        }
    }

    #[test]
    fn bundled_manual_loads_with_gold() {
        let doc = Document::bundled_manual();
        assert!(doc.len() >= 40);
        assert!(doc.sentences.iter().filter(|s| s.gold_labels.is_some()).count() >= 20);
        let first: Vec<&str> = doc.sentences[0].words().collect();
        assert_eq!(first[..4], ["build", "your", "city", "on"]);
    }

    #[test]
    fn bundled_files_round_trip_bit_exactly() {
        for text in [BUNDLED_MANUAL, BUNDLED_DISTRACTORS] {
            let doc = parse_document(text).unwrap();
            assert_eq!(serialize_document(&doc), text);
        }
    }

    #[test]
    fn empty_file_is_an_empty_document() {
        assert_eq!(parse_document("").unwrap().len(), 0);
        assert_eq!(parse_document(&format!("{CORPUS_HEADER}\n")).unwrap().len(), 0);
    }

    #[test]
    fn cycle_is_rejected_with_sentence_id() {
        let s = sent(0, &["a", "b", "c"], &[-1, 2, 1]);
        let text = serialize_document(&Document::new(vec![s]));
        match parse_document(&text) {
            Err(CorpusError::Invalid { id: 0, msg }) => assert!(msg.contains("cycle")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_root_and_bad_gold_rejected() {
        let no_root = sent(0, &["a", "b"], &[1, 0]);
        assert!(no_root.validate().is_err());
        let mut bad_gold = sent(0, &["a"], &[-1]);
        bad_gold.gold_labels = Some(vec![Label::Action, Label::State]);
        assert!(bad_gold.validate().is_err());
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = format!("{CORPUS_HEADER}\nnot json\n");
        assert!(matches!(
            parse_document(&text),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
        assert!(parse_document("{\"id\":0}\n").is_err());
    }

    #[test]
    fn single_token_randomization_is_identity() {
        let doc = Document::new(vec![sent(0, &["city"], &[-1])]);
        assert_eq!(randomize_document(&doc, 3), doc);
    }

    #[test]
    fn randomization_is_deterministic() {
        let doc = Document::bundled_manual();
        assert_eq!(randomize_document(&doc, 9), randomize_document(&doc, 9));
        assert_ne!(randomize_document(&doc, 9), randomize_document(&doc, 10));
    }

    #[test]
    fn eval_document_mixes_equal_counts() {
        let manual = Document::bundled_manual();
        let pool = Document::bundled_distractors();
        let mixed = build_relevance_eval_document(&manual, &pool, 4).unwrap();
        assert_eq!(mixed.len(), 2 * manual.len());
        let tagged = mixed
            .sentences
            .iter()
            .filter(|s| s.source == Source::Manual)
            .count();
        assert_eq!(tagged, manual.len());
        mixed.validate().unwrap();
        assert_eq!(mixed, build_relevance_eval_document(&manual, &pool, 4).unwrap());
        let empty = build_relevance_eval_document(&Document::default(), &pool, 4).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(
            build_relevance_eval_document(&pool, &manual, 4),
            Err(CorpusError::NotEnoughDistractors { .. })
        ));
    }

    #[test]
    fn subsample_keeps_order_and_count() {
        let manual = Document::bundled_manual();
        let half = subsample_document(&manual, 0.5, 1);
        assert_eq!(half.len(), manual.len() / 2);
        half.validate().unwrap();
        assert_eq!(subsample_document(&manual, 0.0, 1).len(), 0);
        assert_eq!(subsample_document(&manual, 1.0, 1), manual);
    }

    #[test]
    fn vocabulary_parses_and_rejects_duplicates() {
        let v = SeedVocabulary::bundled();
        assert_eq!(v.word("action.build_city"), Some("build"));
        assert_eq!(v.word("attr.grassland"), Some("grassland"));
        assert!(SeedVocabulary::parse("a = b\na = c\n").is_err());
        assert!(SeedVocabulary::parse("a = Big\n").is_err());
        assert!(SeedVocabulary::parse("a b\n").is_err());
    }

    #[test]
    fn overlap_stats_edge_cases() {
        let vocab = SeedVocabulary::parse("x = build\ny = city\n").unwrap();
        let none = Document::new(vec![sent(0, &["the", "bank"], &[1, -1])]);
        assert_eq!(vocabulary_overlap_stats(&none, &vocab), (0.0, 0.0));
        let exact = Document::new(vec![sent(0, &["build", "city"], &[-1, 0])]);
        assert_eq!(vocabulary_overlap_stats(&exact, &vocab), (1.0, 1.0));
    }

    #[test]
    fn bundled_overlap_stats_golden() {
        // 22 of 191 word types, 120 of 511 tokens.
        let (types, tokens) =
            vocabulary_overlap_stats(&Document::bundled_manual(), &SeedVocabulary::bundled());
        assert_eq!(types, 22.0 / 191.0);
        assert_eq!(tokens, 120.0 / 511.0);
    }

    #[test]
    fn latent_document_has_k_single_token_sentences() {
        let doc = latent_document(3);
        doc.validate().unwrap();
        assert_eq!(doc.len(), 3);
        assert_eq!(doc.sentences[2].tokens[0].word, "latent_2");
        assert!(latent_document(0).is_empty());
    }
}
