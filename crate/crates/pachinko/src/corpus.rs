//! Corpus ingestion, bag-of-words and vocabulary file formats, and
//! cross-validation fold splitting.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus has no non-empty documents")]
    EmptyCorpus,
    #[error("format error: {0}")]
    Format(String),
    #[error("split error: {0}")]
    Split(String),
}

/// Dense word-id to string bijection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    /// Placeholder vocabulary `w0..w{v-1}` for corpora loaded without word
    /// strings.
    pub fn anonymous(v: usize) -> Self {
        let mut vocab = Vocabulary::new();
        for i in 0..v {
            vocab.intern(&format!("w{i}"));
        }
        vocab
    }

    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Self, CorpusError> {
        let mut vocab = Vocabulary::new();
        for w in words {
            let w = w.into();
            if vocab.index.contains_key(&w) {
                return Err(CorpusError::Format(format!("duplicate vocabulary word {w:?}")));
            }
            vocab.intern(&w);
        }
        Ok(vocab)
    }

    /// Returns the id for `word`, assigning the next dense id on first sight.
    pub fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    pub tokens: Vec<u32>,
    /// Provenance only; never consulted by inference.
    pub label: Option<String>,
}

impl Document {
    pub fn new(tokens: Vec<u32>) -> Self {
        Document { tokens, label: None }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    pub fn n_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn mean_doc_len(&self) -> f64 {
        if self.documents.is_empty() {
            0.0
        } else {
            self.total_tokens() as f64 / self.n_docs() as f64
        }
    }

    /// Checks every token id against the vocabulary size.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let v = self.vocabulary.len() as u32;
        for (j, d) in self.documents.iter().enumerate() {
            if let Some(&w) = d.tokens.iter().find(|&&w| w >= v) {
                return Err(CorpusError::Format(format!(
                    "document {j} has token id {w} outside vocabulary of size {v}"
                )));
            }
        }
        Ok(())
    }
}

/// True topic labels for a generated corpus, used by structure-recovery
/// scoring.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    /// labels[doc][token] = (true super-topic, true sub-topic).
    pub labels: Vec<Vec<(usize, usize)>>,
    /// Human-readable definition per sub-topic (e.g. which grid row or
    /// column it covers). May be empty for generators without one.
    pub sub_defs: Vec<String>,
    /// Sub-topic ids reachable from each super-topic.
    pub super_defs: Vec<Vec<usize>>,
}

impl GroundTruth {
    /// Checks that every corpus token has exactly one label pair.
    pub fn matches(&self, corpus: &Corpus) -> bool {
        self.labels.len() == corpus.n_docs()
            && self
                .labels
                .iter()
                .zip(&corpus.documents)
                .all(|(l, d)| l.len() == d.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub lowercase: bool,
    /// Tokens shorter than this many characters are dropped.
    pub min_token_len: usize,
    /// Keep documents that end up with zero tokens.
    pub keep_empty: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            lowercase: true,
            min_token_len: 2,
            keep_empty: false,
        }
    }
}

/// Builds a corpus from text lines, one document per line. Tokens split on
/// non-alphanumeric runs; vocabulary ids follow first appearance.
pub fn ingest_text(
    lines: impl IntoIterator<Item = std::io::Result<String>>,
    options: &IngestOptions,
) -> Result<Corpus, CorpusError> {
    let mut vocabulary = Vocabulary::new();
    let mut documents = Vec::new();
    for line in lines {
        let line = line?;
        let normalized = if options.lowercase {
            line.to_lowercase()
        } else {
            line
        };
        let tokens: Vec<u32> = normalized
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().count() >= options.min_token_len.max(1))
            .map(|t| vocabulary.intern(t))
            .collect();
        if !tokens.is_empty() || options.keep_empty {
            documents.push(Document::new(tokens));
        }
    }
    if documents.iter().all(Document::is_empty) {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Corpus {
        documents,
        vocabulary,
    })
}

/// Reconstructs documents from (doc_id, word_id, count) triples. Tokens are
/// laid out by ascending word id; documents appear in ascending doc id and
/// ids without any triple are skipped. The vocabulary is anonymous.
pub fn load_bow(
    records: impl IntoIterator<Item = (usize, u32, u32)>,
    v: usize,
) -> Result<Corpus, CorpusError> {
    let mut docs: BTreeMap<usize, BTreeMap<u32, u64>> = BTreeMap::new();
    for (doc_id, word_id, count) in records {
        if word_id as usize >= v {
            return Err(CorpusError::Format(format!(
                "word id {word_id} outside vocabulary of size {v}"
            )));
        }
        if count == 0 {
            return Err(CorpusError::Format(format!(
                "document {doc_id} word {word_id} has non-positive count"
            )));
        }
        *docs.entry(doc_id).or_default().entry(word_id).or_insert(0) += u64::from(count);
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let documents = docs
        .into_values()
        .map(|counts| {
            let mut tokens = Vec::new();
            for (word, count) in counts {
                tokens.extend(std::iter::repeat_n(word, count as usize));
            }
            Document::new(tokens)
        })
        .collect();
    Ok(Corpus {
        documents,
        vocabulary: Vocabulary::anonymous(v),
    })
}

/// Partitions documents into `k` disjoint folds by shuffled assignment and
/// returns (train, test) corpus pairs. Remainder documents go to the
/// lowest-index folds. Both sides keep the original document order and share
/// the full vocabulary.
pub fn split_folds(
    corpus: &Corpus,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Corpus, Corpus)>, CorpusError> {
    let n = corpus.n_docs();
    if k < 2 {
        return Err(CorpusError::Split(format!("fold count {k} must be at least 2")));
    }
    if n < k {
        return Err(CorpusError::Split(format!(
            "{n} documents cannot fill {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let base = n / k;
    let rem = n % k;
    let mut folds: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut cursor = 0;
    for i in 0..k {
        let size = base + usize::from(i < rem);
        let mut fold: Vec<usize> = order[cursor..cursor + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        cursor += size;
    }
    let mut out = Vec::with_capacity(k);
    for fold in &folds {
        let in_fold: Vec<bool> = {
            let mut mask = vec![false; n];
            for &j in fold {
                mask[j] = true;
            }
            mask
        };
        let test_docs = fold.iter().map(|&j| corpus.documents[j].clone()).collect();
        let train_docs = (0..n)
            .filter(|&j| !in_fold[j])
            .map(|j| corpus.documents[j].clone())
            .collect();
        out.push((
            Corpus {
                documents: train_docs,
                vocabulary: corpus.vocabulary.clone(),
            },
            Corpus {
                documents: test_docs,
                vocabulary: corpus.vocabulary.clone(),
            },
        ));
    }
    Ok(out)
}

/// Reads the bag-of-words format: header `V N_DOCS`, then one
/// `doc_id word_id count` triple per line. Blank lines are ignored.
pub fn read_bow(reader: impl BufRead) -> Result<Corpus, CorpusError> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(CorpusError::Format("missing bag-of-words header".into())),
        }
    };
    let mut parts = header.split_whitespace();
    let v: usize = parse_field(parts.next(), "vocab size", &header)?;
    let n_docs: usize = parse_field(parts.next(), "document count", &header)?;
    if parts.next().is_some() {
        return Err(CorpusError::Format(format!("malformed header {header:?}")));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let doc_id: usize = parse_field(parts.next(), "doc id", &line)?;
        let word_id: u32 = parse_field(parts.next(), "word id", &line)?;
        let count: u32 = parse_field(parts.next(), "count", &line)?;
        if parts.next().is_some() {
            return Err(CorpusError::Format(format!("malformed triple {line:?}")));
        }
        if doc_id >= n_docs {
            return Err(CorpusError::Format(format!(
                "doc id {doc_id} outside header document count {n_docs}"
            )));
        }
        records.push((doc_id, word_id, count));
    }
    load_bow(records, v)
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    name: &str,
    line: &str,
) -> Result<T, CorpusError> {
    field
        .ok_or_else(|| CorpusError::Format(format!("missing {name} in {line:?}")))?
        .parse()
        .map_err(|_| CorpusError::Format(format!("bad {name} in {line:?}")))
}

/// Writes the bag-of-words format read by `read_bow`. Word ids within a
/// document are emitted in ascending order.
pub fn write_bow(corpus: &Corpus, mut writer: impl Write) -> Result<(), CorpusError> {
    writeln!(writer, "{} {}", corpus.vocabulary.len(), corpus.n_docs())?;
    for (j, doc) in corpus.documents.iter().enumerate() {
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for &w in &doc.tokens {
            *counts.entry(w).or_insert(0) += 1;
        }
        for (w, c) in counts {
            writeln!(writer, "{j} {w} {c}")?;
        }
    }
    Ok(())
}

/// Reads a vocabulary file: one word per line, line number = word id.
pub fn read_vocabulary(reader: impl BufRead) -> Result<Vocabulary, CorpusError> {
    let mut words = Vec::new();
    for line in reader.lines() {
        words.push(line?);
    }
    while words.last().is_some_and(|w| w.is_empty()) {
        words.pop();
    }
    Vocabulary::from_words(words)
}

pub fn write_vocabulary(vocab: &Vocabulary, mut writer: impl Write) -> Result<(), CorpusError> {
    for w in vocab.words() {
        writeln!(writer, "{w}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(items: &[&str]) -> Vec<std::io::Result<String>> {
        items.iter().map(|s| Ok(s.to_string())).collect()
    }

    #[test]
    fn ingest_builds_first_appearance_vocab() {
        let c = ingest_text(lines(&["cat dog", "dog dog"]), &IngestOptions::default()).unwrap();
        assert_eq!(c.vocabulary.len(), 2);
        assert_eq!(c.vocabulary.word(0), "cat");
        assert_eq!(c.documents[0].tokens, vec![0, 1]);
        assert_eq!(c.documents[1].tokens, vec![1, 1]);
    }

    #[test]
    fn ingest_drops_empty_lines() {
        let c = ingest_text(lines(&["", "cat cat"]), &IngestOptions::default()).unwrap();
        assert_eq!(c.n_docs(), 1);
        assert_eq!(c.documents[0].tokens, vec![0, 0]);
    }

    #[test]
    fn ingest_lowercases_and_splits_on_punctuation() {
        let opts = IngestOptions {
            min_token_len: 1,
            ..IngestOptions::default()
        };
        let c = ingest_text(lines(&["A a a."]), &opts).unwrap();
        assert_eq!(c.vocabulary.len(), 1);
        assert_eq!(c.documents[0].tokens, vec![0, 0, 0]);
    }

    #[test]
    fn ingest_default_drops_single_char_tokens() {
        let c = ingest_text(lines(&["a cat I saw"]), &IngestOptions::default()).unwrap();
        assert_eq!(c.vocabulary.words(), ["cat", "saw"]);
        assert_eq!(c.documents[0].tokens, vec![0, 1]);
    }

    #[test]
    fn ingest_all_empty_is_error() {
        let e = ingest_text(lines(&["", "."]), &IngestOptions::default()).unwrap_err();
        assert!(matches!(e, CorpusError::EmptyCorpus));
    }

    #[test]
    fn load_bow_expands_sorted_tokens() {
        let c = load_bow([(0, 1, 2), (0, 0, 1)], 2).unwrap();
        assert_eq!(c.documents[0].tokens, vec![0, 1, 1]);
        assert_eq!(c.vocabulary.len(), 2);
    }

    #[test]
    fn load_bow_rejects_bad_records() {
        assert!(matches!(load_bow([], 5).unwrap_err(), CorpusError::EmptyCorpus));
        assert!(matches!(
            load_bow([(0, 4, 1)], 3).unwrap_err(),
            CorpusError::Format(_)
        ));
        assert!(matches!(
            load_bow([(0, 0, 0)], 3).unwrap_err(),
            CorpusError::Format(_)
        ));
    }

    #[test]
    fn split_folds_partitions_disjointly() {
        let docs = (0..11)
            .map(|i| Document::new(vec![i as u32 % 3]))
            .collect();
        let corpus = Corpus {
            documents: docs,
            vocabulary: Vocabulary::anonymous(3),
        };
        let mut rng = crate::exec::rng_from_seed(3);
        let folds = split_folds(&corpus, 5, &mut rng).unwrap();
        assert_eq!(folds.len(), 5);
        let sizes: Vec<usize> = folds.iter().map(|(_, test)| test.n_docs()).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
        for (train, test) in &folds {
            assert_eq!(train.n_docs() + test.n_docs(), 11);
            assert_eq!(train.vocabulary, corpus.vocabulary);
        }
        let total: usize = sizes.iter().sum();
        assert_eq!(total, 11);
    }

    #[test]
    fn split_folds_rejects_undersized_corpus() {
        let corpus = Corpus {
            documents: (0..3).map(|_| Document::new(vec![0])).collect(),
            vocabulary: Vocabulary::anonymous(1),
        };
        let mut rng = crate::exec::rng_from_seed(0);
        assert!(matches!(
            split_folds(&corpus, 5, &mut rng).unwrap_err(),
            CorpusError::Split(_)
        ));
    }

    #[test]
    fn bow_round_trip() {
        let c = load_bow([(0, 1, 2), (0, 0, 1), (2, 1, 1)], 3).unwrap();
        let mut buf = Vec::new();
        write_bow(&c, &mut buf).unwrap();
        let back = read_bow(buf.as_slice()).unwrap();
        assert_eq!(back.documents, c.documents);
    }

    #[test]
    fn vocabulary_round_trip() {
        let v = Vocabulary::from_words(["alpha", "beta", "gamma"]).unwrap();
        let mut buf = Vec::new();
        write_vocabulary(&v, &mut buf).unwrap();
        let back = read_vocabulary(buf.as_slice()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("beta"), Some(1));
    }
}
