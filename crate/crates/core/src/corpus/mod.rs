//! Title ingestion, normalization, dictionary and bag-of-words construction.

mod stem;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};

pub use stem::porter_stem;

const STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

/// The bundled English stopword list.
pub fn default_stopwords() -> impl Iterator<Item = &'static str> {
    STOPWORDS_EN
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDocument {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            tokens,
        }
    }

    /// Documents that lost every token during cleaning are kept but flagged.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub min_token_len: usize,
    pub stem: bool,
    /// Added on top of the bundled list.
    pub extra_stopwords: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_token_len: 2,
            stem: true,
            extra_stopwords: Vec::new(),
        }
    }
}

/// Lowercases, splits on every non-alphabetic character, drops stopwords and
/// short tokens, then Porter-stems.
///
/// Stemming is iterated to a fixed point and the filters are re-applied to
/// the stems, so feeding the output back in reproduces it exactly.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    config: PreprocessConfig,
    stopwords: HashSet<String>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(PreprocessConfig::default())
    }
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig) -> Self {
        let stopwords = default_stopwords()
            .map(str::to_string)
            .chain(config.extra_stopwords.iter().map(|w| w.to_lowercase()))
            .collect();
        Self { config, stopwords }
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    fn keep(&self, token: &str) -> bool {
        token.chars().count() >= self.config.min_token_len && !self.stopwords.contains(token)
    }

    fn stem_fixpoint(&self, token: String) -> String {
        if !self.config.stem {
            return token;
        }
        let mut current = token;
        loop {
            let next = porter_stem(&current);
            if next == current {
                return current;
            }
            current = next;
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphabetic())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| self.keep(t))
            .map(|t| self.stem_fixpoint(t))
            .filter(|t| self.keep(t))
            .collect()
    }

    pub fn preprocess(&self, doc: &RawDocument) -> TokenizedDocument {
        TokenizedDocument {
            doc_id: doc.doc_id.clone(),
            tokens: self.tokenize(&doc.title),
        }
    }
}

pub fn preprocess(doc: &RawDocument, config: &PreprocessConfig) -> TokenizedDocument {
    Preprocessor::new(config.clone()).preprocess(doc)
}

/// Dense token indices, assigned in lexicographic token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    frequencies: Vec<u64>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    min_count: usize,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequencies: Option<Vec<u64>>,
}

impl Dictionary {
    pub fn build(docs: &[TokenizedDocument], min_count: usize) -> Result<Self> {
        if docs.iter().all(TokenizedDocument::is_empty) {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for token in docs.iter().flat_map(|d| d.tokens.iter()) {
            *counts.entry(token.as_str()).or_default() += 1;
        }
        let (tokens, frequencies): (Vec<String>, Vec<u64>) = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count as u64)
            .map(|(t, c)| (t.to_string(), c))
            .unzip();
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        Ok(Self::from_parts(tokens, frequencies, min_count))
    }

    fn from_parts(tokens: Vec<String>, frequencies: Vec<u64>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            frequencies,
            min_count,
        }
    }

    /// Builds a dictionary over an explicit token list, keeping its order.
    /// Frequencies are unknown and reported as zero.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        let unique: HashSet<&String> = tokens.iter().collect();
        if unique.len() != tokens.len() {
            return Err(Error::InvalidConfig("dictionary tokens must be unique".into()));
        }
        if tokens.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        let frequencies = vec![0; tokens.len()];
        Ok(Self::from_parts(tokens, frequencies, min_count))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.frequencies[index]
    }

    pub fn to_bow(&self, doc: &TokenizedDocument) -> TermCounts {
        let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
        for idx in doc.tokens.iter().filter_map(|t| self.index_of(t)) {
            *counts.entry(idx).or_default() += 1;
        }
        TermCounts(counts.into_iter().collect())
    }

    /// In-vocabulary token indices of `doc`, in document order.
    pub fn encode(&self, doc: &TokenizedDocument) -> Vec<usize> {
        doc.tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DictionaryFile {
            min_count: self.min_count,
            tokens: self.tokens.clone(),
            frequencies: Some(self.frequencies.clone()),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DictionaryFile = serde_json::from_str(text)?;
        let frequencies = file
            .frequencies
            .unwrap_or_else(|| vec![0; file.tokens.len()]);
        if frequencies.len() != file.tokens.len() {
            return Err(Error::Shape(
                "dictionary frequencies and tokens differ in length".into(),
            ));
        }
        let mut dict = Self::from_tokens(file.tokens, file.min_count)?;
        dict.frequencies = frequencies;
        Ok(dict)
    }
}

impl Serialize for Dictionary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DictionaryFile {
            min_count: self.min_count,
            tokens: self.tokens.clone(),
            frequencies: Some(self.frequencies.clone()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dictionary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = DictionaryFile::deserialize(deserializer)?;
        let frequencies = file
            .frequencies
            .unwrap_or_else(|| vec![0; file.tokens.len()]);
        let mut dict =
            Dictionary::from_tokens(file.tokens, file.min_count).map_err(serde::de::Error::custom)?;
        if frequencies.len() != dict.len() {
            return Err(serde::de::Error::custom("frequencies length mismatch"));
        }
        dict.frequencies = frequencies;
        Ok(dict)
    }
}

pub fn build_dictionary(docs: &[TokenizedDocument], min_count: usize) -> Result<Dictionary> {
    Dictionary::build(docs, min_count)
}

pub fn to_bow(doc: &TokenizedDocument, dict: &Dictionary) -> TermCounts {
    dict.to_bow(doc)
}

/// Sparse term counts sorted by term index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermCounts(Vec<(usize, u32)>);

impl TermCounts {
    pub fn from_pairs(mut pairs: Vec<(usize, u32)>) -> Self {
        pairs.retain(|&(_, c)| c > 0);
        pairs.sort_unstable_by_key(|&(i, _)| i);
        Self(pairs)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().copied()
    }

    pub fn get(&self, term: usize) -> u32 {
        self.0
            .binary_search_by_key(&term, |&(i, _)| i)
            .map(|pos| self.0[pos].1)
            .unwrap_or(0)
    }

    pub fn contains(&self, term: usize) -> bool {
        self.get(term) > 0
    }

    /// Total token count.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn distinct(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BowCorpus {
    pub dictionary: Dictionary,
    pub doc_ids: Vec<String>,
    pub docs: Vec<TermCounts>,
}

impl BowCorpus {
    pub fn new(docs: &[TokenizedDocument], dictionary: Dictionary) -> Self {
        let bows = docs.iter().map(|d| dictionary.to_bow(d)).collect();
        Self {
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            docs: bows,
            dictionary,
        }
    }

    /// Builds the dictionary and bag-of-words in one go.
    pub fn build(docs: &[TokenizedDocument], min_count: usize) -> Result<Self> {
        let dictionary = Dictionary::build(docs, min_count)?;
        Ok(Self::new(docs, dictionary))
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.dictionary.len()
    }

    /// Number of documents containing each term.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0; self.vocab_size()];
        for doc in &self.docs {
            for (term, _) in doc.iter() {
                df[term] += 1;
            }
        }
        df
    }
}

/// Reads a `doc_id,title` CSV with a header row.
pub fn read_titles_csv(path: &Path) -> Result<Vec<RawDocument>> {
    let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
    read_titles(file)
}

pub fn read_titles<R: std::io::Read>(reader: R) -> Result<Vec<RawDocument>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "doc_id" || &headers[1] != "title" {
        return Err(Error::Malformed(vec![LineError {
            line: 1,
            message: "expected header `doc_id,title`".into(),
        }]));
    }
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    let mut problems = Vec::new();
    for (i, record) in rdr.deserialize::<RawDocument>().enumerate() {
        let line = i + 2;
        match record {
            Ok(doc) if doc.title.trim().is_empty() => problems.push(LineError {
                line,
                message: format!("document {:?} has an empty title", doc.doc_id),
            }),
            Ok(doc) if !seen.insert(doc.doc_id.clone()) => problems.push(LineError {
                line,
                message: format!("duplicate doc_id {:?}", doc.doc_id),
            }),
            Ok(doc) => docs.push(doc),
            Err(e) => problems.push(LineError {
                line,
                message: e.to_string(),
            }),
        }
    }
    if problems.is_empty() {
        Ok(docs)
    } else {
        Err(Error::Malformed(problems))
    }
}

pub fn write_tokenized_jsonl<W: Write>(docs: &[TokenizedDocument], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tokenized_jsonl<R: std::io::Read>(reader: R) -> Result<Vec<TokenizedDocument>> {
    let mut docs = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(doc) => docs.push(doc),
            Err(e) => problems.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if problems.is_empty() {
        Ok(docs)
    } else {
        Err(Error::Malformed(problems))
    }
}
