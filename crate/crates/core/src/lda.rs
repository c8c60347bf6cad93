//! Collapsed Gibbs sampling for latent Dirichlet allocation.
//!
//! The sampler keeps per-token topic assignments together with the
//! word-topic and title-topic count matrices. Each sweep removes a token
//! from the counts, evaluates its full conditional
//!
//! ```text
//! p(z_i = j | z_-i) ∝ (n_wj + β) / (n_j + Vβ) · (n_dj + α) / (n_d + kα)
//! ```
//!
//! and re-inserts it under a freshly sampled topic.

use std::cmp::Ordering;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::corpus::{BowCorpus, Dictionary};
use crate::error::{Error, Result};
use crate::rng;

pub const MODEL_FORMAT: &str = "lda/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric title-topic prior. `None` means `50 / k`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_beta() -> f64 {
    0.01
}

fn default_iterations() -> usize {
    300
}

fn default_burn_in() -> usize {
    50
}

impl LdaConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            alpha: None,
            beta: default_beta(),
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            seed: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.alpha() > 0.0 && self.alpha().is_finite()) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidConfig(
                "iterations must exceed burn_in".into(),
            ));
        }
        Ok(())
    }
}

/// Sampler state: assignments and the count matrices they induce.
#[derive(Debug, Clone)]
pub struct LdaState {
    config: LdaConfig,
    alpha: f64,
    vocab_size: usize,
    /// Word index of every token, grouped by document.
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    /// V×k, row-major.
    word_topic: Vec<i64>,
    /// m×k, row-major.
    doc_topic: Vec<i64>,
    topic_totals: Vec<i64>,
    doc_totals: Vec<i64>,
}

fn expand_tokens(corpus: &BowCorpus) -> Vec<Vec<usize>> {
    corpus
        .docs
        .iter()
        .map(|doc| {
            doc.iter()
                .flat_map(|(w, c)| std::iter::repeat_n(w, c as usize))
                .collect()
        })
        .collect()
}

impl LdaState {
    /// Assigns every token occurrence a uniformly random topic.
    pub fn init<R: Rng>(corpus: &BowCorpus, config: &LdaConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let words = expand_tokens(corpus);
        let z = words
            .iter()
            .map(|doc| doc.iter().map(|_| rng.random_range(0..config.k)).collect())
            .collect();
        Self::from_parts(corpus.vocab_size(), words, z, config)
    }

    /// Builds a state from explicit assignments, one per token in the
    /// document's bag-of-words expansion (term index order).
    pub fn from_assignments(corpus: &BowCorpus, config: &LdaConfig, z: Vec<Vec<usize>>) -> Result<Self> {
        config.validate()?;
        let words = expand_tokens(corpus);
        if z.len() != words.len() || z.iter().zip(&words).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Shape("assignments do not match the corpus".into()));
        }
        if z.iter().flatten().any(|&t| t >= config.k) {
            return Err(Error::Shape("assignment outside 0..k".into()));
        }
        Self::from_parts(corpus.vocab_size(), words, z, config)
    }

    fn from_parts(vocab_size: usize, words: Vec<Vec<usize>>, z: Vec<Vec<usize>>, config: &LdaConfig) -> Result<Self> {
        let k = config.k;
        let mut state = Self {
            config: config.clone(),
            alpha: config.alpha(),
            vocab_size,
            word_topic: vec![0; vocab_size * k],
            doc_topic: vec![0; words.len() * k],
            topic_totals: vec![0; k],
            doc_totals: vec![0; words.len()],
            words,
            z,
        };
        for d in 0..state.words.len() {
            for pos in 0..state.words[d].len() {
                let topic = state.z[d][pos];
                state.add(d, pos, topic, 1);
            }
        }
        Ok(state)
    }

    fn add(&mut self, doc: usize, pos: usize, topic: usize, delta: i64) {
        let k = self.config.k;
        let w = self.words[doc][pos];
        self.word_topic[w * k + topic] += delta;
        self.doc_topic[doc * k + topic] += delta;
        self.topic_totals[topic] += delta;
        self.doc_totals[doc] += delta;
    }

    /// Removes the token at `(doc, pos)` from the counts.
    pub fn exclude(&mut self, doc: usize, pos: usize) {
        let topic = self.z[doc][pos];
        self.add(doc, pos, topic, -1);
    }

    /// Re-inserts the token at `(doc, pos)` under `topic`.
    pub fn include(&mut self, doc: usize, pos: usize, topic: usize) {
        self.z[doc][pos] = topic;
        self.add(doc, pos, topic, 1);
    }

    /// Unnormalized full conditional for a token of word `w` in `doc`.
    fn weights_into(&self, doc: usize, w: usize, out: &mut [f64]) {
        let k = self.config.k;
        let beta = self.config.beta;
        let v_beta = self.vocab_size as f64 * beta;
        let doc_denom = self.doc_totals[doc] as f64 + k as f64 * self.alpha;
        let wt = &self.word_topic[w * k..(w + 1) * k];
        let dt = &self.doc_topic[doc * k..(doc + 1) * k];
        for j in 0..k {
            let word_part = (wt[j] as f64 + beta) / (self.topic_totals[j] as f64 + v_beta);
            let doc_part = (dt[j] as f64 + self.alpha) / doc_denom;
            out[j] = word_part * doc_part;
        }
    }

    /// Normalized full conditional of the token at `(doc, pos)`.
    ///
    /// The token must already be excluded from the counts.
    pub fn conditional(&self, doc: usize, pos: usize) -> Result<Vec<f64>> {
        let k = self.config.k;
        let w = self.words[doc][pos];
        let negative = self.word_topic[w * k..(w + 1) * k]
            .iter()
            .chain(&self.doc_topic[doc * k..(doc + 1) * k])
            .chain(&self.topic_totals)
            .any(|&c| c < 0)
            || self.doc_totals[doc] < 0;
        if negative {
            return Err(Error::CorruptState(format!(
                "negative count around document {doc}, word {w}"
            )));
        }
        let mut p = vec![0.0; k];
        self.weights_into(doc, w, &mut p);
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Ok(p)
    }

    /// Resamples every token once, in document order.
    pub fn sweep<R: Rng>(&mut self, rng: &mut R) {
        let k = self.config.k;
        let mut weights = vec![0.0; k];
        for doc in 0..self.words.len() {
            for pos in 0..self.words[doc].len() {
                self.exclude(doc, pos);
                self.weights_into(doc, self.words[doc][pos], &mut weights);
                let topic = sample_index(&weights, rng);
                self.include(doc, pos, topic);
            }
        }
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_docs(&self) -> usize {
        self.words.len()
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    pub fn doc_words(&self, doc: usize) -> &[usize] {
        &self.words[doc]
    }

    pub fn word_topic_count(&self, w: usize, topic: usize) -> i64 {
        self.word_topic[w * self.config.k + topic]
    }

    pub fn doc_topic_count(&self, doc: usize, topic: usize) -> i64 {
        self.doc_topic[doc * self.config.k + topic]
    }

    pub fn topic_total(&self, topic: usize) -> i64 {
        self.topic_totals[topic]
    }

    /// Word-topic counts as a V×k matrix.
    pub fn word_topic_matrix(&self) -> Array2<i64> {
        Array2::from_shape_vec((self.vocab_size, self.config.k), self.word_topic.clone())
            .expect("shape matches storage")
    }

    /// Title-topic counts as an m×k matrix.
    pub fn doc_topic_matrix(&self) -> Array2<i64> {
        Array2::from_shape_vec((self.words.len(), self.config.k), self.doc_topic.clone())
            .expect("shape matches storage")
    }

    /// Recounts both matrices from the assignments and compares them with
    /// the incrementally maintained ones.
    pub fn check_consistency(&self) -> Result<()> {
        let fresh = Self::from_parts(self.vocab_size, self.words.clone(), self.z.clone(), &self.config)?;
        if fresh.word_topic != self.word_topic
            || fresh.doc_topic != self.doc_topic
            || fresh.topic_totals != self.topic_totals
            || fresh.doc_totals != self.doc_totals
        {
            return Err(Error::CorruptState("counts disagree with assignments".into()));
        }
        Ok(())
    }

    /// `log p(w | z)` with τ integrated out.
    pub fn log_likelihood(&self) -> f64 {
        let k = self.config.k;
        let beta = self.config.beta;
        let v_beta = self.vocab_size as f64 * beta;
        let mut ll = k as f64 * (ln_gamma(v_beta) - self.vocab_size as f64 * ln_gamma(beta));
        for j in 0..k {
            ll -= ln_gamma(self.topic_totals[j] as f64 + v_beta);
            for w in 0..self.vocab_size {
                ll += ln_gamma(self.word_topic[w * k + j] as f64 + beta);
            }
        }
        ll
    }

    /// Posterior mean of the topic-word distributions (k×V).
    pub fn estimate_tau(&self) -> TopicWordDistribution {
        let k = self.config.k;
        let beta = self.config.beta;
        let v_beta = self.vocab_size as f64 * beta;
        let tau = Array2::from_shape_fn((k, self.vocab_size), |(j, w)| {
            (self.word_topic[w * k + j] as f64 + beta) / (self.topic_totals[j] as f64 + v_beta)
        });
        TopicWordDistribution { tau }
    }

    /// Posterior mean of the title-topic distributions (m×k).
    pub fn estimate_theta(&self) -> DocTopicDistribution {
        let k = self.config.k;
        let k_alpha = k as f64 * self.alpha;
        let theta = Array2::from_shape_fn((self.words.len(), k), |(d, j)| {
            (self.doc_topic[d * k + j] as f64 + self.alpha) / (self.doc_totals[d] as f64 + k_alpha)
        });
        DocTopicDistribution { theta }
    }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (j, &w) in weights.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn init_assignments<R: Rng>(corpus: &BowCorpus, config: &LdaConfig, rng: &mut R) -> Result<LdaState> {
    LdaState::init(corpus, config, rng)
}

pub fn gibbs_sweep<R: Rng>(state: &mut LdaState, rng: &mut R) {
    state.sweep(rng)
}

/// Runs `config.iterations` sweeps from a seeded random initialization.
pub fn train(corpus: &BowCorpus, config: &LdaConfig) -> Result<LdaState> {
    let mut rng = rng::seeded(config.seed);
    let mut state = LdaState::init(corpus, config, &mut rng)?;
    for _ in 0..config.iterations {
        state.sweep(&mut rng);
    }
    Ok(state)
}

/// τ: row `j` is the word distribution of topic `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordDistribution {
    pub tau: Array2<f64>,
}

impl TopicWordDistribution {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let v = rows.first().map_or(0, Vec::len);
        if k == 0 || v == 0 || rows.iter().any(|r| r.len() != v) {
            return Err(Error::Shape("tau must be a non-empty rectangular matrix".into()));
        }
        let tau = Array2::from_shape_vec((k, v), rows.into_iter().flatten().collect())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self { tau })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.tau.outer_iter().map(|r| r.to_vec()).collect()
    }

    pub fn k(&self) -> usize {
        self.tau.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.tau.ncols()
    }

    pub fn prob(&self, topic: usize, word: usize) -> f64 {
        self.tau[[topic, word]]
    }

    /// The `n` most probable words of `topic`, ties broken by word index.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<usize> {
        let row = self.tau.row(topic);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }
}

pub fn top_words(tau: &TopicWordDistribution, topic: usize, n: usize) -> Vec<usize> {
    tau.top_words(topic, n)
}

/// ϑ: row `d` is the topic mixture of title `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTopicDistribution {
    pub theta: Array2<f64>,
}

impl DocTopicDistribution {
    /// The highest-probability topic per title, lower index on ties.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.theta
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &p)| if p > best.1 { (j, p) } else { best })
                    .0
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceScores {
    pub per_topic: Vec<f64>,
    pub mean: f64,
}

/// UMass coherence of each topic's `top_n` words.
///
/// For ranked top words `v_1..v_n` the score is
/// `Σ_{m>l} log((D(v_m, v_l) + 1) / D(v_l))` where `D` counts documents
/// containing all of its arguments.
pub fn coherence(tau: &TopicWordDistribution, corpus: &BowCorpus, top_n: usize) -> Result<CoherenceScores> {
    if tau.vocab_size() != corpus.vocab_size() {
        return Err(Error::Shape("tau and corpus vocabularies differ".into()));
    }
    let df = corpus.document_frequencies();
    let per_topic = (0..tau.k())
        .map(|topic| {
            let top = tau.top_words(topic, top_n);
            let mut score = 0.0;
            for (m, &later) in top.iter().enumerate().skip(1) {
                for &earlier in &top[..m] {
                    if df[earlier] == 0 {
                        return Err(Error::UndefinedCoherence { topic });
                    }
                    let co = corpus
                        .docs
                        .iter()
                        .filter(|d| d.contains(earlier) && d.contains(later))
                        .count();
                    score += ((co as f64 + 1.0) / df[earlier] as f64).ln();
                }
            }
            Ok(score)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(CoherenceScores { per_topic, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub best_k: usize,
    /// `(k, mean coherence)` in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Trains one model per candidate `k` with the template's seed and returns
/// the candidate with the highest mean coherence; ties go to the smaller k.
pub fn select_k(corpus: &BowCorpus, candidates: &[usize], template: &LdaConfig, top_n: usize) -> Result<KSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no k candidates".into()));
    }
    let scores = candidates
        .par_iter()
        .map(|&k| {
            let config = LdaConfig { k, ..template.clone() };
            let state = train(corpus, &config)?;
            let c = coherence(&state.estimate_tau(), corpus, top_n)?;
            Ok((k, c.mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let best_k = scores
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, s)| match best {
            Some((bk, bs)) if bs > s || (bs == s && bk < k) => Some((bk, bs)),
            _ => Some((k, s)),
        })
        .map(|(k, _)| k)
        .expect("candidates is non-empty");
    Ok(KSelection { best_k, scores })
}

/// Serialized trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    pub format: String,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub tau: Vec<Vec<f64>>,
    pub dictionary: Dictionary,
}

impl LdaModel {
    pub fn from_state(state: &LdaState, dictionary: &Dictionary) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            k: state.k(),
            alpha: state.alpha,
            beta: state.config.beta,
            iterations: state.config.iterations,
            seed: state.config.seed,
            tau: state.estimate_tau().to_rows(),
            dictionary: dictionary.clone(),
        }
    }

    pub fn tau(&self) -> Result<TopicWordDistribution> {
        TopicWordDistribution::from_rows(self.tau.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Format {
                expected: MODEL_FORMAT.into(),
                found: model.format,
            });
        }
        if model.tau.len() != model.k || model.tau.iter().any(|r| r.len() != model.dictionary.len()) {
            return Err(Error::Shape("tau does not match k × |dictionary|".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
