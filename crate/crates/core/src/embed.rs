//! Skip-gram word embeddings trained with a full softmax.
//!
//! The network has no hidden activation: the hidden layer for a target word
//! is its row of the input matrix `W1` (V×N). Output scores are
//! `W2ᵀ h` with `W2` (N×V) and a softmax over the whole vocabulary. `W2` is
//! stored transposed, one context vector per word, so both matrices are
//! indexed by word.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dictionary, TokenizedDocument};
use crate::error::{Error, Result};
use crate::rng;

pub const MODEL_FORMAT: &str = "sgns/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub min_count: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            window: 6,
            min_count: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 {
            return Err(Error::InvalidConfig("dim and window must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingPair {
    pub target: usize,
    pub context: usize,
}

pub fn one_hot(index: usize, vocab_size: usize) -> Vec<u8> {
    let mut v = vec![0; vocab_size];
    v[index] = 1;
    v
}

/// Target/context pairs for every in-vocabulary token and every offset
/// within `window`, in document then position then offset order.
/// Out-of-vocabulary tokens are removed before windowing.
pub fn generate_pairs(docs: &[TokenizedDocument], dict: &Dictionary, window: usize) -> Vec<TrainingPair> {
    let mut pairs = Vec::new();
    for doc in docs {
        let ids = dict.encode(doc);
        for (t, &target) in ids.iter().enumerate() {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(ids.len().saturating_sub(1));
            for (c, &context) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                if c != t {
                    pairs.push(TrainingPair { target, context });
                }
            }
        }
    }
    pairs
}

fn softmax_in_place(scores: &mut Array1<f64>) {
    let max = scores.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    scores.mapv_inplace(|x| (x - max).exp());
    let total = scores.sum();
    scores.mapv_inplace(|x| x / total);
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub dictionary: Dictionary,
    /// `W1`, V×N. Row `w` is the embedding of word `w`.
    pub input: Array2<f64>,
    /// `W2ᵀ`, V×N. Row `w` is the context vector of word `w`.
    pub output: Array2<f64>,
}

/// Gradients of the summed negative log-likelihood, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramGradients {
    pub input: Array2<f64>,
    pub output: Array2<f64>,
}

impl EmbeddingModel {
    pub fn zeros(dictionary: Dictionary, dim: usize) -> Self {
        let v = dictionary.len();
        Self {
            dictionary,
            input: Array2::zeros((v, dim)),
            output: Array2::zeros((v, dim)),
        }
    }

    /// `W1` uniform in `[-0.5/N, 0.5/N]`, `W2` zero.
    pub fn initialize<R: Rng>(dictionary: Dictionary, dim: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(dictionary, dim);
        let bound = 0.5 / dim as f64;
        model
            .input
            .mapv_inplace(|_| rng.random_range(-bound..=bound));
        model
    }

    pub fn vocab_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn vector(&self, word: usize) -> ArrayView1<'_, f64> {
        self.input.row(word)
    }

    pub fn vector_of(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.dictionary.index_of(token).map(|w| self.vector(w))
    }

    /// `p(· | target)` over the vocabulary.
    pub fn forward(&self, target: usize) -> Array1<f64> {
        let mut scores = self.output.dot(&self.input.row(target));
        softmax_in_place(&mut scores);
        scores
    }

    /// Negative log-likelihood of `batch` and its exact gradients.
    pub fn loss_and_grad(&self, batch: &[TrainingPair]) -> Result<(f64, SkipGramGradients)> {
        let mut grads = SkipGramGradients {
            input: Array2::zeros(self.input.raw_dim()),
            output: Array2::zeros(self.output.raw_dim()),
        };
        let mut loss = 0.0;
        for pair in batch {
            let h = self.input.row(pair.target);
            let mut err = self.forward(pair.target);
            loss -= err[pair.context].ln();
            err[pair.context] -= 1.0;
            // dL/dh = W2 e, dL/dW2ᵀ[v] = e_v h
            let dh = err.dot(&self.output);
            grads.input.row_mut(pair.target).scaled_add(1.0, &dh);
            for (v, mut row) in grads.output.axis_iter_mut(Axis(0)).enumerate() {
                row.scaled_add(err[v], &h);
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                stage: "skip-gram",
                detail: format!("non-finite loss {loss}"),
            });
        }
        Ok((loss, grads))
    }

    /// One SGD update on a single pair; returns the pair's loss.
    fn sgd_step(&mut self, pair: TrainingPair, lr: f64) -> f64 {
        let h = self.input.row(pair.target).to_owned();
        let mut err = self.output.dot(&h);
        softmax_in_place(&mut err);
        let loss = -err[pair.context].ln();
        err[pair.context] -= 1.0;
        let dh = err.dot(&self.output);
        for (v, mut row) in self.output.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(-lr * err[v], &h);
        }
        self.input.row_mut(pair.target).scaled_add(-lr, &dh);
        loss
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        cosine(self.input.row(a), self.input.row(b))
    }

    /// The `n` words closest to `word` by cosine, excluding `word` itself;
    /// ties broken by word index.
    pub fn nearest(&self, word: usize, n: usize) -> Vec<(usize, f64)> {
        let query = self.input.row(word);
        let mut scored: Vec<(usize, f64)> = (0..self.vocab_size())
            .filter(|&w| w != word)
            .map(|w| (w, cosine(query, self.input.row(w))))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
    }

    pub fn to_file(&self) -> EmbeddingFile {
        let rows = |m: &Array2<f64>| -> BTreeMap<String, Vec<f64>> {
            self.dictionary
                .tokens()
                .iter()
                .zip(m.outer_iter())
                .map(|(t, r)| (t.clone(), r.to_vec()))
                .collect()
        };
        EmbeddingFile {
            format: MODEL_FORMAT.to_string(),
            dim: self.dim(),
            vectors: rows(&self.input),
            context: Some(rows(&self.output)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    /// Loads a model; without stored context vectors `W2` is zero.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: EmbeddingFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format {
                expected: MODEL_FORMAT.into(),
                found: file.format,
            });
        }
        let dictionary = Dictionary::from_tokens(file.vectors.keys().cloned().collect(), 1)?;
        let fill = |rows: &BTreeMap<String, Vec<f64>>| -> Result<Array2<f64>> {
            if rows.len() != dictionary.len() {
                return Err(Error::Shape("context vectors do not match vocabulary".into()));
            }
            let mut m = Array2::zeros((dictionary.len(), file.dim));
            for (i, token) in dictionary.tokens().iter().enumerate() {
                let row = rows
                    .get(token)
                    .ok_or_else(|| Error::Shape(format!("missing vector for {token:?}")))?;
                if row.len() != file.dim {
                    return Err(Error::Shape(format!("vector for {token:?} has wrong length")));
                }
                m.row_mut(i).assign(&ArrayView1::from(row.as_slice()));
            }
            Ok(m)
        };
        let input = fill(&file.vectors)?;
        let output = match &file.context {
            Some(c) => fill(c)?,
            None => Array2::zeros(input.raw_dim()),
        };
        Ok(Self {
            dictionary,
            input,
            output,
        })
    }

    /// `word,v1,...,vN` rows for external visualization.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["word".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for (token, row) in self.dictionary.tokens().iter().zip(self.input.outer_iter()) {
            let mut record = vec![token.clone()];
            record.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub format: String,
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<BTreeMap<String, Vec<f64>>>,
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(model: &EmbeddingModel, a: usize, b: usize) -> f64 {
    model.cosine(a, b)
}

pub fn nearest(model: &EmbeddingModel, word: usize, n: usize) -> Vec<(usize, f64)> {
    model.nearest(word, n)
}

#[derive(Debug, Clone)]
pub struct TrainedEmbedding {
    pub model: EmbeddingModel,
    /// Mean per-pair loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// SGD over shuffled pairs with a learning rate decaying linearly to 0.01%
/// of its initial value.
pub fn train(docs: &[TokenizedDocument], config: &SkipGramConfig) -> Result<TrainedEmbedding> {
    config.validate()?;
    let dictionary = Dictionary::build(docs, config.min_count)?;
    let mut rng = rng::seeded(config.seed);
    let mut model = EmbeddingModel::initialize(dictionary, config.dim, &mut rng);
    let mut pairs = generate_pairs(docs, &model.dictionary, config.window);
    let total_steps = (pairs.len() * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        pairs.shuffle(&mut rng);
        let mut sum = 0.0;
        for &pair in &pairs {
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
            sum += model.sgd_step(pair, lr);
            step += 1;
        }
        if !sum.is_finite() {
            return Err(Error::Diverged {
                stage: "skip-gram",
                detail: format!("non-finite loss in epoch {epoch}"),
            });
        }
        epoch_losses.push(sum / pairs.len().max(1) as f64);
    }
    Ok(TrainedEmbedding { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn docs(raw: &[&[&str]]) -> Vec<TokenizedDocument> {
        raw.iter()
            .enumerate()
            .map(|(i, t)| TokenizedDocument::new(i.to_string(), t.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn dict(n: usize) -> Dictionary {
        Dictionary::from_tokens((0..n).map(|i| format!("w{i:02}")).collect(), 1).unwrap()
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(3, 10), vec![0, 0, 0, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(one_hot(0, 1), vec![1]);
    }

    #[test]
    fn pair_enumeration() {
        let d = docs(&[&["a", "b", "c"]]);
        let dictionary = Dictionary::build(&d, 1).unwrap();
        let pairs = generate_pairs(&d, &dictionary, 1);
        let tp: Vec<(usize, usize)> = pairs.iter().map(|p| (p.target, p.context)).collect();
        assert_eq!(tp, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert!(generate_pairs(&docs(&[&["a"]]), &dictionary, 3).is_empty());
    }

    #[test]
    fn forward_zero_weights_is_uniform() {
        let m = EmbeddingModel::zeros(dict(4), 3);
        assert_eq!(m.forward(2).to_vec(), vec![0.25; 4]);
    }

    #[test]
    fn forward_hand_instance() {
        let mut m = EmbeddingModel::zeros(dict(3), 2);
        m.input = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        m.output = array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.0]];
        // h = [0.5, 0.5]; scores = [1.5, -0.5, 1.5]
        let e = [1.5f64.exp(), (-0.5f64).exp(), 1.5f64.exp()];
        let z: f64 = e.iter().sum();
        let p = m.forward(2);
        for (got, want) in p.iter().zip(e.iter().map(|x| x / z)) {
            assert_relative_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_batch_has_zero_loss() {
        let m = EmbeddingModel::initialize(dict(3), 2, &mut rng::seeded(0));
        let (loss, g) = m.loss_and_grad(&[]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.input.iter().chain(g.output.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn loss_decreases_on_two_pairs() {
        let mut m = EmbeddingModel::initialize(dict(4), 3, &mut rng::seeded(1));
        let batch = [TrainingPair { target: 0, context: 1 }, TrainingPair { target: 1, context: 2 }];
        let mut losses = Vec::new();
        for _ in 0..100 {
            let (loss, g) = m.loss_and_grad(&batch).unwrap();
            losses.push(loss);
            m.input.scaled_add(-0.5, &g.input);
            m.output.scaled_add(-0.5, &g.output);
        }
        let first: f64 = losses[..10].iter().sum();
        let last: f64 = losses[90..].iter().sum();
        assert!(last < first * 0.5, "{first} -> {last}");
        assert!(losses.windows(2).filter(|w| w[1] <= w[0]).count() >= 90);
    }

    #[test]
    fn cosine_examples() {
        let mut m = EmbeddingModel::zeros(dict(3), 2);
        m.input = array![[1.0, 2.0], [-1.0, -2.0], [3.0, 1.0]];
        assert_relative_eq!(m.cosine(0, 0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(m.cosine(0, 1), -1.0, epsilon = 1e-15);
        assert_relative_eq!(m.cosine(0, 2), 5.0 / (5f64.sqrt() * 10f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn nearest_examples() {
        let m = EmbeddingModel::initialize(dict(6), 4, &mut rng::seeded(5));
        assert!(m.nearest(0, 0).is_empty());
        assert_eq!(m.nearest(0, 10).len(), 5);
        let mut brute: Vec<(usize, f64)> = (1..6).map(|w| (w, m.cosine(0, w))).collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1));
        assert_eq!(m.nearest(0, 3), brute[..3].to_vec());
    }

    #[test]
    fn training_is_seeded_and_zero_epochs_returns_init() {
        let d = docs(&[&["a", "b", "c", "d"], &["b", "c", "a"]]);
        let cfg = SkipGramConfig { dim: 4, min_count: 1, epochs: 3, ..Default::default() };
        let a = train(&d, &cfg).unwrap();
        let b = train(&d, &cfg).unwrap();
        assert_eq!(a.model.input, b.model.input);

        let zero = train(&d, &SkipGramConfig { epochs: 0, ..cfg.clone() }).unwrap();
        let init = EmbeddingModel::initialize(zero.model.dictionary.clone(), 4, &mut rng::seeded(cfg.seed));
        assert_eq!(zero.model, init);
    }

    #[test]
    fn json_round_trip_and_csv() {
        let m = EmbeddingModel::initialize(dict(3), 2, &mut rng::seeded(2));
        let back = EmbeddingModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "word,v1,v2");
        assert_eq!(text.lines().count(), 4);
    }

    proptest! {
        #[test]
        fn pairs_are_symmetric_and_bounded(
            raw in prop::collection::vec(prop::collection::vec("[a-d]", 0..8), 1..4),
            window in 1usize..4,
        ) {
            let d: Vec<TokenizedDocument> = raw.into_iter().enumerate()
                .map(|(i, t)| TokenizedDocument::new(i.to_string(), t)).collect();
            prop_assume!(d.iter().any(|x| !x.is_empty()));
            let dictionary = Dictionary::build(&d, 1).unwrap();
            let pairs = generate_pairs(&d, &dictionary, window);
            let tokens: usize = d.iter().map(|x| x.tokens.len()).sum();
            prop_assert!(pairs.len() <= 2 * window * tokens);
            let mut forward: Vec<(usize, usize)> = pairs.iter().map(|p| (p.target, p.context)).collect();
            let mut backward: Vec<(usize, usize)> = pairs.iter().map(|p| (p.context, p.target)).collect();
            forward.sort();
            backward.sort();
            prop_assert_eq!(forward, backward);
            for doc in &d {
                let l = doc.tokens.len();
                if window >= l {
                    prop_assert_eq!(generate_pairs(std::slice::from_ref(doc), &dictionary, window).len(), l * l.saturating_sub(1));
                }
            }
        }

        #[test]
        fn forward_is_a_distribution(seed in 0u64..500, target in 0usize..5) {
            let mut rng = rng::seeded(seed);
            let mut m = EmbeddingModel::zeros(dict(5), 3);
            m.input.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            m.output.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            let p = m.forward(target);
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }
}
