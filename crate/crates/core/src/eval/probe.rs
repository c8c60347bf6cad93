//! TF-IDF features and a multinomial logistic-regression probe scored by
//! k-fold cross-validation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{f1_scores, F1Scores};
use crate::corpus::BowCorpus;
use crate::error::{Error, Result};
use crate::rng;

/// Sparse feature vector as sorted `(index, value)` pairs.
pub type SparseVec = Vec<(usize, f64)>;

/// L2-normalised TF-IDF rows with smoothed idf `ln((1+D)/(1+df)) + 1`.
pub fn tfidf(corpus: &BowCorpus) -> Vec<SparseVec> {
    let n = corpus.num_docs() as f64;
    let idf: Vec<f64> = corpus
        .document_frequencies()
        .into_iter()
        .map(|df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
        .collect();
    corpus
        .docs
        .iter()
        .map(|doc| {
            let mut row: SparseVec = doc.iter().map(|(t, c)| (t, c as f64 * idf[t])).collect();
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|(_, v)| *v /= norm);
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub folds: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            iterations: 200,
            learning_rate: 2.0,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Softmax regression; the last column of `weights` is the bias.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub weights: Array2<f64>,
}

impl LogisticRegression {
    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    fn scores(&self, x: &SparseVec) -> Vec<f64> {
        let bias = self.weights.ncols() - 1;
        (0..self.num_classes())
            .map(|c| {
                let row = self.weights.row(c);
                row[bias] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &SparseVec) -> Vec<f64> {
        let mut s = self.scores(x);
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        s.iter_mut().for_each(|v| *v = (*v - max).exp());
        let z: f64 = s.iter().sum();
        s.iter_mut().for_each(|v| *v /= z);
        s
    }

    pub fn predict(&self, x: &SparseVec) -> usize {
        argmax(&self.scores(x))
    }

    /// Full-batch gradient descent on mean cross-entropy plus `l2/2 ‖W‖²`
    /// (bias excluded from the penalty).
    pub fn fit(
        xs: &[&SparseVec],
        ys: &[usize],
        dim: usize,
        num_classes: usize,
        config: &ProbeConfig,
    ) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", xs.len(), ys.len())));
        }
        if xs.is_empty() || num_classes == 0 {
            return Err(Error::InvalidConfig("probe needs rows and classes".into()));
        }
        if let Some(&y) = ys.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Shape(format!("label {y} outside {num_classes} classes")));
        }
        let mut model = Self {
            weights: Array2::zeros((num_classes, dim + 1)),
        };
        let n = xs.len() as f64;
        let mut grad = Array2::<f64>::zeros((num_classes, dim + 1));
        for _ in 0..config.iterations {
            grad.fill(0.0);
            for (x, &y) in xs.iter().zip(ys) {
                let p = model.predict_proba(x);
                for (c, pc) in p.into_iter().enumerate() {
                    let e = (pc - f64::from(u8::from(c == y))) / n;
                    let mut g = grad.row_mut(c);
                    g[dim] += e;
                    for &(j, v) in x.iter() {
                        g[j] += e * v;
                    }
                }
            }
            if config.l2 > 0.0 {
                let mut w = model.weights.slice(ndarray::s![.., ..dim]).to_owned();
                w *= config.l2;
                grad.slice_mut(ndarray::s![.., ..dim]).zip_mut_with(&w, |g, w| *g += w);
            }
            model.weights.scaled_add(-config.learning_rate, &grad);
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                stage: "probe",
                detail: "non-finite weights".into(),
            });
        }
        Ok(model)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Seeded fold index of every row. Fold sizes differ by at most one and
/// depend only on `n`, `folds` and `seed`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub test_size: usize,
    pub f1_micro: f64,
    pub f1_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub num_classes: usize,
    /// Rows that carried a label and took part in the probe.
    pub labelled: usize,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub folds: Vec<FoldScore>,
}

/// Trains a probe on all folds but one and scores the held-out fold, for
/// every fold. Rows with `None` labels keep their fold slot but are skipped,
/// so pipelines with different unassigned documents share the same split.
pub fn kfold_probe(
    features: &[SparseVec],
    dim: usize,
    labels: &[Option<usize>],
    num_classes: usize,
    config: &ProbeConfig,
) -> Result<ClassificationReport> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if config.folds < 2 || config.folds > features.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot split {} rows into {} folds",
            features.len(),
            config.folds
        )));
    }
    let fold = fold_assignment(features.len(), config.folds, config.seed);
    let mut scores = Vec::with_capacity(config.folds);
    for f in 0..config.folds {
        let (mut train_x, mut train_y, mut test_x, mut test_y) = (vec![], vec![], vec![], vec![]);
        for (i, label) in labels.iter().enumerate() {
            let Some(y) = *label else { continue };
            if fold[i] == f {
                test_x.push(&features[i]);
                test_y.push(y);
            } else {
                train_x.push(&features[i]);
                train_y.push(y);
            }
        }
        if test_x.is_empty() || train_x.is_empty() {
            continue;
        }
        let model = LogisticRegression::fit(&train_x, &train_y, dim, num_classes, config)?;
        let pred: Vec<usize> = test_x.iter().map(|x| model.predict(x)).collect();
        let F1Scores { micro, macro_ } = f1_scores(&pred, &test_y, num_classes)?;
        scores.push(FoldScore {
            fold: f,
            test_size: test_x.len(),
            f1_micro: micro,
            f1_macro: macro_,
        });
    }
    if scores.is_empty() {
        return Err(Error::InvalidConfig("no labelled rows to probe".into()));
    }
    let m = scores.len() as f64;
    Ok(ClassificationReport {
        num_classes,
        labelled: labels.iter().flatten().count(),
        f1_micro: scores.iter().map(|s| s.f1_micro).sum::<f64>() / m,
        f1_macro: scores.iter().map(|s| s.f1_macro).sum::<f64>() / m,
        folds: scores,
    })
}

/// TF-IDF features of `corpus` probed against `labels`.
pub fn probe_corpus(
    corpus: &BowCorpus,
    labels: &[Option<usize>],
    num_classes: usize,
    config: &ProbeConfig,
) -> Result<ClassificationReport> {
    kfold_probe(&tfidf(corpus), corpus.vocab_size(), labels, num_classes, config)
}
