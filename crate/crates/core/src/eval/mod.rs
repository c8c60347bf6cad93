//! Evaluation: classification F1, a TF-IDF probe, next-step sequence
//! metrics, top-k ranking metrics and tabular reports.

pub mod probe;
pub mod ranking;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use probe::{kfold_probe, probe_corpus, tfidf, ClassificationReport, ProbeConfig};
pub use ranking::{ctr, mrr_at_k, precision_at_k, recall_at_k, reciprocal_rank_at_k, RankedQuery, RankingReport};

/// `2TP / (2TP + FP + FN)`, 0 when all counts are zero.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
}

/// Micro F1 pools counts over classes; macro F1 averages per-class F1 over
/// all `num_classes`, so a class absent from both sides contributes 0.
pub fn f1_scores(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<F1Scores> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if num_classes == 0 {
        return Err(Error::InvalidConfig("num_classes must be positive".into()));
    }
    let mut tp = vec![0; num_classes];
    let mut fp = vec![0; num_classes];
    let mut fn_ = vec![0; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Shape(format!("class index outside 0..{num_classes}")));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let micro = f1_from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let macro_ = (0..num_classes)
        .map(|c| f1_from_counts(tp[c], fp[c], fn_[c]))
        .sum::<f64>()
        / num_classes as f64;
    Ok(F1Scores { micro, macro_ })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub steps: usize,
    pub accuracy: f64,
    pub rmse: f64,
}

/// Accuracy of the argmax (lowest index on ties) and the RMSE between each
/// predicted distribution and the one-hot truth, averaged over steps and
/// classes.
pub fn sequence_metrics(distributions: &[Vec<f64>], truth: &[usize]) -> Result<SequenceReport> {
    if distributions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} targets",
            distributions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidConfig("no steps to evaluate".into()));
    }
    let (mut correct, mut sq, mut cells) = (0usize, 0.0, 0usize);
    for (dist, &t) in distributions.iter().zip(truth) {
        if t >= dist.len() {
            return Err(Error::Shape(format!("target {t} outside {} classes", dist.len())));
        }
        let mut best = 0;
        for (i, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = i;
            }
            let y = f64::from(u8::from(i == t));
            sq += (p - y) * (p - y);
        }
        cells += dist.len();
        correct += usize::from(best == t);
    }
    Ok(SequenceReport {
        steps: truth.len(),
        accuracy: correct as f64 / truth.len() as f64,
        rmse: (sq / cells as f64).sqrt(),
    })
}

/// One cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub split: String,
    pub pipeline: String,
}

impl MetricRow {
    pub fn new(metric: impl Into<String>, value: f64, split: &str, pipeline: &str) -> Self {
        Self {
            metric: metric.into(),
            value,
            split: split.into(),
            pipeline: pipeline.into(),
        }
    }
}

impl ClassificationReport {
    pub fn rows(&self, split: &str, pipeline: &str) -> Vec<MetricRow> {
        vec![
            MetricRow::new("f1_micro", self.f1_micro, split, pipeline),
            MetricRow::new("f1_macro", self.f1_macro, split, pipeline),
        ]
    }
}

impl SequenceReport {
    pub fn rows(&self, split: &str, pipeline: &str) -> Vec<MetricRow> {
        vec![
            MetricRow::new("accuracy", self.accuracy, split, pipeline),
            MetricRow::new("rmse", self.rmse, split, pipeline),
        ]
    }
}

impl RankingReport {
    pub fn rows(&self, split: &str, pipeline: &str) -> Vec<MetricRow> {
        let k = self.k;
        vec![
            MetricRow::new(format!("recall_at_{k}"), self.recall_at_k, split, pipeline),
            MetricRow::new(format!("precision_at_{k}"), self.precision_at_k, split, pipeline),
            MetricRow::new(format!("mrr_at_{k}"), self.mrr_at_k, split, pipeline),
            MetricRow::new("ctr", self.ctr, split, pipeline),
        ]
    }
}

pub fn write_rows_csv<W: Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["metric", "value", "split", "pipeline"] {
        return Err(Error::Format {
            expected: "metric,value,split,pipeline".into(),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
