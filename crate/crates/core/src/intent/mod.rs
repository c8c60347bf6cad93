//! Next-topic prediction from a user's click history.
//!
//! Events become feature rows (topic, time since the previous click,
//! session number, optionally the liked flag). Numeric features are
//! min-max scaled with bounds from the training split, the topic is
//! one-hot encoded, and sliding windows of `lookback` rows are used to
//! predict the topic of the next click.

pub mod baseline;
pub mod lstm;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};

pub use baseline::{first_order_ceiling, fpm_baseline, markov_baseline, FpmBaseline, MarkovBaseline};
pub use lstm::{forward, lstm_cell, AdamState, LstmParams, SupervisedWindow, TrainConfig};

pub const MODEL_FORMAT: &str = "intent/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: String,
    pub paper_id: String,
    pub topic: usize,
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub session_no: u32,
    #[serde(default)]
    pub liked: bool,
}

/// Which numeric features accompany the one-hot topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default)]
    pub use_liked: bool,
}

impl FeatureSchema {
    pub fn numeric_names(&self) -> Vec<&'static str> {
        let mut names = vec!["time_diff", "session_no"];
        if self.use_liked {
            names.push("liked");
        }
        names
    }

    pub fn numeric_len(&self) -> usize {
        2 + usize::from(self.use_liked)
    }

    pub fn input_dim(&self, k: usize) -> usize {
        k + self.numeric_len()
    }
}

/// Raw features of one click.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub topic: usize,
    pub values: Vec<f64>,
}

/// One row per event. The first event has a time difference of 0.
pub fn featurize(events: &[InteractionEvent], schema: FeatureSchema) -> Vec<FeatureRow> {
    events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let dt = if i == 0 { 0 } else { e.timestamp - events[i - 1].timestamp };
            let mut values = vec![dt as f64, f64::from(e.session_no)];
            if schema.use_liked {
                values.push(f64::from(u8::from(e.liked)));
            }
            FeatureRow { topic: e.topic, values }
        })
        .collect()
}

/// `(x − min) / (max − min)` clamped to `[0, 1]`; 0 when `max = min`.
pub fn normalize(x: f64, min: f64, max: f64) -> f64 {
    if max <= min {
        return 0.0;
    }
    ((x - min) / (max - min)).clamp(0.0, 1.0)
}

pub fn denormalize(y: f64, min: f64, max: f64) -> f64 {
    min + y * (max - min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    /// Per-feature bounds over `rows`; zero bounds when there are none.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>, width: usize) -> Self {
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            for (j, &v) in row.values.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        for j in 0..width {
            if min[j] > max[j] {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(j, &v)| normalize(v, self.min[j], self.max[j]))
            .collect()
    }
}

/// Sliding windows of `lookback` items, each paired with the item after it.
pub fn make_windows<T>(sequence: &[T], lookback: usize) -> Vec<(&[T], &T)> {
    if lookback == 0 {
        return Vec::new();
    }
    (lookback..sequence.len())
        .map(|j| (&sequence[j - lookback..j], &sequence[j]))
        .collect()
}

/// Model input for a run of rows: one-hot topic followed by the scaled
/// numeric features.
pub fn encode_inputs(rows: &[FeatureRow], norm: &NormalizationParams, k: usize) -> Array2<f64> {
    let width = k + norm.min.len();
    let mut x = Array2::zeros((rows.len(), width));
    for (t, row) in rows.iter().enumerate() {
        x[[t, row.topic]] = 1.0;
        for (j, v) in norm.apply(&row.values).into_iter().enumerate() {
            x[[t, k + j]] = v;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntentConfig {
    pub lookback: usize,
    /// Share of every user's events, counted from the start, used for training.
    pub train_fraction: f64,
    pub schema: FeatureSchema,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for IntentConfig {
    fn default() -> Self {
        Self {
            lookback: 5,
            train_fraction: 0.8,
            schema: FeatureSchema::default(),
            train: TrainConfig::default(),
        }
    }
}

impl IntentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::InvalidConfig("lookback must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidConfig("train_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A held-out prediction target with everything the models need.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub user_id: String,
    pub window: SupervisedWindow,
    /// The user's topics before the target, oldest first.
    pub history: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub k: usize,
    pub normalization: NormalizationParams,
    pub train: Vec<SupervisedWindow>,
    /// Topic sequences of every user's training portion.
    pub train_sequences: Vec<Vec<usize>>,
    pub test: Vec<TestCase>,
}

/// Groups events by user, keeping file order within each user.
pub fn group_by_user(events: &[InteractionEvent]) -> BTreeMap<String, Vec<InteractionEvent>> {
    let mut users: BTreeMap<String, Vec<InteractionEvent>> = BTreeMap::new();
    for e in events {
        users.entry(e.user_id.clone()).or_default().push(e.clone());
    }
    users
}

/// Chronological per-user split. Windows whose target lies in the first
/// `train_fraction` of a user's events are for training; the rest are test
/// cases, which may look back into the training portion. Feature bounds come
/// from the training portion.
pub fn build_dataset(events: &[InteractionEvent], k: usize, config: &IntentConfig) -> Result<Dataset> {
    build_dataset_with(events, k, config, None)
}

/// Like [`build_dataset`], but with fixed feature bounds when given, e.g.
/// those stored in a trained model.
pub fn build_dataset_with(
    events: &[InteractionEvent],
    k: usize,
    config: &IntentConfig,
    normalization: Option<&NormalizationParams>,
) -> Result<Dataset> {
    config.validate()?;
    if let Some(e) = events.iter().find(|e| e.topic >= k) {
        return Err(Error::Shape(format!("event topic {} outside 0..{k}", e.topic)));
    }
    let width = config.schema.numeric_len();
    if let Some(n) = normalization {
        if n.min.len() != width || n.max.len() != width {
            return Err(Error::Shape(format!("normalization has {} features, schema has {width}", n.min.len())));
        }
    }
    let prepared: Vec<(String, Vec<FeatureRow>, usize)> = group_by_user(events)
        .into_iter()
        .map(|(user, evs)| {
            let cut = (evs.len() as f64 * config.train_fraction).floor() as usize;
            (user, featurize(&evs, config.schema), cut)
        })
        .collect();
    let normalization = match normalization {
        Some(n) => n.clone(),
        None => NormalizationParams::fit(prepared.iter().flat_map(|(_, rows, cut)| &rows[..*cut]), width),
    };
    let mut train = Vec::new();
    let mut train_sequences = Vec::new();
    let mut test = Vec::new();
    for (user, rows, cut) in prepared {
        let topics: Vec<usize> = rows.iter().map(|r| r.topic).collect();
        train_sequences.push(topics[..cut].to_vec());
        for j in config.lookback..rows.len() {
            let window = SupervisedWindow {
                inputs: encode_inputs(&rows[j - config.lookback..j], &normalization, k),
                target: topics[j],
            };
            if j < cut {
                train.push(window);
            } else {
                test.push(TestCase {
                    user_id: user.clone(),
                    window,
                    history: topics[..j].to_vec(),
                });
            }
        }
    }
    Ok(Dataset { k, normalization, train, train_sequences, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentModel {
    pub format: String,
    pub k: usize,
    pub lookback: usize,
    pub schema: FeatureSchema,
    pub normalization: NormalizationParams,
    pub params: LstmParams,
}

#[derive(Debug, Clone)]
pub struct TrainedIntent {
    pub model: IntentModel,
    pub epoch_losses: Vec<f64>,
}

pub fn train(dataset: &Dataset, config: &IntentConfig) -> Result<TrainedIntent> {
    config.validate()?;
    let trained = lstm::train(&dataset.train, dataset.k, &config.train)?;
    Ok(TrainedIntent {
        model: IntentModel {
            format: MODEL_FORMAT.into(),
            k: dataset.k,
            lookback: config.lookback,
            schema: config.schema,
            normalization: dataset.normalization.clone(),
            params: trained.params,
        },
        epoch_losses: trained.epoch_losses,
    })
}

impl IntentModel {
    pub fn distribution(&self, inputs: &Array2<f64>) -> Vec<f64> {
        forward(&self.params, inputs.view()).to_vec()
    }

    /// Predicted topic and distribution for the click after `history`,
    /// which must be one user's events in time order.
    pub fn predict_next(&self, history: &[InteractionEvent]) -> Result<(usize, Vec<f64>)> {
        if history.len() < self.lookback {
            return Err(Error::InsufficientHistory {
                needed: self.lookback,
                got: history.len(),
            });
        }
        if let Some(e) = history.iter().find(|e| e.topic >= self.k) {
            return Err(Error::Shape(format!("event topic {} outside 0..{}", e.topic, self.k)));
        }
        let rows = featurize(history, self.schema);
        let inputs = encode_inputs(&rows[rows.len() - self.lookback..], &self.normalization, self.k);
        let dist = self.distribution(&inputs);
        Ok((argmax(&dist), dist))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Format {
                expected: MODEL_FORMAT.into(),
                found: model.format,
            });
        }
        model.params.validate()?;
        let width = model.schema.numeric_len();
        if model.params.classes != model.k
            || model.params.input != model.schema.input_dim(model.k)
            || model.normalization.min.len() != width
            || model.normalization.max.len() != width
        {
            return Err(Error::Shape("intent model header disagrees with its parameters".into()));
        }
        Ok(model)
    }
}

/// Index of the largest entry; lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn write_events_jsonl<W: Write>(events: &[InteractionEvent], mut writer: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses JSONL events, collecting every malformed line before failing.
pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<InteractionEvent>> {
    let mut events = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<InteractionEvent>(&line) {
            Ok(e) => events.push(e),
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(events)
    } else {
        Err(Error::Malformed(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(user: &str, topic: usize, ts: i64, session: u32) -> InteractionEvent {
        InteractionEvent {
            user_id: user.into(),
            paper_id: format!("p{topic}"),
            topic,
            timestamp: ts,
            session_no: session,
            liked: topic % 2 == 0,
        }
    }

    #[test]
    fn featurize_time_differences() {
        let rows = featurize(&[ev("u", 0, 100, 0)], FeatureSchema::default());
        assert_eq!(rows[0].values, vec![0.0, 0.0]);
        let rows = featurize(&[ev("u", 0, 100, 0), ev("u", 1, 160, 0)], FeatureSchema::default());
        assert_eq!(rows.iter().map(|r| r.values[0]).collect::<Vec<_>>(), vec![0.0, 60.0]);
        let liked = featurize(&[ev("u", 2, 5, 1)], FeatureSchema { use_liked: true });
        assert_eq!(liked[0].values, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize(5.0, 0.0, 10.0), 0.5);
        assert_eq!(normalize(0.0, 0.0, 10.0), 0.0);
        assert_eq!(normalize(3.0, 3.0, 3.0), 0.0);
        assert_eq!(normalize(12.0, 0.0, 10.0), 1.0);
        assert_eq!(normalize(-1.0, 0.0, 10.0), 0.0);
    }

    #[test]
    fn lookback_windows() {
        let seq = [1, 2, 3, 4, 5];
        let w = make_windows(&seq, 2);
        assert_eq!(w, vec![(&[1, 2][..], &3), (&[2, 3][..], &4), (&[3, 4][..], &5)]);
        assert!(make_windows(&seq[..2], 2).is_empty());
        assert_eq!(make_windows(&seq[..3], 1).len(), 2);
    }

    #[test]
    fn dataset_split_and_encoding() {
        let events: Vec<InteractionEvent> = (0..10).map(|i| ev("a", i % 3, 100 * i as i64, 0)).collect();
        let cfg = IntentConfig { lookback: 2, ..IntentConfig::default() };
        let d = build_dataset(&events, 3, &cfg).unwrap();
        // targets 2..8 train, 8..10 test
        assert_eq!(d.train.len(), 6);
        assert_eq!(d.test.len(), 2);
        assert_eq!(d.train_sequences, vec![(0..8).map(|i| i % 3).collect::<Vec<_>>()]);
        assert_eq!(d.normalization.max, vec![100.0, 0.0]);
        let first = &d.train[0];
        assert_eq!(first.inputs.row(0).to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(first.inputs.row(1).to_vec(), vec![0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(first.target, 2);
        assert_eq!(d.test[1].history.len(), 9);
    }

    #[test]
    fn predict_needs_enough_history() {
        let events: Vec<InteractionEvent> = (0..12).map(|i| ev("a", i % 2, 60 * i as i64, 0)).collect();
        let cfg = IntentConfig {
            lookback: 3,
            train: TrainConfig { hidden: 4, epochs: 2, ..TrainConfig::default() },
            ..IntentConfig::default()
        };
        let d = build_dataset(&events, 2, &cfg).unwrap();
        let m = train(&d, &cfg).unwrap().model;
        assert!(matches!(
            m.predict_next(&events[..2]),
            Err(Error::InsufficientHistory { needed: 3, got: 2 })
        ));
        let (topic, dist) = m.predict_next(&events).unwrap();
        assert_eq!(topic, argmax(&dist));
        assert_eq!(m.predict_next(&events).unwrap().1, dist);

        let back = IntentModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = m.to_json().unwrap().replace(MODEL_FORMAT, "intent/0");
        assert!(matches!(IntentModel::from_json(&bad), Err(Error::Format { .. })));
    }

    #[test]
    fn events_jsonl_round_trip_and_errors() {
        let events = vec![ev("a", 0, 1, 0), ev("b", 2, 7, 3)];
        let mut buf = vec![];
        write_events_jsonl(&events, &mut buf).unwrap();
        assert_eq!(read_events_jsonl(buf.as_slice()).unwrap(), events);
        let text = "{\"user_id\":\"a\"}\n\nnot json\n";
        match read_events_jsonl(text.as_bytes()) {
            Err(Error::Malformed(errs)) => {
                assert_eq!(errs.iter().map(|e| e.line).collect::<Vec<_>>(), vec![1, 3]);
            }
            other => panic!("{other:?}"),
        }
        assert!(read_events_jsonl("".as_bytes()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn window_count_identity(len in 0usize..40, lookback in 1usize..10) {
            let seq: Vec<usize> = (0..len).collect();
            prop_assert_eq!(make_windows(&seq, lookback).len(), len.saturating_sub(lookback));
        }

        #[test]
        fn training_split_is_scaled_into_unit_interval(values in prop::collection::vec(-1e6f64..1e6, 1..30)) {
            let rows: Vec<FeatureRow> = values.iter().map(|&v| FeatureRow { topic: 0, values: vec![v] }).collect();
            let p = NormalizationParams::fit(&rows, 1);
            for r in &rows {
                let y = p.apply(&r.values)[0];
                prop_assert!((0.0..=1.0).contains(&y));
                if p.max[0] > p.min[0] {
                    let back = denormalize(y, p.min[0], p.max[0]);
                    prop_assert!((back - r.values[0]).abs() <= 1e-9 * (1.0 + r.values[0].abs()));
                }
            }
        }
    }
}
