//! Synthetic click logs with planted topic dynamics, log ingestion and an
//! append-only per-user profile store.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};
use crate::intent::InteractionEvent;
use crate::rng::{self, SeededRng};

/// How a user's next topic depends on the previous ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// Stay on the current topic with `stay_prob`, else move uniformly to
    /// another one.
    Sticky { stay_prob: f64 },
    /// First-order chain with the given row-stochastic matrix.
    Chain { transitions: Vec<Vec<f64>> },
    /// Repeat the topic from two steps back, except with `switch_prob`
    /// draw a uniformly random topic.
    SecondOrder { switch_prob: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_topics: usize,
    pub events_per_user: usize,
    pub dynamics: Dynamics,
    /// Median seconds between clicks within a browsing burst.
    pub median_gap_secs: f64,
    /// Log-space standard deviation of the inter-click time.
    pub gap_sigma: f64,
    /// Chance that a user leaves before the next click.
    pub break_prob: f64,
    pub break_mean_secs: f64,
    pub session_gap_secs: i64,
    pub liked_prob: f64,
    pub start_timestamp: i64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_users: 50,
            num_items: 5213,
            num_topics: 4,
            events_per_user: 200,
            dynamics: Dynamics::Sticky { stay_prob: 0.7 },
            median_gap_secs: 60.0,
            gap_sigma: 1.0,
            break_prob: 0.05,
            break_mean_secs: 4.0 * 3600.0,
            session_gap_secs: 1800,
            liked_prob: 0.2,
            start_timestamp: 1_600_000_000,
            seed: 0,
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {p}")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_topics == 0 || self.num_items < self.num_topics {
            return Err(Error::InvalidConfig(
                "need at least one user, one topic and one item per topic".into(),
            ));
        }
        if !(self.median_gap_secs > 0.0 && self.gap_sigma >= 0.0 && self.break_mean_secs > 0.0) {
            return Err(Error::InvalidConfig("inter-click time parameters must be positive".into()));
        }
        if self.session_gap_secs <= 0 {
            return Err(Error::InvalidConfig("session_gap_secs must be positive".into()));
        }
        probability("break_prob", self.break_prob)?;
        probability("liked_prob", self.liked_prob)?;
        match &self.dynamics {
            Dynamics::Sticky { stay_prob } => probability("stay_prob", *stay_prob),
            Dynamics::SecondOrder { switch_prob } => probability("switch_prob", *switch_prob),
            Dynamics::Chain { transitions } => {
                let k = self.num_topics;
                let ok = transitions.len() == k
                    && transitions.iter().all(|row| {
                        row.len() == k
                            && row.iter().all(|&p| (0.0..=1.0).contains(&p))
                            && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
                    });
                if ok {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("transitions must be a {k}x{k} stochastic matrix")))
                }
            }
        }
    }

    /// First-order transition matrix, if the dynamics have one.
    pub fn transition_matrix(&self) -> Option<Vec<Vec<f64>>> {
        let k = self.num_topics;
        match &self.dynamics {
            Dynamics::Chain { transitions } => Some(transitions.clone()),
            Dynamics::Sticky { stay_prob } => Some(
                (0..k)
                    .map(|i| {
                        (0..k)
                            .map(|j| match (i == j, k) {
                                (true, _) => *stay_prob,
                                (false, 1) => 0.0,
                                (false, _) => (1.0 - stay_prob) / (k - 1) as f64,
                            })
                            .collect()
                    })
                    .collect(),
            ),
            Dynamics::SecondOrder { .. } => None,
        }
    }
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
pub fn stationary_distribution(transitions: &[Vec<f64>]) -> Vec<f64> {
    let k = transitions.len();
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..10_000 {
        let mut next = vec![0.0; k];
        for (i, row) in transitions.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                next[j] += pi[i] * p;
            }
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

fn sample_row(row: &[f64], rng: &mut SeededRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn simulate_user(config: &SimConfig, user: usize, matrix: Option<&[Vec<f64>]>) -> Vec<InteractionEvent> {
    let mut rng = rng::stream(config.seed, user as u64);
    let k = config.num_topics;
    let burst = LogNormal::new(config.median_gap_secs.ln(), config.gap_sigma).expect("validated");
    let pause = Exp::new(1.0 / config.break_mean_secs).expect("validated");
    let user_id = format!("u{user:03}");
    let mut topics: Vec<usize> = Vec::with_capacity(config.events_per_user);
    let mut events = Vec::with_capacity(config.events_per_user);
    let mut timestamp = config.start_timestamp + rng.random_range(0..86_400);
    let mut session_no = 0u32;

    for n in 0..config.events_per_user {
        let topic = match (&config.dynamics, topics.len()) {
            (_, 0) => rng.random_range(0..k),
            (Dynamics::SecondOrder { .. }, 1) => rng.random_range(0..k),
            (Dynamics::SecondOrder { switch_prob }, len) => {
                if rng.random::<f64>() < *switch_prob {
                    rng.random_range(0..k)
                } else {
                    topics[len - 2]
                }
            }
            (_, len) => sample_row(&matrix.expect("first-order dynamics")[topics[len - 1]], &mut rng),
        };
        if n > 0 {
            let mut gap = burst.sample(&mut rng);
            if rng.random::<f64>() < config.break_prob {
                gap += pause.sample(&mut rng);
            }
            let gap = (gap.round() as i64).max(1);
            if gap > config.session_gap_secs {
                session_no += 1;
            }
            timestamp += gap;
        }
        let per_topic = (config.num_items - topic).div_ceil(k);
        let item = topic + k * rng.random_range(0..per_topic);
        events.push(InteractionEvent {
            user_id: user_id.clone(),
            paper_id: format!("p{item:05}"),
            topic,
            timestamp,
            session_no,
            liked: rng.random::<f64>() < config.liked_prob,
        });
        topics.push(topic);
    }
    events
}

/// Simulated click log, users in id order. Users are generated in parallel
/// from independent streams of the seed.
pub fn simulate(config: &SimConfig) -> Result<Vec<InteractionEvent>> {
    config.validate()?;
    let matrix = config.transition_matrix();
    let per_user: Vec<Vec<InteractionEvent>> = (0..config.num_users)
        .into_par_iter()
        .map(|u| simulate_user(config, u, matrix.as_deref()))
        .collect();
    Ok(per_user.into_iter().flatten().collect())
}

/// Parses and validates a JSONL log. Malformed lines are reported together;
/// a user whose timestamps or session numbers go backwards is an error.
pub fn ingest<R: BufRead>(reader: R) -> Result<Vec<InteractionEvent>> {
    let mut events = Vec::new();
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<InteractionEvent>(&line) {
            Ok(e) if e.user_id.is_empty() => errors.push(LineError {
                line: i + 1,
                message: "empty user_id".into(),
            }),
            Ok(e) => {
                events.push(e);
                lines.push(i + 1);
            }
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Malformed(errors));
    }
    let mut last: HashMap<&str, (i64, u32)> = HashMap::new();
    for (e, &line) in events.iter().zip(&lines) {
        if let Some(&(ts, session)) = last.get(e.user_id.as_str()) {
            if e.timestamp < ts || e.session_no < session {
                return Err(Error::OutOfOrder { user: e.user_id.clone(), line });
            }
        }
        last.insert(&e.user_id, (e.timestamp, e.session_no));
    }
    Ok(events)
}

pub fn ingest_path(path: &Path) -> Result<Vec<InteractionEvent>> {
    let file = fs::File::open(path).map_err(|e| Error::at_path(path, e))?;
    ingest(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: String,
    pub events: Vec<InteractionEvent>,
}

impl UserProfile {
    pub fn topics(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.topic).collect()
    }
}

/// One append-only JSONL file per user under `root`.
#[derive(Debug, Clone)]
pub struct ProfileStore {
    root: PathBuf,
}

fn valid_user_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ProfileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::at_path(&root, e))?;
        Ok(Self { root })
    }

    fn path_of(&self, user_id: &str) -> Result<PathBuf> {
        if !valid_user_id(user_id) {
            return Err(Error::InvalidConfig(format!("user id {user_id:?} cannot name a profile file")));
        }
        Ok(self.root.join(format!("{user_id}.jsonl")))
    }

    /// Appends `event` to its user's history. Duplicates are kept; an event
    /// older than the user's latest one is rejected.
    pub fn append(&self, event: &InteractionEvent) -> Result<()> {
        let path = self.path_of(&event.user_id)?;
        let existing = self.load(&event.user_id)?.events;
        if let Some(last) = existing.last() {
            if event.timestamp < last.timestamp || event.session_no < last.session_no {
                return Err(Error::OutOfOrder {
                    user: event.user_id.clone(),
                    line: existing.len() + 1,
                });
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::at_path(&path, e))?;
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        file.write_all(&line).map_err(|e| Error::at_path(&path, e))
    }

    pub fn load(&self, user_id: &str) -> Result<UserProfile> {
        let path = self.path_of(user_id)?;
        let events = match fs::File::open(&path) {
            Ok(f) => ingest(BufReader::new(f))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::at_path(&path, e)),
        };
        Ok(UserProfile { user_id: user_id.to_string(), events })
    }

    /// Users with a profile file, sorted.
    pub fn users(&self) -> Result<Vec<String>> {
        let mut users = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| Error::at_path(&self.root, e))? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    users.push(stem.to_string());
                }
            }
        }
        users.sort();
        Ok(users)
    }
}

pub fn profile_update(store: &ProfileStore, event: &InteractionEvent) -> Result<UserProfile> {
    store.append(event)?;
    store.load(&event.user_id)
}
