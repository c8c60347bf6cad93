//! Next-topic baselines: a first-order Markov chain and longest-suffix
//! frequent-pattern matching.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn argmax_counts(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn check_topics(sequences: &[Vec<usize>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    match sequences.iter().flatten().find(|&&t| t >= k) {
        Some(t) => Err(Error::Shape(format!("topic {t} outside 0..{k}"))),
        None => Ok(()),
    }
}

/// Row-stochastic transition matrix with add-one smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovBaseline {
    pub transitions: Array2<f64>,
}

impl MarkovBaseline {
    pub fn fit(sequences: &[Vec<usize>], k: usize) -> Result<Self> {
        check_topics(sequences, k)?;
        let mut counts = Array2::<f64>::ones((k, k));
        for seq in sequences {
            for pair in seq.windows(2) {
                counts[[pair[0], pair[1]]] += 1.0;
            }
        }
        for mut row in counts.rows_mut() {
            let total = row.sum();
            row /= total;
        }
        Ok(Self { transitions: counts })
    }

    pub fn k(&self) -> usize {
        self.transitions.nrows()
    }

    pub fn distribution(&self, last: usize) -> Vec<f64> {
        self.transitions.row(last).to_vec()
    }

    /// Most probable successor of `last`; lowest index on ties.
    pub fn predict(&self, last: usize) -> usize {
        let row = self.transitions.row(last);
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        best
    }
}

pub fn markov_baseline(sequences: &[Vec<usize>], k: usize) -> Result<MarkovBaseline> {
    MarkovBaseline::fit(sequences, k)
}

/// Continuation counts of every pattern of length `1..=max_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpmBaseline {
    pub k: usize,
    pub max_len: usize,
    patterns: BTreeMap<Vec<usize>, Vec<u64>>,
    global: Vec<u64>,
}

impl FpmBaseline {
    pub fn fit(sequences: &[Vec<usize>], k: usize, max_len: usize) -> Result<Self> {
        check_topics(sequences, k)?;
        if max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be positive".into()));
        }
        let mut patterns: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
        let mut global = vec![0; k];
        for seq in sequences {
            for (j, &next) in seq.iter().enumerate() {
                global[next] += 1;
                for len in 1..=max_len.min(j) {
                    patterns.entry(seq[j - len..j].to_vec()).or_insert_with(|| vec![0; k])[next] += 1;
                }
            }
        }
        Ok(Self { k, max_len, patterns, global })
    }

    /// Counts behind the prediction for `history`: the longest suffix seen
    /// in training, else the global topic counts.
    fn counts_for(&self, history: &[usize]) -> &[u64] {
        for len in (1..=self.max_len.min(history.len())).rev() {
            if let Some(c) = self.patterns.get(&history[history.len() - len..]) {
                return c;
            }
        }
        &self.global
    }

    pub fn predict(&self, history: &[usize]) -> usize {
        argmax_counts(self.counts_for(history))
    }

    pub fn distribution(&self, history: &[usize]) -> Vec<f64> {
        let c = self.counts_for(history);
        let total: u64 = c.iter().sum();
        if total == 0 {
            return vec![1.0 / self.k as f64; self.k];
        }
        c.iter().map(|&v| v as f64 / total as f64).collect()
    }
}

pub fn fpm_baseline(sequences: &[Vec<usize>], k: usize, max_len: usize) -> Result<FpmBaseline> {
    FpmBaseline::fit(sequences, k, max_len)
}

/// Highest accuracy any first-order predictor can reach on `sequences`:
/// for each current topic, the share of its most common successor.
pub fn first_order_ceiling(sequences: &[Vec<usize>], k: usize) -> f64 {
    let mut counts = vec![vec![0u64; k]; k];
    for seq in sequences {
        for pair in seq.windows(2) {
            counts[pair[0]][pair[1]] += 1;
        }
    }
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let best: u64 = counts.iter().map(|row| row.iter().max().copied().unwrap_or(0)).sum();
    best as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alternating_chain() {
        let m = markov_baseline(&[vec![0, 1, 0, 1]], 2).unwrap();
        // B→A seen once: (1+1)/(1+2)
        assert!((m.transitions[[1, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.transitions[[0, 1]] - 3.0 / 4.0).abs() < 1e-12);
        assert_eq!(m.predict(1), 0);
        assert_eq!(m.predict(0), 1);
    }

    #[test]
    fn unseen_topic_has_uniform_row() {
        let m = markov_baseline(&[vec![0, 1, 0]], 3).unwrap();
        assert_eq!(m.distribution(2), vec![1.0 / 3.0; 3]);
        assert!(markov_baseline(&[vec![5]], 3).is_err());
    }

    #[test]
    fn fpm_prefers_longest_suffix() {
        let f = fpm_baseline(&[vec![0, 1, 2, 0, 1, 2], vec![3, 1, 3]], 4, 2).unwrap();
        assert_eq!(f.predict(&[0, 1]), 2);
        assert_eq!(f.predict(&[3, 1]), 3);
        // [2,1] unseen, so fall back to the suffix [1]: 2 twice, 3 once
        assert_eq!(f.predict(&[2, 1]), 2);
        // no suffix match: global mode
        let g = fpm_baseline(&[vec![0, 1, 1, 1]], 4, 2).unwrap();
        assert_eq!(g.predict(&[3]), 1);
        assert_eq!(g.predict(&[]), 1);
    }

    #[test]
    fn ceiling_of_deterministic_chain_is_one() {
        assert_eq!(first_order_ceiling(&[vec![0, 1, 2, 0, 1, 2]], 3), 1.0);
        assert_eq!(first_order_ceiling(&[vec![0, 1, 0, 2]], 3), 2.0 / 3.0);
    }

    /// Scans all training positions for the longest suffix that occurs.
    fn brute_force(seqs: &[Vec<usize>], k: usize, max_len: usize, history: &[usize]) -> usize {
        for len in (1..=max_len.min(history.len())).rev() {
            let suffix = &history[history.len() - len..];
            let mut counts = vec![0u64; k];
            for s in seqs {
                for j in len..s.len() {
                    if &s[j - len..j] == suffix {
                        counts[s[j]] += 1;
                    }
                }
            }
            if counts.iter().any(|&c| c > 0) {
                return argmax_counts(&counts);
            }
        }
        let mut counts = vec![0u64; k];
        seqs.iter().flatten().for_each(|&t| counts[t] += 1);
        argmax_counts(&counts)
    }

    proptest! {
        #[test]
        fn markov_rows_are_stochastic(seqs in prop::collection::vec(prop::collection::vec(0usize..4, 0..12), 0..5)) {
            let m = markov_baseline(&seqs, 4).unwrap();
            for row in m.transitions.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn fpm_matches_exhaustive_scan(
            seqs in prop::collection::vec(prop::collection::vec(0usize..3, 1..10), 1..4),
            history in prop::collection::vec(0usize..3, 0..5),
            max_len in 1usize..4,
        ) {
            let f = fpm_baseline(&seqs, 3, max_len).unwrap();
            prop_assert_eq!(f.predict(&history), brute_force(&seqs, 3, max_len, &history));
        }
    }
}
