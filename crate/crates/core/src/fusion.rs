//! Fusing LDA topics with embedding neighbourhoods, and dominant-topic voting.
//!
//! The refined word-topic map starts from every word's LDA probabilities.
//! Each topic's top seed words are expanded to their nearest embedding
//! neighbours; neighbours below the similarity threshold are dropped, and
//! the survivors receive the seed's topic with score
//! `similarity × τ[topic, seed]` unless they already hold a larger score for
//! that topic.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dictionary, TokenizedDocument};
use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::lda::TopicWordDistribution;

pub const MAP_FORMAT: &str = "m2/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub seeds_per_topic: usize,
    pub neighbors_per_seed: usize,
    pub similarity_threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            seeds_per_topic: 2,
            neighbors_per_seed: 6,
            similarity_threshold: 0.4,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds_per_topic == 0 {
            return Err(Error::InvalidConfig("seeds_per_topic must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::InvalidConfig("similarity_threshold must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

/// Word → `(topic, probability)` entries, topics ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordTopicMap {
    entries: BTreeMap<String, Vec<(usize, f64)>>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    format: String,
    k: usize,
    entries: BTreeMap<String, Vec<(usize, f64)>>,
}

impl WordTopicMap {
    /// Plain LDA table: every word carries all `k` topic probabilities.
    pub fn from_lda(tau: &TopicWordDistribution, dictionary: &Dictionary) -> Self {
        let entries = dictionary
            .tokens()
            .iter()
            .enumerate()
            .map(|(w, token)| (token.clone(), (0..tau.k()).map(|j| (j, tau.prob(j, w))).collect()))
            .collect();
        Self { entries, k: tau.k() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[(usize, f64)]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(usize, f64)])> {
        self.entries.iter().map(|(w, e)| (w.as_str(), e.as_slice()))
    }

    /// Raises `word`'s score for `topic` to `score` if that is larger.
    pub fn raise(&mut self, word: &str, topic: usize, score: f64) {
        let entries = self.entries.entry(word.to_string()).or_default();
        match entries.binary_search_by_key(&topic, |&(t, _)| t) {
            Ok(pos) => {
                if score > entries[pos].1 {
                    entries[pos].1 = score;
                }
            }
            Err(pos) => entries.insert(pos, (topic, score)),
        }
    }

    /// Every probability multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(w, e)| (w.clone(), e.iter().map(|&(t, p)| (t, p * c)).collect()))
            .collect();
        Self { entries, k: self.k }
    }

    /// The word's best topic and its probability; lower topic on ties.
    pub fn best_topic(&self, word: &str) -> Option<(usize, f64)> {
        self.get(word)?
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, (t, p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((t, p)),
            })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MapFile {
            format: MAP_FORMAT.to_string(),
            k: self.k,
            entries: self.entries.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MapFile = serde_json::from_str(text)?;
        if file.format != MAP_FORMAT {
            return Err(Error::Format {
                expected: MAP_FORMAT.into(),
                found: file.format,
            });
        }
        let mut map = Self {
            entries: BTreeMap::new(),
            k: file.k,
        };
        for (word, entries) in file.entries {
            for (topic, p) in entries {
                if topic >= file.k {
                    return Err(Error::Shape(format!("topic {topic} out of range for {word:?}")));
                }
                map.raise(&word, topic, p);
            }
        }
        Ok(map)
    }
}

/// The `m` most probable words of every topic.
pub fn seed_words(tau: &TopicWordDistribution, m: usize) -> Vec<Vec<usize>> {
    (0..tau.k()).map(|j| tau.top_words(j, m)).collect()
}

/// Nearest neighbours of `seed` that reach the similarity threshold, as
/// embedding-vocabulary tokens. A seed missing from the embedding
/// vocabulary yields no expansion.
pub fn expand_and_filter(seed: &str, embedding: &EmbeddingModel, config: &FusionConfig) -> Vec<(String, f64)> {
    let Some(index) = embedding.dictionary.index_of(seed) else {
        log::warn!("seed word {seed:?} is not in the embedding vocabulary; skipping expansion");
        return Vec::new();
    };
    embedding
        .nearest(index, config.neighbors_per_seed)
        .into_iter()
        .filter(|&(_, sim)| sim >= config.similarity_threshold)
        .map(|(w, sim)| (embedding.dictionary.token(w).to_string(), sim))
        .collect()
}

pub fn build_word_topic_map(
    tau: &TopicWordDistribution,
    dictionary: &Dictionary,
    embedding: &EmbeddingModel,
    config: &FusionConfig,
) -> Result<WordTopicMap> {
    config.validate()?;
    if tau.vocab_size() != dictionary.len() {
        return Err(Error::Shape("tau and dictionary sizes differ".into()));
    }
    let mut map = WordTopicMap::from_lda(tau, dictionary);
    if config.neighbors_per_seed == 0 {
        return Ok(map);
    }
    for (topic, seeds) in seed_words(tau, config.seeds_per_topic).into_iter().enumerate() {
        for seed in seeds {
            let seed_prob = tau.prob(topic, seed);
            for (word, sim) in expand_and_filter(dictionary.token(seed), embedding, config) {
                let score = sim * seed_prob;
                if score > 0.0 {
                    map.raise(&word, topic, score);
                }
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub topic: usize,
    /// Words whose best topic voted, with their probabilities.
    pub counts: BTreeMap<usize, (usize, f64)>,
    /// Whether the probability-sum tie-break was needed.
    pub tie_broken: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DominantTopic {
    Assigned(Vote),
    /// No token of the title is in the map.
    Unassigned,
}

impl DominantTopic {
    pub fn topic(&self) -> Option<usize> {
        match self {
            DominantTopic::Assigned(v) => Some(v.topic),
            DominantTopic::Unassigned => None,
        }
    }
}

/// Majority vote of each word's best topic. Equal vote counts are settled
/// by the summed probabilities of the voting words, then by lower index.
pub fn dominant_topic<S: AsRef<str>>(tokens: &[S], map: &WordTopicMap) -> DominantTopic {
    let mut voters: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for token in tokens {
        if let Some((topic, p)) = map.best_topic(token.as_ref()) {
            voters.entry(topic).or_default().push(p);
        }
    }
    // Sums are taken in sorted order so the result does not depend on
    // token order.
    let counts: BTreeMap<usize, (usize, f64)> = voters
        .into_iter()
        .map(|(t, mut ps)| {
            ps.sort_by(f64::total_cmp);
            (t, (ps.len(), ps.iter().sum()))
        })
        .collect();
    let Some(max_votes) = counts.values().map(|&(n, _)| n).max() else {
        return DominantTopic::Unassigned;
    };
    let tied: Vec<(usize, f64)> = counts
        .iter()
        .filter(|(_, &(n, _))| n == max_votes)
        .map(|(&t, &(_, s))| (t, s))
        .collect();
    let tie_broken = tied.len() > 1;
    let topic = tied
        .iter()
        .copied()
        .fold(None, |best: Option<(usize, f64)>, (t, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((t, s)),
        })
        .map(|(t, _)| t)
        .expect("at least one topic voted");
    DominantTopic::Assigned(Vote {
        topic,
        counts,
        tie_broken,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub doc_id: String,
    pub topic: Option<usize>,
}

pub fn assign_corpus(docs: &[TokenizedDocument], map: &WordTopicMap) -> Vec<Assignment> {
    docs.iter()
        .map(|d| Assignment {
            doc_id: d.doc_id.clone(),
            topic: dominant_topic(&d.tokens, map).topic(),
        })
        .collect()
}

/// `doc_id,topic` rows; unassigned titles get an empty topic field.
pub fn write_assignments_csv<W: Write>(assignments: &[Assignment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["doc_id", "topic"])?;
    for a in assignments {
        let topic = a.topic.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([a.doc_id.as_str(), topic.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments_csv<R: std::io::Read>(reader: R) -> Result<Vec<Assignment>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let topic = match record.get(1).unwrap_or("") {
            "" => None,
            t => Some(t.parse().map_err(|_| Error::Shape(format!("bad topic {t:?}")))?),
        };
        out.push(Assignment {
            doc_id: record.get(0).unwrap_or("").to_string(),
            topic,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn map(rows: &[(&str, &[(usize, f64)])], k: usize) -> WordTopicMap {
        let mut m = WordTopicMap { entries: BTreeMap::new(), k };
        for (w, entries) in rows {
            for &(t, p) in *entries {
                m.raise(w, t, p);
            }
        }
        m
    }

    #[test]
    fn unanimous_vote() {
        let m = map(&[("a", &[(3, 0.9), (1, 0.1)]), ("b", &[(3, 0.5)])], 4);
        assert_eq!(dominant_topic(&["a", "b"], &m).topic(), Some(3));
    }

    #[test]
    fn tie_settled_by_probability_sum() {
        let m = map(&[("a", &[(1, 0.9)]), ("b", &[(2, 0.4)])], 3);
        match dominant_topic(&["a", "b"], &m) {
            DominantTopic::Assigned(v) => {
                assert_eq!(v.topic, 1);
                assert!(v.tie_broken);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(dominant_topic(&["b", "a"], &m).topic(), Some(1));
    }

    #[test]
    fn exact_tie_goes_to_lower_topic() {
        let m = map(&[("a", &[(2, 0.5)]), ("b", &[(1, 0.5)])], 3);
        assert_eq!(dominant_topic(&["a", "b"], &m).topic(), Some(1));
    }

    #[test]
    fn empty_or_unknown_tokens_are_unassigned() {
        let m = map(&[("a", &[(0, 0.5)])], 1);
        assert_eq!(dominant_topic::<&str>(&[], &m), DominantTopic::Unassigned);
        assert_eq!(dominant_topic(&["zzz"], &m), DominantTopic::Unassigned);
    }

    fn toy() -> (TopicWordDistribution, Dictionary, EmbeddingModel) {
        // Words: a (topic 0 seed), b (topic 1 seed), c (LDA leans topic 1
        // but its vector sits next to a's).
        let dictionary = Dictionary::from_tokens(vec!["a".into(), "b".into(), "c".into()], 1).unwrap();
        let tau = TopicWordDistribution::from_rows(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.6, 0.2]]).unwrap();
        let mut emb = EmbeddingModel::zeros(dictionary.clone(), 2);
        emb.input = array![[1.0, 0.0], [0.0, 1.0], [0.95, 0.05]];
        (tau, dictionary, emb)
    }

    #[test]
    fn expansion_pulls_similar_word_into_seed_topic() {
        let (tau, dict, emb) = toy();
        let lda = WordTopicMap::from_lda(&tau, &dict);
        assert_eq!(lda.best_topic("c").unwrap().0, 1);
        let cfg = FusionConfig { seeds_per_topic: 1, neighbors_per_seed: 1, similarity_threshold: 0.4 };
        let fused = build_word_topic_map(&tau, &dict, &emb, &cfg).unwrap();
        // c gains topic 0 with cos(a, c) * τ[0, a] ≈ 0.9986 * 0.6.
        let (topic, p) = fused.best_topic("c").unwrap();
        assert_eq!(topic, 0);
        let cos = 0.95 / (0.95f64 * 0.95 + 0.05 * 0.05).sqrt();
        assert!((p - cos * 0.6).abs() < 1e-12);
        for (_, entries) in fused.iter() {
            assert!(entries.iter().all(|&(_, p)| p > 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn expansion_threshold_extremes() {
        let (_, _, emb) = toy();
        let all = FusionConfig { seeds_per_topic: 1, neighbors_per_seed: 2, similarity_threshold: -1.0 };
        assert_eq!(expand_and_filter("a", &emb, &all).len(), 2);
        let none = FusionConfig { similarity_threshold: 1.0, ..all.clone() };
        assert!(expand_and_filter("a", &emb, &none).is_empty());
        assert!(expand_and_filter("missing", &emb, &all).is_empty());
    }

    #[test]
    fn expansion_is_filtered_nearest() {
        let (_, _, emb) = toy();
        let cfg = FusionConfig { seeds_per_topic: 1, neighbors_per_seed: 2, similarity_threshold: 0.5 };
        let got = expand_and_filter("c", &emb, &cfg);
        let want: Vec<(String, f64)> = emb
            .nearest(2, 2)
            .into_iter()
            .filter(|&(_, s)| s >= 0.5)
            .map(|(w, s)| (emb.dictionary.token(w).to_string(), s))
            .collect();
        assert_eq!(got, want);
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn zero_neighbors_is_plain_lda() {
        let (tau, dict, emb) = toy();
        let cfg = FusionConfig { neighbors_per_seed: 0, ..Default::default() };
        assert_eq!(build_word_topic_map(&tau, &dict, &emb, &cfg).unwrap(), WordTopicMap::from_lda(&tau, &dict));
    }

    #[test]
    fn seeds_may_repeat_across_topics() {
        let tau = TopicWordDistribution::from_rows(vec![vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        assert_eq!(seed_words(&tau, 1), vec![vec![0], vec![0]]);
    }

    #[test]
    fn map_json_round_trip() {
        let m = map(&[("a", &[(0, 0.25), (1, 0.5)])], 2);
        let text = m.to_json().unwrap();
        assert_eq!(text, r#"{"format":"m2/1","k":2,"entries":{"a":[[0,0.25],[1,0.5]]}}"#);
        assert_eq!(WordTopicMap::from_json(&text).unwrap(), m);
    }

    #[test]
    fn assignment_csv_round_trip() {
        let a = vec![
            Assignment { doc_id: "x".into(), topic: Some(2) },
            Assignment { doc_id: "y".into(), topic: None },
        ];
        let mut buf = Vec::new();
        write_assignments_csv(&a, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "doc_id,topic\nx,2\ny,\n");
        assert_eq!(read_assignments_csv(buf.as_slice()).unwrap(), a);
    }

    fn arb_map() -> impl Strategy<Value = (WordTopicMap, Vec<String>)> {
        let words = prop::collection::vec(prop::collection::vec((0usize..4, 1u32..1000), 1..4), 1..8);
        (words, prop::collection::vec(0usize..10, 0..12)).prop_map(|(rows, picks)| {
            let mut m = WordTopicMap { entries: BTreeMap::new(), k: 4 };
            for (i, entries) in rows.iter().enumerate() {
                for &(t, p) in entries {
                    m.raise(&format!("w{i}"), t, p as f64 / 1000.0);
                }
            }
            let tokens = picks.into_iter().map(|i| format!("w{}", i % (rows.len() + 1))).collect();
            (m, tokens)
        })
    }

    proptest! {
        #[test]
        fn vote_is_order_and_scale_invariant((m, tokens) in arb_map(), shift in 0usize..12, exp in -4i32..5) {
            let base = dominant_topic(&tokens, &m).topic();
            if let Some(t) = base {
                prop_assert!(t < m.k());
            }
            let mut rotated = tokens.clone();
            if !rotated.is_empty() {
                let s = shift % rotated.len();
                rotated.rotate_left(s);
                rotated.reverse();
            }
            prop_assert_eq!(dominant_topic(&rotated, &m).topic(), base);
            let c = 2f64.powi(exp);
            prop_assert_eq!(dominant_topic(&tokens, &m.scaled(c)).topic(), base);
        }
    }
}
