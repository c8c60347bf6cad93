//! Planted-topic title corpora with known ground-truth labels.
//!
//! Every topic owns a disjoint core vocabulary; a configurable fraction of
//! each title is drawn from a vocabulary shared by all topics. Word choice
//! within a vocabulary is Zipfian so that some core words are rare.

use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::TokenizedDocument;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub topics: usize,
    pub docs: usize,
    pub core_words_per_topic: usize,
    pub noise_words: usize,
    /// Probability that a token is drawn from the shared noise vocabulary.
    pub noise_fraction: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            topics: 4,
            docs: 400,
            core_words_per_topic: 30,
            noise_words: 40,
            noise_fraction: 0.3,
            min_len: 5,
            max_len: 9,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub docs: Vec<TokenizedDocument>,
    /// Ground-truth topic of every document.
    pub labels: Vec<usize>,
}

/// Encodes `n` as a lowercase alphabetic string of fixed width.
fn letters(mut n: usize, width: usize) -> String {
    let mut out = vec![b'a'; width];
    for slot in out.iter_mut().rev() {
        *slot = b'a' + (n % 26) as u8;
        n /= 26;
    }
    String::from_utf8(out).expect("ascii")
}

pub fn core_word(topic: usize, rank: usize) -> String {
    format!("top{}w{}", letters(topic, 2), letters(rank, 2))
}

pub fn noise_word(rank: usize) -> String {
    format!("noise{}", letters(rank, 2))
}

pub fn generate(config: &PlantedConfig) -> Result<PlantedCorpus> {
    if config.topics == 0 || config.core_words_per_topic == 0 || config.min_len == 0 {
        return Err(Error::InvalidConfig(
            "topics, core_words_per_topic and min_len must be positive".into(),
        ));
    }
    if config.max_len < config.min_len {
        return Err(Error::InvalidConfig("max_len < min_len".into()));
    }
    if !(0.0..=1.0).contains(&config.noise_fraction)
        || (config.noise_fraction > 0.0 && config.noise_words == 0)
    {
        return Err(Error::InvalidConfig("invalid noise settings".into()));
    }
    let zipf = |n: usize| {
        Zipf::new(n as f64, config.zipf_exponent)
            .map_err(|e| Error::InvalidConfig(format!("zipf: {e}")))
    };
    let core = zipf(config.core_words_per_topic)?;
    let noise = if config.noise_words > 0 {
        Some(zipf(config.noise_words)?)
    } else {
        None
    };

    let mut rng = rng::seeded(config.seed);
    let mut docs = Vec::with_capacity(config.docs);
    let mut labels = Vec::with_capacity(config.docs);
    for d in 0..config.docs {
        let topic = d % config.topics;
        let len = rng.random_range(config.min_len..=config.max_len);
        let tokens = (0..len)
            .map(|_| match &noise {
                Some(noise) if rng.random::<f64>() < config.noise_fraction => {
                    noise_word(noise.sample(&mut rng) as usize - 1)
                }
                _ => core_word(topic, core.sample(&mut rng) as usize - 1),
            })
            .collect();
        docs.push(TokenizedDocument::new(format!("doc{d:05}"), tokens));
        labels.push(topic);
    }
    Ok(PlantedCorpus { docs, labels })
}
