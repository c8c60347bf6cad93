use scholar_intent::corpus::synthetic::{self, PlantedConfig};
use scholar_intent::corpus::BowCorpus;
use scholar_intent::embed::{self, SkipGramConfig};
use scholar_intent::eval::sequence_metrics;
use scholar_intent::fusion::{self, FusionConfig};
use scholar_intent::intent::{self, IntentConfig, InteractionEvent, TrainConfig};
use scholar_intent::lda::{self, LdaConfig, LdaState};
use scholar_intent::rng;

/// Fraction of documents labelled correctly under the best matching of
/// predicted to planted topics, found by trying every permutation.
fn matched_accuracy(pred: &[Option<usize>], truth: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for p in perms(k - 1) {
            for pos in 0..k {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let best = perms(k)
        .into_iter()
        .map(|perm| {
            pred.iter()
                .zip(truth)
                .filter(|(p, &t)| p.is_some_and(|p| perm[p] == t))
                .count()
        })
        .max()
        .unwrap();
    best as f64 / truth.len() as f64
}

#[test]
fn gibbs_log_likelihood_trends_upward() {
    let planted = synthetic::generate(&PlantedConfig { seed: 3, ..PlantedConfig::default() }).unwrap();
    let corpus = BowCorpus::build(&planted.docs, 1).unwrap();
    let config = LdaConfig { seed: 3, ..LdaConfig::new(4) };
    let mut rng = rng::seeded(3);
    let mut state = LdaState::init(&corpus, &config, &mut rng).unwrap();
    let mut trace = vec![state.log_likelihood()];
    for _ in 0..60 {
        state.sweep(&mut rng);
        state.check_consistency().unwrap();
        trace.push(state.log_likelihood());
    }
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&trace[50..]) > median(&trace[1..11]), "{trace:?}");
    assert!(trace[60] > trace[0]);
}

#[test]
fn hybrid_labels_track_planted_topics_at_least_as_well_as_theta() {
    let planted = synthetic::generate(&PlantedConfig { seed: 0, ..PlantedConfig::default() }).unwrap();
    let corpus = BowCorpus::build(&planted.docs, 1).unwrap();
    let state = lda::train(&corpus, &LdaConfig::new(4)).unwrap();
    let tau = state.estimate_tau();
    let theta: Vec<Option<usize>> = state.estimate_theta().argmax_labels().into_iter().map(Some).collect();
    let emb = embed::train(
        &planted.docs,
        &SkipGramConfig { dim: 50, min_count: 1, ..SkipGramConfig::default() },
    )
    .unwrap();
    let map = fusion::build_word_topic_map(&tau, &corpus.dictionary, &emb.model, &FusionConfig::default()).unwrap();
    let hybrid: Vec<Option<usize>> = fusion::assign_corpus(&planted.docs, &map).into_iter().map(|a| a.topic).collect();
    assert_eq!(hybrid.len(), planted.docs.len());
    let (h, t) = (
        matched_accuracy(&hybrid, &planted.labels, 4),
        matched_accuracy(&theta, &planted.labels, 4),
    );
    assert!(h >= t, "hybrid {h} < theta {t}");
}

#[test]
fn zero_neighbours_reproduce_lda_labels() {
    for seed in 0..3 {
        let planted = synthetic::generate(&PlantedConfig { seed, docs: 120, ..PlantedConfig::default() }).unwrap();
        let corpus = BowCorpus::build(&planted.docs, 1).unwrap();
        let state = lda::train(&corpus, &LdaConfig { iterations: 60, seed, ..LdaConfig::new(4) }).unwrap();
        let tau = state.estimate_tau();
        let emb = embed::train(
            &planted.docs,
            &SkipGramConfig { dim: 10, epochs: 1, min_count: 1, seed, ..SkipGramConfig::default() },
        )
        .unwrap();
        let off = FusionConfig { neighbors_per_seed: 0, ..FusionConfig::default() };
        let map = fusion::build_word_topic_map(&tau, &corpus.dictionary, &emb.model, &off).unwrap();
        let plain = fusion::WordTopicMap::from_lda(&tau, &corpus.dictionary);
        assert_eq!(
            fusion::assign_corpus(&planted.docs, &map),
            fusion::assign_corpus(&planted.docs, &plain)
        );
    }
}

#[test]
fn lstm_learns_an_alternating_user() {
    let events: Vec<InteractionEvent> = (0..200)
        .map(|i| InteractionEvent {
            user_id: "alt".into(),
            paper_id: format!("p{i}"),
            topic: [1, 3][i % 2],
            timestamp: 1_000 + 90 * i as i64,
            session_no: (i / 40) as u32,
            liked: false,
        })
        .collect();
    let config = IntentConfig {
        lookback: 3,
        train: TrainConfig { hidden: 8, epochs: 30, seed: 1, ..TrainConfig::default() },
        ..IntentConfig::default()
    };
    let data = intent::build_dataset(&events, 4, &config).unwrap();
    let model = intent::train(&data, &config).unwrap().model;
    let dists: Vec<Vec<f64>> = data.test.iter().map(|c| model.distribution(&c.window.inputs)).collect();
    let truth: Vec<usize> = data.test.iter().map(|c| c.window.target).collect();
    let report = sequence_metrics(&dists, &truth).unwrap();
    assert!(report.accuracy > 0.9, "{report:?}");
    let (next, _) = model.predict_next(&events).unwrap();
    assert_eq!(next, 1);
}
