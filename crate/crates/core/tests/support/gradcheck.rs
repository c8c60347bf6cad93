// Central finite-difference oracles for the skip-gram and LSTM gradients.

use ndarray::Array2;
use rand::Rng;
use scholar_intent::corpus::Dictionary;
use scholar_intent::embed::{EmbeddingModel, TrainingPair};
use scholar_intent::intent::lstm::{self, LstmParams};
use scholar_intent::rng;

const STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Largest relative error over every weight of a random skip-gram instance.
pub fn skipgram_instance(seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let v = rng.random_range(3..7);
    let n = rng.random_range(2..5);
    let tokens = (0..v).map(|i| format!("w{}", (b'a' + i as u8) as char)).collect();
    let dict = Dictionary::from_tokens(tokens, 1).unwrap();
    let mut model = EmbeddingModel::zeros(dict, n);
    model.input.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    model.output.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    let batch: Vec<TrainingPair> = (0..rng.random_range(1..5))
        .map(|_| TrainingPair {
            target: rng.random_range(0..v),
            context: rng.random_range(0..v),
        })
        .collect();
    let (_, grads) = model.loss_and_grad(&batch).unwrap();
    let mut worst: f64 = 0.0;
    for which in 0..2 {
        for idx in 0..v * n {
            let (r, c) = (idx / n, idx % n);
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                let w = if which == 0 { &mut m.input } else { &mut m.output };
                w[[r, c]] += delta;
                m.loss_and_grad(&batch).unwrap().0
            };
            let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
            let analytic = if which == 0 { grads.input[[r, c]] } else { grads.output[[r, c]] };
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}

/// Largest relative error over every LSTM parameter for a random window
/// with hidden size 3, look-back 2 and 3 classes.
pub fn lstm_instance(seed: u64) -> f64 {
    let (hidden, k, lookback) = (3, 3, 2);
    let input = k + 2;
    let mut rng = rng::seeded(seed);
    let mut params = LstmParams::initialize(hidden, input, k, &mut rng);
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    }
    let x = Array2::from_shape_fn((lookback, input), |_| rng.random_range(0.0..1.0));
    let target = rng.random_range(0..k);
    let (_, grads) = lstm::loss_and_grad(&params, x.view(), target);
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (ti, tensor) in analytic.iter().enumerate() {
        for (j, &a) in tensor.iter().enumerate() {
            let loss_at = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[ti][j] += delta;
                lstm::loss_and_grad(&p, x.view(), target).0
            };
            let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}
