//! Single-layer LSTM with a softmax head, trained by backpropagation
//! through time and Adam.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Gate weights act on the concatenation `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    pub classes: usize,
    pub v_f: Array2<f64>,
    pub v_i: Array2<f64>,
    pub v_c: Array2<f64>,
    pub v_o: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_c: Array1<f64>,
    pub b_o: Array1<f64>,
    pub w_y: Array2<f64>,
    pub b_y: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize, classes: usize) -> Self {
        let gate = || Array2::zeros((hidden, hidden + input));
        Self {
            hidden,
            input,
            classes,
            v_f: gate(),
            v_i: gate(),
            v_c: gate(),
            v_o: gate(),
            b_f: Array1::zeros(hidden),
            b_i: Array1::zeros(hidden),
            b_c: Array1::zeros(hidden),
            b_o: Array1::zeros(hidden),
            w_y: Array2::zeros((classes, hidden)),
            b_y: Array1::zeros(classes),
        }
    }

    /// Weights uniform in `±1/√hidden`, biases zero except the forget
    /// bias, which starts at 1.
    pub fn initialize<R: Rng>(hidden: usize, input: usize, classes: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden, input, classes);
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in [&mut p.v_f, &mut p.v_i, &mut p.v_c, &mut p.v_o, &mut p.w_y] {
            w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        p.b_f.fill(1.0);
        p
    }

    pub fn tensors(&self) -> [&[f64]; 10] {
        fn m(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn v(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        [
            m(&self.v_f),
            m(&self.v_i),
            m(&self.v_c),
            m(&self.v_o),
            v(&self.b_f),
            v(&self.b_i),
            v(&self.b_c),
            v(&self.b_o),
            m(&self.w_y),
            v(&self.b_y),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.v_f.as_slice_mut().expect("standard layout"),
            self.v_i.as_slice_mut().expect("standard layout"),
            self.v_c.as_slice_mut().expect("standard layout"),
            self.v_o.as_slice_mut().expect("standard layout"),
            self.b_f.as_slice_mut().expect("contiguous"),
            self.b_i.as_slice_mut().expect("contiguous"),
            self.b_c.as_slice_mut().expect("contiguous"),
            self.b_o.as_slice_mut().expect("contiguous"),
            self.w_y.as_slice_mut().expect("standard layout"),
            self.b_y.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks that every matrix agrees with `hidden`, `input` and `classes`.
    pub fn validate(&self) -> Result<()> {
        let (h, n, k) = (self.hidden, self.input, self.classes);
        let gates_ok = [&self.v_f, &self.v_i, &self.v_c, &self.v_o]
            .iter()
            .all(|v| v.dim() == (h, h + n));
        let biases_ok = [&self.b_f, &self.b_i, &self.b_c, &self.b_o]
            .iter()
            .all(|b| b.len() == h);
        if !gates_ok || !biases_ok || self.w_y.dim() != (k, h) || self.b_y.len() != k {
            return Err(Error::Shape(format!(
                "LSTM parameters inconsistent with hidden={h}, input={n}, classes={k}"
            )));
        }
        if !self.is_finite() {
            return Err(Error::Shape("LSTM parameters contain non-finite values".into()));
        }
        Ok(())
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }
}

/// Activations of one time step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CellState {
    pub z: Array1<f64>,
    pub f: Array1<f64>,
    pub i: Array1<f64>,
    pub c_hat: Array1<f64>,
    pub o: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

fn cell_full(
    x: ArrayView1<'_, f64>,
    h_prev: ArrayView1<'_, f64>,
    c_prev: ArrayView1<'_, f64>,
    p: &LstmParams,
) -> CellState {
    let mut z = Array1::zeros(p.hidden + p.input);
    z.slice_mut(s![..p.hidden]).assign(&h_prev);
    z.slice_mut(s![p.hidden..]).assign(&x);
    let f = (p.v_f.dot(&z) + &p.b_f).mapv(sigmoid);
    let i = (p.v_i.dot(&z) + &p.b_i).mapv(sigmoid);
    let c_hat = (p.v_c.dot(&z) + &p.b_c).mapv(f64::tanh);
    let o = (p.v_o.dot(&z) + &p.b_o).mapv(sigmoid);
    let c = &f * &c_prev + &i * &c_hat;
    let h = &o * &c.mapv(f64::tanh);
    CellState {
        z,
        f,
        i,
        c_hat,
        o,
        c_prev: c_prev.to_owned(),
        c,
        h,
    }
}

/// One step: returns `(h_t, c_t)`.
pub fn lstm_cell(
    x: ArrayView1<'_, f64>,
    h_prev: ArrayView1<'_, f64>,
    c_prev: ArrayView1<'_, f64>,
    params: &LstmParams,
) -> (Array1<f64>, Array1<f64>) {
    let st = cell_full(x, h_prev, c_prev, params);
    (st.h, st.c)
}

fn unroll(params: &LstmParams, inputs: ArrayView2<'_, f64>) -> Vec<CellState> {
    let mut h = Array1::zeros(params.hidden);
    let mut c = Array1::zeros(params.hidden);
    let mut states = Vec::with_capacity(inputs.nrows());
    for x in inputs.rows() {
        let st = cell_full(x, h.view(), c.view(), params);
        h = st.h.clone();
        c = st.c.clone();
        states.push(st);
    }
    states
}

fn head(params: &LstmParams, h: &Array1<f64>) -> Array1<f64> {
    softmax((params.w_y.dot(h) + &params.b_y).view())
}

/// Distribution over classes after unrolling over the rows of `inputs`.
pub fn forward(params: &LstmParams, inputs: ArrayView2<'_, f64>) -> Array1<f64> {
    let states = unroll(params, inputs);
    let h = states.last().map_or_else(|| Array1::zeros(params.hidden), |s| s.h.clone());
    head(params, &h)
}

/// Cross-entropy of one window and its gradient.
pub fn loss_and_grad(
    params: &LstmParams,
    inputs: ArrayView2<'_, f64>,
    target: usize,
) -> (f64, LstmParams) {
    let states = unroll(params, inputs);
    let hid = params.hidden;
    let h_last = states.last().map_or_else(|| Array1::zeros(hid), |s| s.h.clone());
    let probs = head(params, &h_last);
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();

    let mut g = LstmParams::zeros(hid, params.input, params.classes);
    let mut dlogits = probs;
    dlogits[target] -= 1.0;
    g.w_y = outer(&dlogits, &h_last);
    g.b_y = dlogits.clone();
    let mut dh = params.w_y.t().dot(&dlogits);
    let mut dc = Array1::<f64>::zeros(hid);

    for st in states.iter().rev() {
        let tanh_c = st.c.mapv(f64::tanh);
        let d_o = &dh * &tanh_c;
        dc = dc + &dh * &st.o * &tanh_c.mapv(|t| 1.0 - t * t);
        let d_f = &dc * &st.c_prev;
        let d_i = &dc * &st.c_hat;
        let d_chat = &dc * &st.i;
        let dc_prev = &dc * &st.f;

        let a_f = d_f * &st.f.mapv(|v| v * (1.0 - v));
        let a_i = d_i * &st.i.mapv(|v| v * (1.0 - v));
        let a_c = d_chat * &st.c_hat.mapv(|v| 1.0 - v * v);
        let a_o = d_o * &st.o.mapv(|v| v * (1.0 - v));

        let mut dz = Array1::<f64>::zeros(hid + params.input);
        for (a, v, gv, gb) in [
            (&a_f, &params.v_f, &mut g.v_f, &mut g.b_f),
            (&a_i, &params.v_i, &mut g.v_i, &mut g.b_i),
            (&a_c, &params.v_c, &mut g.v_c, &mut g.b_c),
            (&a_o, &params.v_o, &mut g.v_o, &mut g.b_o),
        ] {
            Zip::from(gv.rows_mut()).and(a).for_each(|mut row, &ai| row.scaled_add(ai, &st.z));
            *gb += a;
            dz += &v.t().dot(a);
        }
        dh = dz.slice(s![..hid]).to_owned();
        dc = dc_prev;
    }
    (loss, g)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((a.len(), b.len()));
    Zip::from(m.rows_mut()).and(a).for_each(|mut row, &ai| row.assign(&(b * ai)));
    m
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize], learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(params: &LstmParams, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::new(&shapes, learning_rate)
    }

    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 100,
            batch: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// A training example: `lookback × input` rows and the class that follows.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedWindow {
    pub inputs: Array2<f64>,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedLstm {
    pub params: LstmParams,
    /// Mean cross-entropy of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam on mean cross-entropy. Batches are reshuffled every
/// epoch from the seeded generator.
pub fn train(windows: &[SupervisedWindow], classes: usize, config: &TrainConfig) -> Result<TrainedLstm> {
    if config.hidden == 0 || config.batch == 0 || classes == 0 {
        return Err(Error::InvalidConfig("hidden, batch and classes must be positive".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidConfig("learning_rate must be positive".into()));
    }
    let input = windows.first().map_or(0, |w| w.inputs.ncols());
    if let Some(w) = windows.iter().find(|w| w.inputs.ncols() != input || w.target >= classes) {
        return Err(Error::Shape(format!(
            "window with {} features and target {} does not fit input={input}, classes={classes}",
            w.inputs.ncols(),
            w.target
        )));
    }
    let mut rng = rng::seeded(config.seed);
    let mut params = LstmParams::initialize(config.hidden, input, classes, &mut rng);
    let mut adam = AdamState::for_params(&params, config.learning_rate);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch) {
            let mut grad = LstmParams::zeros(config.hidden, input, classes);
            for &w in batch {
                let (loss, g) = loss_and_grad(&params, windows[w].inputs.view(), windows[w].target);
                total += loss;
                grad.add_assign(&g);
            }
            grad.scale(1.0 / batch.len() as f64);
            let grads = grad.tensors();
            adam.update(&mut params.tensors_mut(), &grads);
        }
        let mean = total / windows.len().max(1) as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::Diverged {
                stage: "lstm",
                detail: format!("mean loss {mean} at epoch {epoch}"),
            });
        }
        log::debug!("lstm epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    Ok(TrainedLstm { params, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn zero_params_give_half_gates_and_zero_state() {
        let p = LstmParams::zeros(4, 3, 2);
        let st = cell_full(
            array![0.3, -1.0, 2.0].view(),
            Array1::zeros(4).view(),
            Array1::zeros(4).view(),
            &p,
        );
        assert!(st.f.iter().chain(&st.i).chain(&st.o).all(|&g| g == 0.5));
        assert!(st.c_hat.iter().chain(&st.c).chain(&st.h).all(|&v| v == 0.0));
        assert_eq!(forward(&p, Array2::zeros((3, 3)).view()), array![0.5, 0.5]);
    }

    #[test]
    fn saturated_forget_gate_keeps_the_cell() {
        let mut p = LstmParams::zeros(2, 1, 2);
        p.b_f.fill(50.0);
        p.b_i.fill(-50.0);
        let c_prev = array![0.7, -0.3];
        let (_, c) = lstm_cell(array![1.0].view(), array![0.1, 0.2].view(), c_prev.view(), &p);
        assert_abs_diff_eq!(c, c_prev, epsilon = 1e-12);

        p.b_f.fill(-800.0);
        p.b_i.fill(800.0);
        p.b_c.fill(0.5);
        let (_, c) = lstm_cell(array![1.0].view(), array![0.1, 0.2].view(), c_prev.view(), &p);
        assert_eq!(c, Array1::from_elem(2, 0.5f64.tanh()));
    }

    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        let mut p = LstmParams::zeros(1, 1, 1);
        // columns: [h_prev, x]
        p.v_f = array![[0.2, -0.4]];
        p.v_i = array![[0.5, 0.1]];
        p.v_c = array![[-0.3, 0.8]];
        p.v_o = array![[0.6, 0.6]];
        p.b_f = array![0.1];
        p.b_i = array![-0.2];
        p.b_c = array![0.05];
        p.b_o = array![0.0];
        let (h0, c0, x) = (0.3, -0.5, 0.9);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let f = sig(0.2 * h0 - 0.4 * x + 0.1);
        let i = sig(0.5 * h0 + 0.1 * x - 0.2);
        let ch = (-0.3 * h0 + 0.8 * x + 0.05).tanh();
        let o = sig(0.6 * h0 + 0.6 * x);
        let c = f * c0 + i * ch;
        let h = o * c.tanh();
        let (h1, c1) = lstm_cell(array![x].view(), array![h0].view(), array![c0].view(), &p);
        assert_abs_diff_eq!(c1[0], c, epsilon = 1e-15);
        assert_abs_diff_eq!(h1[0], h, epsilon = 1e-15);
    }

    #[test]
    fn forward_is_a_distribution() {
        let mut rng = rng::seeded(9);
        for _ in 0..20 {
            let p = LstmParams::initialize(5, 4, 6, &mut rng);
            let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
            let y = forward(&p, x.view());
            assert_abs_diff_eq!(y.sum(), 1.0, epsilon = 1e-12);
            assert!(y.iter().all(|&v| v > 0.0));
            let (h, _) = lstm_cell(x.row(0), Array1::zeros(5).view(), Array1::zeros(5).view(), &p);
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(&[2], 0.01);
        let mut p = vec![1.0, -1.0];
        adam.update(&mut [&mut p], &[&[3.0, -0.5]]);
        assert_abs_diff_eq!(p[0], 0.99, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], -0.99, epsilon = 1e-9);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut adam = AdamState::new(&[1], 0.05);
        let mut x = vec![4.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.5)];
            adam.update(&mut [&mut x], &[&g]);
        }
        assert_abs_diff_eq!(x[0], 1.5, epsilon = 1e-3);
    }

    fn toy_windows() -> Vec<SupervisedWindow> {
        (0..10)
            .map(|n| {
                let t = n % 3;
                let mut inputs = Array2::zeros((2, 3));
                inputs[[0, t]] = 1.0;
                inputs[[1, (t + 1) % 3]] = 1.0;
                SupervisedWindow { inputs, target: (t + 2) % 3 }
            })
            .collect()
    }

    #[test]
    fn training_reduces_loss_and_is_seeded() {
        let cfg = TrainConfig { hidden: 8, epochs: 60, batch: 4, learning_rate: 0.02, seed: 4 };
        let a = train(&toy_windows(), 3, &cfg).unwrap();
        let l = &a.epoch_losses;
        assert!(l[l.len() - 1] < 0.5 * l[0], "{l:?}");
        let b = train(&toy_windows(), 3, &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn zero_epochs_return_initial_parameters() {
        let cfg = TrainConfig { hidden: 4, epochs: 0, seed: 2, ..TrainConfig::default() };
        let t = train(&toy_windows(), 3, &cfg).unwrap();
        let init = LstmParams::initialize(4, 3, 3, &mut rng::seeded(2));
        assert_eq!(t.params, init);
        assert!(t.epoch_losses.is_empty());
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let mut p = LstmParams::zeros(3, 2, 2);
        assert!(p.validate().is_ok());
        p.w_y = Array2::zeros((2, 4));
        assert!(p.validate().is_err());
    }
}
