//! Feedforward network with a two-unit softmax output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Rectifier,
    Tanh,
    /// Maximum over two linear channels per unit.
    Maxout,
}

impl Activation {
    pub fn channels(self) -> usize {
        match self {
            Activation::Maxout => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Rectifier => "rectifier",
            Activation::Tanh => "tanh",
            Activation::Maxout => "maxout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectifier" | "relu" => Some(Activation::Rectifier),
            "tanh" => Some(Activation::Tanh),
            "maxout" => Some(Activation::Maxout),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Loss {
    #[default]
    CrossEntropy,
    SquaredError,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::CrossEntropy => "cross_entropy",
            Loss::SquaredError => "squared_error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cross_entropy" | "crossentropy" => Some(Loss::CrossEntropy),
            "squared_error" | "squarederror" | "mse" => Some(Loss::SquaredError),
            _ => None,
        }
    }
}

/// One weight layer. `w` is row-major with `channels * n_out` rows of length
/// `n_in`; row `u * channels + c` feeds channel `c` of unit `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// `None` marks the softmax output layer.
    pub activation: Option<Activation>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn channels(&self) -> usize {
        self.activation.map_or(1, |a| a.channels())
    }

    pub fn rows(&self) -> usize {
        self.channels() * self.n_out
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.w[r * self.n_in..(r + 1) * self.n_in]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub layers: Vec<Layer>,
    pub loss: Loss,
    /// Training-split feature means and standard deviations.
    pub feature_mean: Vec<f64>,
    pub feature_sd: Vec<f64>,
    pub feature_names: Vec<String>,
    pub preset: String,
    pub seed: u64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the (possibly dropped-out) input; `acts[l]` the output of
    /// weight layer `l - 1`; the last entry holds the class probabilities.
    pub acts: Vec<Vec<f64>>,
    /// Pre-activations per weight layer, one per row.
    pub pre: Vec<Vec<f64>>,
    /// Winning channel per unit (Maxout layers only).
    pub chosen: Vec<Vec<u8>>,
    /// Inverted-dropout multipliers for `acts[l]` (empty when not applied).
    pub masks: Vec<Vec<f64>>,
}

impl Trace {
    pub fn probs(&self) -> [f64; 2] {
        let p = self.acts.last().expect("non-empty trace");
        [p[0], p[1]]
    }
}

/// Dropout state used in training mode.
pub struct Dropout<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub input: f64,
    pub hidden: f64,
}

pub fn softmax2(z: &[f64]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

fn mask(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Gradients with the same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(model: &NetworkModel) -> Self {
        Gradients {
            w: model.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl NetworkModel {
    /// Weights uniform on ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn init(n_inputs: usize, hidden: &[(usize, Activation)], loss: Loss, seed: u64) -> Result<Self> {
        if n_inputs == 0 || hidden.is_empty() || hidden.iter().any(|h| h.0 == 0) {
            return Err(Error::InvalidInput(
                "network needs at least one input and one non-empty hidden layer".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut n_in = n_inputs;
        let specs = hidden
            .iter()
            .map(|&(n, a)| (n, Some(a)))
            .chain(std::iter::once((2, None)));
        for (n_out, activation) in specs {
            let rows = activation.map_or(1, |a: Activation| a.channels()) * n_out;
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let w = (0..rows * n_in)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            layers.push(Layer {
                n_in,
                n_out,
                activation,
                w,
                b: vec![0.0; rows],
            });
            n_in = n_out;
        }
        Ok(NetworkModel {
            layers,
            loss,
            feature_mean: vec![0.0; n_inputs],
            feature_sd: vec![1.0; n_inputs],
            feature_names: Vec::new(),
            preset: String::new(),
            seed,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    /// Forward pass on an already standardised input. Dropout masks are drawn
    /// only when `dropout` is given.
    pub fn forward_trace(&self, x: &[f64], mut dropout: Option<Dropout<'_>>) -> Trace {
        assert_eq!(x.len(), self.n_inputs(), "input dimension mismatch");
        let n_layers = self.layers.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        let mut chosen = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers);

        let mut a0 = x.to_vec();
        match dropout.as_mut() {
            Some(d) if d.input > 0.0 => {
                let m = mask(d.rng, a0.len(), d.input);
                a0.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                masks.push(m);
            }
            _ => masks.push(Vec::new()),
        }
        acts.push(a0);

        for (li, layer) in self.layers.iter().enumerate() {
            let input = &acts[li];
            let z: Vec<f64> = (0..layer.rows())
                .map(|r| {
                    layer
                        .row(r)
                        .iter()
                        .zip(input)
                        .fold(layer.b[r], |s, (w, a)| s + w * a)
                })
                .collect();
            let mut ch = Vec::new();
            let out: Vec<f64> = match layer.activation {
                None => softmax2(&z).to_vec(),
                Some(Activation::Rectifier) => z.iter().map(|&v| v.max(0.0)).collect(),
                Some(Activation::Tanh) => z.iter().map(|v| v.tanh()).collect(),
                Some(Activation::Maxout) => (0..layer.n_out)
                    .map(|u| {
                        let (c0, c1) = (z[2 * u], z[2 * u + 1]);
                        // ties go to the lower channel
                        if c1 > c0 {
                            ch.push(1);
                            c1
                        } else {
                            ch.push(0);
                            c0
                        }
                    })
                    .collect(),
            };
            let mut out = out;
            let is_hidden = layer.activation.is_some();
            match dropout.as_mut() {
                Some(d) if is_hidden && d.hidden > 0.0 => {
                    let m = mask(d.rng, out.len(), d.hidden);
                    out.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                    masks.push(m);
                }
                _ => masks.push(Vec::new()),
            }
            pre.push(z);
            chosen.push(ch);
            acts.push(out);
        }
        Trace {
            acts,
            pre,
            chosen,
            masks,
        }
    }

    /// Class probabilities `[P(control), P(case)]` for a standardised input.
    pub fn forward(&self, x: &[f64]) -> [f64; 2] {
        self.forward_trace(x, None).probs()
    }

    /// Per-sample data loss of probabilities `a` against one-hot `y`.
    pub fn data_loss(&self, a: &[f64; 2], label: u8) -> f64 {
        let y = one_hot(label);
        match self.loss {
            Loss::CrossEntropy => {
                let p = a[label as usize].max(f64::MIN_POSITIVE);
                -p.ln()
            }
            Loss::SquaredError => 0.5 * ((a[0] - y[0]).powi(2) + (a[1] - y[1]).powi(2)),
        }
    }

    /// L2 penalty `(λ/2)ΣW²` plus L1 penalty `λ₁Σ|W|`; biases excluded.
    pub fn penalty(&self, l1: f64, l2: f64) -> f64 {
        let (mut sq, mut ab) = (0.0, 0.0);
        for l in &self.layers {
            for &w in &l.w {
                sq += w * w;
                ab += w.abs();
            }
        }
        0.5 * l2 * sq + l1 * ab
    }

    /// Mean data loss over the batch plus the weight penalties (no dropout).
    pub fn cost(&self, xs: &[&[f64]], labels: &[u8], l1: f64, l2: f64) -> f64 {
        assert!(!xs.is_empty());
        let data: f64 = xs
            .iter()
            .zip(labels)
            .map(|(x, &y)| self.data_loss(&self.forward(x), y))
            .sum::<f64>()
            / xs.len() as f64;
        data + self.penalty(l1, l2)
    }

    /// Accumulate one sample's data-term gradient into `g`.
    pub fn backprop_into(&self, trace: &Trace, label: u8, g: &mut Gradients) {
        let y = one_hot(label);
        let n_layers = self.layers.len();
        let a = trace.probs();
        let mut delta: Vec<f64> = match self.loss {
            Loss::CrossEntropy => vec![a[0] - y[0], a[1] - y[1]],
            Loss::SquaredError => {
                // full softmax Jacobian applied to (a - y)
                let r = [a[0] - y[0], a[1] - y[1]];
                let dot = r[0] * a[0] + r[1] * a[1];
                vec![a[0] * (r[0] - dot), a[1] * (r[1] - dot)]
            }
        };
        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let input = &trace.acts[li];
            let gw = &mut g.w[li];
            let gb = &mut g.b[li];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[r] += d;
                let row = &mut gw[r * layer.n_in..(r + 1) * layer.n_in];
                row.iter_mut().zip(input).for_each(|(gv, &av)| *gv += d * av);
            }
            if li == 0 {
                break;
            }
            // gradient wrt this layer's input = previous hidden output
            let prev = &self.layers[li - 1];
            let mut upstream = vec![0.0; layer.n_in];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (u, &w) in upstream.iter_mut().zip(layer.row(r)) {
                    *u += w * d;
                }
            }
            let m = &trace.masks[li];
            if !m.is_empty() {
                upstream.iter_mut().zip(m).for_each(|(u, s)| *u *= s);
            }
            let z = &trace.pre[li - 1];
            delta = match prev.activation.expect("hidden layer") {
                Activation::Rectifier => upstream
                    .iter()
                    .zip(z)
                    .map(|(&u, &zv)| if zv > 0.0 { u } else { 0.0 })
                    .collect(),
                Activation::Tanh => upstream
                    .iter()
                    .zip(z)
                    .map(|(&u, &zv)| {
                        let t = zv.tanh();
                        u * (1.0 - t * t)
                    })
                    .collect(),
                Activation::Maxout => {
                    let mut d = vec![0.0; prev.rows()];
                    for (unit, &u) in upstream.iter().enumerate() {
                        d[2 * unit + trace.chosen[li - 1][unit] as usize] = u;
                    }
                    d
                }
            };
        }
    }

    /// Add `λW + λ₁·sign(W)` to the weight gradients.
    pub fn add_penalty_gradient(&self, g: &mut Gradients, l1: f64, l2: f64) {
        if l1 == 0.0 && l2 == 0.0 {
            return;
        }
        for (layer, gw) in self.layers.iter().zip(&mut g.w) {
            for (gv, &w) in gw.iter_mut().zip(&layer.w) {
                *gv += l2 * w + l1 * sign(w);
            }
        }
    }

    /// Gradient of [`cost`](Self::cost) over a batch without dropout.
    pub fn backprop(&self, xs: &[&[f64]], labels: &[u8], l1: f64, l2: f64) -> Gradients {
        let mut g = Gradients::zeros(self);
        for (x, &y) in xs.iter().zip(labels) {
            let t = self.forward_trace(x, None);
            self.backprop_into(&t, y, &mut g);
        }
        g.scale(1.0 / xs.len() as f64);
        self.add_penalty_gradient(&mut g, l1, l2);
        g
    }

    /// Rescale every weight row whose squared norm exceeds `max_w2`.
    pub fn apply_max_norm(&mut self, max_w2: f64) {
        for layer in &mut self.layers {
            let n_in = layer.n_in;
            for row in layer.w.chunks_mut(n_in) {
                let s: f64 = row.iter().map(|w| w * w).sum();
                if s > max_w2 {
                    let f = (max_w2 / s).sqrt();
                    row.iter_mut().for_each(|w| *w *= f);
                }
            }
        }
    }

    /// Gradient step with rate `α·decay^(l-1) / (1 + annealing·t)` for weight
    /// layer `l` (1-based), followed by the max-norm constraint.
    pub fn sgd_step(&mut self, g: &Gradients, t: u64, schedule: &RateSchedule) {
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let rate = schedule.rate(li + 1, t);
            layer.w.iter_mut().zip(&g.w[li]).for_each(|(w, gv)| *w -= rate * gv);
            layer.b.iter_mut().zip(&g.b[li]).for_each(|(b, gv)| *b -= rate * gv);
        }
        if schedule.max_w2.is_finite() {
            self.apply_max_norm(schedule.max_w2);
        }
    }

    /// Standardise raw features with the stored training statistics; missing
    /// values (NaN) map to 0, the training mean.
    pub fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_sd))
            .map(|(&v, (&m, &s))| if v.is_nan() { 0.0 } else { (v - m) / s })
            .collect()
    }

    /// P(case) for one raw (unstandardised) feature vector.
    pub fn predict_one(&self, raw: &[f64]) -> f64 {
        self.forward(&self.standardize(raw))[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSchedule {
    pub learning_rate: f64,
    pub rate_annealing: f64,
    pub rate_decay: f64,
    pub max_w2: f64,
}

impl RateSchedule {
    pub fn rate(&self, layer: usize, t: u64) -> f64 {
        self.learning_rate * self.rate_decay.powi(layer as i32 - 1) / (1.0 + self.rate_annealing * t as f64)
    }
}

pub fn one_hot(label: u8) -> [f64; 2] {
    if label == 1 {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(acts: Activation) -> NetworkModel {
        let mut m = NetworkModel::init(2, &[(2, acts)], Loss::CrossEntropy, 1).unwrap();
        for l in &mut m.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
        }
        m
    }

    #[test]
    fn zero_network_is_uniform() {
        for a in [Activation::Rectifier, Activation::Tanh, Activation::Maxout] {
            assert_eq!(zero_model(a).forward(&[0.3, -2.0]), [0.5, 0.5]);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let h = [(5, Activation::Tanh), (4, Activation::Maxout)];
        let a = NetworkModel::init(7, &h, Loss::CrossEntropy, 11).unwrap();
        let b = NetworkModel::init(7, &h, Loss::CrossEntropy, 11).unwrap();
        let c = NetworkModel::init(7, &h, Loss::CrossEntropy, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers[0].w, c.layers[0].w);
        for l in &a.layers {
            let bound = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            assert!(l.w.iter().all(|w| w.abs() <= bound));
            assert!(l.b.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.layers[1].w.len(), 2 * 4 * 5);
        assert!(NetworkModel::init(3, &[], Loss::CrossEntropy, 1).is_err());
        assert!(NetworkModel::init(3, &[(0, Activation::Tanh)], Loss::CrossEntropy, 1).is_err());
    }

    #[test]
    fn activation_definitions() {
        // unit weights isolate the activation
        let mut m = NetworkModel::init(1, &[(1, Activation::Rectifier)], Loss::CrossEntropy, 1).unwrap();
        m.layers[0].w = vec![1.0];
        assert_eq!(m.forward_trace(&[-1.0], None).acts[1], vec![0.0]);
        assert_eq!(m.forward_trace(&[2.0], None).acts[1], vec![2.0]);
        m.layers[0].activation = Some(Activation::Tanh);
        assert_eq!(m.forward_trace(&[0.0], None).acts[1], vec![0.0]);
        let mut mx = NetworkModel::init(1, &[(1, Activation::Maxout)], Loss::CrossEntropy, 1).unwrap();
        mx.layers[0].w = vec![1.0, -3.0];
        assert_eq!(mx.forward_trace(&[1.0], None).acts[1], vec![1.0]);
    }

    #[test]
    fn hand_computed_two_two_two() {
        let mut m = NetworkModel::init(2, &[(2, Activation::Tanh)], Loss::CrossEntropy, 1).unwrap();
        m.layers[0].w = vec![0.5, -0.25, 0.1, 0.3];
        m.layers[0].b = vec![0.1, -0.2];
        m.layers[1].w = vec![1.0, -1.0, -0.5, 2.0];
        m.layers[1].b = vec![0.0, 0.05];
        let x = [1.0, 2.0];
        let h0 = (0.5f64 * 1.0 - 0.25 * 2.0 + 0.1).tanh();
        let h1 = (0.1f64 * 1.0 + 0.3 * 2.0 - 0.2).tanh();
        let z0 = h0 - h1;
        let z1 = -0.5 * h0 + 2.0 * h1 + 0.05;
        let p1 = 1.0 / (1.0 + (z0 - z1).exp());
        let p = m.forward(&x);
        assert!((p[1] - p1).abs() < 1e-12);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        for z in [[100.0, -100.0], [-100.0, 100.0], [1e300, 1e300], [-800.0, -790.0]] {
            let p = softmax2(&z);
            assert!(p.iter().all(|v| v.is_finite()));
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_penalty_examples() {
        let mut m = NetworkModel::init(1, &[(1, Activation::Tanh)], Loss::SquaredError, 1).unwrap();
        m.layers[0].w = vec![2.0];
        m.layers[1].w = vec![0.0, 0.0];
        assert!((m.penalty(0.0, 0.1) - 0.2).abs() < 1e-15);
        assert!((m.penalty(0.0, 0.2) - 2.0 * m.penalty(0.0, 0.1)).abs() < 1e-15);
        assert!((m.penalty(0.5, 0.0) - 1.0).abs() < 1e-15);
        // perfect one-hot output gives zero data cost
        assert_eq!(m.data_loss(&[0.0, 1.0], 1), 0.0);
    }

    #[test]
    fn zero_error_squared_loss_gives_zero_gradient() {
        let mut m = NetworkModel::init(3, &[(4, Activation::Tanh)], Loss::SquaredError, 3).unwrap();
        // saturate the output towards class 1 exactly
        let out = m.layers.last_mut().unwrap();
        out.w.iter_mut().for_each(|w| *w = 0.0);
        out.b = vec![-1000.0, 1000.0];
        let x = [0.2, -0.1, 0.4];
        let g = m.backprop(&[&x], &[1], 0.0, 0.0);
        assert!(g.w.iter().chain(&g.b).flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn max_norm_example() {
        let mut m = NetworkModel::init(2, &[(1, Activation::Tanh)], Loss::CrossEntropy, 1).unwrap();
        m.layers[0].w = vec![3.0, 4.0];
        m.apply_max_norm(10.0);
        let w = &m.layers[0].w;
        assert!((w[0] - 1.8974).abs() < 1e-4 && (w[1] - 2.5298).abs() < 1e-4);
        assert!((w[0] * w[0] + w[1] * w[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn plain_sgd_step() {
        let mut m = NetworkModel::init(1, &[(1, Activation::Tanh)], Loss::CrossEntropy, 1).unwrap();
        m.layers[0].w = vec![0.7];
        let mut g = Gradients::zeros(&m);
        g.w[0][0] = 0.25;
        let s = RateSchedule {
            learning_rate: 0.005,
            rate_annealing: 1e-6,
            rate_decay: 1.0,
            max_w2: 10.0,
        };
        assert_eq!(s.rate(1, 0), 0.005);
        m.sgd_step(&g, 0, &s);
        assert_eq!(m.layers[0].w[0], 0.7 - 0.005 * 0.25);
        assert!((s.rate(1, 1_000_000) - 0.0025).abs() < 1e-15);
        let decayed = RateSchedule { rate_decay: 0.5, ..s };
        assert_eq!(decayed.rate(3, 0), 0.005 * 0.25);
    }

    #[test]
    fn inference_is_dropout_free() {
        let m = NetworkModel::init(4, &[(6, Activation::Rectifier)], Loss::CrossEntropy, 5).unwrap();
        let x = [0.1, 0.2, -0.3, 1.0];
        assert_eq!(m.forward(&x), m.forward(&x));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = m.forward_trace(
            &x,
            Some(Dropout {
                rng: &mut rng,
                input: 0.0,
                hidden: 0.5,
            }),
        );
        assert!(t.masks[1].iter().all(|&s| s == 0.0 || s == 2.0));
    }

    fn random_batch(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..n).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        (xs, ys)
    }

    // central differences on the full cost, penalties included
    fn check_gradient(activation: Activation, loss: Loss, seed: u64) {
        let (l1, l2) = (1e-3, 2e-3);
        let mut m = NetworkModel::init(3, &[(4, activation), (3, activation)], loss, seed).unwrap();
        // nonzero biases keep rectifier inputs off the kink when a whole
        // upstream layer is inactive
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.layers {
            l.b.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let (xs, ys) = random_batch(seed + 100, 6, 3);
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let g = m.backprop(&refs, &ys, l1, l2);
        let h = 1e-6;
        for li in 0..m.layers.len() {
            for k in 0..m.layers[li].w.len() + m.layers[li].b.len() {
                let is_w = k < m.layers[li].w.len();
                let bump = |d: f64| {
                    let mut mm = m.clone();
                    if is_w {
                        mm.layers[li].w[k] += d;
                    } else {
                        let kb = k - mm.layers[li].w.len();
                        mm.layers[li].b[kb] += d;
                    }
                    mm.cost(&refs, &ys, l1, l2)
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let analytic = if is_w { g.w[li][k] } else { g.b[li][k - m.layers[li].w.len()] };
                let err = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6);
                assert!(
                    err < 1e-4,
                    "{activation:?}/{loss:?} layer {li} param {k}: numeric {numeric} analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for activation in [Activation::Rectifier, Activation::Tanh, Activation::Maxout] {
            for loss in [Loss::CrossEntropy, Loss::SquaredError] {
                check_gradient(activation, loss, 11);
            }
        }
    }
}
