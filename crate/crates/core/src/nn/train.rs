//! Training regimen: seeded split, standardisation, SGD with dropout,
//! early stopping on validation logloss.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Activation, Dropout, Gradients, Loss, NetworkModel, RateSchedule};
use crate::error::{Error, Result};
use crate::metrics::logloss;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub l1: f64,
    pub l2: f64,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "5SNP",
        hidden: [20, 20],
        activation: Activation::Maxout,
        l1: 7.1e-5,
        l2: 9.6e-5,
    },
    Preset {
        name: "32SNP",
        hidden: [50, 50],
        activation: Activation::Tanh,
        l1: 3.0e-6,
        l2: 6.5e-5,
    },
    Preset {
        name: "248SNP",
        hidden: [50, 50],
        activation: Activation::Tanh,
        l1: 3.0e-6,
        l2: 6.5e-5,
    },
    Preset {
        name: "2465SNP",
        hidden: [10, 10],
        activation: Activation::Rectifier,
        l1: 9.6e-6,
        l2: 2.8e-5,
    },
];

impl Preset {
    pub fn by_name(name: &str) -> Option<&'static Preset> {
        let key = name.trim_start_matches("preset-");
        PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(key))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub loss: Loss,
    pub learning_rate: f64,
    pub rate_annealing: f64,
    pub rate_decay: f64,
    pub l1: f64,
    pub l2: f64,
    pub max_w2: f64,
    pub hidden_dropout: f64,
    pub input_dropout: f64,
    pub minibatch: usize,
    pub max_epochs: usize,
    pub stopping_rounds: usize,
    pub stopping_tolerance: f64,
    pub split: [f64; 3],
    pub seed: u64,
    pub preset: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![10, 10],
            activation: Activation::Rectifier,
            loss: Loss::CrossEntropy,
            learning_rate: 0.005,
            rate_annealing: 1e-6,
            rate_decay: 1.0,
            l1: 0.0,
            l2: 0.0,
            max_w2: 10.0,
            hidden_dropout: 0.5,
            input_dropout: 0.0,
            minibatch: 1,
            max_epochs: 50,
            stopping_rounds: 2,
            stopping_tolerance: 0.01,
            split: [0.6, 0.2, 0.2],
            seed: 1,
            preset: String::new(),
        }
    }
}

impl TrainConfig {
    pub fn from_preset(p: &Preset) -> Self {
        TrainConfig {
            hidden: p.hidden.to_vec(),
            activation: p.activation,
            l1: p.l1,
            l2: p.l2,
            preset: p.name.to_string(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("train: {m}")));
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.split.iter().any(|&s| s < 0.0) {
            return bad("split ratios must be nonnegative and sum to 1");
        }
        let rates = [
            self.learning_rate,
            self.rate_annealing,
            self.rate_decay,
            self.l1,
            self.l2,
            self.max_w2,
            self.stopping_tolerance,
        ];
        if rates.iter().any(|&r| !(r >= 0.0)) {
            return bad("rates, penalties and tolerances must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.hidden_dropout) || !(0.0..1.0).contains(&self.input_dropout) {
            return bad("dropout rates must lie in [0, 1)");
        }
        if self.minibatch == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("minibatch and hidden layer sizes must be positive");
        }
        Ok(())
    }

    fn schedule(&self) -> RateSchedule {
        RateSchedule {
            learning_rate: self.learning_rate,
            rate_annealing: self.rate_annealing,
            rate_decay: self.rate_decay,
            max_w2: self.max_w2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    /// Relative improvement met the tolerance: keep this epoch's model.
    Improved,
    Continue,
    Stop,
}

/// Stops once the relative improvement over the best score so far stays
/// below `tolerance` for `rounds` consecutive scoring events. The model to
/// return is the one from the last event that met the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub tolerance: f64,
    pub rounds: usize,
    best: Option<f64>,
    misses: usize,
    events: usize,
    snapshot_event: Option<usize>,
}

impl EarlyStopping {
    pub fn new(tolerance: f64, rounds: usize) -> Self {
        EarlyStopping {
            tolerance,
            rounds,
            best: None,
            misses: 0,
            events: 0,
            snapshot_event: None,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        self.events += 1;
        let decision = match self.best {
            None => StopDecision::Improved,
            Some(best) => {
                let rel = if best > 0.0 { (best - score) / best } else { 0.0 };
                if rel >= self.tolerance {
                    StopDecision::Improved
                } else {
                    self.misses += 1;
                    if self.rounds > 0 && self.misses >= self.rounds {
                        StopDecision::Stop
                    } else {
                        StopDecision::Continue
                    }
                }
            }
        };
        if decision == StopDecision::Improved {
            self.misses = 0;
            self.snapshot_event = Some(self.events);
        }
        self.best = Some(self.best.map_or(score, |b| b.min(score)));
        decision
    }

    /// 1-based index of the event whose model is returned.
    pub fn snapshot_event(&self) -> Option<usize> {
        self.snapshot_event
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_logloss: f64,
    pub valid_logloss: f64,
    pub rate: f64,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub snapshot_epoch: usize,
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_logloss\tvalid_logloss\trate\tstopped\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                e.epoch, e.train_logloss, e.valid_logloss, e.rate, e.stopped as u8
            );
        }
        let _ = writeln!(s, "# returned_epoch\t{}", self.snapshot_epoch);
        s
    }
}

/// Row indices of the three partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle cut into train/validation/test by `ratios`.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5B11_7000);
    idx.shuffle(&mut rng);
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_valid = ((ratios[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    Split {
        train: idx[..n_train].to_vec(),
        valid: idx[n_train..n_train + n_valid].to_vec(),
        test: idx[n_train + n_valid..].to_vec(),
    }
}

/// Feature table: `n` rows of `p` raw values, NaN for missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub p: usize,
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
}

/// Per-feature mean and SD over the given rows, ignoring NaN. Constant or
/// unobserved features get SD 1.
pub fn feature_stats(data: &Dataset, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let p = data.p;
    let mut mean = vec![0.0; p];
    let mut sd = vec![1.0; p];
    for j in 0..p {
        let vals: Vec<f64> = rows
            .iter()
            .map(|&i| data.x[i * p + j])
            .filter(|v| !v.is_nan())
            .collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
        mean[j] = m;
        if var > 0.0 {
            sd[j] = var.sqrt();
        }
    }
    (mean, sd)
}

pub struct TrainOutcome {
    pub model: NetworkModel,
    pub log: TrainLog,
    pub split: Split,
}

fn mean_logloss(model: &NetworkModel, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    let p: Vec<f64> = xs.iter().map(|x| model.forward(x)[1]).collect();
    logloss(ys, &p)
}

/// Train on the seeded 60/20/20 split of `data` (ratios from the config).
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.p == 0 {
        return Err(Error::InvalidInput("train: no features".into()));
    }
    let split = split_indices(data.n, config.split, config.seed);
    let ys_train: Vec<u8> = split.train.iter().map(|&i| data.y[i]).collect();
    if !(ys_train.contains(&0) && ys_train.contains(&1)) {
        return Err(Error::Degenerate("train: training split holds a single class".into()));
    }
    if split.valid.is_empty() {
        return Err(Error::InvalidInput("train: empty validation split".into()));
    }

    let hidden: Vec<(usize, Activation)> = config.hidden.iter().map(|&h| (h, config.activation)).collect();
    let mut model = NetworkModel::init(data.p, &hidden, config.loss, config.seed)?;
    let (mean, sd) = feature_stats(data, &split.train);
    model.feature_mean = mean;
    model.feature_sd = sd;
    model.feature_names = data.feature_names.clone();
    model.preset = config.preset.clone();

    let xs_train: Vec<Vec<f64>> = split.train.iter().map(|&i| model.standardize(data.row(i))).collect();
    let xs_valid: Vec<Vec<f64>> = split.valid.iter().map(|&i| model.standardize(data.row(i))).collect();
    let ys_valid: Vec<u8> = split.valid.iter().map(|&i| data.y[i]).collect();

    let schedule = config.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x7EA1));
    let mut order: Vec<usize> = (0..xs_train.len()).collect();
    let mut stopper = EarlyStopping::new(config.stopping_tolerance, config.stopping_rounds);
    let mut log = TrainLog::default();
    let mut snapshot = model.clone();
    let mut t: u64 = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.minibatch) {
            let mut g = Gradients::zeros(&model);
            for &k in batch {
                let trace = model.forward_trace(
                    &xs_train[k],
                    Some(Dropout {
                        rng: &mut rng,
                        input: config.input_dropout,
                        hidden: config.hidden_dropout,
                    }),
                );
                model.backprop_into(&trace, ys_train[k], &mut g);
            }
            if batch.len() > 1 {
                g.scale(1.0 / batch.len() as f64);
            }
            model.add_penalty_gradient(&mut g, config.l1, config.l2);
            model.sgd_step(&g, t, &schedule);
            t += batch.len() as u64;
        }
        let valid = mean_logloss(&model, &xs_valid, &ys_valid);
        let decision = stopper.observe(valid);
        if decision == StopDecision::Improved {
            snapshot = model.clone();
            log.snapshot_epoch = epoch;
        }
        let stopped = decision == StopDecision::Stop;
        log.epochs.push(EpochLog {
            epoch,
            train_logloss: mean_logloss(&model, &xs_train, &ys_train),
            valid_logloss: valid,
            rate: schedule.rate(1, t),
            stopped,
        });
        if stopped {
            break;
        }
    }
    Ok(TrainOutcome {
        model: snapshot,
        log,
        split,
    })
}

/// P(case) for every row of `data`, using the model's stored
/// standardisation. Rows must carry the model's feature count.
pub fn predict_proba(model: &NetworkModel, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
    if data.p != model.n_inputs() {
        return Err(Error::InvalidInput(format!(
            "model expects {} features, table has {}",
            model.n_inputs(),
            data.p
        )));
    }
    Ok(rows.iter().map(|&i| model.predict_one(data.row(i))).collect())
}
