//! Flat dotted-key configuration. Defaults, then the config file, then
//! `--key value` overrides; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::Value;

use crate::metrics::PositiveClass;
use crate::nn::{Activation, Loss, Preset, TrainConfig};
use crate::qc::QcConfig;
use crate::synth::{random_causal, LdBlock, Subpopulation, SyntheticSpec};

/// Keys that steer where and how fast a run executes but not what it
/// computes; they are left out of the config hash.
const UNHASHED: [&str; 2] = ["out_dir", "threads"];

fn defaults() -> BTreeMap<String, Value> {
    let f = |v: f64| Value::Float(v);
    let i = |v: i64| Value::Integer(v);
    let s = |v: &str| Value::String(v.into());
    let fl = |v: &[f64]| Value::Array(v.iter().map(|&x| Value::Float(x)).collect());
    let q = QcConfig::default();
    let t = TrainConfig::default();
    let entries: Vec<(&str, Value)> = vec![
        ("seed", i(1)),
        ("threads", i(0)),
        ("out_dir", s("gwasnet_out")),
        ("input.bfile", s("")),
        ("simulate.n_samples", i(2000)),
        ("simulate.n_variants", i(5000)),
        ("simulate.n_causal", i(20)),
        ("simulate.causal_or", fl(&[1.2, 1.6])),
        ("simulate.causal_maf", fl(&[])),
        ("simulate.maf", fl(&[0.05, 0.5])),
        ("simulate.prevalence", f(0.5)),
        ("simulate.ld_blocks", i(0)),
        ("simulate.ld_block_length", i(5)),
        ("simulate.ld_flip", f(0.05)),
        ("simulate.subpop_fractions", fl(&[])),
        ("simulate.subpop_divergence", f(0.0)),
        ("simulate.duplicates", i(0)),
        ("simulate.parent_child", i(0)),
        ("simulate.missing_rate", f(0.0)),
        ("simulate.chromosomes", i(22)),
        ("simulate.x_variants", i(0)),
        ("qc.maf_min", f(q.maf_min)),
        ("qc.hwe_p_min", f(q.hwe_p_min)),
        ("qc.variant_missing_max", f(q.variant_missing_max)),
        ("qc.ibd_pi_hat_max", f(q.ibd_pi_hat_max)),
        ("qc.ld_window", i(q.ld_window as i64)),
        ("qc.ld_step", i(q.ld_step as i64)),
        ("qc.ld_r2_max", f(q.ld_r2_max)),
        ("qc.pca_components", i(q.pca_components as i64)),
        ("qc.pca_outlier_sd", f(q.pca_outlier_sd)),
        ("qc.sex_check", Value::Boolean(q.sex_check)),
        ("assoc.family_alpha", f(0.05)),
        ("select.thresholds", fl(&[1e-5, 1e-4, 1e-3, 1e-2])),
        ("select.raw_p", Value::Boolean(false)),
        (
            "train.presets",
            Value::Array(["5SNP", "32SNP", "248SNP", "2465SNP"].iter().map(|p| s(p)).collect()),
        ),
        ("train.hidden", Value::Array(t.hidden.iter().map(|&h| i(h as i64)).collect())),
        ("train.activation", s(t.activation.name())),
        ("train.l1", f(t.l1)),
        ("train.l2", f(t.l2)),
        ("train.loss", s(t.loss.name())),
        ("train.learning_rate", f(t.learning_rate)),
        ("train.rate_annealing", f(t.rate_annealing)),
        ("train.rate_decay", f(t.rate_decay)),
        ("train.max_w2", f(t.max_w2)),
        ("train.hidden_dropout", f(t.hidden_dropout)),
        ("train.input_dropout", f(t.input_dropout)),
        ("train.minibatch", i(t.minibatch as i64)),
        ("train.max_epochs", i(t.max_epochs as i64)),
        ("train.stopping_rounds", i(t.stopping_rounds as i64)),
        ("train.stopping_tolerance", f(t.stopping_tolerance)),
        ("train.split", fl(&t.split)),
        ("evaluate.positive_class", s(PositiveClass::Case.as_str())),
    ];
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Every recognised key, for usage messages and override detection.
pub fn known_keys() -> Vec<String> {
    defaults().into_keys().collect()
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parse a command-line override value as a TOML value, falling back to a
/// bare string.
pub fn parse_override(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub n_samples: usize,
    pub n_variants: usize,
    pub n_causal: usize,
    pub causal_or: [f64; 2],
    pub causal_maf: Option<[f64; 2]>,
    pub maf: [f64; 2],
    pub prevalence: f64,
    pub ld_blocks: usize,
    pub ld_block_length: usize,
    pub ld_flip: f64,
    pub subpop_fractions: Vec<f64>,
    pub subpop_divergence: f64,
    pub duplicates: usize,
    pub parent_child: usize,
    pub missing_rate: f64,
    pub chromosomes: u8,
    pub x_variants: usize,
}

impl SimulateConfig {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        let n_auto = self.n_variants.saturating_sub(self.x_variants);
        let causal = random_causal(n_auto, self.n_causal, self.causal_or, seed);
        let ld_blocks = if self.ld_blocks == 0 {
            Vec::new()
        } else {
            let stride = (n_auto / self.ld_blocks).max(1);
            (0..self.ld_blocks)
                .map(|k| LdBlock {
                    start: k * stride,
                    length: self.ld_block_length.min(stride),
                    flip_prob: self.ld_flip,
                })
                .filter(|b| b.start + b.length <= n_auto)
                .collect()
        };
        SyntheticSpec {
            n_samples: self.n_samples,
            n_variants: self.n_variants,
            seed,
            maf_range: self.maf,
            causal_maf_range: self.causal_maf,
            causal,
            target_prevalence: self.prevalence,
            ld_blocks,
            subpopulations: self
                .subpop_fractions
                .iter()
                .map(|&fraction| Subpopulation {
                    fraction,
                    divergence: self.subpop_divergence,
                })
                .collect(),
            duplicates: self.duplicates,
            parent_child_pairs: self.parent_child,
            missing_rate: self.missing_rate,
            n_chromosomes: self.chromosomes,
            x_variants: self.x_variants,
        }
    }
}

/// Model choice for one threshold: a named preset or the explicit
/// `train.hidden` / `train.activation` / `train.l1` / `train.l2` keys.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Preset(&'static Preset),
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub input_bfile: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub qc: QcConfig,
    pub family_alpha: f64,
    pub thresholds: Vec<f64>,
    pub raw_p: bool,
    pub models: Vec<ModelChoice>,
    /// Template for custom models and source of the shared training knobs.
    pub train: TrainConfig,
    pub positive_class: PositiveClass,
    values: BTreeMap<String, Value>,
}

struct Getter<'a>(&'a BTreeMap<String, Value>);

impl Getter<'_> {
    fn v(&self, k: &str) -> &Value {
        &self.0[k]
    }

    fn f64(&self, k: &str) -> Result<f64, String> {
        match self.v(k) {
            Value::Float(x) => Ok(*x),
            Value::Integer(x) => Ok(*x as f64),
            other => Err(format!("{k}: expected a number, found {other}")),
        }
    }

    fn usize(&self, k: &str) -> Result<usize, String> {
        match self.v(k) {
            Value::Integer(x) if *x >= 0 => Ok(*x as usize),
            other => Err(format!("{k}: expected a nonnegative integer, found {other}")),
        }
    }

    fn bool(&self, k: &str) -> Result<bool, String> {
        self.v(k).as_bool().ok_or_else(|| format!("{k}: expected true or false"))
    }

    fn str(&self, k: &str) -> Result<String, String> {
        match self.v(k) {
            Value::String(s) => Ok(s.clone()),
            other => Ok(other.to_string()),
        }
    }

    fn list(&self, k: &str) -> Vec<Value> {
        match self.v(k) {
            Value::Array(a) => a.clone(),
            other => vec![other.clone()],
        }
    }

    fn f64s(&self, k: &str) -> Result<Vec<f64>, String> {
        self.list(k)
            .iter()
            .map(|v| match v {
                Value::Float(x) => Ok(*x),
                Value::Integer(x) => Ok(*x as f64),
                other => Err(format!("{k}: expected numbers, found {other}")),
            })
            .collect()
    }

    fn pair(&self, k: &str) -> Result<Option<[f64; 2]>, String> {
        match self.f64s(k)?.as_slice() {
            [] => Ok(None),
            [a] => Ok(Some([*a, *a])),
            [a, b] => Ok(Some([*a, *b])),
            _ => Err(format!("{k}: expected [low, high]")),
        }
    }
}

impl PipelineConfig {
    /// Merge defaults, the optional config file and overrides.
    pub fn load(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, String> {
        let mut values = defaults();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let table: toml::Table = text.parse().map_err(|e| format!("{}: {e}", path.display()))?;
            let mut flat = BTreeMap::new();
            flatten("", &table, &mut flat);
            for (k, v) in flat {
                if !values.contains_key(&k) {
                    return Err(format!("{}: unknown config key {k}", path.display()));
                }
                values.insert(k, v);
            }
        }
        for (k, v) in overrides {
            if !values.contains_key(k) {
                return Err(format!("unknown config key {k}"));
            }
            values.insert(k.clone(), v.clone());
        }
        Self::from_values(values)
    }

    pub fn from_values(values: BTreeMap<String, Value>) -> Result<Self, String> {
        let g = Getter(&values);
        let seed = match g.v("seed") {
            Value::Integer(x) if *x >= 0 => *x as u64,
            other => return Err(format!("seed: expected a nonnegative integer, found {other}")),
        };
        let bfile = g.str("input.bfile")?;
        let simulate = SimulateConfig {
            n_samples: g.usize("simulate.n_samples")?,
            n_variants: g.usize("simulate.n_variants")?,
            n_causal: g.usize("simulate.n_causal")?,
            causal_or: g.pair("simulate.causal_or")?.ok_or("simulate.causal_or: empty")?,
            causal_maf: g.pair("simulate.causal_maf")?,
            maf: g.pair("simulate.maf")?.ok_or("simulate.maf: empty")?,
            prevalence: g.f64("simulate.prevalence")?,
            ld_blocks: g.usize("simulate.ld_blocks")?,
            ld_block_length: g.usize("simulate.ld_block_length")?,
            ld_flip: g.f64("simulate.ld_flip")?,
            subpop_fractions: g.f64s("simulate.subpop_fractions")?,
            subpop_divergence: g.f64("simulate.subpop_divergence")?,
            duplicates: g.usize("simulate.duplicates")?,
            parent_child: g.usize("simulate.parent_child")?,
            missing_rate: g.f64("simulate.missing_rate")?,
            chromosomes: g.usize("simulate.chromosomes")?.min(255) as u8,
            x_variants: g.usize("simulate.x_variants")?,
        };
        let qc = QcConfig {
            maf_min: g.f64("qc.maf_min")?,
            hwe_p_min: g.f64("qc.hwe_p_min")?,
            variant_missing_max: g.f64("qc.variant_missing_max")?,
            ibd_pi_hat_max: g.f64("qc.ibd_pi_hat_max")?,
            ld_window: g.usize("qc.ld_window")?,
            ld_step: g.usize("qc.ld_step")?,
            ld_r2_max: g.f64("qc.ld_r2_max")?,
            pca_components: g.usize("qc.pca_components")?,
            pca_outlier_sd: g.f64("qc.pca_outlier_sd")?,
            sex_check: g.bool("qc.sex_check")?,
        };
        qc.validate().map_err(|e| e.to_string())?;

        let thresholds = g.f64s("select.thresholds")?;
        if thresholds.is_empty() || thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err("select.thresholds: expected values in (0, 1]".into());
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err("select.thresholds must be strictly ascending".into());
        }

        let split = g.f64s("train.split")?;
        let split: [f64; 3] = split
            .try_into()
            .map_err(|_| "train.split: expected three ratios".to_string())?;
        let activation_name = g.str("train.activation")?;
        let loss_name = g.str("train.loss")?;
        let train = TrainConfig {
            hidden: g
                .list("train.hidden")
                .iter()
                .map(|v| match v {
                    Value::Integer(h) if *h > 0 => Ok(*h as usize),
                    other => Err(format!("train.hidden: expected positive integers, found {other}")),
                })
                .collect::<Result<_, _>>()?,
            activation: Activation::parse(&activation_name)
                .ok_or_else(|| format!("train.activation: unknown activation {activation_name}"))?,
            loss: Loss::parse(&loss_name).ok_or_else(|| format!("train.loss: unknown loss {loss_name}"))?,
            learning_rate: g.f64("train.learning_rate")?,
            rate_annealing: g.f64("train.rate_annealing")?,
            rate_decay: g.f64("train.rate_decay")?,
            l1: g.f64("train.l1")?,
            l2: g.f64("train.l2")?,
            max_w2: g.f64("train.max_w2")?,
            hidden_dropout: g.f64("train.hidden_dropout")?,
            input_dropout: g.f64("train.input_dropout")?,
            minibatch: g.usize("train.minibatch")?,
            max_epochs: g.usize("train.max_epochs")?,
            stopping_rounds: g.usize("train.stopping_rounds")?,
            stopping_tolerance: g.f64("train.stopping_tolerance")?,
            split,
            seed,
            preset: "custom".into(),
        };
        train.validate().map_err(|e| e.to_string())?;

        let preset_names: Vec<String> = g
            .list("train.presets")
            .iter()
            .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
            .collect();
        let choices: Vec<ModelChoice> = preset_names
            .iter()
            .map(|n| {
                if n.eq_ignore_ascii_case("custom") {
                    Ok(ModelChoice::Custom)
                } else {
                    Preset::by_name(n)
                        .map(ModelChoice::Preset)
                        .ok_or_else(|| format!("train.presets: unknown preset {n}"))
                }
            })
            .collect::<Result<_, _>>()?;
        let models = match choices.len() {
            1 => vec![choices[0].clone(); thresholds.len()],
            n if n == thresholds.len() => choices,
            n => {
                return Err(format!(
                    "train.presets: {n} entries for {} thresholds (give one or one per threshold)",
                    thresholds.len()
                ))
            }
        };
        let pos = g.str("evaluate.positive_class")?;
        Ok(PipelineConfig {
            seed,
            threads: g.usize("threads")?,
            out_dir: PathBuf::from(g.str("out_dir")?),
            input_bfile: (!bfile.is_empty()).then(|| PathBuf::from(bfile)),
            simulate,
            qc,
            family_alpha: g.f64("assoc.family_alpha")?,
            thresholds,
            raw_p: g.bool("select.raw_p")?,
            models,
            train,
            positive_class: PositiveClass::parse(&pos)
                .ok_or_else(|| format!("evaluate.positive_class: expected case or control, found {pos}"))?,
            values,
        })
    }

    /// Training configuration for the model at threshold index `k`.
    pub fn train_config(&self, k: usize) -> TrainConfig {
        match &self.models[k] {
            ModelChoice::Preset(p) => TrainConfig {
                hidden: p.hidden.to_vec(),
                activation: p.activation,
                l1: p.l1,
                l2: p.l2,
                preset: p.name.to_string(),
                ..self.train.clone()
            },
            ModelChoice::Custom => self.train.clone(),
        }
    }

    /// Canonical `key = value` listing of the effective configuration.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            if UNHASHED.contains(&k.as_str()) {
                continue;
            }
            let v = if k == "seed" { Value::Integer(self.seed as i64) } else { v.clone() };
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.values.insert("seed".into(), Value::Integer(seed as i64));
    }
}

/// Stable file-name label of a threshold, e.g. `1e-5`.
pub fn threshold_label(t: f64) -> String {
    format!("{t:e}")
}
