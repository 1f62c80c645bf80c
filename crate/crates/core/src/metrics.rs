//! Binary classification metrics over predicted case probabilities.

use std::fmt::Write as _;

use log::warn;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const LOGLOSS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositiveClass {
    #[default]
    Case,
    Control,
}

impl PositiveClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PositiveClass::Case => "case",
            PositiveClass::Control => "control",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "case" => Some(PositiveClass::Case),
            "control" => Some(PositiveClass::Control),
            _ => None,
        }
    }
}

/// Labels as positives and scores as positive-class scores.
fn orient(labels: &[u8], scores: &[f64], positive: PositiveClass) -> (Vec<bool>, Vec<f64>) {
    assert_eq!(labels.len(), scores.len(), "labels and scores differ in length");
    match positive {
        PositiveClass::Case => (labels.iter().map(|&y| y == 1).collect(), scores.to_vec()),
        PositiveClass::Control => (
            labels.iter().map(|&y| y == 0).collect(),
            scores.iter().map(|s| 1.0 - s).collect(),
        ),
    }
}

/// (sensitivity, specificity) predicting positive iff score ≥ threshold.
/// `scores` are case probabilities; with `Control` as the positive class the
/// positive score is `1 - score`.
pub fn confusion_rates(
    labels: &[u8],
    scores: &[f64],
    threshold: f64,
    positive: PositiveClass,
) -> (Option<f64>, Option<f64>) {
    let (pos, s) = orient(labels, scores, positive);
    let (mut tp, mut fn_, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for (&y, &v) in pos.iter().zip(&s) {
        match (y, v >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let rate = |a: u64, b: u64| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    (rate(tp, fn_), rate(tn, fp))
}

/// Mann-Whitney AUC via mid-ranks; `None` unless both classes are present.
pub fn auc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    assert_eq!(labels.len(), scores.len());
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum, in integers, so tied groups stay exact
    let mut rank2_sum_pos: u128 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j, midrank*2 = i + j + 1
        let mid2 = (i + j + 1) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank2_sum_pos += mid2 * pos_in_group;
        i = j;
    }
    let np = n_pos as u128;
    // U*2 = rank2_sum - n_pos(n_pos+1)
    let u2 = rank2_sum_pos - np * (np + 1);
    Some(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn gini(auc: f64) -> f64 {
    2.0 * auc - 1.0
}

pub fn logloss(labels: &[u8], probs: &[f64]) -> f64 {
    assert_eq!(labels.len(), probs.len());
    if labels.is_empty() {
        return f64::NAN;
    }
    let s: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(LOGLOSS_EPS, 1.0 - LOGLOSS_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    s / labels.len() as f64
}

pub fn mse(labels: &[u8], probs: &[f64]) -> f64 {
    assert_eq!(labels.len(), probs.len());
    if labels.is_empty() {
        return f64::NAN;
    }
    labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| (y as f64 - p).powi(2))
        .sum::<f64>()
        / labels.len() as f64
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Threshold maximising the positive-class F1 over the unique scores plus 0
/// and 1 (smallest threshold on ties). Returned on the case-probability scale
/// when `positive` is `Case`, on the control scale otherwise.
pub fn f1_optimal_threshold(labels: &[u8], scores: &[f64], positive: PositiveClass) -> f64 {
    let (pos, s) = orient(labels, scores, positive);
    let mut cand: Vec<f64> = s.clone();
    cand.push(0.0);
    cand.push(1.0);
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    if s.iter().all(|&v| v == s[0]) && !s.is_empty() {
        warn!("all scores equal; F1 threshold is degenerate");
        return s[0];
    }

    // sweep thresholds from high to low, adding scores >= t as predicted positive
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let total_pos = pos.iter().filter(|&&p| p).count() as u64;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &t in cand.iter().rev() {
        while k < order.len() && s[order[k]] >= t {
            if pos[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let v = f1(tp, fp, total_pos - tp);
        // iterating downward, so >= keeps the smallest threshold on ties
        if v >= best.0 {
            best = (v, t);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points for the rule `score >= threshold`, from (0,0) at threshold +∞
/// down through every unique score to (1,1). `None` with a single class.
pub fn roc_export(labels: &[u8], scores: &[f64]) -> Option<Vec<RocPoint>> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Some(pts)
}

pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn roc_tsv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold\tfpr\ttpr\n");
    for p in points {
        let _ = writeln!(s, "{}\t{}\t{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
    pub gini: f64,
    pub logloss: f64,
    pub mse: f64,
    pub threshold: f64,
    pub positive_class: PositiveClass,
}

impl MetricsReport {
    /// Metrics of case probabilities `probs` at the positive-class `threshold`.
    /// Undefined rates are reported as NaN.
    pub fn compute(labels: &[u8], probs: &[f64], threshold: f64, positive: PositiveClass) -> Self {
        let (se, sp) = confusion_rates(labels, probs, threshold, positive);
        let a = auc(labels, probs).unwrap_or(f64::NAN);
        MetricsReport {
            sensitivity: se.unwrap_or(f64::NAN),
            specificity: sp.unwrap_or(f64::NAN),
            auc: a,
            gini: gini(a),
            logloss: logloss(labels, probs),
            mse: mse(labels, probs),
            threshold,
            positive_class: positive,
        }
    }

    pub const TSV_HEADER: &'static str = "Sens\tSpec\tGini\tLogLoss\tAUC\tMSE\tThreshold\tPositive";

    pub fn tsv_fields(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.sensitivity,
            self.specificity,
            self.gini,
            self.logloss,
            self.auc,
            self.mse,
            self.threshold,
            self.positive_class.as_str()
        )
    }

    pub fn to_tsv(&self) -> String {
        format!("{}\n{}\n", Self::TSV_HEADER, self.tsv_fields())
    }

    pub fn to_text(&self) -> String {
        format!(
            "positive class : {}\nthreshold      : {}\nsensitivity    : {}\nspecificity    : {}\nAUC            : {}\nGini           : {}\nlogloss        : {}\nMSE            : {}\n",
            self.positive_class.as_str(),
            self.threshold,
            self.sensitivity,
            self.specificity,
            self.auc,
            self.gini,
            self.logloss,
            self.mse
        )
    }
}
