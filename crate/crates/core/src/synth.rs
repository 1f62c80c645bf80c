//! Synthetic case/control cohorts with planted additive log-odds effects.
//!
//! Every variant draws from its own ChaCha stream (`set_stream(j)`), so the
//! cohort is identical for any worker count. Allele frequencies follow the
//! Balding-Nichols model across subpopulations, LD blocks copy an anchor
//! variant allele by allele with a flip probability, and phenotypes are
//! Bernoulli draws from `sigmoid(b0 + sum log(OR_j) (g_j - mean g_j))`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::{GenotypeCode, GenotypeMatrix, Phenotype, SampleRecord, Sex, VariantRecord, CHROM_X};

const STREAM_LD: u64 = 1 << 40;
const STREAM_MISSING: u64 = 2 << 40;
const STREAM_SAMPLES: u64 = 3 << 40;
const STREAM_PHENO: u64 = 4 << 40;
const STREAM_ANOMALY: u64 = 5 << 40;
const STREAM_TUNE: u64 = 6 << 40;

pub const TUNE_DRAWS: usize = 100_000;
const TUNE_BRACKET: (f64, f64) = (-20.0, 20.0);

#[derive(Debug, Clone, PartialEq)]
pub struct LdBlock {
    pub start: usize,
    /// Number of variants in the block including the anchor at `start`.
    pub length: usize,
    pub flip_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subpopulation {
    pub fraction: f64,
    /// Balding-Nichols F: per-subpopulation frequencies are
    /// Beta(p(1-F)/F, (1-p)(1-F)/F) around the ancestral p.
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_variants: usize,
    pub seed: u64,
    pub maf_range: [f64; 2],
    /// Frequency range used for causal variants instead of `maf_range`.
    pub causal_maf_range: Option<[f64; 2]>,
    /// (variant index, odds ratio per copy of the effect allele).
    pub causal: Vec<(usize, f64)>,
    pub target_prevalence: f64,
    pub ld_blocks: Vec<LdBlock>,
    pub subpopulations: Vec<Subpopulation>,
    pub duplicates: usize,
    pub parent_child_pairs: usize,
    pub missing_rate: f64,
    pub n_chromosomes: u8,
    /// Trailing variants placed on chromosome X (hemizygous in males).
    pub x_variants: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_samples: 1000,
            n_variants: 1000,
            seed: 1,
            maf_range: [0.05, 0.5],
            causal_maf_range: None,
            causal: Vec::new(),
            target_prevalence: 0.5,
            ld_blocks: Vec::new(),
            subpopulations: Vec::new(),
            duplicates: 0,
            parent_child_pairs: 0,
            missing_rate: 0.0,
            n_chromosomes: 22,
            x_variants: 0,
        }
    }
}

fn prob(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("simulate: {m}")));
        if self.n_samples == 0 || self.n_variants == 0 {
            return bad("n_samples and n_variants must be positive".into());
        }
        for r in std::iter::once(&self.maf_range).chain(self.causal_maf_range.as_ref()) {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1] <= 0.5) {
                return bad(format!("frequency range [{}, {}] must lie in (0, 0.5]", r[0], r[1]));
            }
        }
        for &(j, or) in &self.causal {
            if j >= self.n_variants || !(or > 0.0) || !or.is_finite() {
                return bad(format!("causal entry ({j}, {or}) out of range"));
            }
        }
        if !(self.target_prevalence > 0.0 && self.target_prevalence < 1.0) {
            return bad("target_prevalence must lie in (0, 1)".into());
        }
        for b in &self.ld_blocks {
            if b.length == 0 || b.start + b.length > self.n_variants || !prob(b.flip_prob) {
                return bad(format!("LD block at {} is out of range", b.start));
            }
        }
        let mut sorted: Vec<&LdBlock> = self.ld_blocks.iter().collect();
        sorted.sort_by_key(|b| b.start);
        if sorted.windows(2).any(|w| w[0].start + w[0].length > w[1].start) {
            return bad("LD blocks overlap".into());
        }
        if !self.subpopulations.is_empty() {
            let total: f64 = self.subpopulations.iter().map(|s| s.fraction).sum();
            if (total - 1.0).abs() > 1e-9
                || self
                    .subpopulations
                    .iter()
                    .any(|s| !prob(s.fraction) || !(s.divergence >= 0.0 && s.divergence < 1.0))
            {
                return bad("subpopulation fractions must sum to 1 with divergence in [0, 1)".into());
            }
        }
        if self.duplicates > self.n_samples {
            return bad(format!("{} duplicates requested from {} samples", self.duplicates, self.n_samples));
        }
        if self.parent_child_pairs > self.n_samples {
            return bad("more parent-child pairs than samples".into());
        }
        if !prob(self.missing_rate) {
            return bad("missing_rate must lie in [0, 1]".into());
        }
        if self.x_variants > self.n_variants || self.n_chromosomes == 0 || self.n_chromosomes >= CHROM_X {
            return bad("chromosome layout out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalTruth {
    pub variant_id: String,
    /// Allele whose count carries the planted effect.
    pub effect_allele: String,
    pub log_or: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Anomaly {
    Duplicate { id: String, source: String },
    ParentChild { child: String, parent: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub beta0: f64,
    pub causal: Vec<CausalTruth>,
    pub anomalies: Vec<Anomaly>,
    /// Subpopulation index per sample row (anomaly rows inherit their source's).
    pub subpopulation: Vec<usize>,
}

impl Truth {
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# beta0\t{}", self.beta0);
        s.push_str("kind\tid\tdetail\tvalue\n");
        for c in &self.causal {
            let _ = writeln!(s, "causal\t{}\t{}\t{}", c.variant_id, c.effect_allele, c.log_or);
        }
        for a in &self.anomalies {
            match a {
                Anomaly::Duplicate { id, source } => {
                    let _ = writeln!(s, "duplicate\t{id}\t{source}\tNA");
                }
                Anomaly::ParentChild { child, parent } => {
                    let _ = writeln!(s, "parent_child\t{child}\t{parent}\tNA");
                }
            }
        }
        s
    }
}

fn variant_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bisection on `b0` over [-20, 20] so that the Monte-Carlo prevalence
/// `mean sigmoid(b0 + risk)` over 100,000 resampled risk scores hits
/// `target` within 1e-3. `risk` holds the centred `sum log(OR_j) g_j` per
/// sample.
pub fn tune_intercept(risk: &[f64], target: f64, seed: u64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidInput(format!("target prevalence {target} outside (0, 1)")));
    }
    if risk.is_empty() {
        return Err(Error::InvalidInput("no genotype sample for intercept tuning".into()));
    }
    let mut rng = variant_rng(seed, STREAM_TUNE);
    let draws: Vec<f64> = (0..TUNE_DRAWS).map(|_| risk[rng.random_range(0..risk.len())]).collect();
    let prevalence = |b0: f64| draws.iter().map(|&r| sigmoid(b0 + r)).sum::<f64>() / draws.len() as f64;
    let (mut lo, mut hi) = TUNE_BRACKET;
    let (p_lo, p_hi) = (prevalence(lo), prevalence(hi));
    if !(p_lo <= target && target <= p_hi) {
        return Err(Error::InvalidInput(format!(
            "target prevalence {target} outside achievable range [{p_lo:.3e}, {p_hi:.6}]"
        )));
    }
    // run to full precision; the 1e-3 prevalence tolerance is met long before
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if prevalence(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b0 = 0.5 * (lo + hi);
    debug_assert!((prevalence(b0) - target).abs() < 1e-3);
    Ok(b0)
}

fn binomial2(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    (rng.random::<f64>() < p) as u8 + (rng.random::<f64>() < p) as u8
}

struct Layout {
    subpop: Vec<usize>,
    sex: Vec<Sex>,
}

fn sample_layout(spec: &SyntheticSpec) -> Layout {
    let n = spec.n_samples;
    let mut subpop = vec![0usize; n];
    if spec.subpopulations.len() > 1 {
        let mut cum = 0.0;
        let mut start = 0;
        for (k, s) in spec.subpopulations.iter().enumerate() {
            cum += s.fraction;
            let end = if k + 1 == spec.subpopulations.len() {
                n
            } else {
                ((cum * n as f64).round() as usize).min(n)
            };
            subpop[start..end].iter_mut().for_each(|v| *v = k);
            start = end;
        }
    }
    let mut rng = variant_rng(spec.seed, STREAM_SAMPLES);
    let sex = (0..n)
        .map(|_| if rng.random::<bool>() { Sex::Male } else { Sex::Female })
        .collect();
    Layout { subpop, sex }
}

fn variant_records(spec: &SyntheticSpec) -> Vec<VariantRecord> {
    let n_auto = spec.n_variants - spec.x_variants;
    let per_chrom = n_auto.div_ceil(spec.n_chromosomes as usize).max(1);
    (0..spec.n_variants)
        .map(|j| {
            let (chrom, k) = if j < n_auto {
                ((j / per_chrom) as u8 + 1, j % per_chrom)
            } else {
                (CHROM_X, j - n_auto)
            };
            VariantRecord::new(format!("rs{}", j + 1), chrom, 10_000 * (k as u64 + 1))
        })
        .collect()
}

/// Ancestral and per-subpopulation effect-allele frequencies plus dosages
/// for one variant.
fn draw_variant(spec: &SyntheticSpec, layout: &Layout, j: usize, causal_j: bool, x: bool) -> (Vec<f64>, Vec<u8>) {
    let mut rng = variant_rng(spec.seed, j as u64);
    let range = match (causal_j, spec.causal_maf_range) {
        (true, Some(r)) => r,
        _ => spec.maf_range,
    };
    let p = if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    };
    let freqs: Vec<f64> = if spec.subpopulations.len() > 1 {
        spec.subpopulations
            .iter()
            .map(|s| {
                if s.divergence == 0.0 {
                    return p;
                }
                let c = (1.0 - s.divergence) / s.divergence;
                Beta::new(p * c, (1.0 - p) * c).map_or(p, |b| b.sample(&mut rng))
            })
            .collect()
    } else {
        vec![p]
    };
    let g = (0..spec.n_samples)
        .map(|i| {
            let q = freqs[layout.subpop[i]];
            if x && layout.sex[i] == Sex::Male {
                2 * (rng.random::<f64>() < q) as u8
            } else {
                binomial2(&mut rng, q)
            }
        })
        .collect();
    (freqs, g)
}

fn copy_with_flip(anchor: &[u8], flip: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    anchor
        .iter()
        .map(|&g| {
            let mut a = [(g >= 1) as u8, (g == 2) as u8];
            for allele in &mut a {
                if rng.random::<f64>() < flip {
                    *allele ^= 1;
                }
            }
            a[0] + a[1]
        })
        .collect()
}

/// Generate a cohort; returns the (minor-allele oriented) matrix and the
/// truth record.
pub fn generate(spec: &SyntheticSpec) -> Result<(GenotypeMatrix, Truth)> {
    spec.validate()?;
    let layout = sample_layout(spec);
    let mut is_causal = vec![false; spec.n_variants];
    for &(j, _) in &spec.causal {
        is_causal[j] = true;
    }
    let n_auto = spec.n_variants - spec.x_variants;
    let drawn: Vec<(Vec<f64>, Vec<u8>)> = (0..spec.n_variants)
        .into_par_iter()
        .map(|j| draw_variant(spec, &layout, j, is_causal[j], j >= n_auto))
        .collect();
    let (freqs, mut dosages): (Vec<Vec<f64>>, Vec<Vec<u8>>) = drawn.into_iter().unzip();

    for block in &spec.ld_blocks {
        let anchor = dosages[block.start].clone();
        let members: Vec<(usize, Vec<u8>)> = (block.start + 1..block.start + block.length)
            .into_par_iter()
            .map(|j| {
                let mut rng = variant_rng(spec.seed, STREAM_LD + j as u64);
                (j, copy_with_flip(&anchor, block.flip_prob, &mut rng))
            })
            .collect();
        for (j, col) in members {
            dosages[j] = col;
        }
    }

    // dosages are centred on their cohort mean so that b0 stays inside the
    // bisection bracket when many effects point the same way
    let centre: Vec<f64> = spec
        .causal
        .iter()
        .map(|&(j, _)| dosages[j].iter().map(|&g| g as f64).sum::<f64>() / spec.n_samples as f64)
        .collect();
    let risk_of = |dos: &dyn Fn(usize) -> u8| -> f64 {
        spec.causal
            .iter()
            .zip(&centre)
            .map(|(&(j, or), &c)| or.ln() * (dos(j) as f64 - c))
            .sum()
    };
    let risk: Vec<f64> = (0..spec.n_samples).map(|i| risk_of(&|j| dosages[j][i])).collect();
    let beta0 = tune_intercept(&risk, spec.target_prevalence, spec.seed)?;

    let mut pheno_rng = variant_rng(spec.seed, STREAM_PHENO);
    let mut draw_pheno = |r: f64| {
        if pheno_rng.random::<f64>() < sigmoid(beta0 + r) {
            Phenotype::Case
        } else {
            Phenotype::Control
        }
    };
    let mut samples: Vec<SampleRecord> = (0..spec.n_samples)
        .map(|i| SampleRecord::new(format!("S{:05}", i + 1), layout.sex[i], draw_pheno(risk[i])))
        .collect();
    let mut subpop = layout.subpop.clone();

    // anomalies: duplicates then parent-child rows, appended after the base cohort
    let mut anomalies = Vec::new();
    let mut arng = variant_rng(spec.seed, STREAM_ANOMALY);
    let dup_sources = rand::seq::index::sample(&mut arng, spec.n_samples, spec.duplicates).into_vec();
    for (k, &src) in dup_sources.iter().enumerate() {
        let mut rec = samples[src].clone();
        rec.sample_id = format!("{}_dup{}", samples[src].sample_id, k + 1);
        rec.family_id = samples[src].family_id.clone();
        anomalies.push(Anomaly::Duplicate {
            id: rec.sample_id.clone(),
            source: samples[src].sample_id.clone(),
        });
        for col in dosages.iter_mut() {
            col.push(col[src]);
        }
        samples.push(rec);
        subpop.push(subpop[src]);
    }
    let parents = rand::seq::index::sample(&mut arng, spec.n_samples, spec.parent_child_pairs).into_vec();
    for (k, &par) in parents.iter().enumerate() {
        let sex = if arng.random::<bool>() { Sex::Male } else { Sex::Female };
        let pop = subpop[par];
        let mut child = Vec::with_capacity(spec.n_variants);
        for (j, col) in dosages.iter().enumerate() {
            let g = col[par];
            let from_parent = match g {
                0 => 0,
                2 => 1,
                _ => arng.random::<bool>() as u8,
            };
            let q = freqs[j][pop.min(freqs[j].len() - 1)];
            let other = (arng.random::<f64>() < q) as u8;
            let x = j >= n_auto;
            child.push(if x && sex == Sex::Male {
                2 * from_parent
            } else {
                from_parent + other
            });
        }
        let r = risk_of(&|j| child[j]);
        let mut rec = SampleRecord::new(format!("{}_child{}", samples[par].sample_id, k + 1), sex, draw_pheno(r));
        rec.family_id = samples[par].family_id.clone();
        anomalies.push(Anomaly::ParentChild {
            child: rec.sample_id.clone(),
            parent: samples[par].sample_id.clone(),
        });
        for (col, g) in dosages.iter_mut().zip(child) {
            col.push(g);
        }
        samples.push(rec);
        subpop.push(pop);
    }

    let n_total = samples.len();
    let columns: Vec<Vec<GenotypeCode>> = dosages
        .par_iter()
        .enumerate()
        .map(|(j, col)| {
            let mut rng = variant_rng(spec.seed, STREAM_MISSING + j as u64);
            col.iter()
                .map(|&g| {
                    if spec.missing_rate > 0.0 && rng.random::<f64>() < spec.missing_rate {
                        GenotypeCode::Missing
                    } else {
                        GenotypeCode::from_dosage(g)
                    }
                })
                .collect()
        })
        .collect();
    debug_assert!(columns.iter().all(|c| c.len() == n_total));

    let variants = variant_records(spec);
    let matrix = GenotypeMatrix::from_columns(samples, variants, &columns)?.orient_minor();
    let causal = spec
        .causal
        .iter()
        .map(|&(j, or)| {
            let v = &matrix.variants()[j];
            // the effect allele is the generated A1; orientation may have swapped it to A2
            let effect_allele = if matrix.a1_swapped()[j] { &v.allele_a2 } else { &v.allele_a1 };
            CausalTruth {
                variant_id: v.variant_id.clone(),
                effect_allele: effect_allele.clone(),
                log_or: or.ln(),
            }
        })
        .collect();
    Ok((
        matrix,
        Truth {
            beta0,
            causal,
            anomalies,
            subpopulation: subpop,
        },
    ))
}

/// Pick `n_causal` distinct variant indices and log-uniform odds ratios in
/// `or_range`, deterministically from `seed`.
pub fn random_causal(n_variants: usize, n_causal: usize, or_range: [f64; 2], seed: u64) -> Vec<(usize, f64)> {
    let mut rng = variant_rng(seed, STREAM_ANOMALY + 1);
    let mut idx = rand::seq::index::sample(&mut rng, n_variants, n_causal.min(n_variants)).into_vec();
    idx.sort_unstable();
    idx.into_iter()
        .map(|j| {
            let or = if or_range[0] == or_range[1] {
                or_range[0]
            } else {
                (rng.random_range(or_range[0].ln()..or_range[1].ln())).exp()
            };
            (j, or)
        })
        .collect()
}
