//! Sample- and variant-level quality control.

pub mod hwe;
pub mod ibd;
pub mod ld;
pub mod pca;
pub mod sex;

use std::fmt::Write as _;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::{allele_stats, GenotypeMatrix, Phenotype, Sex, CHROM_X};

pub use hwe::hwe_exact_test;
pub use ibd::{ibd_removals, ibd_scan, IbdPair};
pub use ld::{ld_prune, pairwise_r2};
pub use pca::{pca_stratification, PcaResult};
pub use sex::{sex_check, x_inbreeding, SexCall};

#[derive(Debug, Clone, PartialEq)]
pub struct QcConfig {
    pub maf_min: f64,
    pub hwe_p_min: f64,
    pub variant_missing_max: f64,
    pub ibd_pi_hat_max: f64,
    pub ld_window: usize,
    pub ld_step: usize,
    pub ld_r2_max: f64,
    pub pca_components: usize,
    pub pca_outlier_sd: f64,
    pub sex_check: bool,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            maf_min: 0.05,
            hwe_p_min: 1e-4,
            variant_missing_max: 1e-5,
            ibd_pi_hat_max: 0.185,
            ld_window: 50,
            ld_step: 5,
            ld_r2_max: 0.2,
            pca_components: 10,
            pca_outlier_sd: 6.0,
            sex_check: true,
        }
    }
}

impl QcConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let bad = |what: &str| Err(Error::InvalidInput(format!("qc: {what}")));
        if !(0.0..=0.5).contains(&self.maf_min) {
            return bad("maf_min must lie in [0, 0.5]");
        }
        if !unit(self.hwe_p_min) || !unit(self.variant_missing_max) || !unit(self.ibd_pi_hat_max) {
            return bad("hwe_p_min, variant_missing_max and ibd_pi_hat_max must lie in [0, 1]");
        }
        if !unit(self.ld_r2_max) {
            return bad("ld_r2_max must lie in [0, 1]");
        }
        if self.ld_window < 2 || self.ld_step == 0 || self.ld_step > self.ld_window {
            return bad("need ld_window >= 2 and 1 <= ld_step <= ld_window");
        }
        if !(self.pca_outlier_sd > 0.0) {
            return bad("pca_outlier_sd must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleReason {
    PhenotypeMissing,
    SexDiscordant,
    Relatedness,
    PcaOutlier,
}

impl SampleReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleReason::PhenotypeMissing => "phenotype_missing",
            SampleReason::SexDiscordant => "sex_discordant",
            SampleReason::Relatedness => "ibd",
            SampleReason::PcaOutlier => "pca_outlier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantReason {
    Maf,
    Hwe,
    Missingness,
}

impl VariantReason {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantReason::Maf => "maf",
            VariantReason::Hwe => "hwe",
            VariantReason::Missingness => "missingness",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRemoval {
    pub sample_id: String,
    pub reason: SampleReason,
    /// F for sex checks, PI_HAT for relatedness, NaN otherwise.
    pub statistic: f64,
    /// Partner id for relatedness removals.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRemoval {
    pub variant_id: String,
    pub reason: VariantReason,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCount {
    pub stage: &'static str,
    pub samples: usize,
    pub variants: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QcReport {
    pub removed_samples: Vec<SampleRemoval>,
    pub removed_variants: Vec<VariantRemoval>,
    pub pca_eigenvalues: Vec<f64>,
    pub stage_counts: Vec<StageCount>,
    /// Variants kept by the final LD prune (for relatedness/PCA reuse only).
    pub ld_pruned: Vec<String>,
}

impl QcReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("stage\tid\treason\tstatistic\tdetail\n");
        for r in &self.removed_samples {
            let _ = writeln!(
                s,
                "sample\t{}\t{}\t{}\t{}",
                r.sample_id,
                r.reason.as_str(),
                r.statistic,
                r.detail.as_deref().unwrap_or(".")
            );
        }
        for r in &self.removed_variants {
            let _ = writeln!(s, "variant\t{}\t{}\t{}\t.", r.variant_id, r.reason.as_str(), r.statistic);
        }
        s.push_str("# summary\n");
        for c in &self.stage_counts {
            let _ = writeln!(s, "# {}\tsamples={}\tvariants={}", c.stage, c.samples, c.variants);
        }
        let ev: Vec<String> = self.pca_eigenvalues.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "# pca_eigenvalues\t{}", ev.join(","));
        let _ = writeln!(s, "# ld_pruned_kept\t{}", self.ld_pruned.len());
        s
    }
}

/// Outcome of the variant-level filters.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantFilter {
    pub kept: Vec<usize>,
    pub removed: Vec<(usize, VariantReason, f64)>,
}

/// MAF, then HWE in controls, then missingness; the first failing rule is
/// recorded. On chromosome X the HWE counts use female controls only.
pub fn filter_variants(matrix: &GenotypeMatrix, config: &QcConfig) -> VariantFilter {
    let controls: Vec<bool> = matrix
        .samples()
        .iter()
        .map(|s| s.phenotype == Phenotype::Control)
        .collect();
    let female_controls: Vec<bool> = matrix
        .samples()
        .iter()
        .map(|s| s.phenotype == Phenotype::Control && s.sex == Sex::Female)
        .collect();
    let hwe_on = controls.iter().any(|&c| c);
    if !hwe_on {
        warn!("no control samples: HWE filter skipped");
    }

    let verdicts: Vec<Option<(VariantReason, f64)>> = (0..matrix.n_variants())
        .into_par_iter()
        .map(|j| {
            let all = allele_stats(matrix, j, None);
            let maf = all.maf.unwrap_or(f64::NAN);
            if !(maf >= config.maf_min) {
                return Some((VariantReason::Maf, maf));
            }
            if hwe_on {
                let mask = if matrix.variants()[j].chromosome == CHROM_X {
                    &female_controls
                } else {
                    &controls
                };
                let c = allele_stats(matrix, j, Some(mask));
                if c.n_called() > 0 {
                    let p = hwe_exact_test(c.n_hom_major as u64, c.n_het as u64, c.n_hom_minor as u64);
                    if p < config.hwe_p_min {
                        return Some((VariantReason::Hwe, p));
                    }
                }
            }
            let missing = 1.0 - all.call_rate;
            if missing > config.variant_missing_max {
                return Some((VariantReason::Missingness, missing));
            }
            None
        })
        .collect();

    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (j, v) in verdicts.into_iter().enumerate() {
        match v {
            None => kept.push(j),
            Some((r, stat)) => removed.push((j, r, stat)),
        }
    }
    VariantFilter { kept, removed }
}

/// Autosomal variants passing the MAF threshold, LD-pruned: the basis for
/// relatedness and PCA.
fn provisional_variants(matrix: &GenotypeMatrix, config: &QcConfig) -> Vec<usize> {
    let cand: Vec<usize> = (0..matrix.n_variants())
        .into_par_iter()
        .filter(|&j| {
            matrix.variants()[j].chromosome < CHROM_X
                && allele_stats(matrix, j, None).maf.is_some_and(|m| m >= config.maf_min)
        })
        .collect();
    let sub = matrix.subset_indices(&(0..matrix.n_samples()).collect::<Vec<_>>(), &cand);
    ld_prune(&sub, config.ld_window, config.ld_step, config.ld_r2_max)
        .into_iter()
        .map(|k| cand[k])
        .collect()
}

fn sample_call_rates(matrix: &GenotypeMatrix) -> Vec<f64> {
    let n = matrix.n_samples();
    let m = matrix.n_variants();
    let mut called = vec![0usize; n];
    let mut codes = vec![0u8; n];
    for j in 0..m {
        matrix.decode_variant_into(j, &mut codes);
        for (i, &c) in codes.iter().enumerate() {
            called[i] += (c < 3) as usize;
        }
    }
    called
        .iter()
        .map(|&c| if m == 0 { 1.0 } else { c as f64 / m as f64 })
        .collect()
}

fn drop_samples(matrix: &GenotypeMatrix, drop: &[usize]) -> GenotypeMatrix {
    let mut gone = vec![false; matrix.n_samples()];
    for &i in drop {
        gone[i] = true;
    }
    let keep: Vec<usize> = (0..matrix.n_samples()).filter(|&i| !gone[i]).collect();
    let all: Vec<usize> = (0..matrix.n_variants()).collect();
    matrix.subset_indices(&keep, &all)
}

fn ensure_samples(matrix: &GenotypeMatrix, stage: &str) -> Result<()> {
    if matrix.n_samples() == 0 {
        return Err(Error::Degenerate(format!("quality control removed every sample (at {stage})")));
    }
    Ok(())
}

/// Full QC: phenotype-missing exclusion, sex check, relatedness, PCA outliers,
/// variant filters, then a final LD prune that is reported but not applied.
pub fn run_qc(matrix: &GenotypeMatrix, config: &QcConfig) -> Result<(GenotypeMatrix, QcReport)> {
    config.validate()?;
    let mut report = QcReport::default();
    let count = |stage, m: &GenotypeMatrix| StageCount {
        stage,
        samples: m.n_samples(),
        variants: m.n_variants(),
    };
    report.stage_counts.push(count("input", matrix));

    let no_pheno: Vec<usize> = (0..matrix.n_samples())
        .filter(|&i| matrix.samples()[i].phenotype == Phenotype::Missing)
        .collect();
    if !no_pheno.is_empty() {
        info!("excluding {} samples with missing phenotype", no_pheno.len());
    }
    for &i in &no_pheno {
        report.removed_samples.push(SampleRemoval {
            sample_id: matrix.samples()[i].sample_id.clone(),
            reason: SampleReason::PhenotypeMissing,
            statistic: f64::NAN,
            detail: None,
        });
    }
    let mut cur = drop_samples(matrix, &no_pheno);
    report.stage_counts.push(count("phenotype", &cur));
    ensure_samples(&cur, "phenotype")?;

    if config.sex_check {
        let flagged = sex_check(&cur);
        for c in &flagged {
            report.removed_samples.push(SampleRemoval {
                sample_id: cur.samples()[c.sample].sample_id.clone(),
                reason: SampleReason::SexDiscordant,
                statistic: c.f,
                detail: None,
            });
        }
        let idx: Vec<usize> = flagged.iter().map(|c| c.sample).collect();
        cur = drop_samples(&cur, &idx);
    }
    report.stage_counts.push(count("sex_check", &cur));
    ensure_samples(&cur, "sex_check")?;

    let prov = provisional_variants(&cur, config);
    if cur.n_samples() >= 2 && !prov.is_empty() {
        let all: Vec<usize> = (0..cur.n_samples()).collect();
        let sub = cur.subset_indices(&all, &prov);
        let pairs = ibd_scan(&sub, config.ibd_pi_hat_max);
        let rates = sample_call_rates(&cur);
        let removals = ibd_removals(&sub, &pairs, config.ibd_pi_hat_max, &rates);
        for &(r, k, pi) in &removals {
            report.removed_samples.push(SampleRemoval {
                sample_id: cur.samples()[r].sample_id.clone(),
                reason: SampleReason::Relatedness,
                statistic: pi,
                detail: Some(cur.samples()[k].sample_id.clone()),
            });
        }
        let idx: Vec<usize> = removals.iter().map(|r| r.0).collect();
        cur = drop_samples(&cur, &idx);
    }
    report.stage_counts.push(count("ibd", &cur));
    ensure_samples(&cur, "ibd")?;

    if config.pca_components > 0 && cur.n_samples() > config.pca_components && !prov.is_empty() {
        let all: Vec<usize> = (0..cur.n_samples()).collect();
        let pca = pca_stratification(&cur.subset_indices(&all, &prov), config.pca_components, config.pca_outlier_sd);
        report.pca_eigenvalues = pca.eigenvalues.clone();
        for &i in &pca.outliers {
            report.removed_samples.push(SampleRemoval {
                sample_id: cur.samples()[i].sample_id.clone(),
                reason: SampleReason::PcaOutlier,
                statistic: f64::NAN,
                detail: None,
            });
        }
        cur = drop_samples(&cur, &pca.outliers);
    } else if config.pca_components > 0 {
        warn!("PCA skipped: need more samples than components and at least one usable variant");
    }
    report.stage_counts.push(count("pca", &cur));
    ensure_samples(&cur, "pca")?;

    let vf = filter_variants(&cur, config);
    for &(j, r, stat) in &vf.removed {
        report.removed_variants.push(VariantRemoval {
            variant_id: cur.variants()[j].variant_id.clone(),
            reason: r,
            statistic: stat,
        });
    }
    let all: Vec<usize> = (0..cur.n_samples()).collect();
    cur = cur.subset_indices(&all, &vf.kept);
    report.stage_counts.push(count("variant_filter", &cur));

    if cur.n_variants() > 0 {
        report.ld_pruned = ld_prune(&cur, config.ld_window, config.ld_step, config.ld_r2_max)
            .into_iter()
            .map(|j| cur.variants()[j].variant_id.clone())
            .collect();
    }
    Ok((cur, report))
}
