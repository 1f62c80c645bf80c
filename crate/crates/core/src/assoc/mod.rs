//! Per-variant association scan, genomic control and SNP selection.

pub mod logistic;

use std::cmp::Ordering;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::{GenotypeMatrix, VariantRecord};

pub use logistic::{chi2_1_sf, fit, wald_p, FitStatus, GenotypeTable, LogisticFit};

/// Median of the chi-square distribution with one degree of freedom.
pub const CHI2_1_MEDIAN: f64 = 0.4549;
pub const SUGGESTIVE_P: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct AssocResult {
    pub variant_id: String,
    pub n_used: u64,
    pub beta0: f64,
    pub beta1: f64,
    pub se1: f64,
    pub odds_ratio: f64,
    pub chi2_wald: f64,
    pub p: f64,
    pub p_gc: f64,
    pub status: FitStatus,
}

impl AssocResult {
    fn from_fit(variant_id: String, f: LogisticFit) -> Self {
        let mut r = AssocResult {
            variant_id,
            n_used: f.n_used,
            beta0: f.beta0,
            beta1: f.beta1,
            se1: f.se1,
            odds_ratio: f64::NAN,
            chi2_wald: f64::NAN,
            p: f64::NAN,
            p_gc: f64::NAN,
            status: f.status,
        };
        if f.status == FitStatus::Converged {
            r.odds_ratio = f.beta1.exp();
            let z = f.beta1 / f.se1;
            r.chi2_wald = z * z;
            r.p = wald_p(f.beta1, f.se1).unwrap_or(f64::NAN);
            r.p_gc = r.p;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    pub lambda_gc: f64,
    /// Number of converged tests.
    pub m_tested: usize,
    pub bonferroni_alpha: f64,
}

pub fn bonferroni_threshold(alpha: f64, m: usize) -> f64 {
    assert!(m >= 1, "bonferroni threshold needs at least one test");
    alpha / m as f64
}

/// λ = median(χ²) / 0.4549 and the adjusted p values. Deflation is applied
/// only when λ > 1; NaN statistics pass through unchanged.
pub fn genomic_control(chi2: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let mut finite: Vec<f64> = chi2.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, p.to_vec());
    }
    finite.sort_by(f64::total_cmp);
    let k = finite.len();
    let median = if k % 2 == 1 {
        finite[k / 2]
    } else {
        0.5 * (finite[k / 2 - 1] + finite[k / 2])
    };
    let lambda = median / CHI2_1_MEDIAN;
    let adjusted = if lambda > 1.0 {
        chi2.iter()
            .zip(p)
            .map(|(&c, &pv)| if c.is_finite() { chi2_1_sf(c / lambda) } else { pv })
            .collect()
    } else {
        p.to_vec()
    };
    (lambda, adjusted)
}

/// Fit every variant in order. Results are independent of the worker count.
pub fn scan(matrix: &GenotypeMatrix, family_alpha: f64) -> Result<(Vec<AssocResult>, ScanSummary)> {
    let pheno = matrix.phenotypes();
    let n = matrix.n_samples();
    let mut results: Vec<AssocResult> = (0..matrix.n_variants())
        .into_par_iter()
        .map_init(
            || vec![0u8; n],
            |codes, j| {
                matrix.decode_variant_into(j, codes);
                let t = GenotypeTable::tally(&pheno, codes);
                AssocResult::from_fit(matrix.variants()[j].variant_id.clone(), fit(&t))
            },
        )
        .collect();

    let m_tested = results.iter().filter(|r| r.status == FitStatus::Converged).count();
    if m_tested == 0 {
        return Err(Error::Degenerate("association scan: no converged tests".into()));
    }
    let chi2: Vec<f64> = results.iter().map(|r| r.chi2_wald).collect();
    let p: Vec<f64> = results.iter().map(|r| r.p).collect();
    let (lambda_gc, p_gc) = genomic_control(&chi2, &p);
    for (r, v) in results.iter_mut().zip(p_gc) {
        r.p_gc = v;
    }
    Ok((
        results,
        ScanSummary {
            lambda_gc,
            m_tested,
            bonferroni_alpha: bonferroni_threshold(family_alpha, m_tested),
        },
    ))
}

/// Converged variants with p (GC-adjusted unless `raw`) below `threshold`,
/// ascending by p with ties broken by id.
pub fn select_snps(results: &[AssocResult], threshold: f64, raw: bool) -> Vec<String> {
    let pick = |r: &AssocResult| if raw { r.p } else { r.p_gc };
    let mut hits: Vec<&AssocResult> = results
        .iter()
        .filter(|r| r.status == FitStatus::Converged && pick(r) < threshold)
        .collect();
    hits.sort_by(|a, b| {
        pick(a)
            .partial_cmp(&pick(b))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.variant_id.cmp(&b.variant_id))
    });
    if hits.is_empty() {
        warn!("no variant passes p < {threshold}");
    }
    hits.into_iter().map(|r| r.variant_id.clone()).collect()
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "NA".into()
    }
}

/// Association table: CHR SNP BP A1 NMISS OR STAT P P_GC STATUS.
pub fn assoc_tsv(results: &[AssocResult], variants: &[VariantRecord]) -> String {
    let mut s = String::from("CHR\tSNP\tBP\tA1\tNMISS\tOR\tSTAT\tP\tP_GC\tSTATUS\n");
    for (r, v) in results.iter().zip(variants) {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            v.chromosome,
            r.variant_id,
            v.position,
            v.allele_a1,
            r.n_used,
            fmt_num(r.odds_ratio),
            fmt_num(r.chi2_wald),
            fmt_num(r.p),
            fmt_num(r.p_gc),
            r.status.as_str()
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManhattanRow {
    pub chromosome: u8,
    pub position: u64,
    pub x: u64,
    pub variant_id: String,
    pub neg_log10_p: f64,
}

/// Plot coordinates: each chromosome starts one past the previous
/// chromosome's offset plus its largest position. Rows without a finite
/// adjusted p are skipped.
pub fn manhattan_rows(results: &[AssocResult], variants: &[VariantRecord]) -> Vec<ManhattanRow> {
    let mut rows = Vec::new();
    let mut offset = 0u64;
    let mut cur: Option<(u8, u64)> = None; // (chromosome, max position)
    for (r, v) in results.iter().zip(variants) {
        match cur {
            Some((c, maxpos)) if c != v.chromosome => {
                offset += maxpos + 1;
                cur = Some((v.chromosome, v.position));
            }
            Some((c, maxpos)) => cur = Some((c, maxpos.max(v.position))),
            None => cur = Some((v.chromosome, v.position)),
        }
        if r.p_gc.is_finite() {
            rows.push(ManhattanRow {
                chromosome: v.chromosome,
                position: v.position,
                x: offset + v.position,
                variant_id: r.variant_id.clone(),
                neg_log10_p: -r.p_gc.log10(),
            });
        }
    }
    rows
}

pub fn manhattan_export(results: &[AssocResult], variants: &[VariantRecord], bonferroni: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# bonferroni_line\t{}", -bonferroni.log10());
    let _ = writeln!(s, "# suggestive_line\t{:.1}", -SUGGESTIVE_P.log10());
    s.push_str("CHR\tBP\tX\tSNP\tNEG_LOG10_P\n");
    for r in manhattan_rows(results, variants) {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.chromosome, r.position, r.x, r.variant_id, r.neg_log10_p
        );
    }
    s
}
