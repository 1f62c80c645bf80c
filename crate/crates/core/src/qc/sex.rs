//! Declared versus genotype-inferred sex from X heterozygosity.

use log::warn;

use crate::genotype::{allele_stats, GenotypeMatrix, Sex, CHROM_X};

pub const MALE_F_MIN: f64 = 0.8;
pub const FEMALE_F_MAX: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SexCall {
    pub sample: usize,
    /// `1 - observed / expected` heterozygosity over called X variants.
    pub f: f64,
    pub inferred: Sex,
}

/// Inbreeding estimate F per sample over polymorphic chromosome-X variants.
/// Empty when the cohort has no usable X variants.
pub fn x_inbreeding(matrix: &GenotypeMatrix) -> Vec<SexCall> {
    let n = matrix.n_samples();
    let x: Vec<(usize, f64)> = (0..matrix.n_variants())
        .filter(|&j| matrix.variants()[j].chromosome == CHROM_X)
        .filter_map(|j| {
            let p = allele_stats(matrix, j, None).a1_freq()?;
            (p > 0.0 && p < 1.0).then_some((j, 2.0 * p * (1.0 - p)))
        })
        .collect();
    if x.is_empty() {
        return Vec::new();
    }
    let mut obs = vec![0u32; n];
    let mut exp = vec![0.0f64; n];
    let mut codes = vec![0u8; n];
    for &(j, h) in &x {
        matrix.decode_variant_into(j, &mut codes);
        for (i, &c) in codes.iter().enumerate() {
            if c < 3 {
                exp[i] += h;
                obs[i] += (c == 1) as u32;
            }
        }
    }
    (0..n)
        .filter(|&i| exp[i] > 0.0)
        .map(|i| {
            let f = 1.0 - obs[i] as f64 / exp[i];
            let inferred = if f > MALE_F_MIN {
                Sex::Male
            } else if f < FEMALE_F_MAX {
                Sex::Female
            } else {
                Sex::Unknown
            };
            SexCall { sample: i, f, inferred }
        })
        .collect()
}

/// Samples whose inferred sex contradicts the declared one. Samples without
/// declared sex, or with undetermined F, are never flagged.
pub fn sex_check(matrix: &GenotypeMatrix) -> Vec<SexCall> {
    let calls = x_inbreeding(matrix);
    if calls.is_empty() {
        warn!("sex check skipped: no polymorphic chromosome-X variants");
    }
    calls
        .into_iter()
        .filter(|c| {
            let declared = matrix.samples()[c.sample].sex;
            matches!(
                (declared, c.inferred),
                (Sex::Male, Sex::Female) | (Sex::Female, Sex::Male)
            )
        })
        .collect()
}
