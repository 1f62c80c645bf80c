use super::{GenotypeCode, GenotypeMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlleleStats {
    pub n_hom_major: usize,
    pub n_het: usize,
    pub n_hom_minor: usize,
    pub n_missing: usize,
    /// `None` when every considered sample is missing.
    pub maf: Option<f64>,
    pub call_rate: f64,
}

impl AlleleStats {
    pub fn from_counts(n_hom_major: usize, n_het: usize, n_hom_minor: usize, n_missing: usize) -> Self {
        let n = n_hom_major + n_het + n_hom_minor + n_missing;
        let called = n - n_missing;
        // minor count taken in integers so reflected codes give the identical value
        let maf = (called > 0).then(|| {
            let a1 = 2 * n_hom_minor + n_het;
            a1.min(2 * called - a1) as f64 / (2 * called) as f64
        });
        let call_rate = if n == 0 { 0.0 } else { called as f64 / n as f64 };
        AlleleStats {
            n_hom_major,
            n_het,
            n_hom_minor,
            n_missing,
            maf,
            call_rate,
        }
    }

    pub fn n_called(&self) -> usize {
        self.n_hom_major + self.n_het + self.n_hom_minor
    }

    /// Frequency of the coded (A1) allele among called genotypes.
    pub fn a1_freq(&self) -> Option<f64> {
        let called = self.n_called();
        (called > 0).then(|| (2 * self.n_hom_minor + self.n_het) as f64 / (2 * called) as f64)
    }
}

/// Genotype counts for one variant over the samples selected by `mask`
/// (all samples when `None`).
pub fn allele_stats(matrix: &GenotypeMatrix, variant: usize, mask: Option<&[bool]>) -> AlleleStats {
    let n = matrix.n_samples();
    let block = matrix.variant_block(variant);
    let mut counts = [0usize; 4];
    match mask {
        None => {
            for i in 0..n {
                counts[GenotypeCode::from_bits(block[i / 4] >> (2 * (i % 4))) as usize] += 1;
            }
        }
        Some(mask) => {
            debug_assert_eq!(mask.len(), n);
            for i in (0..n).filter(|&i| mask[i]) {
                counts[GenotypeCode::from_bits(block[i / 4] >> (2 * (i % 4))) as usize] += 1;
            }
        }
    }
    AlleleStats::from_counts(counts[0], counts[1], counts[2], counts[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Imputation {
    None,
    Mean,
}

/// Dense samples x variants table of additive codes, row-major. Missing
/// entries are `NaN` when no imputation was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveTable {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl AdditiveTable {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_nan()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }
}

pub fn export_additive_table(matrix: &GenotypeMatrix, impute: Imputation) -> Result<AdditiveTable> {
    let (n, m) = (matrix.n_samples(), matrix.n_variants());
    let mut values = vec![0.0; n * m];
    let mut codes = vec![0u8; n];
    for j in 0..m {
        matrix.decode_variant_into(j, &mut codes);
        let fill = match impute {
            Imputation::None => f64::NAN,
            Imputation::Mean => {
                let (sum, cnt) = codes
                    .iter()
                    .filter(|&&c| c < 3)
                    .fold((0u64, 0u64), |(s, k), &c| (s + c as u64, k + 1));
                if cnt == 0 && codes.iter().any(|&c| c == 3) {
                    return Err(Error::NoImputationBasis(matrix.variants()[j].variant_id.clone()));
                }
                if cnt == 0 {
                    0.0
                } else {
                    sum as f64 / cnt as f64
                }
            }
        };
        for (i, &c) in codes.iter().enumerate() {
            values[i * m + j] = if c < 3 { c as f64 } else { fill };
        }
    }
    Ok(AdditiveTable {
        n_rows: n,
        n_cols: m,
        values,
    })
}
