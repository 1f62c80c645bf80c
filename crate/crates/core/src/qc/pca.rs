//! Genotype PCA for stratification screening.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::genotype::GenotypeMatrix;
use crate::linalg::top_eigen;

const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// n x k sample scores.
    pub scores: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors of the sample covariance, n x k.
    pub vectors: DMatrix<f64>,
    pub outliers: Vec<usize>,
    pub n_used_variants: usize,
}

/// Per-variant standardisation `(g - 2p) / sqrt(2p(1-p))` with missing calls
/// set to zero; `None` for monomorphic or all-missing variants.
fn standardize(codes: &[u8]) -> Option<Vec<f64>> {
    let (sum, cnt) = codes
        .iter()
        .filter(|&&c| c < 3)
        .fold((0u64, 0u64), |(s, k), &c| (s + c as u64, k + 1));
    if cnt == 0 {
        return None;
    }
    let p = sum as f64 / (2 * cnt) as f64;
    if p <= 0.0 || p >= 1.0 {
        return None;
    }
    let mu = 2.0 * p;
    let sd = (2.0 * p * (1.0 - p)).sqrt();
    Some(
        codes
            .iter()
            .map(|&c| if c < 3 { (c as f64 - mu) / sd } else { 0.0 })
            .collect(),
    )
}

/// Sample covariance `X Xᵀ / m'` over standardised polymorphic variants.
pub fn genotype_covariance(matrix: &GenotypeMatrix) -> (DMatrix<f64>, usize) {
    let n = matrix.n_samples();
    let m = matrix.n_variants();
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut used = 0usize;
    for lo in (0..m).step_by(CHUNK) {
        let hi = (lo + CHUNK).min(m);
        let cols: Vec<Vec<f64>> = (lo..hi)
            .into_par_iter()
            .filter_map(|j| {
                let mut codes = vec![0u8; n];
                matrix.decode_variant_into(j, &mut codes);
                standardize(&codes)
            })
            .collect();
        if cols.is_empty() {
            continue;
        }
        used += cols.len();
        // chunk stored transposed (variants x samples) so K += Yᵀ Y
        let y = DMatrix::from_fn(cols.len(), n, |r, c| cols[r][c]);
        k.gemm_tr(1.0, &y, &y, 1.0);
    }
    if used > 0 {
        k /= used as f64;
    }
    // exact symmetry for the eigensolver
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    (k, used)
}

/// Top-`k` principal components of the standardised genotypes. A sample is an
/// outlier when any component score lies more than `outlier_sd` standard
/// deviations from that component's mean (single pass).
pub fn pca_stratification(matrix: &GenotypeMatrix, k: usize, outlier_sd: f64) -> PcaResult {
    let n = matrix.n_samples();
    let (cov, used) = genotype_covariance(matrix);
    let k = k.min(n);
    if used == 0 {
        warn!("PCA input has no polymorphic variants; all eigenvalues are zero");
    }
    let eig = top_eigen(&cov, k);
    let mut scores = eig.vectors.clone();
    for (c, &lambda) in eig.values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        scores.column_mut(c).scale_mut(s);
    }

    let mut outlier = vec![false; n];
    if n >= 2 {
        for c in 0..k {
            let col = scores.column(c);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if sd <= 0.0 || eig.values[c] <= 1e-12 {
                continue;
            }
            for i in 0..n {
                if (col[i] - mean).abs() > outlier_sd * sd {
                    outlier[i] = true;
                }
            }
        }
    }
    PcaResult {
        scores,
        eigenvalues: eig.values.clone(),
        vectors: eig.vectors,
        outliers: (0..n).filter(|&i| outlier[i]).collect(),
        n_used_variants: used,
    }
}
