//! Sliding-window LD pruning on additive genotype correlation.

use rayon::prelude::*;

use crate::genotype::{allele_stats, GenotypeMatrix};

/// Squared Pearson correlation of two additive code vectors over samples
/// called in both (`3` marks a missing call). Zero when either side has no
/// variance among the shared samples.
pub fn pairwise_r2(a: &[u8], b: &[u8]) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64, 0i64, 0i64, 0i64);
    for (&x, &y) in a.iter().zip(b) {
        if x < 3 && y < 3 {
            let (x, y) = (x as i64, y as i64);
            n += 1;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
    }
    let va = n * sxx - sx * sx;
    let vb = n * syy - sy * sy;
    if va == 0 || vb == 0 {
        return 0.0;
    }
    let cov = (n * sxy - sx * sy) as f64;
    cov * cov / (va as f64 * vb as f64)
}

/// Greedy windowed pruning. Returns the indices of kept variants, ascending.
///
/// Windows hold `window` consecutive variants of one chromosome and advance
/// by `step`. Within a window every still-kept pair is visited in position
/// order; when `r2 > r2_max` the lower-MAF variant of the pair is dropped
/// (the later one on ties). Dropped variants never return.
pub fn ld_prune(matrix: &GenotypeMatrix, window: usize, step: usize, r2_max: f64) -> Vec<usize> {
    assert!(window >= 2 && step >= 1 && step <= window, "invalid LD window/step");
    let m = matrix.n_variants();
    let n = matrix.n_samples();
    let mut removed = vec![false; m];

    let mut codes = vec![0u8; n * m];
    codes
        .par_chunks_mut(n.max(1))
        .enumerate()
        .take(m)
        .for_each(|(j, out)| matrix.decode_variant_into(j, out));
    let col = |j: usize| &codes[j * n..(j + 1) * n];
    let maf: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| allele_stats(matrix, j, None).maf.unwrap_or(0.0))
        .collect();

    let variants = matrix.variants();
    let mut lo = 0;
    while lo < m {
        let chrom = variants[lo].chromosome;
        let hi = lo + variants[lo..].iter().take_while(|v| v.chromosome == chrom).count();

        let mut start = lo;
        let mut prev_end = lo;
        loop {
            let end = (start + window).min(hi);
            // Pairs with both members inside the previous window were already
            // resolved there; only pairs reaching a newly entered variant matter.
            let pairs: Vec<(usize, usize)> = (start..end)
                .filter(|&a| !removed[a])
                .flat_map(|a| {
                    (prev_end.max(a + 1)..end)
                        .filter(|&b| !removed[b])
                        .map(move |b| (a, b))
                })
                .collect();
            let r2: Vec<f64> = pairs
                .par_iter()
                .map(|&(a, b)| pairwise_r2(col(a), col(b)))
                .collect();
            for (&(a, b), &r) in pairs.iter().zip(&r2) {
                if removed[a] || removed[b] || r <= r2_max {
                    continue;
                }
                // b is later in position order, so it loses ties
                if maf[a] < maf[b] {
                    removed[a] = true;
                } else {
                    removed[b] = true;
                }
            }
            prev_end = end;
            if end == hi {
                break;
            }
            start += step;
        }
        lo = hi;
    }
    (0..m).filter(|&j| !removed[j]).collect()
}
