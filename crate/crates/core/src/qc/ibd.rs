//! Pairwise relatedness (PI_HAT) by method of moments on IBS counts.

use log::warn;
use rayon::prelude::*;

use crate::genotype::{allele_stats, GenotypeMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct IbdPair {
    pub a: usize,
    pub b: usize,
    /// Unclamped estimate `P(IBD=1)/2 + P(IBD=2)`.
    pub pi_hat_raw: f64,
    /// `pi_hat_raw` clamped to `[0, 1]`.
    pub pi_hat: f64,
    pub n_loci: usize,
}

/// Expected IBS counts given allele frequency:
/// `[E(IBS0 | IBD0), E(IBS1 | IBD0), E(IBS1 | IBD1)]`.
fn expected_ibs(p: f64) -> [f64; 3] {
    let q = 1.0 - p;
    [
        2.0 * p * p * q * q,
        4.0 * p * q * (p * p + q * q),
        2.0 * p * q,
    ]
}

/// Per-sample bit planes over loci: hom-major, het, hom-minor.
struct Planes {
    words: usize,
    bits: Vec<u64>,
    missing: Vec<Vec<u32>>,
}

impl Planes {
    fn build(matrix: &GenotypeMatrix, loci: &[usize]) -> Self {
        let n = matrix.n_samples();
        let words = loci.len().div_ceil(64);
        let mut bits = vec![0u64; n * 3 * words];
        let mut missing = vec![Vec::new(); n];
        let mut codes = vec![0u8; n];
        for (l, &j) in loci.iter().enumerate() {
            matrix.decode_variant_into(j, &mut codes);
            let (w, bit) = (l / 64, 1u64 << (l % 64));
            for (i, &c) in codes.iter().enumerate() {
                if c < 3 {
                    bits[(i * 3 + c as usize) * words + w] |= bit;
                } else {
                    missing[i].push(l as u32);
                }
            }
        }
        Planes {
            words,
            bits,
            missing,
        }
    }

    fn plane(&self, sample: usize, code: usize) -> &[u64] {
        let off = (sample * 3 + code) * self.words;
        &self.bits[off..off + self.words]
    }

    /// (IBS0, IBS2, co-called) counts.
    fn ibs_counts(&self, a: usize, b: usize) -> (u64, u64, u64) {
        let (a0, a1, a2) = (self.plane(a, 0), self.plane(a, 1), self.plane(a, 2));
        let (b0, b1, b2) = (self.plane(b, 0), self.plane(b, 1), self.plane(b, 2));
        let (mut ibs0, mut ibs2, mut both) = (0u64, 0u64, 0u64);
        for w in 0..self.words {
            let ca = a0[w] | a1[w] | a2[w];
            let cb = b0[w] | b1[w] | b2[w];
            both += (ca & cb).count_ones() as u64;
            ibs0 += ((a0[w] & b2[w]) | (a2[w] & b0[w])).count_ones() as u64;
            ibs2 += ((a0[w] & b0[w]) | (a1[w] & b1[w]) | (a2[w] & b2[w])).count_ones() as u64;
        }
        (ibs0, ibs2, both)
    }
}

fn add3(acc: &mut [f64; 3], e: &[f64; 3], sign: f64) {
    for k in 0..3 {
        acc[k] += sign * e[k];
    }
}

/// Estimate PI_HAT for every sample pair `a < b` and return those with
/// `pi_hat > report_above` (pass `f64::NEG_INFINITY` for all pairs).
///
/// Allele frequencies are taken from all samples; monomorphic loci carry no
/// information and are skipped. Each pair uses only loci called in both.
pub fn ibd_scan(matrix: &GenotypeMatrix, report_above: f64) -> Vec<IbdPair> {
    let n = matrix.n_samples();
    let mut loci = Vec::new();
    let mut expect = Vec::new();
    for j in 0..matrix.n_variants() {
        let st = allele_stats(matrix, j, None);
        if let Some(p) = st.a1_freq() {
            if p > 0.0 && p < 1.0 {
                loci.push(j);
                expect.push(expected_ibs(p));
            }
        }
    }
    let planes = Planes::build(matrix, &loci);
    let mut total = [0.0; 3];
    for e in &expect {
        add3(&mut total, e, 1.0);
    }
    let miss_sum: Vec<[f64; 3]> = planes
        .missing
        .iter()
        .map(|ls| {
            let mut s = [0.0; 3];
            for &l in ls {
                add3(&mut s, &expect[l as usize], 1.0);
            }
            s
        })
        .collect();

    let rows: Vec<(Vec<IbdPair>, usize)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut out = Vec::new();
            let mut skipped = 0;
            for b in a + 1..n {
                let mut e = total;
                add3(&mut e, &miss_sum[a], -1.0);
                add3(&mut e, &miss_sum[b], -1.0);
                for l in sorted_intersection(&planes.missing[a], &planes.missing[b]) {
                    add3(&mut e, &expect[l as usize], 1.0);
                }
                let (ibs0, ibs2, both) = planes.ibs_counts(a, b);
                if both == 0 || e[0] <= 0.0 || e[2] <= 0.0 {
                    skipped += 1;
                    continue;
                }
                let ibs1 = (both - ibs0 - ibs2) as f64;
                let z0 = ibs0 as f64 / e[0];
                let z1 = (ibs1 - z0 * e[1]) / e[2];
                let raw = 1.0 - z0 - 0.5 * z1;
                let pi_hat = raw.clamp(0.0, 1.0);
                if pi_hat > report_above || (report_above == f64::NEG_INFINITY) {
                    out.push(IbdPair {
                        a,
                        b,
                        pi_hat_raw: raw,
                        pi_hat,
                        n_loci: both as usize,
                    });
                }
            }
            (out, skipped)
        })
        .collect();

    let skipped: usize = rows.iter().map(|r| r.1).sum();
    if skipped > 0 {
        warn!("IBD scan skipped {skipped} sample pairs with no co-called informative variants");
    }
    rows.into_iter().flat_map(|r| r.0).collect()
}

fn sorted_intersection<'a>(x: &'a [u32], y: &'a [u32]) -> impl Iterator<Item = u32> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let v = x[i];
                    i += 1;
                    j += 1;
                    return Some(v);
                }
            }
        }
        None
    })
}

/// Resolve flagged pairs into removals: the member with the lower call rate
/// goes (lexicographically larger id on ties). Pairs already resolved by an
/// earlier removal are skipped. Returns `(removed, kept partner, pi_hat)`.
pub fn ibd_removals(
    matrix: &GenotypeMatrix,
    pairs: &[IbdPair],
    pi_hat_max: f64,
    call_rate: &[f64],
) -> Vec<(usize, usize, f64)> {
    let mut gone = vec![false; matrix.n_samples()];
    let mut out = Vec::new();
    for p in pairs.iter().filter(|p| p.pi_hat > pi_hat_max) {
        if gone[p.a] || gone[p.b] {
            continue;
        }
        let (ida, idb) = (&matrix.samples()[p.a].sample_id, &matrix.samples()[p.b].sample_id);
        let drop_a = match call_rate[p.a].partial_cmp(&call_rate[p.b]) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Greater) => false,
            _ => ida > idb,
        };
        let (r, k) = if drop_a { (p.a, p.b) } else { (p.b, p.a) };
        gone[r] = true;
        out.push((r, k, p.pi_hat));
    }
    out
}
