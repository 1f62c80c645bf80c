//! Exact Hardy-Weinberg test conditional on the minor-allele count.

/// Relative slack used when comparing table probabilities, so tables whose
/// probabilities are equal in exact arithmetic are all counted.
const TIE_SLACK: f64 = 1e-9;

/// Two-sided exact HWE p-value for genotype counts.
///
/// With the number of minor alleles fixed, sums the probabilities of all
/// heterozygote counts that are no more likely than the observed one.
/// Monomorphic or empty tables return 1.0.
pub fn hwe_exact_test(n_hom_major: u64, n_het: u64, n_hom_minor: u64) -> f64 {
    let n = n_hom_major + n_het + n_hom_minor;
    let hom_rare = n_hom_major.min(n_hom_minor);
    let rare = 2 * hom_rare + n_het;
    if n == 0 || rare == 0 {
        return 1.0;
    }

    let rare_us = rare as usize;
    let mut probs = vec![0.0f64; rare_us + 1];

    // start from the most likely het count (same parity as `rare`)
    let mut mid = rare * (2 * n - rare) / (2 * n);
    if (mid ^ rare) & 1 == 1 {
        mid += 1;
    }
    probs[mid as usize] = 1.0;
    let mut total = 1.0;

    let mut hets = mid;
    let mut homr = (rare - mid) / 2;
    let mut homc = n - hets - homr;
    while hets > 1 {
        let p = probs[hets as usize] * (hets * (hets - 1)) as f64
            / (4.0 * (homr + 1) as f64 * (homc + 1) as f64);
        probs[(hets - 2) as usize] = p;
        total += p;
        hets -= 2;
        homr += 1;
        homc += 1;
    }

    let mut hets = mid;
    let mut homr = (rare - mid) / 2;
    let mut homc = n - hets - homr;
    while hets + 2 <= rare {
        let p = probs[hets as usize] * 4.0 * homr as f64 * homc as f64
            / ((hets + 2) * (hets + 1)) as f64;
        probs[(hets + 2) as usize] = p;
        total += p;
        hets += 2;
        homr -= 1;
        homc -= 1;
    }

    let observed = probs[n_het as usize];
    let cutoff = observed * (1.0 + TIE_SLACK);
    let tail: f64 = probs.iter().filter(|&&p| p > 0.0 && p <= cutoff).sum();
    (tail / total).clamp(f64::MIN_POSITIVE, 1.0)
}
