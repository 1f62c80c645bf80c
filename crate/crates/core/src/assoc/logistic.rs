//! Single-SNP additive logistic regression fitted by IRLS on per-genotype
//! sufficient statistics.

use statrs::function::erf::erfc;

pub const MAX_ITER: usize = 25;
pub const TOL: f64 = 1e-8;
pub const SEPARATION_BETA: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitStatus {
    Converged,
    Monomorphic,
    Separated,
    NotConverged,
}

impl FitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FitStatus::Converged => "OK",
            FitStatus::Monomorphic => "MONOMORPHIC",
            FitStatus::Separated => "SEPARATED",
            FitStatus::NotConverged => "NOT_CONVERGED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            FitStatus::Converged,
            FitStatus::Monomorphic,
            FitStatus::Separated,
            FitStatus::NotConverged,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
    }
}

/// Case and control counts per additive genotype class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenotypeTable {
    pub cases: [u64; 3],
    pub controls: [u64; 3],
}

impl GenotypeTable {
    /// `phenotypes` are 1 (case) / 0 (control) / `None`; genotype codes use 3
    /// for missing. Samples missing either value are dropped.
    pub fn tally(phenotypes: &[Option<u8>], genotypes: &[u8]) -> Self {
        let mut t = GenotypeTable::default();
        for (&y, &g) in phenotypes.iter().zip(genotypes) {
            if g > 2 {
                continue;
            }
            match y {
                Some(1) => t.cases[g as usize] += 1,
                Some(0) => t.controls[g as usize] += 1,
                _ => {}
            }
        }
        t
    }

    pub fn n(&self) -> u64 {
        self.cases.iter().chain(&self.controls).sum()
    }

    pub fn reflect(&self) -> Self {
        let r = |a: [u64; 3]| [a[2], a[1], a[0]];
        GenotypeTable {
            cases: r(self.cases),
            controls: r(self.controls),
        }
    }

    /// Binomial log-likelihood of `logit p = b0 + b1 g`.
    pub fn log_likelihood(&self, b0: f64, b1: f64) -> f64 {
        let mut ll = 0.0;
        for g in 0..3 {
            let eta = b0 + b1 * g as f64;
            // log sigma(eta) and log(1 - sigma(eta)) without overflow
            let log_p = -softplus(-eta);
            let log_q = -softplus(eta);
            if self.cases[g] > 0 {
                ll += self.cases[g] as f64 * log_p;
            }
            if self.controls[g] > 0 {
                ll += self.controls[g] as f64 * log_q;
            }
        }
        ll
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub n_used: u64,
    pub beta0: f64,
    pub beta1: f64,
    pub se1: f64,
    pub iterations: usize,
    pub status: FitStatus,
}

/// Score vector and observed information at (b0, b1).
fn score_info(t: &GenotypeTable, b0: f64, b1: f64) -> ([f64; 2], [f64; 3]) {
    let mut u = [0.0; 2];
    let mut info = [0.0; 3]; // i00, i01, i11
    for g in 0..3 {
        let n = (t.cases[g] + t.controls[g]) as f64;
        if n == 0.0 {
            continue;
        }
        let gf = g as f64;
        let p = sigmoid(b0 + b1 * gf);
        let r = t.cases[g] as f64 - n * p;
        u[0] += r;
        u[1] += r * gf;
        let w = n * p * (1.0 - p);
        info[0] += w;
        info[1] += w * gf;
        info[2] += w * gf * gf;
    }
    (u, info)
}

pub fn fit(t: &GenotypeTable) -> LogisticFit {
    let n_used = t.n();
    let classes = (0..3).filter(|&g| t.cases[g] + t.controls[g] > 0).count();
    let mut out = LogisticFit {
        n_used,
        beta0: f64::NAN,
        beta1: f64::NAN,
        se1: f64::NAN,
        iterations: 0,
        status: FitStatus::Monomorphic,
    };
    if classes < 2 {
        return out;
    }
    let n_cases: u64 = t.cases.iter().sum();
    if n_cases == 0 || n_cases == n_used {
        // one phenotype class: the intercept has no finite maximiser
        out.status = FitStatus::Separated;
        return out;
    }

    let (mut b0, mut b1) = (0.0f64, 0.0f64);
    for it in 1..=MAX_ITER {
        let (u, i) = score_info(t, b0, b1);
        let det = i[0] * i[2] - i[1] * i[1];
        if !(det > 0.0) || !det.is_finite() {
            out.status = FitStatus::Separated;
            out.iterations = it;
            return out;
        }
        let d0 = (i[2] * u[0] - i[1] * u[1]) / det;
        let d1 = (i[0] * u[1] - i[1] * u[0]) / det;
        let prev_abs = b1.abs();
        b0 += d0;
        b1 += d1;
        out.iterations = it;
        if !b0.is_finite() || !b1.is_finite() {
            out.status = FitStatus::Separated;
            return out;
        }
        if b1.abs() > SEPARATION_BETA && b1.abs() > prev_abs {
            out.status = FitStatus::Separated;
            out.beta0 = b0;
            out.beta1 = b1;
            return out;
        }
        if d0.abs().max(d1.abs()) < TOL {
            let (_, i) = score_info(t, b0, b1);
            let det = i[0] * i[2] - i[1] * i[1];
            out.beta0 = b0;
            out.beta1 = b1;
            if !(det > 0.0) {
                out.status = FitStatus::Separated;
                return out;
            }
            out.se1 = (i[0] / det).sqrt();
            out.status = FitStatus::Converged;
            return out;
        }
    }
    out.beta0 = b0;
    out.beta1 = b1;
    out.status = FitStatus::NotConverged;
    out
}

/// Upper tail of chi-square with one degree of freedom.
pub fn chi2_1_sf(chi2: f64) -> f64 {
    erfc((chi2 / 2.0).sqrt()).max(f64::MIN_POSITIVE).min(1.0)
}

/// Two-sided Wald p value; `None` when `se1` is not positive.
pub fn wald_p(beta1: f64, se1: f64) -> Option<f64> {
    if !(se1 > 0.0) {
        return None;
    }
    let z = beta1 / se1;
    Some(erfc(z.abs() / std::f64::consts::SQRT_2).max(f64::MIN_POSITIVE).min(1.0))
}
