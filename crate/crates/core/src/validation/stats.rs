use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnrichmentTable {
    /// Genes in the study.
    pub total: u64,
    /// Genes in the positive list.
    pub listed: u64,
    /// Genes carrying the element.
    pub tau: u64,
    /// Carriers that are also listed.
    pub overlap: u64,
}

impl EnrichmentTable {
    pub fn new(total: u64, listed: u64, tau: u64, overlap: u64) -> Result<Self> {
        if listed > total || tau > total || overlap > listed.min(tau) {
            return Err(Error::Input(format!(
                "inconsistent enrichment table N={total} M={listed} tau={tau} m={overlap}"
            )));
        }
        Ok(EnrichmentTable {
            total,
            listed,
            tau,
            overlap,
        })
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Hypergeometric upper tail `P(X >= overlap)`.
pub fn fisher_enrichment(t: &EnrichmentTable) -> f64 {
    let EnrichmentTable {
        total: n,
        listed: m,
        tau,
        overlap,
    } = *t;
    // carriers must include at least tau - (n - m) listed genes
    let lo = overlap.max(tau.saturating_sub(n - m));
    let hi = m.min(tau);
    if lo > hi {
        return 0.0;
    }
    if overlap <= tau.saturating_sub(n - m) {
        return 1.0;
    }
    let denom = ln_binomial(n, tau);
    let terms: Vec<f64> = (lo..=hi)
        .map(|k| ln_binomial(m, k) + ln_binomial(n - m, tau - k) - denom)
        .collect();
    log_sum_exp(&terms).exp().min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentTest {
    /// Positive when carriers score higher.
    pub z: f64,
    pub p: f64,
    pub strong: bool,
}

/// Two-sided Wilcoxon rank-sum test of scores of carriers (`feature > 0`)
/// against the remaining genes; normal approximation with tie and
/// continuity corrections.
pub fn component_alignment(feature: &[f64], scores: &[f64]) -> Result<AlignmentTest> {
    let n = scores.len();
    let n1 = feature.iter().filter(|&&x| x > 0.0).count();
    let n2 = n - n1;
    if n1 == 0 || n2 == 0 {
        return Err(Error::EmptyGroup {
            carriers: n1,
            others: n2,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w: f64 = (0..n).filter(|&g| feature[g] > 0.0).map(|g| ranks[g]).sum();
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let mean = n1f * (nf + 1.0) / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(AlignmentTest {
            z: 0.0,
            p: 1.0,
            strong: false,
        });
    }
    let diff = w - mean;
    let z = if diff.abs() <= 0.5 {
        0.0
    } else {
        (diff - 0.5 * diff.signum()) / var.sqrt()
    };
    let p = (2.0 * Normal::standard().sf(z.abs())).min(1.0);
    Ok(AlignmentTest {
        z,
        p,
        strong: p < 1e-3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn fisher(n: u64, m: u64, t: u64, k: u64) -> f64 {
        fisher_enrichment(&EnrichmentTable::new(n, m, t, k).unwrap())
    }

    /// Direct sum of point masses with exact integer binomials.
    fn fisher_direct(n: u64, m: u64, t: u64, k: u64) -> f64 {
        fn binom(n: u64, k: u64) -> f64 {
            if k > n {
                return 0.0;
            }
            let k = k.min(n - k);
            let mut r = 1.0f64;
            for i in 0..k {
                r = r * (n - i) as f64 / (i + 1) as f64;
            }
            r
        }
        let total = binom(n, t);
        (k..=m.min(t))
            .map(|j| binom(m, j) * binom(n - m, t - j) / total)
            .sum()
    }

    #[test]
    fn fisher_small_example() {
        assert_relative_eq!(fisher(10, 5, 4, 4), 5.0 / 210.0, max_relative = 1e-12);
        assert_eq!(fisher(10, 5, 0, 0), 1.0);
        assert_eq!(fisher(10, 5, 4, 0), 1.0);
    }

    #[test]
    fn fisher_table_values() {
        // scipy.stats.hypergeom.sf(k - 1, N, M, tau)
        assert_relative_eq!(fisher(1600, 800, 180, 141), 1.2042e-16, max_relative = 1e-3);
        assert_relative_eq!(fisher(1600, 800, 582, 380), 1.0951e-20, max_relative = 1e-3);
        assert_relative_eq!(fisher(1600, 800, 82, 77), 1.1149e-18, max_relative = 1e-3);
        assert_relative_eq!(fisher(3000, 1500, 1629, 914), 1.8292e-13, max_relative = 1e-3);
    }

    #[test]
    fn fisher_rejects_bad_table() {
        assert!(EnrichmentTable::new(10, 11, 3, 1).is_err());
        assert!(EnrichmentTable::new(10, 5, 3, 4).is_err());
    }

    proptest! {
        #[test]
        fn fisher_matches_direct_sum(n in 1u64..200, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let m = (a * n as f64) as u64;
            let t = (b * n as f64) as u64;
            let lo = t.saturating_sub(n - m);
            let hi = m.min(t);
            let k = lo + (c * (hi - lo + 1) as f64) as u64;
            let k = k.min(hi);
            let got = fisher(n, m, t, k);
            let want = fisher_direct(n, m, t, k);
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-300) + 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn wilcoxon_extreme_separation() {
        let feature: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let scores: Vec<f64> = (0..40).map(|i| if i < 20 { 100.0 + i as f64 } else { i as f64 }).collect();
        let t = component_alignment(&feature, &scores).unwrap();
        // W = 610, mean 410, var 400 * 41 / 12
        let z = 199.5 / (400.0f64 * 41.0 / 12.0).sqrt();
        assert_relative_eq!(t.z, z, max_relative = 1e-12);
        assert!(t.p < 1e-6 && t.strong);
        let reversed = component_alignment(&feature, &scores.iter().map(|s| -s).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(reversed.z, -z, max_relative = 1e-12);
    }

    #[test]
    fn wilcoxon_constant_scores() {
        let t = component_alignment(&[1.0, 0.0, 2.0, 0.0], &[3.0; 4]).unwrap();
        assert_eq!(t.p, 1.0);
        assert!(!t.strong);
    }

    #[test]
    fn wilcoxon_empty_group() {
        assert!(matches!(
            component_alignment(&[0.0; 3], &[1.0, 2.0, 3.0]),
            Err(Error::EmptyGroup { carriers: 0, others: 3 })
        ));
    }

    #[test]
    fn wilcoxon_small_hand_value() {
        // carriers {2, 4}, others {1, 3, 5}: W = 2 + 4 = 6, mean 6, z = 0
        let t = component_alignment(&[0.0, 1.0, 0.0, 1.0, 0.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(t.z, 0.0);
        assert_eq!(t.p, 1.0);
    }

    #[test]
    fn wilcoxon_null_is_calibrated() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(17);
        let reps = 2000;
        let mut ps: Vec<f64> = (0..reps)
            .map(|_| {
                let f: Vec<f64> = (0..60).map(|i| if i < 25 { 1.0 } else { 0.0 }).collect();
                let s: Vec<f64> = (0..60).map(|_| rng.sample(StandardNormal)).collect();
                component_alignment(&f, &s).unwrap().p
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        // Kolmogorov-Smirnov distance against U(0,1); 1.63/sqrt(n) is the 1% critical value
        let d = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| (p - i as f64 / reps as f64).abs().max((p - (i + 1) as f64 / reps as f64).abs()))
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (reps as f64).sqrt(), "KS distance {d}");
        let below = ps.iter().filter(|&&p| p < 0.05).count() as f64 / reps as f64;
        assert!((below - 0.05).abs() < 0.02);
    }
}
