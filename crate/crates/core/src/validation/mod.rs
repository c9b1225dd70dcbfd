//! Post-hoc checks on a fitted model: permutation decoupling, flanking
//! sequence conservation, gene-list enrichment and component alignment.

mod flank;
mod stats;

pub use flank::{
    build_flank_alignment, flank_pvalue_chisq, flank_pvalue_lattice, information_content,
    FlankAlignment, DEFAULT_LATTICE_BUDGET, DEFAULT_LATTICE_STEP,
};
pub use stats::{component_alignment, fisher_enrichment, AlignmentTest, EnrichmentTable};

use rand::{Rng, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

use crate::sequence::{Promoter, PromoterSet};

/// Uniform random permutation of `0..n` by Fisher-Yates over xoshiro256++.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Re-pairs each gene id with the promoter of a randomly chosen gene.
pub fn decouple(ps: &PromoterSet, seed: u64) -> PromoterSet {
    let perm = permutation(ps.len(), seed);
    let promoters = ps
        .iter()
        .zip(&perm)
        .map(|(p, &src)| Promoter::new(p.gene_id.clone(), &ps.get(src).bases))
        .collect();
    PromoterSet::new(promoters).expect("ids unchanged")
}

/// Derives `count` stage seeds from a master seed with SplitMix64.
pub fn split_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut sm = SplitMix64::seed_from_u64(master);
    (0..count).map(|_| sm.random()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn ps(n: usize) -> PromoterSet {
        PromoterSet::new(
            (0..n)
                .map(|g| Promoter::new(format!("g{g}"), format!("ACGT{}", "A".repeat(g + 1))))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_gene_unchanged() {
        assert_eq!(decouple(&ps(1), 42), ps(1));
    }

    #[test]
    fn same_seed_same_pairing() {
        let a = decouple(&ps(30), 7);
        assert_eq!(a, decouple(&ps(30), 7));
        assert_ne!(a, decouple(&ps(30), 8));
    }

    #[test]
    fn decouple_preserves_ids_and_multiset() {
        let orig = ps(25);
        let d = decouple(&orig, 99);
        assert_eq!(d.gene_ids(), orig.gene_ids());
        let mut a: Vec<_> = orig.iter().map(|p| p.bases.clone()).collect();
        let mut b: Vec<_> = d.iter().map(|p| p.bases.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn positions_are_uniform() {
        let n = 8;
        let draws = 10_000;
        let mut counts = vec![vec![0u32; n]; n];
        for s in 0..draws {
            for (i, &v) in permutation(n, s).iter().enumerate() {
                counts[i][v] += 1;
            }
        }
        let expect = draws as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .flatten()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // n rows of n-1 free cells each
        let p = ChiSquared::new((n * (n - 1)) as f64).unwrap().sf(chi2);
        assert!(p > 1e-4, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = split_seeds(1, 20);
        assert_eq!(s, split_seeds(1, 20));
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 20);
        assert_eq!(&split_seeds(1, 25)[..20], &s[..]);
    }
}
