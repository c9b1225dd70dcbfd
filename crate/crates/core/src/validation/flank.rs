use std::collections::BTreeSet;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::sequence::{
    base_code, locate_element, locate_word, reverse_complement_bases, MotifWord, Promoter,
    PromoterElement, PromoterSet, Scale,
};

pub const DEFAULT_LATTICE_STEP: f64 = 0.01;
pub const DEFAULT_LATTICE_BUDGET: u128 = 2_000_000_000;

const BASES: [u8; 4] = *b"ACGT";

/// Windows around the occurrences of one component word of an element,
/// oriented in the word's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlankAlignment {
    pub element: PromoterElement,
    pub word: MotifWord,
    /// Bases kept on each side of the word.
    pub flank: usize,
    /// Flanking bases only: `flank` left then `flank` right.
    pub windows: Vec<Vec<u8>>,
    /// Per column base counts in ACGT order.
    pub counts: Vec<[u32; 4]>,
    /// Smoothed, complement-symmetric base frequencies (ACGT).
    pub background: [f64; 4],
}

impl FlankAlignment {
    pub fn n(&self) -> usize {
        self.windows.len()
    }

    pub fn columns(&self) -> usize {
        self.counts.len()
    }
}

/// Scaled start positions of `target` leaves that take part in an instance
/// of `e` whose location is in `allowed` (all locations when `None`).
fn participating(
    e: &PromoterElement,
    p: &Promoter,
    scale: Scale,
    allowed: Option<&BTreeSet<u32>>,
    target: &MotifWord,
    out: &mut BTreeSet<u32>,
) {
    match e {
        PromoterElement::Simple(w) => {
            if w.canonical() == target.canonical() {
                for &pos in locate_word(w, &p.bases, scale).iter() {
                    if allowed.is_none_or(|a| a.contains(&pos)) {
                        out.insert(pos);
                    }
                }
            }
        }
        PromoterElement::Composite(a, b, d) => {
            let la = locate_element(a, p, scale);
            let lb = locate_element(b, p, scale);
            let reach = d << scale.shift();
            let (mut pa, mut pb) = (BTreeSet::new(), BTreeSet::new());
            for &i in la.iter() {
                for &j in lb.iter() {
                    if i.abs_diff(j) <= reach && allowed.is_none_or(|s| s.contains(&((i + j) / 2))) {
                        pa.insert(i);
                        pb.insert(j);
                    }
                }
            }
            if !pa.is_empty() {
                participating(a, p, scale, Some(&pa), target, out);
                participating(b, p, scale, Some(&pb), target, out);
            }
        }
    }
}

/// Collects flanking windows of every occurrence of `word` that takes part in
/// an instance of `e`.
pub fn build_flank_alignment(
    e: &PromoterElement,
    word: &MotifWord,
    ps: &PromoterSet,
    flank: usize,
) -> Result<FlankAlignment> {
    if flank == 0 {
        return Err(Error::Config("flank half-width must be at least 1".into()));
    }
    if !e.words().iter().any(|w| w.canonical() == word.canonical()) {
        return Err(Error::Input(format!("{word} is not a component of {e}")));
    }
    let scale = Scale::new(e.depth());
    let len = word.len();
    let fwd = word.as_bytes();
    let mut windows = Vec::new();
    let mut base_counts = [0u64; 4];
    for p in ps {
        if locate_element(e, p, scale).is_empty() {
            continue;
        }
        for &b in &p.bases {
            if let Some(c) = base_code(b) {
                base_counts[c as usize] += 1;
            }
        }
        let mut starts = BTreeSet::new();
        participating(e, p, scale, None, word, &mut starts);
        for s in starts {
            let s = (s >> scale.shift()) as usize;
            if s < flank || s + len + flank > p.bases.len() {
                continue;
            }
            let mut slice = p.bases[s - flank..s + len + flank].to_vec();
            if &slice[flank..flank + len] != fwd {
                slice = reverse_complement_bases(&slice);
            }
            let mut win = slice[..flank].to_vec();
            win.extend_from_slice(&slice[flank + len..]);
            if win.iter().all(|&b| base_code(b).is_some()) {
                windows.push(win);
            }
        }
    }
    if windows.is_empty() {
        return Err(Error::NoFlankInstances(e.to_string()));
    }
    let mut counts = vec![[0u32; 4]; 2 * flank];
    for w in &windows {
        for (col, &b) in counts.iter_mut().zip(w) {
            col[base_code(b).expect("filtered") as usize] += 1;
        }
    }
    Ok(FlankAlignment {
        element: e.clone(),
        word: word.clone(),
        flank,
        windows,
        counts,
        background: symmetric_background(base_counts),
    })
}

/// Add-one smoothing, then averaging each base with its complement.
fn symmetric_background(c: [u64; 4]) -> [f64; 4] {
    let total = c.iter().sum::<u64>() as f64 + 4.0;
    let at = (c[0] + c[3]) as f64 + 2.0;
    let cg = (c[1] + c[2]) as f64 + 2.0;
    let (at, cg) = (at / (2.0 * total), cg / (2.0 * total));
    [at, cg, cg, at]
}

fn column_statistic(k: &[u32; 4], pi: &[f64; 4]) -> f64 {
    let n: u32 = k.iter().sum();
    k.iter()
        .zip(pi)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| c as f64 * (c as f64 / (n as f64 * p)).ln())
        .sum()
}

/// Relative entropy of the column frequencies against the background, summed
/// over columns, in nats.
pub fn information_content(fa: &FlankAlignment) -> Result<f64> {
    if fa.n() == 0 {
        return Err(Error::NoFlankInstances(fa.element.to_string()));
    }
    let n = fa.n() as f64;
    let mut total = 0.0;
    for col in &fa.counts {
        for (a, &k) in col.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let p = fa.background[a];
            if p <= 0.0 {
                return Err(Error::ZeroBackground(BASES[a] as char));
            }
            let f = k as f64 / n;
            total += f * (f / p).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Chi-square approximation for the tail of `N * I_seq` with 3 degrees of
/// freedom per column.
pub fn flank_pvalue_chisq(n: usize, i_seq: f64, columns: usize) -> f64 {
    if i_seq <= 0.0 || n == 0 || columns == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(3.0 * columns as f64).expect("positive df");
    dist.sf(2.0 * n as f64 * i_seq).clamp(f64::MIN_POSITIVE, 1.0)
}

#[inline]
fn lattice_bin(stat: f64, step: f64) -> usize {
    (stat / step).round().max(0.0) as usize
}

/// Null distribution of one column's statistic on the lattice, as log masses
/// indexed by bin.
fn column_distribution(n: u32, pi: &[f64; 4], step: f64) -> Vec<f64> {
    let ln_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    let ln_n = ln_factorial(n as u64);
    let mut bins: Vec<f64> = Vec::new();
    for a in 0..=n {
        for c in 0..=n - a {
            for g in 0..=n - a - c {
                let k = [a, c, g, n - a - c - g];
                let mut lp = ln_n;
                for (i, &ki) in k.iter().enumerate() {
                    lp += ki as f64 * ln_pi[i] - ln_factorial(ki as u64);
                }
                let b = lattice_bin(column_statistic(&k, pi), step);
                if b >= bins.len() {
                    bins.resize(b + 1, f64::NEG_INFINITY);
                }
                let cur = bins[b];
                bins[b] = if cur == f64::NEG_INFINITY {
                    lp
                } else {
                    let m = cur.max(lp);
                    m + ((cur - m).exp() + (lp - m).exp()).ln()
                };
            }
        }
    }
    bins
}

/// Tail probability of the lattice statistic summed over `columns`
/// independent columns, at or above `observed` bins.
pub fn lattice_tail(
    n: u32,
    columns: usize,
    pi: &[f64; 4],
    step: f64,
    observed: usize,
    budget: u128,
) -> Result<f64> {
    let compositions = ln_binomial(n as u64 + 3, 3).exp().round() as u128;
    let max_bin = lattice_bin(n as f64 * pi.iter().fold(f64::INFINITY, |a, &b| a.min(b)).recip().ln(), step) as u128 + 1;
    let work = compositions * 8 + (columns as u128).pow(2) / 2 * max_bin * compositions.min(max_bin);
    if work > budget {
        return Err(Error::LatticeBudget { work, budget });
    }
    let col = column_distribution(n, pi, step);
    // linear masses relative to the column maximum
    let col_max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let support: Vec<(usize, f64)> = col
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > f64::NEG_INFINITY)
        .map(|(b, &l)| (b, (l - col_max).exp()))
        .collect();
    let mut acc: Vec<f64> = vec![0.0; col.len()];
    for &(b, v) in &support {
        acc[b] = v;
    }
    let mut offset = col_max;
    for _ in 1..columns {
        let mut next = vec![0.0; acc.len() + col.len() - 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(j, v) in &support {
                next[i + j] += a * v;
            }
        }
        let m = next.iter().copied().fold(0.0, f64::max);
        next.iter_mut().for_each(|x| *x /= m);
        offset += m.ln() + col_max;
        acc = next;
    }
    let tail: f64 = acc.iter().skip(observed).sum();
    if tail == 0.0 {
        return Ok(f64::MIN_POSITIVE);
    }
    Ok((tail.ln() + offset).exp().clamp(f64::MIN_POSITIVE, 1.0))
}

/// Lattice tail probability of `N * I_seq` under the background model.
pub fn flank_pvalue_lattice(fa: &FlankAlignment, step: f64, budget: u128) -> Result<f64> {
    if fa.n() == 0 {
        return Err(Error::NoFlankInstances(fa.element.to_string()));
    }
    if step <= 0.0 {
        return Err(Error::Config("lattice step must be positive".into()));
    }
    let observed = fa
        .counts
        .iter()
        .map(|k| lattice_bin(column_statistic(k, &fa.background), step))
        .sum();
    lattice_tail(fa.n() as u32, fa.columns(), &fa.background, step, observed, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn w(s: &str) -> MotifWord {
        MotifWord::new(s).unwrap()
    }

    fn el(s: &str) -> PromoterElement {
        s.parse().unwrap()
    }

    fn set(seqs: &[&str]) -> PromoterSet {
        PromoterSet::new(
            seqs.iter()
                .enumerate()
                .map(|(g, s)| Promoter::new(format!("g{g}"), s))
                .collect(),
        )
        .unwrap()
    }

    fn alignment(counts: Vec<[u32; 4]>, background: [f64; 4]) -> FlankAlignment {
        let n: u32 = counts[0].iter().sum();
        FlankAlignment {
            element: el("ACGTA"),
            word: w("ACGTA"),
            flank: counts.len() / 2,
            windows: vec![Vec::new(); n as usize],
            counts,
            background,
        }
    }

    #[test]
    fn forward_window_read_off() {
        let ps = set(&["TTGCAGGCCCAAGCTT"]);
        let fa = build_flank_alignment(&el("GGCCC"), &w("GGCCC"), &ps, 2).unwrap();
        assert_eq!(fa.windows, vec![b"CA".iter().chain(b"AA").copied().collect::<Vec<u8>>()]);
        assert_eq!(fa.counts, vec![[0, 1, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0]]);
    }

    #[test]
    fn reverse_window_is_complemented() {
        // GGGCC (reverse complement of GGCCC) read in GGCCC's frame
        let raw = "TTACGGGCCTGATT";
        let ps = set(&[raw]);
        let fa = build_flank_alignment(&el("GGCCC"), &w("GGCCC"), &ps, 3).unwrap();
        let slice = &raw.as_bytes()[1..12];
        let rc = reverse_complement_bases(slice);
        let expect: Vec<u8> = rc[..3].iter().chain(&rc[8..]).copied().collect();
        assert_eq!(fa.windows, vec![expect]);
        assert_eq!(fa.windows[0], b"TCAGTA".to_vec());
    }

    #[test]
    fn truncated_and_ambiguous_windows_dropped() {
        let ps = set(&["GGCCCAAAATTTTGGCCCAA", "AAAAAGGCCCANTTAA"]);
        assert!(matches!(
            build_flank_alignment(&el("GGCCC"), &w("GGCCC"), &ps, 3),
            Err(Error::NoFlankInstances(_))
        ));
        // the boundary site at 0 and the N-containing window go; one remains
        let fa = build_flank_alignment(&el("GGCCC"), &w("GGCCC"), &ps, 2).unwrap();
        assert_eq!(fa.windows, vec![b"TTAA".to_vec()]);
    }

    #[test]
    fn only_participating_occurrences() {
        // first AAACC is 40 nt away from GGTTT's other site; only the pair
        // within 10 counts
        let mut s = "C".repeat(60);
        s.replace_range(5..10, "AAACG");
        s.replace_range(30..35, "AAACG");
        s.replace_range(40..45, "TATAT");
        let ps = set(&[&s]);
        let fa = build_flank_alignment(&el("(AAACG,TATAT,10)"), &w("AAACG"), &ps, 3).unwrap();
        assert_eq!(fa.n(), 1);
        assert_eq!(fa.windows[0], b"CCCCCC".to_vec());
        let simple = build_flank_alignment(&el("AAACG"), &w("AAACG"), &ps, 3).unwrap();
        assert_eq!(simple.n(), 2);
        assert!(build_flank_alignment(&el("(AAACG,TATAT,5)"), &w("AAACG"), &ps, 3).is_err());
        assert!(build_flank_alignment(&el("AAACG"), &w("TATAT"), &ps, 3).is_err());
    }

    #[test]
    fn background_is_smoothed_and_symmetric() {
        let b = symmetric_background([10, 0, 0, 0]);
        assert_relative_eq!(b.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert_eq!(b[0], b[3]);
        assert_eq!(b[1], b[2]);
        assert!(b[1] > 0.0);
    }

    #[test]
    fn information_examples() {
        let flat = alignment(vec![[1, 1, 1, 1]; 4], [0.25; 4]);
        assert_eq!(information_content(&flat).unwrap(), 0.0);
        let mut cols = vec![[1, 1, 1, 1]; 4];
        cols[2] = [4, 0, 0, 0];
        let one = alignment(cols, [0.25; 4]);
        assert_relative_eq!(information_content(&one).unwrap(), 4f64.ln(), max_relative = 1e-12);
        let bad = alignment(vec![[4, 0, 0, 0]; 2], [0.0, 0.5, 0.5, 0.0]);
        assert!(matches!(information_content(&bad), Err(Error::ZeroBackground('A'))));
    }

    #[test]
    fn information_is_strand_symmetric() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let bg = [0.3, 0.2, 0.2, 0.3];
        let cols: Vec<[u32; 4]> = (0..6)
            .map(|_| {
                let mut c = [0u32; 4];
                for _ in 0..15 {
                    c[rng.random_range(0..4)] += 1;
                }
                c
            })
            .collect();
        // reverse-complementing every window reverses the columns and swaps A/T, C/G
        let rc: Vec<[u32; 4]> = cols.iter().rev().map(|c| [c[3], c[2], c[1], c[0]]).collect();
        let a = information_content(&alignment(cols, bg)).unwrap();
        let b = information_content(&alignment(rc, bg)).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn chisq_examples() {
        assert_eq!(flank_pvalue_chisq(10, 0.0, 20), 1.0);
        let p = flank_pvalue_chisq(193, 0.44, 20);
        assert!(p > 1e-13 && p < 1e-10, "{p}");
        assert_relative_eq!(p, 1.959e-12, max_relative = 1e-3);
        assert!(flank_pvalue_chisq(300, 0.44, 20) < p);
    }

    #[test]
    fn lattice_single_letter() {
        let fa = alignment(vec![[1, 0, 0, 0]], [0.25; 4]);
        assert_relative_eq!(flank_pvalue_lattice(&fa, 0.01, DEFAULT_LATTICE_BUDGET).unwrap(), 1.0, max_relative = 1e-12);
    }

    fn brute_force(counts: &[[u32; 4]], pi: [f64; 4], step: f64) -> f64 {
        let n: u32 = counts[0].iter().sum();
        let cols = counts.len();
        let observed: usize = counts.iter().map(|k| lattice_bin(column_statistic(k, &pi), step)).sum();
        let letters = n as usize * cols;
        let mut tail = 0.0;
        for code in 0..(1u64 << (2 * letters)) {
            let mut prob = 1.0;
            let mut k = vec![[0u32; 4]; cols];
            for i in 0..letters {
                let b = ((code >> (2 * i)) & 3) as usize;
                prob *= pi[b];
                k[i % cols][b] += 1;
            }
            let stat: usize = k.iter().map(|c| lattice_bin(column_statistic(c, &pi), step)).sum();
            if stat >= observed {
                tail += prob;
            }
        }
        tail
    }

    #[test]
    fn lattice_matches_brute_force() {
        for (counts, pi) in [
            (vec![[4, 1, 0, 0], [2, 2, 1, 0]], [0.25; 4]),
            (vec![[1, 1, 2, 1], [0, 0, 5, 0]], [0.25; 4]),
            (vec![[3, 0, 0, 2], [1, 1, 1, 2]], [0.35, 0.15, 0.15, 0.35]),
        ] {
            let fa = alignment(counts.clone(), pi);
            let lattice = flank_pvalue_lattice(&fa, 0.01, DEFAULT_LATTICE_BUDGET).unwrap();
            let brute = brute_force(&counts, pi, 0.01);
            assert_relative_eq!(lattice, brute, max_relative = 1e-9);
        }
    }

    #[test]
    fn lattice_matches_monte_carlo() {
        let pi = [0.3, 0.2, 0.2, 0.3];
        let n = 20;
        let counts = vec![[12, 2, 1, 5], [3, 9, 5, 3], [11, 2, 2, 5], [4, 6, 3, 7], [10, 1, 3, 6], [6, 4, 4, 6]];
        let fa = alignment(counts.clone(), pi);
        let lattice = flank_pvalue_lattice(&fa, 0.01, DEFAULT_LATTICE_BUDGET).unwrap();
        let observed: f64 = counts.iter().map(|k| column_statistic(k, &pi)).sum();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2024);
        let cdf = [0.3, 0.5, 0.7, 1.0];
        let samples = 100_000;
        let mut hits = 0u32;
        for _ in 0..samples {
            let mut stat = 0.0;
            for _ in 0..6 {
                let mut k = [0u32; 4];
                for _ in 0..n {
                    let x: f64 = rng.random();
                    k[cdf.iter().position(|&c| x < c).unwrap_or(3)] += 1;
                }
                stat += column_statistic(&k, &pi);
            }
            if stat >= observed - 1e-12 {
                hits += 1;
            }
        }
        let mc = hits as f64 / samples as f64;
        let se = (mc * (1.0 - mc) / samples as f64).sqrt();
        assert!(mc > 0.01 && mc < 0.5, "uninformative fixture: {mc}");
        assert!((lattice - mc).abs() <= 3.0 * se, "lattice {lattice} mc {mc} se {se}");
    }

    #[test]
    fn lattice_budget_exceeded() {
        let fa = alignment(vec![[100, 50, 30, 13]; 20], [0.25; 4]);
        assert!(matches!(
            flank_pvalue_lattice(&fa, 0.01, 1_000_000),
            Err(Error::LatticeBudget { .. })
        ));
    }

    #[test]
    fn lattice_tracks_chisq_for_large_n() {
        for n in [100u32, 200] {
            let pi = [0.25; 4];
            let k = [n / 4 + n / 10, n / 4, n / 4, n / 4 - n / 10];
            let fa = alignment(vec![k], pi);
            let lattice = flank_pvalue_lattice(&fa, 0.01, DEFAULT_LATTICE_BUDGET).unwrap();
            let chisq = flank_pvalue_chisq(n as usize, information_content(&fa).unwrap(), 1);
            log::info!("N={n}: lattice {lattice:e}, chisq {chisq:e}");
            assert!((lattice / chisq).log10().abs() < 1.0, "{lattice} vs {chisq}");
        }
    }
}
