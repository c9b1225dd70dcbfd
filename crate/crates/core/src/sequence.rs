//! DNA words, promoter elements and exact site location.
//!
//! Positions are 0-based offsets into the stored strand. Every location is
//! kept multiplied by a pipeline-wide [`Scale`] of `2^shift` so that the
//! midpoints produced by nested composite elements stay integral.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-bit code of a nucleotide, `None` for anything outside ACGT.
#[inline]
pub fn base_code(b: u8) -> Option<u64> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

#[inline]
pub fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'C' => b'G',
        b'G' => b'C',
        b'T' => b'A',
        _ => b'N',
    }
}

pub fn reverse_complement_bases(bases: &[u8]) -> Vec<u8> {
    bases.iter().rev().map(|&b| complement(b)).collect()
}

/// A nondegenerate DNA word over `{A,C,G,T}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MotifWord(Box<str>);

impl MotifWord {
    pub fn new(s: &str) -> Result<Self> {
        if s.is_empty() || !s.bytes().all(|b| base_code(b).is_some()) {
            return Err(Error::InvalidWord(s.to_string()));
        }
        Ok(MotifWord(s.into()))
    }

    fn from_code(code: u64, len: usize) -> Self {
        let s: String = (0..len)
            .map(|i| {
                let shift = 2 * (len - 1 - i);
                b"ACGT"[((code >> shift) & 3) as usize] as char
            })
            .collect();
        MotifWord(s.into_boxed_str())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Packed 2-bit code; lexicographic order of equal-length words matches code order.
    pub fn code(&self) -> u64 {
        self.0
            .bytes()
            .fold(0u64, |acc, b| (acc << 2) | base_code(b).unwrap_or(0))
    }

    pub fn reverse_complement(&self) -> MotifWord {
        let rc = reverse_complement_bases(self.as_bytes());
        MotifWord(String::from_utf8(rc).expect("ascii").into_boxed_str())
    }

    /// The lexicographically smaller of the word and its reverse complement.
    pub fn canonical(&self) -> MotifWord {
        let rc = self.reverse_complement();
        if rc < *self {
            rc
        } else {
            self.clone()
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self <= self.reverse_complement()
    }

    pub fn is_palindrome(&self) -> bool {
        *self == self.reverse_complement()
    }
}

impl fmt::Display for MotifWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for MotifWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MotifWord({})", self.0)
    }
}

impl TryFrom<String> for MotifWord {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        MotifWord::new(&s)
    }
}

impl From<MotifWord> for String {
    fn from(w: MotifWord) -> String {
        w.0.into()
    }
}

impl FromStr for MotifWord {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MotifWord::new(s)
    }
}

#[inline]
fn rc_code(code: u64, len: usize) -> u64 {
    let mut out = 0u64;
    let mut c = code;
    for _ in 0..len {
        out = (out << 2) | (3 - (c & 3));
        c >>= 2;
    }
    out
}

/// Number of reverse-complement classes among words of length `len`.
pub fn canonical_word_count(len: usize) -> u64 {
    let all = 4u64.pow(len as u32);
    if len.is_multiple_of(2) {
        let pal = 4u64.pow((len / 2) as u32);
        (all - pal) / 2 + pal
    } else {
        all / 2
    }
}

/// All canonical words of length `len`, in lexicographic order.
pub fn enumerate_words(len: i64) -> Result<Vec<MotifWord>> {
    if !(1..=31).contains(&len) {
        return Err(Error::InvalidWordLength(len));
    }
    let len = len as usize;
    let total = 1u64 << (2 * len);
    Ok((0..total)
        .filter(|&c| c <= rc_code(c, len))
        .map(|c| MotifWord::from_code(c, len))
        .collect())
}

/// A promoter element: a word, or two elements co-occurring within `delta` nucleotides.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromoterElement {
    Simple(MotifWord),
    Composite(Box<PromoterElement>, Box<PromoterElement>, u32),
}

impl PromoterElement {
    pub fn simple(word: MotifWord) -> Self {
        PromoterElement::Simple(word)
    }

    pub fn composite(e1: PromoterElement, e2: PromoterElement, delta: u32) -> Self {
        PromoterElement::Composite(Box::new(e1), Box::new(e2), delta)
    }

    pub fn is_simple(&self) -> bool {
        matches!(self, PromoterElement::Simple(_))
    }

    /// Number of interactions contained in the element.
    pub fn order(&self) -> usize {
        match self {
            PromoterElement::Simple(_) => 0,
            PromoterElement::Composite(a, b, _) => a.order() + b.order() + 1,
        }
    }

    /// Nesting depth; bounds how many times a location is halved.
    pub fn depth(&self) -> u32 {
        match self {
            PromoterElement::Simple(_) => 0,
            PromoterElement::Composite(a, b, _) => a.depth().max(b.depth()) + 1,
        }
    }

    /// Leaf words, left to right, with repetitions.
    pub fn words(&self) -> Vec<&MotifWord> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a MotifWord>) {
        match self {
            PromoterElement::Simple(w) => out.push(w),
            PromoterElement::Composite(a, b, _) => {
                a.collect_words(out);
                b.collect_words(out);
            }
        }
    }

    /// Every composite sub-element (the element itself included), post-order.
    pub fn interactions(&self) -> Vec<&PromoterElement> {
        let mut out = Vec::new();
        self.collect_interactions(&mut out);
        out
    }

    fn collect_interactions<'a>(&'a self, out: &mut Vec<&'a PromoterElement>) {
        if let PromoterElement::Composite(a, b, _) = self {
            a.collect_interactions(out);
            b.collect_interactions(out);
            out.push(self);
        }
    }

    /// Ordering used to break exact score ties: lower order first, then structure
    /// (words lexicographically, distances numerically).
    pub fn tie_order(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.cmp(other))
    }
}

impl fmt::Display for PromoterElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromoterElement::Simple(w) => f.write_str(w.as_str()),
            PromoterElement::Composite(a, b, d) => write!(f, "({a},{b},{d})"),
        }
    }
}

impl fmt::Debug for PromoterElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for PromoterElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = ElementParser { input: s, pos: 0 };
        let e = p.element()?;
        if p.pos != s.len() {
            return Err(p.error("trailing characters"));
        }
        Ok(e)
    }
}

impl Serialize for PromoterElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromoterElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct ElementParser<'a> {
    input: &'a str,
    pos: usize,
}

impl ElementParser<'_> {
    fn error(&self, reason: &str) -> Error {
        Error::ElementSyntax {
            input: self.input.to_string(),
            offset: self.pos,
            reason: reason.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.input.as_bytes().get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn element(&mut self) -> Result<PromoterElement> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let a = self.element()?;
                self.expect(b',')?;
                let b = self.element()?;
                self.expect(b',')?;
                let d = self.delta()?;
                self.expect(b')')?;
                Ok(PromoterElement::composite(a, b, d))
            }
            Some(c) if base_code(c).is_some() => {
                let start = self.pos;
                while self.peek().and_then(base_code).is_some() {
                    self.pos += 1;
                }
                Ok(PromoterElement::Simple(MotifWord::new(
                    &self.input[start..self.pos],
                )?))
            }
            _ => Err(self.error("expected a word or '('")),
        }
    }

    fn delta(&mut self) -> Result<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let digits = &self.input[start..self.pos];
        if digits.is_empty() {
            return Err(self.error("expected a distance"));
        }
        if digits.starts_with('0') {
            self.pos = start;
            return Err(self.error("distance must be a positive integer without leading zeros"));
        }
        digits.parse().map_err(|_| self.error("distance out of range"))
    }
}

/// A promoter sequence, stored 5'->3' as read, uppercased.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Promoter {
    pub gene_id: String,
    pub bases: Vec<u8>,
}

impl Promoter {
    pub fn new(gene_id: impl Into<String>, bases: impl AsRef<[u8]>) -> Self {
        Promoter {
            gene_id: gene_id.into(),
            bases: bases.as_ref().to_ascii_uppercase(),
        }
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromoterSet {
    promoters: Vec<Promoter>,
}

impl PromoterSet {
    pub fn new(promoters: Vec<Promoter>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(promoters.len());
        for (i, p) in promoters.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::Input(format!("promoter {} is empty", p.gene_id)));
            }
            if seen.insert(p.gene_id.as_str(), i).is_some() {
                return Err(Error::Input(format!("duplicate gene id {}", p.gene_id)));
            }
        }
        Ok(PromoterSet { promoters })
    }

    pub fn len(&self) -> usize {
        self.promoters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.promoters.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Promoter> {
        self.promoters.iter()
    }

    pub fn get(&self, g: usize) -> &Promoter {
        &self.promoters[g]
    }

    pub fn promoters(&self) -> &[Promoter] {
        &self.promoters
    }

    pub fn gene_ids(&self) -> Vec<&str> {
        self.promoters.iter().map(|p| p.gene_id.as_str()).collect()
    }

    pub fn max_len(&self) -> usize {
        self.promoters.iter().map(Promoter::len).max().unwrap_or(0)
    }

    /// Reorders to match `gene_ids`; every id must be present exactly once.
    pub fn aligned_to(&self, gene_ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, &Promoter> = self
            .promoters
            .iter()
            .map(|p| (p.gene_id.as_str(), p))
            .collect();
        let missing: Vec<&str> = gene_ids
            .iter()
            .filter(|g| !index.contains_key(g.as_str()))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Input(format!(
                "genes in expression matrix without promoter: {}",
                missing.join(",")
            )));
        }
        if gene_ids.len() != self.promoters.len() {
            let wanted: std::collections::HashSet<&str> =
                gene_ids.iter().map(String::as_str).collect();
            let extra: Vec<&str> = self
                .promoters
                .iter()
                .map(|p| p.gene_id.as_str())
                .filter(|g| !wanted.contains(g))
                .collect();
            return Err(Error::Input(format!(
                "promoters without expression row: {}",
                extra.join(",")
            )));
        }
        Ok(PromoterSet {
            promoters: gene_ids
                .iter()
                .map(|g| index[g.as_str()].clone())
                .collect(),
        })
    }
}

impl<'a> IntoIterator for &'a PromoterSet {
    type Item = &'a Promoter;
    type IntoIter = std::slice::Iter<'a, Promoter>;
    fn into_iter(self) -> Self::IntoIter {
        self.promoters.iter()
    }
}

/// Fixed-point scale applied to every position: `2^shift`, with `shift = o_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scale {
    shift: u32,
}

impl Scale {
    pub fn new(shift: u32) -> Self {
        assert!(shift < 16, "scale shift {shift} too large");
        Scale { shift }
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn factor(&self) -> u32 {
        1 << self.shift
    }

    /// Whether nested midpoints of `e` stay exact at this scale.
    pub fn covers(&self, e: &PromoterElement) -> bool {
        e.depth() <= self.shift
    }

    #[inline]
    pub fn scaled(&self, pos: usize) -> u32 {
        (pos as u32) << self.shift
    }

    pub fn unscaled(&self, v: u32) -> f64 {
        v as f64 / self.factor() as f64
    }
}

/// Sorted, duplicate-free scaled positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocationSet(Vec<u32>);

impl LocationSet {
    /// Sorts and deduplicates.
    pub fn from_unsorted(mut v: Vec<u32>) -> Self {
        v.sort_unstable();
        v.dedup();
        LocationSet(v)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u32> {
        self.0.iter()
    }

    /// Midpoints of all pairs within `delta` nucleotides.
    pub fn pair_with(&self, other: &LocationSet, delta: u32, scale: Scale) -> LocationSet {
        let reach = delta << scale.shift();
        let b = other.as_slice();
        let mut mids = Vec::new();
        for &i in &self.0 {
            let lo = b.partition_point(|&j| j + reach < i);
            for &j in b[lo..].iter().take_while(|&&j| j <= i + reach) {
                mids.push((i + j) / 2);
            }
        }
        LocationSet::from_unsorted(mids)
    }
}

/// Scaled start offsets of `word` or its reverse complement on `bases`.
pub fn locate_word(word: &MotifWord, bases: &[u8], scale: Scale) -> LocationSet {
    let fwd = word.as_bytes();
    let rc = reverse_complement_bases(fwd);
    let l = fwd.len();
    if bases.len() < l {
        return LocationSet::default();
    }
    let hits = (0..=bases.len() - l)
        .filter(|&i| {
            let win = &bases[i..i + l];
            win == fwd || win == rc.as_slice()
        })
        .map(|i| scale.scaled(i))
        .collect();
    LocationSet(hits)
}

pub fn locate_element(e: &PromoterElement, p: &Promoter, scale: Scale) -> LocationSet {
    debug_assert!(scale.covers(e), "element {e} deeper than scale");
    match e {
        PromoterElement::Simple(w) => locate_word(w, &p.bases, scale),
        PromoterElement::Composite(a, b, d) => {
            let la = locate_element(a, p, scale);
            if la.is_empty() {
                return la;
            }
            let lb = locate_element(b, p, scale);
            la.pair_with(&lb, *d, scale)
        }
    }
}

/// Minimum distance between any location of `e1` and any of `e2`, in nucleotides.
/// `f64::INFINITY` when either element is absent.
pub fn min_pair_distance(
    e1: &PromoterElement,
    e2: &PromoterElement,
    p: &Promoter,
    scale: Scale,
) -> f64 {
    let a = locate_element(e1, p, scale);
    let b = locate_element(e2, p, scale);
    min_distance_scaled(&a, &b)
        .map(|d| scale.unscaled(d))
        .unwrap_or(f64::INFINITY)
}

fn min_distance_scaled(a: &LocationSet, b: &LocationSet) -> Option<u32> {
    let (a, b) = (a.as_slice(), b.as_slice());
    let (mut i, mut j) = (0, 0);
    let mut best: Option<u32> = None;
    while i < a.len() && j < b.len() {
        let d = a[i].abs_diff(b[j]);
        best = Some(best.map_or(d, |x| x.min(d)));
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// `X(e)` over a promoter set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureColumn {
    pub element: PromoterElement,
    pub values: Vec<u32>,
    pub tau: usize,
}

impl FeatureColumn {
    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Counts for simple elements, presence indicators for composites.
pub fn count_feature(e: &PromoterElement, ps: &PromoterSet, scale: Scale) -> FeatureColumn {
    let values: Vec<u32> = ps
        .iter()
        .map(|p| {
            let n = locate_element(e, p, scale).len() as u32;
            if e.is_simple() {
                n
            } else {
                n.min(1)
            }
        })
        .collect();
    let tau = values.iter().filter(|&&v| v > 0).count();
    FeatureColumn {
        element: e.clone(),
        values,
        tau,
    }
}

/// Locations of one element across every gene, stored sparsely.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiteTable {
    genes: usize,
    entries: Vec<(u32, LocationSet)>,
}

impl SiteTable {
    pub fn from_entries(genes: usize, mut entries: Vec<(u32, LocationSet)>) -> Self {
        entries.retain(|(_, l)| !l.is_empty());
        entries.sort_by_key(|(g, _)| *g);
        SiteTable { genes, entries }
    }

    pub fn locate(e: &PromoterElement, ps: &PromoterSet, scale: Scale) -> Self {
        let entries = ps
            .iter()
            .enumerate()
            .map(|(g, p)| (g as u32, locate_element(e, p, scale)))
            .collect();
        SiteTable::from_entries(ps.len(), entries)
    }

    pub fn genes(&self) -> usize {
        self.genes
    }

    pub fn entries(&self) -> &[(u32, LocationSet)] {
        &self.entries
    }

    pub fn get(&self, gene: usize) -> Option<&LocationSet> {
        self.entries
            .binary_search_by_key(&(gene as u32), |(g, _)| *g)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    /// Number of genes with at least one site.
    pub fn tau(&self) -> usize {
        self.entries.len()
    }

    pub fn pair_with(&self, other: &SiteTable, delta: u32, scale: Scale) -> SiteTable {
        let mut out = Vec::new();
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    let mids = a[i].1.pair_with(&b[j].1, delta, scale);
                    if !mids.is_empty() {
                        out.push((a[i].0, mids));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        SiteTable {
            genes: self.genes,
            entries: out,
        }
    }

    pub fn feature_values(&self, simple: bool) -> Vec<u32> {
        let mut v = vec![0u32; self.genes];
        for (g, l) in &self.entries {
            v[*g as usize] = if simple { l.len() as u32 } else { 1 };
        }
        v
    }

    pub fn feature_f64(&self, simple: bool) -> Vec<f64> {
        let mut v = vec![0.0; self.genes];
        for (g, l) in &self.entries {
            v[*g as usize] = if simple { l.len() as f64 } else { 1.0 };
        }
        v
    }
}

/// Site tables for every canonical word of the requested lengths, built in one
/// sliding-window pass per length.
#[derive(Clone, Debug)]
pub struct WordIndex {
    scale: Scale,
    genes: usize,
    tables: HashMap<MotifWord, SiteTable>,
}

impl WordIndex {
    pub fn build(ps: &PromoterSet, lengths: &[usize], scale: Scale) -> Self {
        let mut tables = HashMap::new();
        for &len in lengths {
            let n_codes = 1usize << (2 * len);
            let mask = (n_codes - 1) as u64;
            let mut per_code: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_codes];
            for (g, p) in ps.iter().enumerate() {
                let mut fwd = 0u64;
                let mut valid = 0usize;
                for (i, &b) in p.bases.iter().enumerate() {
                    match base_code(b) {
                        Some(c) => {
                            fwd = ((fwd << 2) | c) & mask;
                            valid += 1;
                        }
                        None => valid = 0,
                    }
                    if valid >= len {
                        let canon = fwd.min(rc_code(fwd, len));
                        per_code[canon as usize].push((g as u32, scale.scaled(i + 1 - len)));
                    }
                }
            }
            for (code, hits) in per_code.into_iter().enumerate() {
                if hits.is_empty() {
                    continue;
                }
                let mut entries: Vec<(u32, LocationSet)> = Vec::new();
                for (g, pos) in hits {
                    match entries.last_mut() {
                        Some((last, l)) if *last == g => l.0.push(pos),
                        _ => entries.push((g, LocationSet(vec![pos]))),
                    }
                }
                tables.insert(
                    MotifWord::from_code(code as u64, len),
                    SiteTable {
                        genes: ps.len(),
                        entries,
                    },
                );
            }
        }
        WordIndex {
            scale,
            genes: ps.len(),
            tables,
        }
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Sites of a word (any strand); empty when it never occurs.
    pub fn sites(&self, word: &MotifWord) -> SiteTable {
        self.tables
            .get(&word.canonical())
            .cloned()
            .unwrap_or_else(|| SiteTable {
                genes: self.genes,
                entries: Vec::new(),
            })
    }

    pub fn get(&self, word: &MotifWord) -> Option<&SiteTable> {
        self.tables.get(&word.canonical())
    }

    pub fn genes(&self) -> usize {
        self.genes
    }

    /// Sites of an arbitrary element, built from the cached word tables.
    pub fn element_sites(&self, e: &PromoterElement) -> SiteTable {
        match e {
            PromoterElement::Simple(w) => self.sites(w),
            PromoterElement::Composite(a, b, d) => {
                self.element_sites(a)
                    .pair_with(&self.element_sites(b), *d, self.scale)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> MotifWord {
        MotifWord::new(s).unwrap()
    }

    fn el(s: &str) -> PromoterElement {
        s.parse().unwrap()
    }

    #[test]
    fn reverse_complement_examples() {
        assert_eq!(w("TTGAC").reverse_complement(), w("GTCAA"));
        assert_eq!(w("ACGCGT").reverse_complement(), w("ACGCGT"));
        assert_eq!(w("AAAAA").reverse_complement(), w("TTTTT"));
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(w("GTCAA").canonical(), w("GTCAA"));
        assert_eq!(w("TTGAC").canonical(), w("GTCAA"));
        assert_eq!(w("ACGCGT").canonical(), w("ACGCGT"));
    }

    #[test]
    fn word_rejects_ambiguity_codes() {
        assert!(MotifWord::new("ACGN").is_err());
        assert!(MotifWord::new("").is_err());
        assert!(MotifWord::new("acgt").is_err());
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_words(1).unwrap().len(), 2);
        assert_eq!(enumerate_words(5).unwrap().len(), 512);
        assert_eq!(enumerate_words(6).unwrap().len(), 2080);
        assert!(enumerate_words(0).is_err());
        assert!(enumerate_words(-3).is_err());
        for l in 1..=8 {
            assert_eq!(enumerate_words(l).unwrap().len() as u64, canonical_word_count(l as usize));
        }
    }

    #[test]
    fn enumeration_is_canonical_and_sorted() {
        let words = enumerate_words(4).unwrap();
        assert!(words.iter().all(MotifWord::is_canonical));
        assert!(words.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn locate_examples() {
        let s = Scale::new(0);
        let p = Promoter::new("g", "GTCAAT");
        assert_eq!(locate_word(&w("TTGAC"), &p.bases, s).as_slice(), &[0]);
        let p = Promoter::new("g", "AAAAAA");
        assert_eq!(locate_word(&w("AAAA"), &p.bases, s).as_slice(), &[0, 1, 2]);
        // palindrome counted once per position
        let p = Promoter::new("g", "TACGCGTA");
        assert_eq!(locate_word(&w("ACGCGT"), &p.bases, s).as_slice(), &[1]);
    }

    #[test]
    fn composite_pairing_example() {
        let s = Scale::new(0);
        let a = LocationSet::from_unsorted(vec![10]);
        let b = LocationSet::from_unsorted(vec![30]);
        assert_eq!(a.pair_with(&b, 30, s).as_slice(), &[20]);
        assert!(a.pair_with(&b, 10, s).is_empty());
    }

    #[test]
    fn ambiguity_never_matches() {
        let s = Scale::new(0);
        let p = Promoter::new("g", "AANAAAA");
        assert_eq!(locate_word(&w("AAA"), &p.bases, s).as_slice(), &[3, 4]);
        let ps = PromoterSet::new(vec![p]).unwrap();
        let idx = WordIndex::build(&ps, &[3], s);
        assert_eq!(idx.sites(&w("AAA")).feature_values(true), vec![2]);
    }

    #[test]
    fn count_feature_examples() {
        let s = Scale::new(2);
        let ps = PromoterSet::new(vec![
            Promoter::new("a", "AAAAAA"),
            Promoter::new("b", "CCCCCC"),
        ])
        .unwrap();
        let f = count_feature(&el("AAAA"), &ps, s);
        assert_eq!(f.values, vec![3, 0]);
        assert_eq!(f.tau, 1);

        let ps = PromoterSet::new(vec![Promoter::new("a", "ACGTTACGTT")]).unwrap();
        let f = count_feature(&el("(ACG,ACG,5)"), &ps, s);
        assert_eq!(f.values, vec![1]);

        let f = count_feature(&el("GGGGG"), &ps, s);
        assert_eq!((f.values.clone(), f.tau), (vec![0], 0));
    }

    #[test]
    fn order_examples() {
        assert_eq!(el("CGCGT").order(), 0);
        assert_eq!(el("(CGCGT,CGCGT,30)").order(), 1);
        assert_eq!(el("((AAC,AAG,30),(ACC,ACT,100),400)").order(), 3);
    }

    #[test]
    fn min_distance_examples() {
        let s = Scale::new(1);
        // A(e1) = {5, 100}, A(e2) = {50}
        let mut bases = vec![b'C'; 120];
        bases[5..8].copy_from_slice(b"AAT");
        bases[100..103].copy_from_slice(b"AAT");
        bases[50..53].copy_from_slice(b"AGT");
        let p = Promoter::new("g", &bases);
        assert_eq!(min_pair_distance(&el("AAT"), &el("AGT"), &p, s), 45.0);
        assert_eq!(min_pair_distance(&el("GAGAG"), &el("AGT"), &p, s), f64::INFINITY);
        let p = Promoter::new("g", "CCCCCCCAATCC");
        assert_eq!(min_pair_distance(&el("AAT"), &el("AAT"), &p, s), 0.0);
    }

    #[test]
    fn parse_and_print() {
        for s in ["CGCGT", "(TTTCCTA,TTGTTT,400)", "((A,C,1),G,1000)"] {
            assert_eq!(el(s).to_string(), s);
        }
        for bad in ["", "(A,C)", "(A,C,0)", "(A,C,07)", "(A, C,3)", "acg", "(A,C,3", "A)"] {
            assert!(bad.parse::<PromoterElement>().is_err(), "{bad}");
        }
    }

    #[test]
    fn tie_order_prefers_low_order_then_narrow_distance() {
        let a = el("(AAC,AAG,50)");
        let b = el("(AAC,AAG,200)");
        assert_eq!(a.tie_order(&b), Ordering::Less);
        assert_eq!(el("TTTTTTT").tie_order(&a), Ordering::Less);
    }

    fn word_strategy(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = MotifWord> {
        proptest::collection::vec(prop::sample::select(vec!['A', 'C', 'G', 'T']), len)
            .prop_map(|v| MotifWord::new(&v.into_iter().collect::<String>()).unwrap())
    }

    fn seq_strategy(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(prop::sample::select(b"ACGT".to_vec()), len)
    }

    fn brute_pairs(a: &[u32], b: &[u32], reach: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for &i in a {
            for &j in b {
                if i.abs_diff(j) <= reach {
                    out.push((i + j) / 2);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    proptest! {
        #[test]
        fn rc_is_involution(word in word_strategy(1..=12)) {
            prop_assert_eq!(word.reverse_complement().reverse_complement(), word);
        }

        #[test]
        fn canonical_is_strand_invariant(word in word_strategy(1..=12)) {
            prop_assert_eq!(word.canonical(), word.reverse_complement().canonical());
            prop_assert_eq!(word.canonical().canonical(), word.canonical());
        }

        #[test]
        fn composite_matches_brute_force(
            seq in seq_strategy(20..200),
            w1 in word_strategy(2..=3),
            w2 in word_strategy(2..=3),
            d1 in 1u32..40,
            d2 in 1u32..80,
        ) {
            let scale = Scale::new(2);
            let p = Promoter::new("g", &seq);
            let inner = PromoterElement::composite(PromoterElement::Simple(w1.clone()), PromoterElement::Simple(w2.clone()), d1);
            let outer = PromoterElement::composite(inner.clone(), PromoterElement::Simple(w1.clone()), d2);
            let a = locate_word(&w1, &p.bases, scale);
            let b = locate_word(&w2, &p.bases, scale);
            let brute_inner = brute_pairs(a.as_slice(), b.as_slice(), d1 << 2);
            let got_inner = locate_element(&inner, &p, scale);
            prop_assert_eq!(got_inner.as_slice(), brute_inner.as_slice());
            let brute_outer = brute_pairs(&brute_inner, a.as_slice(), d2 << 2);
            let got = locate_element(&outer, &p, scale);
            prop_assert_eq!(got.as_slice(), brute_outer.as_slice());
            // depth-1 midpoints stay on the 2^(shift - 1) grid
            prop_assert!(got_inner.iter().all(|v| v % 2 == 0));
            prop_assert!(got.as_slice().windows(2).all(|x| x[0] < x[1]));
        }

        #[test]
        fn order_one_indicator_matches_min_distance(
            seq in seq_strategy(10..150),
            w1 in word_strategy(2..=3),
            w2 in word_strategy(2..=3),
            d in 1u32..60,
        ) {
            let scale = Scale::new(1);
            let p = Promoter::new("g", &seq);
            let (e1, e2) = (PromoterElement::Simple(w1), PromoterElement::Simple(w2));
            let comp = PromoterElement::composite(e1.clone(), e2.clone(), d);
            let present = !locate_element(&comp, &p, scale).is_empty();
            prop_assert_eq!(present, min_pair_distance(&e1, &e2, &p, scale) <= d as f64);
        }

        #[test]
        fn word_index_matches_direct_scan(
            seqs in proptest::collection::vec(seq_strategy(1..60), 1..8),
            word in word_strategy(3..=3),
        ) {
            let scale = Scale::new(2);
            let ps = PromoterSet::new(seqs.iter().enumerate().map(|(i, s)| Promoter::new(format!("g{i}"), s)).collect()).unwrap();
            let idx = WordIndex::build(&ps, &[3], scale);
            let e = PromoterElement::Simple(word.clone());
            prop_assert_eq!(idx.sites(&word), SiteTable::locate(&e, &ps, scale));
            prop_assert_eq!(
                count_feature(&e, &ps, scale).values,
                count_feature(&PromoterElement::Simple(word.reverse_complement()), &ps, scale).values
            );
        }
    }
}
