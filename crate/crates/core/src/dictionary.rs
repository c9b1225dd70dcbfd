//! Step A: per-component greedy filtering of the exhaustive word list.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{slope_significance, OrthoBasis};
use crate::sequence::{MotifWord, SiteTable, WordIndex};

/// Where a dictionary word came from: basis component (1-based) and halving
/// round (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub component: usize,
    pub round: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    words: Vec<MotifWord>,
    provenance: Vec<Vec<Provenance>>,
}

impl Dictionary {
    pub fn words(&self) -> &[MotifWord] {
        &self.words
    }

    pub fn provenance(&self, i: usize) -> &[Provenance] {
        &self.provenance[i]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, w: &MotifWord) -> bool {
        let c = w.canonical();
        self.words.contains(&c)
    }

    /// One row per (word, provenance) pair.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("word\tcomponent\tround\n");
        for (w, prov) in self.words.iter().zip(&self.provenance) {
            for p in prov {
                writeln!(out, "{w}\t{}\t{}", p.component, p.round).unwrap();
            }
        }
        out
    }

    pub fn from_tsv(text: &str, path: &std::path::Path) -> Result<Self> {
        let mut lists: Vec<(usize, Vec<(MotifWord, usize)>)> = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse(path, i + 1, "expected 3 columns"));
            }
            let word = MotifWord::new(f[0]).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad integer {s:?}")))
            };
            let (component, round) = (num(f[1])?, num(f[2])?);
            match lists.iter_mut().find(|(c, _)| *c == component) {
                Some((_, l)) => l.push((word, round)),
                None => lists.push((component, vec![(word, round)])),
            }
        }
        Ok(merge_dictionaries(&lists))
    }
}

/// Dense count column of a word table.
fn count_column(t: &SiteTable) -> Vec<f64> {
    t.feature_f64(true)
}

/// Halving-schedule greedy filter for one score vector. Returns the selected
/// words with the round each entered, in entry order.
pub fn build_component_dictionary(
    u: &[f64],
    candidates: &[MotifWord],
    batch: usize,
    index: &WordIndex,
) -> Result<Vec<(MotifWord, usize)>> {
    if batch == 0 {
        return Err(Error::Config("dictionary batch size must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Input("no candidate words".into()));
    }
    let genes = u.len();
    let mut pool: Vec<MotifWord> = candidates.iter().map(MotifWord::canonical).collect();
    pool.sort();
    pool.dedup();
    let tables: Vec<Option<&SiteTable>> = pool.iter().map(|w| index.get(w)).collect();

    let mut basis = OrthoBasis::with_intercept(genes);
    let mut chosen: Vec<(MotifWord, usize)> = Vec::new();
    let mut taken: HashSet<usize> = HashSet::new();
    let mut m = batch;
    let mut round = 0;
    while m > 0 {
        round += 1;
        if basis.rank() + 2 > genes {
            debug!("dictionary: design saturated at round {round}");
            break;
        }
        let df = genes - basis.rank() - 1;
        let r = basis.residualize(u);
        let mut ranked: Vec<(f64, usize)> = (0..pool.len())
            .into_par_iter()
            .filter(|i| !taken.contains(i))
            .filter_map(|i| {
                let t = tables[i]?;
                let xi = basis.residualize(&count_column(t));
                slope_significance(&r, &xi, df).ok().map(|s| (s.t.abs(), i))
            })
            .collect();
        // pool is sorted, so the index breaks ties lexicographically
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        if ranked.len() < m {
            debug!(
                "dictionary: round {round} wanted {m} words, {} viable",
                ranked.len()
            );
        }
        for &(_, i) in ranked.iter().take(m) {
            taken.insert(i);
            basis.push(&count_column(tables[i].expect("viable word has sites")));
            chosen.push((pool[i].clone(), round));
        }
        m /= 2;
    }
    Ok(chosen)
}

/// Union in first-seen order; provenance accumulates.
pub fn merge_dictionaries(lists: &[(usize, Vec<(MotifWord, usize)>)]) -> Dictionary {
    let mut dict = Dictionary::default();
    let mut pos: HashMap<MotifWord, usize> = HashMap::new();
    for (component, list) in lists {
        for (w, round) in list {
            let w = w.canonical();
            let p = Provenance {
                component: *component,
                round: *round,
            };
            match pos.get(&w) {
                Some(&i) => {
                    if !dict.provenance[i].contains(&p) {
                        dict.provenance[i].push(p);
                    }
                }
                None => {
                    pos.insert(w.clone(), dict.words.len());
                    dict.words.push(w);
                    dict.provenance.push(vec![p]);
                }
            }
        }
    }
    dict
}
