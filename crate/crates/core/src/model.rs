//! Step B: forward selection over an adaptively expanding element pool.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::regression::{
    candidate_score, degeneracy_threshold, norm_sq, weighted_loss_with, OrthoBasis,
};
use crate::sequence::{PromoterElement, SiteTable, WordIndex};

/// Relative loss improvement below which the build stops early.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Distance set, ascending.
    pub deltas: Vec<u32>,
    /// Maximum number of forward steps.
    pub budget: usize,
    pub max_order: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("model budget must be at least 1".into()));
        }
        if self.deltas.is_empty() || self.deltas.contains(&0) {
            return Err(Error::Config("distance set must hold positive values".into()));
        }
        if self.deltas.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config("distance set must be strictly ascending".into()));
        }
        if !(1..=3).contains(&self.max_order) {
            return Err(Error::Config("max order must be 1, 2 or 3".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct PoolEntry {
    element: PromoterElement,
    sites: SiteTable,
    /// Column residualized against the first `projected` basis vectors.
    xi: Vec<f64>,
    projected: usize,
    active: bool,
}

impl PoolEntry {
    fn new(element: PromoterElement, sites: SiteTable) -> Self {
        let xi = sites.feature_f64(element.is_simple());
        PoolEntry {
            element,
            sites,
            xi,
            projected: 0,
            active: true,
        }
    }
}

/// Candidate elements plus the skip-list of those found degenerate.
#[derive(Clone, Debug, Default)]
pub struct CandidatePool {
    entries: Vec<PoolEntry>,
    members: HashSet<PromoterElement>,
    skipped: Vec<(PromoterElement, String)>,
}

impl CandidatePool {
    pub fn from_dictionary(dict: &Dictionary, index: &WordIndex) -> Self {
        let mut pool = CandidatePool::default();
        for w in dict.words() {
            pool.insert(PromoterElement::simple(w.clone()), index.sites(w));
        }
        pool
    }

    fn insert(&mut self, element: PromoterElement, sites: SiteTable) -> bool {
        if self.members.contains(&element) {
            return false;
        }
        self.members.insert(element.clone());
        self.entries.push(PoolEntry::new(element, sites));
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, e: &PromoterElement) -> bool {
        self.members.contains(e)
    }

    pub fn elements(&self) -> impl Iterator<Item = &PromoterElement> {
        self.entries.iter().map(|e| &e.element)
    }

    pub fn skipped(&self) -> &[(PromoterElement, String)] {
        &self.skipped
    }

    pub fn active(&self) -> usize {
        self.entries.iter().filter(|e| e.active).count()
    }

    /// Brings every cached column up to date with `basis` and retires the ones
    /// that fall into its span.
    fn sync(&mut self, basis: &OrthoBasis) {
        let threshold = degeneracy_threshold(basis.len());
        self.entries.par_iter_mut().filter(|e| e.active).for_each(|e| {
            basis.project_out_from(&mut e.xi, e.projected);
            e.projected = basis.rank();
        });
        for e in self.entries.iter_mut().filter(|e| e.active) {
            if norm_sq(&e.xi).sqrt() <= threshold {
                e.active = false;
                let reason = if e.sites.tau() == 0 {
                    "never occurs"
                } else {
                    "in span of current model"
                };
                self.skipped.push((e.element.clone(), reason.into()));
            }
        }
    }
}

/// Adds `(e*, w, delta)` for every dictionary word and distance when the
/// order cap allows. Returns the number of new candidates.
pub fn expand_pool(
    pool: &mut CandidatePool,
    selected: &PromoterElement,
    selected_sites: &SiteTable,
    dict: &Dictionary,
    deltas: &[u32],
    max_order: usize,
    index: &WordIndex,
) -> usize {
    if selected.order() >= max_order {
        return 0;
    }
    let mut added = 0;
    for w in dict.words() {
        let word_sites = index.sites(w);
        for &d in deltas {
            let e = PromoterElement::composite(selected.clone(), PromoterElement::simple(w.clone()), d);
            if pool.contains(&e) {
                continue;
            }
            debug_assert!(index.scale().covers(&e));
            let sites = selected_sites.pair_with(&word_sites, d, index.scale());
            if pool.insert(e, sites) {
                added += 1;
            }
        }
    }
    added
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub element: PromoterElement,
    pub order: usize,
    pub tau: usize,
    pub weighted_loss: f64,
}

/// Elements in selection order with their feature columns and the loss
/// trajectory.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    pub rows: Vec<TrajectoryRow>,
    pub columns: Vec<Vec<f64>>,
    pub sites: Vec<SiteTable>,
    /// Loss of the intercept-only model.
    pub initial_loss: f64,
    basis: OrthoBasis,
}

impl ForwardModel {
    pub fn new(genes: usize, scores: &[&[f64]], weights: &[f64]) -> Self {
        let basis = OrthoBasis::with_intercept(genes);
        ForwardModel {
            rows: Vec::new(),
            columns: Vec::new(),
            sites: Vec::new(),
            initial_loss: weighted_loss_with(&basis, scores, weights),
            basis,
        }
    }

    /// Rebuilds a model from a stored element list.
    pub fn from_elements(
        elements: &[PromoterElement],
        index: &WordIndex,
        scores: &[&[f64]],
        weights: &[f64],
    ) -> Self {
        let mut model = ForwardModel::new(index.genes(), scores, weights);
        for e in elements {
            let sites = index.element_sites(e);
            model.append(e.clone(), sites, scores, weights);
        }
        model
    }

    fn append(&mut self, e: PromoterElement, sites: SiteTable, scores: &[&[f64]], weights: &[f64]) {
        let column = sites.feature_f64(e.is_simple());
        self.basis.push(&column);
        let loss = weighted_loss_with(&self.basis, scores, weights);
        self.rows.push(TrajectoryRow {
            step: self.rows.len() + 1,
            order: e.order(),
            tau: sites.tau(),
            element: e,
            weighted_loss: loss,
        });
        self.columns.push(column);
        self.sites.push(sites);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn elements(&self) -> Vec<PromoterElement> {
        self.rows.iter().map(|r| r.element.clone()).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.weighted_loss).collect()
    }

    pub fn trajectory_tsv(&self) -> String {
        let mut out = String::from("step\telement\torder\ttau\tweighted_loss\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.step, r.element, r.order, r.tau, r.weighted_loss
            )
            .unwrap();
        }
        out
    }

    /// Element column of a trajectory dump.
    pub fn parse_trajectory(text: &str, path: &std::path::Path) -> Result<Vec<PromoterElement>> {
        text.lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let field = l
                    .split('\t')
                    .nth(1)
                    .ok_or_else(|| Error::parse(path, i + 1, "missing element column"))?;
                field
                    .parse()
                    .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))
            })
            .collect()
    }
}

fn better(a: (f64, &PromoterElement), b: (f64, &PromoterElement)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.1.tie_order(b.1) == Ordering::Less,
    }
}

/// One forward step. Returns the index of the selected pool entry, or `None`
/// when no viable candidate improves the loss.
pub fn forward_step(
    model: &mut ForwardModel,
    pool: &mut CandidatePool,
    scores: &[&[f64]],
    weights: &[f64],
) -> Option<PromoterElement> {
    pool.sync(&model.basis);
    let residuals: Vec<Vec<f64>> = scores.iter().map(|u| model.basis.residualize(u)).collect();
    let current: f64 = residuals
        .iter()
        .zip(weights)
        .map(|(r, w)| w * w * norm_sq(r))
        .sum();
    let scored: Vec<(f64, usize)> = pool
        .entries
        .par_iter()
        .enumerate()
        .filter(|(_, e)| e.active)
        .filter_map(|(i, e)| candidate_score(&e.xi, &residuals, weights).ok().map(|s| (s, i)))
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for &(s, i) in &scored {
        let replace = match best {
            None => true,
            Some((bs, bi)) => better((s, &pool.entries[i].element), (bs, &pool.entries[bi].element)),
        };
        if replace {
            best = Some((s, i));
        }
    }
    let Some((score, i)) = best else {
        info!("forward selection stopped: no viable candidates");
        return None;
    };
    if score.is_nan() || current - score <= MIN_IMPROVEMENT * current {
        info!("forward selection stopped: best candidate improves loss by {:e}", current - score);
        return None;
    }
    let entry = &mut pool.entries[i];
    entry.active = false;
    let (e, sites) = (entry.element.clone(), entry.sites.clone());
    debug!("step {}: {} (score {score})", model.len() + 1, e);
    model.append(e.clone(), sites, scores, weights);
    Some(e)
}

/// Runs forward selection to the budget or until no candidate helps.
pub fn build_model(
    dict: &Dictionary,
    config: &ModelConfig,
    scores: &[&[f64]],
    weights: &[f64],
    index: &WordIndex,
) -> Result<ForwardModel> {
    config.validate()?;
    if index.scale().shift() < config.max_order as u32 {
        return Err(Error::Config(format!(
            "position scale 2^{} cannot represent order {} midpoints",
            index.scale().shift(),
            config.max_order
        )));
    }
    let mut pool = CandidatePool::from_dictionary(dict, index);
    let mut model = ForwardModel::new(index.genes(), scores, weights);
    while model.len() < config.budget {
        let Some(e) = forward_step(&mut model, &mut pool, scores, weights) else {
            break;
        };
        let sites = model.sites.last().expect("just appended").clone();
        let added = expand_pool(
            &mut pool,
            &e,
            &sites,
            dict,
            &config.deltas,
            config.max_order,
            index,
        );
        debug!("pool expanded by {added} to {}", pool.len());
    }
    Ok(model)
}
