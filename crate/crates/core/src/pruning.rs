//! Step C: backward deletion under weighted GCV or weighted modified BIC.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::ForwardModel;
use crate::regression::dot;
use crate::sequence::{PromoterElement, WordIndex};

/// RSS floor used when a model fits a component perfectly.
pub const RSS_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LofKind {
    Wgcv,
    Wmbic,
}

/// How the `- sum ln tau + ln G` group of the mBIC is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSum {
    /// `- sum_e (ln tau_e - ln G)`
    PerElement,
    /// `- sum_e ln tau_e + ln G`
    #[default]
    Global,
    /// `- sum_e [ln tau_e + ln(G - tau_e) - ln G]`, the per-term penalty of
    /// the single-interaction Bayes factor.
    Bracketed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: LofKind,
    /// Promoter length in nucleotides.
    pub promoter_len: usize,
    pub genes: usize,
    pub tau_sum: TauSum,
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        if self.promoter_len < 2 {
            return Err(Error::Config("promoter length must exceed 1".into()));
        }
        if self.genes < 3 {
            return Err(Error::Config("need at least 3 genes".into()));
        }
        Ok(())
    }
}

/// Degrees of freedom charged for one interaction's distance parameter.
pub fn knot_penalty_gamma(tau: usize, promoter_len: usize, genes: usize) -> Result<f64> {
    if tau == 0 || tau >= genes {
        return Err(Error::DegenerateTau { tau, genes });
    }
    let (t, r, g) = (tau as f64, promoter_len as f64, genes as f64);
    Ok(2.0 * (r.ln() + t.ln() + (g - t).ln() - g.ln()) / g.ln())
}

/// Everything needed to score subsets of a forward model: centered Gram
/// matrix of the element columns and their cross products with each score.
#[derive(Clone, Debug)]
pub struct PruningProblem {
    elements: Vec<PromoterElement>,
    gram: DMatrix<f64>,
    cross: Vec<DVector<f64>>,
    rss0: Vec<f64>,
    weights: Vec<f64>,
    taus: HashMap<PromoterElement, usize>,
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| a - m).collect()
}

impl PruningProblem {
    pub fn new(
        elements: Vec<PromoterElement>,
        columns: &[Vec<f64>],
        taus: HashMap<PromoterElement, usize>,
        scores: &[&[f64]],
        weights: &[f64],
    ) -> Self {
        let cols: Vec<Vec<f64>> = columns.iter().map(|c| centered(c)).collect();
        let n = cols.len();
        let gram = DMatrix::from_fn(n, n, |i, j| dot(&cols[i], &cols[j]));
        let us: Vec<Vec<f64>> = scores.iter().map(|u| centered(u)).collect();
        let cross = us
            .iter()
            .map(|u| DVector::from_iterator(n, cols.iter().map(|c| dot(c, u))))
            .collect();
        PruningProblem {
            elements,
            gram,
            cross,
            rss0: us.iter().map(|u| dot(u, u)).collect(),
            weights: weights.to_vec(),
            taus,
        }
    }

    /// Collects columns and the tau of every element and interaction.
    pub fn from_model(
        model: &ForwardModel,
        index: &WordIndex,
        scores: &[&[f64]],
        weights: &[f64],
    ) -> Self {
        let elements = model.elements();
        let mut taus = HashMap::new();
        for (e, row) in elements.iter().zip(&model.rows) {
            taus.insert(e.clone(), row.tau);
            for sub in e.interactions() {
                if !taus.contains_key(sub) {
                    taus.insert(sub.clone(), index.element_sites(sub).tau());
                }
            }
        }
        PruningProblem::new(elements, &model.columns, taus, scores, weights)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PromoterElement] {
        &self.elements
    }

    /// Per-component RSS of the least-squares fit on the intercept plus the
    /// chosen elements.
    pub fn rss(&self, subset: &[usize]) -> Vec<f64> {
        if subset.is_empty() {
            return self.rss0.clone();
        }
        let k = subset.len();
        let g = DMatrix::from_fn(k, k, |i, j| self.gram[(subset[i], subset[j])]);
        let chol = g.cholesky();
        self.cross
            .iter()
            .zip(&self.rss0)
            .map(|(b, rss0)| {
                let bs = DVector::from_iterator(k, subset.iter().map(|&i| b[i]));
                let explained = match &chol {
                    Some(c) => bs.dot(&c.solve(&bs)),
                    None => {
                        let pinv = DMatrix::from_fn(k, k, |i, j| self.gram[(subset[i], subset[j])])
                            .pseudo_inverse(1e-12)
                            .expect("pseudo-inverse of a symmetric matrix");
                        bs.dot(&(pinv * &bs))
                    }
                };
                (rss0 - explained).max(0.0)
            })
            .collect()
    }

    fn tau(&self, e: &PromoterElement) -> Result<usize> {
        self.taus
            .get(e)
            .copied()
            .ok_or_else(|| Error::Input(format!("no tau recorded for {e}")))
    }

    /// Distinct interactions across the chosen elements.
    fn interactions(&self, subset: &[usize]) -> Vec<&PromoterElement> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &i in subset {
            for sub in self.elements[i].interactions() {
                if seen.insert(sub) {
                    out.push(sub);
                }
            }
        }
        out
    }

    pub fn wgcv(&self, subset: &[usize], spec: &PenaltySpec) -> Result<f64> {
        let g = spec.genes as f64;
        let mut d = subset.len() as f64 + 1.0;
        for e in self.interactions(subset) {
            d += knot_penalty_gamma(self.tau(e)?, spec.promoter_len, spec.genes)?;
        }
        if d >= g {
            return Ok(f64::INFINITY);
        }
        let loss: f64 = self
            .rss(subset)
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * w * r)
            .sum();
        Ok(loss / (1.0 - d / g).powi(2))
    }

    /// Per-component mBIC, shifted so the intercept-only model scores 0.
    pub fn mbic(&self, subset: &[usize], spec: &PenaltySpec) -> Result<Vec<f64>> {
        if subset.is_empty() {
            return Ok(vec![0.0; self.weights.len()]);
        }
        let g = spec.genes as f64;
        let d_reg = subset.len() as f64 + 1.0;
        if d_reg >= g {
            return Ok(vec![f64::NEG_INFINITY; self.weights.len()]);
        }
        let mut tau_term = 0.0;
        for &i in subset {
            let t = self.tau(&self.elements[i])?;
            if t == 0 {
                return Err(Error::DegenerateTau { tau: t, genes: spec.genes });
            }
            tau_term += match spec.tau_sum {
                TauSum::PerElement => (t as f64).ln() - g.ln(),
                TauSum::Global => (t as f64).ln(),
                TauSum::Bracketed => {
                    (t as f64).ln() + (spec.genes.saturating_sub(t).max(1) as f64).ln() - g.ln()
                }
            };
        }
        let d_knot = self.interactions(subset).len() as f64;
        let knot_term = d_knot * (spec.promoter_len as f64).ln();
        let gamma_term = ln_gamma((g - d_reg + 1.0) / 2.0) - ln_gamma(g / 2.0);
        Ok(self
            .rss(subset)
            .into_iter()
            .zip(&self.rss0)
            .map(|(rss, rss0)| {
                let rss = if rss <= 0.0 {
                    warn!("perfect fit: RSS clamped to {RSS_FLOOR:e}");
                    RSS_FLOOR
                } else {
                    rss
                };
                0.5 * (g - d_reg + 1.0) * (rss0 / rss).ln()
                    + gamma_term
                    + 0.5 * (d_reg - 1.0) * rss0.ln()
                    - tau_term
                    - knot_term
            })
            .collect())
    }

    /// Weighted mBIC with the sign flipped so that lower is better.
    pub fn wmbic(&self, subset: &[usize], spec: &PenaltySpec) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        let m = self.mbic(subset, spec)?;
        Ok(-m
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * w * b)
            .sum::<f64>())
    }

    pub fn lof(&self, subset: &[usize], spec: &PenaltySpec) -> Result<f64> {
        match spec.kind {
            LofKind::Wgcv => self.wgcv(subset, spec),
            LofKind::Wmbic => self.wmbic(subset, spec),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    /// Element removed to reach this size; `None` for the full model.
    pub deleted: Option<PromoterElement>,
    pub lof: f64,
    pub surviving: Vec<PromoterElement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LofCurve {
    /// Points from the full model downwards.
    pub points: Vec<CurvePoint>,
    pub m_star: usize,
}

impl LofCurve {
    pub fn selected(&self) -> &[PromoterElement] {
        &self
            .points
            .iter()
            .find(|p| p.m == self.m_star)
            .expect("m* is on the curve")
            .surviving
    }

    pub fn min_lof(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.lof)
            .fold(f64::INFINITY, f64::min)
    }

    /// All elements ranked by reverse pruning order (rank 1 survives longest).
    pub fn ranking(&self) -> Vec<(usize, PromoterElement)> {
        let mut ranked = Vec::new();
        for p in &self.points {
            if let Some(e) = &p.deleted {
                ranked.push((p.m + 1, e.clone()));
            }
        }
        if let Some(last) = self.points.last() {
            for (i, e) in last.surviving.iter().enumerate() {
                ranked.push((i + 1, e.clone()));
            }
        }
        ranked.sort_by_key(|(r, _)| *r);
        ranked
    }

    /// Rebuilds a curve from its dump and the full forward model.
    pub fn from_tsv(text: &str, full: &[PromoterElement], path: &std::path::Path) -> Result<Self> {
        let mut surviving = full.to_vec();
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::parse(path, i + 1, reason);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad("expected 3 columns".into()));
            }
            let m: usize = f[0].parse().map_err(|_| bad(format!("bad size {:?}", f[0])))?;
            let lof: f64 = f[2].parse().map_err(|_| bad(format!("bad lof {:?}", f[2])))?;
            let deleted = if f[1] == "-" {
                None
            } else {
                let e: PromoterElement = f[1].parse().map_err(|e: Error| bad(e.to_string()))?;
                let k = surviving
                    .iter()
                    .position(|x| *x == e)
                    .ok_or_else(|| bad(format!("{e} is not in the model")))?;
                surviving.remove(k);
                Some(e)
            };
            if surviving.len() != m {
                return Err(bad(format!("size {m} does not match {} surviving elements", surviving.len())));
            }
            points.push(CurvePoint {
                m,
                deleted,
                lof,
                surviving: surviving.clone(),
            });
        }
        let m_star = points
            .iter()
            .min_by(|a, b| a.lof.total_cmp(&b.lof).then(a.m.cmp(&b.m)))
            .map(|p| p.m)
            .ok_or_else(|| Error::parse(path, 1, "empty lof curve"))?;
        Ok(LofCurve { points, m_star })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("m\tdeleted_element\tlof\n");
        for p in &self.points {
            let d = p.deleted.as_ref().map_or("-".to_string(), |e| e.to_string());
            writeln!(out, "{}\t{}\t{}", p.m, d, p.lof).unwrap();
        }
        out
    }
}

/// Greedy backward deletion from the full forward model, recording the
/// lack-of-fit at every size.
pub fn prune_backward(problem: &PruningProblem, spec: &PenaltySpec) -> Result<LofCurve> {
    spec.validate()?;
    if problem.is_empty() {
        return Err(Error::Input("cannot prune an empty model".into()));
    }
    let lowest = match spec.kind {
        LofKind::Wgcv => 1,
        LofKind::Wmbic => 0,
    };
    let mut current: Vec<usize> = (0..problem.len()).collect();
    let names = |s: &[usize]| s.iter().map(|&i| problem.elements[i].clone()).collect();
    let mut points = vec![CurvePoint {
        m: current.len(),
        deleted: None,
        lof: problem.lof(&current, spec)?,
        surviving: names(&current),
    }];
    while current.len() > lowest {
        let trials: Vec<(f64, usize)> = (0..current.len())
            .into_par_iter()
            .map(|k| {
                let mut s = current.clone();
                s.remove(k);
                problem.lof(&s, spec).map(|l| (l, k))
            })
            .collect::<Result<_>>()?;
        let (lof, k) = trials
            .into_iter()
            .min_by(|a, b| {
                a.0.total_cmp(&b.0).then_with(|| {
                    let (ea, eb) = (&problem.elements[current[a.1]], &problem.elements[current[b.1]]);
                    ea.tie_order(eb)
                })
            })
            .expect("non-empty model");
        let removed = current.remove(k);
        points.push(CurvePoint {
            m: current.len(),
            deleted: Some(problem.elements[removed].clone()),
            lof,
            surviving: names(&current),
        });
    }
    let m_star = points
        .iter()
        .min_by(|a, b| match a.lof.total_cmp(&b.lof) {
            Ordering::Equal => a.m.cmp(&b.m),
            o => o,
        })
        .map(|p| p.m)
        .expect("curve has points");
    Ok(LofCurve { points, m_star })
}
