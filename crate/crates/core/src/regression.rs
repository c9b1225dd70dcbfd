//! Least-squares kernels shared by dictionary construction, model building and pruning.
//!
//! All projections go through [`OrthoBasis`], a Gram-Schmidt QR with
//! re-orthogonalization that drops columns whose residual norm falls below
//! `RANK_TOL` times the largest column norm seen so far.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::expression::ExpressionMatrix;

pub const RANK_TOL: f64 = 1e-10;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Threshold below which a residualized covariate is treated as degenerate.
pub fn degeneracy_threshold(genes: usize) -> f64 {
    1e-8 * (genes as f64).sqrt()
}

/// Orthonormal basis of a growing design's column space.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    len: usize,
    q: Vec<Vec<f64>>,
    /// Per pushed design column: its coordinates on `q` (upper triangular), or
    /// `None` when the column was linearly dependent.
    r: Vec<Option<Vec<f64>>>,
    max_norm: f64,
}

impl OrthoBasis {
    pub fn new(len: usize) -> Self {
        OrthoBasis {
            len,
            q: Vec::new(),
            r: Vec::new(),
            max_norm: 0.0,
        }
    }

    pub fn with_intercept(len: usize) -> Self {
        let mut b = OrthoBasis::new(len);
        b.push(&vec![1.0; len]);
        b
    }

    pub fn from_columns<'a>(len: usize, columns: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut b = OrthoBasis::new(len);
        for c in columns {
            b.push(c);
        }
        b
    }

    /// Number of observations (rows).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Achieved rank.
    pub fn rank(&self) -> usize {
        self.q.len()
    }

    pub fn columns(&self) -> usize {
        self.r.len()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.q[i]
    }

    /// Appends a design column. Returns false when it adds no new direction.
    pub fn push(&mut self, x: &[f64]) -> bool {
        assert_eq!(x.len(), self.len, "column length mismatch");
        let norm = norm_sq(x).sqrt();
        self.max_norm = self.max_norm.max(norm);
        let mut v = x.to_vec();
        let mut coords = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (i, q) in self.q.iter().enumerate() {
                let c = dot(q, &v);
                coords[i] += c;
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let resid = norm_sq(&v).sqrt();
        if resid <= RANK_TOL * self.max_norm || resid == 0.0 {
            self.r.push(None);
            return false;
        }
        v.iter_mut().for_each(|a| *a /= resid);
        coords.push(resid);
        self.q.push(v);
        self.r.push(Some(coords));
        true
    }

    /// Removes the projection of `v` onto the column space, in place.
    pub fn project_out(&self, v: &mut [f64]) {
        for _ in 0..2 {
            self.project_out_from(v, 0);
        }
    }

    /// One Gram-Schmidt sweep over basis vectors `start..`.
    pub fn project_out_from(&self, v: &mut [f64], start: usize) {
        for q in &self.q[start..] {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }

    pub fn residualize(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.project_out(&mut out);
        out
    }

    /// Least-squares coefficients per pushed column; dependent columns get 0.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let qty: Vec<f64> = self.q.iter().map(|q| dot(q, y)).collect();
        let kept: Vec<(usize, &Vec<f64>)> = self
            .r
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.as_ref().map(|r| (k, r)))
            .collect();
        let mut beta = vec![0.0; self.r.len()];
        // kept[i] owns q_i; back-substitute
        for i in (0..kept.len()).rev() {
            let mut s = qty[i];
            for (col, r) in kept.iter().skip(i + 1) {
                s -= r[i] * beta[*col];
            }
            beta[kept[i].0] = s / kept[i].1[i];
        }
        beta
    }
}

/// Result of an ordinary least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub rank: usize,
}

pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> FitResult {
    let basis = OrthoBasis::from_columns(y.len(), columns.iter().map(Vec::as_slice));
    let residuals = basis.residualize(y);
    FitResult {
        coefficients: basis.coefficients(y),
        rss: norm_sq(&residuals),
        residuals,
        rank: basis.rank(),
    }
}

/// `v` minus its orthogonal projection onto the span of `design`.
///
/// The design is expected to carry the all-ones intercept column.
pub fn residualize(design: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    OrthoBasis::from_columns(v.len(), design.iter().map(Vec::as_slice)).residualize(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeTest {
    pub t: f64,
    pub p: f64,
}

/// t-test for the no-intercept regression of `r` on `xi`.
pub fn slope_significance(r: &[f64], xi: &[f64], df: usize) -> Result<SlopeTest> {
    let xx = norm_sq(xi);
    let threshold = degeneracy_threshold(xi.len());
    if xx.sqrt() <= threshold {
        return Err(Error::DegenerateCovariate {
            norm: xx.sqrt(),
            threshold,
        });
    }
    let df = df.max(1);
    let beta = dot(r, xi) / xx;
    let sse: f64 = r
        .iter()
        .zip(xi)
        .map(|(a, b)| (a - beta * b).powi(2))
        .sum();
    let t = if beta == 0.0 {
        0.0
    } else if sse <= 0.0 {
        f64::INFINITY.copysign(beta)
    } else {
        beta / (sse / df as f64 / xx).sqrt()
    };
    Ok(SlopeTest {
        t,
        p: t_two_sided(t, df as f64),
    })
}

pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    (2.0 * dist.sf(t.abs())).clamp(f64::MIN_POSITIVE, 1.0)
}

/// `sum_j w_j^2 ||u_j - X b_j||^2` with each `b_j` the least-squares fit.
pub fn weighted_loss(design: &[Vec<f64>], scores: &[&[f64]], weights: &[f64]) -> f64 {
    let n = scores.first().map_or(0, |s| s.len());
    let basis = OrthoBasis::from_columns(n, design.iter().map(Vec::as_slice));
    weighted_loss_with(&basis, scores, weights)
}

pub fn weighted_loss_with(basis: &OrthoBasis, scores: &[&[f64]], weights: &[f64]) -> f64 {
    scores
        .iter()
        .zip(weights)
        .map(|(u, w)| w * w * norm_sq(&basis.residualize(u)))
        .sum()
}

/// Loss after adding `xi` to a model whose component residuals are `residuals`.
/// Lower is better.
pub fn candidate_score(xi: &[f64], residuals: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    let xx = norm_sq(xi);
    let threshold = degeneracy_threshold(xi.len());
    if xx.sqrt() <= threshold {
        return Err(Error::DegenerateCovariate {
            norm: xx.sqrt(),
            threshold,
        });
    }
    Ok(residuals
        .iter()
        .zip(weights)
        .map(|(r, w)| {
            let rx = dot(r, xi);
            w * w * (norm_sq(r) - rx * rx / xx)
        })
        .sum())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Correlation of a feature column with every sample of `y`.
pub fn effect_curve(feature: &[f64], y: &ExpressionMatrix) -> Result<Vec<f64>> {
    let first = feature.first().copied().unwrap_or(0.0);
    if feature.iter().all(|&v| v == first) {
        return Err(Error::ConstantFeature);
    }
    Ok(y.values
        .column_iter()
        .map(|col| {
            let col: Vec<f64> = col.iter().copied().collect();
            pearson(feature, &col).unwrap_or(0.0)
        })
        .collect())
}
