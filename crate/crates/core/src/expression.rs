//! Expression matrix preprocessing and principal-component basis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `G x T` matrix of log2 intensities, rows aligned with the promoter set.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    pub values: DMatrix<f64>,
    pub gene_ids: Vec<String>,
    pub sample_labels: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(
        values: DMatrix<f64>,
        gene_ids: Vec<String>,
        sample_labels: Vec<String>,
    ) -> Result<Self> {
        if values.nrows() != gene_ids.len() || values.ncols() != sample_labels.len() {
            return Err(Error::Input(format!(
                "matrix is {}x{} but {} gene ids and {} sample labels were given",
                values.nrows(),
                values.ncols(),
                gene_ids.len(),
                sample_labels.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let (g, t) = (i % values.nrows(), i / values.nrows());
            return Err(Error::Input(format!(
                "non-finite value at gene {} sample {}",
                gene_ids[g], sample_labels[t]
            )));
        }
        Ok(ExpressionMatrix {
            values,
            gene_ids,
            sample_labels,
        })
    }

    pub fn genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    /// Rows reordered by `perm`: row `g` of the result is row `perm[g]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let values = DMatrix::from_fn(self.genes(), self.samples(), |g, t| {
            self.values[(perm[g], t)]
        });
        ExpressionMatrix {
            values,
            gene_ids: perm.iter().map(|&g| self.gene_ids[g].clone()).collect(),
            sample_labels: self.sample_labels.clone(),
        }
    }
}

/// Centers each sample to mean 0 and scales to population variance 1.
pub fn standardize_samples(y: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    let g = y.genes();
    if g < 2 {
        return Err(Error::Input(format!("need at least 2 genes, got {g}")));
    }
    let mut values = y.values.clone();
    for (t, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.iter().sum::<f64>() / g as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / g as f64;
        let scale = mean.abs().max(1.0);
        if var.sqrt() <= 1e-12 * scale {
            return Err(Error::ConstantSample(y.sample_labels[t].clone()));
        }
        let sd = var.sqrt();
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(ExpressionMatrix {
        values,
        gene_ids: y.gene_ids.clone(),
        sample_labels: y.sample_labels.clone(),
    })
}

/// Which principal components serve as the basis. Components are numbered from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSelection {
    Top(usize),
    Components(Vec<usize>),
}

impl Default for BasisSelection {
    fn default() -> Self {
        BasisSelection::Top(1)
    }
}

/// One selected basis direction with its weight and unit-norm score vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisComponent {
    /// 1-based principal component number.
    pub index: usize,
    pub loading: Vec<f64>,
    /// `||Y v||^2`
    pub weight: f64,
    /// `Y v / sqrt(weight)`
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet {
    pub components: Vec<BasisComponent>,
    /// All singular values, non-increasing.
    pub singular_values: Vec<f64>,
}

impl BasisSet {
    pub fn selected(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.index).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn scores(&self) -> Vec<&[f64]> {
        self.components.iter().map(|c| c.scores.as_slice()).collect()
    }

    /// Builds a basis directly from score vectors and weights, bypassing the SVD.
    /// Scores are normalized to unit length.
    pub fn from_scores(scores: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if scores.len() != weights.len() || scores.is_empty() {
            return Err(Error::Input("need one weight per score vector".into()));
        }
        let components = scores
            .into_iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (mut s, w))| {
                let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 || w <= 0.0 {
                    return Err(Error::NullComponent { index: i + 1 });
                }
                s.iter_mut().for_each(|v| *v /= norm);
                Ok(BasisComponent {
                    index: i + 1,
                    loading: Vec::new(),
                    weight: w,
                    scores: s,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let singular_values = components.iter().map(|c| c.weight.sqrt()).collect();
        Ok(BasisSet {
            components,
            singular_values,
        })
    }
}

/// Right singular vectors of `y` as basis, ordered by decreasing singular value.
///
/// Each loading is sign-normalized so that its largest-magnitude entry is positive.
pub fn compute_svd_basis(y: &ExpressionMatrix, selection: &BasisSelection) -> Result<BasisSet> {
    let t = y.samples();
    let svd = y.values.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let wanted: Vec<usize> = match selection {
        BasisSelection::Top(k) => (1..=*k).collect(),
        BasisSelection::Components(c) => c.clone(),
    };
    if wanted.is_empty() {
        return Err(Error::Config("basis selection is empty".into()));
    }
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let tol = largest * (y.genes().max(t) as f64) * f64::EPSILON;

    let mut components = Vec::with_capacity(wanted.len());
    for &idx in &wanted {
        if idx == 0 || idx > t {
            return Err(Error::Config(format!(
                "component {idx} outside 1..={t}"
            )));
        }
        if idx > singular_values.len() || singular_values[idx - 1] <= tol {
            return Err(Error::NullComponent { index: idx });
        }
        let row = v_t.row(order[idx - 1]);
        let mut loading: Vec<f64> = row.iter().copied().collect();
        let pivot = loading
            .iter()
            .enumerate()
            .fold(0usize, |best, (i, v)| {
                if v.abs() > loading[best].abs() {
                    i
                } else {
                    best
                }
            });
        if loading[pivot] < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
        let projected: Vec<f64> = (0..y.genes())
            .map(|g| (0..t).map(|s| y.values[(g, s)] * loading[s]).sum())
            .collect();
        let weight: f64 = projected.iter().map(|v| v * v).sum();
        if weight <= 0.0 {
            return Err(Error::NullComponent { index: idx });
        }
        let norm = weight.sqrt();
        components.push(BasisComponent {
            index: idx,
            loading,
            weight,
            scores: projected.into_iter().map(|v| v / norm).collect(),
        });
    }
    Ok(BasisSet {
        components,
        singular_values,
    })
}

/// Fraction of total variance carried by each component of the scree.
pub fn variance_explained(b: &BasisSet) -> Vec<f64> {
    let total: f64 = b.singular_values.iter().map(|s| s * s).sum();
    b.singular_values.iter().map(|s| s * s / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> ExpressionMatrix {
        ExpressionMatrix::new(
            DMatrix::from_row_slice(rows, cols, data),
            (0..rows).map(|g| format!("g{g}")).collect(),
            (0..cols).map(|t| format!("t{t}")).collect(),
        )
        .unwrap()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> ExpressionMatrix {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect();
        matrix(rows, cols, &data)
    }

    #[test]
    fn standardize_example() {
        let y = matrix(3, 1, &[1.0, 2.0, 3.0]);
        let s = standardize_samples(&y).unwrap();
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in s.values.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let again = standardize_samples(&s).unwrap();
        for (a, b) in again.values.iter().zip(s.values.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_sample_rejected() {
        let y = matrix(3, 2, &[5.0, 1.0, 5.0, 2.0, 5.0, 3.0]);
        match standardize_samples(&y) {
            Err(Error::ConstantSample(s)) => assert_eq!(s, "t0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagonal_basis() {
        let y = matrix(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let b = compute_svd_basis(&y, &BasisSelection::Top(1)).unwrap();
        let c = &b.components[0];
        assert_abs_diff_eq!(c.loading[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.loading[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.weight, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.scores[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.scores[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn weights_sum_to_frobenius() {
        let y = random(30, 5, 7);
        let b = compute_svd_basis(&y, &BasisSelection::Top(5)).unwrap();
        let total: f64 = b.weights().iter().sum();
        assert_abs_diff_eq!(total, y.values.norm_squared(), epsilon = 1e-9);
    }

    #[test]
    fn reconstruction_from_all_components() {
        let y = random(50, 6, 11);
        let b = compute_svd_basis(&y, &BasisSelection::Top(6)).unwrap();
        for g in 0..50 {
            for t in 0..6 {
                let rebuilt: f64 = b
                    .components
                    .iter()
                    .map(|c| c.weight.sqrt() * c.scores[g] * c.loading[t])
                    .sum();
                assert_abs_diff_eq!(rebuilt, y.values[(g, t)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let y = standardize_samples(&random(80, 7, 3)).unwrap();
        let b = compute_svd_basis(&y, &BasisSelection::Top(7)).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for (i, ci) in b.components.iter().enumerate() {
            assert_abs_diff_eq!(dot(&ci.scores, &ci.scores), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(dot(&ci.loading, &ci.loading), 1.0, epsilon = 1e-9);
            let top = ci.loading.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(top > 0.0);
            for cj in &b.components[i + 1..] {
                assert_abs_diff_eq!(dot(&ci.scores, &cj.scores), 0.0, epsilon = 1e-8);
                assert_abs_diff_eq!(dot(&ci.loading, &cj.loading), 0.0, epsilon = 1e-9);
            }
        }
        assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn variance_fractions() {
        let y = matrix(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let b = compute_svd_basis(&y, &BasisSelection::Top(1)).unwrap();
        let f = variance_explained(&b);
        assert_abs_diff_eq!(f[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 0.1, epsilon = 1e-12);

        let y = matrix(3, 1, &[1.0, -2.0, 1.0]);
        let b = compute_svd_basis(&y, &BasisSelection::Top(1)).unwrap();
        assert_abs_diff_eq!(variance_explained(&b)[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn null_component_rejected() {
        // rank one
        let y = matrix(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(compute_svd_basis(&y, &BasisSelection::Top(1)).is_ok());
        assert!(matches!(
            compute_svd_basis(&y, &BasisSelection::Components(vec![2])),
            Err(Error::NullComponent { index: 2 })
        ));
    }

    #[test]
    fn scores_follow_joint_gene_permutation() {
        let y = standardize_samples(&random(40, 5, 5)).unwrap();
        let perm: Vec<usize> = (0..40).rev().collect();
        let yp = standardize_samples(&y.permute_rows(&perm)).unwrap();
        let b = compute_svd_basis(&y, &BasisSelection::Top(3)).unwrap();
        let bp = compute_svd_basis(&yp, &BasisSelection::Top(3)).unwrap();
        for (c, cp) in b.components.iter().zip(&bp.components) {
            assert_abs_diff_eq!(c.weight, cp.weight, epsilon = 1e-9);
            for (g, &src) in perm.iter().enumerate() {
                assert_abs_diff_eq!(cp.scores[g], c.scores[src], epsilon = 1e-9);
            }
        }
    }
}
