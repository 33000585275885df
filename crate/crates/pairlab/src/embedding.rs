//! Embedding-space primitives: L2 normalization, the batch similarity
//! matrix, pair-structure masks, and the shared hyperparameter record.
//!
//! All arithmetic is `f64`; the gradient checks elsewhere in the crate run
//! at tolerances that single precision cannot hold.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Norm below which a row is treated as the zero vector.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Raw per-sample feature rows, one instance per row.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    /// Requires at least two rows, one column, and finite entries.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Invalid(format!(
                "feature matrix needs at least 2 rows, got {}",
                data.nrows()
            )));
        }
        if data.ncols() < 1 {
            return Err(Error::Invalid(
                "feature matrix needs at least 1 column".into(),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid(
                "feature matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Copy of the rows selected by `idx`, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((idx.len(), self.dim()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&self.data.row(i));
        }
        out
    }
}

/// Row-wise unit-norm embeddings, i.e. points on the unit sphere.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
}

impl EmbeddingMatrix {
    /// Validates that every row has unit L2 norm within `1e-9`.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        for (i, row) in data.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "embedding row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { data })
    }

    /// Skips validation; for rows produced by [`l2_normalize`] itself.
    pub(crate) fn new_unchecked(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }
}

/// Per-sample integer class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    /// Number of distinct classes present.
    pub fn class_count(&self) -> usize {
        let mut seen: Vec<usize> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn same_class(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(labels: Vec<usize>) -> Self {
        Self::new(labels)
    }
}

/// Symmetric matrix of pairwise cosine similarities with unit diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    data: Array2<f64>,
}

impl SimilarityMatrix {
    /// Validates symmetry, unit diagonal and the `|S_ij| <= 1` range, all
    /// within `1e-9`.
    pub fn from_matrix(data: Array2<f64>) -> Result<Self> {
        let m = data.nrows();
        if data.ncols() != m {
            return Err(Error::Invalid("similarity matrix must be square".into()));
        }
        for i in 0..m {
            if (data[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "similarity diagonal entry {i} is {}, expected 1",
                    data[(i, i)]
                )));
            }
            for j in 0..m {
                let v = data[(i, j)];
                if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                    return Err(Error::Invalid(format!(
                        "similarity entry ({i}, {j}) = {v} out of range"
                    )));
                }
                if (v - data[(j, i)]).abs() > 1e-9 {
                    return Err(Error::Invalid(format!(
                        "similarity matrix asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    /// Skips validation. Used where entries are perturbed slightly past the
    /// unit range on purpose (finite differences) or built entry by entry
    /// in tests and sweeps.
    pub fn from_matrix_unchecked(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub(crate) fn as_array(&self) -> &Array2<f64> {
        &self.data
    }
}

/// `S = E E^T` computed entry by entry and mirrored, so the result is
/// bitwise symmetric regardless of any matmul blocking.
pub fn similarity_matrix(e: &EmbeddingMatrix) -> SimilarityMatrix {
    let m = e.rows();
    let mut s = Array2::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let v = e.row(i).dot(&e.row(j));
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    SimilarityMatrix { data: s }
}

/// Boolean masks for the positive (same label) and negative (different
/// label) pair structure of a batch. Self-pairs `(i, i)` belong to neither:
/// `S_ii = 1` would otherwise act as a spurious maximal positive pair.
#[derive(Debug, Clone)]
pub struct PairMasks {
    pub positive: Array2<bool>,
    pub negative: Array2<bool>,
}

pub fn pair_masks(y: &LabelVector) -> PairMasks {
    let m = y.len();
    let mut positive = Array2::from_elem((m, m), false);
    let mut negative = Array2::from_elem((m, m), false);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if y.same_class(i, j) {
                positive[(i, j)] = true;
            } else {
                negative[(i, j)] = true;
            }
        }
    }
    PairMasks { positive, negative }
}

/// Per-anchor partner index lists, the loop-friendly form of [`PairMasks`].
#[derive(Debug, Clone)]
pub struct PartnerLists {
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

impl PartnerLists {
    pub fn new(y: &LabelVector) -> Self {
        let m = y.len();
        let mut positives = vec![Vec::new(); m];
        let mut negatives = vec![Vec::new(); m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                if y.same_class(i, j) {
                    positives[i].push(j);
                } else {
                    negatives[i].push(j);
                }
            }
        }
        Self {
            positives,
            negatives,
        }
    }
}

/// Shared loss hyperparameters. `alpha`/`beta` are the positive/negative
/// scaling temperatures, `lambda` the similarity threshold of the softplus
/// and multi-similarity families, `epsilon` the mining margin, and `margin`
/// the hinge margin of the contrastive and triplet losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub margin: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 50.0,
            lambda: 1.0,
            epsilon: 0.1,
            margin: 0.5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::Invalid(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Invalid(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::Invalid(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !self.lambda.is_finite() || !self.margin.is_finite() {
            return Err(Error::Invalid("lambda and margin must be finite".into()));
        }
        Ok(())
    }
}

/// Divides every row by its L2 norm. Fails with [`Error::ZeroNormRow`] if a
/// row norm is at or below [`ZERO_NORM_EPS`].
pub fn l2_normalize(f: &FeatureMatrix) -> Result<EmbeddingMatrix> {
    let mut out = f.view().to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm <= ZERO_NORM_EPS {
            return Err(Error::ZeroNormRow(i));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(EmbeddingMatrix::new_unchecked(out))
}
