//! Multi-similarity loss: iterative pair mining and pair weighting.
//!
//! Mining keeps a negative pair when it is more similar than the anchor's
//! hardest positive minus a margin, and a positive pair when it is less
//! similar than the anchor's hardest negative plus the margin. The kept
//! pairs are then weighted by their own similarity and their similarity
//! relative to the rest of their group; both effects come out of one
//! softplus-of-sums loss. Mining is recomputed every forward pass and
//! frozen for the backward pass.

use crate::embedding::{LabelVector, PartnerLists, SimilarityMatrix};
use crate::gpw::{GradMatrix, WeightMatrix};
use crate::losses::{log1p_sum_exp, LossOutput};
use crate::{Error, Result};

/// Per-anchor index sets of selected positive and negative partners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinedSets {
    positives: Vec<Vec<usize>>,
    negatives: Vec<Vec<usize>>,
}

impl MinedSets {
    /// Validates that selected partners live on the right side of the
    /// label structure and never include the anchor itself.
    pub fn new(
        positives: Vec<Vec<usize>>,
        negatives: Vec<Vec<usize>>,
        y: &LabelVector,
    ) -> Result<Self> {
        let sets = Self {
            positives,
            negatives,
        };
        sets.check_consistency(y)?;
        Ok(sets)
    }

    pub(super) fn from_lists(positives: Vec<Vec<usize>>, negatives: Vec<Vec<usize>>) -> Self {
        Self {
            positives,
            negatives,
        }
    }

    /// Selection disabled: every candidate pair of every anchor.
    pub fn all_pairs(y: &LabelVector) -> Self {
        let partners = PartnerLists::new(y);
        Self {
            positives: partners.positives,
            negatives: partners.negatives,
        }
    }

    pub fn anchors(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self, anchor: usize) -> &[usize] {
        &self.positives[anchor]
    }

    pub fn negatives(&self, anchor: usize) -> &[usize] {
        &self.negatives[anchor]
    }

    /// True when every anchor's sets are empty.
    pub fn all_empty(&self) -> bool {
        self.positives.iter().all(Vec::is_empty) && self.negatives.iter().all(Vec::is_empty)
    }

    pub(crate) fn check_consistency(&self, y: &LabelVector) -> Result<()> {
        let m = y.len();
        if self.positives.len() != m || self.negatives.len() != m {
            return Err(Error::Invalid(format!(
                "mined sets cover {} anchors, labels have {m}",
                self.positives.len()
            )));
        }
        for i in 0..m {
            for &j in &self.positives[i] {
                if j == i || j >= m || !y.same_class(i, j) {
                    return Err(Error::Invalid(format!(
                        "index {j} is not a positive partner of anchor {i}"
                    )));
                }
            }
            for &j in &self.negatives[i] {
                if j == i || j >= m || y.same_class(i, j) {
                    return Err(Error::Invalid(format!(
                        "index {j} is not a negative partner of anchor {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pair mining. For each anchor with at least one positive and one
/// negative candidate, keep negatives with `S_ij > min_pos - epsilon` and
/// positives with `S_ij < max_neg + epsilon`, where `min_pos` is the
/// anchor's hardest positive similarity and `max_neg` its hardest negative
/// similarity over all candidates. Anchors lacking either candidate group
/// yield empty sets.
pub fn ms_mine(s: &SimilarityMatrix, y: &LabelVector, epsilon: f64) -> MinedSets {
    let m = s.size();
    let partners = PartnerLists::new(y);
    let mut positives = vec![Vec::new(); m];
    let mut negatives = vec![Vec::new(); m];
    for i in 0..m {
        let pos = &partners.positives[i];
        let neg = &partners.negatives[i];
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let min_pos = pos
            .iter()
            .map(|&k| s.get(i, k))
            .fold(f64::INFINITY, f64::min);
        let max_neg = neg
            .iter()
            .map(|&k| s.get(i, k))
            .fold(f64::NEG_INFINITY, f64::max);
        negatives[i] = neg
            .iter()
            .copied()
            .filter(|&j| s.get(i, j) > min_pos - epsilon)
            .collect();
        positives[i] = pos
            .iter()
            .copied()
            .filter(|&j| s.get(i, j) < max_neg + epsilon)
            .collect();
    }
    MinedSets {
        positives,
        negatives,
    }
}

/// Closed-form pair weights of the multi-similarity loss for the given
/// selected sets:
///
/// ```text
/// w-_ij = e^{beta (S_ij - lambda)} / (1 + sum_{k in N_i} e^{beta (S_ik - lambda)})
/// w+_ij = e^{alpha (lambda - S_ij)} / (1 + sum_{k in P_i} e^{alpha (lambda - S_ik)})
/// ```
///
/// The sums include `k = j`, which keeps every weight inside `(0, 1)`.
pub fn ms_weights(
    s: &SimilarityMatrix,
    sets: &MinedSets,
    alpha: f64,
    beta: f64,
    lambda: f64,
) -> WeightMatrix {
    let m = s.size();
    let mut w = ndarray::Array2::zeros((m, m));
    for i in 0..m {
        let neg = sets.negatives(i);
        if !neg.is_empty() {
            let xs: Vec<f64> = neg.iter().map(|&k| beta * (s.get(i, k) - lambda)).collect();
            let mx = xs.iter().copied().fold(0.0_f64, f64::max);
            let denom = xs.iter().map(|&x| (x - mx).exp()).sum::<f64>() + (-mx).exp();
            for (&j, &x) in neg.iter().zip(xs.iter()) {
                w[(i, j)] = (x - mx).exp() / denom;
            }
        }
        let pos = sets.positives(i);
        if !pos.is_empty() {
            let xs: Vec<f64> = pos
                .iter()
                .map(|&k| alpha * (lambda - s.get(i, k)))
                .collect();
            let mx = xs.iter().copied().fold(0.0_f64, f64::max);
            let denom = xs.iter().map(|&x| (x - mx).exp()).sum::<f64>() + (-mx).exp();
            for (&j, &x) in pos.iter().zip(xs.iter()) {
                w[(i, j)] = (x - mx).exp() / denom;
            }
        }
    }
    WeightMatrix::from_matrix(w)
}

/// Multi-similarity loss with mining recomputed from `(S, y)`.
pub fn ms_loss(
    s: &SimilarityMatrix,
    y: &LabelVector,
    alpha: f64,
    beta: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<LossOutput> {
    let sets = ms_mine(s, y, epsilon);
    ms_loss_with_sets(s, y, &sets, alpha, beta, lambda)
}

/// Multi-similarity loss value and gradient for frozen selected sets:
///
/// ```text
/// L = (1/m) sum_i [ (1/alpha) ln(1 + sum_{k in P_i} e^{-alpha (S_ik - lambda)})
///                 + (1/beta)  ln(1 + sum_{k in N_i} e^{beta (S_ik - lambda)}) ]
/// ```
///
/// The gradient magnitudes are exactly [`ms_weights`] scaled by `1/m`.
pub fn ms_loss_with_sets(
    s: &SimilarityMatrix,
    y: &LabelVector,
    sets: &MinedSets,
    alpha: f64,
    beta: f64,
    lambda: f64,
) -> Result<LossOutput> {
    sets.check_consistency(y)?;
    let m = s.size();
    let scale = 1.0 / m as f64;
    let mut value = 0.0;
    for i in 0..m {
        let pos_terms: Vec<f64> = sets
            .positives(i)
            .iter()
            .map(|&k| -alpha * (s.get(i, k) - lambda))
            .collect();
        let neg_terms: Vec<f64> = sets
            .negatives(i)
            .iter()
            .map(|&k| beta * (s.get(i, k) - lambda))
            .collect();
        value += (log1p_sum_exp(&pos_terms) / alpha + log1p_sum_exp(&neg_terms) / beta) * scale;
    }
    let weights = ms_weights(s, sets, alpha, beta, lambda);
    let mut grad = GradMatrix::zeros(m);
    for i in 0..m {
        for &j in sets.positives(i) {
            grad.add(i, j, -weights.get(i, j) * scale);
        }
        for &j in sets.negatives(i) {
            grad.add(i, j, weights.get(i, j) * scale);
        }
    }
    Ok(LossOutput::flagged(value, grad, sets.all_empty()))
}

/// Mining with the weighting step replaced by equal unit weights: each
/// selected pair contributes `+-1/m` to the gradient. The value is the
/// matching linear functional `(1/m) sum_i (sum_{N_i} S_ij - sum_{P_i}
/// S_ij)` so that value and gradient stay consistent.
pub fn ms_mining_only_loss(
    s: &SimilarityMatrix,
    y: &LabelVector,
    epsilon: f64,
) -> Result<LossOutput> {
    let sets = ms_mine(s, y, epsilon);
    let m = s.size();
    let scale = 1.0 / m as f64;
    let mut value = 0.0;
    let mut grad = GradMatrix::zeros(m);
    for i in 0..m {
        for &j in sets.positives(i) {
            value -= s.get(i, j) * scale;
            grad.add(i, j, -scale);
        }
        for &j in sets.negatives(i) {
            value += s.get(i, j) * scale;
            grad.add(i, j, scale);
        }
    }
    Ok(LossOutput::flagged(value, grad, sets.all_empty()))
}

/// Smallest distance of any candidate pair to its mining threshold; the
/// selected sets cannot change under perturbations smaller than this.
pub(super) fn mining_kink_distance(s: &SimilarityMatrix, y: &LabelVector, epsilon: f64) -> f64 {
    let partners = PartnerLists::new(y);
    let mut dist = f64::INFINITY;
    for i in 0..s.size() {
        let pos = &partners.positives[i];
        let neg = &partners.negatives[i];
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let min_pos = pos
            .iter()
            .map(|&k| s.get(i, k))
            .fold(f64::INFINITY, f64::min);
        let max_neg = neg
            .iter()
            .map(|&k| s.get(i, k))
            .fold(f64::NEG_INFINITY, f64::max);
        for &j in neg {
            dist = dist.min((s.get(i, j) - (min_pos - epsilon)).abs());
        }
        for &j in pos {
            dist = dist.min((s.get(i, j) - (max_neg + epsilon)).abs());
        }
    }
    dist
}
