//! Binomial deviance loss: the softplus relaxation of the contrastive
//! hinge, with per-anchor group normalization. Each pair is weighted by
//! its own similarity alone, through a sigmoid.

use crate::embedding::{LabelVector, PartnerLists, SimilarityMatrix};
use crate::gpw::GradMatrix;
use crate::losses::{sigmoid, softplus, LossOutput, MinedSets};
use crate::Result;

/// Per-anchor counts of positive and negative pairs; they always sum to
/// `m - 1`.
#[derive(Debug, Clone)]
pub struct BinomialCounts {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl BinomialCounts {
    pub fn new(y: &LabelVector) -> Self {
        let partners = PartnerLists::new(y);
        Self {
            positive: partners.positives.iter().map(Vec::len).collect(),
            negative: partners.negatives.iter().map(Vec::len).collect(),
        }
    }
}

/// Binomial deviance loss averaged over anchors: positives contribute
/// `ln(1 + e^{alpha (lambda - S_ij)}) / P_i`, negatives
/// `ln(1 + e^{beta (S_ij - lambda)}) / N_i`. Empty groups contribute zero.
pub fn binomial_loss(
    s: &SimilarityMatrix,
    y: &LabelVector,
    alpha: f64,
    beta: f64,
    lambda: f64,
) -> Result<LossOutput> {
    let partners = PartnerLists::new(y);
    let sets = MinedSets::from_lists(partners.positives, partners.negatives);
    binomial_mined_loss(s, y, &sets, alpha, beta, lambda)
}

/// [`binomial_loss`] restricted to preselected pair sets; the per-group
/// normalizers become the selected-set sizes.
pub fn binomial_mined_loss(
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
    let mut grad = GradMatrix::zeros(m);
    let mut any_pair = false;
    for i in 0..m {
        let pos = sets.positives(i);
        if !pos.is_empty() {
            any_pair = true;
            let inv = 1.0 / pos.len() as f64;
            for &j in pos {
                let z = alpha * (lambda - s.get(i, j));
                value += softplus(z) * inv * scale;
                grad.add(i, j, -alpha * sigmoid(z) * inv * scale);
            }
        }
        let neg = sets.negatives(i);
        if !neg.is_empty() {
            any_pair = true;
            let inv = 1.0 / neg.len() as f64;
            for &j in neg {
                let z = beta * (s.get(i, j) - lambda);
                value += softplus(z) * inv * scale;
                grad.add(i, j, beta * sigmoid(z) * inv * scale);
            }
        }
    }
    Ok(LossOutput::flagged(value, grad, !any_pair))
}
