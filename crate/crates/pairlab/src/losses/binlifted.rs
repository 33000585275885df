//! Straightforward averaging of the binomial deviance weight (own
//! similarity through a sigmoid) and the softened lifted-structure weight
//! (softmax within the anchor's group). A gradient-defined method: there
//! is no scalar loss, training goes through the frozen-gradient surrogate.

use crate::embedding::{LabelVector, PartnerLists, SimilarityMatrix};
use crate::gpw::GradMatrix;
use crate::losses::{sigmoid, softmax};
use crate::Result;

/// Signed gradient whose magnitudes are the arithmetic mean of the two
/// weighting schemes, scaled by `1/m` like every anchor-averaged loss.
pub fn binlifted_grad(
    s: &SimilarityMatrix,
    y: &LabelVector,
    alpha: f64,
    beta: f64,
    lambda: f64,
) -> Result<GradMatrix> {
    let m = s.size();
    let partners = PartnerLists::new(y);
    let scale = 1.0 / m as f64;
    let mut grad = GradMatrix::zeros(m);
    for i in 0..m {
        let pos = &partners.positives[i];
        if !pos.is_empty() {
            let inv = 1.0 / pos.len() as f64;
            let scores: Vec<f64> = pos.iter().map(|&k| -alpha * s.get(i, k)).collect();
            let soft = softmax(&scores);
            for (&j, &w_soft) in pos.iter().zip(soft.iter()) {
                let w_bin = alpha * sigmoid(alpha * (lambda - s.get(i, j))) * inv;
                grad.add(i, j, -0.5 * (w_bin + w_soft) * scale);
            }
        }
        let neg = &partners.negatives[i];
        if !neg.is_empty() {
            let inv = 1.0 / neg.len() as f64;
            let scores: Vec<f64> = neg.iter().map(|&k| beta * s.get(i, k)).collect();
            let soft = softmax(&scores);
            for (&j, &w_soft) in neg.iter().zip(soft.iter()) {
                let w_bin = beta * sigmoid(beta * (s.get(i, j) - lambda)) * inv;
                grad.add(i, j, 0.5 * (w_bin + w_soft) * scale);
            }
        }
    }
    Ok(grad)
}
