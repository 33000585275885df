//! Contrastive and triplet losses: the selection-only baselines where
//! every selected pair carries the same weight.

use crate::embedding::{LabelVector, PartnerLists, SimilarityMatrix};
use crate::gpw::GradMatrix;
use crate::losses::LossOutput;
use crate::{Error, Result};

/// Hinge contrastive loss, averaged over ordered off-diagonal pairs:
/// positives contribute `-S_ij` (attracted without bound), negatives
/// `max(S_ij - margin, 0)`.
pub fn contrastive_loss(s: &SimilarityMatrix, y: &LabelVector, margin: f64) -> Result<LossOutput> {
    let m = s.size();
    let scale = 1.0 / (m * (m - 1)) as f64;
    let mut value = 0.0;
    let mut grad = GradMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let sij = s.get(i, j);
            if y.same_class(i, j) {
                value -= sij * scale;
                grad.add(i, j, -scale);
            } else if sij > margin {
                value += (sij - margin) * scale;
                grad.add(i, j, scale);
            }
        }
    }
    Ok(LossOutput::new(value, grad))
}

pub(super) fn contrastive_kink_distance(s: &SimilarityMatrix, y: &LabelVector, margin: f64) -> f64 {
    let m = s.size();
    let mut dist = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i != j && !y.same_class(i, j) {
                dist = dist.min((s.get(i, j) - margin).abs());
            }
        }
    }
    dist
}

/// Triplet loss averaged over every enumerable `(anchor, positive,
/// negative)` triple: `max(S_an - S_ap + margin, 0)`. Triples already
/// satisfying the margin contribute nothing; a pair appearing in several
/// violating triples accumulates one unit per triple.
pub fn triplet_loss(s: &SimilarityMatrix, y: &LabelVector, margin: f64) -> Result<LossOutput> {
    let m = s.size();
    let partners = PartnerLists::new(y);
    let total: usize = (0..m)
        .map(|a| partners.positives[a].len() * partners.negatives[a].len())
        .sum();
    if total == 0 {
        return Err(Error::NoValidTriplets);
    }
    let scale = 1.0 / total as f64;
    let mut value = 0.0;
    let mut grad = GradMatrix::zeros(m);
    for a in 0..m {
        for &p in &partners.positives[a] {
            for &n in &partners.negatives[a] {
                let violation = s.get(a, n) - s.get(a, p) + margin;
                if violation > 0.0 {
                    value += violation * scale;
                    grad.add(a, n, scale);
                    grad.add(a, p, -scale);
                }
            }
        }
    }
    Ok(LossOutput::new(value, grad))
}

pub(super) fn triplet_kink_distance(s: &SimilarityMatrix, y: &LabelVector, margin: f64) -> f64 {
    let partners = PartnerLists::new(y);
    let mut dist = f64::INFINITY;
    for a in 0..s.size() {
        for &p in &partners.positives[a] {
            for &n in &partners.negatives[a] {
                dist = dist.min((s.get(a, n) - s.get(a, p) + margin).abs());
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sim(m: usize, entries: &[(usize, usize, f64)]) -> SimilarityMatrix {
        let mut data = Array2::zeros((m, m));
        for i in 0..m {
            data[(i, i)] = 1.0;
        }
        for &(i, j, v) in entries {
            data[(i, j)] = v;
            data[(j, i)] = v;
        }
        SimilarityMatrix::from_matrix(data).unwrap()
    }

    #[test]
    fn contrastive_positive_pair_term_and_slope() {
        // Two same-class samples: both ordered pair terms are -0.8, so the
        // mean is -0.8 and each ordered-pair gradient is -1 times the pair
        // scale 1/2.
        let s = sim(2, &[(0, 1, 0.8)]);
        let y = LabelVector::new(vec![0, 0]);
        let out = contrastive_loss(&s, &y, 0.5).unwrap();
        assert!((out.value + 0.8).abs() < 1e-15);
        assert!((out.grad.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((out.grad.get(1, 0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn contrastive_inactive_negative_pair() {
        let s = sim(2, &[(0, 1, 0.3)]);
        let y = LabelVector::new(vec![0, 1]);
        let out = contrastive_loss(&s, &y, 0.5).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grad.get(0, 1), 0.0);
    }

    #[test]
    fn contrastive_active_negative_pair() {
        // Per-pair term S - margin = 0.2; two ordered pairs, mean 0.2.
        let s = sim(2, &[(0, 1, 0.7)]);
        let y = LabelVector::new(vec![0, 1]);
        let out = contrastive_loss(&s, &y, 0.5).unwrap();
        assert!((out.value - 0.2).abs() < 1e-15);
        assert!((out.grad.get(0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn contrastive_nonzero_weights_are_all_equal() {
        let s = sim(
            4,
            &[
                (0, 1, 0.9),
                (0, 2, 0.8),
                (0, 3, 0.75),
                (1, 2, 0.6),
                (1, 3, 0.2),
                (2, 3, 0.85),
            ],
        );
        let y = LabelVector::new(vec![0, 0, 1, 1]);
        let out = contrastive_loss(&s, &y, 0.5).unwrap();
        let mut magnitudes: Vec<f64> = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                let g = out.grad.get(i, j);
                if g != 0.0 {
                    magnitudes.push(g.abs());
                }
            }
        }
        assert!(!magnitudes.is_empty());
        for w in &magnitudes {
            assert_eq!(*w, magnitudes[0]);
        }
        // The shared magnitude is one unit of the pair scale.
        assert!((magnitudes[0] * 12.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triplet_violating_and_satisfied_triples() {
        // Labels (a, a, b): two enumerable triplets, (0,1,2) and (1,0,2).
        // S_02 - S_01 + 0.5 = 0.1 is violating; S_12 - S_10 + 0.5 = -0.2
        // is satisfied and discarded.
        let s = sim(3, &[(0, 1, 0.9), (0, 2, 0.5), (1, 2, 0.2)]);
        let y = LabelVector::new(vec![0, 0, 1]);
        let out = triplet_loss(&s, &y, 0.5).unwrap();
        assert!((out.value - 0.05).abs() < 1e-15);
        assert!((out.grad.get(0, 2) - 0.5).abs() < 1e-15);
        assert!((out.grad.get(0, 1) + 0.5).abs() < 1e-15);
        assert_eq!(out.grad.get(1, 2), 0.0);
        assert_eq!(out.grad.get(1, 0), 0.0);
    }

    #[test]
    fn triplet_tied_similarities_leave_margin_term() {
        let s = sim(3, &[(0, 1, 0.7), (0, 2, 0.7), (1, 2, 0.1)]);
        let y = LabelVector::new(vec![0, 0, 1]);
        let out = triplet_loss(&s, &y, 0.5).unwrap();
        // Triplet (0,1,2) contributes exactly the margin 0.5; (1,0,2) is
        // satisfied (0.1 - 0.7 + 0.5 < 0). Mean over the 2 triples.
        assert!((out.value - 0.25).abs() < 1e-15);
        assert!((out.grad.get(0, 2) - 0.5).abs() < 1e-15);
        assert!((out.grad.get(0, 1) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn triplet_without_any_triple_errors() {
        let s = sim(2, &[(0, 1, 0.4)]);
        // Two classes with one sample each: no anchor has a positive.
        let y = LabelVector::new(vec![0, 1]);
        match triplet_loss(&s, &y, 0.5) {
            Err(Error::NoValidTriplets) => {}
            other => panic!("expected NoValidTriplets, got {other:?}"),
        }
        // All same class: no negatives either.
        let y = LabelVector::new(vec![0, 0]);
        assert!(matches!(
            triplet_loss(&s, &y, 0.5),
            Err(Error::NoValidTriplets)
        ));
    }

    #[test]
    fn triplet_weights_are_integer_multiples_of_unit() {
        // A pair can appear in several violating triples; each adds one
        // unit of weight, so magnitudes are integer multiples of 1/total.
        let s = sim(
            5,
            &[
                (0, 1, 0.8),
                (0, 2, 0.6),
                (0, 3, 0.7),
                (0, 4, 0.75),
                (1, 2, 0.5),
                (1, 3, 0.3),
                (1, 4, 0.1),
                (2, 3, 0.4),
                (2, 4, 0.45),
                (3, 4, 0.65),
            ],
        );
        let y = LabelVector::new(vec![0, 0, 0, 1, 1]);
        let partners = PartnerLists::new(&y);
        let total: usize = (0..5)
            .map(|a| partners.positives[a].len() * partners.negatives[a].len())
            .sum();
        let out = triplet_loss(&s, &y, 0.5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let units = out.grad.get(i, j).abs() * total as f64;
                assert!(
                    (units - units.round()).abs() < 1e-9,
                    "weight at ({i},{j}) is not an integer multiple: {units}"
                );
            }
        }
    }
}
