//! Lifted structure loss and its softened variant.
//!
//! Both weight a pair only by its similarity relative to the anchor's
//! other pairs of the same kind (a softmax within each group), which makes
//! the weights invariant to shifting a whole group by a constant.

use crate::embedding::{LabelVector, PartnerLists, SimilarityMatrix};
use crate::gpw::GradMatrix;
use crate::losses::{log_sum_exp, softmax, LossOutput, MinedSets};
use crate::{Error, Result};

/// Hinged lifted structure loss, averaged over anchors:
/// `[ln sum_pos e^{lambda - S_ik} + ln sum_neg e^{S_ik}]_+` per anchor.
/// Anchors lacking positives or negatives contribute zero; it is an error
/// only when every anchor lacks partners.
pub fn lifted_loss(s: &SimilarityMatrix, y: &LabelVector, lambda: f64) -> Result<LossOutput> {
    let m = s.size();
    let partners = PartnerLists::new(y);
    let scale = 1.0 / m as f64;
    let mut value = 0.0;
    let mut grad = GradMatrix::zeros(m);
    let mut any_anchor = false;
    for i in 0..m {
        let pos = &partners.positives[i];
        let neg = &partners.negatives[i];
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        any_anchor = true;
        let pos_terms: Vec<f64> = pos.iter().map(|&k| lambda - s.get(i, k)).collect();
        let neg_terms: Vec<f64> = neg.iter().map(|&k| s.get(i, k)).collect();
        let hinge = log_sum_exp(&pos_terms) + log_sum_exp(&neg_terms);
        if hinge <= 0.0 {
            continue;
        }
        value += hinge * scale;
        for (&k, &w) in pos.iter().zip(softmax(&pos_terms).iter()) {
            grad.add(i, k, -w * scale);
        }
        for (&k, &w) in neg.iter().zip(softmax(&neg_terms).iter()) {
            grad.add(i, k, w * scale);
        }
    }
    if !any_anchor {
        return Err(Error::AnchorWithoutPartners(0));
    }
    Ok(LossOutput::new(value, grad))
}

pub(super) fn lifted_kink_distance(s: &SimilarityMatrix, y: &LabelVector, lambda: f64) -> f64 {
    let partners = PartnerLists::new(y);
    let mut dist = f64::INFINITY;
    for i in 0..s.size() {
        let pos = &partners.positives[i];
        let neg = &partners.negatives[i];
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let pos_terms: Vec<f64> = pos.iter().map(|&k| lambda - s.get(i, k)).collect();
        let neg_terms: Vec<f64> = neg.iter().map(|&k| s.get(i, k)).collect();
        dist = dist.min((log_sum_exp(&pos_terms) + log_sum_exp(&neg_terms)).abs());
    }
    dist
}

/// Hinge-free lifted structure variant with temperatures, averaged over
/// anchors: `(1/alpha) ln sum_pos e^{-alpha S_ik} + (1/beta) ln sum_neg
/// e^{beta S_ik}`. Partner semantics match [`lifted_loss`].
pub fn lifted_star_loss(
    s: &SimilarityMatrix,
    y: &LabelVector,
    alpha: f64,
    beta: f64,
) -> Result<LossOutput> {
    let partners = PartnerLists::new(y);
    let sets = MinedSets::from_lists(partners.positives, partners.negatives);
    let out = lifted_star_mined_loss(s, y, &sets, alpha, beta)?;
    if out.degenerate {
        return Err(Error::AnchorWithoutPartners(0));
    }
    Ok(out)
}

/// [`lifted_star_loss`] restricted to preselected pair sets. Anchors whose
/// selected positive or negative group is empty contribute zero without
/// error; the degenerate flag is set when no anchor contributes.
pub fn lifted_star_mined_loss(
    s: &SimilarityMatrix,
    y: &LabelVector,
    sets: &MinedSets,
    alpha: f64,
    beta: f64,
) -> Result<LossOutput> {
    sets.check_consistency(y)?;
    let m = s.size();
    let scale = 1.0 / m as f64;
    let mut value = 0.0;
    let mut grad = GradMatrix::zeros(m);
    let mut any_anchor = false;
    for i in 0..m {
        let pos = sets.positives(i);
        let neg = sets.negatives(i);
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        any_anchor = true;
        let pos_terms: Vec<f64> = pos.iter().map(|&k| -alpha * s.get(i, k)).collect();
        let neg_terms: Vec<f64> = neg.iter().map(|&k| beta * s.get(i, k)).collect();
        value += (log_sum_exp(&pos_terms) / alpha + log_sum_exp(&neg_terms) / beta) * scale;
        for (&k, &w) in pos.iter().zip(softmax(&pos_terms).iter()) {
            grad.add(i, k, -w * scale);
        }
        for (&k, &w) in neg.iter().zip(softmax(&neg_terms).iter()) {
            grad.add(i, k, w * scale);
        }
    }
    Ok(LossOutput::flagged(value, grad, !any_anchor))
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

    /// Anchor 0 of class 0 with one positive (index 1) and negatives 2, 3.
    fn anchor_fixture(neg_a: f64, neg_b: f64) -> (SimilarityMatrix, LabelVector) {
        let s = sim(
            4,
            &[
                (0, 1, 0.9),
                (0, 2, neg_a),
                (0, 3, neg_b),
                (1, 2, 0.1),
                (1, 3, 0.15),
                (2, 3, 0.2),
            ],
        );
        (s, LabelVector::new(vec![0, 0, 1, 1]))
    }

    #[test]
    fn equal_negatives_share_the_weight() {
        let (s, y) = anchor_fixture(0.5, 0.5);
        let out = lifted_loss(&s, &y, 1.0).unwrap();
        let m = 4.0;
        assert!((out.grad.get(0, 2) * m - 0.5).abs() < 1e-12);
        assert!((out.grad.get(0, 3) * m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_positive_takes_full_weight() {
        let (s, y) = anchor_fixture(0.5, 0.3);
        let out = lifted_loss(&s, &y, 1.0).unwrap();
        assert!((out.grad.get(0, 1) * 4.0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_weights_follow_relative_similarity() {
        let (s, y) = anchor_fixture(0.8, 0.2);
        let out = lifted_loss(&s, &y, 1.0).unwrap();
        // Softmax over (0.8, 0.2): the larger gets 1/(1 + e^{-0.6}).
        let expect_hi = 1.0 / (1.0 + (-0.6_f64).exp());
        let w_hi = out.grad.get(0, 2) * 4.0;
        let w_lo = out.grad.get(0, 3) * 4.0;
        assert!((w_hi - expect_hi).abs() < 1e-12);
        assert!((w_hi - 0.6456563).abs() < 1e-7);
        assert!((w_lo - 0.3543437).abs() < 1e-7);
        assert!((w_hi + w_lo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_anchor_weight_rows_are_normalized() {
        use crate::gpw::{random_instance, seeded_rng};
        let mut rng = seeded_rng(41);
        for _ in 0..25 {
            let (s, y) = random_instance(&mut rng, 9, 4);
            let out = lifted_loss(&s, &y, 1.0).unwrap();
            let m = s.size();
            for i in 0..m {
                let pos_sum: f64 = (0..m)
                    .filter(|&j| j != i && y.same_class(i, j))
                    .map(|j| out.grad.get(i, j).abs() * m as f64)
                    .sum();
                let neg_sum: f64 = (0..m)
                    .filter(|&j| j != i && !y.same_class(i, j))
                    .map(|j| out.grad.get(i, j).abs() * m as f64)
                    .sum();
                // Each group softmax sums to one when the anchor's hinge
                // is active and to zero otherwise; the groups agree.
                assert!(
                    (pos_sum - 1.0).abs() < 1e-9 || pos_sum.abs() < 1e-15,
                    "anchor {i}: positive weights sum to {pos_sum}"
                );
                assert!(
                    (pos_sum - neg_sum).abs() < 1e-9,
                    "anchor {i}: group sums disagree ({pos_sum} vs {neg_sum})"
                );
            }
        }
    }

    #[test]
    fn inactive_hinge_contributes_nothing() {
        // Strong positive (lambda - S small and negative after logsumexp)
        // and very dissimilar negatives push the hinge argument below 0.
        let (s, y) = anchor_fixture(-0.9, -0.95);
        let out = lifted_loss(&s, &y, 0.0).unwrap();
        // Anchor 0: ln(e^{-0.9}) + ln(e^{-0.9} + e^{-0.95}) < 0.
        assert_eq!(out.grad.get(0, 2), 0.0);
        assert_eq!(out.grad.get(0, 3), 0.0);
    }

    #[test]
    fn all_anchors_without_partners_is_an_error() {
        let s = sim(2, &[(0, 1, 0.4)]);
        let y = LabelVector::new(vec![0, 0]);
        match lifted_loss(&s, &y, 1.0) {
            Err(Error::AnchorWithoutPartners(_)) => {}
            other => panic!("expected AnchorWithoutPartners, got {other:?}"),
        }
    }

    #[test]
    fn star_single_negative_takes_weight_one() {
        let s = sim(3, &[(0, 1, 0.8), (0, 2, 0.4), (1, 2, 0.3)]);
        let y = LabelVector::new(vec![0, 0, 1]);
        let out = lifted_star_loss(&s, &y, 2.0, 50.0).unwrap();
        assert!((out.grad.get(0, 2) * 3.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_sharp_softmax_concentrates_on_the_hard_negative() {
        let (s, y) = anchor_fixture(0.8, 0.2);
        let out = lifted_star_loss(&s, &y, 2.0, 50.0).unwrap();
        let w_hi = out.grad.get(0, 2) * 4.0;
        let w_lo = out.grad.get(0, 3) * 4.0;
        let expect_lo = 1.0 / (1.0 + 30.0_f64.exp());
        assert!((w_hi - 1.0).abs() < 1e-12);
        assert!((w_lo - expect_lo).abs() < 1e-20);
        assert!((w_lo - 9.36e-14).abs() < 5e-16);
    }

    #[test]
    fn star_group_weights_are_shift_invariant() {
        let (s1, y) = anchor_fixture(0.6, 0.1);
        let (s2, _) = anchor_fixture(0.6 + 0.25, 0.1 + 0.25);
        let a = lifted_star_loss(&s1, &y, 2.0, 50.0).unwrap();
        let b = lifted_star_loss(&s2, &y, 2.0, 50.0).unwrap();
        assert!((a.grad.get(0, 2) - b.grad.get(0, 2)).abs() < 1e-12);
        assert!((a.grad.get(0, 3) - b.grad.get(0, 3)).abs() < 1e-12);
    }

    #[test]
    fn mined_star_skips_anchors_with_an_empty_group() {
        let (s, y) = anchor_fixture(0.5, 0.3);
        let sets = MinedSets::new(
            vec![vec![1], vec![], vec![], vec![]],
            vec![vec![], vec![], vec![], vec![]],
            &y,
        )
        .unwrap();
        let out = lifted_star_mined_loss(&s, &y, &sets, 2.0, 50.0).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.value, 0.0);
    }
}
