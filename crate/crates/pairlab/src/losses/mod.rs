//! Pair-based losses over the similarity matrix: value, analytic gradient
//! per ordered pair, and closed-form weights.
//!
//! Normalization conventions, applied uniformly so methods are comparable
//! under one learning rate: contrastive averages over ordered off-diagonal
//! pairs, triplet over enumerable triplets, and every anchor-structured
//! loss (lifted, binomial, multi-similarity and variants) averages over the
//! `m` anchors. Each sample serves as anchor, so `(i, j)` and `(j, i)` are
//! both computed.

mod binlifted;
mod binomial;
mod classic;
mod lifted;
mod ms;

pub use binlifted::binlifted_grad;
pub use binomial::{binomial_loss, binomial_mined_loss, BinomialCounts};
pub use classic::{contrastive_loss, triplet_loss};
pub use lifted::{lifted_loss, lifted_star_loss, lifted_star_mined_loss};
pub use ms::{ms_loss, ms_loss_with_sets, ms_mine, ms_mining_only_loss, ms_weights, MinedSets};

use std::fmt;
use std::str::FromStr;

use crate::embedding::{HyperParams, LabelVector, SimilarityMatrix};
use crate::gpw::{surrogate_f, GradMatrix, PairLoss};
use crate::{Error, Result};

/// Loss value and its gradient with respect to every `S_ij`.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad: GradMatrix,
    /// Set by the mining-based losses when every anchor's mined sets came
    /// out empty; value and gradient are zero in that case.
    pub degenerate: bool,
}

impl LossOutput {
    pub fn new(value: f64, grad: GradMatrix) -> Self {
        Self {
            value,
            grad,
            degenerate: false,
        }
    }

    pub fn flagged(value: f64, grad: GradMatrix, degenerate: bool) -> Self {
        Self {
            value,
            grad,
            degenerate,
        }
    }
}

/// Numerically stable `1 / (1 + e^-x)`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(sum_k e^{x_k})` with max shifting; `xs` must be non-empty.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + xs.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln()
}

/// `ln(1 + sum_k e^{x_k})`; an empty slice gives 0.
pub(crate) fn log1p_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().copied().fold(0.0_f64, f64::max);
    let sum = xs.iter().map(|&x| (x - mx).exp()).sum::<f64>() + (-mx).exp();
    mx + sum.ln()
}

/// Softmax of `xs` with max shifting; `xs` must be non-empty.
pub(crate) fn softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - mx).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Every trainable method. The `*Mined` variants apply the
/// multi-similarity mining step before the named weighting scheme and are
/// produced by the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Contrastive,
    Triplet,
    Lifted,
    Binomial,
    LiftedStar,
    BinLifted,
    Ms,
    MsMining,
    MsWeighting,
    BinomialMined,
    LiftedStarMined,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Contrastive,
        Method::Triplet,
        Method::Lifted,
        Method::Binomial,
        Method::LiftedStar,
        Method::BinLifted,
        Method::Ms,
        Method::MsMining,
        Method::MsWeighting,
        Method::BinomialMined,
        Method::LiftedStarMined,
    ];

    /// Methods with a scalar loss whose gradient can be checked against
    /// the central-difference oracle. BinLifted is gradient-defined: its
    /// recorded value is the frozen-gradient surrogate, which is not the
    /// antiderivative of its gradient.
    pub fn gradient_checkable(self) -> bool {
        self != Method::BinLifted
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Contrastive => "contrastive",
            Method::Triplet => "triplet",
            Method::Lifted => "lifted",
            Method::Binomial => "binomial",
            Method::LiftedStar => "lifted_star",
            Method::BinLifted => "binlifted",
            Method::Ms => "ms",
            Method::MsMining => "ms_mining",
            Method::MsWeighting => "ms_weighting",
            Method::BinomialMined => "binomial_m",
            Method::LiftedStarMined => "lifted_star_m",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl PairLoss for Method {
    fn name(&self) -> &'static str {
        self.as_str()
    }

    fn eval(&self, s: &SimilarityMatrix, y: &LabelVector, hp: &HyperParams) -> Result<LossOutput> {
        hp.validate()?;
        if y.len() != s.size() {
            return Err(Error::Invalid(format!(
                "{} labels for a {}x{} similarity matrix",
                y.len(),
                s.size(),
                s.size()
            )));
        }
        match self {
            Method::Contrastive => contrastive_loss(s, y, hp.margin),
            Method::Triplet => triplet_loss(s, y, hp.margin),
            Method::Lifted => lifted_loss(s, y, hp.lambda),
            Method::Binomial => binomial_loss(s, y, hp.alpha, hp.beta, hp.lambda),
            Method::LiftedStar => lifted_star_loss(s, y, hp.alpha, hp.beta),
            Method::BinLifted => {
                let grad = binlifted_grad(s, y, hp.alpha, hp.beta, hp.lambda)?;
                let value = surrogate_f(s, &grad);
                Ok(LossOutput::new(value, grad))
            }
            Method::Ms => ms_loss(s, y, hp.alpha, hp.beta, hp.lambda, hp.epsilon),
            Method::MsMining => ms_mining_only_loss(s, y, hp.epsilon),
            Method::MsWeighting => {
                let sets = MinedSets::all_pairs(y);
                ms_loss_with_sets(s, y, &sets, hp.alpha, hp.beta, hp.lambda)
            }
            Method::BinomialMined => {
                let sets = ms_mine(s, y, hp.epsilon);
                binomial_mined_loss(s, y, &sets, hp.alpha, hp.beta, hp.lambda)
            }
            Method::LiftedStarMined => {
                let sets = ms_mine(s, y, hp.epsilon);
                lifted_star_mined_loss(s, y, &sets, hp.alpha, hp.beta)
            }
        }
    }

    fn kink_distance(&self, s: &SimilarityMatrix, y: &LabelVector, hp: &HyperParams) -> f64 {
        match self {
            Method::Contrastive => classic::contrastive_kink_distance(s, y, hp.margin),
            Method::Triplet => classic::triplet_kink_distance(s, y, hp.margin),
            Method::Lifted => lifted::lifted_kink_distance(s, y, hp.lambda),
            Method::Binomial | Method::LiftedStar | Method::BinLifted | Method::MsWeighting => {
                f64::INFINITY
            }
            Method::Ms | Method::MsMining | Method::BinomialMined | Method::LiftedStarMined => {
                ms::mining_kink_distance(s, y, hp.epsilon)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn unknown_method_name_is_rejected() {
        match "frobnicate".parse::<Method>() {
            Err(Error::UnknownMethod(name)) => assert_eq!(name, "frobnicate"),
            other => panic!("expected UnknownMethod, got {other:?}"),
        }
    }

    #[test]
    fn every_loss_respects_the_sign_convention() {
        use crate::gpw::{check_sign_convention, random_instance, seeded_rng};
        let hp = HyperParams::default();
        let mut rng = seeded_rng(77);
        for _ in 0..20 {
            let (s, y) = random_instance(&mut rng, 8, 4);
            for method in Method::ALL {
                let grad = method.grad(&s, &y, &hp).unwrap();
                check_sign_convention(&grad, &y).unwrap_or_else(|e| panic!("{method}: {e}"));
            }
        }
    }

    #[test]
    fn label_count_must_match_the_similarity_size() {
        use crate::gpw::{random_instance, seeded_rng};
        let (s, _) = random_instance(&mut seeded_rng(1), 6, 3);
        let short = LabelVector::new(vec![0, 1, 0]);
        let hp = HyperParams::default();
        assert!(Method::Binomial.eval(&s, &short, &hp).is_err());
    }

    #[test]
    fn stable_helpers_agree_with_naive_forms() {
        for &x in &[-30.0_f64, -1.5, 0.0, 0.3, 20.0] {
            assert!((sigmoid(x) - 1.0 / (1.0 + (-x).exp())).abs() < 1e-12);
            assert!((softplus(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
        let xs: [f64; 3] = [0.2, -1.0, 3.0];
        let naive = (xs.iter().map(|&x| x.exp()).sum::<f64>()).ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-12);
        let naive1p = (1.0 + xs.iter().map(|&x| x.exp()).sum::<f64>()).ln();
        assert!((log1p_sum_exp(&xs) - naive1p).abs() < 1e-12);
        assert!((log1p_sum_exp(&[]) - 0.0).abs() < 1e-15);
        let sm = softmax(&xs);
        assert!((sm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
