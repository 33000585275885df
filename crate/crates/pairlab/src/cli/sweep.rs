//! Weight sweeps over a fixed miniature batch, one per similarity type.
//!
//! The batch has five samples with labels (0, 0, 0, 1, 1); the observed
//! pair is always anchor 0 against negative 3. Each scenario varies one
//! aspect of the similarity structure and records every method's weight
//! `|dL/dS_03|` along the way, which makes the methods' sensitivities
//! directly comparable: own-similarity methods react to the `s` sweep,
//! mining reacts to `p`, group-softmax methods react to `n`.

use ndarray::Array2;

use crate::config::Scenario;
use crate::embedding::{HyperParams, LabelVector, SimilarityMatrix};
use crate::gpw::PairLoss;
use crate::losses::Method;
use crate::Result;

/// Methods shown as sweep columns, in output order.
pub const SWEEP_METHODS: [Method; 9] = [
    Method::Contrastive,
    Method::Triplet,
    Method::Lifted,
    Method::Binomial,
    Method::LiftedStar,
    Method::BinLifted,
    Method::MsMining,
    Method::MsWeighting,
    Method::Ms,
];

pub const SWEEP_ANCHOR: usize = 0;
pub const SWEEP_TARGET: usize = 3;

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub scenario: Scenario,
    /// Which similarity the first column reports.
    pub param_name: &'static str,
    /// One row per sweep point: the swept similarity value and the weight
    /// of the observed pair under each of [`SWEEP_METHODS`].
    pub rows: Vec<(f64, Vec<f64>)>,
}

fn batch_labels() -> LabelVector {
    LabelVector::new(vec![0, 0, 0, 1, 1])
}

fn matrix(entries: [(usize, usize, f64); 10]) -> SimilarityMatrix {
    let mut data = Array2::zeros((5, 5));
    for i in 0..5 {
        data[(i, i)] = 1.0;
    }
    for (i, j, v) in entries {
        data[(i, j)] = v;
        data[(j, i)] = v;
    }
    SimilarityMatrix::from_matrix_unchecked(data)
}

fn grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + step * k as f64).collect()
}

/// Runs the scenario's sweep and collects per-method weights of the
/// observed pair.
pub fn weight_sweep(scenario: Scenario, hp: &HyperParams) -> Result<SweepTable> {
    let y = batch_labels();
    let (param_name, points): (&'static str, Vec<(f64, SimilarityMatrix)>) = match scenario {
        // Weak positives keep both negatives mined across the whole
        // sweep; the anchor's negative group shifts together so relative
        // structure stays fixed while self-similarity moves.
        Scenario::SelfSimilarity => (
            "S_anchor_target",
            grid(-0.30, 0.05, 13)
                .into_iter()
                .map(|c| {
                    let s = matrix([
                        (0, 1, 0.2),
                        (0, 2, 0.3),
                        (0, 3, 0.55 + c),
                        (0, 4, 0.45 + c),
                        (1, 2, 0.25),
                        (1, 3, 0.15),
                        (1, 4, 0.1),
                        (2, 3, 0.12),
                        (2, 4, 0.18),
                        (3, 4, 0.4),
                    ]);
                    (0.55 + c, s)
                })
                .collect(),
        ),
        // The anchor's hardest positive moves away; with the mining
        // margin 0.1 and the target negative at 0.55, selection flips at
        // a positive similarity of 0.65.
        Scenario::PositiveRelative => (
            "S_anchor_hardest_positive",
            grid(0.0, 1.0, 13)
                .into_iter()
                .map(|k| {
                    let v = 0.9 - 0.05 * k;
                    let s = matrix([
                        (0, 1, v),
                        (0, 2, 0.85),
                        (0, 3, 0.55),
                        (0, 4, 0.45),
                        (1, 2, 0.8),
                        (1, 3, 0.2),
                        (1, 4, 0.15),
                        (2, 3, 0.1),
                        (2, 4, 0.12),
                        (3, 4, 0.5),
                    ]);
                    (v, s)
                })
                .collect(),
        ),
        // A competitor negative weakens while the observed pair stays
        // fixed.
        Scenario::NegativeRelative => (
            "S_anchor_competitor",
            grid(0.0, 1.0, 16)
                .into_iter()
                .map(|k| {
                    let v = 0.80 - 0.05 * k;
                    let s = matrix([
                        (0, 1, 0.6),
                        (0, 2, 0.7),
                        (0, 3, 0.55),
                        (0, 4, v),
                        (1, 2, 0.65),
                        (1, 3, 0.2),
                        (1, 4, 0.1),
                        (2, 3, 0.15),
                        (2, 4, 0.1),
                        (3, 4, 0.3),
                    ]);
                    (v, s)
                })
                .collect(),
        ),
    };

    let mut rows = Vec::with_capacity(points.len());
    for (value, s) in points {
        let mut weights = Vec::with_capacity(SWEEP_METHODS.len());
        for method in SWEEP_METHODS {
            let grad = method.grad(&s, &y, hp)?;
            weights.push(grad.get(SWEEP_ANCHOR, SWEEP_TARGET).abs());
        }
        rows.push((value, weights));
    }
    Ok(SweepTable {
        scenario,
        param_name,
        rows,
    })
}
