//! General pair weighting: a uniform loss interface over `(S, y)`, weight
//! extraction from loss gradients, a central-difference gradient oracle,
//! and the frozen-gradient surrogate used to train gradient-defined
//! methods.
//!
//! Sign convention: for a loss that pulls positives together and pushes
//! negatives apart, `dL/dS_ij <= 0` on positive pairs and `>= 0` on
//! negative pairs, so `w_ij = |dL/dS_ij|` is the pair's weight.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{
    l2_normalize, similarity_matrix, FeatureMatrix, HyperParams, LabelVector, SimilarityMatrix,
};
use crate::losses::LossOutput;
use crate::{Error, Result};

/// Matrix of `dL/dS_ij` for every ordered pair; diagonal entries are zero
/// because no loss consumes `S_ii`.
#[derive(Debug, Clone)]
pub struct GradMatrix {
    data: Array2<f64>,
}

impl GradMatrix {
    pub fn zeros(m: usize) -> Self {
        Self {
            data: Array2::zeros((m, m)),
        }
    }

    pub fn from_matrix(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i, j)] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i, j)] += v;
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    /// `(G + G^T) / 2`, the quantity a symmetric-perturbation oracle sees.
    pub fn symmetrized(&self) -> Array2<f64> {
        (&self.data + &self.data.t()) / 2.0
    }
}

/// Matrix of non-negative pair weights `w_ij = |dL/dS_ij|`.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    data: Array2<f64>,
}

impl WeightMatrix {
    pub fn from_matrix(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }
}

/// A loss expressed in terms of the similarity matrix and labels.
pub trait PairLoss {
    fn name(&self) -> &'static str;

    /// Loss value together with `dL/dS` for every ordered pair.
    fn eval(&self, s: &SimilarityMatrix, y: &LabelVector, hp: &HyperParams) -> Result<LossOutput>;

    fn value(&self, s: &SimilarityMatrix, y: &LabelVector, hp: &HyperParams) -> Result<f64> {
        Ok(self.eval(s, y, hp)?.value)
    }

    fn grad(&self, s: &SimilarityMatrix, y: &LabelVector, hp: &HyperParams) -> Result<GradMatrix> {
        Ok(self.eval(s, y, hp)?.grad)
    }

    /// Distance from `(S, y)` to the nearest non-differentiable point
    /// (hinge activation, mining threshold). Smooth losses return
    /// infinity. Finite-difference checks reject instances where this is
    /// small.
    fn kink_distance(&self, _s: &SimilarityMatrix, _y: &LabelVector, _hp: &HyperParams) -> f64 {
        f64::INFINITY
    }
}

/// Extracts `w_ij = |dL/dS_ij|` and enforces the sign convention: an entry
/// above `+1e-9` on a positive pair (or below `-1e-9` on a negative pair)
/// signals a loss implementation bug.
pub fn weights_from_gradient(
    loss: &dyn PairLoss,
    s: &SimilarityMatrix,
    y: &LabelVector,
    hp: &HyperParams,
) -> Result<WeightMatrix> {
    let grad = loss.grad(s, y, hp)?;
    check_sign_convention(&grad, y)?;
    Ok(WeightMatrix {
        data: grad.as_array().mapv(f64::abs),
    })
}

/// Verifies positive-pair entries are `<= 1e-9` and negative-pair entries
/// `>= -1e-9`.
pub fn check_sign_convention(grad: &GradMatrix, y: &LabelVector) -> Result<()> {
    let m = grad.size();
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let g = grad.get(i, j);
            if y.same_class(i, j) && g > 1e-9 {
                return Err(Error::SignViolation { i, j, value: g });
            }
            if !y.same_class(i, j) && g < -1e-9 {
                return Err(Error::SignViolation { i, j, value: g });
            }
        }
    }
    Ok(())
}

/// Central-difference oracle for `dL/dS`.
///
/// `S` is stored symmetric while the losses treat `(i, j)` and `(j, i)` as
/// distinct pairs, so each step perturbs `S_ij` and `S_ji` together and the
/// quotient is halved: entry `(i, j)` estimates
/// `(dL/dS_ij + dL/dS_ji) / 2`, the symmetrized analytic gradient.
pub fn fd_gradient(
    loss: &dyn PairLoss,
    s: &SimilarityMatrix,
    y: &LabelVector,
    hp: &HyperParams,
    h: f64,
) -> Result<GradMatrix> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Invalid(format!("fd step {h} outside [1e-6, 1e-3]")));
    }
    let m = s.size();
    let mut out = Array2::zeros((m, m));
    let mut work = s.as_array().clone();
    for i in 0..m {
        for j in 0..m {
            work[(i, j)] += h;
            work[(j, i)] += h;
            let plus = loss.value(
                &SimilarityMatrix::from_matrix_unchecked(work.clone()),
                y,
                hp,
            )?;
            work[(i, j)] -= 2.0 * h;
            work[(j, i)] -= 2.0 * h;
            let minus = loss.value(
                &SimilarityMatrix::from_matrix_unchecked(work.clone()),
                y,
                hp,
            )?;
            work[(i, j)] += h;
            work[(j, i)] += h;
            out[(i, j)] = (plus - minus) / (4.0 * h);
        }
    }
    Ok(GradMatrix { data: out })
}

/// `F(S) = sum_ij g_ij S_ij` with the gradient matrix `g` frozen as
/// constants, so `dF/dS_ij = g_ij` exactly. Stepping the model along `dF`
/// reproduces the original loss's parameter update.
pub fn surrogate_f(s: &SimilarityMatrix, frozen: &GradMatrix) -> f64 {
    let mut acc = 0.0;
    let m = s.size();
    for i in 0..m {
        for j in 0..m {
            acc += frozen.get(i, j) * s.get(i, j);
        }
    }
    acc
}

/// Pass/fail score for one gradient comparison: `|a - f|` scaled so that a
/// score `<= rtol` is exactly `|a - f| <= floor + rtol * max(|a|, |f|)`.
pub fn grad_score(analytic: f64, oracle: f64, rtol: f64, floor: f64) -> f64 {
    (analytic - oracle).abs() / (floor / rtol + analytic.abs().max(oracle.abs()))
}

/// Result of comparing a loss's analytic gradient to the oracle.
#[derive(Debug, Clone, Copy)]
pub struct GradComparison {
    pub max_score: f64,
    pub worst_entry: (usize, usize),
}

/// Compares the symmetrized analytic gradient to [`fd_gradient`] entrywise.
pub fn compare_gradients(
    loss: &dyn PairLoss,
    s: &SimilarityMatrix,
    y: &LabelVector,
    hp: &HyperParams,
    h: f64,
    rtol: f64,
    floor: f64,
) -> Result<GradComparison> {
    let analytic = loss.grad(s, y, hp)?.symmetrized();
    let oracle = fd_gradient(loss, s, y, hp, h)?;
    let m = s.size();
    let mut max_score = 0.0;
    let mut worst = (0, 0);
    for i in 0..m {
        for j in 0..m {
            let score = grad_score(analytic[(i, j)], oracle.get(i, j), rtol, floor);
            if score > max_score {
                max_score = score;
                worst = (i, j);
            }
        }
    }
    Ok(GradComparison {
        max_score,
        worst_entry: worst,
    })
}

/// Random `(S, y)` instance built from normalized random features, so `S`
/// is always a realizable similarity matrix. Labels cover at least two
/// classes and every class gets at least two members when room allows,
/// keeping positive and negative partners available.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    m: usize,
    dim: usize,
) -> (SimilarityMatrix, LabelVector) {
    assert!(m >= 4, "instances need at least 4 samples");
    let classes = (m / 2).clamp(2, 4);
    let labels: Vec<usize> = (0..m).map(|i| i % classes).collect();
    let data = Array2::from_shape_fn((m, dim), |_| rng.random_range(-1.0..1.0));
    let f = FeatureMatrix::new(data).expect("random features are valid");
    let e = match l2_normalize(&f) {
        Ok(e) => e,
        Err(_) => {
            // A random row landed on the origin; extraordinarily unlikely.
            return random_instance(rng, m, dim);
        }
    };
    (similarity_matrix(&e), LabelVector::new(labels))
}

/// Draws random instances until one sits at least `margin` away from every
/// kink of `loss`. Central differences are invalid at kinks, so oracle
/// comparisons must stay clear of them.
pub fn sample_smooth_instance(
    loss: &dyn PairLoss,
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
    m: usize,
    dim: usize,
    margin: f64,
) -> (SimilarityMatrix, LabelVector) {
    loop {
        let (s, y) = random_instance(rng, m, dim);
        if loss.kink_distance(&s, &y, hp) > margin {
            return (s, y);
        }
    }
}

/// Convenience seeded RNG used across harnesses; stream-separated from the
/// training RNGs.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
