//! Gradient verification harnesses: loss-level checks of `dL/dS` against
//! the central-difference oracle, and end-to-end checks of `dL/dW` through
//! the trainer's backward pass.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{l2_normalize, similarity_matrix, FeatureMatrix, HyperParams, LabelVector};
use crate::gpw::{fd_gradient, grad_score, sample_smooth_instance, seeded_rng, PairLoss};
use crate::losses::Method;
use crate::trainer::{backward, forward, ModelParams};
use crate::Result;

/// Step for the similarity-space oracle.
pub const FD_STEP: f64 = 1e-5;
/// Step for the weight-space oracle; smaller because the sharpest losses
/// have large third derivatives through the embedding chain.
pub const PARAM_FD_STEP: f64 = 1e-6;
/// Relative tolerance for `dL/dS` checks.
pub const LOSS_RTOL: f64 = 1e-5;
/// Relative tolerance for `dL/dW` checks.
pub const PARAM_RTOL: f64 = 1e-4;
/// Absolute floor below which gradient differences are ignored.
pub const GRAD_FLOOR: f64 = 1e-8;
/// Instances per method for the loss-level suite.
pub const LOSS_INSTANCES: usize = 50;
/// Instances per method for the end-to-end suite.
pub const PARAM_INSTANCES: usize = 20;

const LOSS_KINK_MARGIN: f64 = 10.0 * FD_STEP;
const PARAM_KINK_MARGIN: f64 = 1e-3;

/// Worst score of a verification run and where it occurred.
#[derive(Debug, Clone, Copy)]
pub struct CheckOutcome {
    pub max_score: f64,
    pub worst_entry: (usize, usize),
}

impl CheckOutcome {
    fn observe(&mut self, score: f64, entry: (usize, usize)) {
        if score > self.max_score {
            self.max_score = score;
            self.worst_entry = entry;
        }
    }
}

/// Compares a method's analytic `dL/dS` (symmetrized) to the oracle on
/// `instances` random boundary-avoiding instances with `m <= m_max`.
/// `corrupt` injects a deliberate error into the first instance's analytic
/// gradient, a self-test that the harness catches real mismatches.
pub fn loss_gradient_check(
    method: Method,
    hp: &HyperParams,
    seed: u64,
    instances: usize,
    m_max: usize,
    corrupt: bool,
) -> Result<CheckOutcome> {
    let mut rng = seeded_rng(seed);
    rng.set_stream(10 + method_stream(method));
    let mut outcome = CheckOutcome {
        max_score: 0.0,
        worst_entry: (0, 0),
    };
    for instance in 0..instances {
        let m = rng.random_range(6..=m_max);
        let dim = rng.random_range(3..=6);
        let (s, y) = sample_smooth_instance(&method, hp, &mut rng, m, dim, LOSS_KINK_MARGIN);
        let mut analytic = method.grad(&s, &y, hp)?.symmetrized();
        if corrupt && instance == 0 {
            analytic[(0, 1)] += 0.5;
        }
        let oracle = fd_gradient(&method, &s, &y, hp, FD_STEP)?;
        for i in 0..m {
            for j in 0..m {
                let score = grad_score(analytic[(i, j)], oracle.get(i, j), LOSS_RTOL, GRAD_FLOOR);
                outcome.observe(score, (i, j));
            }
        }
    }
    Ok(outcome)
}

/// Checks `dL/dW` computed by `forward`/`backward` against central
/// differences over every weight entry, on random small models and
/// batches.
pub fn param_gradient_check(
    method: Method,
    hp: &HyperParams,
    seed: u64,
    instances: usize,
) -> Result<CheckOutcome> {
    let mut rng = seeded_rng(seed);
    rng.set_stream(50 + method_stream(method));
    let mut outcome = CheckOutcome {
        max_score: 0.0,
        worst_entry: (0, 0),
    };
    for _ in 0..instances {
        let (x, y, params) = sample_model_instance(&method, hp, &mut rng)?;
        let pass = forward(&params, &x)?;
        let s = similarity_matrix(&pass.embeddings);
        let out = method.eval(&s, &y, hp)?;
        let analytic = backward(&out.grad, &pass, &x);

        let (l, d) = (params.embed_dim(), params.input_dim());
        let mut w = params.as_array().clone();
        for p in 0..l {
            for q in 0..d {
                w[(p, q)] += PARAM_FD_STEP;
                let plus = loss_at(&method, hp, &w, &x, &y)?;
                w[(p, q)] -= 2.0 * PARAM_FD_STEP;
                let minus = loss_at(&method, hp, &w, &x, &y)?;
                w[(p, q)] += PARAM_FD_STEP;
                let fd = (plus - minus) / (2.0 * PARAM_FD_STEP);
                let score = grad_score(analytic[(p, q)], fd, PARAM_RTOL, GRAD_FLOOR);
                outcome.observe(score, (p, q));
            }
        }
    }
    Ok(outcome)
}

fn loss_at(
    method: &Method,
    hp: &HyperParams,
    w: &Array2<f64>,
    x: &Array2<f64>,
    y: &LabelVector,
) -> Result<f64> {
    let params = ModelParams::from_matrix(w.clone())?;
    let pass = forward(&params, x)?;
    let s = similarity_matrix(&pass.embeddings);
    method.value(&s, y, hp)
}

/// Draws `(X, y, W)` with unit feature rows, comfortable pre-normalization
/// norms, and the similarity matrix clear of the method's kinks, so the
/// weight-space oracle stays on smooth ground.
fn sample_model_instance(
    method: &Method,
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, LabelVector, ModelParams)> {
    loop {
        let m = rng.random_range(6..=10);
        let d = rng.random_range(3..=6);
        let l = rng.random_range(2..=4);
        let classes = (m / 2).clamp(2, 3);
        let y = LabelVector::new((0..m).map(|i| i % classes).collect());
        let raw = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0));
        let Ok(features) = FeatureMatrix::new(raw) else {
            continue;
        };
        let Ok(e) = l2_normalize(&features) else {
            continue;
        };
        let x = e.view().to_owned();
        let Ok(params) = ModelParams::init(l, d, rng) else {
            continue;
        };
        let Ok(pass) = forward(&params, &x) else {
            continue;
        };
        let norm_ok = (0..m).all(|i| {
            let z = params.as_array().dot(&x.row(i));
            z.dot(&z).sqrt() > 0.2
        });
        if !norm_ok {
            continue;
        }
        let s = similarity_matrix(&pass.embeddings);
        if method.kink_distance(&s, &y, hp) <= PARAM_KINK_MARGIN {
            continue;
        }
        return Ok((x, y, params));
    }
}

fn method_stream(method: Method) -> u64 {
    Method::ALL
        .iter()
        .position(|&m| m == method)
        .expect("method is listed") as u64
}
