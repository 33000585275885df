//! Desk-scale learner: class-balanced batch sampling, a linear embedding
//! map followed by L2 normalization, exact backpropagation from `dL/dS`
//! to the weight matrix, and Adam.
//!
//! The model is deliberately a single linear layer: every loss here acts
//! through the similarity matrix, so a small differentiable embedding is
//! enough to exercise the full chain, and it keeps finite-difference
//! verification of `dL/dW` cheap.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{
    similarity_matrix, EmbeddingMatrix, HyperParams, LabelVector, SimilarityMatrix, ZERO_NORM_EPS,
};
use crate::eval::{recall_at_k, recall_two_set, Dataset};
use crate::gpw::{GradMatrix, PairLoss};
use crate::losses::Method;
use crate::{Error, Result};

/// The learnable map: embeddings are `normalize(W x)` with `W` of shape
/// `embed_dim x input_dim`.
#[derive(Debug, Clone)]
pub struct ModelParams {
    w: Array2<f64>,
}

impl ModelParams {
    pub fn from_matrix(w: Array2<f64>) -> Result<Self> {
        if w.nrows() < 1 || w.ncols() < 1 {
            return Err(Error::Invalid("weight matrix must be non-empty".into()));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid(
                "weight matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { w })
    }

    /// Centered uniform entries scaled by `1/sqrt(input_dim)`.
    pub fn init(embed_dim: usize, input_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if embed_dim < 1 || input_dim < 1 {
            return Err(Error::Invalid("model dimensions must be at least 1".into()));
        }
        let scale = 1.0 / (input_dim as f64).sqrt();
        let w = Array2::from_shape_fn((embed_dim, input_dim), |_| {
            rng.random_range(-1.0..1.0) * scale
        });
        Ok(Self { w })
    }

    pub fn embed_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn as_array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates and step counter for one weight matrix.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Array2<f64>,
    v: Array2<f64>,
    t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(shape: (usize, usize), hyper: AdamHyper) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
            hyper,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grad_w: &Array2<f64>) {
    let h = state.hyper;
    state.t += 1;
    let bc1 = 1.0 - h.beta1.powi(state.t as i32);
    let bc2 = 1.0 - h.beta2.powi(state.t as i32);
    let w = params.as_array_mut();
    for ((m, v), (w, &g)) in state
        .m
        .iter_mut()
        .zip(state.v.iter_mut())
        .zip(w.iter_mut().zip(grad_w.iter()))
    {
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
}

/// Class-balanced batch shape: `classes_per_batch` distinct classes with
/// `instances_per_class` samples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub classes_per_batch: usize,
    pub instances_per_class: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            classes_per_batch: 8,
            instances_per_class: 5,
        }
    }
}

impl BatchSpec {
    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.instances_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes_per_batch < 2 {
            return Err(Error::Invalid("batch needs at least 2 classes".into()));
        }
        if self.instances_per_class < 2 {
            return Err(Error::Invalid(
                "batch needs at least 2 instances per class for positives".into(),
            ));
        }
        Ok(())
    }
}

/// Samples a class-balanced batch: `classes_per_batch` classes chosen
/// uniformly without replacement among classes with enough members, then
/// `instances_per_class` samples per class without replacement.
pub fn batch_sample(y: &LabelVector, spec: &BatchSpec, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut classes: Vec<usize> = y.as_slice().to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..y.len()).filter(|&i| y.get(i) == c).collect())
        .collect();
    let eligible: Vec<usize> = (0..classes.len())
        .filter(|&ci| members[ci].len() >= spec.instances_per_class)
        .collect();
    if eligible.len() < spec.classes_per_batch {
        return Err(Error::InsufficientClassPopulation {
            eligible: eligible.len(),
            needed: spec.classes_per_batch,
            per_class: spec.instances_per_class,
        });
    }
    let mut batch = Vec::with_capacity(spec.batch_size());
    let chosen = rand::seq::index::sample(rng, eligible.len(), spec.classes_per_batch);
    for ec in chosen.iter() {
        let pool = &members[eligible[ec]];
        let picks = rand::seq::index::sample(rng, pool.len(), spec.instances_per_class);
        for p in picks.iter() {
            batch.push(pool[p]);
        }
    }
    Ok(batch)
}

/// Embeddings plus what the backward pass needs: the pre-normalization
/// row norms.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub embeddings: EmbeddingMatrix,
    norms: Vec<f64>,
}

/// `Z = X W^T`, then row normalization.
pub fn forward(params: &ModelParams, x_batch: &Array2<f64>) -> Result<ForwardPass> {
    if x_batch.ncols() != params.input_dim() {
        return Err(Error::Invalid(format!(
            "batch dim {} does not match model input dim {}",
            x_batch.ncols(),
            params.input_dim()
        )));
    }
    let mut z = x_batch.dot(&params.as_array().t());
    let mut norms = Vec::with_capacity(z.nrows());
    for (i, mut row) in z.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm <= ZERO_NORM_EPS {
            return Err(Error::ZeroNormRow(i));
        }
        row.mapv_inplace(|v| v / norm);
        norms.push(norm);
    }
    Ok(ForwardPass {
        embeddings: EmbeddingMatrix::new_unchecked(z),
        norms,
    })
}

/// Chain rule from `dL/dS` to `dL/dW`. The similarity matrix is the
/// symmetric product `E E^T`, so the embedding gradient uses
/// `G + G^T`; normalization then projects out each row's radial component
/// and rescales by the stored pre-normalization norm.
pub fn backward(grad_s: &GradMatrix, pass: &ForwardPass, x_batch: &Array2<f64>) -> Array2<f64> {
    let e = pass.embeddings.view();
    let sym = grad_s.as_array() + &grad_s.as_array().t();
    let grad_e = sym.dot(&e);
    let mut grad_z = grad_e;
    for (i, mut row) in grad_z.rows_mut().into_iter().enumerate() {
        let ei = pass.embeddings.row(i);
        let radial = row.dot(&ei);
        for (g, &u) in row.iter_mut().zip(ei.iter()) {
            *g = (*g - radial * u) / pass.norms[i];
        }
    }
    grad_z.t().dot(x_batch)
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub method: Method,
    pub hp: HyperParams,
    pub batch: BatchSpec,
    pub embed_dim: usize,
    pub opt: AdamHyper,
    pub epochs: usize,
    pub seed: u64,
}

/// How the per-epoch retrieval metric is computed.
pub enum EvalMode<'a> {
    /// Single-set retrieval over the dataset's held-out test split.
    HeldOut,
    /// The full training set queries an external gallery.
    TwoSet { gallery: &'a Dataset },
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub loss: f64,
    pub recall1: f64,
    pub wall: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug)]
pub struct TrainRun {
    pub params: ModelParams,
    pub history: TrainHistory,
    /// Recall@1 of the freshly initialized (untrained) projection.
    pub baseline_recall1: f64,
    /// Snapshot at the epoch with the highest held-out Recall@1 (ties keep
    /// the earlier epoch); equals the initialization when no epoch ran.
    pub best_params: ModelParams,
    /// Epoch of `best_params`, 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
    /// Recall@1 achieved by `best_params`.
    pub best_recall1: f64,
}

fn eval_recall1(params: &ModelParams, dataset: &Dataset, mode: &EvalMode) -> Result<f64> {
    match mode {
        EvalMode::HeldOut => {
            let split = dataset
                .split
                .as_ref()
                .ok_or_else(|| Error::Invalid("held-out evaluation needs a split".into()))?;
            if split.test.is_empty() {
                return Err(Error::Invalid("test split is empty".into()));
            }
            let x = dataset.features.select_rows(&split.test);
            let y = dataset.subset_labels(&split.test);
            let pass = forward(params, &x)?;
            let report = recall_at_k(&pass.embeddings, &y, &[1])?;
            Ok(report.recall_at(1).expect("K=1 was requested"))
        }
        EvalMode::TwoSet { gallery } => {
            let qx = dataset.features.view().to_owned();
            let q = forward(params, &qx)?;
            let gx = gallery.features.view().to_owned();
            let g = forward(params, &gx)?;
            let report = recall_two_set(
                &q.embeddings,
                &dataset.labels,
                &g.embeddings,
                &gallery.labels,
                &[1],
            )?;
            Ok(report.recall_at(1).expect("K=1 was requested"))
        }
    }
}

/// Runs `epochs` of sample/forward/loss/backward/step, recording the mean
/// batch loss and held-out Recall@1 per epoch. Deterministic per seed:
/// the dataset is untouched, initialization and batch draws come from
/// separate seeded streams.
pub fn train(cfg: &TrainConfig, dataset: &Dataset, eval: EvalMode) -> Result<TrainRun> {
    cfg.hp.validate()?;
    cfg.batch.validate()?;
    let train_idx: Vec<usize> = match &dataset.split {
        Some(split) => split.train.clone(),
        None => (0..dataset.len()).collect(),
    };
    if train_idx.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let train_labels = dataset.subset_labels(&train_idx);

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(1);
    let mut params = ModelParams::init(cfg.embed_dim, dataset.features.dim(), &mut init_rng)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(2);

    let baseline_recall1 = eval_recall1(&params, dataset, &eval)?;
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_recall1 = baseline_recall1;

    let mut state = AdamState::new((cfg.embed_dim, dataset.features.dim()), cfg.opt);
    let batches_per_epoch = (train_idx.len() / cfg.batch.batch_size()).max(1);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        for _ in 0..batches_per_epoch {
            let local = batch_sample(&train_labels, &cfg.batch, &mut batch_rng)?;
            let global: Vec<usize> = local.iter().map(|&p| train_idx[p]).collect();
            let x = dataset.features.select_rows(&global);
            let y = dataset.subset_labels(&global);
            let pass = forward(&params, &x)?;
            let s: SimilarityMatrix = similarity_matrix(&pass.embeddings);
            let out = cfg.method.eval(&s, &y, &cfg.hp)?;
            let grad_w = backward(&out.grad, &pass, &x);
            adam_step(&mut state, &mut params, &grad_w);
            loss_sum += out.value;
        }
        let recall1 = eval_recall1(&params, dataset, &eval)?;
        if recall1 > best_recall1 {
            best_recall1 = recall1;
            best_epoch = epoch;
            best_params = params.clone();
        }
        history.epochs.push(EpochStats {
            loss: loss_sum / batches_per_epoch as f64,
            recall1,
            wall: started.elapsed(),
        });
    }
    Ok(TrainRun {
        params,
        history,
        baseline_recall1,
        best_params,
        best_epoch,
        best_recall1,
    })
}
