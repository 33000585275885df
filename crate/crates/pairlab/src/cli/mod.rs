//! Command implementations behind the binary: training runs, gradient
//! verification, the ablation grid, and weight-sweep dumps.
//!
//! Every command is deterministic given its configuration and seed, and
//! output documents embed the full effective configuration, so reruns are
//! byte-identical and self-describing.

pub mod gradcheck;
pub mod sweep;

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataSource, RunConfig, Scenario};
use crate::eval::{
    load_dataset, recall_at_k, recall_two_set, synth_dataset, Dataset, RecallReport,
};
use crate::losses::Method;
use crate::trainer::{forward, train, EvalMode, ModelParams, TrainRun};
use crate::{Error, Result};

use gradcheck::{
    loss_gradient_check, param_gradient_check, CheckOutcome, LOSS_INSTANCES, LOSS_RTOL,
    PARAM_INSTANCES, PARAM_RTOL,
};
use sweep::{weight_sweep, SWEEP_ANCHOR, SWEEP_METHODS, SWEEP_TARGET};

/// Ablation rows, trained on one shared dataset and seed.
pub const ABLATION_METHODS: [Method; 11] = [
    Method::Contrastive,
    Method::Triplet,
    Method::Lifted,
    Method::Binomial,
    Method::LiftedStar,
    Method::BinLifted,
    Method::MsMining,
    Method::MsWeighting,
    Method::BinomialMined,
    Method::LiftedStarMined,
    Method::Ms,
];

/// Dataset resolved from the configured source.
pub enum LoadedData {
    /// Train on the split's train half, evaluate single-set retrieval on
    /// the held-out half.
    Single(Dataset),
    /// Train on all of the first file, evaluate it as queries against the
    /// gallery.
    TwoSet { train: Dataset, gallery: Dataset },
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    match &cfg.data {
        DataSource::Synth {
            classes,
            per_class,
            dim,
            noise,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(0);
            Ok(LoadedData::Single(synth_dataset(
                *classes, *per_class, *dim, *noise, &mut rng,
            )?))
        }
        DataSource::File(path) => Ok(LoadedData::Single(load_dataset(path)?)),
        DataSource::QueryGallery { query, gallery } => {
            let mut tr = load_dataset(query)?;
            tr.split = None; // every sample trains; the gallery is separate
            Ok(LoadedData::TwoSet {
                train: tr,
                gallery: load_dataset(gallery)?,
            })
        }
    }
}

fn run_training(cfg: &RunConfig, method: Method, data: &LoadedData) -> Result<TrainRun> {
    let mut tc = cfg.train_config();
    tc.method = method;
    match data {
        LoadedData::Single(ds) => train(&tc, ds, EvalMode::HeldOut),
        LoadedData::TwoSet { train: ds, gallery } => train(&tc, ds, EvalMode::TwoSet { gallery }),
    }
}

fn final_recall(params: &ModelParams, data: &LoadedData, ks: &[usize]) -> Result<RecallReport> {
    match data {
        LoadedData::Single(ds) => {
            let split = ds
                .split
                .as_ref()
                .ok_or_else(|| Error::Invalid("single-set evaluation needs a split".into()))?;
            let x = ds.features.select_rows(&split.test);
            let y = ds.subset_labels(&split.test);
            let pass = forward(params, &x)?;
            recall_at_k(&pass.embeddings, &y, ks)
        }
        LoadedData::TwoSet { train: ds, gallery } => {
            let q = forward(params, &ds.features.view().to_owned())?;
            let g = forward(params, &gallery.features.view().to_owned())?;
            recall_two_set(
                &q.embeddings,
                &ds.labels,
                &g.embeddings,
                &gallery.labels,
                ks,
            )
        }
    }
}

fn write_output(out: &Option<PathBuf>, doc: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, doc)?,
        None => print!("{doc}"),
    }
    Ok(())
}

fn push_config(doc: &mut String, cfg: &RunConfig) {
    doc.push_str("[config]\n");
    for line in cfg.echo_lines() {
        doc.push_str(&line);
        doc.push('\n');
    }
    doc.push('\n');
}

/// Trains the configured method and writes the result document: config
/// echo, per-epoch history, and the final recall report.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let doc = train_document(cfg)?;
    write_output(&cfg.out, &doc)
}

pub fn train_document(cfg: &RunConfig) -> Result<String> {
    let data = load_data(cfg)?;
    let run = run_training(cfg, cfg.method, &data)?;
    let report = final_recall(&run.params, &data, &cfg.eval_ks)?;

    let mut doc = String::new();
    doc.push_str("# pairlab train result\nformat = 1\n\n");
    push_config(&mut doc, cfg);
    doc.push_str("[history]\nepoch\tloss\trecall@1\n");
    for (idx, epoch) in run.history.epochs.iter().enumerate() {
        writeln!(doc, "{}\t{}\t{}", idx + 1, epoch.loss, epoch.recall1).expect("string write");
    }
    doc.push('\n');
    doc.push_str("[result]\n");
    writeln!(doc, "baseline_recall@1 = {}", run.baseline_recall1).expect("string write");
    writeln!(doc, "best_recall@1 = {}", run.best_recall1).expect("string write");
    writeln!(doc, "best_epoch = {}", run.best_epoch).expect("string write");
    writeln!(doc, "epochs = {}", run.history.epochs.len()).expect("string write");
    writeln!(doc, "excluded_queries = {}", report.excluded_queries).expect("string write");
    doc.push('\n');
    doc.push_str("[recall]\nK\trecall\n");
    for (k, r) in &report.entries {
        writeln!(doc, "{k}\t{r}").expect("string write");
    }
    Ok(doc)
}

/// Runs loss-level and end-to-end gradient checks for every method with a
/// scalar loss and writes the report. Returns [`Error::ToleranceExceeded`]
/// after writing when any method fails.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<()> {
    let (doc, failure) = gradcheck_document(cfg)?;
    write_output(&cfg.out, &doc)?;
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

pub fn gradcheck_document(cfg: &RunConfig) -> Result<(String, Option<Error>)> {
    let mut doc = String::new();
    doc.push_str("# pairlab gradient check\nformat = 1\n\n");
    push_config(&mut doc, cfg);
    doc.push_str("[report]\nmethod\tloss_grad_score\tparam_grad_score\tstatus\n");
    let mut failure: Option<Error> = None;
    for method in Method::ALL {
        if !method.gradient_checkable() {
            writeln!(doc, "{method}\t-\t-\tskipped: gradient-defined method")
                .expect("string write");
            continue;
        }
        let loss = loss_gradient_check(
            method,
            &cfg.hp,
            cfg.seed,
            LOSS_INSTANCES,
            12,
            cfg.gradcheck_corrupt,
        )?;
        let param = param_gradient_check(method, &cfg.hp, cfg.seed, PARAM_INSTANCES)?;
        let ok = loss.max_score <= LOSS_RTOL && param.max_score <= PARAM_RTOL;
        writeln!(
            doc,
            "{method}\t{:e}\t{:e}\t{}",
            loss.max_score,
            param.max_score,
            if ok { "ok" } else { "failed" }
        )
        .expect("string write");
        if !ok && failure.is_none() {
            let worst: &CheckOutcome = if loss.max_score > LOSS_RTOL {
                &loss
            } else {
                &param
            };
            failure = Some(Error::ToleranceExceeded {
                method: method.to_string(),
                i: worst.worst_entry.0,
                j: worst.worst_entry.1,
                score: worst.max_score,
            });
        }
    }
    doc.push('\n');
    doc.push_str("[summary]\n");
    writeln!(doc, "loss_tolerance = {LOSS_RTOL:e}").expect("string write");
    writeln!(doc, "param_tolerance = {PARAM_RTOL:e}").expect("string write");
    writeln!(doc, "loss_instances = {LOSS_INSTANCES}").expect("string write");
    writeln!(doc, "param_instances = {PARAM_INSTANCES}").expect("string write");
    writeln!(doc, "passed = {}", failure.is_none()).expect("string write");
    Ok((doc, failure))
}

/// Trains every ablation method on the same dataset and seed and writes a
/// recall table sorted by the first configured K (descending), ties broken
/// by method name. Each row reports the method's best-epoch model (by
/// held-out Recall@1), the usual selection protocol for losses whose raw
/// objective keeps improving after retrieval quality has peaked.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let doc = ablate_document(cfg)?;
    write_output(&cfg.out, &doc)
}

pub fn ablate_document(cfg: &RunConfig) -> Result<String> {
    let data = load_data(cfg)?;
    let mut ks = cfg.eval_ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut rows: Vec<(Method, Vec<f64>)> = Vec::new();
    for method in ABLATION_METHODS {
        let run = run_training(cfg, method, &data)?;
        let report = final_recall(&run.best_params, &data, &ks)?;
        rows.push((method, report.entries.iter().map(|&(_, r)| r).collect()));
    }
    rows.sort_by(|a, b| {
        b.1[0]
            .partial_cmp(&a.1[0])
            .expect("recall values are finite")
            .then_with(|| a.0.as_str().cmp(b.0.as_str()))
    });

    let mut doc = String::new();
    doc.push_str("# pairlab ablation\nformat = 1\n\n");
    push_config(&mut doc, cfg);
    doc.push_str("[notes]\n");
    doc.push_str("model_selection = best epoch by held-out recall@1\n");
    writeln!(doc, "mined_variant_mining_margin = {}", cfg.hp.epsilon).expect("string write");
    doc.push('\n');
    doc.push_str("[table]\nmethod");
    for k in &ks {
        write!(doc, "\trecall@{k}").expect("string write");
    }
    doc.push('\n');
    for (method, recalls) in rows {
        write!(doc, "{method}").expect("string write");
        for r in recalls {
            write!(doc, "\t{r}").expect("string write");
        }
        doc.push('\n');
    }
    Ok(doc)
}

/// Evaluates every method's weight for one pair while sweeping the
/// scenario's similarity, and writes the table for plotting.
pub fn cmd_dump_weights(cfg: &RunConfig) -> Result<()> {
    let doc = dump_weights_document(cfg)?;
    write_output(&cfg.out, &doc)
}

pub fn dump_weights_document(cfg: &RunConfig) -> Result<String> {
    let table = weight_sweep(cfg.scenario, &cfg.hp)?;
    let mut doc = String::new();
    doc.push_str("# pairlab weight sweep\nformat = 1\n\n");
    push_config(&mut doc, cfg);
    doc.push_str("[sweep]\n");
    writeln!(doc, "scenario = {}", scenario_name(cfg.scenario)).expect("string write");
    writeln!(doc, "anchor = {SWEEP_ANCHOR}").expect("string write");
    writeln!(doc, "target = {SWEEP_TARGET}").expect("string write");
    writeln!(doc, "swept = {}", table.param_name).expect("string write");
    doc.push('\n');
    doc.push_str("[table]\n");
    write!(doc, "{}", table.param_name).expect("string write");
    for method in SWEEP_METHODS {
        write!(doc, "\t{method}").expect("string write");
    }
    doc.push('\n');
    for (value, weights) in &table.rows {
        write!(doc, "{value}").expect("string write");
        for w in weights {
            write!(doc, "\t{w:e}").expect("string write");
        }
        doc.push('\n');
    }
    Ok(doc)
}

fn scenario_name(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::SelfSimilarity => "s (self-similarity)",
        Scenario::PositiveRelative => "p (positive relative similarity)",
        Scenario::NegativeRelative => "n (negative relative similarity)",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> RunConfig {
        let mut cfg = RunConfig {
            data: DataSource::Synth {
                classes: 4,
                per_class: 10,
                dim: 8,
                noise: 0.2,
            },
            embed_dim: 6,
            epochs: 3,
            seed: 5,
            ..RunConfig::default()
        };
        cfg.batch.classes_per_batch = 3;
        cfg.batch.instances_per_class = 2;
        cfg
    }

    #[test]
    fn train_document_is_self_describing_and_deterministic() {
        let cfg = quick_cfg();
        let a = train_document(&cfg).unwrap();
        let b = train_document(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("[config]"));
        assert!(a.contains("method = ms"));
        assert!(a.contains("seed = 5"));
        assert!(a.contains("[recall]"));
        assert_eq!(a.matches("[history]").count(), 1);
        let history = a.split("[history]").nth(1).unwrap();
        let epochs = history
            .lines()
            .skip(2)
            .take_while(|l| !l.is_empty())
            .count();
        assert_eq!(epochs, 3);
    }

    #[test]
    fn train_recall_table_is_nondecreasing_in_k() {
        let doc = train_document(&quick_cfg()).unwrap();
        let recall_section = doc.split("[recall]").nth(1).unwrap();
        let values: Vec<f64> = recall_section
            .lines()
            .skip(2)
            .filter(|l| !l.is_empty())
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(values.len(), 4);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ablation_has_a_row_per_method() {
        let mut cfg = quick_cfg();
        cfg.epochs = 1;
        let doc = ablate_document(&cfg).unwrap();
        let table = doc.split("[table]").nth(1).unwrap();
        for method in ABLATION_METHODS {
            assert!(
                table.contains(&format!("\n{method}\t")),
                "missing row for {method}"
            );
        }
        let rows: Vec<&str> = table.lines().skip(2).filter(|l| !l.is_empty()).collect();
        assert_eq!(rows.len(), ABLATION_METHODS.len());
        let first: Vec<f64> = rows
            .iter()
            .map(|r| r.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(first.windows(2).all(|w| w[0] >= w[1]), "sorted by first K");
    }

    #[test]
    fn ablation_seed_change_alters_values_not_shape() {
        let mut a_cfg = quick_cfg();
        a_cfg.epochs = 2;
        let mut b_cfg = a_cfg.clone();
        b_cfg.seed = a_cfg.seed + 1;
        let a = ablate_document(&a_cfg).unwrap();
        let b = ablate_document(&b_cfg).unwrap();
        assert_ne!(a, b);
        let rows = |doc: &str| {
            doc.split("[table]")
                .nth(1)
                .unwrap()
                .lines()
                .skip(2)
                .filter(|l| !l.is_empty())
                .count()
        };
        assert_eq!(rows(&a), rows(&b));
    }

    #[test]
    fn dump_weights_document_has_the_method_columns() {
        let cfg = quick_cfg();
        let doc = dump_weights_document(&cfg).unwrap();
        assert!(doc.contains("contrastive\ttriplet\tlifted\tbinomial"));
        assert!(doc.contains("swept = S_anchor_target"));
        let rows = doc.split("[table]").nth(1).unwrap();
        assert_eq!(
            rows.lines().skip(2).filter(|l| !l.is_empty()).count(),
            13,
            "thirteen sweep points"
        );
    }
}
