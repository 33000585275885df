//! Run configuration: a UTF-8 key-value document with dotted keys.
//!
//! Unknown and duplicate keys are hard errors rather than warnings; a
//! silently ignored typo would corrupt an ablation. Every key has a
//! default, and output documents echo the full effective configuration.

use std::path::{Path, PathBuf};

use crate::embedding::HyperParams;
use crate::losses::Method;
use crate::trainer::{AdamHyper, BatchSpec, TrainConfig};
use crate::{Error, Result};

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Seeded clustered data with a per-class half train/test split.
    Synth {
        classes: usize,
        per_class: usize,
        dim: usize,
        noise: f64,
    },
    /// One feature file, split like the synthetic data.
    File(PathBuf),
    /// Two feature files: train on the first, evaluate it as queries
    /// against the second.
    QueryGallery { query: PathBuf, gallery: PathBuf },
}

/// Weight-sweep scenario for the `dump-weights` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Shift the anchor's whole negative group: self-similarity moves,
    /// relative similarities stay put.
    SelfSimilarity,
    /// Move the anchor's closest positive: mining thresholds move.
    PositiveRelative,
    /// Weaken a competitor negative: relative similarity moves.
    NegativeRelative,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SelfSimilarity => "s",
            Scenario::PositiveRelative => "p",
            Scenario::NegativeRelative => "n",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub hp: HyperParams,
    pub batch: BatchSpec,
    pub embed_dim: usize,
    pub opt: AdamHyper,
    pub epochs: usize,
    pub seed: u64,
    pub data: DataSource,
    pub eval_ks: Vec<usize>,
    pub out: Option<PathBuf>,
    pub scenario: Scenario,
    pub gradcheck_corrupt: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Ms,
            hp: HyperParams::default(),
            batch: BatchSpec::default(),
            embed_dim: 32,
            opt: AdamHyper::default(),
            epochs: 200,
            seed: 7,
            data: DataSource::Synth {
                classes: 8,
                per_class: 50,
                dim: 32,
                noise: 0.3,
            },
            eval_ks: vec![1, 2, 4, 8],
            out: None,
            scenario: Scenario::SelfSimilarity,
            gradcheck_corrupt: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment line and blank
    /// lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {lineno}: expected `key = value`, got `{line}`"
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {lineno}: empty key")));
            }
            if entries.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::Config(format!(
                    "line {lineno}: duplicate key `{key}`"
                )));
            }
            entries.push((key, value, lineno));
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: Vec<(String, String, usize)>) -> Result<Self> {
        let mut take = |key: &str| -> Option<String> {
            entries
                .iter()
                .position(|(k, _, _)| k == key)
                .map(|pos| entries.remove(pos).1)
        };

        let mut cfg = RunConfig::default();
        if let Some(v) = take("method") {
            cfg.method = v.parse()?;
        }
        if let Some(v) = take("hp.alpha") {
            cfg.hp.alpha = parse_f64("hp.alpha", &v)?;
        }
        if let Some(v) = take("hp.beta") {
            cfg.hp.beta = parse_f64("hp.beta", &v)?;
        }
        if let Some(v) = take("hp.lambda") {
            cfg.hp.lambda = parse_f64("hp.lambda", &v)?;
        }
        if let Some(v) = take("hp.epsilon") {
            cfg.hp.epsilon = parse_f64("hp.epsilon", &v)?;
        }
        if let Some(v) = take("hp.margin") {
            cfg.hp.margin = parse_f64("hp.margin", &v)?;
        }
        if let Some(v) = take("batch.classes") {
            cfg.batch.classes_per_batch = parse_usize("batch.classes", &v)?;
        }
        if let Some(v) = take("batch.m") {
            cfg.batch.instances_per_class = parse_usize("batch.m", &v)?;
        }
        if let Some(v) = take("model.embed_dim") {
            cfg.embed_dim = parse_usize("model.embed_dim", &v)?;
        }
        if let Some(v) = take("opt.lr") {
            cfg.opt.lr = parse_f64("opt.lr", &v)?;
        }
        if let Some(v) = take("opt.beta1") {
            cfg.opt.beta1 = parse_f64("opt.beta1", &v)?;
        }
        if let Some(v) = take("opt.beta2") {
            cfg.opt.beta2 = parse_f64("opt.beta2", &v)?;
        }
        if let Some(v) = take("opt.eps") {
            cfg.opt.eps = parse_f64("opt.eps", &v)?;
        }
        if let Some(v) = take("train.epochs") {
            cfg.epochs = parse_usize("train.epochs", &v)?;
        }
        if let Some(v) = take("seed") {
            cfg.seed = parse_u64("seed", &v)?;
        }
        if let Some(v) = take("eval.ks") {
            cfg.eval_ks = parse_ks(&v)?;
        }
        if let Some(v) = take("out") {
            cfg.out = Some(PathBuf::from(v));
        }
        if let Some(v) = take("sweep.scenario") {
            cfg.scenario = match v.as_str() {
                "s" => Scenario::SelfSimilarity,
                "p" => Scenario::PositiveRelative,
                "n" => Scenario::NegativeRelative,
                other => {
                    return Err(Error::Config(format!(
                        "sweep.scenario must be one of s|p|n, got `{other}`"
                    )))
                }
            };
        }
        if let Some(v) = take("gradcheck.corrupt") {
            cfg.gradcheck_corrupt = parse_bool("gradcheck.corrupt", &v)?;
        }

        // Data source: explicit synthetic keys, a single file, or a
        // query/gallery pair. Mixing forms is an error.
        let synth_classes = take("data.synth.classes");
        let synth_per_class = take("data.synth.per_class");
        let synth_dim = take("data.synth.dim");
        let synth_noise = take("data.synth.noise");
        let any_synth = synth_classes.is_some()
            || synth_per_class.is_some()
            || synth_dim.is_some()
            || synth_noise.is_some();
        let file = take("data.file");
        let query = take("data.query");
        let gallery = take("data.gallery");
        if query.is_some() != gallery.is_some() {
            return Err(Error::Config(
                "data.query and data.gallery must be given together".into(),
            ));
        }
        let forms = [file.is_some(), query.is_some(), any_synth];
        if forms.iter().filter(|&&f| f).count() > 1 {
            return Err(Error::Config(
                "choose one of data.file, data.query/data.gallery, or data.synth.*".into(),
            ));
        }
        if let Some(path) = file {
            cfg.data = DataSource::File(PathBuf::from(path));
        } else if let (Some(q), Some(g)) = (query, gallery) {
            cfg.data = DataSource::QueryGallery {
                query: PathBuf::from(q),
                gallery: PathBuf::from(g),
            };
        } else if any_synth {
            let DataSource::Synth {
                mut classes,
                mut per_class,
                mut dim,
                mut noise,
            } = RunConfig::default().data
            else {
                unreachable!("default data source is synthetic");
            };
            if let Some(v) = synth_classes {
                classes = parse_usize("data.synth.classes", &v)?;
            }
            if let Some(v) = synth_per_class {
                per_class = parse_usize("data.synth.per_class", &v)?;
            }
            if let Some(v) = synth_dim {
                dim = parse_usize("data.synth.dim", &v)?;
            }
            if let Some(v) = synth_noise {
                noise = parse_f64("data.synth.noise", &v)?;
            }
            cfg.data = DataSource::Synth {
                classes,
                per_class,
                dim,
                noise,
            };
        }

        if let Some((key, _, lineno)) = entries.first() {
            return Err(Error::Config(format!("line {lineno}: unknown key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hp
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.batch
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.embed_dim < 2 {
            return Err(Error::Config("model.embed_dim must be at least 2".into()));
        }
        if self.opt.lr.is_nan() || self.opt.lr <= 0.0 {
            return Err(Error::Config("opt.lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.opt.beta1) || !(0.0..1.0).contains(&self.opt.beta2) {
            return Err(Error::Config(
                "opt.beta1 and opt.beta2 must lie in [0, 1)".into(),
            ));
        }
        if self.eval_ks.is_empty() || self.eval_ks.contains(&0) {
            return Err(Error::Config("eval.ks must be positive integers".into()));
        }
        if let DataSource::Synth {
            classes,
            per_class,
            dim,
            noise,
        } = &self.data
        {
            if *classes < 2 || *per_class < 2 || *dim < 1 || *noise < 0.0 {
                return Err(Error::Config(
                    "synthetic data needs classes >= 2, per_class >= 2, dim >= 1, noise >= 0"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// The full effective configuration as sorted `key = value` lines,
    /// defaults included. The output path is a disposition, not an
    /// experiment parameter, and is deliberately not echoed.
    pub fn echo_lines(&self) -> Vec<String> {
        let mut kv: Vec<(String, String)> = vec![
            ("method".into(), self.method.to_string()),
            ("hp.alpha".into(), fmt_f64(self.hp.alpha)),
            ("hp.beta".into(), fmt_f64(self.hp.beta)),
            ("hp.lambda".into(), fmt_f64(self.hp.lambda)),
            ("hp.epsilon".into(), fmt_f64(self.hp.epsilon)),
            ("hp.margin".into(), fmt_f64(self.hp.margin)),
            (
                "batch.classes".into(),
                self.batch.classes_per_batch.to_string(),
            ),
            ("batch.m".into(), self.batch.instances_per_class.to_string()),
            ("model.embed_dim".into(), self.embed_dim.to_string()),
            ("opt.lr".into(), fmt_f64(self.opt.lr)),
            ("opt.beta1".into(), fmt_f64(self.opt.beta1)),
            ("opt.beta2".into(), fmt_f64(self.opt.beta2)),
            ("opt.eps".into(), fmt_f64(self.opt.eps)),
            ("train.epochs".into(), self.epochs.to_string()),
            ("seed".into(), self.seed.to_string()),
            (
                "eval.ks".into(),
                self.eval_ks
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("sweep.scenario".into(), self.scenario.as_str().into()),
            (
                "gradcheck.corrupt".into(),
                self.gradcheck_corrupt.to_string(),
            ),
        ];
        match &self.data {
            DataSource::Synth {
                classes,
                per_class,
                dim,
                noise,
            } => {
                kv.push(("data.synth.classes".into(), classes.to_string()));
                kv.push(("data.synth.per_class".into(), per_class.to_string()));
                kv.push(("data.synth.dim".into(), dim.to_string()));
                kv.push(("data.synth.noise".into(), fmt_f64(*noise)));
            }
            DataSource::File(path) => {
                kv.push(("data.file".into(), path.display().to_string()));
            }
            DataSource::QueryGallery { query, gallery } => {
                kv.push(("data.query".into(), query.display().to_string()));
                kv.push(("data.gallery".into(), gallery.display().to_string()));
            }
        }
        kv.sort();
        kv.into_iter().map(|(k, v)| format!("{k} = {v}")).collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            method: self.method,
            hp: self.hp,
            batch: self.batch,
            embed_dim: self.embed_dim,
            opt: self.opt,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: `{v}` is not true/false"))),
    }
}

fn parse_ks(v: &str) -> Result<Vec<usize>> {
    let mut ks = Vec::new();
    for part in v.split(',') {
        let k: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("eval.ks: `{part}` is not an integer")))?;
        ks.push(k);
    }
    Ok(ks)
}
