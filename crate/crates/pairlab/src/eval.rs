//! Retrieval evaluation and datasets: Recall@K over cosine rankings,
//! seeded synthetic cluster generation, and a plain-text feature file
//! format.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{
    l2_normalize, similarity_matrix, EmbeddingMatrix, FeatureMatrix, LabelVector,
};
use crate::{Error, Result};

/// Train/test partition as explicit index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Features with labels and an optional train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: LabelVector, split: Option<Split>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(split) = &split {
            let mut seen = vec![false; labels.len()];
            for &i in split.train.iter().chain(split.test.iter()) {
                if i >= labels.len() || seen[i] {
                    return Err(Error::Invalid(
                        "split indices must be disjoint and in range".into(),
                    ));
                }
                seen[i] = true;
            }
            if seen.iter().any(|&s| !s) {
                return Err(Error::Invalid("split must cover every sample".into()));
            }
        }
        Ok(Self {
            features,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset_labels(&self, idx: &[usize]) -> LabelVector {
        LabelVector::new(idx.iter().map(|&i| self.labels.get(i)).collect())
    }
}

/// Recall@K values in ascending K together with the number of queries that
/// had to be excluded for lacking any same-class gallery sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub entries: Vec<(usize, f64)>,
    pub excluded_queries: usize,
}

impl RecallReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|&&(kk, _)| kk == k)
            .map(|&(_, r)| r)
    }
}

/// Single-set retrieval: each sample queries the remaining ones. Gallery
/// candidates are ranked by similarity descending with ties broken by
/// lower index; a query scores a hit at `K` if any of its top `K` shares
/// its label. Queries whose class has no other member are excluded and
/// tallied; it is an error if that removes every query.
pub fn recall_at_k(e: &EmbeddingMatrix, y: &LabelVector, ks: &[usize]) -> Result<RecallReport> {
    let s = similarity_matrix(e);
    let m = e.rows();
    let candidates = |i: usize| (0..m).filter(move |&j| j != i);
    let score = |i: usize, j: usize| s.get(i, j);
    let gallery_label = |j: usize| y.get(j);
    rank_and_count(m, candidates, score, gallery_label, y, ks)
}

/// Two-set retrieval: every query sample is ranked against the full
/// gallery (no self-exclusion; the sets are distinct).
pub fn recall_two_set(
    query_e: &EmbeddingMatrix,
    query_y: &LabelVector,
    gallery_e: &EmbeddingMatrix,
    gallery_y: &LabelVector,
    ks: &[usize],
) -> Result<RecallReport> {
    if query_e.dim() != gallery_e.dim() {
        return Err(Error::Invalid("query and gallery dimensions differ".into()));
    }
    let gallery_len = gallery_e.rows();
    let candidates = |_q: usize| 0..gallery_len;
    let score = |q: usize, j: usize| query_e.row(q).dot(&gallery_e.row(j));
    let gallery_label = |j: usize| gallery_y.get(j);
    rank_and_count(
        query_e.rows(),
        candidates,
        score,
        gallery_label,
        query_y,
        ks,
    )
}

fn rank_and_count<C, I>(
    queries: usize,
    candidates: C,
    score: impl Fn(usize, usize) -> f64,
    gallery_label: impl Fn(usize) -> usize,
    query_y: &LabelVector,
    ks: &[usize],
) -> Result<RecallReport>
where
    C: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let mut sorted_ks: Vec<usize> = ks.to_vec();
    sorted_ks.sort_unstable();
    sorted_ks.dedup();
    if sorted_ks.is_empty() || sorted_ks[0] == 0 {
        return Err(Error::Invalid("recall Ks must be positive".into()));
    }

    let mut included = 0usize;
    let mut excluded = 0usize;
    let mut hits = vec![0usize; sorted_ks.len()];
    for q in 0..queries {
        let pool: Vec<usize> = candidates(q).collect();
        if !pool.iter().any(|&j| gallery_label(j) == query_y.get(q)) {
            excluded += 1;
            continue;
        }
        included += 1;
        let mut ranked: Vec<usize> = pool;
        ranked.sort_by(|&a, &b| {
            score(q, b)
                .partial_cmp(&score(q, a))
                .expect("similarities are finite")
                .then(a.cmp(&b))
        });
        let first_same = ranked
            .iter()
            .position(|&j| gallery_label(j) == query_y.get(q))
            .expect("a same-class candidate exists");
        for (slot, &k) in sorted_ks.iter().enumerate() {
            if first_same < k {
                hits[slot] += 1;
            }
        }
    }
    if included == 0 {
        return Err(Error::DegenerateGallery);
    }
    let entries = sorted_ks
        .into_iter()
        .zip(hits)
        .map(|(k, h)| (k, h as f64 / included as f64))
        .collect();
    Ok(RecallReport {
        entries,
        excluded_queries: excluded,
    })
}

/// Per-class half split: the first `ceil(n/2)` samples of each class (in
/// order of appearance) go to train, the rest to test.
pub fn default_split(y: &LabelVector) -> Split {
    let mut order: Vec<usize> = y.as_slice().to_vec();
    order.sort_unstable();
    order.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in order {
        let members: Vec<usize> = (0..y.len()).filter(|&i| y.get(i) == class).collect();
        let cut = members.len().div_ceil(2);
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

/// Synthetic clustered dataset: `classes` unit-sphere centers, each with
/// `per_class` samples of the form `normalize(center + noise * N(0, I))`,
/// and the default per-class half split.
pub fn synth_dataset(
    classes: usize,
    per_class: usize,
    dim: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    if classes < 2 || per_class < 2 {
        return Err(Error::Invalid(
            "synthetic dataset needs at least 2 classes and 2 samples per class".into(),
        ));
    }
    if dim < 1 || noise < 0.0 {
        return Err(Error::Invalid(
            "dimension must be >= 1 and noise >= 0".into(),
        ));
    }
    let mut centers = Array2::zeros((classes, dim));
    for c in 0..classes {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                for (d, x) in v.iter().enumerate() {
                    centers[(c, d)] = x / norm;
                }
                break;
            }
        }
    }
    let mut data = Array2::zeros((classes * per_class, dim));
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for s in 0..per_class {
            let row = c * per_class + s;
            let mut v: Vec<f64> = (0..dim)
                .map(|d| centers[(c, d)] + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 1e-9 {
                // Noise exactly cancelled the center; nudge back to it.
                v = (0..dim).map(|d| centers[(c, d)]).collect();
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (d, x) in v.iter().enumerate() {
                data[(row, d)] = x / norm;
            }
            labels.push(c);
        }
    }
    let labels = LabelVector::new(labels);
    let split = default_split(&labels);
    Dataset::new(FeatureMatrix::new(data)?, labels, Some(split))
}

/// Parses the feature file format: one sample per line, comma-separated,
/// an integer label followed by exactly `d` floats, `d` inferred from the
/// first data line. Blank lines are ignored. Labels are remapped to
/// contiguous ids in order of first appearance.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text)
}

pub(crate) fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut dim: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split(',').map(str::trim);
        let label_field = fields.next().unwrap_or("");
        let label: i64 = label_field.parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("label `{label_field}` is not an integer"),
        })?;
        let mut values = Vec::new();
        for field in fields {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("feature `{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("feature `{field}` is not finite"),
                });
            }
            values.push(v);
        }
        match dim {
            None => {
                if values.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "a sample needs at least one feature".into(),
                    });
                }
                dim = Some(values.len());
            }
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("expected {d} features, found {}", values.len()),
                });
            }
            _ => {}
        }
        raw_labels.push(label);
        rows.push(values);
    }
    let dim = dim.ok_or(Error::EmptyFile)?;
    if rows.len() < 2 {
        return Err(Error::Invalid("dataset needs at least 2 samples".into()));
    }

    // Remap labels to contiguous ids in order of first appearance.
    let mut id_of: Vec<(i64, usize)> = Vec::new();
    let mut labels = Vec::with_capacity(raw_labels.len());
    for raw in raw_labels {
        let id = match id_of.iter().find(|(r, _)| *r == raw) {
            Some(&(_, id)) => id,
            None => {
                let id = id_of.len();
                id_of.push((raw, id));
                id
            }
        };
        labels.push(id);
    }

    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((labels.len(), dim), flat)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let labels = LabelVector::new(labels);
    let split = default_split(&labels);
    Dataset::new(FeatureMatrix::new(data)?, labels, Some(split))
}

/// Writes the feature file format; floats use the shortest representation
/// that round-trips, so save followed by load reproduces the data exactly.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    for i in 0..dataset.len() {
        write!(out, "{}", dataset.labels.get(i)).expect("string write");
        for v in dataset.features.row(i) {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Embeds a dataset's rows with plain normalization (the identity model).
pub fn normalized_features(dataset: &Dataset) -> Result<EmbeddingMatrix> {
    l2_normalize(&dataset.features)
}
