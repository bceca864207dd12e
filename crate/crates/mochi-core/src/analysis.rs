//! Representation diagnostics: alignment and uniformity on the hypersphere,
//! false-negative auditing against a class oracle, statistics over synthetic
//! negatives, and a linear probe on frozen embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue::{ClassLabel, QueueEntry};
use crate::rng::RngKey;
use crate::synthesis::{rank_negatives, SyntheticNegative};
use crate::vecspace::UnitVector;

/// Embeddings with class labels, the input to every oracle-side diagnostic.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddingSet {
    pub features: Vec<UnitVector>,
    pub labels: Vec<ClassLabel>,
}

impl LabeledEmbeddingSet {
    pub fn new(features: Vec<UnitVector>, labels: Vec<ClassLabel>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LabelLengthMismatch {
                labels: labels.len(),
                features: features.len(),
            });
        }
        Ok(LabeledEmbeddingSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Report emitted by the analyze and eval commands. Fields a command does
/// not compute stay null. `neg_uniformity` and `neg_alignment` carry the
/// sign convention of the figure axes: both are nonnegative for genuinely
/// spread / aligned embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub neg_uniformity: Option<f64>,
    pub neg_alignment: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub fn_fraction_top_m: Option<f64>,
    pub retained_variance_2d: Option<f64>,
}

impl AnalysisReport {
    pub fn empty() -> Self {
        AnalysisReport {
            neg_uniformity: None,
            neg_alignment: None,
            probe_accuracy: None,
            fn_fraction_top_m: None,
            retained_variance_2d: None,
        }
    }
}

fn squared_distance(x: &UnitVector, y: &UnitVector) -> f64 {
    x.coords()
        .iter()
        .zip(y.coords())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Mean over pairs of `|x - y|^alpha`. This is the nonnegative expectation;
/// negate it for the loss-style sign.
pub fn alignment_expectation(pairs: &[(UnitVector, UnitVector)], alpha: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if alpha <= 0.0 || alpha.is_nan() {
        return Err(Error::ConfigInvalid(format!(
            "alignment exponent must be positive, got {alpha}"
        )));
    }
    let sum: f64 = pairs
        .iter()
        .map(|(x, y)| squared_distance(x, y).sqrt().powf(alpha))
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Log of the mean Gaussian potential `exp(-t |x - y|^2)` over all distinct
/// unordered pairs. Always <= 0, with equality iff all points coincide.
pub fn uniformity_loss(features: &[UnitVector], t: f64) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: features.len(),
        });
    }
    if t <= 0.0 || t.is_nan() {
        return Err(Error::ConfigInvalid(format!(
            "uniformity temperature must be positive, got {t}"
        )));
    }
    let n = features.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += (-t * squared_distance(&features[i], &features[j])).exp();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((sum / pairs).ln())
}

/// All same-label ordered-as-unordered pairs of the set, subsampled to at
/// most `max_pairs` with a seeded shuffle when there are more.
pub fn same_class_pairs(
    set: &LabeledEmbeddingSet,
    max_pairs: usize,
    seed: u64,
) -> Vec<(UnitVector, UnitVector)> {
    let mut pair_indices = Vec::new();
    for i in 0..set.len() {
        for j in (i + 1)..set.len() {
            if set.labels[i] == set.labels[j] {
                pair_indices.push((i, j));
            }
        }
    }
    if pair_indices.len() > max_pairs {
        use rand::Rng;
        let mut rng = RngKey::from_seed(seed).child(0xA11C).stream();
        for i in (1..pair_indices.len()).rev() {
            let j = rng.random_range(0..=i);
            pair_indices.swap(i, j);
        }
        pair_indices.truncate(max_pairs);
        pair_indices.sort_unstable();
    }
    pair_indices
        .into_iter()
        .map(|(i, j)| (set.features[i].clone(), set.features[j].clone()))
        .collect()
}

/// Mean cosine similarity over all distinct same-class pairs.
pub fn mean_same_class_cosine(set: &LabeledEmbeddingSet) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..set.len() {
        for j in (i + 1)..set.len() {
            if set.labels[i] == set.labels[j] {
                sum += crate::vecspace::dot(&set.features[i], &set.features[j])?;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(sum / count as f64)
}

/// Fraction of the `top_m` highest-similarity entries that share the query's
/// class.
pub fn fn_fraction_top(
    q: &UnitVector,
    entries: &[QueueEntry],
    query_label: ClassLabel,
    top_m: usize,
) -> Result<f64> {
    for (i, e) in entries.iter().enumerate() {
        if e.label.is_none() {
            return Err(Error::MissingLabels(format!("entry at position {i}")));
        }
    }
    if top_m > entries.len() || top_m == 0 {
        return Err(Error::TooFewNegatives {
            record: 0,
            needed: top_m.max(1),
            got: entries.len(),
        });
    }
    let ranked = rank_negatives(q, entries)?;
    let same = ranked[..top_m]
        .iter()
        .filter(|&&i| entries[i].label == Some(query_label))
        .count();
    Ok(same as f64 / top_m as f64)
}

/// Over the pair-mixed synthetics: fraction with at least one source sharing
/// the query's class, and fraction with both. Query-mixed synthetics count
/// toward neither; with no pair mixes both fractions are 0.
pub fn synthetic_fn_stats(
    synthetics: &[SyntheticNegative],
    entries: &[QueueEntry],
    query_label: ClassLabel,
) -> Result<(f64, f64)> {
    for (i, e) in entries.iter().enumerate() {
        if e.label.is_none() {
            return Err(Error::MissingLabels(format!("entry at position {i}")));
        }
    }
    let mut pair_total = 0usize;
    let mut at_least_one = 0usize;
    let mut both = 0usize;
    for syn in synthetics {
        let sources = syn.source_indices();
        for &idx in &sources {
            if idx >= entries.len() {
                return Err(Error::BadProvenance {
                    index: idx,
                    len: entries.len(),
                });
            }
        }
        if !syn.is_pair_mix() {
            continue;
        }
        pair_total += 1;
        let fn_sources = sources
            .iter()
            .filter(|&&i| entries[i].label == Some(query_label))
            .count();
        if fn_sources >= 1 {
            at_least_one += 1;
        }
        if fn_sources == 2 {
            both += 1;
        }
    }
    if pair_total == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((
        at_least_one as f64 / pair_total as f64,
        both as f64 / pair_total as f64,
    ))
}

/// Multinomial logistic regression on frozen embeddings: one linear layer
/// plus softmax cross-entropy, trained with full-batch gradient descent from
/// zero-initialized weights. Returns test top-1 accuracy; argmax ties go to
/// the lowest class index.
pub fn linear_probe(
    train: &LabeledEmbeddingSet,
    test: &LabeledEmbeddingSet,
    epochs: usize,
    lr: f64,
) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = train.features[0].dim();
    for f in train.features.iter().chain(&test.features) {
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.dim(),
            });
        }
    }
    let mut classes: Vec<ClassLabel> = train.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let missing: Vec<ClassLabel> = test
        .labels
        .iter()
        .copied()
        .filter(|l| !classes.contains(l))
        .collect();
    if !missing.is_empty() {
        return Err(Error::LabelUniverseMismatch(
            missing
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ));
    }
    let class_index = |l: ClassLabel| classes.iter().position(|&c| c == l).unwrap();
    let n_classes = classes.len();
    let n = train.len() as f64;

    let mut weight = vec![0.0; n_classes * d];
    let mut bias = vec![0.0; n_classes];
    let logits_of = |w: &[f64], b: &[f64], x: &UnitVector| -> Vec<f64> {
        (0..n_classes)
            .map(|c| {
                b[c] + w[c * d..(c + 1) * d]
                    .iter()
                    .zip(x.coords())
                    .map(|(wi, xi)| wi * xi)
                    .sum::<f64>()
            })
            .collect()
    };

    for _ in 0..epochs {
        let mut grad_w = vec![0.0; n_classes * d];
        let mut grad_b = vec![0.0; n_classes];
        for (x, &label) in train.features.iter().zip(&train.labels) {
            let logits = logits_of(&weight, &bias, x);
            let probs = crate::vecspace::tempered_softmax(&logits, 1.0)?;
            let target = class_index(label);
            for c in 0..n_classes {
                let delta = probs[c] - if c == target { 1.0 } else { 0.0 };
                grad_b[c] += delta / n;
                for (g, xi) in grad_w[c * d..(c + 1) * d].iter_mut().zip(x.coords()) {
                    *g += delta * xi / n;
                }
            }
        }
        for (w, g) in weight.iter_mut().zip(&grad_w) {
            *w -= lr * g;
        }
        for (b, g) in bias.iter_mut().zip(&grad_b) {
            *b -= lr * g;
        }
    }

    let mut hits = 0usize;
    for (x, &label) in test.features.iter().zip(&test.labels) {
        let logits = logits_of(&weight, &bias, x);
        let mut best = 0usize;
        for c in 1..n_classes {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        if classes[best] == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}
