//! Hard-negative synthesis: rank the memory by similarity to an anchor, mix
//! pairs of the hardest negatives into new points, and mix the query itself
//! with hard negatives for an even harder set. Synthetic points live only
//! inside the current step's loss; they are never pushed into the queue.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infonce::LogitRecord;
use crate::queue::{ClassLabel, QueueEntry};
use crate::rng::{open01, RngKey};
use crate::vecspace::{dot, l2_normalize, tempered_softmax, RawVector, UnitVector};

/// Which embedding anchors a choice: the query (default) or its key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Query,
    Key,
}

/// How source negatives are drawn from the truncated hard set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Uniform,
    /// Draw with probability proportional to a softmax over the top-N
    /// anchor similarities, sharpened by `sampling_tau`.
    SoftmaxTempered,
}

/// Synthesis hyperparameters. The three headline knobs are the truncation
/// size `n`, the pair-mixed count `s`, and the query-mixed count `s_prime`;
/// the rest switch variant strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MochiConfig {
    /// Ranking truncation: sources come from the `n` hardest negatives.
    pub n: usize,
    /// Number of pair-mixed synthetics per query.
    pub s: usize,
    /// Number of query-mixed synthetics per query.
    pub s_prime: usize,
    /// Epochs at the start of training with no synthesis at all.
    #[serde(default)]
    pub warmup_epochs: usize,
    /// Anchor of the hardness ranking.
    #[serde(default = "anchor_query")]
    pub ranking_anchor: Anchor,
    /// Anchor mixed into the negatives for the `s_prime` synthetics.
    #[serde(default = "anchor_query")]
    pub hard_mix_anchor: Anchor,
    /// Scale query-mixed logits by their mixing coefficient.
    #[serde(default)]
    pub weight_query_mix_logits: bool,
    #[serde(default = "sampling_uniform")]
    pub sampling: SamplingKind,
    /// Temperature of the sampling softmax; only read for
    /// [`SamplingKind::SoftmaxTempered`].
    #[serde(default = "one")]
    pub sampling_tau: f64,
    /// Exclude same-class entries from synthesis sources (requires labels).
    /// Filtering happens before the hardness ranking, so the top-N is taken
    /// over eligible entries only.
    #[serde(default)]
    pub oracle_synthesis: bool,
}

fn anchor_query() -> Anchor {
    Anchor::Query
}

fn sampling_uniform() -> SamplingKind {
    SamplingKind::Uniform
}

fn one() -> f64 {
    1.0
}

impl Default for MochiConfig {
    fn default() -> Self {
        MochiConfig {
            n: 1024,
            s: 1024,
            s_prime: 128,
            warmup_epochs: 10,
            ranking_anchor: Anchor::Query,
            hard_mix_anchor: Anchor::Query,
            weight_query_mix_logits: false,
            sampling: SamplingKind::Uniform,
            sampling_tau: 1.0,
            oracle_synthesis: false,
        }
    }
}

impl MochiConfig {
    /// A configuration that synthesizes nothing; training reduces to the
    /// plain momentum-contrast step.
    pub fn disabled() -> Self {
        MochiConfig {
            n: 1,
            s: 0,
            s_prime: 0,
            warmup_epochs: 0,
            ..Default::default()
        }
    }

    pub fn validate(&self, queue_capacity: usize) -> Result<()> {
        if self.n == 0 || self.n > queue_capacity {
            return Err(Error::ConfigInvalid(format!(
                "mochi.n must satisfy 0 < n <= queue_capacity ({}), got {}",
                queue_capacity, self.n
            )));
        }
        if self.sampling == SamplingKind::SoftmaxTempered
            && (self.sampling_tau <= 0.0 || self.sampling_tau.is_nan())
        {
            return Err(Error::ConfigInvalid(format!(
                "mochi.sampling_tau must be positive, got {}",
                self.sampling_tau
            )));
        }
        Ok(())
    }
}

/// Provenance of one synthetic negative: who was mixed and with what
/// coefficient. Indices refer to the entry slice synthesis ran over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    /// `normalize(alpha·n_i + (1 - alpha)·n_j)`, sources from the top-N.
    PairMix { i: usize, j: usize, alpha: f64 },
    /// `normalize(beta·a + (1 - beta)·n_j)` with the anchor `a` being the
    /// query (or the key for the variant) and `beta < 0.5`.
    QueryMix { j: usize, beta: f64 },
}

/// A synthesized hard negative with full provenance.
#[derive(Debug, Clone)]
pub struct SyntheticNegative {
    pub feature: UnitVector,
    pub provenance: Provenance,
    /// How many mixed-in sources share the query's class (labeled runs
    /// only).
    pub fn_component_count: Option<u8>,
}

impl SyntheticNegative {
    pub fn is_pair_mix(&self) -> bool {
        matches!(self.provenance, Provenance::PairMix { .. })
    }

    pub fn is_query_mix(&self) -> bool {
        matches!(self.provenance, Provenance::QueryMix { .. })
    }

    /// The mixing coefficient: alpha for pair mixes, beta for query mixes.
    pub fn coefficient(&self) -> f64 {
        match self.provenance {
            Provenance::PairMix { alpha, .. } => alpha,
            Provenance::QueryMix { beta, .. } => beta,
        }
    }

    pub fn source_indices(&self) -> Vec<usize> {
        match self.provenance {
            Provenance::PairMix { i, j, .. } => vec![i, j],
            Provenance::QueryMix { j, .. } => vec![j],
        }
    }
}

/// Normalized convex combination `normalize(alpha·a + (1 - alpha)·b)`.
pub fn mix_unit(alpha: f64, a: &UnitVector, b: &UnitVector) -> Result<UnitVector> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let coords: Vec<f64> = a
        .coords()
        .iter()
        .zip(b.coords())
        .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
        .collect();
    l2_normalize(&RawVector::new(coords)?)
}

/// Indices of `entries` sorted by decreasing similarity to `anchor`; ties go
/// to the lower index.
pub fn rank_negatives(anchor: &UnitVector, entries: &[QueueEntry]) -> Result<Vec<usize>> {
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    rank_subset(anchor, entries, &(0..entries.len()).collect::<Vec<_>>())
}

/// Rank an index subset of `entries` by decreasing anchor similarity.
fn rank_subset(
    anchor: &UnitVector,
    entries: &[QueueEntry],
    subset: &[usize],
) -> Result<Vec<usize>> {
    let mut scored: Vec<(usize, f64)> = subset
        .iter()
        .map(|&i| dot(anchor, &entries[i].feature).map(|d| (i, d)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Draws positions in `0..n` either uniformly or from a fixed weight table.
enum IndexSampler {
    Uniform(usize),
    Weighted(Vec<f64>),
}

impl IndexSampler {
    fn uniform(n: usize) -> Self {
        IndexSampler::Uniform(n)
    }

    fn softmax(anchor: &UnitVector, entries: &[QueueEntry], top: &[usize], tau: f64) -> Result<Self> {
        let sims: Vec<f64> = top
            .iter()
            .map(|&i| dot(anchor, &entries[i].feature))
            .collect::<Result<Vec<_>>>()?;
        let weights = tempered_softmax(&sims, tau)?;
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(IndexSampler::Weighted(cumulative))
    }

    fn draw<R: rand::Rng>(&self, rng: &mut R) -> usize {
        match self {
            IndexSampler::Uniform(n) => rng.random_range(0..*n),
            IndexSampler::Weighted(cumulative) => {
                let x: f64 = rng.random();
                match cumulative.iter().position(|&c| x < c) {
                    Some(i) => i,
                    None => cumulative.len() - 1,
                }
            }
        }
    }
}

fn label_of(entries: &[QueueEntry], idx: usize) -> Option<ClassLabel> {
    entries[idx].label
}

fn fn_count(query_label: Option<ClassLabel>, sources: &[Option<ClassLabel>]) -> Option<u8> {
    let q = query_label?;
    if sources.iter().any(|s| s.is_none()) {
        return None;
    }
    Some(sources.iter().filter(|s| **s == Some(q)).count() as u8)
}

#[allow(clippy::too_many_arguments)]
fn mix_pairs_with_sampler(
    anchor_rank: &[usize],
    entries: &[QueueEntry],
    n_trunc: usize,
    s: usize,
    sampler: &IndexSampler,
    rng: RngKey,
    slot_offset: u64,
    query_label: Option<ClassLabel>,
) -> Result<Vec<SyntheticNegative>> {
    if s == 0 {
        return Ok(Vec::new());
    }
    if n_trunc > anchor_rank.len() {
        return Err(Error::NotEnoughNegatives {
            needed: n_trunc,
            got: anchor_rank.len(),
        });
    }
    if n_trunc < 2 {
        return Err(Error::TruncationTooSmall(n_trunc));
    }
    let mut out = Vec::with_capacity(s);
    for slot in 0..s {
        let mut stream = rng.child(slot_offset + slot as u64).stream();
        let pos_i = sampler.draw(&mut stream);
        let pos_j = loop {
            let j = sampler.draw(&mut stream);
            if j != pos_i {
                break j;
            }
        };
        let alpha = open01(&mut stream);
        let (i, j) = (anchor_rank[pos_i], anchor_rank[pos_j]);
        let feature = mix_unit(alpha, &entries[i].feature, &entries[j].feature)?;
        out.push(SyntheticNegative {
            feature,
            provenance: Provenance::PairMix { i, j, alpha },
            fn_component_count: fn_count(
                query_label,
                &[label_of(entries, i), label_of(entries, j)],
            ),
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn mix_query_with_sampler(
    mix_anchor: &UnitVector,
    anchor_rank: &[usize],
    entries: &[QueueEntry],
    n_trunc: usize,
    s_prime: usize,
    sampler: &IndexSampler,
    rng: RngKey,
    slot_offset: u64,
    query_label: Option<ClassLabel>,
) -> Result<Vec<SyntheticNegative>> {
    if s_prime == 0 {
        return Ok(Vec::new());
    }
    if n_trunc > anchor_rank.len() || n_trunc == 0 {
        return Err(Error::NotEnoughNegatives {
            needed: n_trunc.max(1),
            got: anchor_rank.len(),
        });
    }
    let mut out = Vec::with_capacity(s_prime);
    for slot in 0..s_prime {
        let mut stream = rng.child(slot_offset + slot as u64).stream();
        let pos_j = sampler.draw(&mut stream);
        // beta in the open interval (0, 0.5): the query's contribution stays
        // strictly below the negative's.
        let beta = 0.5 * open01(&mut stream);
        let j = anchor_rank[pos_j];
        let feature = mix_unit(beta, mix_anchor, &entries[j].feature)?;
        out.push(SyntheticNegative {
            feature,
            provenance: Provenance::QueryMix { j, beta },
            fn_component_count: fn_count(query_label, &[label_of(entries, j)]),
        });
    }
    Ok(out)
}

/// Synthesize `s` pair mixes from the top `n_trunc` entries of the ranking,
/// sampling sources uniformly with `i != j`.
pub fn mix_pair_negatives(
    anchor_rank: &[usize],
    entries: &[QueueEntry],
    n_trunc: usize,
    s: usize,
    rng: RngKey,
) -> Result<Vec<SyntheticNegative>> {
    let sampler = IndexSampler::uniform(n_trunc.min(anchor_rank.len()).max(1));
    mix_pairs_with_sampler(anchor_rank, entries, n_trunc, s, &sampler, rng, 0, None)
}

/// Synthesize `s_prime` query mixes: each blends the anchor (query, or key
/// for the variant) with one of the top `n_trunc` negatives, anchor weight
/// below one half.
pub fn mix_query_negatives(
    mix_anchor: &UnitVector,
    anchor_rank: &[usize],
    entries: &[QueueEntry],
    n_trunc: usize,
    s_prime: usize,
    rng: RngKey,
) -> Result<Vec<SyntheticNegative>> {
    let sampler = IndexSampler::uniform(n_trunc.min(anchor_rank.len()).max(1));
    mix_query_with_sampler(
        mix_anchor,
        anchor_rank,
        entries,
        n_trunc,
        s_prime,
        &sampler,
        rng,
        0,
        None,
    )
}

/// Full per-query synthesis: warm-up gate, optional label filtering,
/// ranking, then `s` pair mixes followed by `s_prime` query mixes.
///
/// `rng` should be keyed to (seed, epoch, step, query index); slots derive
/// their own streams, so synthesis is order-independent across queries.
/// The truncation is clamped to the eligible entry count, which matters
/// only while the queue is still filling.
pub fn synthesize(
    q: &UnitVector,
    k: &UnitVector,
    entries: &[QueueEntry],
    config: &MochiConfig,
    epoch: usize,
    rng: RngKey,
    query_label: Option<ClassLabel>,
) -> Result<Vec<SyntheticNegative>> {
    let total = config.s + config.s_prime;
    if epoch < config.warmup_epochs || total == 0 {
        return Ok(Vec::new());
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }

    let eligible: Vec<usize> = if config.oracle_synthesis {
        let query_label = query_label
            .ok_or_else(|| Error::MissingLabels("query label required for oracle synthesis".into()))?;
        for (i, e) in entries.iter().enumerate() {
            if e.label.is_none() {
                return Err(Error::MissingLabels(format!("entry at position {i}")));
            }
        }
        (0..entries.len())
            .filter(|&i| entries[i].label != Some(query_label))
            .collect()
    } else {
        (0..entries.len()).collect()
    };
    if eligible.is_empty() {
        return Err(Error::NoEligibleNegatives);
    }

    let ranking_anchor = match config.ranking_anchor {
        Anchor::Query => q,
        Anchor::Key => k,
    };
    let ranked = rank_subset(ranking_anchor, entries, &eligible)?;
    let n_trunc = config.n.min(ranked.len());
    let top = &ranked[..n_trunc];

    let sampler = match config.sampling {
        SamplingKind::Uniform => IndexSampler::uniform(n_trunc),
        SamplingKind::SoftmaxTempered => {
            IndexSampler::softmax(ranking_anchor, entries, top, config.sampling_tau)?
        }
    };

    let mut out = mix_pairs_with_sampler(
        top,
        entries,
        n_trunc,
        config.s,
        &sampler,
        rng,
        0,
        query_label,
    )?;
    let mix_anchor = match config.hard_mix_anchor {
        Anchor::Query => q,
        Anchor::Key => k,
    };
    out.extend(mix_query_with_sampler(
        mix_anchor,
        top,
        entries,
        n_trunc,
        config.s_prime,
        &sampler,
        rng,
        config.s as u64,
        query_label,
    )?);
    Ok(out)
}

/// Append the synthetic logits `q·h/τ` to a record built from the same
/// query and temperature. When `weight_query_mix_logits` is set,
/// query-mixed logits are scaled by their beta coefficient.
pub fn extend_logits(
    record: &LogitRecord,
    q: &UnitVector,
    synthetics: &[SyntheticNegative],
    tau: f64,
    weight_query_mix_logits: bool,
) -> Result<LogitRecord> {
    if tau != record.tau {
        return Err(Error::ConfigInvalid(format!(
            "record was built at temperature {}, cannot extend at {}",
            record.tau, tau
        )));
    }
    let mut extended = record.clone();
    for syn in synthetics {
        let mut logit = dot(q, &syn.feature)? / tau;
        if weight_query_mix_logits {
            if let Provenance::QueryMix { beta, .. } = syn.provenance {
                logit *= beta;
            }
        }
        extended.negative_logits.push(logit);
    }
    Ok(extended)
}
