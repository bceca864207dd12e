//! The training loop: two augmented views per sample, query/key encoding,
//! optional oracle filtering, hard-negative synthesis, the contrastive loss
//! and its gradient, SGD with a cosine schedule, the momentum update, and the
//! queue push — plus per-epoch metric emission, checkpoints, and the strict
//! JSON config surface.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{load_csv, make_sphere_clusters, SphereClusterSpec, ToyDataset};
use crate::encoder::{
    apply_gradients, backward, forward, init, EncoderGrads, EncoderPair, EncoderParams,
};
use crate::error::{Error, Result};
use crate::infonce::{
    compute_logits, grad_from_distribution, loss, matching_probs, ranked_matching_profile,
    LogitRecord,
};
use crate::queue::{oracle_filter, ClassLabel, NegativeQueue, QueueEntry};
use crate::rng::RngKey;
use crate::synthesis::{extend_logits, synthesize, MochiConfig};
use crate::vecspace::{RawVector, UnitVector};

/// Key-tree domains for the trainer's random decisions.
mod streams {
    pub const ENCODER_INIT: u64 = 1;
    pub const AUGMENT: u64 = 2;
    pub const SYNTHESIS: u64 = 3;
    pub const SHUFFLE: u64 = 4;
}

/// Length of the per-epoch ranked matching profile (fewer positions are kept
/// when records carry fewer negatives).
pub const PROFILE_TOP_M: usize = 16;

pub const CHECKPOINT_VERSION: &str = "mochi-ckpt-1";

/// Where the training data comes from. Part of the config file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian clusters around well-separated unit centers, generated from
    /// the experiment seed.
    SphereClusters {
        classes: usize,
        per_class: usize,
        input_dim: usize,
        separation: f64,
        spread: f64,
    },
    /// A `label,c0..c{d-1}` CSV on disk.
    Csv { path: String },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::SphereClusters {
            classes: 8,
            per_class: 250,
            input_dim: 32,
            separation: 0.5,
            spread: 0.15,
        }
    }
}

/// The full experiment configuration. Unknown keys are a hard error
/// everywhere in the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_aug_noise")]
    pub aug_noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle_training: bool,
    #[serde(default = "MochiConfig::disabled")]
    pub mochi: MochiConfig,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_tau() -> f64 {
    0.2
}
fn default_queue_capacity() -> usize {
    1024
}
fn default_embed_dim() -> usize {
    128
}
fn default_batch_size() -> usize {
    64
}
fn default_epochs() -> usize {
    30
}
fn default_base_lr() -> f64 {
    0.5
}
fn default_momentum() -> f64 {
    0.999
}
fn default_aug_noise() -> f64 {
    0.05
}
fn default_output_dir() -> String {
    "out".to_string()
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TrainConfig {
    /// Parse a config document, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || self.tau.is_nan() {
            return Err(Error::ConfigInvalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::ConfigInvalid(format!(
                "batch_size must be at least 2 (cold start uses in-batch negatives), got {}",
                self.batch_size
            )));
        }
        if self.batch_size > self.queue_capacity {
            return Err(Error::ConfigInvalid(format!(
                "batch_size {} exceeds queue_capacity {}",
                self.batch_size, self.queue_capacity
            )));
        }
        if self.embed_dim < 2 {
            return Err(Error::ConfigInvalid(format!(
                "embed_dim must be at least 2, got {}",
                self.embed_dim
            )));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "base_lr must be finite and nonnegative, got {}",
                self.base_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::ConfigInvalid(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.aug_noise < 0.0 || self.aug_noise.is_nan() {
            return Err(Error::ConfigInvalid(format!(
                "aug_noise must be nonnegative, got {}",
                self.aug_noise
            )));
        }
        self.mochi.validate(self.queue_capacity)?;
        Ok(())
    }

    /// Encoder architecture: input, one rectified hidden layer of twice the
    /// embedding width, then the linear embedding layer.
    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        vec![input_dim, 2 * self.embed_dim, self.embed_dim]
    }

    /// Materialize the dataset this config describes.
    pub fn load_dataset(&self) -> Result<ToyDataset> {
        match &self.dataset {
            DatasetSpec::SphereClusters {
                classes,
                per_class,
                input_dim,
                separation,
                spread,
            } => make_sphere_clusters(&SphereClusterSpec {
                classes: *classes,
                per_class: *per_class,
                input_dim: *input_dim,
                separation: *separation,
                spread: *spread,
                seed: self.seed,
            }),
            DatasetSpec::Csv { path } => load_csv(Path::new(path)),
        }
    }
}

/// Everything that evolves over a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub encoders: EncoderPair,
    pub queue: NegativeQueue,
    pub step: u64,
    pub epoch: usize,
    pub root: RngKey,
    pub seed: u64,
}

/// One line of `metrics.jsonl`. `wall_clock_s` is the only field that varies
/// between reruns of the same config and seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Proxy accuracy over the logits actually used in the loss, synthetic
    /// negatives included.
    pub proxy_acc_with_synth: f64,
    /// Proxy accuracy after discarding the synthetic negatives.
    pub proxy_acc_no_synth: f64,
    /// Position-wise mean of the largest negative matching probabilities.
    pub matching_profile: Vec<f64>,
    /// Mean fraction of same-class entries among the top-ranked negatives of
    /// the loss's negative set (labeled runs).
    pub fn_fraction_top: Option<f64>,
    /// Worst same-class fraction inside the filtered negative sets (oracle
    /// training only; must be zero).
    pub fn_audit_max: Option<f64>,
    /// Fraction of pair-mixed synthetics with at least one same-class source.
    pub synth_fn_at_least_one_frac: Option<f64>,
    /// Fraction of pair-mixed synthetics with both sources same-class.
    pub synth_fn_both_frac: Option<f64>,
    pub synthetic_count: u64,
    pub skipped_queries: u64,
    pub learning_rate: f64,
    pub wall_clock_s: f64,
}

/// Two stochastic views of one input: per-coordinate Gaussian noise followed
/// by a shared scalar gain in [0.8, 1.2].
pub fn augment(x: &RawVector, sigma: f64, key: RngKey) -> RawVector {
    let mut rng = key.stream();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut coords: Vec<f64> = x
        .coords()
        .iter()
        .map(|&c| c + sigma * normal.sample(&mut rng))
        .collect();
    let gain = 0.8 + 0.4 * rng.random::<f64>();
    for c in &mut coords {
        *c *= gain;
    }
    RawVector::new(coords).expect("augmented view stays finite")
}

/// Half-cosine decay from `base_lr` at epoch 0 to 0 at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> f64 {
    if total_epochs == 0 {
        return base_lr;
    }
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total_epochs as f64).cos())
}

/// Aggregates returned by one [`train_step`].
#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub processed: usize,
    pub skipped: usize,
    pub loss_sum: f64,
    pub proxy_hits_with: usize,
    pub proxy_hits_without: usize,
    /// Extended logit records, kept for the epoch-level matching profile.
    pub records: Vec<LogitRecord>,
    pub synthetic_count: usize,
    pub fn_fraction_sum: f64,
    pub fn_fraction_count: usize,
    pub fn_audit_max: f64,
    pub synth_pair_total: usize,
    pub synth_pair_fn_one: usize,
    pub synth_pair_fn_both: usize,
}

enum SampleOutcome {
    Skipped,
    Done(Box<SampleResult>),
}

struct SampleResult {
    grads: EncoderGrads,
    loss: f64,
    record_with: LogitRecord,
    proxy_with: bool,
    proxy_without: bool,
    synthetic_count: usize,
    fn_fraction: Option<f64>,
    fn_audit: Option<f64>,
    pair_total: usize,
    pair_fn_one: usize,
    pair_fn_both: usize,
}

/// One optimization step over a batch.
///
/// Per sample: two augmented views, query and key encodings, optional oracle
/// filtering, synthesis, extended logits, loss and gradient, backprop. Then,
/// in order: one SGD update of the query encoder from the batch-averaged
/// gradient, the momentum update of the key encoder, and the push of the
/// batch keys into the queue.
///
/// While the queue holds fewer entries than the batch, each query's
/// negatives are the other keys of the current batch instead.
pub fn train_step(
    state: &mut TrainState,
    inputs: &[RawVector],
    labels: Option<&[ClassLabel]>,
    config: &TrainConfig,
    lr: f64,
) -> Result<StepStats> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(l) = labels {
        if l.len() != inputs.len() {
            return Err(Error::LabelLengthMismatch {
                labels: l.len(),
                features: inputs.len(),
            });
        }
    }
    if config.oracle_training && labels.is_none() {
        return Err(Error::MissingLabels(
            "oracle training requires a labeled batch".into(),
        ));
    }
    let epoch = state.epoch as u64;
    let step = state.step;
    let aug_root = state.root.child(streams::AUGMENT).child(epoch).child(step);
    let synth_root = state.root.child(streams::SYNTHESIS).child(epoch).child(step);

    // Phase 1: encode both views of every sample.
    let views: Vec<(UnitVector, crate::encoder::ForwardTape, UnitVector)> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<_> {
            let view_q = augment(x, config.aug_noise, aug_root.child(i as u64).child(0));
            let view_k = augment(x, config.aug_noise, aug_root.child(i as u64).child(1));
            let (q, tape) = forward(&state.encoders.query, &view_q)?;
            let (k, _) = forward(&state.encoders.key, &view_k)?;
            Ok((q, tape, k))
        })
        .collect::<Result<Vec<_>>>()?;

    let cold_start = state.queue.len() < inputs.len();
    let snapshot = if cold_start {
        Vec::new()
    } else {
        state.queue.snapshot()
    };

    // Phase 2: per-query negatives, synthesis, loss, gradient.
    let outcomes: Vec<SampleOutcome> = (0..inputs.len())
        .into_par_iter()
        .map(|i| -> Result<SampleOutcome> {
            let (q, tape, k) = &views[i];
            let query_label = labels.map(|l| l[i]);

            let batch_entries: Option<Vec<QueueEntry>> = cold_start.then(|| {
                views
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, (_, _, kj))| QueueEntry {
                        feature: kj.clone(),
                        label: labels.map(|l| l[j]),
                        insertion_index: j as u64,
                    })
                    .collect()
            });
            let raw_entries: &[QueueEntry] = batch_entries.as_deref().unwrap_or(&snapshot);

            let filtered_owned;
            let entries: &[QueueEntry] = if config.oracle_training {
                let label = query_label.expect("checked above");
                filtered_owned = oracle_filter(raw_entries, label)?;
                if filtered_owned.is_empty() {
                    return Ok(SampleOutcome::Skipped);
                }
                &filtered_owned
            } else {
                raw_entries
            };

            let synthetics = match synthesize(
                q,
                k,
                entries,
                &config.mochi,
                state.epoch,
                synth_root.child(i as u64),
                query_label,
            ) {
                Ok(s) => s,
                Err(Error::NoEligibleNegatives) => return Ok(SampleOutcome::Skipped),
                Err(e) => return Err(e),
            };

            let neg_features: Vec<UnitVector> =
                entries.iter().map(|e| e.feature.clone()).collect();
            let base = compute_logits(q, k, &neg_features, config.tau)?;
            let extended = extend_logits(
                &base,
                q,
                &synthetics,
                config.tau,
                config.mochi.weight_query_mix_logits,
            )?;
            let dist = matching_probs(&extended);
            let sample_loss = loss(&dist);

            let mut all_features = neg_features;
            all_features.extend(synthetics.iter().map(|s| s.feature.clone()));
            let grad_q = grad_from_distribution(&dist, k, &all_features, config.tau)?;
            let (grads, _) = backward(&state.encoders.query, tape, &grad_q)?;

            let strictly_wins = |r: &LogitRecord| {
                r.negative_logits.iter().all(|&n| r.positive_logit > n)
            };
            let labeled = query_label.is_some() && entries.iter().all(|e| e.label.is_some());
            let fn_fraction = if labeled {
                let top_m = PROFILE_TOP_M.min(entries.len());
                Some(crate::analysis::fn_fraction_top(
                    q,
                    entries,
                    query_label.expect("labeled"),
                    top_m,
                )?)
            } else {
                None
            };
            let fn_audit = if config.oracle_training {
                let same = entries
                    .iter()
                    .filter(|e| e.label == query_label)
                    .count();
                Some(same as f64 / entries.len() as f64)
            } else {
                None
            };
            let (mut pair_total, mut pair_fn_one, mut pair_fn_both) = (0, 0, 0);
            for s in &synthetics {
                if s.is_pair_mix() {
                    pair_total += 1;
                    if let Some(c) = s.fn_component_count {
                        if c >= 1 {
                            pair_fn_one += 1;
                        }
                        if c == 2 {
                            pair_fn_both += 1;
                        }
                    }
                }
            }

            Ok(SampleOutcome::Done(Box::new(SampleResult {
                grads,
                loss: sample_loss,
                proxy_with: strictly_wins(&extended),
                proxy_without: strictly_wins(&base),
                record_with: extended,
                synthetic_count: synthetics.len(),
                fn_fraction,
                fn_audit,
                pair_total,
                pair_fn_one,
                pair_fn_both,
            })))
        })
        .collect::<Result<Vec<_>>>()?;

    // Phase 3: deterministic ordered reduction, then the three updates.
    let mut stats = StepStats::default();
    let mut total_grads: Option<EncoderGrads> = None;
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Skipped => stats.skipped += 1,
            SampleOutcome::Done(r) => {
                stats.processed += 1;
                stats.loss_sum += r.loss;
                stats.proxy_hits_with += r.proxy_with as usize;
                stats.proxy_hits_without += r.proxy_without as usize;
                stats.records.push(r.record_with);
                stats.synthetic_count += r.synthetic_count;
                if let Some(f) = r.fn_fraction {
                    stats.fn_fraction_sum += f;
                    stats.fn_fraction_count += 1;
                }
                if let Some(a) = r.fn_audit {
                    stats.fn_audit_max = stats.fn_audit_max.max(a);
                }
                stats.synth_pair_total += r.pair_total;
                stats.synth_pair_fn_one += r.pair_fn_one;
                stats.synth_pair_fn_both += r.pair_fn_both;
                match &mut total_grads {
                    Some(g) => g.add_assign(&r.grads),
                    None => total_grads = Some(r.grads),
                }
            }
        }
    }

    if let Some(mut grads) = total_grads {
        grads.scale(1.0 / stats.processed as f64);
        apply_gradients(&mut state.encoders.query, &grads, lr);
    }
    state.encoders.momentum_update()?;
    let keys: Vec<UnitVector> = views.into_iter().map(|(_, _, k)| k).collect();
    state
        .queue
        .push_batch(keys, labels.map(|l| l.to_vec()))?;
    state.step += 1;
    Ok(stats)
}

fn epoch_metrics(
    epoch: usize,
    lr: f64,
    acc: &StepStats,
    oracle_training: bool,
    elapsed_s: f64,
) -> Result<EpochMetrics> {
    if acc.processed == 0 {
        return Err(Error::NoEligibleNegatives);
    }
    let n = acc.processed as f64;
    let top_m = acc
        .records
        .iter()
        .map(|r| r.negative_logits.len())
        .min()
        .unwrap_or(0)
        .min(PROFILE_TOP_M);
    let matching_profile = ranked_matching_profile(&acc.records, top_m)?;
    Ok(EpochMetrics {
        epoch,
        mean_loss: acc.loss_sum / n,
        proxy_acc_with_synth: acc.proxy_hits_with as f64 / n,
        proxy_acc_no_synth: acc.proxy_hits_without as f64 / n,
        matching_profile,
        fn_fraction_top: (acc.fn_fraction_count > 0)
            .then(|| acc.fn_fraction_sum / acc.fn_fraction_count as f64),
        fn_audit_max: oracle_training.then_some(acc.fn_audit_max),
        synth_fn_at_least_one_frac: (acc.synth_pair_total > 0)
            .then(|| acc.synth_pair_fn_one as f64 / acc.synth_pair_total as f64),
        synth_fn_both_frac: (acc.synth_pair_total > 0)
            .then(|| acc.synth_pair_fn_both as f64 / acc.synth_pair_total as f64),
        synthetic_count: acc.synthetic_count as u64,
        skipped_queries: acc.skipped as u64,
        learning_rate: lr,
        wall_clock_s: elapsed_s,
    })
}

/// Initialize state for a config and input dimension: fresh encoders (key a
/// copy of the query), an empty queue, counters at zero.
pub fn init_state(config: &TrainConfig, input_dim: usize) -> Result<TrainState> {
    let root = RngKey::from_seed(config.seed);
    let query = init(
        &config.layer_sizes(input_dim),
        root.child(streams::ENCODER_INIT),
    )?;
    let encoders = EncoderPair::new(query, config.momentum)?;
    Ok(TrainState {
        encoders,
        queue: NegativeQueue::new(config.queue_capacity),
        step: 0,
        epoch: 0,
        root,
        seed: config.seed,
    })
}

/// Run the full loop: `epochs` passes over seeded shuffles of the dataset,
/// one `metrics.jsonl` line per epoch, checkpoints every ceil(epochs/4)
/// epochs and at the end. Partial trailing batches are dropped.
pub fn run(config: &TrainConfig, dataset: &ToyDataset) -> Result<(Vec<EpochMetrics>, TrainState)> {
    config.validate()?;
    if dataset.len() < config.batch_size {
        return Err(Error::ConfigInvalid(format!(
            "dataset of {} samples is smaller than batch_size {}",
            dataset.len(),
            config.batch_size
        )));
    }
    let out_dir = Path::new(&config.output_dir);
    std::fs::create_dir_all(out_dir)?;
    let mut metrics_file = std::io::BufWriter::new(std::fs::File::create(
        out_dir.join("metrics.jsonl"),
    )?);

    let mut state = init_state(config, dataset.dim())?;
    let ckpt_interval = config.epochs.div_ceil(4).max(1);
    let steps_per_epoch = dataset.len() / config.batch_size;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        state.epoch = epoch;
        let lr = cosine_lr(epoch, config.epochs, config.base_lr);

        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut shuffle_rng = state
            .root
            .child(streams::SHUFFLE)
            .child(epoch as u64)
            .stream();
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut acc = StepStats::default();
        for step_i in 0..steps_per_epoch {
            let batch = &order[step_i * config.batch_size..(step_i + 1) * config.batch_size];
            let inputs: Vec<RawVector> =
                batch.iter().map(|&i| dataset.inputs[i].clone()).collect();
            let labels: Vec<ClassLabel> = batch.iter().map(|&i| dataset.labels[i]).collect();
            let stats = train_step(&mut state, &inputs, Some(&labels), config, lr)?;
            acc.processed += stats.processed;
            acc.skipped += stats.skipped;
            acc.loss_sum += stats.loss_sum;
            acc.proxy_hits_with += stats.proxy_hits_with;
            acc.proxy_hits_without += stats.proxy_hits_without;
            acc.records.extend(stats.records);
            acc.synthetic_count += stats.synthetic_count;
            acc.fn_fraction_sum += stats.fn_fraction_sum;
            acc.fn_fraction_count += stats.fn_fraction_count;
            acc.fn_audit_max = acc.fn_audit_max.max(stats.fn_audit_max);
            acc.synth_pair_total += stats.synth_pair_total;
            acc.synth_pair_fn_one += stats.synth_pair_fn_one;
            acc.synth_pair_fn_both += stats.synth_pair_fn_both;
        }

        let metrics = epoch_metrics(
            epoch,
            lr,
            &acc,
            config.oracle_training,
            started.elapsed().as_secs_f64(),
        )?;
        writeln!(metrics_file, "{}", serde_json::to_string(&metrics)?)?;
        metrics_file.flush()?;
        history.push(metrics);

        if (epoch + 1) % ckpt_interval == 0 && epoch + 1 < config.epochs {
            Checkpoint::from_state(&state)
                .save(&out_dir.join(format!("ckpt-epoch-{:04}.json", epoch + 1)))?;
        }
    }
    state.epoch = config.epochs;
    Checkpoint::from_state(&state).save(&out_dir.join("ckpt-final.json"))?;
    Ok((history, state))
}

/// Encode raw inputs with a trained encoder.
pub fn encode_dataset(params: &EncoderParams, inputs: &[RawVector]) -> Result<Vec<UnitVector>> {
    inputs
        .iter()
        .map(|x| forward(params, x).map(|(u, _)| u))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in` weights.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk snapshot of a run: both encoders, the optimizer step, and the rng
/// root key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: String,
    pub layer_sizes: Vec<usize>,
    pub query_encoder: Vec<CheckpointLayer>,
    pub key_encoder: Vec<CheckpointLayer>,
    pub step: u64,
    pub rng_root: u64,
}

fn to_checkpoint_layers(params: &EncoderParams) -> Vec<CheckpointLayer> {
    params
        .layers
        .iter()
        .map(|l| CheckpointLayer {
            fan_in: l.fan_in,
            fan_out: l.fan_out,
            weight: l.weight.clone(),
            bias: l.bias.clone(),
        })
        .collect()
}

fn from_checkpoint_layers(layers: &[CheckpointLayer]) -> Result<EncoderParams> {
    if layers.is_empty() {
        return Err(Error::BadShape("checkpoint has no layers".into()));
    }
    let layers = layers
        .iter()
        .map(|l| {
            if l.weight.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(Error::BadShape(format!(
                    "layer {}x{} carries {} weights and {} biases",
                    l.fan_out,
                    l.fan_in,
                    l.weight.len(),
                    l.bias.len()
                )));
            }
            Ok(crate::encoder::Layer {
                weight: l.weight.clone(),
                bias: l.bias.clone(),
                fan_in: l.fan_in,
                fan_out: l.fan_out,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncoderParams { layers })
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            layer_sizes: state.encoders.query.layer_sizes(),
            query_encoder: to_checkpoint_layers(&state.encoders.query),
            key_encoder: to_checkpoint_layers(&state.encoders.key),
            step: state.step,
            rng_root: state.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut file, self)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::ConfigInvalid(format!(
                "unsupported checkpoint version '{}', expected '{}'",
                ckpt.version, CHECKPOINT_VERSION
            )));
        }
        Ok(ckpt)
    }

    pub fn query_params(&self) -> Result<EncoderParams> {
        from_checkpoint_layers(&self.query_encoder)
    }

    pub fn key_params(&self) -> Result<EncoderParams> {
        from_checkpoint_layers(&self.key_encoder)
    }
}
