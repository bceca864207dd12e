//! Operator surface: run training, probe checkpoints, compute embedding
//! diagnostics, and dump the synthesis demo, all from JSON configs with
//! reproducible seeds.
//!
//! Exit codes: 0 success, 2 config or input-format error (the message names
//! the offending key), 1 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand_distr::{Distribution, Normal};
use serde_json::Value;

use mochi_core::analysis::{
    alignment_expectation, fn_fraction_top, linear_probe, same_class_pairs, uniformity_loss,
    AnalysisReport, LabeledEmbeddingSet,
};
use mochi_core::datasets::{load_csv, split, write_labeled_csv};
use mochi_core::error::Error;
use mochi_core::queue::QueueEntry;
use mochi_core::rng::RngKey;
use mochi_core::synthesis::synthesize;
use mochi_core::trainer::{encode_dataset, run, Checkpoint, TrainConfig};
use mochi_core::vecspace::{l2_normalize, pca_project_2d, RawVector, UnitVector};

#[derive(Parser)]
#[command(name = "mochi", version, about = "Contrastive training with hard-negative mixing")]
struct Cli {
    /// Worker threads for parallel sections (0 = one per core). Results are
    /// independent of this value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config; writes resolved-config.json, metrics.jsonl
    /// and checkpoints into the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-key overrides, e.g. --set mochi.s=0 --set base_lr=0.1
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also write the (possibly generated) training data as CSV, so it
        /// can be fed to `eval` later.
        #[arg(long)]
        dump_dataset: Option<PathBuf>,
    },
    /// Encode a labeled CSV with a checkpointed query encoder and report
    /// linear-probe accuracy on a stratified split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 300)]
        probe_epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        probe_lr: f64,
        /// Directory for report.json (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump every embedding as label,c0..c{d-1} CSV.
        #[arg(long)]
        dump_embeddings: Option<PathBuf>,
    },
    /// Compute uniformity, alignment, false-negative and PCA statistics for
    /// an embedding CSV.
    Analyze {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        #[arg(long, default_value_t = 16)]
        top_m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize hard negatives for random queries over a random memory and
    /// dump them with 2-D projections for plotting.
    DemoSynthesis {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let workers = cli.workers;
    let body = || dispatch(cli.command);
    let result = if workers > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(body),
            Err(e) => {
                eprintln!("error: cannot build worker pool: {e}");
                std::process::exit(1);
            }
        }
    } else {
        body()
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

/// Config and input-format problems exit with 2; only genuine runtime
/// failures exit with 1.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::RejectionBudgetExceeded { .. } | Error::NoEligibleNegatives => 1,
        _ => 2,
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Train {
            config,
            out,
            overrides,
            dump_dataset,
        } => cmd_train(&config, out.as_deref(), &overrides, dump_dataset.as_deref()),
        Command::Eval {
            checkpoint,
            data,
            split_seed,
            train_fraction,
            probe_epochs,
            probe_lr,
            out,
            dump_embeddings,
        } => cmd_eval(
            &checkpoint,
            &data,
            split_seed,
            train_fraction,
            probe_epochs,
            probe_lr,
            out.as_deref(),
            dump_embeddings.as_deref(),
        ),
        Command::Analyze {
            embeddings,
            alpha,
            t,
            top_m,
            out,
        } => cmd_analyze(&embeddings, alpha, t, top_m, out.as_deref()),
        Command::DemoSynthesis {
            config,
            out,
            overrides,
        } => cmd_demo_synthesis(&config, out.as_deref(), &overrides),
    }
}

/// Parse the config file, apply dotted-key overrides, and reject unknown
/// keys.
fn load_config(path: &Path, overrides: &[String]) -> Result<TrainConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut doc: Value = serde_json::from_str(&text)?;
    for entry in overrides {
        let (key, value) = entry.split_once('=').ok_or_else(|| {
            Error::ConfigInvalid(format!("override '{entry}' is not of the form key=value"))
        })?;
        let parsed: Value = serde_json::from_str(value)
            .unwrap_or_else(|_| Value::String(value.to_string()));
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .as_object_mut()
                .ok_or_else(|| {
                    Error::ConfigInvalid(format!("override path '{key}' crosses a non-object"))
                })?
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        let last = parts.last().expect("split never empty");
        node.as_object_mut()
            .ok_or_else(|| {
                Error::ConfigInvalid(format!("override path '{key}' crosses a non-object"))
            })?
            .insert(last.to_string(), parsed);
    }
    TrainConfig::from_json(&serde_json::to_string(&doc)?)
}

fn write_report(report: &AnalysisReport, dir: &Path) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

fn cmd_train(
    config_path: &Path,
    out: Option<&Path>,
    overrides: &[String],
    dump_dataset: Option<&Path>,
) -> Result<(), Error> {
    let mut config = load_config(config_path, overrides)?;
    if let Some(dir) = out {
        config.output_dir = dir.to_string_lossy().into_owned();
    }
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    let mut resolved = serde_json::to_string_pretty(&config)?;
    resolved.push('\n');
    std::fs::write(out_dir.join("resolved-config.json"), resolved)?;

    let dataset = config.load_dataset()?;
    if let Some(path) = dump_dataset {
        dataset.save_csv(path)?;
    }
    log::info!(
        "training on {} samples of dimension {}",
        dataset.len(),
        dataset.dim()
    );
    let (history, _state) = run(&config, &dataset)?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs; final loss {:.4}, proxy accuracy {:.3} ({:.3} with synthetics)",
            history.len(),
            last.mean_loss,
            last.proxy_acc_no_synth,
            last.proxy_acc_with_synth,
        );
    } else {
        println!("trained 0 epochs");
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    split_seed: u64,
    train_fraction: f64,
    probe_epochs: usize,
    probe_lr: f64,
    out: Option<&Path>,
    dump_embeddings: Option<&Path>,
) -> Result<(), Error> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let params = ckpt.query_params()?;
    let dataset = load_csv(data)?;
    if dataset.dim() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: dataset.dim(),
        });
    }
    if let Some(path) = dump_embeddings {
        let all = encode_dataset(&params, &dataset.inputs)?;
        let rows: Vec<&[f64]> = all.iter().map(|u| u.coords()).collect();
        write_labeled_csv(path, &dataset.labels, rows)?;
    }
    let (train, test) = split(&dataset, train_fraction, split_seed)?;
    let train_set = LabeledEmbeddingSet::new(
        encode_dataset(&params, &train.inputs)?,
        train.labels.clone(),
    )?;
    let test_set = LabeledEmbeddingSet::new(
        encode_dataset(&params, &test.inputs)?,
        test.labels.clone(),
    )?;
    let accuracy = linear_probe(&train_set, &test_set, probe_epochs, probe_lr)?;

    let mut report = AnalysisReport::empty();
    report.probe_accuracy = Some(accuracy);
    let path = write_report(&report, out.unwrap_or(Path::new(".")))?;
    println!("probe accuracy {accuracy:.4}; report at {}", path.display());
    Ok(())
}

fn cmd_analyze(
    embeddings: &Path,
    alpha: f64,
    t: f64,
    top_m: usize,
    out: Option<&Path>,
) -> Result<(), Error> {
    let dataset = load_csv(embeddings)?;
    let features = dataset
        .inputs
        .iter()
        .map(|v| UnitVector::new(v.coords().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    let set = LabeledEmbeddingSet::new(features, dataset.labels.clone())?;

    let mut report = AnalysisReport::empty();
    report.neg_uniformity = Some(-uniformity_loss(&set.features, t)?);
    let pairs = same_class_pairs(&set, 100_000, 0);
    report.neg_alignment = if pairs.is_empty() {
        None
    } else {
        Some(alignment_expectation(&pairs, alpha)?)
    };

    // False negatives among the top logits, each point serving as the query
    // against all the others.
    let n = set.len();
    if n >= 2 {
        let m = top_m.min(n - 1);
        let mut total = 0.0;
        for i in 0..n {
            let entries: Vec<QueueEntry> = (0..n)
                .filter(|&j| j != i)
                .map(|j| QueueEntry {
                    feature: set.features[j].clone(),
                    label: Some(set.labels[j]),
                    insertion_index: j as u64,
                })
                .collect();
            total += fn_fraction_top(&set.features[i], &entries, set.labels[i], m)?;
        }
        report.fn_fraction_top_m = Some(total / n as f64);
    }

    report.retained_variance_2d = match pca_project_2d(&set.features) {
        Ok(pca) => Some(pca.retained_variance),
        Err(Error::TooFewPoints { .. }) => None,
        Err(e) => return Err(e),
    };

    let path = write_report(&report, out.unwrap_or(Path::new(".")))?;
    println!("report at {}", path.display());
    Ok(())
}

fn cmd_demo_synthesis(
    config_path: &Path,
    out: Option<&Path>,
    overrides: &[String],
) -> Result<(), Error> {
    const DOMAIN_DEMO: u64 = 0xDE30;
    let config = load_config(config_path, overrides)?;
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output_dir));
    std::fs::create_dir_all(&out_dir)?;

    fn draw_unit<R: rand::Rng>(rng: &mut R, d: usize) -> Result<UnitVector, Error> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let coords: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        l2_normalize(&RawVector::new(coords)?)
    }

    let d = config.embed_dim;
    let root = RngKey::from_seed(config.seed).child(DOMAIN_DEMO);
    let mut memory_rng = root.child(0).stream();
    let entries: Vec<QueueEntry> = (0..config.queue_capacity)
        .map(|i| {
            Ok(QueueEntry {
                feature: draw_unit(&mut memory_rng, d)?,
                label: None,
                insertion_index: i as u64,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let mut query_rng = root.child(1).stream();
    let n_queries = config.batch_size;
    let queries: Vec<(UnitVector, UnitVector)> = (0..n_queries)
        .map(|_| {
            Ok((
                draw_unit(&mut query_rng, d)?,
                draw_unit(&mut query_rng, d)?,
            ))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    // kind, owning query (-1 for memory), feature
    let mut rows: Vec<(&'static str, i64, UnitVector)> = Vec::new();
    for e in &entries {
        rows.push(("negative", -1, e.feature.clone()));
    }
    for (i, (q, k)) in queries.iter().enumerate() {
        rows.push(("query", i as i64, q.clone()));
        // the warm-up gate is bypassed: the demo always synthesizes
        let synthetics = synthesize(
            q,
            k,
            &entries,
            &config.mochi,
            config.mochi.warmup_epochs,
            root.child(2).child(i as u64),
            None,
        )?;
        for s in synthetics {
            let kind = if s.is_pair_mix() { "pair_mix" } else { "query_mix" };
            rows.push((kind, i as i64, s.feature));
        }
    }

    let features: Vec<UnitVector> = rows.iter().map(|(_, _, f)| f.clone()).collect();
    let pca = pca_project_2d(&features)?;
    log::info!(
        "2-D projection retains {:.1}% of the variance",
        100.0 * pca.retained_variance
    );

    let path = out_dir.join("demo.csv");
    let mut text = String::from("kind,query_index");
    for i in 0..d {
        text.push_str(&format!(",c{i}"));
    }
    text.push_str(",pca_x,pca_y\n");
    for ((kind, owner, feature), (px, py)) in rows.iter().zip(&pca.coords) {
        text.push_str(kind);
        text.push(',');
        text.push_str(&owner.to_string());
        for c in feature.coords() {
            text.push(',');
            text.push_str(&c.to_string());
        }
        text.push_str(&format!(",{px},{py}\n"));
    }
    std::fs::write(&path, text)?;
    println!(
        "wrote {} rows ({} memory, {} queries) to {}",
        rows.len(),
        entries.len(),
        n_queries,
        path.display()
    );
    Ok(())
}
