//! Contrastive representation learning with a momentum encoder, a FIFO
//! memory of negatives, and on-the-fly feature-space hard-negative mixing,
//! plus the diagnostics to study it: proxy-task accuracy, matching-probability
//! profiles, false-negative audits, and alignment/uniformity metrics.

pub mod analysis;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod infonce;
pub mod queue;
pub mod rng;
pub mod synthesis;
pub mod trainer;
pub mod vecspace;

pub use analysis::{AnalysisReport, LabeledEmbeddingSet};
pub use encoder::{EncoderPair, EncoderParams};
pub use error::{Error, Result};
pub use infonce::{LogitRecord, MatchDistribution};
pub use queue::{ClassLabel, NegativeQueue, QueueEntry};
pub use synthesis::{MochiConfig, SyntheticNegative};
pub use trainer::{Checkpoint, EpochMetrics, TrainConfig, TrainState};
pub use vecspace::{RawVector, UnitVector};
