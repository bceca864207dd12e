//! FIFO bank of the latest key embeddings, with optional class labels for
//! oracle analysis and filtering.
//!
//! Single-writer: one trainer mutates the queue; [`NegativeQueue::snapshot`]
//! hands out immutable copies that analysis code may keep as long as it
//! likes.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::vecspace::UnitVector;

/// Class identifier used by oracle runs.
pub type ClassLabel = i64;

/// One stored key embedding.
#[derive(Debug, Clone)]
pub struct QueueEntry {
    pub feature: UnitVector,
    pub label: Option<ClassLabel>,
    /// Monotone counter assigned at push time; strictly increases with push
    /// order across the queue's lifetime.
    pub insertion_index: u64,
}

/// Fixed-capacity FIFO of [`QueueEntry`], oldest first.
#[derive(Debug, Clone)]
pub struct NegativeQueue {
    capacity: usize,
    entries: VecDeque<QueueEntry>,
    next_index: u64,
}

impl NegativeQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        NegativeQueue {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            next_index: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append a batch of key features, evicting the oldest entries once the
    /// capacity is exceeded. `labels`, when given, must match `features` in
    /// length.
    pub fn push_batch(
        &mut self,
        features: Vec<UnitVector>,
        labels: Option<Vec<ClassLabel>>,
    ) -> Result<()> {
        if features.len() > self.capacity {
            return Err(Error::BatchTooLarge {
                batch: features.len(),
                capacity: self.capacity,
            });
        }
        if let Some(ref l) = labels {
            if l.len() != features.len() {
                return Err(Error::LabelLengthMismatch {
                    labels: l.len(),
                    features: features.len(),
                });
            }
        }
        for (i, feature) in features.into_iter().enumerate() {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(QueueEntry {
                feature,
                label: labels.as_ref().map(|l| l[i]),
                insertion_index: self.next_index,
            });
            self.next_index += 1;
        }
        Ok(())
    }

    /// Immutable copy of the current contents, oldest to newest. Later pushes
    /// do not affect the returned vector.
    pub fn snapshot(&self) -> Vec<QueueEntry> {
        self.entries.iter().cloned().collect()
    }
}

/// Keep only the entries whose label differs from `query_label`, preserving
/// order. Every entry must carry a label.
pub fn oracle_filter(entries: &[QueueEntry], query_label: ClassLabel) -> Result<Vec<QueueEntry>> {
    for (i, e) in entries.iter().enumerate() {
        if e.label.is_none() {
            return Err(Error::MissingLabels(format!("entry at position {i}")));
        }
    }
    Ok(entries
        .iter()
        .filter(|e| e.label != Some(query_label))
        .cloned()
        .collect())
}
