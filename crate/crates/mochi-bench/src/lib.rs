//! Shared setup helpers for the benchmark targets.

use rand::Rng;

use mochi_core::queue::QueueEntry;
use mochi_core::rng::RngKey;
use mochi_core::vecspace::{l2_normalize, RawVector, UnitVector};

pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> UnitVector {
    loop {
        let coords: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        if let Ok(u) = l2_normalize(&RawVector::new(coords).unwrap()) {
            return u;
        }
    }
}

pub fn random_entries(n: usize, d: usize, seed: u64) -> Vec<QueueEntry> {
    let mut rng = RngKey::from_seed(seed).stream();
    (0..n)
        .map(|i| QueueEntry {
            feature: random_unit(&mut rng, d),
            label: Some((i % 8) as i64),
            insertion_index: i as u64,
        })
        .collect()
}
