//! Property tests for the crate-wide invariants.

use proptest::prelude::*;

use mochi_core::analysis::{alignment_expectation, uniformity_loss};
use mochi_core::infonce::{matching_probs, LogitRecord};
use mochi_core::queue::{oracle_filter, NegativeQueue, QueueEntry};
use mochi_core::rng::RngKey;
use mochi_core::synthesis::{mix_unit, rank_negatives, synthesize, MochiConfig};
use mochi_core::trainer::cosine_lr;
use mochi_core::vecspace::{dot, l2_normalize, tempered_softmax, RawVector, UnitVector};

fn raw_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0_f64..10.0, d..=d)
        .prop_filter("not the zero vector", |v| {
            v.iter().map(|c| c * c).sum::<f64>().sqrt() > 1e-6
        })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(
        logits in proptest::collection::vec(-50.0_f64..50.0, 1..64),
        tau_idx in 0usize..3
    ) {
        let tau = [0.07, 0.2, 1.0][tau_idx];
        let probs = tempered_softmax(&logits, tau).unwrap();
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn softmax_is_strictly_positive_below_underflow(
        // gaps stay under exp's underflow threshold at tau = 0.07
        logits in proptest::collection::vec(-24.0_f64..24.0, 1..64),
        tau_idx in 0usize..3
    ) {
        let tau = [0.07, 0.2, 1.0][tau_idx];
        let probs = tempered_softmax(&logits, tau).unwrap();
        prop_assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn normalize_is_idempotent(v in raw_vec(6)) {
        let once = l2_normalize(&RawVector::new(v).unwrap()).unwrap();
        let twice = l2_normalize(&RawVector::new(once.coords().to_vec()).unwrap()).unwrap();
        for (a, b) in once.coords().iter().zip(twice.coords()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((dot(&once, &once).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn queue_matches_list_model(batches in proptest::collection::vec(1usize..12, 1..24)) {
        let capacity = 11;
        let mut queue = NegativeQueue::new(capacity);
        let mut model: Vec<u64> = Vec::new();
        let mut counter = 0u64;
        let mut rng = RngKey::from_seed(1).stream();
        for batch in batches {
            let batch = batch.min(capacity);
            let features: Vec<UnitVector> = (0..batch)
                .map(|_| {
                    use rand::Rng;
                    let coords: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
                    l2_normalize(&RawVector::new(coords).unwrap()).unwrap()
                })
                .collect();
            queue.push_batch(features, None).unwrap();
            for _ in 0..batch {
                model.push(counter);
                counter += 1;
            }
            let overflow = model.len().saturating_sub(capacity);
            model.drain(..overflow);
            let snapshot = queue.snapshot();
            prop_assert_eq!(snapshot.len(), model.len());
            for (e, idx) in snapshot.iter().zip(&model) {
                prop_assert_eq!(e.insertion_index, *idx);
            }
        }
    }

    #[test]
    fn oracle_filter_partitions_entries(labels in proptest::collection::vec(0i64..4, 1..40), query in 0i64..4) {
        let entries: Vec<QueueEntry> = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| QueueEntry {
                feature: l2_normalize(
                    &RawVector::new(vec![1.0, i as f64 + 1.0]).unwrap(),
                )
                .unwrap(),
                label: Some(label),
                insertion_index: i as u64,
            })
            .collect();
        let kept = oracle_filter(&entries, query).unwrap();
        prop_assert!(kept.iter().all(|e| e.label != Some(query)));
        let removed = entries.len() - kept.len();
        let same = labels.iter().filter(|&&l| l == query).count();
        prop_assert_eq!(removed, same);
        // order preserved
        let kept_idx: Vec<u64> = kept.iter().map(|e| e.insertion_index).collect();
        let mut sorted = kept_idx.clone();
        sorted.sort_unstable();
        prop_assert_eq!(kept_idx, sorted);
    }

    #[test]
    fn query_mix_monotonicity_is_algebraic(cos in -1.0_f64..1.0, beta in 0.0001_f64..0.4999) {
        // any anchor/negative pair with the given cosine, in the plane
        let q = l2_normalize(&RawVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let n = l2_normalize(&RawVector::new(vec![cos, sin]).unwrap()).unwrap();
        let h = mix_unit(beta, &q, &n).unwrap();
        prop_assert!(dot(&q, &h).unwrap() >= dot(&q, &n).unwrap() - 1e-9);
    }

    #[test]
    fn synthesis_count_and_norm_contract(
        s in 0usize..6,
        s_prime in 0usize..6,
        n in 2usize..12,
        seed in 0u64..500,
        epoch in 0usize..4,
        warmup in 0usize..4
    ) {
        use rand::Rng;
        let mut rng = RngKey::from_seed(seed).stream();
        let entries: Vec<QueueEntry> = (0..16)
            .map(|i| {
                let coords: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                QueueEntry {
                    feature: l2_normalize(&RawVector::new(coords).unwrap()).unwrap(),
                    label: None,
                    insertion_index: i,
                }
            })
            .collect();
        let q = entries[0].feature.clone();
        let k = entries[1].feature.clone();
        let config = MochiConfig {
            n,
            s,
            s_prime,
            warmup_epochs: warmup,
            ..MochiConfig::disabled()
        };
        let out = synthesize(&q, &k, &entries, &config, epoch, RngKey::from_seed(seed), None).unwrap();
        let expected = if epoch < warmup { 0 } else { s + s_prime };
        prop_assert_eq!(out.len(), expected);
        for syn in &out {
            let norm: f64 = syn.feature.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
        // identical keys replay identically
        let again = synthesize(&q, &k, &entries, &config, epoch, RngKey::from_seed(seed), None).unwrap();
        for (a, b) in out.iter().zip(&again) {
            prop_assert_eq!(a.feature.coords(), b.feature.coords());
        }
    }

    #[test]
    fn ranking_is_a_sorted_permutation(seed in 0u64..500) {
        use rand::Rng;
        let mut rng = RngKey::from_seed(seed).stream();
        let entries: Vec<QueueEntry> = (0..20)
            .map(|i| {
                let coords: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                QueueEntry {
                    feature: l2_normalize(&RawVector::new(coords).unwrap()).unwrap(),
                    label: None,
                    insertion_index: i,
                }
            })
            .collect();
        let anchor = entries[3].feature.clone();
        let ranked = rank_negatives(&anchor, &entries).unwrap();
        let mut seen = ranked.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..entries.len()).collect::<Vec<_>>());
        for pair in ranked.windows(2) {
            let a = dot(&anchor, &entries[pair[0]].feature).unwrap();
            let b = dot(&anchor, &entries[pair[1]].feature).unwrap();
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn matching_distribution_sums_to_one(
        pos in -20.0_f64..20.0,
        negs in proptest::collection::vec(-20.0_f64..20.0, 1..100)
    ) {
        let record = LogitRecord::new(pos, negs, 0.2).unwrap();
        let dist = matching_probs(&record);
        let sum: f64 = dist.p_key + dist.p_negatives.iter().sum::<f64>();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniformity_is_permutation_invariant_and_nonpositive(seed in 0u64..200) {
        use rand::Rng;
        let mut rng = RngKey::from_seed(seed).stream();
        let feats: Vec<UnitVector> = (0..12)
            .map(|_| {
                let coords: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                l2_normalize(&RawVector::new(coords).unwrap()).unwrap()
            })
            .collect();
        let u = uniformity_loss(&feats, 2.0).unwrap();
        prop_assert!(u <= 0.0);
        let mut reversed = feats.clone();
        reversed.reverse();
        let ur = uniformity_loss(&reversed, 2.0).unwrap();
        prop_assert!((u - ur).abs() < 1e-12);
    }

    #[test]
    fn alignment_is_nonnegative(seed in 0u64..200, alpha_idx in 0usize..2) {
        use rand::Rng;
        let alpha = [1.0, 2.0][alpha_idx];
        let mut rng = RngKey::from_seed(seed).stream();
        let pairs: Vec<(UnitVector, UnitVector)> = (0..8)
            .map(|_| {
                let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                    let coords: Vec<f64> =
                        (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    l2_normalize(&RawVector::new(coords).unwrap()).unwrap()
                };
                (mk(&mut rng), mk(&mut rng))
            })
            .collect();
        prop_assert!(alignment_expectation(&pairs, alpha).unwrap() >= 0.0);
    }

    #[test]
    fn cosine_schedule_stays_in_range(epoch in 0usize..100, total in 1usize..100, lr in 0.001_f64..10.0) {
        prop_assume!(epoch <= total);
        let v = cosine_lr(epoch, total, lr);
        prop_assert!(v >= 0.0 && v <= lr);
        if epoch > 0 {
            prop_assert!(cosine_lr(epoch - 1, total, lr) >= v);
        }
    }
}
