//! The contrastive loss over a positive key and a bank of negatives, its
//! analytic gradient with respect to the query, and the per-query
//! diagnostics built from matching probabilities.
//!
//! The gradient treats the key and every negative as constants: the key
//! branch runs through the momentum encoder and receives no gradient, and
//! synthetic negatives are appended as plain logits.

use crate::error::{Error, Result};
use crate::vecspace::{dot, tempered_softmax, RawVector, UnitVector};

/// Per-query logits: one positive (q·k/τ) and the negatives (q·n/τ) in queue
/// order, with synthetic logits appended after.
#[derive(Debug, Clone)]
pub struct LogitRecord {
    pub positive_logit: f64,
    pub negative_logits: Vec<f64>,
    pub tau: f64,
}

impl LogitRecord {
    pub fn new(positive_logit: f64, negative_logits: Vec<f64>, tau: f64) -> Result<Self> {
        if tau <= 0.0 || tau.is_nan() {
            return Err(Error::NonPositiveTemperature(tau));
        }
        if negative_logits.is_empty() {
            return Err(Error::EmptyNegatives);
        }
        if !positive_logit.is_finite() {
            return Err(Error::NonFinite(positive_logit));
        }
        for &l in &negative_logits {
            if !l.is_finite() {
                return Err(Error::NonFinite(l));
            }
        }
        Ok(LogitRecord {
            positive_logit,
            negative_logits,
            tau,
        })
    }
}

/// Softmax weights of the key and each negative for one query. Entries sum
/// to 1.
#[derive(Debug, Clone)]
pub struct MatchDistribution {
    pub p_key: f64,
    pub p_negatives: Vec<f64>,
}

/// Build the logit record for one query: q·k/τ and q·n/τ for each negative,
/// in input order.
pub fn compute_logits(
    q: &UnitVector,
    k: &UnitVector,
    negatives: &[UnitVector],
    tau: f64,
) -> Result<LogitRecord> {
    if tau <= 0.0 || tau.is_nan() {
        return Err(Error::NonPositiveTemperature(tau));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    let positive_logit = dot(q, k)? / tau;
    let negative_logits = negatives
        .iter()
        .map(|n| dot(q, n).map(|d| d / tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(LogitRecord {
        positive_logit,
        negative_logits,
        tau,
    })
}

/// Matching probabilities: softmax over (positive, negatives). τ is already
/// folded into the logits, so the softmax itself runs untempered.
pub fn matching_probs(record: &LogitRecord) -> MatchDistribution {
    let mut logits = Vec::with_capacity(1 + record.negative_logits.len());
    logits.push(record.positive_logit);
    logits.extend_from_slice(&record.negative_logits);
    let probs =
        tempered_softmax(&logits, 1.0).expect("logit record invariants guarantee valid softmax");
    MatchDistribution {
        p_key: probs[0],
        p_negatives: probs[1..].to_vec(),
    }
}

/// The contrastive loss is the negative log matching probability of the key.
pub fn loss(dist: &MatchDistribution) -> f64 {
    -dist.p_key.ln()
}

/// Gradient of the loss with respect to the query, computed from pinned
/// matching probabilities:
///
/// `-(1/τ) · ((1 - p_key)·k - Σ_n p_n·n)`
///
/// The key and negatives are constants here; `negatives` must line up with
/// `dist.p_negatives`.
pub fn grad_from_distribution(
    dist: &MatchDistribution,
    k: &UnitVector,
    negatives: &[UnitVector],
    tau: f64,
) -> Result<RawVector> {
    if tau <= 0.0 || tau.is_nan() {
        return Err(Error::NonPositiveTemperature(tau));
    }
    if dist.p_negatives.len() != negatives.len() {
        return Err(Error::DimensionMismatch {
            expected: dist.p_negatives.len(),
            got: negatives.len(),
        });
    }
    let d = k.dim();
    let mut grad = vec![0.0; d];
    let key_coeff = 1.0 - dist.p_key;
    for (g, kc) in grad.iter_mut().zip(k.coords()) {
        *g = key_coeff * kc;
    }
    for (p, n) in dist.p_negatives.iter().zip(negatives) {
        if n.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: n.dim(),
            });
        }
        for (g, nc) in grad.iter_mut().zip(n.coords()) {
            *g -= p * nc;
        }
    }
    for g in &mut grad {
        *g = -*g / tau;
    }
    RawVector::new(grad)
}

/// Gradient of the loss with respect to the query, end to end: logits,
/// matching probabilities, then [`grad_from_distribution`].
pub fn grad_wrt_query(
    q: &UnitVector,
    k: &UnitVector,
    negatives: &[UnitVector],
    tau: f64,
) -> Result<RawVector> {
    let record = compute_logits(q, k, negatives, tau)?;
    let dist = matching_probs(&record);
    grad_from_distribution(&dist, k, negatives, tau)
}

/// Fraction of records whose positive logit strictly beats every negative
/// logit. Ties count as failure.
pub fn proxy_accuracy(records: &[LogitRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = records
        .iter()
        .filter(|r| r.negative_logits.iter().all(|&n| r.positive_logit > n))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Position-wise mean of each record's `top_m` largest negative matching
/// probabilities. The output is non-increasing.
pub fn ranked_matching_profile(records: &[LogitRecord], top_m: usize) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (i, r) in records.iter().enumerate() {
        if r.negative_logits.len() < top_m {
            return Err(Error::TooFewNegatives {
                record: i,
                needed: top_m,
                got: r.negative_logits.len(),
            });
        }
    }
    let mut profile = vec![0.0; top_m];
    for r in records {
        let mut probs = matching_probs(r).p_negatives;
        probs.sort_by(|a, b| b.total_cmp(a));
        for (acc, p) in profile.iter_mut().zip(&probs[..top_m]) {
            *acc += p;
        }
    }
    let n = records.len() as f64;
    for p in &mut profile {
        *p /= n;
    }
    Ok(profile)
}
