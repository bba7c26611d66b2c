//! Server-side aggregation: majority vote, the scaled-sign server compressor
//! with error feedback, and plain averaging.

use serde::{Deserialize, Serialize};

use crate::compressors::scaled_sign;
use crate::error::{Error, Result};
use crate::message::{CompressedMessage, TernaryMessage};
use crate::vector::{sign3, DenseVector};

/// How the server turns worker messages into a broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    /// Sign of the mean of the densified messages; ties broadcast 0.
    MajorityVoteSign,
    /// Scaled-sign compression of `mean + residual`, with the residual
    /// updated to the compression error (server-side error feedback only).
    ScaledSignWithEf,
    /// Uncompressed mean of the densified messages.
    Mean,
}

/// Server state carried across rounds: the error-feedback residual and the
/// configured rule. The residual is identically zero at round 0 and is only
/// touched by [`ef_aggregate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    residual: DenseVector,
    rule: AggregationRule,
}

impl ServerState {
    pub fn new(dim: usize, rule: AggregationRule) -> Self {
        Self {
            residual: DenseVector::zeros(dim),
            rule,
        }
    }

    pub fn residual(&self) -> &DenseVector {
        &self.residual
    }

    pub fn rule(&self) -> AggregationRule {
        self.rule
    }
}

fn mean_of_messages(messages: &[CompressedMessage]) -> Result<DenseVector> {
    let first = messages.first().ok_or(Error::EmptyWorkerSet)?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for msg in messages {
        if msg.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: msg.dim(),
            });
        }
        msg.accumulate_into(&mut acc);
    }
    let inv = 1.0 / messages.len() as f64;
    for slot in &mut acc {
        *slot *= inv;
    }
    DenseVector::new(acc)
}

/// Coordinate-wise sign of the mean of the densified messages.
///
/// Equivalently the sign of the sum; a tied coordinate (sum exactly zero)
/// maps to 0, so the output is itself ternary.
pub fn majority_vote(messages: &[CompressedMessage]) -> Result<TernaryMessage> {
    let mean = mean_of_messages(messages)?;
    Ok(TernaryMessage::sign_pattern(&mean))
}

/// Uncompressed average of the densified messages.
pub fn mean_aggregate(messages: &[CompressedMessage]) -> Result<DenseVector> {
    mean_of_messages(messages)
}

/// One error-feedback aggregation step.
///
/// Broadcasts `g = scaled_sign(mean + residual)` and returns the new state
/// with `residual = mean + residual_old - g`, so
/// `mean + residual_old = g + residual_new` up to floating-point rounding.
/// The messages must come from exactly the sampled workers; the mean divides
/// by their count.
pub fn ef_aggregate(
    state: &ServerState,
    messages: &[CompressedMessage],
) -> Result<(DenseVector, ServerState)> {
    if state.rule != AggregationRule::ScaledSignWithEf {
        return Err(Error::Config(format!(
            "error-feedback aggregation requires the scaled_sign_with_ef rule, got {:?}",
            state.rule
        )));
    }
    let mean = mean_of_messages(messages)?;
    if mean.dim() != state.residual.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.residual.dim(),
            actual: mean.dim(),
        });
    }
    let carried = mean.add(&state.residual)?;
    let broadcast = scaled_sign(&carried).densify();
    let residual = carried.sub(&broadcast)?;
    Ok((
        broadcast,
        ServerState {
            residual,
            rule: state.rule,
        },
    ))
}

/// Ternary sign pattern of a dense broadcast, for wrong-aggregation metrics.
pub fn broadcast_signs(broadcast: &DenseVector) -> TernaryMessage {
    TernaryMessage::sign_pattern(broadcast)
}

/// Fraction of coordinates with a nonzero reference sign where the message
/// sign differs (a zero message coordinate counts as a disagreement).
/// Returns `None` when the reference vector is identically zero.
pub fn sign_disagreement(reference: &DenseVector, msg: &TernaryMessage) -> Result<Option<f64>> {
    if reference.dim() != msg.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            actual: msg.dim(),
        });
    }
    let mut considered = 0usize;
    let mut wrong = 0usize;
    for (i, &x) in reference.values().iter().enumerate() {
        let true_sign = sign3(x);
        if true_sign == 0 {
            continue;
        }
        considered += 1;
        if msg.sign_at(i) != true_sign {
            wrong += 1;
        }
    }
    if considered == 0 {
        return Ok(None);
    }
    Ok(Some(wrong as f64 / considered as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ternary(dim: usize, entries: &[(u32, i8)]) -> CompressedMessage {
        let indices = entries.iter().map(|e| e.0).collect();
        let signs = entries.iter().map(|e| e.1).collect();
        CompressedMessage::Ternary(TernaryMessage::new(dim, indices, signs, None).unwrap())
    }

    #[test]
    fn vote_simple_majority() {
        let msgs = vec![
            ternary(1, &[(0, 1)]),
            ternary(1, &[(0, 1)]),
            ternary(1, &[(0, -1)]),
        ];
        let vote = majority_vote(&msgs).unwrap();
        assert_eq!(vote.densify().values(), &[1.0]);
    }

    #[test]
    fn vote_tie_is_zero() {
        let msgs = vec![ternary(1, &[(0, 1)]), ternary(1, &[(0, -1)])];
        let vote = majority_vote(&msgs).unwrap();
        assert_eq!(vote.nnz(), 0);
    }

    #[test]
    fn vote_coordinate_wise() {
        let msgs = vec![
            ternary(2, &[(0, 1)]),
            ternary(2, &[(1, -1)]),
            ternary(2, &[(0, 1), (1, -1)]),
        ];
        let vote = majority_vote(&msgs).unwrap();
        assert_eq!(vote.densify().values(), &[1.0, -1.0]);
    }

    #[test]
    fn vote_rejects_empty_set() {
        assert!(matches!(majority_vote(&[]), Err(Error::EmptyWorkerSet)));
    }

    #[test]
    fn vote_sign_flip_equivariance() {
        let msgs = vec![
            ternary(3, &[(0, 1), (2, -1)]),
            ternary(3, &[(1, -1)]),
            ternary(3, &[(0, 1), (1, -1), (2, 1)]),
        ];
        let flipped: Vec<CompressedMessage> = msgs
            .iter()
            .map(|m| CompressedMessage::Ternary(m.as_ternary().unwrap().negated()))
            .collect();
        let vote = majority_vote(&msgs).unwrap();
        let vote_flipped = majority_vote(&flipped).unwrap();
        assert_eq!(vote.negated(), vote_flipped);
    }

    #[test]
    fn ef_step_matches_direct_evaluation() {
        // residual 0, mean (0.6, -0.4): broadcast (0.5, -0.5), residual (0.1, 0.1).
        let state = ServerState::new(2, AggregationRule::ScaledSignWithEf);
        let msgs = vec![CompressedMessage::Dense(
            DenseVector::new(vec![0.6, -0.4]).unwrap(),
        )];
        let (broadcast, next) = ef_aggregate(&state, &msgs).unwrap();
        assert_eq!(broadcast.values(), &[0.5, -0.5]);
        assert!((next.residual().get(0) - 0.1).abs() < 1e-12);
        assert!((next.residual().get(1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ef_zero_is_fixed_point() {
        let state = ServerState::new(3, AggregationRule::ScaledSignWithEf);
        let msgs = vec![CompressedMessage::Dense(DenseVector::zeros(3))];
        let (broadcast, next) = ef_aggregate(&state, &msgs).unwrap();
        assert_eq!(broadcast.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(next.residual().values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn ef_conserves_input_mass() {
        let mut state = ServerState::new(4, AggregationRule::ScaledSignWithEf);
        let inputs = [
            vec![0.3, -1.2, 0.7, 0.0],
            vec![-0.05, 0.02, 0.9, -2.0],
            vec![1.0, 1.0, -1.0, 0.5],
        ];
        for values in inputs {
            let mean = DenseVector::new(values).unwrap();
            let msgs = vec![CompressedMessage::Dense(mean.clone())];
            let (broadcast, next) = ef_aggregate(&state, &msgs).unwrap();
            let lhs = mean.add(state.residual()).unwrap();
            let rhs = broadcast.add(next.residual()).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
            state = next;
        }
    }

    #[test]
    fn ef_requires_matching_rule() {
        let state = ServerState::new(2, AggregationRule::MajorityVoteSign);
        let msgs = vec![CompressedMessage::Dense(DenseVector::zeros(2))];
        assert!(ef_aggregate(&state, &msgs).is_err());
    }

    #[test]
    fn ef_rejects_empty_sample() {
        let state = ServerState::new(2, AggregationRule::ScaledSignWithEf);
        assert!(matches!(
            ef_aggregate(&state, &[]),
            Err(Error::EmptyWorkerSet)
        ));
    }

    /// Residual energy stays bounded under a long stream of bounded inputs.
    #[test]
    fn ef_residual_energy_stabilizes() {
        use crate::rng::{RngStream, StreamId, StreamPurpose};
        use rand_chacha::rand_core::RngCore;

        let dim = 50;
        let mut state = ServerState::new(dim, AggregationRule::ScaledSignWithEf);
        let mut rng = RngStream::new(99, StreamId::new(0, 0, StreamPurpose::Analysis, 0));
        let mut early_max = 0.0f64;
        let mut late_max = 0.0f64;
        for t in 0..10_000 {
            // Bounded ternary-like means in [-1, 1].
            let mean = DenseVector::from_fn(dim, |_| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                (u * 2.0 - 1.0).round()
            })
            .unwrap();
            let msgs = vec![CompressedMessage::Dense(mean)];
            let (_, next) = ef_aggregate(&state, &msgs).unwrap();
            state = next;
            let energy = state.residual().l2_norm().powi(2) / dim as f64;
            if t <= 100 {
                early_max = early_max.max(energy);
            } else {
                late_max = late_max.max(energy);
            }
        }
        assert!(
            late_max <= 10.0 * early_max,
            "residual energy grew: early {early_max}, late {late_max}"
        );
    }
}
