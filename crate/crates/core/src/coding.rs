//! Communication-cost accounting.
//!
//! Costs are accounting numbers, not an implemented bitstream: ternary
//! methods are charged the expected Golomb code length for their nonzero
//! index gaps plus one sign bit per nonzero, dense sign methods exactly one
//! bit per coordinate, and every transmitted scale scalar 32 bits
//! (single precision).

use crate::compressors::CompressorConfig;
use crate::error::{Error, Result};
use crate::message::CompressedMessage;

/// Bits transmitted in one round, split by direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BitCost {
    /// Worker-to-server bits, summed over the sampled workers.
    pub uplink_bits: f64,
    /// Server-to-worker broadcast bits.
    pub downlink_bits: f64,
}

impl std::ops::AddAssign for BitCost {
    fn add_assign(&mut self, rhs: Self) {
        self.uplink_bits += rhs.uplink_bits;
        self.downlink_bits += rhs.downlink_bits;
    }
}

/// Average Golomb bits per nonzero index at sparsity ratio `p`.
///
/// Uses the parameter rule `b* = 1 + floor(log2(ln(sqrt(5) + 1/2) / -ln(1 - p)))`
/// and charges `b* + 1 / (1 - (1 - p)^(2^b*))` bits per index. Only
/// `0 < p < 1` is meaningful; the boundary values make the parameter rule
/// degenerate and are rejected.
pub fn golomb_bits_per_index(p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "sparsity ratio must lie in (0, 1), got {p}"
        )));
    }
    let ln_c = (5f64.sqrt() + 0.5).ln();
    let decay = -(1.0 - p).ln();
    let b_star = 1.0 + (ln_c / decay).log2().floor();
    let group = 2f64.powf(b_star);
    Ok(b_star + 1.0 / (1.0 - (1.0 - p).powf(group)))
}

/// Index bits for a message with `nnz` nonzeros out of `dim`.
///
/// `nnz == dim` falls outside the Golomb formula's domain; it is charged the
/// dense limit of one bit per index (each gap is 1 and codes as a single
/// unary bit).
fn index_bits(nnz: usize, dim: usize) -> f64 {
    if nnz == 0 {
        return 0.0;
    }
    if nnz >= dim {
        return nnz as f64;
    }
    let p = nnz as f64 / dim as f64;
    nnz as f64 * golomb_bits_per_index(p).expect("0 < p < 1")
}

const SCALE_BITS: f64 = 32.0;

/// Uplink bits for one worker message under the given method.
pub fn message_cost(msg: &CompressedMessage, method: &CompressorConfig) -> f64 {
    let dim = msg.dim() as f64;
    let nnz = msg.nnz();
    match method {
        // Dense sign methods: exactly one bit per coordinate.
        CompressorConfig::Sign | CompressorConfig::NoisySign { .. } => dim,
        CompressorConfig::ScaledSign => dim + SCALE_BITS,
        // Ternary sparse, no scale scalar.
        CompressorConfig::Sparsign { .. } => index_bits(nnz, msg.dim()) + nnz as f64,
        // Ternary sparse plus a 32-bit scale.
        CompressorConfig::Terngrad
        | CompressorConfig::Qsgd1bitL2
        | CompressorConfig::Qsgd1bitLinf => index_bits(nnz, msg.dim()) + nnz as f64 + SCALE_BITS,
        CompressorConfig::Qsgd { levels, .. } => {
            if *levels == 1 {
                index_bits(nnz, msg.dim()) + nnz as f64 + SCALE_BITS
            } else {
                // 2s possible nonzero signed levels per kept coordinate.
                let level_bits = (2.0 * f64::from(*levels)).log2().ceil();
                index_bits(nnz, msg.dim()) + nnz as f64 * level_bits + SCALE_BITS
            }
        }
        CompressorConfig::Identity => 32.0 * dim,
    }
}

/// Broadcast bits per round for each server rule.
pub fn downlink_cost(rule: crate::aggregation::AggregationRule, dim: usize) -> f64 {
    match rule {
        crate::aggregation::AggregationRule::MajorityVoteSign => dim as f64,
        crate::aggregation::AggregationRule::ScaledSignWithEf => dim as f64 + SCALE_BITS,
        crate::aggregation::AggregationRule::Mean => 32.0 * dim as f64,
    }
}
