//! Counter-based deterministic randomness.
//!
//! Every random decision in a run draws from a stream addressed by
//! `(master_seed, round, worker, purpose, step)`. Streams are derived by
//! hashing the address into a ChaCha12 seed, so workers can be evaluated in
//! any order or in parallel with identical results, and two runs with the
//! same master seed are bitwise identical.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// What a stream is consumed for. Distinct purposes never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum StreamPurpose {
    /// Server-side selection of the participating worker set.
    WorkerSampling = 0,
    /// Minibatch index sampling on a worker.
    Minibatch = 1,
    /// Worker-side compressor randomness (sparsification, rounding, noise).
    Compression = 2,
    /// Second-stage compression of accumulated local updates.
    OuterCompression = 3,
    /// Objective-scale sampling at problem construction.
    ProblemScales = 4,
    /// Synthetic dataset generation at problem construction.
    ProblemData = 5,
    /// Derivation of per-repeat master seeds.
    RepeatSeed = 6,
    /// Monte Carlo harnesses in the analysis module.
    Analysis = 7,
}

/// Address of one randomness stream within an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub round: u64,
    pub worker: u64,
    pub purpose: StreamPurpose,
    pub step: u32,
}

impl StreamId {
    pub fn new(round: u64, worker: u64, purpose: StreamPurpose, step: u32) -> Self {
        Self {
            round,
            worker,
            purpose,
            step,
        }
    }
}

/// Deterministic random stream for one `(master_seed, StreamId)` address.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"sparsign-stream-v1");
        hasher.update(master_seed.to_le_bytes());
        hasher.update(id.round.to_le_bytes());
        hasher.update(id.worker.to_le_bytes());
        hasher.update((id.purpose as u32).to_le_bytes());
        hasher.update(id.step.to_le_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        Self {
            inner: ChaCha12Rng::from_seed(seed),
        }
    }

    /// Stable 64-bit value for an address; used to derive per-repeat seeds.
    pub fn derive_u64(master_seed: u64, id: StreamId) -> u64 {
        Self::new(master_seed, id).next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        // 53 mantissa bits, same construction as rand's StandardUniform.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn take(master: u64, id: StreamId, n: usize) -> Vec<u64> {
        let mut s = RngStream::new(master, id);
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn identical_address_identical_sequence() {
        let id = StreamId::new(3, 7, StreamPurpose::Compression, 1);
        assert_eq!(take(42, id, 16), take(42, id, 16));
    }

    #[test]
    fn distinct_addresses_differ() {
        let base = StreamId::new(3, 7, StreamPurpose::Compression, 1);
        let a = take(42, base, 8);
        assert_ne!(a, take(43, base, 8));
        assert_ne!(
            a,
            take(42, StreamId::new(4, 7, StreamPurpose::Compression, 1), 8)
        );
        assert_ne!(
            a,
            take(42, StreamId::new(3, 8, StreamPurpose::Compression, 1), 8)
        );
        assert_ne!(
            a,
            take(42, StreamId::new(3, 7, StreamPurpose::Minibatch, 1), 8)
        );
        assert_ne!(
            a,
            take(42, StreamId::new(3, 7, StreamPurpose::Compression, 0), 8)
        );
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = RngStream::new(0, StreamId::new(0, 0, StreamPurpose::Analysis, 0));
        for _ in 0..1000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
