//! Worker-side gradient compressors.
//!
//! All compressors are pure functions of `(input, parameters, rng stream)`
//! and may be invoked concurrently across workers. Outputs are sparse
//! messages; see [`crate::coding`] for what each one costs on the wire.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::message::{CompressedMessage, QuantizedMessage, TernaryMessage};
use crate::rng::RngStream;
use crate::vector::{sign3, CompressionBudget, DenseVector};

/// Which norm feeds the stochastic quantizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerNorm {
    L2,
    Linf,
}

/// Compressor selection plus the parameters the selected kind requires.
///
/// The shared maximum used by `terngrad` is not part of the configuration:
/// it is a per-round quantity computed by the simulation engine from the
/// sampled workers' gradients and passed to [`CompressorConfig::compress`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompressorConfig {
    /// Keep `sign(g_i)` with probability `clip(|g_i| * B_i, 0, 1)`, else 0.
    Sparsign { budget: CompressionBudget },
    /// Coordinate-wise deterministic sign.
    Sign,
    /// `(||g||_1 / d) * sign(g)`.
    ScaledSign,
    /// Sign of `g + n` with `n ~ Normal(0, stddev^2)`.
    NoisySign { noise_stddev: f64 },
    /// Stochastic `s`-level quantization against the chosen norm.
    Qsgd { levels: u32, norm: QuantizerNorm },
    /// One-bit quantization against the L2 norm (`levels = 1`).
    Qsgd1bitL2,
    /// One-bit quantization against the L-infinity norm (`levels = 1`).
    Qsgd1bitLinf,
    /// Shared-maximum ternarization; unbiased given the cross-worker max.
    Terngrad,
    /// No compression; the gradient is sent as-is.
    Identity,
}

impl CompressorConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Sparsign { budget } => budget.validate(),
            Self::NoisySign { noise_stddev } => {
                if !noise_stddev.is_finite() || *noise_stddev <= 0.0 {
                    return Err(Error::Config(format!(
                        "noise_stddev must be positive, got {noise_stddev}"
                    )));
                }
                Ok(())
            }
            Self::Qsgd { levels, .. } => {
                if *levels == 0 {
                    return Err(Error::Config("quantization levels must be >= 1".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether this compressor needs the cross-worker gradient maximum.
    pub fn needs_shared_max(&self) -> bool {
        matches!(self, Self::Terngrad)
    }

    /// Applies the configured compressor to one gradient.
    pub fn compress(
        &self,
        g: &DenseVector,
        shared_max: Option<f64>,
        rng: &mut RngStream,
    ) -> Result<CompressedMessage> {
        match self {
            Self::Sparsign { budget } => Ok(CompressedMessage::Ternary(sparsign(g, budget, rng)?)),
            Self::Sign => Ok(CompressedMessage::Ternary(deterministic_sign(g))),
            Self::ScaledSign => Ok(CompressedMessage::Ternary(scaled_sign(g))),
            Self::NoisySign { noise_stddev } => Ok(CompressedMessage::Ternary(noisy_sign(
                g,
                *noise_stddev,
                rng,
            )?)),
            Self::Qsgd { levels, norm } => qsgd(g, *levels, *norm, rng),
            Self::Qsgd1bitL2 => qsgd(g, 1, QuantizerNorm::L2, rng),
            Self::Qsgd1bitLinf => qsgd(g, 1, QuantizerNorm::Linf, rng),
            Self::Terngrad => {
                let s = shared_max.ok_or_else(|| {
                    Error::Config("terngrad requires the cross-worker gradient maximum".into())
                })?;
                Ok(CompressedMessage::Ternary(terngrad(g, s, rng)?))
            }
            Self::Identity => Ok(CompressedMessage::Dense(g.clone())),
        }
    }
}

/// Magnitude-driven sparsified sign.
///
/// Coordinate `i` becomes `sign(g_i)` with probability
/// `clip(|g_i| * B_i, 0, 1)` and 0 otherwise, so the expected densified
/// output is `clip(|g_i| * B_i, 0, 1) * sign(g_i)` and the expected nonzero
/// count is the sum of the keep probabilities. Probabilities above 1 are
/// rounded down to 1, which acts like gradient clipping; the compressor
/// itself stays a pure function of `(g, B)`.
pub fn sparsign(
    g: &DenseVector,
    budget: &CompressionBudget,
    rng: &mut RngStream,
) -> Result<TernaryMessage> {
    budget.validate()?;
    budget.check_dim(g.dim())?;
    let mut indices = Vec::new();
    let mut signs = Vec::new();
    for (i, &x) in g.values().iter().enumerate() {
        let p = (x.abs() * budget.get(i)).clamp(0.0, 1.0);
        if p > 0.0 && rng.uniform() < p {
            indices.push(i as u32);
            signs.push(sign3(x));
        }
    }
    TernaryMessage::new(g.dim(), indices, signs, None)
}

/// Coordinate-wise deterministic sign; zero coordinates are dropped.
pub fn deterministic_sign(g: &DenseVector) -> TernaryMessage {
    TernaryMessage::sign_pattern(g)
}

/// Sign vector scaled by the mean absolute value `||g||_1 / d`.
///
/// Satisfies `||C(x) - x||^2 = (1 - a) ||x||^2` with
/// `a = ||x||_1^2 / (d ||x||_2^2)`, i.e. it is an `a`-approximate
/// compressor with equality. A zero vector yields an empty message with
/// scale 0.
pub fn scaled_sign(g: &DenseVector) -> TernaryMessage {
    let scale = g.l1_norm() / g.dim() as f64;
    let mut msg = TernaryMessage::sign_pattern(g);
    if msg.nnz() == 0 {
        return TernaryMessage::empty(g.dim(), Some(0.0));
    }
    msg = TernaryMessage::new(
        g.dim(),
        msg.indices().to_vec(),
        msg.signs().to_vec(),
        Some(scale),
    )
    .expect("sign pattern with positive scale is valid");
    msg
}

/// Sign of the gradient after adding independent Gaussian noise.
pub fn noisy_sign(g: &DenseVector, stddev: f64, rng: &mut RngStream) -> Result<TernaryMessage> {
    if !stddev.is_finite() || stddev <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "noise stddev must be positive, got {stddev}"
        )));
    }
    let normal = rand_distr::Normal::new(0.0, stddev)
        .map_err(|e| Error::InvalidInput(format!("normal distribution: {e}")))?;
    let mut indices = Vec::new();
    let mut signs = Vec::new();
    for (i, &x) in g.values().iter().enumerate() {
        let s = sign3(x + rand_distr::Distribution::sample(&normal, rng));
        if s != 0 {
            indices.push(i as u32);
            signs.push(s);
        }
    }
    TernaryMessage::new(g.dim(), indices, signs, None)
}

/// Unbiased stochastic `s`-level quantizer.
///
/// Each coordinate rounds `|g_i| / ||g||` to one of the two neighbouring
/// points of the grid `{0, 1/s, ..., 1}`, keeping the expectation exact, and
/// is reported as `||g|| * sign(g_i) * level / s`. With `s = 1` the output is
/// ternary and carries `||g||` as its scale.
pub fn qsgd(
    g: &DenseVector,
    levels: u32,
    norm: QuantizerNorm,
    rng: &mut RngStream,
) -> Result<CompressedMessage> {
    if levels == 0 {
        return Err(Error::InvalidInput(
            "quantization levels must be >= 1".into(),
        ));
    }
    let norm_value = match norm {
        QuantizerNorm::L2 => g.l2_norm(),
        QuantizerNorm::Linf => g.linf_norm(),
    };
    if norm_value == 0.0 {
        return Err(Error::InvalidInput("cannot quantize a zero vector".into()));
    }
    let s = levels as f64;
    let mut indices = Vec::new();
    let mut signed_levels = Vec::new();
    for (i, &x) in g.values().iter().enumerate() {
        let ratio = x.abs() / norm_value;
        let mut low = (ratio * s).floor();
        if low >= s {
            low = s - 1.0;
        }
        let p_up = ratio * s - low;
        let level = if rng.uniform() < p_up { low + 1.0 } else { low };
        if level > 0.0 {
            indices.push(i as u32);
            signed_levels.push(level as i32 * i32::from(sign3(x)));
        }
    }
    if levels == 1 {
        let signs = signed_levels.iter().map(|&l| l as i8).collect();
        Ok(CompressedMessage::Ternary(TernaryMessage::new(
            g.dim(),
            indices,
            signs,
            Some(norm_value),
        )?))
    } else {
        Ok(CompressedMessage::Quantized(QuantizedMessage::new(
            g.dim(),
            indices,
            signed_levels,
            levels,
            norm_value,
        )?))
    }
}

/// Shared-maximum ternarization.
///
/// Coordinate `i` becomes `sign(g_i)` with probability `|g_i| / shared_max`,
/// scaled by `shared_max`, which keeps the output unbiased. `shared_max`
/// must dominate `||g||_inf`; the engine computes it as the maximum over the
/// sampled workers.
pub fn terngrad(g: &DenseVector, shared_max: f64, rng: &mut RngStream) -> Result<TernaryMessage> {
    if !shared_max.is_finite() || shared_max < 0.0 {
        return Err(Error::InvalidInput(format!(
            "shared max must be finite and >= 0, got {shared_max}"
        )));
    }
    let linf = g.linf_norm();
    if shared_max < linf {
        return Err(Error::InvalidInput(format!(
            "shared max {shared_max} is below the gradient maximum {linf}"
        )));
    }
    if linf == 0.0 {
        return Ok(TernaryMessage::empty(g.dim(), Some(shared_max)));
    }
    let mut indices = Vec::new();
    let mut signs = Vec::new();
    for (i, &x) in g.values().iter().enumerate() {
        let p = x.abs() / shared_max;
        if p > 0.0 && rng.uniform() < p {
            indices.push(i as u32);
            signs.push(sign3(x));
        }
    }
    TernaryMessage::new(g.dim(), indices, signs, Some(shared_max))
}
