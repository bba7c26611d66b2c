//! Sparse compressed-gradient messages: the unit of worker-to-server traffic.

use crate::error::{Error, Result};
use crate::vector::{sign3, DenseVector};

/// Sparse representation of a vector in `{-s, 0, +s}^d`.
///
/// Indices are strictly increasing; `signs` is parallel to `indices` with
/// entries in `{-1, +1}`. `scale` is carried only by scaled compressors; it
/// is absent for plain sign/sparsified messages (implied magnitude 1) and may
/// be zero only for the degenerate all-zero input of a scaled compressor.
#[derive(Clone, Debug, PartialEq)]
pub struct TernaryMessage {
    dim: usize,
    indices: Vec<u32>,
    signs: Vec<i8>,
    scale: Option<f64>,
}

impl TernaryMessage {
    pub fn new(dim: usize, indices: Vec<u32>, signs: Vec<i8>, scale: Option<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "message dimension must be positive".into(),
            ));
        }
        if indices.len() != signs.len() {
            return Err(Error::InvalidInput(format!(
                "indices/signs length mismatch: {} vs {}",
                indices.len(),
                signs.len()
            )));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidInput(
                    "indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(Error::InvalidInput(format!(
                    "index {last} out of range for dim {dim}"
                )));
            }
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidInput("signs must be -1 or +1".into()));
        }
        if let Some(s) = scale {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "scale must be finite and >= 0, got {s}"
                )));
            }
        }
        Ok(Self {
            dim,
            indices,
            signs,
            scale,
        })
    }

    pub fn empty(dim: usize, scale: Option<f64>) -> Self {
        assert!(dim > 0, "message dimension must be positive");
        Self {
            dim,
            indices: Vec::new(),
            signs: Vec::new(),
            scale,
        }
    }

    /// Ternary sign pattern of a dense vector (no scale).
    pub fn sign_pattern(v: &DenseVector) -> Self {
        let mut indices = Vec::new();
        let mut signs = Vec::new();
        for (i, &x) in v.values().iter().enumerate() {
            let s = sign3(x);
            if s != 0 {
                indices.push(i as u32);
                signs.push(s);
            }
        }
        Self {
            dim: v.dim(),
            indices,
            signs,
            scale: None,
        }
    }

    /// Reconstructs a message from a dense vector with entries in `{-s, 0, +s}`.
    ///
    /// Rejects vectors whose nonzero magnitudes differ. A shared magnitude of
    /// exactly 1 is stored without a scale, so `densify` is the inverse.
    pub fn from_dense(v: &DenseVector) -> Result<Self> {
        let mut indices = Vec::new();
        let mut signs = Vec::new();
        let mut magnitude: Option<f64> = None;
        for (i, &x) in v.values().iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            match magnitude {
                None => magnitude = Some(x.abs()),
                Some(m) if m == x.abs() => {}
                Some(m) => {
                    return Err(Error::InvalidInput(format!(
                        "mixed magnitudes {m} and {} are not ternary",
                        x.abs()
                    )))
                }
            }
            indices.push(i as u32);
            signs.push(sign3(x));
        }
        let scale = match magnitude {
            Some(m) if m != 1.0 => Some(m),
            _ => None,
        };
        Ok(Self {
            dim: v.dim(),
            indices,
            signs,
            scale,
        })
    }

    /// Expands to a dense vector with `scale * sign` at each stored index.
    pub fn densify(&self) -> DenseVector {
        let s = self.scale.unwrap_or(1.0);
        let mut values = vec![0.0; self.dim];
        for (&i, &sign) in self.indices.iter().zip(&self.signs) {
            values[i as usize] = s * f64::from(sign);
        }
        DenseVector::new(values).expect("ternary expansion is finite")
    }

    /// Adds `scale * sign` into an accumulator, avoiding a dense round trip.
    pub(crate) fn accumulate_into(&self, acc: &mut [f64]) {
        let s = self.scale.unwrap_or(1.0);
        for (&i, &sign) in self.indices.iter().zip(&self.signs) {
            acc[i as usize] += s * f64::from(sign);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// Sign of the stored entry at `coord`, 0 when absent.
    pub fn sign_at(&self, coord: usize) -> i8 {
        match self.indices.binary_search(&(coord as u32)) {
            Ok(pos) => self.signs[pos],
            Err(_) => 0,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            indices: self.indices.clone(),
            signs: self.signs.iter().map(|s| -s).collect(),
            scale: self.scale,
        }
    }
}

/// Multi-level quantized message: entry `i` densifies to
/// `scale * level_i / num_levels` with `level_i` in `{-s..-1, 1..s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedMessage {
    dim: usize,
    indices: Vec<u32>,
    levels: Vec<i32>,
    num_levels: u32,
    scale: f64,
}

impl QuantizedMessage {
    pub fn new(
        dim: usize,
        indices: Vec<u32>,
        levels: Vec<i32>,
        num_levels: u32,
        scale: f64,
    ) -> Result<Self> {
        if dim == 0 || num_levels == 0 {
            return Err(Error::InvalidInput(
                "dimension and level count must be positive".into(),
            ));
        }
        if indices.len() != levels.len() {
            return Err(Error::InvalidInput("indices/levels length mismatch".into()));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidInput(
                    "indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(Error::InvalidInput(format!(
                    "index {last} out of range for dim {dim}"
                )));
            }
        }
        let s = num_levels as i32;
        if levels.iter().any(|&l| l == 0 || l.abs() > s) {
            return Err(Error::InvalidInput(
                "levels must be nonzero with |level| <= num_levels".into(),
            ));
        }
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::InvalidInput(format!(
                "scale must be finite and >= 0, got {scale}"
            )));
        }
        Ok(Self {
            dim,
            indices,
            levels,
            num_levels,
            scale,
        })
    }

    pub fn densify(&self) -> DenseVector {
        let mut values = vec![0.0; self.dim];
        let denom = f64::from(self.num_levels);
        for (&i, &l) in self.indices.iter().zip(&self.levels) {
            values[i as usize] = self.scale * f64::from(l) / denom;
        }
        DenseVector::new(values).expect("quantized expansion is finite")
    }

    pub(crate) fn accumulate_into(&self, acc: &mut [f64]) {
        let denom = f64::from(self.num_levels);
        for (&i, &l) in self.indices.iter().zip(&self.levels) {
            acc[i as usize] += self.scale * f64::from(l) / denom;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn num_levels(&self) -> u32 {
        self.num_levels
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Output of any worker-side compressor.
#[derive(Clone, Debug, PartialEq)]
pub enum CompressedMessage {
    Ternary(TernaryMessage),
    Quantized(QuantizedMessage),
    /// Uncompressed gradient (the identity "compressor").
    Dense(DenseVector),
}

impl CompressedMessage {
    pub fn dim(&self) -> usize {
        match self {
            Self::Ternary(m) => m.dim(),
            Self::Quantized(m) => m.dim(),
            Self::Dense(v) => v.dim(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            Self::Ternary(m) => m.nnz(),
            Self::Quantized(m) => m.nnz(),
            Self::Dense(v) => v.values().iter().filter(|x| **x != 0.0).count(),
        }
    }

    pub fn densify(&self) -> DenseVector {
        match self {
            Self::Ternary(m) => m.densify(),
            Self::Quantized(m) => m.densify(),
            Self::Dense(v) => v.clone(),
        }
    }

    pub(crate) fn accumulate_into(&self, acc: &mut [f64]) {
        match self {
            Self::Ternary(m) => m.accumulate_into(acc),
            Self::Quantized(m) => m.accumulate_into(acc),
            Self::Dense(v) => {
                for (slot, x) in acc.iter_mut().zip(v.values()) {
                    *slot += x;
                }
            }
        }
    }

    pub fn as_ternary(&self) -> Option<&TernaryMessage> {
        match self {
            Self::Ternary(m) => Some(m),
            _ => None,
        }
    }
}
