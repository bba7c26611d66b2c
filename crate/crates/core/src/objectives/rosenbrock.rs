//! The Rosenbrock benchmark with per-worker objective scaling.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::DenseVector;

/// Value and exact gradient of the standard Rosenbrock function
/// `F(x) = sum_{i=1}^{d-1} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2`.
///
/// The squared first term is the standard form; the global minimizer is the
/// all-ones vector with value 0.
pub fn rosenbrock_value_grad(x: &DenseVector) -> Result<(f64, DenseVector)> {
    let d = x.dim();
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "rosenbrock needs dim >= 2, got {d}"
        )));
    }
    let v = x.values();
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    for i in 0..d - 1 {
        let gap = v[i + 1] - v[i] * v[i];
        let lin = 1.0 - v[i];
        value += 100.0 * gap * gap + lin * lin;
        grad[i] += -400.0 * v[i] * gap - 2.0 * lin;
        grad[i + 1] += 200.0 * gap;
    }
    Ok((value, DenseVector::new(grad)?))
}

/// Per-worker scale factors `v_m` with an exact sum of 1 and a prescribed
/// number of negative entries.
///
/// Negative magnitudes are half-normal draws normalized to total
/// `negative_mass`; positive magnitudes are half-normal draws normalized to
/// total `1 + negative_mass`; which workers are negative is a uniform random
/// subset. `negative_mass` therefore controls how strongly the adversarial
/// workers weigh against the rest: every negative worker's gradient opposes
/// the true gradient sign in every coordinate, while the positive workers
/// carry the larger combined magnitude that a magnitude-aware compressor can
/// exploit.
pub fn sample_scales(
    num_workers: usize,
    num_negative: usize,
    negative_mass: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if num_workers == 0 || num_negative >= num_workers {
        return Err(Error::InvalidInput(format!(
            "need 0 <= num_negative < num_workers, got {num_negative} of {num_workers}"
        )));
    }
    if !negative_mass.is_finite()
        || negative_mass < 0.0
        || (num_negative > 0) != (negative_mass > 0.0)
    {
        return Err(Error::InvalidInput(format!(
            "negative_mass {negative_mass} inconsistent with {num_negative} negative workers"
        )));
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut half_normal = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| loop {
                let draw: f64 = normal.sample(rng);
                if draw != 0.0 {
                    return draw.abs();
                }
            })
            .collect()
    };

    let neg_raw = half_normal(num_negative);
    let pos_raw = half_normal(num_workers - num_negative);
    let neg_sum: f64 = neg_raw.iter().sum();
    let pos_sum: f64 = pos_raw.iter().sum();

    let negative_ids = rand::seq::index::sample(rng, num_workers, num_negative).into_vec();
    let mut is_negative = vec![false; num_workers];
    for id in negative_ids {
        is_negative[id] = true;
    }

    let mut scales = vec![0.0; num_workers];
    let mut neg_it = neg_raw.into_iter();
    let mut pos_it = pos_raw.into_iter();
    for (m, slot) in scales.iter_mut().enumerate() {
        if is_negative[m] {
            *slot = -neg_it.next().expect("negative draw") * negative_mass / neg_sum;
        } else {
            *slot = pos_it.next().expect("positive draw") * (1.0 + negative_mass) / pos_sum;
        }
    }

    // Absorb the normalization rounding into the largest positive entry so
    // the sum is exactly 1.
    let total: f64 = scales.iter().sum();
    let largest_pos = (0..num_workers)
        .filter(|&m| scales[m] > 0.0)
        .max_by(|&a, &b| scales[a].total_cmp(&scales[b]))
        .expect("at least one positive scale");
    scales[largest_pos] += 1.0 - total;
    Ok(scales)
}

/// Heterogeneous Rosenbrock problem: worker `m` owns the scaled objective
/// `v_m * F(x)`, so the signs of a negative-scale worker's gradient oppose
/// the true gradient in every coordinate.
#[derive(Clone, Debug)]
pub struct ScaledRosenbrock {
    scales: Vec<f64>,
    initial: DenseVector,
}

impl ScaledRosenbrock {
    pub fn new(scales: Vec<f64>, initial: DenseVector) -> Result<Self> {
        if initial.dim() < 2 {
            return Err(Error::InvalidInput("rosenbrock needs dim >= 2".into()));
        }
        if scales.is_empty() {
            return Err(Error::InvalidInput("need at least one worker".into()));
        }
        Ok(Self { scales, initial })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn num_workers(&self) -> usize {
        self.scales.len()
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn initial_point(&self) -> DenseVector {
        self.initial.clone()
    }

    fn check_worker(&self, worker: usize) -> Result<f64> {
        self.scales
            .get(worker)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown worker id {worker}")))
    }

    pub fn local_value(&self, worker: usize, w: &DenseVector) -> Result<f64> {
        let scale = self.check_worker(worker)?;
        Ok(scale * rosenbrock_value_grad(w)?.0)
    }

    pub fn local_gradient(&self, worker: usize, w: &DenseVector) -> Result<DenseVector> {
        let scale = self.check_worker(worker)?;
        Ok(rosenbrock_value_grad(w)?.1.scale(scale))
    }

    /// Global objective `(1/M) sum_m v_m F = F / M` and its gradient.
    pub fn global_value_grad(&self, w: &DenseVector) -> Result<(f64, DenseVector)> {
        let (value, grad) = rosenbrock_value_grad(w)?;
        let inv_m = 1.0 / self.num_workers() as f64;
        Ok((value * inv_m, grad.scale(inv_m)))
    }
}
