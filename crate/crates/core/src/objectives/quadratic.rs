//! Heterogeneous quadratics: worker `m` minimizes `0.5 ||w - c_m||^2`.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::DenseVector;

#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    centers: Vec<DenseVector>,
    initial: DenseVector,
}

impl QuadraticProblem {
    pub fn new(centers: Vec<DenseVector>, initial: DenseVector) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidInput("need at least one worker".into()));
        }
        let dim = initial.dim();
        if centers.iter().any(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: centers[0].dim(),
            });
        }
        Ok(Self { centers, initial })
    }

    /// Centers drawn as `offset_spread * N(0, I)`; spread 0 gives the shared
    /// objective `0.5 ||w||^2`.
    pub fn sampled(
        dim: usize,
        num_workers: usize,
        offset_spread: f64,
        initial: DenseVector,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if !offset_spread.is_finite() || offset_spread < 0.0 {
            return Err(Error::InvalidInput(format!(
                "offset_spread must be >= 0, got {offset_spread}"
            )));
        }
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let centers = (0..num_workers)
            .map(|_| DenseVector::from_fn(dim, |_| offset_spread * normal.sample(rng)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(centers, initial)
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn num_workers(&self) -> usize {
        self.centers.len()
    }

    pub fn initial_point(&self) -> DenseVector {
        self.initial.clone()
    }

    fn center(&self, worker: usize) -> Result<&DenseVector> {
        self.centers
            .get(worker)
            .ok_or_else(|| Error::InvalidInput(format!("unknown worker id {worker}")))
    }

    pub fn local_value(&self, worker: usize, w: &DenseVector) -> Result<f64> {
        let diff = w.sub(self.center(worker)?)?;
        Ok(0.5 * diff.l2_norm().powi(2))
    }

    pub fn local_gradient(&self, worker: usize, w: &DenseVector) -> Result<DenseVector> {
        w.sub(self.center(worker)?)
    }

    pub fn global_value_grad(&self, w: &DenseVector) -> Result<(f64, DenseVector)> {
        let mut value = 0.0;
        let mut grad = DenseVector::zeros(w.dim());
        for m in 0..self.num_workers() {
            value += self.local_value(m, w)?;
            grad = grad.add(&self.local_gradient(m, w)?)?;
        }
        let inv_m = 1.0 / self.num_workers() as f64;
        Ok((value * inv_m, grad.scale(inv_m)))
    }
}
