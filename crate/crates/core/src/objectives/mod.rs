//! Desk-scale optimization problems with controllable data heterogeneity.
//!
//! Problems are immutable after construction; gradient evaluation is pure
//! and parallelizable across workers. Every problem exposes exact local and
//! global gradients so wrong-aggregation metrics can be measured against
//! ground truth.

mod classification;
mod quadratic;
mod rosenbrock;

pub use classification::{dirichlet_proportions, ClassificationProblem};
pub use quadratic::QuadraticProblem;
pub use rosenbrock::{rosenbrock_value_grad, sample_scales, ScaledRosenbrock};

use crate::error::Result;
use crate::rng::RngStream;
use crate::vector::DenseVector;

/// A heterogeneous distributed problem: `M` workers with local objectives
/// `f_m` and the global objective `F = (1/M) sum_m f_m`.
#[derive(Clone, Debug)]
pub enum Problem {
    RosenbrockScaled(ScaledRosenbrock),
    Quadratic(QuadraticProblem),
    Classification(ClassificationProblem),
}

impl Problem {
    pub fn dim(&self) -> usize {
        match self {
            Self::RosenbrockScaled(p) => p.dim(),
            Self::Quadratic(p) => p.dim(),
            Self::Classification(p) => p.dim(),
        }
    }

    pub fn num_workers(&self) -> usize {
        match self {
            Self::RosenbrockScaled(p) => p.num_workers(),
            Self::Quadratic(p) => p.num_workers(),
            Self::Classification(p) => p.num_workers(),
        }
    }

    pub fn initial_point(&self) -> DenseVector {
        match self {
            Self::RosenbrockScaled(p) => p.initial_point(),
            Self::Quadratic(p) => p.initial_point(),
            Self::Classification(p) => p.initial_point(),
        }
    }

    pub fn local_value(&self, worker: usize, w: &DenseVector) -> Result<f64> {
        match self {
            Self::RosenbrockScaled(p) => p.local_value(worker, w),
            Self::Quadratic(p) => p.local_value(worker, w),
            Self::Classification(p) => p.local_value(worker, w),
        }
    }

    /// Exact full-batch local gradient.
    pub fn local_gradient(&self, worker: usize, w: &DenseVector) -> Result<DenseVector> {
        match self {
            Self::RosenbrockScaled(p) => p.local_gradient(worker, w),
            Self::Quadratic(p) => p.local_gradient(worker, w),
            Self::Classification(p) => p.local_gradient(worker, w),
        }
    }

    /// Stochastic local gradient. Deterministic objectives return the exact
    /// gradient; the classification task draws a minibatch when `batch_size`
    /// is set.
    pub fn local_stochastic_gradient(
        &self,
        worker: usize,
        w: &DenseVector,
        batch_size: Option<usize>,
        rng: &mut RngStream,
    ) -> Result<DenseVector> {
        match (self, batch_size) {
            (Self::Classification(p), Some(b)) => p.local_stochastic_gradient(worker, w, b, rng),
            _ => self.local_gradient(worker, w),
        }
    }

    /// Exact global objective value and gradient.
    pub fn global_value_grad(&self, w: &DenseVector) -> Result<(f64, DenseVector)> {
        match self {
            Self::RosenbrockScaled(p) => p.global_value_grad(w),
            Self::Quadratic(p) => p.global_value_grad(w),
            Self::Classification(p) => p.global_value_grad(w),
        }
    }
}
