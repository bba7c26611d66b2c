//! Synthetic Dirichlet-partitioned classification.
//!
//! Each worker draws a class-proportion vector from `Dir(alpha)`, then
//! samples labelled points from per-class Gaussian clusters. The model is
//! multinomial logistic regression with a bias column, small enough that
//! exact full-batch gradients are available as oracles.

use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::vector::DenseVector;

/// One worker's local dataset, stored row-major (`samples x feature_dim`).
#[derive(Clone, Debug)]
struct WorkerData {
    features: Vec<f64>,
    labels: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct ClassificationProblem {
    num_classes: usize,
    feature_dim: usize,
    samples_per_worker: usize,
    workers: Vec<WorkerData>,
    proportions: Vec<Vec<f64>>,
    initial: DenseVector,
}

/// One class-proportion vector from a symmetric Dirichlet.
///
/// Sampled as normalized Gamma(alpha, 1) draws. Individual draws may
/// underflow to zero for tiny alpha (an empty class); an all-zero draw is
/// retried.
pub fn dirichlet_proportions(
    num_classes: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if num_classes < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::InvalidInput(format!("gamma distribution: {e}")))?;
    loop {
        let draws: Vec<f64> = (0..num_classes).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

impl ClassificationProblem {
    /// Generates the full problem: shared class-cluster means, then one
    /// Dirichlet proportion vector and dataset per worker. All randomness is
    /// derived from `master_seed`, independent of any run parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        num_classes: usize,
        feature_dim: usize,
        num_workers: usize,
        samples_per_worker: usize,
        alpha: f64,
        separation: f64,
        cluster_stddev: f64,
        master_seed: u64,
    ) -> Result<Self> {
        if num_workers == 0 || samples_per_worker == 0 || feature_dim == 0 {
            return Err(Error::InvalidInput(
                "workers, samples and feature dimension must be positive".into(),
            ));
        }
        if !separation.is_finite() || !cluster_stddev.is_finite() || cluster_stddev < 0.0 {
            return Err(Error::InvalidInput("invalid cluster geometry".into()));
        }

        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut means_rng = RngStream::new(
            master_seed,
            StreamId::new(0, u64::MAX, StreamPurpose::ProblemData, 0),
        );
        let class_means: Vec<Vec<f64>> = (0..num_classes)
            .map(|_| {
                (0..feature_dim)
                    .map(|_| separation * normal.sample(&mut means_rng))
                    .collect()
            })
            .collect();

        let mut workers = Vec::with_capacity(num_workers);
        let mut proportions = Vec::with_capacity(num_workers);
        for m in 0..num_workers {
            let mut rng = RngStream::new(
                master_seed,
                StreamId::new(0, m as u64, StreamPurpose::ProblemData, 0),
            );
            let props = dirichlet_proportions(num_classes, alpha, &mut rng)?;
            let mut features = Vec::with_capacity(samples_per_worker * feature_dim);
            let mut labels = Vec::with_capacity(samples_per_worker);
            for _ in 0..samples_per_worker {
                let u = rng.uniform();
                let mut cum = 0.0;
                let mut label = num_classes - 1;
                for (c, &p) in props.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        label = c;
                        break;
                    }
                }
                labels.push(label as u32);
                let mean = &class_means[label];
                for &mu in mean.iter().take(feature_dim) {
                    features.push(mu + cluster_stddev * normal.sample(&mut rng));
                }
            }
            workers.push(WorkerData { features, labels });
            proportions.push(props);
        }

        let dim = num_classes * (feature_dim + 1);
        Ok(Self {
            num_classes,
            feature_dim,
            samples_per_worker,
            workers,
            proportions,
            initial: DenseVector::zeros(dim),
        })
    }

    /// Model dimension `C * (F + 1)`: one weight row plus bias per class.
    pub fn dim(&self) -> usize {
        self.num_classes * (self.feature_dim + 1)
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn samples_per_worker(&self) -> usize {
        self.samples_per_worker
    }

    pub fn initial_point(&self) -> DenseVector {
        self.initial.clone()
    }

    /// Per-worker class proportions, one simplex vector per worker.
    pub fn proportions(&self) -> &[Vec<f64>] {
        &self.proportions
    }

    fn worker(&self, worker: usize) -> Result<&WorkerData> {
        self.workers
            .get(worker)
            .ok_or_else(|| Error::InvalidInput(format!("unknown worker id {worker}")))
    }

    /// Mean cross-entropy loss and gradient over a subset of one worker's
    /// samples. `sample_ids` must be non-empty.
    fn loss_grad_subset(
        &self,
        data: &WorkerData,
        w: &DenseVector,
        sample_ids: &[usize],
    ) -> (f64, DenseVector) {
        let c = self.num_classes;
        let f = self.feature_dim;
        let stride = f + 1;
        let wv = w.values();
        let mut loss = 0.0;
        let mut grad = vec![0.0; c * stride];
        let mut logits = vec![0.0; c];
        let mut probs = vec![0.0; c];
        for &s in sample_ids {
            let x = &data.features[s * f..(s + 1) * f];
            let y = data.labels[s] as usize;
            for (k, logit) in logits.iter_mut().enumerate() {
                let row = &wv[k * stride..k * stride + f];
                *logit = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + wv[k * stride + f];
            }
            let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut denom = 0.0;
            for (k, &logit) in logits.iter().enumerate() {
                probs[k] = (logit - max).exp();
                denom += probs[k];
            }
            loss += denom.ln() + max - logits[y];
            for (k, p) in probs.iter_mut().enumerate() {
                let coeff = *p / denom - if k == y { 1.0 } else { 0.0 };
                let row = &mut grad[k * stride..(k + 1) * stride];
                for (slot, &xj) in row[..f].iter_mut().zip(x) {
                    *slot += coeff * xj;
                }
                row[f] += coeff;
            }
        }
        let inv = 1.0 / sample_ids.len() as f64;
        for g in &mut grad {
            *g *= inv;
        }
        (loss * inv, DenseVector::new(grad).expect("finite gradient"))
    }

    pub fn local_value(&self, worker: usize, w: &DenseVector) -> Result<f64> {
        let data = self.worker(worker)?;
        let ids: Vec<usize> = (0..self.samples_per_worker).collect();
        Ok(self.loss_grad_subset(data, w, &ids).0)
    }

    pub fn local_gradient(&self, worker: usize, w: &DenseVector) -> Result<DenseVector> {
        let data = self.worker(worker)?;
        let ids: Vec<usize> = (0..self.samples_per_worker).collect();
        Ok(self.loss_grad_subset(data, w, &ids).1)
    }

    /// Minibatch gradient over `batch_size` samples drawn uniformly without
    /// replacement; an unbiased estimator of the full local gradient.
    pub fn local_stochastic_gradient(
        &self,
        worker: usize,
        w: &DenseVector,
        batch_size: usize,
        rng: &mut RngStream,
    ) -> Result<DenseVector> {
        let data = self.worker(worker)?;
        if batch_size == 0 || batch_size > self.samples_per_worker {
            return Err(Error::InvalidInput(format!(
                "batch size {batch_size} out of range 1..={}",
                self.samples_per_worker
            )));
        }
        let mut ids = rand::seq::index::sample(rng, self.samples_per_worker, batch_size).into_vec();
        ids.sort_unstable();
        Ok(self.loss_grad_subset(data, w, &ids).1)
    }

    pub fn global_value_grad(&self, w: &DenseVector) -> Result<(f64, DenseVector)> {
        let ids: Vec<usize> = (0..self.samples_per_worker).collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.dim()];
        for data in &self.workers {
            let (v, g) = self.loss_grad_subset(data, w, &ids);
            value += v;
            for (slot, x) in grad.iter_mut().zip(g.values()) {
                *slot += x;
            }
        }
        let inv_m = 1.0 / self.num_workers() as f64;
        for g in &mut grad {
            *g *= inv_m;
        }
        Ok((value * inv_m, DenseVector::new(grad)?))
    }
}
