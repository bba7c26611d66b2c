//! The training loops: compressed-gradient descent with worker sampling and
//! its error-feedback variant with local updates.
//!
//! Within a round, worker gradients are computed in parallel; every random
//! decision draws from a stream addressed by `(round, worker, purpose, step)`,
//! so the output is bitwise identical at any parallelism degree and for any
//! worker evaluation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    broadcast_signs, ef_aggregate, majority_vote, mean_aggregate, sign_disagreement,
    AggregationRule, ServerState,
};
use crate::coding::{downlink_cost, message_cost};
use crate::compressors::{sparsign, CompressorConfig};
use crate::error::{Error, Result};
use crate::message::{CompressedMessage, TernaryMessage};
use crate::objectives::Problem;
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::vector::{CompressionBudget, DenseVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Compressed gradients, majority-vote server, one local step.
    Alg1,
    /// Sparsified-sign local updates with server-side error feedback.
    Alg2,
}

fn default_local_steps() -> usize {
    1
}

/// Full configuration of one run.
///
/// Learning rates default to the prescriptions `eta = 1/sqrt(T d)` for
/// [`Algorithm::Alg1`] and `eta_local = 1/(sqrt(T d) tau)`, `eta = tau` for
/// [`Algorithm::Alg2`] when left unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub sample_size: usize,
    /// Worker compressor (first algorithm only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compressor: Option<CompressorConfig>,
    /// Local-step sparsification budget (second algorithm only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_budget: Option<f64>,
    /// Uplink sparsification budget for the accumulated update (second
    /// algorithm only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_budget: Option<f64>,
    #[serde(default = "default_local_steps")]
    pub local_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_local: Option<f64>,
    /// Server aggregation rule; defaults to majority vote for the first
    /// algorithm and scaled sign with error feedback for the second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_rule: Option<AggregationRule>,
    /// Minibatch size for stochastic local gradients (classification only);
    /// full batch when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Record the per-round mean of the vote-quality diagnostic (first
    /// algorithm with a uniform sparsification budget only; costs one full
    /// gradient per worker per round).
    #[serde(default)]
    pub record_kappa: bool,
    /// Keep a copy of the iterate after every round.
    #[serde(default)]
    pub record_iterates: bool,
    pub master_seed: u64,
}

impl RunConfig {
    fn rule(&self) -> AggregationRule {
        self.server_rule.unwrap_or(match self.algorithm {
            Algorithm::Alg1 => AggregationRule::MajorityVoteSign,
            Algorithm::Alg2 => AggregationRule::ScaledSignWithEf,
        })
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let m = problem.num_workers();
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.sample_size == 0 || self.sample_size > m {
            return Err(Error::Config(format!(
                "sample_size must lie in 1..={m}, got {}",
                self.sample_size
            )));
        }
        if self.local_steps == 0 {
            return Err(Error::Config("local_steps must be >= 1".into()));
        }
        for (name, rate) in [("eta", self.eta), ("eta_local", self.eta_local)] {
            if let Some(r) = rate {
                if !r.is_finite() || r <= 0.0 {
                    return Err(Error::Config(format!("{name} must be positive, got {r}")));
                }
            }
        }
        if let Some(b) = self.batch_size {
            match problem {
                Problem::Classification(p) => {
                    if b == 0 || b > p.samples_per_worker() {
                        return Err(Error::Config(format!(
                            "batch_size must lie in 1..={}, got {b}",
                            p.samples_per_worker()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Config(
                        "batch_size is only meaningful for the classification problem".into(),
                    ))
                }
            }
        }
        match self.algorithm {
            Algorithm::Alg1 => {
                let compressor = self
                    .compressor
                    .as_ref()
                    .ok_or_else(|| Error::Config("algorithm alg1 requires a compressor".into()))?;
                compressor.validate()?;
                if self.local_budget.is_some() || self.global_budget.is_some() {
                    return Err(Error::Config(
                        "local/global budgets belong to algorithm alg2".into(),
                    ));
                }
                if self.local_steps != 1 {
                    return Err(Error::Config(
                        "algorithm alg1 performs exactly one local step".into(),
                    ));
                }
                if self.eta_local.is_some() {
                    return Err(Error::Config("eta_local belongs to algorithm alg2".into()));
                }
                if self.rule() == AggregationRule::ScaledSignWithEf {
                    return Err(Error::Config(
                        "error feedback requires algorithm alg2".into(),
                    ));
                }
            }
            Algorithm::Alg2 => {
                if self.compressor.is_some() {
                    return Err(Error::Config(
                        "algorithm alg2 always sparsifies; configure local/global budgets instead"
                            .into(),
                    ));
                }
                for (name, budget) in [
                    ("local_budget", self.local_budget),
                    ("global_budget", self.global_budget),
                ] {
                    let b = budget
                        .ok_or_else(|| Error::Config(format!("algorithm alg2 requires {name}")))?;
                    if !b.is_finite() || b < 0.0 {
                        return Err(Error::Config(format!("{name} must be >= 0, got {b}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-round metrics. `objective` and the bit counters describe the state
/// after the round's update; `wrong_agg_fraction` and `grad_l1` are measured
/// against the exact global gradient at the round's start.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub objective: f64,
    /// `None` when the true gradient was identically zero.
    pub wrong_agg_fraction: Option<f64>,
    pub grad_l1: f64,
    pub uplink_bits: f64,
    pub downlink_bits: f64,
    pub kappa_mean: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub initial_objective: f64,
    pub records: Vec<RoundRecord>,
    pub final_iterate: DenseVector,
    /// Iterate after each round, when requested.
    pub iterates: Option<Vec<DenseVector>>,
    /// Largest coordinate deviation of the error-feedback shadow-iterate
    /// recurrence observed across the run (error-feedback rule only).
    pub recurrence_max_dev: Option<f64>,
}

/// Fraction of coordinates with nonzero true gradient whose aggregated sign
/// disagrees (an absent/zero aggregate counts as a disagreement). `None`
/// marks the undefined all-zero-gradient case.
pub fn measure_wrong_aggregation(
    true_avg_grad: &DenseVector,
    aggregated: &TernaryMessage,
) -> Result<Option<f64>> {
    sign_disagreement(true_avg_grad, aggregated)
}

pub fn run(problem: &Problem, config: &RunConfig) -> Result<RunOutput> {
    config.validate(problem)?;
    match config.algorithm {
        Algorithm::Alg1 => run_alg1(problem, config),
        Algorithm::Alg2 => run_alg2(problem, config),
    }
}

fn sample_round_workers(seed: u64, round: u64, total: usize, k: usize) -> Vec<usize> {
    let mut rng = RngStream::new(
        seed,
        StreamId::new(round, u64::MAX, StreamPurpose::WorkerSampling, 0),
    );
    let mut ids = rand::seq::index::sample(&mut rng, total, k).into_vec();
    ids.sort_unstable();
    ids
}

fn ensure_finite(w: &DenseVector, what: &str, round: usize) -> Result<()> {
    if w.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!(
            "{what} became non-finite at round {round}"
        )));
    }
    Ok(())
}

fn round_kappa(problem: &Problem, w: &DenseVector, config: &RunConfig) -> Result<Option<f64>> {
    let Some(CompressorConfig::Sparsign {
        budget: CompressionBudget::Uniform(b),
    }) = &config.compressor
    else {
        return Ok(None);
    };
    let m = problem.num_workers();
    let grads: Vec<DenseVector> = (0..m)
        .into_par_iter()
        .map(|worker| problem.local_gradient(worker, w))
        .collect::<Result<_>>()?;
    let inclusion = config.sample_size as f64 / m as f64;
    let kappas = crate::analysis::kappa_snapshot(&grads, *b, inclusion)?;
    let defined: Vec<f64> = kappas.into_iter().flatten().collect();
    if defined.is_empty() {
        return Ok(None);
    }
    Ok(Some(defined.iter().sum::<f64>() / defined.len() as f64))
}

fn run_alg1(problem: &Problem, config: &RunConfig) -> Result<RunOutput> {
    let seed = config.master_seed;
    let dim = problem.dim();
    let m_total = problem.num_workers();
    let compressor = config.compressor.as_ref().expect("validated");
    let rule = config.rule();
    let eta = config
        .eta
        .unwrap_or_else(|| 1.0 / ((config.rounds * dim) as f64).sqrt());

    let mut w = problem.initial_point();
    let (initial_objective, mut true_grad) = problem.global_value_grad(&w)?;
    let mut records = Vec::with_capacity(config.rounds);
    let mut iterates = config.record_iterates.then(Vec::new);

    for round in 0..config.rounds {
        let sampled = sample_round_workers(seed, round as u64, m_total, config.sample_size);
        let grads: Vec<DenseVector> = sampled
            .par_iter()
            .map(|&worker| {
                let mut rng = RngStream::new(
                    seed,
                    StreamId::new(round as u64, worker as u64, StreamPurpose::Minibatch, 0),
                );
                problem.local_stochastic_gradient(worker, &w, config.batch_size, &mut rng)
            })
            .collect::<Result<_>>()?;

        let shared_max = compressor.needs_shared_max().then(|| {
            grads
                .iter()
                .map(DenseVector::linf_norm)
                .fold(0.0f64, f64::max)
        });

        let messages: Vec<CompressedMessage> = sampled
            .iter()
            .zip(&grads)
            .map(|(&worker, g)| {
                let mut rng = RngStream::new(
                    seed,
                    StreamId::new(round as u64, worker as u64, StreamPurpose::Compression, 0),
                );
                compressor.compress(g, shared_max, &mut rng)
            })
            .collect::<Result<_>>()?;

        let (broadcast, vote_signs) = match rule {
            AggregationRule::MajorityVoteSign => {
                let vote = majority_vote(&messages)?;
                (vote.densify(), vote)
            }
            AggregationRule::Mean => {
                let mean = mean_aggregate(&messages)?;
                let signs = broadcast_signs(&mean);
                (mean, signs)
            }
            AggregationRule::ScaledSignWithEf => unreachable!("rejected by validation"),
        };

        let mut uplink_bits: f64 = messages
            .iter()
            .map(|msg| message_cost(msg, compressor))
            .sum();
        if compressor.needs_shared_max() {
            // Magnitude-sharing pre-pass: one 32-bit scalar per sampled worker.
            uplink_bits += 32.0 * sampled.len() as f64;
        }
        let downlink_bits = downlink_cost(rule, dim);
        let wrong_agg_fraction = sign_disagreement(&true_grad, &vote_signs)?;
        let grad_l1 = true_grad.l1_norm();
        let kappa_mean = if config.record_kappa {
            round_kappa(problem, &w, config)?
        } else {
            None
        };

        w = w.axpy(-eta, &broadcast)?;
        ensure_finite(&w, "iterate", round)?;
        let (objective, next_grad) = problem.global_value_grad(&w)?;
        if !objective.is_finite() {
            return Err(Error::Numeric(format!(
                "objective became non-finite at round {round}"
            )));
        }
        true_grad = next_grad;

        if let Some(iters) = iterates.as_mut() {
            iters.push(w.clone());
        }
        records.push(RoundRecord {
            round,
            objective,
            wrong_agg_fraction,
            grad_l1,
            uplink_bits,
            downlink_bits,
            kappa_mean,
        });
    }

    Ok(RunOutput {
        initial_objective,
        records,
        final_iterate: w,
        iterates,
        recurrence_max_dev: None,
    })
}

fn run_alg2(problem: &Problem, config: &RunConfig) -> Result<RunOutput> {
    let seed = config.master_seed;
    let dim = problem.dim();
    let m_total = problem.num_workers();
    let rule = config.rule();
    let tau = config.local_steps;
    let eta_local = config
        .eta_local
        .unwrap_or_else(|| 1.0 / (((config.rounds * dim) as f64).sqrt() * tau as f64));
    let eta = config.eta.unwrap_or(tau as f64);
    let step = eta * eta_local;
    let local_budget = CompressionBudget::Uniform(config.local_budget.expect("validated"));
    let global_budget = CompressionBudget::Uniform(config.global_budget.expect("validated"));
    let uplink_method = CompressorConfig::Sparsign {
        budget: global_budget.clone(),
    };

    let mut w = problem.initial_point();
    let (initial_objective, mut true_grad) = problem.global_value_grad(&w)?;
    let mut state = ServerState::new(dim, rule);
    let mut records = Vec::with_capacity(config.rounds);
    let mut iterates = config.record_iterates.then(Vec::new);
    let mut recurrence_max_dev: Option<f64> = None;

    for round in 0..config.rounds {
        let sampled = sample_round_workers(seed, round as u64, m_total, config.sample_size);

        let messages: Vec<CompressedMessage> = sampled
            .par_iter()
            .map(|&worker| {
                let mut local_iterate = w.clone();
                let mut update_sum = DenseVector::zeros(dim);
                for step_idx in 0..tau {
                    let mut grad_rng = RngStream::new(
                        seed,
                        StreamId::new(
                            round as u64,
                            worker as u64,
                            StreamPurpose::Minibatch,
                            step_idx as u32,
                        ),
                    );
                    let g = problem.local_stochastic_gradient(
                        worker,
                        &local_iterate,
                        config.batch_size,
                        &mut grad_rng,
                    )?;
                    let mut comp_rng = RngStream::new(
                        seed,
                        StreamId::new(
                            round as u64,
                            worker as u64,
                            StreamPurpose::Compression,
                            step_idx as u32,
                        ),
                    );
                    let compressed = sparsign(&g, &local_budget, &mut comp_rng)?;
                    let dense = compressed.densify();
                    update_sum = update_sum.add(&dense)?;
                    local_iterate = local_iterate.axpy(-eta_local, &dense)?;
                }
                let mut outer_rng = RngStream::new(
                    seed,
                    StreamId::new(
                        round as u64,
                        worker as u64,
                        StreamPurpose::OuterCompression,
                        0,
                    ),
                );
                Ok(CompressedMessage::Ternary(sparsign(
                    &update_sum,
                    &global_budget,
                    &mut outer_rng,
                )?))
            })
            .collect::<Result<_>>()?;

        let (broadcast, vote_signs) = match rule {
            AggregationRule::ScaledSignWithEf => {
                let shadow_before = w.axpy(-step, state.residual())?;
                let (broadcast, next_state) = ef_aggregate(&state, &messages)?;
                // Shadow-iterate recurrence: the iterate minus the scaled
                // residual must advance by exactly the mean update.
                let mean_update = mean_aggregate(&messages)?;
                let expected = shadow_before.axpy(-step, &mean_update)?;
                let w_next = w.axpy(-step, &broadcast)?;
                let shadow_after = w_next.axpy(-step, next_state.residual())?;
                let dev = shadow_after.max_abs_diff(&expected)?;
                recurrence_max_dev = Some(recurrence_max_dev.map_or(dev, |prev| prev.max(dev)));
                debug_assert!(
                    dev < 1e-10,
                    "shadow recurrence deviation {dev} at round {round}"
                );
                state = next_state;
                let signs = broadcast_signs(&broadcast);
                (broadcast, signs)
            }
            AggregationRule::MajorityVoteSign => {
                let vote = majority_vote(&messages)?;
                (vote.densify(), vote)
            }
            AggregationRule::Mean => {
                let mean = mean_aggregate(&messages)?;
                let signs = broadcast_signs(&mean);
                (mean, signs)
            }
        };

        let uplink_bits: f64 = messages
            .iter()
            .map(|msg| message_cost(msg, &uplink_method))
            .sum();
        let downlink_bits = downlink_cost(rule, dim);
        let wrong_agg_fraction = sign_disagreement(&true_grad, &vote_signs)?;
        let grad_l1 = true_grad.l1_norm();

        w = w.axpy(-step, &broadcast)?;
        ensure_finite(&w, "iterate", round)?;
        let (objective, next_grad) = problem.global_value_grad(&w)?;
        if !objective.is_finite() {
            return Err(Error::Numeric(format!(
                "objective became non-finite at round {round}"
            )));
        }
        true_grad = next_grad;

        if let Some(iters) = iterates.as_mut() {
            iters.push(w.clone());
        }
        records.push(RoundRecord {
            round,
            objective,
            wrong_agg_fraction,
            grad_l1,
            uplink_bits,
            downlink_bits,
            kappa_mean: None,
        });
    }

    Ok(RunOutput {
        initial_objective,
        records,
        final_iterate: w,
        iterates,
        recurrence_max_dev,
    })
}
