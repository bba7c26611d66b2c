//! Closed-form bounds and exhaustive oracles for the wrong-aggregation
//! probability of ternary majority voting, plus convergence-rate evaluators.
//!
//! Conventions: the reference sign is the sign of the mean of the uncompressed
//! values; a tied vote (sum exactly zero) counts as wrong aggregation, both
//! here and in the simulator, so oracle and bound address the same event.

use rand_chacha::rand_core::RngCore;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::{sign3, DenseVector};

/// Per-worker ternary outcome probabilities relative to the reference sign:
/// worker `m` votes against it with probability `p_m`, with it with
/// probability `q_m`, and abstains otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerOutcomeDist {
    outcomes: Vec<(f64, f64)>,
}

impl WorkerOutcomeDist {
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidInput("need at least one worker".into()));
        }
        for &(p, q) in &outcomes {
            if !(p.is_finite() && q.is_finite()) || p < 0.0 || q < 0.0 || p + q > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "worker outcome probabilities must satisfy p, q >= 0 and p + q <= 1, got ({p}, {q})"
                )));
            }
        }
        Ok(Self { outcomes })
    }

    pub fn num_workers(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    pub fn p_bar(&self) -> f64 {
        self.outcomes.iter().map(|o| o.0).sum::<f64>() / self.outcomes.len() as f64
    }

    pub fn q_bar(&self) -> f64 {
        self.outcomes.iter().map(|o| o.1).sum::<f64>() / self.outcomes.len() as f64
    }
}

/// Chernoff-style upper bound `[1 - (sqrt(q_bar) - sqrt(p_bar))^2]^M` on the
/// wrong-aggregation probability of `M` independent ternary votes.
///
/// Requires the hypothesis `q_bar > p_bar`; otherwise the bound does not
/// apply and an error is returned rather than a number.
pub fn wrong_aggregation_bound(p_bar: f64, q_bar: f64, num_workers: usize) -> Result<f64> {
    if num_workers == 0 {
        return Err(Error::InvalidInput("need at least one worker".into()));
    }
    if !(p_bar.is_finite() && q_bar.is_finite())
        || p_bar < 0.0
        || q_bar < 0.0
        || p_bar + q_bar > 1.0 + 1e-12
    {
        return Err(Error::InvalidInput(format!(
            "need p_bar, q_bar >= 0 with p_bar + q_bar <= 1, got ({p_bar}, {q_bar})"
        )));
    }
    if q_bar <= p_bar {
        return Err(Error::InvalidInput(format!(
            "bound hypothesis violated: q_bar ({q_bar}) must exceed p_bar ({p_bar})"
        )));
    }
    let gap = q_bar.sqrt() - p_bar.sqrt();
    Ok((1.0 - gap * gap).powi(num_workers as i32))
}

/// Exact wrong-aggregation probability by enumerating all `3^M` vote
/// outcomes with their product probabilities.
///
/// Ties (as many opposing as matching votes, including the all-abstain
/// outcome) count as wrong. Enumeration is limited to `M <= 12`.
pub fn exact_wrong_aggregation_prob(dist: &WorkerOutcomeDist) -> Result<f64> {
    let m = dist.num_workers();
    if m > 12 {
        return Err(Error::InvalidInput(format!(
            "exact enumeration supports at most 12 workers, got {m}"
        )));
    }
    // vote_sum counts matching minus opposing votes; ties are wrong.
    fn recurse(outcomes: &[(f64, f64)], vote_sum: i32, prob: f64, wrong: &mut f64) {
        match outcomes.split_first() {
            None => {
                if vote_sum <= 0 {
                    *wrong += prob;
                }
            }
            Some((&(p, q), rest)) => {
                let zero = (1.0 - p - q).max(0.0);
                recurse(rest, vote_sum - 1, prob * p, wrong);
                recurse(rest, vote_sum, prob * zero, wrong);
                recurse(rest, vote_sum + 1, prob * q, wrong);
            }
        }
    }
    let mut wrong = 0.0;
    recurse(dist.outcomes(), 0, 1.0, &mut wrong);
    Ok(wrong)
}

fn validate_pipeline(u: &[f64], budgets: &[f64], inclusion_prob: f64) -> Result<(f64, i8)> {
    if u.is_empty() {
        return Err(Error::InvalidInput("need at least one worker".into()));
    }
    if budgets.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: budgets.len(),
        });
    }
    if !(0.0..=1.0).contains(&inclusion_prob) {
        return Err(Error::InvalidInput(format!(
            "inclusion probability must lie in [0, 1], got {inclusion_prob}"
        )));
    }
    for (&x, &b) in u.iter().zip(budgets) {
        if !x.is_finite() || !b.is_finite() || b < 0.0 {
            return Err(Error::InvalidInput(
                "values must be finite, budgets >= 0".into(),
            ));
        }
        if x.abs() * b > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "|u| * B = {} exceeds 1; the closed-form rates assume no probability clipping",
                x.abs() * b
            )));
        }
    }
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let sign = sign3(mean);
    if sign == 0 {
        return Err(Error::InvalidInput(
            "the mean of u is zero; its sign is undefined".into(),
        ));
    }
    Ok((mean, sign))
}

/// Closed-form `(p_bar, q_bar)` for sparsified-sign votes on fixed values
/// `u_m` with per-worker budgets and a common inclusion probability.
///
/// Workers whose sign opposes the mean contribute `|u_m B_m p_s| / M` to
/// `p_bar`; the rest contribute to `q_bar`. Under equal budgets and
/// inclusion this guarantees `q_bar - p_bar = B p_s |mean(u)| > 0`.
pub fn sparsign_vote_rates(u: &[f64], budgets: &[f64], inclusion_prob: f64) -> Result<(f64, f64)> {
    let (_, ref_sign) = validate_pipeline(u, budgets, inclusion_prob)?;
    let mut p_sum = 0.0;
    let mut q_sum = 0.0;
    for (&x, &b) in u.iter().zip(budgets) {
        let mass = (x * b * inclusion_prob).abs();
        if sign3(x) == ref_sign {
            q_sum += mass;
        } else {
            p_sum += mass;
        }
    }
    let m = u.len() as f64;
    Ok((p_sum / m, q_sum / m))
}

/// Per-worker outcome distribution of the sparsify-then-sample pipeline with
/// independent worker inclusion, for exact enumeration.
pub fn pipeline_outcome_dist(
    u: &[f64],
    budgets: &[f64],
    inclusion_prob: f64,
) -> Result<WorkerOutcomeDist> {
    let (_, ref_sign) = validate_pipeline(u, budgets, inclusion_prob)?;
    let outcomes = u
        .iter()
        .zip(budgets)
        .map(|(&x, &b)| {
            let mass = (x * b * inclusion_prob).abs().min(1.0);
            if sign3(x) == ref_sign {
                (0.0, mass)
            } else {
                (mass, 0.0)
            }
        })
        .collect();
    WorkerOutcomeDist::new(outcomes)
}

/// Monte Carlo estimates from simulating the sparsify-then-sample pipeline.
#[derive(Clone, Copy, Debug)]
pub struct PipelineEstimate {
    pub p_bar: f64,
    pub q_bar: f64,
    pub wrong_freq: f64,
    pub p_bar_se: f64,
    pub q_bar_se: f64,
    pub wrong_se: f64,
}

/// Simulates the pipeline: each worker is included independently with
/// probability `inclusion_prob` (excluded workers vote 0), then votes
/// `sign(u_m)` with probability `|u_m| B_m`. Reports the empirical
/// `(p_bar, q_bar)`, the wrong-aggregation frequency (sum of votes times the
/// reference sign `<= 0`), and their standard errors.
pub fn simulate_vote_rates(
    u: &[f64],
    budgets: &[f64],
    inclusion_prob: f64,
    trials: usize,
    rng: &mut RngStream,
) -> Result<PipelineEstimate> {
    let (_, ref_sign) = validate_pipeline(u, budgets, inclusion_prob)?;
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let m = u.len() as f64;
    let mut sums = [0.0f64; 3];
    let mut sum_sqs = [0.0f64; 3];
    for _ in 0..trials {
        let mut opposing = 0u32;
        let mut matching = 0u32;
        for (&x, &b) in u.iter().zip(budgets) {
            if rng.uniform() >= inclusion_prob {
                continue;
            }
            let keep = (x.abs() * b).min(1.0);
            if keep > 0.0 && rng.uniform() < keep {
                if sign3(x) == ref_sign {
                    matching += 1;
                } else {
                    opposing += 1;
                }
            }
        }
        let stats = [
            f64::from(opposing) / m,
            f64::from(matching) / m,
            if matching <= opposing { 1.0 } else { 0.0 },
        ];
        for (k, s) in stats.iter().enumerate() {
            sums[k] += s;
            sum_sqs[k] += s * s;
        }
    }
    let n = trials as f64;
    let finish = |sum: f64, sum_sq: f64| {
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    };
    let (p_bar, p_bar_se) = finish(sums[0], sum_sqs[0]);
    let (q_bar, q_bar_se) = finish(sums[1], sum_sqs[1]);
    let (wrong_freq, wrong_se) = finish(sums[2], sum_sqs[2]);
    Ok(PipelineEstimate {
        p_bar,
        q_bar,
        wrong_freq,
        p_bar_se,
        q_bar_se,
        wrong_se,
    })
}

/// Realized per-coordinate vote-quality diagnostic for a gradient snapshot.
///
/// For coordinate `i` with nonzero cross-worker mean, partitions workers by
/// whether their sign matches the mean's sign and evaluates
/// `[1 - B p_s (|mean| / (sqrt(match_avg) + sqrt(oppose_avg)))^2]^M`,
/// where the averages are of absolute values over all `M` workers. The
/// bracket is clamped to `[0, 1]` (budgets large enough to clip keep
/// probabilities would otherwise push it negative), so the diagnostic always
/// lies in `[0, 1]`; 0 means the vote recovers the sign surely, 1 means no
/// information is transmitted. Coordinates with zero mean yield `None`.
pub fn kappa_snapshot(
    gradients: &[DenseVector],
    budget: f64,
    inclusion_prob: f64,
) -> Result<Vec<Option<f64>>> {
    let first = gradients.first().ok_or(Error::EmptyWorkerSet)?;
    let dim = first.dim();
    for g in gradients {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: g.dim(),
            });
        }
    }
    if !budget.is_finite() || budget < 0.0 || !(0.0..=1.0).contains(&inclusion_prob) {
        return Err(Error::InvalidInput(
            "budget must be >= 0 and inclusion probability in [0, 1]".into(),
        ));
    }
    let m = gradients.len() as f64;
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim {
        let mean = gradients.iter().map(|g| g.get(i)).sum::<f64>() / m;
        let ref_sign = sign3(mean);
        if ref_sign == 0 {
            out.push(None);
            continue;
        }
        let mut oppose_avg = 0.0;
        let mut match_avg = 0.0;
        for g in gradients {
            let x = g.get(i);
            if sign3(x) == ref_sign {
                match_avg += x.abs();
            } else {
                oppose_avg += x.abs();
            }
        }
        oppose_avg /= m;
        match_avg /= m;
        let denom = match_avg.sqrt() + oppose_avg.sqrt();
        let ratio = mean.abs() / denom;
        let bracket = (1.0 - budget * inclusion_prob * ratio * ratio).clamp(0.0, 1.0);
        out.push(Some(bracket.powi(gradients.len() as i32)));
    }
    Ok(out)
}

/// Convergence-rate bound for the error-feedback algorithm with local steps:
/// `(F0 - F*) sqrt(d) / (B tau sqrt(T)) + (1 + L + L^2 beta) sqrt(d) / (B tau sqrt(T))
///  + L^2 (tau + 1)(2 tau + 1) / (6 T tau^2)`.
///
/// `smoothness` (L) and `residual_beta` (the residual-energy constant) are
/// user-supplied estimates; the tool does not infer them.
pub fn local_update_convergence_bound(
    f0_minus_fstar: f64,
    smoothness: f64,
    residual_beta: f64,
    budget: f64,
    local_steps: usize,
    dim: usize,
    rounds: usize,
) -> Result<f64> {
    let positive = [
        ("f0_minus_fstar", f0_minus_fstar),
        ("smoothness", smoothness),
        ("residual_beta", residual_beta),
        ("budget", budget),
    ];
    for (name, value) in positive {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    if local_steps == 0 || dim == 0 || rounds == 0 {
        return Err(Error::InvalidInput(
            "local_steps, dim and rounds must be positive".into(),
        ));
    }
    let tau = local_steps as f64;
    let d = dim as f64;
    let t = rounds as f64;
    let l = smoothness;
    let lead = d.sqrt() / (budget * tau * t.sqrt());
    Ok(f0_minus_fstar * lead
        + (1.0 + l + l * l * residual_beta) * lead
        + l * l * (tau + 1.0) * (2.0 * tau + 1.0) / (6.0 * t * tau * tau))
}

/// Uniformly random outcome distribution with `q_bar > p_bar`, for property
/// tests and the bound-dominance harness.
pub fn random_dominated_dist(num_workers: usize, rng: &mut RngStream) -> WorkerOutcomeDist {
    assert!(num_workers >= 1);
    loop {
        let mut outcomes = Vec::with_capacity(num_workers);
        for _ in 0..num_workers {
            // Random point of the simplex p + q <= 1.
            let a = rng.uniform();
            let b = rng.uniform();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pair = (lo, hi - lo);
            outcomes.push(if rng.next_u64() % 2 == 0 {
                pair
            } else {
                (pair.1, pair.0)
            });
        }
        let dist = WorkerOutcomeDist::new(outcomes).expect("simplex sample");
        if dist.q_bar() > dist.p_bar() {
            return dist;
        }
    }
}
