//! Acceptance suite: one test per criterion, each printing a pass line
//! (visible with `cargo test --test acceptance -- --nocapture`).

use rand_chacha::rand_core::RngCore;

use sparsign::aggregation::AggregationRule;
use sparsign::analysis::{
    exact_wrong_aggregation_prob, pipeline_outcome_dist, random_dominated_dist,
    simulate_vote_rates, sparsign_vote_rates, wrong_aggregation_bound,
};
use sparsign::coding::golomb_bits_per_index;
use sparsign::compressors::{qsgd, sparsign, terngrad, CompressorConfig, QuantizerNorm};
use sparsign::experiment::{repeat_seed, ProblemConfig};
use sparsign::simulation::{run, Algorithm, RunConfig, RunOutput};
use sparsign::vector::{CompressionBudget, DenseVector};
use sparsign::{RngStream, StreamId, StreamPurpose};

const ACCEPTANCE_SEED: u64 = 3_2140;

fn analysis_rng(salt: u64) -> RngStream {
    RngStream::new(
        ACCEPTANCE_SEED ^ salt,
        StreamId::new(0, 0, StreamPurpose::Analysis, 0),
    )
}

fn base_config(algorithm: Algorithm, rounds: usize, sample_size: usize, seed: u64) -> RunConfig {
    RunConfig {
        algorithm,
        rounds,
        sample_size,
        compressor: None,
        local_budget: None,
        global_budget: None,
        local_steps: 1,
        eta: None,
        eta_local: None,
        server_rule: None,
        batch_size: None,
        record_kappa: false,
        record_iterates: false,
        master_seed: seed,
    }
}

fn rosenbrock_problem() -> ProblemConfig {
    ProblemConfig::RosenbrockScaled {
        dim: 10,
        workers: 100,
        num_negative: 80,
        negative_mass: 0.005,
        initial_value: -2.0,
    }
}

fn classification_problem() -> ProblemConfig {
    ProblemConfig::SyntheticClassification {
        classes: 10,
        features: 20,
        workers: 100,
        samples_per_worker: 200,
        alpha: 0.1,
        separation: 1.0,
        cluster_stddev: 1.5,
    }
}

fn mean_wrong(output: &RunOutput) -> f64 {
    let ws: Vec<f64> = output
        .records
        .iter()
        .filter_map(|r| r.wrong_agg_fraction)
        .collect();
    assert!(!ws.is_empty());
    ws.iter().sum::<f64>() / ws.len() as f64
}

fn rounds_to_tenth(output: &RunOutput) -> u64 {
    let threshold = 0.1 * output.initial_objective;
    output
        .records
        .iter()
        .find(|r| r.objective <= threshold)
        .map(|r| r.round as u64)
        .unwrap_or(u64::MAX)
}

fn median_u64(mut values: Vec<u64>) -> u64 {
    values.sort_unstable();
    values[values.len() / 2]
}

fn median_f64(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Criterion 1: exact enumerated wrong-aggregation probability never exceeds
/// the closed-form bound on >= 1000 randomized heterogeneous configurations.
#[test]
fn criterion_01_bound_dominance() {
    let mut rng = analysis_rng(1);
    for trial in 0..1000 {
        let m = 1 + (rng.next_u64() % 10) as usize;
        let dist = random_dominated_dist(m, &mut rng);
        let exact = exact_wrong_aggregation_prob(&dist).unwrap();
        let bound = wrong_aggregation_bound(dist.p_bar(), dist.q_bar(), m).unwrap();
        assert!(
            exact <= bound + 1e-12,
            "violation at trial {trial}: exact {exact} > bound {bound} (M = {m}, p_bar {}, q_bar {})",
            dist.p_bar(),
            dist.q_bar()
        );
    }
    println!("criterion 1 (bound dominance, 1000 randomized configurations): PASS");
}

/// Criterion 2: deterministic sign under 80/100 adversarial scaling with
/// full participation is wrong at every coordinate of every round and the
/// objective does not decrease.
#[test]
fn criterion_02_deterministic_sign_diverges() {
    let seed = repeat_seed(ACCEPTANCE_SEED, 0);
    let problem = rosenbrock_problem().build(seed).unwrap();
    let mut config = base_config(Algorithm::Alg1, 500, 100, seed);
    config.compressor = Some(CompressorConfig::Sign);
    let output = run(&problem, &config).unwrap();
    assert_eq!(output.records.len(), 500);
    for r in &output.records {
        assert_eq!(
            r.wrong_agg_fraction,
            Some(1.0),
            "round {} had wrong-aggregation fraction {:?}",
            r.round,
            r.wrong_agg_fraction
        );
    }
    let final_objective = output.records.last().unwrap().objective;
    assert!(
        final_objective >= output.initial_objective,
        "objective decreased: {final_objective} < {}",
        output.initial_objective
    );
    println!(
        "criterion 2 (deterministic sign: wrong aggregation 1.0 for 500 rounds, no descent): PASS"
    );
}

/// Criterion 3: the sparsified-sign compressor with 10-of-100 sampling keeps
/// the run-averaged wrong-aggregation fraction below 1/2 and reaches a tenth
/// of the initial objective, for budgets 0.01 and 0.1, on every one of 10
/// seeds.
#[test]
fn criterion_03_sparsign_converges() {
    for budget in [0.01, 0.1] {
        for k in 0..10 {
            let seed = repeat_seed(ACCEPTANCE_SEED, k);
            let problem = rosenbrock_problem().build(seed).unwrap();
            let mut config = base_config(Algorithm::Alg1, 110, 10, seed);
            config.compressor = Some(CompressorConfig::Sparsign {
                budget: CompressionBudget::Uniform(budget),
            });
            config.eta = Some(0.014142135623730951);
            let output = run(&problem, &config).unwrap();
            let wrong = mean_wrong(&output);
            assert!(
                wrong < 0.5,
                "B = {budget}, seed {k}: run-averaged wrong aggregation {wrong} >= 0.5"
            );
            let final_objective = output.records.last().unwrap().objective;
            assert!(
                final_objective < 0.1 * output.initial_objective,
                "B = {budget}, seed {k}: final {final_objective} not below 10% of {}",
                output.initial_objective
            );
        }
    }
    println!("criterion 3 (sparsified sign: wrong aggregation < 1/2 and 90% objective decrease, B in {{0.01, 0.1}}, 10 seeds each): PASS");
}

/// Criterion 4: with budget 0.01, run-averaged wrong aggregation is strictly
/// decreasing in the sample size {5, 10, 50} on at least 8 of 10 seeds, and
/// the seed-median rounds to reach a tenth of the initial objective are
/// non-increasing in the sample size.
#[test]
fn criterion_04_sampling_monotonicity() {
    let sizes = [5usize, 10, 50];
    let mut wrongs = vec![Vec::new(); sizes.len()];
    let mut reaches = vec![Vec::new(); sizes.len()];
    for k in 0..10 {
        let seed = repeat_seed(ACCEPTANCE_SEED, k);
        let problem = rosenbrock_problem().build(seed).unwrap();
        for (i, &sample) in sizes.iter().enumerate() {
            let mut config = base_config(Algorithm::Alg1, 110, sample, seed);
            config.compressor = Some(CompressorConfig::Sparsign {
                budget: CompressionBudget::Uniform(0.01),
            });
            config.eta = Some(0.014142135623730951);
            let output = run(&problem, &config).unwrap();
            wrongs[i].push(mean_wrong(&output));
            reaches[i].push(rounds_to_tenth(&output));
        }
    }
    let ordered_seeds = (0..10)
        .filter(|&k| wrongs[0][k] > wrongs[1][k] && wrongs[1][k] > wrongs[2][k])
        .count();
    assert!(
        ordered_seeds >= 8,
        "strict ordering held on only {ordered_seeds}/10 seeds: {wrongs:?}"
    );
    let medians: Vec<u64> = reaches.iter().map(|r| median_u64(r.clone())).collect();
    assert!(
        medians[0] >= medians[1] && medians[1] >= medians[2],
        "median rounds-to-10% not non-increasing: {medians:?}"
    );
    println!(
        "criterion 4 (sampling monotonicity: ordering on {ordered_seeds}/10 seeds, reach medians {medians:?}): PASS"
    );
}

/// Monte Carlo mean of a compressor against its expectation, coordinate-wise
/// at three standard errors.
fn assert_compressor_unbiased(
    label: &str,
    mut draw: impl FnMut(&mut RngStream) -> DenseVector,
    expected: &[f64],
    trials: usize,
    rng: &mut RngStream,
) {
    let dim = expected.len();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..trials {
        let v = draw(rng);
        for (i, &x) in v.values().iter().enumerate() {
            sum[i] += x;
            sum_sq[i] += x * x;
        }
    }
    let n = trials as f64;
    for i in 0..dim {
        let mean = sum[i] / n;
        let var = (sum_sq[i] / n - mean * mean).max(0.0);
        let se = (var / n).sqrt();
        let tol = 3.0 * se + 1e-9 * expected[i].abs().max(1.0);
        assert!(
            (mean - expected[i]).abs() <= tol,
            "{label}: coordinate {i} mean {mean} vs expected {} (tol {tol})",
            expected[i]
        );
    }
}

/// Criterion 5: unbiasedness of the sparsifying compressor (against its
/// clipped expectation) and of every stochastic quantizer (against the raw
/// gradient), 10^6 draws on 20 random vectors each.
#[test]
fn criterion_05_compressor_unbiasedness() {
    let trials = 1_000_000;
    let dim = 3;
    let mut gen = analysis_rng(5);
    let random_vec = |rng: &mut RngStream| {
        DenseVector::from_fn(dim, |_| {
            let x = rng.uniform() * 4.0 - 2.0;
            if x == 0.0 {
                0.1
            } else {
                x
            }
        })
        .unwrap()
    };

    for v in 0..20 {
        let g = random_vec(&mut gen);
        let mut rng = analysis_rng(500 + v);

        // Sparsified sign: expectation clip(|g| B, 0, 1) * sign(g).
        let budget_value = 0.8;
        let budget = CompressionBudget::Uniform(budget_value);
        let expected: Vec<f64> = g
            .values()
            .iter()
            .map(|&x| (x.abs() * budget_value).clamp(0.0, 1.0) * x.signum())
            .collect();
        assert_compressor_unbiased(
            "sparsign",
            |rng| sparsign(&g, &budget, rng).unwrap().densify(),
            &expected,
            trials,
            &mut rng,
        );

        // Quantizers: expectation is the gradient itself.
        assert_compressor_unbiased(
            "qsgd-1bit-l2",
            |rng| qsgd(&g, 1, QuantizerNorm::L2, rng).unwrap().densify(),
            g.values(),
            trials,
            &mut rng,
        );
        assert_compressor_unbiased(
            "qsgd-1bit-linf",
            |rng| qsgd(&g, 1, QuantizerNorm::Linf, rng).unwrap().densify(),
            g.values(),
            trials,
            &mut rng,
        );
        assert_compressor_unbiased(
            "qsgd-4level-l2",
            |rng| qsgd(&g, 4, QuantizerNorm::L2, rng).unwrap().densify(),
            g.values(),
            trials,
            &mut rng,
        );
        let shared_max = 1.25 * g.linf_norm();
        assert_compressor_unbiased(
            "terngrad",
            |rng| terngrad(&g, shared_max, rng).unwrap().densify(),
            g.values(),
            trials,
            &mut rng,
        );
    }
    println!(
        "criterion 5 (compressor unbiasedness, 10^6 draws x 20 vectors x 5 compressors): PASS"
    );
}

/// Criterion 6: the error-feedback shadow-iterate recurrence holds to 1e-10
/// at every round of a 2000-round run on the classification task.
#[test]
fn criterion_06_shadow_recurrence() {
    let seed = repeat_seed(ACCEPTANCE_SEED, 6);
    let problem = ProblemConfig::SyntheticClassification {
        classes: 5,
        features: 10,
        workers: 20,
        samples_per_worker: 100,
        alpha: 0.1,
        separation: 1.0,
        cluster_stddev: 1.5,
    }
    .build(seed)
    .unwrap();
    let mut config = base_config(Algorithm::Alg2, 2000, 5, seed);
    config.local_budget = Some(10.0);
    config.global_budget = Some(1.0);
    let output = run(&problem, &config).unwrap();
    let dev = output
        .recurrence_max_dev
        .expect("error-feedback run tracks the recurrence");
    assert!(dev < 1e-10, "max recurrence deviation {dev}");
    println!(
        "criterion 6 (shadow-iterate recurrence over 2000 rounds, max deviation {dev:.3e}): PASS"
    );
}

/// Criterion 7: closed-form vote rates and the exact wrong-aggregation
/// probability match Monte Carlo simulation of the sparsify-then-sample
/// pipeline on 50 random value vectors, at three standard errors with 10^5
/// trials.
#[test]
fn criterion_07_vote_rate_consistency() {
    let mut gen = analysis_rng(7);
    let mut checked = 0;
    while checked < 50 {
        let m = 3 + (gen.next_u64() % 8) as usize;
        let u: Vec<f64> = (0..m).map(|_| gen.uniform() * 2.0 - 1.0).collect();
        if u.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let linf = u.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let budgets: Vec<f64> = (0..m).map(|_| (0.2 + 0.8 * gen.uniform()) / linf).collect();
        let inclusion = [0.3, 0.5, 1.0][(gen.next_u64() % 3) as usize];

        let (p_bar, q_bar) = sparsign_vote_rates(&u, &budgets, inclusion).unwrap();
        let dist = pipeline_outcome_dist(&u, &budgets, inclusion).unwrap();
        let exact_wrong = exact_wrong_aggregation_prob(&dist).unwrap();
        let mut rng = analysis_rng(700 + checked as u64);
        let est = simulate_vote_rates(&u, &budgets, inclusion, 100_000, &mut rng).unwrap();

        assert!(
            (est.p_bar - p_bar).abs() <= 3.0 * est.p_bar_se + 1e-9,
            "vector {checked}: p_bar {} vs analytic {p_bar} (se {})",
            est.p_bar,
            est.p_bar_se
        );
        assert!(
            (est.q_bar - q_bar).abs() <= 3.0 * est.q_bar_se + 1e-9,
            "vector {checked}: q_bar {} vs analytic {q_bar} (se {})",
            est.q_bar,
            est.q_bar_se
        );
        assert!(
            (est.wrong_freq - exact_wrong).abs() <= 3.0 * est.wrong_se + 1e-9,
            "vector {checked}: wrong {} vs exact {exact_wrong} (se {})",
            est.wrong_freq,
            est.wrong_se
        );
        checked += 1;
    }
    println!("criterion 7 (analytic vote rates vs Monte Carlo on 50 vectors at 10^5 trials): PASS");
}

/// Criterion 8: the Golomb per-index bit count matches an independent
/// re-evaluation on the 99-point grid to 1e-12 relative and is monotone
/// non-increasing in the sparsity ratio.
#[test]
fn criterion_08_golomb_accounting() {
    // Independent re-evaluation with different elementary steps.
    let oracle = |p: f64| {
        let c = 5f64.sqrt() + 0.5;
        let ratio = c.ln() / -(1.0 - p).ln();
        let b_star = 1.0 + (ratio.ln() / std::f64::consts::LN_2).floor();
        let group = b_star.exp2();
        b_star + 1.0 / (1.0 - ((1.0 - p).ln() * group).exp())
    };
    let mut prev = f64::INFINITY;
    for k in 1..100 {
        let p = k as f64 / 100.0;
        let got = golomb_bits_per_index(p).unwrap();
        let want = oracle(p);
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "p = {p}: {got} vs oracle {want}"
        );
        assert!(
            got <= prev + 1e-12,
            "not monotone at p = {p}: {got} > {prev}"
        );
        prev = got;
    }
    println!(
        "criterion 8 (Golomb bits per index: oracle match and monotonicity on 99-point grid): PASS"
    );
}

/// Criterion 9: on the heterogeneous classification task, the error-feedback
/// sparsified algorithm beats deterministic sign in final training loss on
/// at least 9 of 10 seeds, and needs fewer uplink bits (seed-median) to
/// reach the deterministic-sign run's final loss.
#[test]
fn criterion_09_heterogeneous_ordering() {
    let bits_to_reach = |output: &RunOutput, target: f64| -> f64 {
        let mut bits = 0.0;
        for r in &output.records {
            bits += r.uplink_bits;
            if r.objective <= target {
                return bits;
            }
        }
        f64::INFINITY
    };

    let mut ef_better = 0;
    let mut sign_bits = Vec::new();
    let mut ef_bits = Vec::new();
    for k in 0..10 {
        let seed = repeat_seed(ACCEPTANCE_SEED, 900 + k);
        let problem = classification_problem().build(seed).unwrap();

        let mut sign_config = base_config(Algorithm::Alg1, 1000, 20, seed);
        sign_config.compressor = Some(CompressorConfig::Sign);
        let sign_out = run(&problem, &sign_config).unwrap();

        let mut ef_config = base_config(Algorithm::Alg2, 1000, 20, seed);
        ef_config.local_budget = Some(10.0);
        ef_config.global_budget = Some(1.0);
        let ef_out = run(&problem, &ef_config).unwrap();

        let sign_final = sign_out.records.last().unwrap().objective;
        let ef_final = ef_out.records.last().unwrap().objective;
        if ef_final < sign_final {
            ef_better += 1;
        }
        sign_bits.push(bits_to_reach(&sign_out, sign_final));
        ef_bits.push(bits_to_reach(&ef_out, sign_final));
    }
    assert!(
        ef_better >= 9,
        "error-feedback run won only {ef_better}/10 seeds"
    );
    let sign_median = median_f64(sign_bits);
    let ef_median = median_f64(ef_bits);
    assert!(
        ef_median < sign_median,
        "median uplink bits to target: error-feedback {ef_median} vs sign {sign_median}"
    );
    println!(
        "criterion 9 (heterogeneous ordering: error-feedback better on {ef_better}/10 seeds, median bits {ef_median:.3e} vs {sign_median:.3e}): PASS"
    );
}

/// Criterion 10: the error-feedback algorithm configured to its degenerate
/// case (one local step, unit outer budget, full participation, majority
/// vote, unit local rate) reproduces the first algorithm's iterates bitwise
/// for 100 rounds.
#[test]
fn criterion_10_algorithm_equivalence() {
    let seed = repeat_seed(ACCEPTANCE_SEED, 10);
    let problem = ProblemConfig::Quadratic {
        dim: 20,
        workers: 10,
        offset_spread: 1.0,
        initial_value: 0.5,
    }
    .build(seed)
    .unwrap();
    let rounds = 100;
    let budget = 0.05;
    let eta = 0.01;

    let mut alg1_config = base_config(Algorithm::Alg1, rounds, 10, seed);
    alg1_config.compressor = Some(CompressorConfig::Sparsign {
        budget: CompressionBudget::Uniform(budget),
    });
    alg1_config.eta = Some(eta);
    alg1_config.record_iterates = true;
    let alg1_out = run(&problem, &alg1_config).unwrap();

    let mut alg2_config = base_config(Algorithm::Alg2, rounds, 10, seed);
    alg2_config.local_budget = Some(budget);
    alg2_config.global_budget = Some(1.0);
    alg2_config.local_steps = 1;
    alg2_config.eta = Some(eta);
    alg2_config.eta_local = Some(1.0);
    alg2_config.server_rule = Some(AggregationRule::MajorityVoteSign);
    alg2_config.record_iterates = true;
    let alg2_out = run(&problem, &alg2_config).unwrap();

    let iters1 = alg1_out.iterates.unwrap();
    let iters2 = alg2_out.iterates.unwrap();
    assert_eq!(iters1.len(), rounds);
    for t in 0..rounds {
        assert_eq!(
            iters1[t].values(),
            iters2[t].values(),
            "iterates diverged at round {t}"
        );
    }
    println!(
        "criterion 10 (degenerate equivalence: bitwise identical iterates for 100 rounds): PASS"
    );
}
