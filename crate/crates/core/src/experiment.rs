//! Experiment specs, the repeat runner, and file output.
//!
//! A spec is a versioned JSON document selecting a problem, a run
//! configuration, and a repeat count. Unknown fields are rejected so typos
//! fail loudly. Each repeat derives its own seed from the master seed,
//! rebuilds the problem from that seed, and writes one CSV; the summary is
//! written last. Identical specs produce byte-identical output.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{exact_wrong_aggregation_prob, wrong_aggregation_bound, WorkerOutcomeDist};
use crate::error::{Error, Result};
use crate::objectives::{
    sample_scales, ClassificationProblem, Problem, QuadraticProblem, ScaledRosenbrock,
};
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::simulation::{run, RoundRecord, RunConfig, RunOutput};
use crate::vector::DenseVector;

pub const SPEC_VERSION: u32 = 1;

/// CSV column header shared by every experiment output.
pub const CSV_HEADER: &str =
    "round,objective,wrong_agg_fraction,grad_l1,uplink_bits,downlink_bits,kappa_mean";

fn default_negative_mass() -> f64 {
    0.005
}

fn default_rosenbrock_start() -> f64 {
    -2.0
}

fn default_separation() -> f64 {
    1.0
}

fn default_cluster_stddev() -> f64 {
    1.5
}

fn default_repeats() -> usize {
    1
}

/// Problem selection and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Rosenbrock objective scaled per worker; `num_negative` workers hold a
    /// negated objective. `negative_mass` is the combined magnitude of the
    /// negative scales (the positive scales total `1 + negative_mass`).
    RosenbrockScaled {
        dim: usize,
        workers: usize,
        num_negative: usize,
        #[serde(default = "default_negative_mass")]
        negative_mass: f64,
        /// Every coordinate of the initial iterate.
        #[serde(default = "default_rosenbrock_start")]
        initial_value: f64,
    },
    Quadratic {
        dim: usize,
        workers: usize,
        #[serde(default)]
        offset_spread: f64,
        #[serde(default)]
        initial_value: f64,
    },
    SyntheticClassification {
        classes: usize,
        features: usize,
        workers: usize,
        samples_per_worker: usize,
        /// Dirichlet concentration; smaller means more heterogeneous labels.
        alpha: f64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_cluster_stddev")]
        cluster_stddev: f64,
    },
}

impl ProblemConfig {
    /// Builds the problem instance for one repeat. All problem randomness is
    /// derived from `master_seed` only, so runs that differ in run
    /// parameters share the identical problem draw.
    pub fn build(&self, master_seed: u64) -> Result<Problem> {
        match *self {
            ProblemConfig::RosenbrockScaled {
                dim,
                workers,
                num_negative,
                negative_mass,
                initial_value,
            } => {
                let mut rng = RngStream::new(
                    master_seed,
                    StreamId::new(0, 0, StreamPurpose::ProblemScales, 0),
                );
                let scales = sample_scales(workers, num_negative, negative_mass, &mut rng)?;
                let initial = DenseVector::new(vec![initial_value; dim])?;
                Ok(Problem::RosenbrockScaled(ScaledRosenbrock::new(
                    scales, initial,
                )?))
            }
            ProblemConfig::Quadratic {
                dim,
                workers,
                offset_spread,
                initial_value,
            } => {
                let mut rng = RngStream::new(
                    master_seed,
                    StreamId::new(0, 0, StreamPurpose::ProblemScales, 0),
                );
                let initial = DenseVector::new(vec![initial_value; dim])?;
                Ok(Problem::Quadratic(QuadraticProblem::sampled(
                    dim,
                    workers,
                    offset_spread,
                    initial,
                    &mut rng,
                )?))
            }
            ProblemConfig::SyntheticClassification {
                classes,
                features,
                workers,
                samples_per_worker,
                alpha,
                separation,
                cluster_stddev,
            } => Ok(Problem::Classification(ClassificationProblem::generate(
                classes,
                features,
                workers,
                samples_per_worker,
                alpha,
                separation,
                cluster_stddev,
                master_seed,
            )?)),
        }
    }
}

/// A complete experiment: problem, run configuration, repeat count, output
/// location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub name: String,
    pub problem: ProblemConfig,
    pub run: RunConfig,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub output_path: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec version {} (expected {SPEC_VERSION})",
                self.version
            )));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "experiment name must be non-empty [A-Za-z0-9_-], got {:?}",
                self.name
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Overrides supplied on the command line.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOptions {
    pub seed_override: Option<u64>,
    pub out_override: Option<PathBuf>,
}

/// Per-repeat results kept for the summary.
#[derive(Clone, Debug)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub seed: u64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub mean_wrong_agg: Option<f64>,
    pub total_uplink_bits: f64,
    pub total_downlink_bits: f64,
    /// First round whose post-update objective reached 10% of the initial
    /// objective, when it happened.
    pub rounds_to_tenth: Option<usize>,
    pub recurrence_max_dev: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub csv_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub repeats: Vec<RepeatSummary>,
}

/// Derives the seed for one repeat from the experiment master seed.
pub fn repeat_seed(master_seed: u64, repeat: usize) -> u64 {
    RngStream::derive_u64(
        master_seed,
        StreamId::new(repeat as u64, 0, StreamPurpose::RepeatSeed, 0),
    )
}

fn format_optional(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Renders one run as CSV text (stable schema, shortest round-trip floats).
pub fn render_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.round,
            r.objective,
            format_optional(r.wrong_agg_fraction),
            r.grad_l1,
            r.uplink_bits,
            r.downlink_bits,
            format_optional(r.kappa_mean),
        ));
    }
    out
}

fn summarize(repeat: usize, seed: u64, output: &RunOutput) -> RepeatSummary {
    let finals = output.records.last().expect("at least one round");
    let wrongs: Vec<f64> = output
        .records
        .iter()
        .filter_map(|r| r.wrong_agg_fraction)
        .collect();
    let mean_wrong_agg = if wrongs.is_empty() {
        None
    } else {
        Some(wrongs.iter().sum::<f64>() / wrongs.len() as f64)
    };
    let threshold = 0.1 * output.initial_objective;
    let rounds_to_tenth = output
        .records
        .iter()
        .find(|r| r.objective <= threshold)
        .map(|r| r.round);
    RepeatSummary {
        repeat,
        seed,
        initial_objective: output.initial_objective,
        final_objective: finals.objective,
        mean_wrong_agg,
        total_uplink_bits: output.records.iter().map(|r| r.uplink_bits).sum(),
        total_downlink_bits: output.records.iter().map(|r| r.downlink_bits).sum(),
        rounds_to_tenth,
        recurrence_max_dev: output.recurrence_max_dev,
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn render_summary(spec: &ExperimentSpec, master_seed: u64, repeats: &[RepeatSummary]) -> String {
    let mut out = String::new();
    out.push_str(&format!("name={}\n", spec.name));
    out.push_str(&format!("version={}\n", spec.version));
    out.push_str(&format!("master_seed={master_seed}\n"));
    out.push_str(&format!("repeats={}\n", repeats.len()));
    out.push_str(&format!("rounds={}\n", spec.run.rounds));
    for r in repeats {
        let prefix = format!("repeat{}", r.repeat);
        out.push_str(&format!("{prefix}.seed={}\n", r.seed));
        out.push_str(&format!(
            "{prefix}.initial_objective={}\n",
            r.initial_objective
        ));
        out.push_str(&format!("{prefix}.final_objective={}\n", r.final_objective));
        out.push_str(&format!(
            "{prefix}.mean_wrong_agg_fraction={}\n",
            format_optional(r.mean_wrong_agg)
        ));
        out.push_str(&format!(
            "{prefix}.total_uplink_bits={}\n",
            r.total_uplink_bits
        ));
        out.push_str(&format!(
            "{prefix}.total_downlink_bits={}\n",
            r.total_downlink_bits
        ));
        out.push_str(&format!(
            "{prefix}.rounds_to_tenth_objective={}\n",
            r.rounds_to_tenth.map(|t| t.to_string()).unwrap_or_default()
        ));
        if let Some(dev) = r.recurrence_max_dev {
            out.push_str(&format!("{prefix}.recurrence_max_dev={dev}\n"));
        }
    }
    let finals: Vec<f64> = repeats.iter().map(|r| r.final_objective).collect();
    out.push_str(&format!(
        "aggregate.final_objective.mean={}\n",
        finals.iter().sum::<f64>() / finals.len() as f64
    ));
    out.push_str(&format!(
        "aggregate.final_objective.median={}\n",
        median(finals)
    ));
    let wrongs: Vec<f64> = repeats.iter().filter_map(|r| r.mean_wrong_agg).collect();
    if !wrongs.is_empty() {
        out.push_str(&format!(
            "aggregate.mean_wrong_agg_fraction.mean={}\n",
            wrongs.iter().sum::<f64>() / wrongs.len() as f64
        ));
    }
    out.push_str(&format!(
        "aggregate.total_uplink_bits.mean={}\n",
        repeats.iter().map(|r| r.total_uplink_bits).sum::<f64>() / repeats.len() as f64
    ));
    out
}

/// Runs every repeat (in parallel), writes one CSV per repeat plus the
/// summary, and returns what was written.
pub fn run_experiment(
    spec: &ExperimentSpec,
    options: &ExperimentOptions,
) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let master_seed = options.seed_override.unwrap_or(spec.run.master_seed);
    let out_dir = options
        .out_override
        .clone()
        .unwrap_or_else(|| spec.output_path.clone());
    std::fs::create_dir_all(&out_dir)?;

    let mut runs: Vec<(usize, u64, RunOutput)> = (0..spec.repeats)
        .into_par_iter()
        .map(|k| {
            let seed = repeat_seed(master_seed, k);
            let problem = spec.problem.build(seed)?;
            let mut run_config = spec.run.clone();
            run_config.master_seed = seed;
            let output = run(&problem, &run_config)?;
            Ok((k, seed, output))
        })
        .collect::<Result<_>>()?;
    runs.sort_by_key(|(k, _, _)| *k);

    let mut csv_paths = Vec::with_capacity(spec.repeats);
    let mut summaries = Vec::with_capacity(spec.repeats);
    for (k, seed, output) in &runs {
        let path = out_dir.join(format!("{}_repeat{k}.csv", spec.name));
        let mut file = std::fs::File::create(&path)?;
        file.write_all(render_csv(&output.records).as_bytes())?;
        csv_paths.push(path);
        summaries.push(summarize(*k, *seed, output));
    }
    let summary_path = out_dir.join(format!("{}_summary.txt", spec.name));
    std::fs::write(&summary_path, render_summary(spec, master_seed, &summaries))?;
    Ok(ExperimentOutcome {
        csv_paths,
        summary_path,
        repeats: summaries,
    })
}

/// Bound-verification spec: a `(p_bar, q_bar, M)` sweep with homogeneous
/// workers, explicit per-worker distributions, or both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckSpec {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Explicit distributions: one list of `[p_m, q_m]` pairs per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributions: Option<Vec<Vec<(f64, f64)>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub p_values: Vec<f64>,
    /// Each row uses `q = p + q_offset`.
    pub q_offset: f64,
    pub m_values: Vec<usize>,
}

impl BoundCheckSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: BoundCheckSpec = serde_json::from_str(text)?;
        if spec.version != SPEC_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec version {} (expected {SPEC_VERSION})",
                spec.version
            )));
        }
        if spec.sweep.is_none() && spec.distributions.is_none() {
            return Err(Error::Config(
                "need a sweep or explicit distributions".into(),
            ));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One verified configuration: the exact enumerated probability next to the
/// closed-form bound. `bound`/`slack` are absent when the bound hypothesis
/// `q_bar > p_bar` fails.
#[derive(Clone, Debug)]
pub struct BoundCheckRow {
    pub p_bar: f64,
    pub q_bar: f64,
    pub num_workers: usize,
    pub exact: f64,
    pub bound: Option<f64>,
    pub slack: Option<f64>,
}

/// Evaluates every configuration; the flag is true when no verified row has
/// negative slack.
pub fn bound_check(spec: &BoundCheckSpec) -> Result<(Vec<BoundCheckRow>, bool)> {
    let mut dists: Vec<WorkerOutcomeDist> = Vec::new();
    if let Some(sweep) = &spec.sweep {
        for &p in &sweep.p_values {
            let q = p + sweep.q_offset;
            for &m in &sweep.m_values {
                dists.push(WorkerOutcomeDist::new(vec![(p, q); m])?);
            }
        }
    }
    if let Some(explicit) = &spec.distributions {
        for outcomes in explicit {
            dists.push(WorkerOutcomeDist::new(outcomes.clone())?);
        }
    }

    let mut rows = Vec::with_capacity(dists.len());
    let mut all_ok = true;
    for dist in &dists {
        let exact = exact_wrong_aggregation_prob(dist)?;
        let (p_bar, q_bar) = (dist.p_bar(), dist.q_bar());
        let bound = wrong_aggregation_bound(p_bar, q_bar, dist.num_workers()).ok();
        let slack = bound.map(|b| b - exact);
        if let Some(s) = slack {
            if s < 0.0 {
                all_ok = false;
            }
        }
        rows.push(BoundCheckRow {
            p_bar,
            q_bar,
            num_workers: dist.num_workers(),
            exact,
            bound,
            slack,
        });
    }
    Ok((rows, all_ok))
}

/// Plain-text table for the CLI.
pub fn render_bound_report(rows: &[BoundCheckRow]) -> String {
    let mut out = String::from("p_bar      q_bar      M   exact        bound        slack\n");
    for r in rows {
        match (r.bound, r.slack) {
            (Some(b), Some(s)) => out.push_str(&format!(
                "{:<10.6} {:<10.6} {:<3} {:<12.9} {:<12.9} {:.9}\n",
                r.p_bar, r.q_bar, r.num_workers, r.exact, b, s
            )),
            _ => out.push_str(&format!(
                "{:<10.6} {:<10.6} {:<3} {:<12.9} hypothesis violated (q_bar <= p_bar)\n",
                r.p_bar, r.q_bar, r.num_workers, r.exact
            )),
        }
    }
    out
}
