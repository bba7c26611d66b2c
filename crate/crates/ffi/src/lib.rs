//! C ABI for the sparsign simulator.
//!
//! Conventions: every fallible function returns a status code
//! (`SPARSIGN_OK` = 0) and writes results through out-pointers. Experiments
//! are held behind an opaque handle created from JSON and freed explicitly.
//! On failure, a thread-local message is retrievable via
//! [`sparsign_last_error_message`] until the next failing call on the same
//! thread. The canonical header lives at `include/sparsign.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::PathBuf;

use libc::{c_char, c_double, c_int};

use sparsign::experiment::{run_experiment, ExperimentOptions, ExperimentOutcome, ExperimentSpec};
use sparsign::Error;

pub const SPARSIGN_OK: c_int = 0;
pub const SPARSIGN_ERR_IO: c_int = 1;
pub const SPARSIGN_ERR_PARSE: c_int = 2;
pub const SPARSIGN_ERR_CONFIG: c_int = 3;
pub const SPARSIGN_ERR_NUMERIC: c_int = 4;
pub const SPARSIGN_ERR_ARGUMENT: c_int = 5;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(err: &Error) -> c_int {
    set_error(&err.to_string());
    err.exit_code() as c_int
}

fn fail_argument(message: &str) -> c_int {
    set_error(message);
    SPARSIGN_ERR_ARGUMENT
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn sparsign_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        return Err(fail_argument(&format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail_argument(&format!("{what} is not valid UTF-8")))
}

/// Average Golomb bits per nonzero index at sparsity ratio `p` in (0, 1).
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn sparsign_golomb_bits_per_index(p: c_double, out: *mut c_double) -> c_int {
    if out.is_null() {
        return fail_argument("out is null");
    }
    match sparsign::coding::golomb_bits_per_index(p) {
        Ok(bits) => {
            *out = bits;
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Upper bound on the wrong-aggregation probability of `workers` independent
/// ternary votes with mean opposing/matching probabilities `p_bar`/`q_bar`
/// (requires `q_bar > p_bar`).
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn sparsign_wrong_aggregation_bound(
    p_bar: c_double,
    q_bar: c_double,
    workers: usize,
    out: *mut c_double,
) -> c_int {
    if out.is_null() {
        return fail_argument("out is null");
    }
    match sparsign::analysis::wrong_aggregation_bound(p_bar, q_bar, workers) {
        Ok(bound) => {
            *out = bound;
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Exact wrong-aggregation probability by enumeration of up to 12 workers;
/// `p` and `q` are parallel arrays of per-worker opposing/matching
/// probabilities.
///
/// # Safety
/// `p` and `q` must point to `workers` readable doubles and `out` to a
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn sparsign_exact_wrong_aggregation_prob(
    p: *const c_double,
    q: *const c_double,
    workers: usize,
    out: *mut c_double,
) -> c_int {
    if p.is_null() || q.is_null() || out.is_null() {
        return fail_argument("p, q and out must be non-null");
    }
    let ps = std::slice::from_raw_parts(p, workers);
    let qs = std::slice::from_raw_parts(q, workers);
    let outcomes: Vec<(f64, f64)> = ps.iter().copied().zip(qs.iter().copied()).collect();
    let result = sparsign::analysis::WorkerOutcomeDist::new(outcomes)
        .and_then(|dist| sparsign::analysis::exact_wrong_aggregation_prob(&dist));
    match result {
        Ok(prob) => {
            *out = prob;
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Convergence-rate bound of the error-feedback algorithm with local steps.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn sparsign_local_update_convergence_bound(
    f0_minus_fstar: c_double,
    smoothness: c_double,
    residual_beta: c_double,
    budget: c_double,
    local_steps: usize,
    dim: usize,
    rounds: usize,
    out: *mut c_double,
) -> c_int {
    if out.is_null() {
        return fail_argument("out is null");
    }
    match sparsign::analysis::local_update_convergence_bound(
        f0_minus_fstar,
        smoothness,
        residual_beta,
        budget,
        local_steps,
        dim,
        rounds,
    ) {
        Ok(bound) => {
            *out = bound;
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Opaque experiment handle: a validated spec plus, after
/// [`sparsign_experiment_run`], its results.
pub struct SparsignExperiment {
    spec: ExperimentSpec,
    outcome: Option<ExperimentOutcome>,
}

/// Parses and validates an experiment spec from JSON.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a writable handle
/// slot. A returned handle must be released with
/// [`sparsign_experiment_free`].
#[no_mangle]
pub unsafe extern "C" fn sparsign_experiment_new(
    spec_json: *const c_char,
    out: *mut *mut SparsignExperiment,
) -> c_int {
    if out.is_null() {
        return fail_argument("out is null");
    }
    let text = match read_str(spec_json, "spec_json") {
        Ok(t) => t,
        Err(code) => return code,
    };
    match ExperimentSpec::from_json(text) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(SparsignExperiment {
                spec,
                outcome: None,
            }));
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Loads a spec from a JSON file; otherwise like [`sparsign_experiment_new`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn sparsign_experiment_from_file(
    path: *const c_char,
    out: *mut *mut SparsignExperiment,
) -> c_int {
    if out.is_null() {
        return fail_argument("out is null");
    }
    let path = match read_str(path, "path") {
        Ok(p) => p,
        Err(code) => return code,
    };
    match ExperimentSpec::load(std::path::Path::new(path)) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(SparsignExperiment {
                spec,
                outcome: None,
            }));
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Runs every repeat and writes the CSV and summary files.
///
/// `out_dir` overrides the spec's output directory when non-null;
/// `seed_override` replaces the master seed when `use_seed_override` is
/// nonzero. Results stay attached to the handle for the accessors below.
///
/// # Safety
/// `handle` must come from a constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sparsign_experiment_run(
    handle: *mut SparsignExperiment,
    out_dir: *const c_char,
    use_seed_override: c_int,
    seed_override: u64,
) -> c_int {
    let Some(experiment) = handle.as_mut() else {
        return fail_argument("handle is null");
    };
    let out_override = if out_dir.is_null() {
        None
    } else {
        match read_str(out_dir, "out_dir") {
            Ok(d) => Some(PathBuf::from(d)),
            Err(code) => return code,
        }
    };
    let options = ExperimentOptions {
        seed_override: (use_seed_override != 0).then_some(seed_override),
        out_override,
    };
    match run_experiment(&experiment.spec, &options) {
        Ok(outcome) => {
            experiment.outcome = Some(outcome);
            SPARSIGN_OK
        }
        Err(e) => fail(&e),
    }
}

/// Number of completed repeats (0 before a successful run).
///
/// # Safety
/// `handle` must come from a constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sparsign_experiment_num_repeats(
    handle: *const SparsignExperiment,
) -> usize {
    handle
        .as_ref()
        .and_then(|e| e.outcome.as_ref())
        .map_or(0, |o| o.repeats.len())
}

/// Per-repeat scalar results of a completed run. Any out-pointer may be
/// null to skip that field. `mean_wrong_agg` is NaN when the run never had
/// a nonzero true gradient.
///
/// # Safety
/// `handle` must come from a constructor; non-null out-pointers must be
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sparsign_experiment_repeat_result(
    handle: *const SparsignExperiment,
    repeat: usize,
    initial_objective: *mut c_double,
    final_objective: *mut c_double,
    mean_wrong_agg: *mut c_double,
    total_uplink_bits: *mut c_double,
) -> c_int {
    let Some(outcome) = handle.as_ref().and_then(|e| e.outcome.as_ref()) else {
        return fail_argument("experiment has not been run");
    };
    let Some(summary) = outcome.repeats.get(repeat) else {
        return fail_argument("repeat index out of range");
    };
    if !initial_objective.is_null() {
        *initial_objective = summary.initial_objective;
    }
    if !final_objective.is_null() {
        *final_objective = summary.final_objective;
    }
    if !mean_wrong_agg.is_null() {
        *mean_wrong_agg = summary.mean_wrong_agg.unwrap_or(f64::NAN);
    }
    if !total_uplink_bits.is_null() {
        *total_uplink_bits = summary.total_uplink_bits;
    }
    SPARSIGN_OK
}

/// Releases a handle. Null is accepted and ignored.
///
/// # Safety
/// `handle` must come from a constructor and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sparsign_experiment_free(handle: *mut SparsignExperiment) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
