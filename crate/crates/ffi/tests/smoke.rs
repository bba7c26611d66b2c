//! Exercises the C ABI through the exported functions.

use std::ffi::{CStr, CString};
use std::ptr;

use sparsign_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sparsign_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn golomb_bits() {
    let mut out = 0.0;
    let status = unsafe { sparsign_golomb_bits_per_index(0.5, &mut out) };
    assert_eq!(status, SPARSIGN_OK);
    assert!((out - 7.0 / 3.0).abs() < 1e-12);

    let status = unsafe { sparsign_golomb_bits_per_index(1.0, &mut out) };
    assert_eq!(status, SPARSIGN_ERR_CONFIG);
    assert!(last_error().contains("sparsity ratio"));
}

#[test]
fn aggregation_bound_and_oracle() {
    let mut bound = 0.0;
    let status = unsafe { sparsign_wrong_aggregation_bound(0.1, 0.4, 2, &mut bound) };
    assert_eq!(status, SPARSIGN_OK);
    assert!((bound - 0.81).abs() < 1e-12);

    let status = unsafe { sparsign_wrong_aggregation_bound(0.4, 0.4, 2, &mut bound) };
    assert_eq!(status, SPARSIGN_ERR_CONFIG);

    let p = [0.2, 0.2, 0.2];
    let q = [0.6, 0.6, 0.6];
    let mut exact = 0.0;
    let status =
        unsafe { sparsign_exact_wrong_aggregation_prob(p.as_ptr(), q.as_ptr(), 3, &mut exact) };
    assert_eq!(status, SPARSIGN_OK);
    assert!((exact - 0.28).abs() < 1e-12);
    assert!(exact <= bound_for(0.2, 0.6, 3));

    let status =
        unsafe { sparsign_exact_wrong_aggregation_prob(ptr::null(), q.as_ptr(), 3, &mut exact) };
    assert_eq!(status, SPARSIGN_ERR_ARGUMENT);
}

fn bound_for(p: f64, q: f64, m: usize) -> f64 {
    let mut out = 0.0;
    let status = unsafe { sparsign_wrong_aggregation_bound(p, q, m, &mut out) };
    assert_eq!(status, SPARSIGN_OK);
    out
}

#[test]
fn convergence_bound() {
    let mut out = 0.0;
    let status = unsafe {
        sparsign_local_update_convergence_bound(5.0, 2.0, 1.5, 0.5, 4, 100, 1000, &mut out)
    };
    assert_eq!(status, SPARSIGN_OK);
    assert!(out > 0.0);
    let status = unsafe {
        sparsign_local_update_convergence_bound(-1.0, 2.0, 1.5, 0.5, 4, 100, 1000, &mut out)
    };
    assert_eq!(status, SPARSIGN_ERR_CONFIG);
}

#[test]
fn experiment_lifecycle() {
    let out_dir = tempfile::tempdir().unwrap();
    let spec = format!(
        r#"{{
  "version": 1,
  "name": "ffi_quadratic",
  "problem": {{"type": "quadratic", "dim": 2, "workers": 3, "offset_spread": 1.0, "initial_value": 1.0}},
  "run": {{
    "algorithm": "alg1",
    "rounds": 4,
    "sample_size": 3,
    "compressor": {{"kind": "sign"}},
    "eta": 0.1,
    "master_seed": 11
  }},
  "repeats": 2,
  "output_path": {:?}
}}"#,
        out_dir.path()
    );
    let spec_c = CString::new(spec).unwrap();

    let mut handle: *mut SparsignExperiment = ptr::null_mut();
    let status = unsafe { sparsign_experiment_new(spec_c.as_ptr(), &mut handle) };
    assert_eq!(status, SPARSIGN_OK);
    assert!(!handle.is_null());
    assert_eq!(unsafe { sparsign_experiment_num_repeats(handle) }, 0);

    let status = unsafe { sparsign_experiment_run(handle, ptr::null(), 0, 0) };
    assert_eq!(status, SPARSIGN_OK, "{}", last_error());
    assert_eq!(unsafe { sparsign_experiment_num_repeats(handle) }, 2);

    let mut initial = 0.0;
    let mut final_obj = 0.0;
    let mut wrong = 0.0;
    let mut bits = 0.0;
    let status = unsafe {
        sparsign_experiment_repeat_result(
            handle,
            0,
            &mut initial,
            &mut final_obj,
            &mut wrong,
            &mut bits,
        )
    };
    assert_eq!(status, SPARSIGN_OK);
    assert!(final_obj < initial);
    assert!((0.0..=1.0).contains(&wrong));
    assert_eq!(bits, 4.0 * 3.0 * 2.0, "4 rounds x 3 workers x d sign bits");

    let status = unsafe {
        sparsign_experiment_repeat_result(
            handle,
            9,
            ptr::null_mut(),
            ptr::null_mut(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SPARSIGN_ERR_ARGUMENT);

    unsafe { sparsign_experiment_free(handle) };
    assert!(out_dir.path().join("ffi_quadratic_repeat1.csv").exists());
    assert!(out_dir.path().join("ffi_quadratic_summary.txt").exists());
}

#[test]
fn parse_errors_are_reported() {
    let bad = CString::new("{\"version\": 2}").unwrap();
    let mut handle: *mut SparsignExperiment = ptr::null_mut();
    let status = unsafe { sparsign_experiment_new(bad.as_ptr(), &mut handle) };
    assert!(status == SPARSIGN_ERR_PARSE || status == SPARSIGN_ERR_CONFIG);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());

    let status = unsafe { sparsign_experiment_new(ptr::null(), &mut handle) };
    assert_eq!(status, SPARSIGN_ERR_ARGUMENT);
}

/// Every exported symbol is declared in the hand-maintained header.
#[test]
fn header_covers_exported_surface() {
    let header = include_str!("../include/sparsign.h");
    for symbol in [
        "sparsign_last_error_message",
        "sparsign_golomb_bits_per_index",
        "sparsign_wrong_aggregation_bound",
        "sparsign_exact_wrong_aggregation_prob",
        "sparsign_local_update_convergence_bound",
        "sparsign_experiment_new",
        "sparsign_experiment_from_file",
        "sparsign_experiment_run",
        "sparsign_experiment_num_repeats",
        "sparsign_experiment_repeat_result",
        "sparsign_experiment_free",
    ] {
        assert!(header.contains(symbol), "header missing {symbol}");
    }
}
