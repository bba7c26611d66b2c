/*
 * C interface for the sparsign simulator.
 *
 * Every fallible function returns a status code (SPARSIGN_OK on success)
 * and writes results through out-pointers. On failure, a thread-local
 * message is available from sparsign_last_error_message() until the next
 * failing call on the same thread.
 *
 * Kept in sync by hand with crates/ffi/src/lib.rs; the FFI test suite
 * checks that every exported symbol is declared here.
 */

#ifndef SPARSIGN_H
#define SPARSIGN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    SPARSIGN_OK = 0,
    SPARSIGN_ERR_IO = 1,
    SPARSIGN_ERR_PARSE = 2,
    SPARSIGN_ERR_CONFIG = 3,
    SPARSIGN_ERR_NUMERIC = 4,
    SPARSIGN_ERR_ARGUMENT = 5,
};

/* Opaque experiment handle. */
typedef struct SparsignExperiment SparsignExperiment;

/* Message for the most recent failure on this thread; do not free. */
const char *sparsign_last_error_message(void);

/* Average Golomb bits per nonzero index at sparsity ratio p in (0, 1). */
int32_t sparsign_golomb_bits_per_index(double p, double *out);

/* Upper bound on the wrong-aggregation probability of `workers`
 * independent ternary votes; requires q_bar > p_bar. */
int32_t sparsign_wrong_aggregation_bound(double p_bar,
                                         double q_bar,
                                         size_t workers,
                                         double *out);

/* Exact wrong-aggregation probability by enumeration (workers <= 12);
 * p and q are parallel per-worker probability arrays. */
int32_t sparsign_exact_wrong_aggregation_prob(const double *p,
                                              const double *q,
                                              size_t workers,
                                              double *out);

/* Convergence-rate bound of the error-feedback algorithm with local
 * steps. */
int32_t sparsign_local_update_convergence_bound(double f0_minus_fstar,
                                                double smoothness,
                                                double residual_beta,
                                                double budget,
                                                size_t local_steps,
                                                size_t dim,
                                                size_t rounds,
                                                double *out);

/* Parses and validates an experiment spec from JSON text. A returned
 * handle must be freed with sparsign_experiment_free. */
int32_t sparsign_experiment_new(const char *spec_json,
                                SparsignExperiment **out);

/* Loads an experiment spec from a JSON file. */
int32_t sparsign_experiment_from_file(const char *path,
                                      SparsignExperiment **out);

/* Runs every repeat and writes CSV + summary files. out_dir may be NULL
 * (use the spec's output path); the seed override applies when
 * use_seed_override is nonzero. */
int32_t sparsign_experiment_run(SparsignExperiment *handle,
                                const char *out_dir,
                                int32_t use_seed_override,
                                uint64_t seed_override);

/* Number of completed repeats (0 before a successful run). */
size_t sparsign_experiment_num_repeats(const SparsignExperiment *handle);

/* Per-repeat scalar results; any out-pointer may be NULL to skip that
 * field. mean_wrong_agg is NaN when undefined for the whole run. */
int32_t sparsign_experiment_repeat_result(const SparsignExperiment *handle,
                                          size_t repeat,
                                          double *initial_objective,
                                          double *final_objective,
                                          double *mean_wrong_agg,
                                          double *total_uplink_bits);

/* Releases a handle; NULL is ignored. */
void sparsign_experiment_free(SparsignExperiment *handle);

#ifdef __cplusplus
}
#endif

#endif /* SPARSIGN_H */
