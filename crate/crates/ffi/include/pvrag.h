#ifndef PVRAG_H
#define PVRAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum PvragStatus {
  PVRAG_STATUS_OK = 0,
  PVRAG_STATUS_NULL_POINTER = 1,
  PVRAG_STATUS_INVALID_ARGUMENT = 2,
  PVRAG_STATUS_IO = 3,
  PVRAG_STATUS_FORMAT = 4,
  PVRAG_STATUS_NOT_FOUND = 5,
  PVRAG_STATUS_NON_CONVERGENCE = 6,
  PVRAG_STATUS_INTERNAL = 99,
} PvragStatus;

/**
 * Opaque reference index.
 */
typedef struct PvragIndex PvragIndex;

/**
 * Opaque power network.
 */
typedef struct PvragNetwork PvragNetwork;

/**
 * One search hit: entry position plus distance and similarity.
 */
typedef struct PvragHit {
  size_t entry;
  double distance;
  double similarity;
} PvragHit;

/**
 * Parsed descriptor. `quantity` is 0..=3 for (0,1], (1,5], (5,10],
 * (10,inf) and -1 for NA. `location` is 0..=8 for top, bottom, left,
 * right, center, top-left, top-right, bottom-left, bottom-right and -1
 * for NA.
 */
typedef struct PvragDescriptor {
  bool presence;
  int32_t quantity;
  int32_t location;
} PvragDescriptor;

/**
 * Solution summary of [`pvrag_network_solve`].
 */
typedef struct PvragPowerFlow {
  double slack_p_mw;
  double slack_q_mvar;
  double losses_mw;
  double max_mismatch;
  size_t iterations;
} PvragPowerFlow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pvrag_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pvrag_version(void);

/**
 * Loads a PVIX index file.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum PvragStatus pvrag_index_load(const char *path, struct PvragIndex **out);

/**
 * # Safety
 * `index` must be null or a handle from `pvrag_index_load`, not yet freed.
 */
void pvrag_index_free(struct PvragIndex *index);

/**
 * Number of entries; 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t pvrag_index_len(const struct PvragIndex *index);

/**
 * Embedding dimension; 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t pvrag_index_dim(const struct PvragIndex *index);

/**
 * Id of entry `entry`, or null when out of range. Valid while the handle lives.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
const char *pvrag_index_entry_id(const struct PvragIndex *index, size_t entry);

/**
 * City of entry `entry`, or null when out of range. Valid while the handle lives.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
const char *pvrag_index_entry_city(const struct PvragIndex *index, size_t entry);

/**
 * Exact top-`k` search. `query` holds `dim` floats and is normalized
 * internally. `exclude_city` may be null. Writes at most `k` hits, ordered
 * by ascending distance then id, into `hits` (capacity `k`) and their count
 * into `count`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `index` must be live.
 */
enum PvragStatus pvrag_index_search(const struct PvragIndex *index,
                                    const float *query,
                                    size_t dim,
                                    size_t k,
                                    const char *exclude_city,
                                    struct PvragHit *hits,
                                    size_t *count);

/**
 * Parses raw model output into a validated descriptor.
 *
 * # Safety
 * `raw` must be a valid C string and `out` a valid pointer.
 */
enum PvragStatus pvrag_parse_descriptor(const char *raw, struct PvragDescriptor *out);

/**
 * Representative panel count of quantity code 0..=3; negative for other codes.
 */
double pvrag_quantity_panels(int32_t quantity);

/**
 * Loads a MATPOWER-format case file.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum PvragStatus pvrag_network_load(const char *path, struct PvragNetwork **out);

/**
 * The bundled 30-bus test case.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PvragStatus pvrag_network_case30(struct PvragNetwork **out);

/**
 * # Safety
 * `net` must be null or a live handle, not yet freed.
 */
void pvrag_network_free(struct PvragNetwork *net);

/**
 * Number of buses; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t pvrag_network_bus_count(const struct PvragNetwork *net);

/**
 * External id of the bus at `position`, or 0 when out of range.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
uint32_t pvrag_network_bus_id(const struct PvragNetwork *net, size_t position);

/**
 * Newton–Raphson power flow from a flat start.
 *
 * `p_mw`/`q_mvar` give per-bus demand in bus order (length `n`); pass null
 * for both to use the case's nominal demand. `tol <= 0` and `max_iter == 0`
 * select the defaults (1e-8 pu, 20). `v_mag`/`v_ang` receive `n` values each
 * and may be null.
 *
 * # Safety
 * Non-null pointers must be valid for `n` elements; `net` must be live.
 */
enum PvragStatus pvrag_network_solve(const struct PvragNetwork *net,
                                     const double *p_mw,
                                     const double *q_mvar,
                                     size_t n,
                                     double tol,
                                     size_t max_iter,
                                     double *v_mag,
                                     double *v_ang,
                                     struct PvragPowerFlow *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVRAG_H */
