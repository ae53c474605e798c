#ifndef DSG_H
#define DSG_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum DsgStatus {
  DSG_STATUS_OK = 0,
  DSG_STATUS_NULL_POINTER = 1,
  DSG_STATUS_INVALID_ARGUMENT = 2,
  DSG_STATUS_UNKNOWN_NODE = 3,
  DSG_STATUS_CONFIG = 4,
  DSG_STATUS_PARSE = 5,
  DSG_STATUS_IO = 6,
  DSG_STATUS_INVALID_TOPOLOGY = 7,
  DSG_STATUS_PANIC = 8,
} DsgStatus;

/**
 * A running simulation.
 */
typedef struct DsgSimulator DsgSimulator;

/**
 * A detached copy of a skip graph.
 */
typedef struct DsgTopology DsgTopology;

/**
 * Measurements for one executed request.
 */
typedef struct DsgRequestResult {
  /**
   * Intermediate nodes on the routing path.
   */
  uint64_t distance;
  /**
   * Rounds spent on the transformation.
   */
  uint64_t rho;
  uint64_t total;
  uint64_t alpha;
  uint64_t direct_link_level;
  uint64_t height;
  uint64_t dummies;
  uint32_t max_bits;
  uint64_t violations;
} DsgRequestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never null.
 */
const char *dsg_status_message(enum DsgStatus status);

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dsg_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void dsg_string_free(char *s);

/**
 * New simulation over ids `1..=n` with balance `a`, validating after every
 * request.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DsgStatus dsg_simulator_new(size_t n, size_t a, uint64_t seed, struct DsgSimulator **out);

/**
 * New simulation from a JSON run configuration. `requests`, `workload` and
 * `out` are ignored; requests come from [`dsg_simulator_execute`].
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum DsgStatus dsg_simulator_from_config(const char *json, struct DsgSimulator **out);

/**
 * Releases a simulation. Null is ignored.
 *
 * # Safety
 * `sim` must come from this library and not be freed twice.
 */
void dsg_simulator_free(struct DsgSimulator *sim);

/**
 * Routes `u` to `v` at `time`, transforms, and reports the cost. `result`
 * may be null.
 *
 * # Safety
 * `sim` must be a live handle; `result` null or valid.
 */
enum DsgStatus dsg_simulator_execute(struct DsgSimulator *sim,
                                     uint64_t time,
                                     uint64_t u,
                                     uint64_t v,
                                     struct DsgRequestResult *result);

/**
 * Summary of all executed requests as JSON.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum DsgStatus dsg_simulator_summary_json(const struct DsgSimulator *sim, char **out);

/**
 * Per-request trace as CSV with a header line.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum DsgStatus dsg_simulator_trace_csv(const struct DsgSimulator *sim, char **out);

/**
 * Copies the current graph into a new topology handle.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum DsgStatus dsg_simulator_topology(const struct DsgSimulator *sim, struct DsgTopology **out);

/**
 * Runs a whole configuration and returns its summary JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum DsgStatus dsg_run_config(const char *json, char **out);

/**
 * Parses a topology dump.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum DsgStatus dsg_topology_parse(const char *json, struct DsgTopology **out);

/**
 * Canonical JSON dump of a topology.
 *
 * # Safety
 * `topo` must be a live handle and `out` a valid pointer.
 */
enum DsgStatus dsg_topology_export(const struct DsgTopology *topo, char **out);

/**
 * Releases a topology. Null is ignored.
 *
 * # Safety
 * `topo` must come from this library and not be freed twice.
 */
void dsg_topology_free(struct DsgTopology *topo);

/**
 * Number of intermediate nodes on the greedy route from `u` to `v`.
 *
 * # Safety
 * `topo` must be a live handle and `out` a valid pointer.
 */
enum DsgStatus dsg_topology_route_distance(const struct DsgTopology *topo,
                                           uint64_t u,
                                           uint64_t v,
                                           uint64_t *out);

/**
 * Height, real node count, dummy count and violation count.
 *
 * # Safety
 * `topo` must be a live handle; each out pointer may be null.
 */
enum DsgStatus dsg_topology_stats(const struct DsgTopology *topo,
                                  uint64_t *height,
                                  uint64_t *nodes,
                                  uint64_t *dummies,
                                  uint64_t *violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSG_H */
