#ifndef FLEXSEG_H
#define FLEXSEG_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum FlexsegStatus {
  FLEXSEG_STATUS_OK = 0,
  // A required pointer argument was null.
  FLEXSEG_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  FLEXSEG_STATUS_INVALID_UTF8 = 2,
  // Input could not be read or parsed.
  FLEXSEG_STATUS_PARSE = 3,
  // Input or arguments violate a model constraint.
  FLEXSEG_STATUS_VALIDATION = 4,
  // The problem has no feasible operating point.
  FLEXSEG_STATUS_INFEASIBLE = 5,
  // Solver or geometry failure.
  FLEXSEG_STATUS_INTERNAL = 6,
  // An index was past the end of a collection.
  FLEXSEG_STATUS_OUT_OF_RANGE = 7,
  // The library panicked; the handle arguments should be considered lost.
  FLEXSEG_STATUS_PANIC = 8,
} FlexsegStatus;

// Opaque traced flexibility area.
typedef struct FlexsegArea FlexsegArea;

// Opaque network handle.
typedef struct FlexsegNetwork FlexsegNetwork;

// Opaque segmentation result.
typedef struct FlexsegSegmentation FlexsegSegmentation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread (empty after a success).
// The pointer stays valid until the next call on the same thread.
const char *flexseg_last_error(void);

// Library version as a static string.
const char *flexseg_version(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void flexseg_string_free(char *s);

// Loads a bundled network by name (`case33`) or a network file by path.
//
// # Safety
// `name_or_path` must be a NUL-terminated string; `out` must be writable.
enum FlexsegStatus flexseg_network_load(const char *name_or_path, struct FlexsegNetwork **out);

// Parses a network document held in memory.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum FlexsegStatus flexseg_network_from_json(const char *json, struct FlexsegNetwork **out);

// # Safety
// `net` must be null or a handle from this library that was not freed.
void flexseg_network_free(struct FlexsegNetwork *net);

// Number of buses, 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
size_t flexseg_network_bus_count(const struct FlexsegNetwork *net);

// Number of flexible units, 0 for a null handle.
//
// # Safety
// `net` must be null or a live handle.
size_t flexseg_network_unit_count(const struct FlexsegNetwork *net);

// Replaces the reliability of one unit.
//
// # Safety
// `net` must be a live handle.
enum FlexsegStatus flexseg_network_set_reliability(struct FlexsegNetwork *net,
                                                   int64_t unit,
                                                   double reliability);

// Interface exchange with every flexible unit off, kW / kVAr.
//
// # Safety
// `net` must be a live handle; `p` and `q` must be writable.
enum FlexsegStatus flexseg_reference_point(const struct FlexsegNetwork *net, double *p, double *q);

// Optimal power flow with all units available, minimizing
// `pi_p P + pi_q Q` at the interface (coefficients in {-1, 0, 1}).
//
// # Safety
// `net` must be a live handle; `p` and `q` must be writable.
enum FlexsegStatus flexseg_opf(const struct FlexsegNetwork *net,
                               int8_t pi_p,
                               int8_t pi_q,
                               double *p,
                               double *q);

// Traces the aggregated area with `k` ε-intervals. `workers == 0` uses
// every available core.
//
// # Safety
// `net` must be a live handle; `out` must be writable.
enum FlexsegStatus flexseg_trace_area(const struct FlexsegNetwork *net,
                                      size_t k,
                                      size_t workers,
                                      struct FlexsegArea **out);

// # Safety
// `area` must be null or a live handle.
void flexseg_area_free(struct FlexsegArea *area);

// Number of boundary points, 0 for a null handle.
//
// # Safety
// `area` must be null or a live handle.
size_t flexseg_area_len(const struct FlexsegArea *area);

// Boundary point `index` in counterclockwise order, kW / kVAr.
//
// # Safety
// `area` must be a live handle; `p` and `q` must be writable.
enum FlexsegStatus flexseg_area_point(const struct FlexsegArea *area,
                                      size_t index,
                                      double *p,
                                      double *q);

// Area of the convex hull of the boundary, kW·kVAr; NaN for a null handle.
//
// # Safety
// `area` must be null or a live handle.
double flexseg_area_hull_area(const struct FlexsegArea *area);

// Segments by the number of active units, levels 0 through n.
//
// # Safety
// `net` must be a live handle; `out` must be writable.
enum FlexsegStatus flexseg_segment_by_count(const struct FlexsegNetwork *net,
                                            size_t k,
                                            size_t workers,
                                            struct FlexsegSegmentation **out);

// Segments by ranked unit subsets. `threshold <= 0` skips the envelope.
//
// # Safety
// `net` must be a live handle; `out` must be writable.
enum FlexsegStatus flexseg_segment_probabilistic(const struct FlexsegNetwork *net,
                                                 size_t k,
                                                 size_t max_segments,
                                                 double threshold,
                                                 size_t workers,
                                                 struct FlexsegSegmentation **out);

// # Safety
// `seg` must be null or a live handle.
void flexseg_segmentation_free(struct FlexsegSegmentation *seg);

// Number of retained segments, 0 for a null handle.
//
// # Safety
// `seg` must be null or a live handle.
size_t flexseg_segmentation_len(const struct FlexsegSegmentation *seg);

// Number of subsets discarded as redundant, 0 for a null handle.
//
// # Safety
// `seg` must be null or a live handle.
size_t flexseg_segmentation_discarded(const struct FlexsegSegmentation *seg);

// Cardinality, firmness and polygon area of segment `index`.
//
// # Safety
// `seg` must be a live handle; the out pointers must be writable.
enum FlexsegStatus flexseg_segment_info(const struct FlexsegSegmentation *seg,
                                        size_t index,
                                        size_t *cardinality,
                                        double *probability,
                                        double *area);

// Area of the firmness envelope; NaN when none was requested.
//
// # Safety
// `seg` must be null or a live handle.
double flexseg_segmentation_envelope_area(const struct FlexsegSegmentation *seg);

// Segmentation as a JSON document; null on a null handle. Release with
// [`flexseg_string_free`].
//
// # Safety
// `seg` must be null or a live handle.
char *flexseg_segmentation_to_json(const struct FlexsegSegmentation *seg);

// SVG chart of the segmentation around the reference point; null on a null
// handle. Release with [`flexseg_string_free`].
//
// # Safety
// `seg` must be null or a live handle.
char *flexseg_segmentation_svg(const struct FlexsegSegmentation *seg,
                               double reference_p,
                               double reference_q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLEXSEG_H */
