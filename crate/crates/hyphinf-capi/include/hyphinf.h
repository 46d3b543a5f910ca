#ifndef HYPHINF_H
#define HYPHINF_H

/* Generated by cbindgen from hyphinf-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum HyphinfStatus {
  HYPHINF_STATUS_OK = 0,
  // Invalid argument: null pointer, malformed JSON, bad dimensions.
  HYPHINF_STATUS_INVALID_ARGUMENT = 1,
  // A mathematical condition failed (not well-posed, no stabilizing
  // solution, unstable loop, parameter out of bounds).
  HYPHINF_STATUS_CONDITION_FAILED = 2,
  // Numerical breakdown inside a kernel.
  HYPHINF_STATUS_NUMERICAL_FAILURE = 3,
} HyphinfStatus;

// A closed loop from disturbance to regulated output.
typedef struct HyphinfClosedLoop HyphinfClosedLoop;

// A synthesized compensator realization.
typedef struct HyphinfController HyphinfController;

// A boundary-controlled transport plant.
typedef struct HyphinfPlant HyphinfPlant;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message into `buf` (truncated to `len` - 1 bytes,
// always NUL-terminated). Returns the full message length in bytes.
//
// # Safety
// `buf` must point to at least `len` writable bytes (or be null).
size_t hyphinf_last_error_message(char *buf, size_t len);

// Parse a plant from its JSON description (same schema as the CLI).
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be a valid pointer.
enum HyphinfStatus hyphinf_plant_from_json(const char *json, struct HyphinfPlant **out);

// Build the vibrating-string benchmark plant with mass density `rho` and
// modulus `t_mod`.
//
// # Safety
// `out` must be a valid pointer.
enum HyphinfStatus hyphinf_plant_string_fixture(double rho,
                                                double t_mod,
                                                struct HyphinfPlant **out);

// # Safety
// `plant` must come from a `hyphinf_plant_*` constructor (or be null).
void hyphinf_plant_free(struct HyphinfPlant *plant);

// Well-posedness: writes 1 into `well_posed` iff the boundary matrix K is
// invertible, plus its smallest singular value.
//
// # Safety
// All pointers must be valid.
enum HyphinfStatus hyphinf_plant_check_wellposed(const struct HyphinfPlant *plant,
                                                 int32_t *well_posed,
                                                 double *sigma_min);

// The travel time p(1) of the plant's speed profile.
//
// # Safety
// All pointers must be valid.
enum HyphinfStatus hyphinf_plant_travel_time(const struct HyphinfPlant *plant, double *out);

// Synthesize a compensator at level `gamma`. `sigma_q_json` selects the
// free parameter: pass null for the zero parameter, or a state-space JSON
// object {"A": [[..]], "B": [[..]], "C": [[..]], "D": [[..]]}.
//
// # Safety
// `plant` must be a valid handle; `out` must be a valid pointer.
enum HyphinfStatus hyphinf_synthesize(const struct HyphinfPlant *plant,
                                      double gamma,
                                      const char *sigma_q_json,
                                      struct HyphinfController **out);

// # Safety
// `controller` must come from `hyphinf_synthesize` (or be null).
void hyphinf_controller_free(struct HyphinfController *controller);

// State dimension of the compensator.
//
// # Safety
// All pointers must be valid.
enum HyphinfStatus hyphinf_controller_order(const struct HyphinfController *controller,
                                            size_t *out);

// Serialize the compensator matrices as JSON
// {"A": .., "B": .., "C": .., "D": ..}. The returned string must be
// released with `hyphinf_string_free`.
//
// # Safety
// All pointers must be valid.
enum HyphinfStatus hyphinf_controller_to_json(const struct HyphinfController *controller,
                                              char **out);

// # Safety
// `s` must come from a `*_to_json` function (or be null).
void hyphinf_string_free(char *s);

// Close the loop of a plant and a compensator.
//
// # Safety
// Handles must be valid; `out` must be a valid pointer.
enum HyphinfStatus hyphinf_close_loop(const struct HyphinfPlant *plant,
                                      const struct HyphinfController *controller,
                                      struct HyphinfClosedLoop **out);

// # Safety
// `cl` must come from `hyphinf_close_loop` (or be null).
void hyphinf_closed_loop_free(struct HyphinfClosedLoop *cl);

// Spectral radius of the closed-loop state matrix.
//
// # Safety
// All pointers must be valid.
enum HyphinfStatus hyphinf_closed_loop_spectral_radius(const struct HyphinfClosedLoop *cl,
                                                       double *out);

// H-infinity norm of the closed loop over the unit circle (grid sweep of
// `grid_size` points plus refinement). Writes the norm and the maximizing
// angle theta. Fails on an unstable loop.
//
// # Safety
// All pointers must be valid.
enum HyphinfStatus hyphinf_closed_loop_hinf_norm(const struct HyphinfClosedLoop *cl,
                                                 size_t grid_size,
                                                 double *norm,
                                                 double *theta);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPHINF_H */
