/* C interface for the prmlab adversarial game laboratory. */

#ifndef PRMLAB_H
#define PRMLAB_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum PrmlabStatus {
  PRMLAB_STATUS_OK = 0,
  PRMLAB_STATUS_INVALID_ARGUMENT = 1,
  PRMLAB_STATUS_PARSE_ERROR = 2,
  PRMLAB_STATUS_NON_CONVERGENCE = 3,
  PRMLAB_STATUS_NULL_POINTER = 4,
  PRMLAB_STATUS_UTF8_ERROR = 5,
} PrmlabStatus;

/**
 * Opaque game handle.
 */
typedef struct PrmlabGame PrmlabGame;

/**
 * Opaque oracle handle (default thresholds and embedder).
 */
typedef struct PrmlabOracle PrmlabOracle;

/**
 * Opaque solution handle holding an equilibrium and its game context.
 */
typedef struct PrmlabSolution PrmlabSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL.
 * The returned string must be freed with `prmlab_string_free`.
 */
char *prmlab_last_error(void);

/**
 * Frees a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be a pointer previously returned by a prmlab function and not
 * yet freed.
 */
void prmlab_string_free(char *s);

/**
 * Library version as a static string (do not free).
 */
const char *prmlab_version(void);

/**
 * Parses a game from its JSON definition.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to a handle slot.
 */
enum PrmlabStatus prmlab_game_from_json(const char *json, struct PrmlabGame **out);

/**
 * # Safety
 * `game` must come from `prmlab_game_from_json` and not be freed twice.
 */
void prmlab_game_free(struct PrmlabGame *game);

/**
 * Number of contexts, or 0 on NULL.
 *
 * # Safety
 * `game` must be a live handle.
 */
uintptr_t prmlab_game_num_contexts(const struct PrmlabGame *game);

/**
 * Solves the KL/entropy-regularized game by best-response fixed point
 * with uniform references.
 *
 * # Safety
 * `game` must be a live handle; `out` must be valid.
 */
enum PrmlabStatus prmlab_solve(const struct PrmlabGame *game,
                               double tau,
                               double c_h,
                               double tol,
                               uintptr_t max_iter,
                               struct PrmlabSolution **out);

/**
 * # Safety
 * `sol` must come from `prmlab_solve` and not be freed twice.
 */
void prmlab_solution_free(struct PrmlabSolution *sol);

/**
 * Exploitability certificate of the solution (NaN on NULL).
 *
 * # Safety
 * `sol` must be a live handle.
 */
double prmlab_solution_exploitability(const struct PrmlabSolution *sol);

/**
 * Generator probability of (context, action); NaN when out of range.
 *
 * # Safety
 * `sol` must be a live handle.
 */
double prmlab_solution_generator_prob(const struct PrmlabSolution *sol,
                                      uintptr_t context,
                                      uintptr_t action);

/**
 * Detector classify-correct probability of (context, action).
 *
 * # Safety
 * `sol` must be a live handle.
 */
double prmlab_solution_detector_prob(const struct PrmlabSolution *sol,
                                     uintptr_t context,
                                     uintptr_t action);

/**
 * Serializes the solution (strategies, certificate, full-support report)
 * as JSON. The string must be freed with `prmlab_string_free`.
 *
 * # Safety
 * `sol` must be a live handle from this library.
 */
char *prmlab_solution_to_json(const struct PrmlabSolution *sol);

/**
 * Exploitability of an explicit joint strategy (JSON rows) under uniform
 * references. Writes the value through `out`.
 *
 * # Safety
 * Pointer arguments must be valid as documented on the other functions.
 */
enum PrmlabStatus prmlab_exploitability(const struct PrmlabGame *game,
                                        double tau,
                                        double c_h,
                                        const char *joint_json,
                                        double *out);

/**
 * Creates an oracle with default thresholds, embedder, and mode.
 */
struct PrmlabOracle *prmlab_oracle_new_default(void);

/**
 * # Safety
 * `oracle` must come from `prmlab_oracle_new_default` and not be freed
 * twice.
 */
void prmlab_oracle_free(struct PrmlabOracle *oracle);

/**
 * Labels a (gold, candidate) pair; writes a JSON verdict
 * {label, trace, distances} through `out` (free with
 * `prmlab_string_free`).
 *
 * # Safety
 * `oracle` must be a live handle; `gold`/`candidate` valid strings; `out`
 * a valid slot.
 */
enum PrmlabStatus prmlab_oracle_label(const struct PrmlabOracle *oracle,
                                      const char *gold,
                                      const char *candidate,
                                      char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PRMLAB_H */
