/* C API for the latentplan core: load trained state-autoencoder
 * checkpoints, encode/decode between images and propositional bit
 * states, parse grounded PDDL problems, and run the planner.
 *
 * All handles are opaque; every fallible call returns lp_status and
 * stores a thread-local message readable via lp_last_error. */

#ifndef LATENTPLAN_H
#define LATENTPLAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lp_status {
  LP_OK = 0,
  LP_NULL_ARGUMENT = 1,
  LP_IO_ERROR = 2,
  LP_FORMAT_ERROR = 3,
  LP_SHAPE_MISMATCH = 4,
  LP_INVALID_ARGUMENT = 5,
  LP_UNSOLVED = 6,
  LP_BUFFER_TOO_SMALL = 7,
} lp_status;

typedef struct lp_sae lp_sae;
typedef struct lp_strips lp_strips;
typedef struct lp_plan lp_plan;

/* Library version as a static NUL-terminated string. */
const char *lp_version(void);

/* Copies the last error message for this thread into buf (NUL
 * terminated, truncated to cap). Returns the full message length. */
size_t lp_last_error(char *buf, size_t cap);

/* -- state autoencoder ------------------------------------------------ */

lp_status lp_sae_load(const char *path, lp_sae **out);
void lp_sae_free(lp_sae *sae);

size_t lp_sae_latent_bits(const lp_sae *sae);
lp_status lp_sae_input_dims(const lp_sae *sae, size_t *height, size_t *width);

/* pixels: row-major grayscale in [0,1], length height*width.
 * bits: one byte per latent bit, 0 or 1. */
lp_status lp_sae_encode(const lp_sae *sae, const float *pixels,
                        size_t pixels_len, uint8_t *bits, size_t bits_len);
lp_status lp_sae_decode(const lp_sae *sae, const uint8_t *bits,
                        size_t bits_len, float *pixels, size_t pixels_len);

/* -- grounded problems ------------------------------------------------ */

lp_status lp_strips_load_pddl(const char *domain_path,
                              const char *problem_path, lp_strips **out);
void lp_strips_free(lp_strips *strips);

size_t lp_strips_num_actions(const lp_strips *strips);
size_t lp_strips_num_bits(const lp_strips *strips);

/* Solves the loaded instance. use_goal_count != 0 selects the
 * inadmissible Hamming heuristic, 0 runs optimal blind search.
 * max_expansions of 0 means unlimited. Writes a plan handle the caller
 * must free; returns LP_UNSOLVED when the search ends in timeout or
 * exhaustion (the handle still carries statistics). */
lp_status lp_strips_solve(lp_strips *strips, uint64_t time_limit_secs,
                          size_t max_expansions, int32_t use_goal_count,
                          lp_plan **out);

/* -- plans ------------------------------------------------------------ */

void lp_plan_free(lp_plan *plan);

/* Number of actions in the plan. */
size_t lp_plan_length(const lp_plan *plan);

/* 0 = solved, 1 = timeout, 2 = exhausted, -1 = null handle. */
int32_t lp_plan_status(const lp_plan *plan);

size_t lp_plan_expanded(const lp_plan *plan);

/* Copies state `index` (0 = init, plan length = goal) as 0/1 bytes. */
lp_status lp_plan_state_bits(const lp_plan *plan, size_t index,
                             uint8_t *bits, size_t bits_len);

/* Generating action id of step `index`, or UINT32_MAX out of range. */
uint32_t lp_plan_action_id(const lp_plan *plan, size_t index);

#ifdef __cplusplus
}
#endif

#endif /* LATENTPLAN_H */
