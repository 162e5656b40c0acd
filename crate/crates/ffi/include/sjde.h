#ifndef SJDE_H
#define SJDE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SjdeStatus {
  SJDE_STATUS_OK = 0,
  SJDE_STATUS_NULL_POINTER = 1,
  SJDE_STATUS_INVALID_PARAMETER = 2,
  SJDE_STATUS_OUT_OF_RANGE = 3,
  SJDE_STATUS_MALFORMED_MESSAGE = 4,
  SJDE_STATUS_UNATTAINABLE = 5,
  SJDE_STATUS_INFEASIBLE = 6,
  SJDE_STATUS_UNDEFINED_THRESHOLD = 7,
  SJDE_STATUS_BUFFER_TOO_SMALL = 8,
  SJDE_STATUS_CONFIG = 9,
  SJDE_STATUS_INTERNAL = 10,
} SjdeStatus;

typedef enum SjdeScheme {
  SJDE_SCHEME_DSA_SJDE = 0,
  SJDE_SCHEME_DSA_SPRT = 1,
  SJDE_SCHEME_OPPORTUNISTIC = 2,
  SJDE_SCHEME_UNDERLAY = 3,
} SjdeScheme;

// Opaque level-triggered sampler of one process.
typedef struct SjdeLtSamplerHandle SjdeLtSamplerHandle;

// Opaque calibrated scenario.
typedef struct SjdeSimulatorHandle SjdeSimulatorHandle;

// Opaque per-SU sufficient statistics.
typedef struct SjdeStateHandle SjdeStateHandle;

typedef struct SjdeObservation {
  double y1;
  double y2;
  double pilot_power;
} SjdeObservation;

// Gaussian prior of one real channel component.
typedef struct SjdePrior {
  double mean_re;
  double variance_re;
  double noise_var;
} SjdePrior;

typedef struct SjdeOutageSpec {
  double p_out;
  double pu_rate;
  double pu_power;
  double eta;
  // Prior of the PU link per real component.
  struct SjdePrior g_prior;
  double safety_margin;
} SjdeOutageSpec;

typedef struct SjdeLtMessage {
  uint8_t su_id;
  uint8_t pu_index;
  uint8_t component;
  // 1 for a positive increment.
  uint8_t positive;
  uint32_t index;
  uint64_t t;
} SjdeLtMessage;

typedef struct SjdeTrigger {
  uint8_t positive;
  uint8_t overflow;
  uint32_t index;
  double increment;
} SjdeTrigger;

// Scheme plus the parameters it reads: `gamma` (DSA-SJDE), the SPRT
// thresholds (DSA-SPRT), or `tau` and `theta` (opportunistic).
typedef struct SjdeOperatingPoint {
  enum SjdeScheme scheme;
  double gamma;
  double sprt_lower;
  double sprt_upper;
  uint64_t tau;
  double theta;
} SjdeOperatingPoint;

typedef struct SjdeTrialSummary {
  // 1 when the PUs were active.
  uint8_t active;
  // 0 or 1; -1 when no sensing took place.
  int8_t decision;
  uint64_t tau;
  uint32_t selected_su;
  double power;
  double rate;
  uint64_t messages;
  double interference[2];
  uint8_t outage[2];
} SjdeTrialSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *sjde_last_error(void);

struct SjdeStateHandle *sjde_state_new(void);

// # Safety
// `h` must come from `sjde_state_new` and not be used afterwards.
void sjde_state_free(struct SjdeStateHandle *h);

// Consumes one time step: `obs` points to one observation per PU.
//
// # Safety
// `h` must be a live handle; `obs` must point to two observations.
enum SjdeStatus sjde_state_push_step(struct SjdeStateHandle *h, const struct SjdeObservation *obs);

// Samples consumed so far.
//
// # Safety
// `h` must be a live handle.
enum SjdeStatus sjde_state_time(const struct SjdeStateHandle *h, uint64_t *t);

// MMSE estimate and marginal LLR of one real channel.
//
// # Safety
// Pointers must be valid; `estimate` and `llr_out` may not be null.
enum SjdeStatus sjde_state_channel(const struct SjdeStateHandle *h,
                                   struct SjdePrior prior,
                                   uint32_t pu,
                                   uint32_t component,
                                   double *estimate,
                                   double *llr_out);

// Pilot energy `U` seen for PU `pu`.
//
// # Safety
// Pointers must be valid.
enum SjdeStatus sjde_state_fisher(const struct SjdeStateHandle *h, uint32_t pu, double *u);

// Joint decision: `decision` is 1 when `llr >= log(c0 / (c1 + ce Σ ĥ²))`.
//
// # Safety
// `estimates` must hold `n` values; outputs must be valid.
enum SjdeStatus sjde_decide(double llr_value,
                            const double *estimates,
                            size_t n,
                            double c0,
                            double c1,
                            double ce,
                            uint8_t *decision,
                            double *threshold);

// Positive root of `Δ tanh(Δ/2) = Σ mean_abs / target_rate`.
//
// # Safety
// `mean_abs` must hold `n` values.
enum SjdeStatus sjde_solve_delta(double target_rate,
                                 const double *mean_abs,
                                 size_t n,
                                 double *delta);

// PU outage probability at SU interference `interference`.
//
// # Safety
// `p` must be valid.
enum SjdeStatus sjde_outage_probability(struct SjdeOutageSpec spec, double interference, double *p);

// Largest interference keeping outage at the margin-reduced target.
//
// # Safety
// `interference` must be valid.
enum SjdeStatus sjde_interference_cap(struct SjdeOutageSpec spec, double *interference);

// Serializes a message with `r` payload bits. On `BufferTooSmall`,
// `written` holds the required size.
//
// # Safety
// `buf` must hold `cap` bytes; `msg` and `written` must be valid.
enum SjdeStatus sjde_lt_encode(const struct SjdeLtMessage *msg,
                               uint32_t r,
                               uint8_t *buf,
                               size_t cap,
                               size_t *written);

// Parses a message with `r` payload bits received at time `t`.
//
// # Safety
// `buf` must hold `len` bytes; `msg` must be valid.
enum SjdeStatus sjde_lt_decode(const uint8_t *buf,
                               size_t len,
                               uint32_t r,
                               uint64_t t,
                               struct SjdeLtMessage *msg);

// # Safety
// `out_handle` must be valid.
enum SjdeStatus sjde_lt_sampler_new(double delta,
                                    double phi,
                                    uint32_t r,
                                    struct SjdeLtSamplerHandle **out_handle);

// # Safety
// `h` must come from `sjde_lt_sampler_new` and not be used afterwards.
void sjde_lt_sampler_free(struct SjdeLtSamplerHandle *h);

// Feeds one sample; `fired` is set to 1 and `trigger` filled on a trigger.
//
// # Safety
// Pointers must be valid; `trigger` may be null.
enum SjdeStatus sjde_lt_sampler_update(struct SjdeLtSamplerHandle *h,
                                       double y,
                                       uint8_t *fired,
                                       struct SjdeTrigger *trigger);

// Increment accumulated since the last trigger.
//
// # Safety
// Pointers must be valid.
enum SjdeStatus sjde_lt_sampler_pending(const struct SjdeLtSamplerHandle *h, double *pending);

// Builds a simulator from scenario TOML (null or empty for defaults) and
// runs the scenario calibration.
//
// # Safety
// `toml` must be null or NUL-terminated; `out_handle` must be valid.
enum SjdeStatus sjde_simulator_new(const char *toml, struct SjdeSimulatorHandle **out_handle);

// # Safety
// `h` must come from `sjde_simulator_new` and not be used afterwards.
void sjde_simulator_free(struct SjdeSimulatorHandle *h);

// Level-triggered threshold Δ chosen by calibration.
//
// # Safety
// Pointers must be valid.
enum SjdeStatus sjde_simulator_delta(const struct SjdeSimulatorHandle *h, double *delta);

// Simulates frame `index` of stream `seed` at operating point `op`.
//
// # Safety
// Pointers must be valid.
enum SjdeStatus sjde_simulator_run_trial(const struct SjdeSimulatorHandle *h,
                                         struct SjdeOperatingPoint op,
                                         uint64_t seed,
                                         uint64_t index,
                                         struct SjdeTrialSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SJDE_H */
