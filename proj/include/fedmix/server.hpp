#pragma once

// Server-side view of the federation. This header must stay free of any
// audio dependency: the server only ever observes parameter vectors and
// aggregate metrics (see tests/test_server_isolation.cpp).

#include <algorithm>
#include <vector>

#include "fedmix/params.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

struct EvalSummary {
  bool has_values = false;
  double valid_sisdri_1n = 0.0;
  double valid_sisdri_2n = 0.0;
  double test_sisdri_1n = 0.0;
  double test_sisdri_2n = 0.0;
};

struct RoundRecord {
  int round = 0;
  std::vector<int> participants;         // ascending client ids
  std::vector<int> steps_per_participant;  // K for each participant, same order
  EvalSummary metrics;
  double audio_hours = 0.0;  // cumulative
  double wall_seconds = 0.0;
};

struct ServerState {
  ParamVector global_params;
  int round = 0;
  std::uint64_t rng_seed = 0;
  std::vector<RoundRecord> history;
};

// Uniform sample without replacement of max(1, C/4) client ids, ascending.
// Deterministic given the rng, which callers derive from (seed, round).
std::vector<int> sample_available_clients(int num_clients, Rng& round_rng);

inline int participants_per_round(int num_clients) {
  return std::max(1, num_clients / 4);
}

struct ClientUpdateVec {
  int client_id = -1;
  ParamVector params;
  long num_examples = 0;  // used only by the weighted variant
};

// Unweighted elementwise mean, summed in ascending client-id order so the
// result is independent of the caller's list order and of worker scheduling.
ParamVector fedavg_aggregate(std::vector<ClientUpdateVec> updates);

// Data-size-weighted variant (off by default in the round loop).
ParamVector fedavg_aggregate_weighted(std::vector<ClientUpdateVec> updates);

}  // namespace fedmix
