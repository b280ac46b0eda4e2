#pragma once

#include <functional>

#include "fedmix/adam.hpp"
#include "fedmix/data.hpp"
#include "fedmix/losses.hpp"
#include "fedmix/model.hpp"
#include "fedmix/server.hpp"

namespace fedmix {

struct ClientState {
  int id = -1;
  ClientDataset dataset;
  LossKind kind = LossKind::kUnsupervised;
  AdamState optimizer;
  ParamVector local_params;
  std::uint64_t seed = 0;  // per-client RNG stream base
};

struct FedRunConfig {
  ModelConfig model;
  int batch_size = 6;
  int eval_every = 1;          // evaluate after every k-th round
  int selection_window = 50;   // model selection over the final rounds
  int workers = 1;
  bool reset_moments = false;  // reset client Adam moments on receiving the
                               // global weights (persist by default)
  bool weighted_aggregate = false;
  std::uint64_t sampling_seed = 1;
  double clip_seconds = 1.0;
};

// Evaluation hook: the round loop only sees parameter vectors and the summary
// metrics the hook returns.
using Evaluator = std::function<EvalSummary(const ParamVector&)>;

// One local epoch: copies the global weights, then K = floor(|D_c^m| / B)
// Adam steps over a per-round shuffle of the client's mixtures, each example
// paired with a noise clip drawn (with replacement) from the client's own
// noise pool. Returns the updated local weights and K.
struct ClientUpdateResult {
  ParamVector params;
  int steps = 0;
};
ClientUpdateResult client_update(ClientState& client, const ParamVector& global_params,
                                 const FedRunConfig& config, int round);

// One communication round: sample A^(r), run client updates (worker-parallel,
// deterministically), aggregate, evaluate on eval rounds, append a record.
void run_round(ServerState& server, std::vector<ClientState>& clients,
               const FedRunConfig& config, const Evaluator& evaluator);

struct TrainingOutcome {
  ServerState server;
  ParamVector best_params;
  int best_round = 0;
};

using RoundCallback = std::function<void(const RoundRecord&, const ParamVector&)>;

// Runs R rounds from the given initialization and selects the best weights by
// validation SI-SDRi over the final min(selection_window, R) rounds.
TrainingOutcome run_training(const ParamVector& initial,
                             std::vector<ClientState> clients, int rounds,
                             const FedRunConfig& config, const Evaluator& evaluator,
                             const RoundCallback& on_round = {});

}  // namespace fedmix
