#include "fedmix/federation.hpp"

#include <chrono>
#include <map>
#include <numeric>

#include "fedmix/eval.hpp"
#include "fedmix/threading.hpp"

namespace fedmix {

ClientUpdateResult client_update(ClientState& client, const ParamVector& global_params,
                                 const FedRunConfig& config, int round) {
  const int batch_size = config.batch_size;
  require(batch_size >= 1, "client_update: batch size must be >= 1");
  require(!client.dataset.mixtures.empty() && !client.dataset.noises.empty(),
          "client_update: client dataset is empty");
  if (client.kind == LossKind::kSupervised) {
    for (const auto& example : client.dataset.mixtures) {
      require(example.references.has_value(),
              "client_update: supervised client holds unreferenced mixtures");
    }
  }

  const long num_examples = static_cast<long>(client.dataset.mixtures.size());
  const int steps = static_cast<int>(num_examples / batch_size);
  if (steps == 0) {
    throw ConfigError("client " + std::to_string(client.id) + " holds " +
                      std::to_string(num_examples) + " mixtures, fewer than one batch of " +
                      std::to_string(batch_size));
  }

  // theta_c <- theta_g
  client.local_params = global_params;
  if (config.reset_moments) {
    const double lr = client.optimizer.learning_rate;
    client.optimizer = make_optimizer(OptimizerRegime::kFromScratch, global_params.size());
    client.optimizer.learning_rate = lr;
  }

  Rng rng(mix_seed(client.seed, static_cast<std::uint64_t>(round)));
  std::vector<int> order(static_cast<std::size_t>(num_examples));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  for (int step = 0; step < steps; ++step) {
    std::vector<LossInstance> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
      const auto& example = client.dataset.mixtures[static_cast<std::size_t>(
          order[static_cast<std::size_t>(step * batch_size + b)])];
      const auto& noise =
          client.dataset.noises[rng.below(client.dataset.noises.size())];
      if (client.kind == LossKind::kSupervised) {
        batch.push_back(make_supervised_instance(example.mixture, noise,
                                                 example.references->first,
                                                 example.references->second));
      } else {
        batch.push_back(make_unsupervised_instance(example.mixture, noise));
      }
    }
    const LossAndGrad result = separate_with_grad(config.model, client.local_params, batch);
    AdamResult updated = adam_step(client.optimizer, client.local_params, result.grad);
    client.optimizer = std::move(updated.state);
    client.local_params = std::move(updated.params);
  }

  return ClientUpdateResult{client.local_params, steps};
}

void run_round(ServerState& server, std::vector<ClientState>& clients,
               const FedRunConfig& config, const Evaluator& evaluator) {
  require(!clients.empty(), "run_round: no clients");
  const auto started = std::chrono::steady_clock::now();
  const int round = server.round + 1;
  const int num_clients = static_cast<int>(clients.size());

  Rng sampling_rng(mix_seed(config.sampling_seed, static_cast<std::uint64_t>(round)));
  // Sampled values index the clients vector; the record stores client ids.
  const std::vector<int> sampled = sample_available_clients(num_clients, sampling_rng);

  std::vector<ClientUpdateVec> updates(sampled.size());
  std::vector<int> steps(sampled.size(), 0);
  std::vector<int> participant_ids(sampled.size(), -1);
  parallel_for(static_cast<int>(sampled.size()), config.workers, [&](int i) {
    ClientState& client =
        clients[static_cast<std::size_t>(sampled[static_cast<std::size_t>(i)])];
    ClientUpdateResult result =
        client_update(client, server.global_params, config, round);
    updates[static_cast<std::size_t>(i)] =
        ClientUpdateVec{client.id, std::move(result.params),
                        static_cast<long>(client.dataset.mixtures.size())};
    steps[static_cast<std::size_t>(i)] = result.steps;
    participant_ids[static_cast<std::size_t>(i)] = client.id;
  });

  server.global_params = config.weighted_aggregate
                             ? fedavg_aggregate_weighted(std::move(updates))
                             : fedavg_aggregate(std::move(updates));

  RoundRecord record;
  record.round = round;
  record.participants = participant_ids;
  record.steps_per_participant = steps;
  double hours = server.history.empty() ? 0.0 : server.history.back().audio_hours;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    hours += static_cast<double>(steps[i]) * config.batch_size * config.clip_seconds / 3600.0;
  }
  record.audio_hours = hours;

  if (round % config.eval_every == 0 && evaluator) {
    record.metrics = evaluator(server.global_params);
    record.metrics.has_values = true;
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  server.history.push_back(std::move(record));
  server.round = round;
}

TrainingOutcome run_training(const ParamVector& initial,
                             std::vector<ClientState> clients, int rounds,
                             const FedRunConfig& config, const Evaluator& evaluator,
                             const RoundCallback& on_round) {
  require(rounds >= 1, "run_training: need at least one round");
  require(config.eval_every >= 1, "run_training: eval_every must be >= 1");
  if (config.eval_every > config.selection_window) {
    throw ConfigError("eval cadence exceeds the selection window; no round could be selected");
  }
  for (const auto& client : clients) {
    require(layouts_match(client.local_params.layout, initial.layout) ||
                client.local_params.size() == 0,
            "run_training: client layout mismatch");
  }

  ServerState server;
  server.global_params = initial;
  server.rng_seed = config.sampling_seed;

  const int window_start = rounds - std::min(config.selection_window, rounds) + 1;
  std::map<int, ParamVector> candidates;

  for (int r = 1; r <= rounds; ++r) {
    run_round(server, clients, config, evaluator);
    const RoundRecord& record = server.history.back();
    if (record.metrics.has_values && record.round >= window_start) {
      candidates.emplace(record.round, server.global_params);
    }
    if (on_round) on_round(record, server.global_params);
  }

  const int best_round =
      select_best_round(std::span<const RoundRecord>(server.history),
                        config.selection_window);
  require(best_round > 0 && candidates.count(best_round) == 1,
          "run_training: no evaluated round inside the selection window");

  TrainingOutcome outcome;
  outcome.best_params = candidates.at(best_round);
  outcome.best_round = best_round;
  outcome.server = std::move(server);
  return outcome;
}

}  // namespace fedmix
