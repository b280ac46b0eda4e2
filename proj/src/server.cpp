#include "fedmix/server.hpp"

namespace fedmix {

std::vector<int> sample_available_clients(int num_clients, Rng& round_rng) {
  require(num_clients >= 1, "sample_available_clients: need at least one client");
  const int k = participants_per_round(num_clients);
  return round_rng.sample_without_replacement(num_clients, k);
}

namespace {

void sort_and_check(std::vector<ClientUpdateVec>& updates) {
  require(!updates.empty(), "fedavg_aggregate: empty update list");
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdateVec& a, const ClientUpdateVec& b) {
              return a.client_id < b.client_id;
            });
  for (std::size_t i = 1; i < updates.size(); ++i) {
    require(updates[i].client_id != updates[i - 1].client_id,
            "fedavg_aggregate: duplicate client id");
    require(layouts_match(updates[i].params.layout, updates.front().params.layout),
            "fedavg_aggregate: layout mismatch");
  }
}

}  // namespace

ParamVector fedavg_aggregate(std::vector<ClientUpdateVec> updates) {
  sort_and_check(updates);
  ParamVector out = updates.front().params;
  for (std::size_t i = 1; i < updates.size(); ++i) {
    out.values += updates[i].params.values;
  }
  out.values /= static_cast<double>(updates.size());
  return out;
}

ParamVector fedavg_aggregate_weighted(std::vector<ClientUpdateVec> updates) {
  sort_and_check(updates);
  double total = 0.0;
  for (const auto& u : updates) {
    require(u.num_examples > 0, "fedavg_aggregate_weighted: missing example counts");
    total += static_cast<double>(u.num_examples);
  }
  ParamVector out = updates.front().params;
  out.values *= static_cast<double>(updates.front().num_examples);
  for (std::size_t i = 1; i < updates.size(); ++i) {
    out.values += static_cast<double>(updates[i].num_examples) * updates[i].params.values;
  }
  out.values /= total;
  return out;
}

}  // namespace fedmix
