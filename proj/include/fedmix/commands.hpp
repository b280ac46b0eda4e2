#pragma once

#include <filesystem>
#include <vector>

#include "fedmix/checkpoint.hpp"
#include "fedmix/config.hpp"
#include "fedmix/data.hpp"
#include "fedmix/eval.hpp"
#include "fedmix/federation.hpp"

namespace fedmix {

// Library-level implementations of the CLI subcommands. The CLI binary and
// the test suites call these directly.

// Resolves an output directory against the FEDMIX_OUT_ROOT env override.
std::filesystem::path resolve_out_dir(const std::string& out_dir);

struct GenerateOutcome {
  std::filesystem::path manifest_path;
  int num_entries = 0;
};
GenerateOutcome run_generate(const CorpusSpec& spec);

struct TrainOutcome {
  int best_round = 0;
  EvalSummary best_metrics;
  std::vector<RoundRecord> history;
  std::vector<long> client_sizes;  // |D_c^m| by participating client order
  int effective_num_clients = 0;
  std::filesystem::path out_dir;
  std::filesystem::path csv_path;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
};
TrainOutcome run_train(const ExperimentConfig& config);

struct PretrainOutcome {
  std::filesystem::path checkpoint_path;
  int epochs_run = 0;
};
PretrainOutcome run_pretrain(const ExperimentConfig& config);

struct SweepRow {
  double supervised_fraction = 0.0;
  int best_round = 0;
  double valid_sisdri_1n = 0.0;
  double valid_sisdri_2n = 0.0;
  double test_sisdri_1n = 0.0;
  double test_sisdri_2n = 0.0;
};
struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::filesystem::path summary_path;
};
SweepOutcome run_sweep(const ExperimentConfig& base, const std::vector<double>& ps_list);

struct EvaluateOutcome {
  double valid_sisdri_1n = 0.0;
  double valid_sisdri_2n = 0.0;
  double test_sisdri_1n = 0.0;
  double test_sisdri_2n = 0.0;
};
EvaluateOutcome run_evaluate(const ExperimentConfig& config,
                             const std::filesystem::path& checkpoint_path);

}  // namespace fedmix
