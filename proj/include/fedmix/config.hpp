#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "fedmix/params.hpp"

namespace fedmix {

// Flat key=value experiment configuration with full defaults. Any key can be
// set in a config file and overridden from the command line; the resolved
// document is echoed into the run's output directory.
struct ExperimentConfig {
  // federation
  int num_clients = 8;
  int rounds = 200;
  int batch_size = 6;
  double supervised_fraction = 0.0;  // p_s; p_s * num_clients must be integral
  std::string regime = "from_scratch";  // or "fine_tune"
  std::string init_checkpoint;          // optional
  int eval_every = 1;
  int selection_window = 50;
  int workers = 1;
  int checkpoint_every = 50;
  bool reset_moments = false;
  bool weighted_aggregate = false;
  int solo_client = -1;  // train this client's shard alone (isolation baseline)

  // model
  int frame_len = 32;
  int hop = 16;
  int basis = 64;
  int hidden = 128;

  // data / io
  std::string manifest;
  int sample_rate = 8000;
  std::string out_dir = "runs/exp";

  // pretraining
  int epochs = 20;
  std::string fl_manifest;  // optional, for the speaker-overlap check

  std::uint64_t seed = 1;

  ModelConfig model_config() const;

  // Derived deterministic sub-seeds.
  std::uint64_t partition_seed() const;
  std::uint64_t sampling_seed() const;
  std::uint64_t training_seed() const;
  std::uint64_t eval_pairing_seed() const;
};

// Parses "key = value" lines ('#' starts a comment). Unknown keys are
// configuration errors naming the key.
ExperimentConfig parse_config_text(const std::string& text,
                                   ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& file,
                                  ExperimentConfig base = {});

// Applies one "key=value" override.
void apply_override(ExperimentConfig& config, const std::string& key,
                    const std::string& value);

// Validates cross-field invariants; throws ConfigError naming the field.
void validate_experiment_config(const ExperimentConfig& config);

// Canonical (sorted, fully-populated) key=value rendering.
std::string render_config(const ExperimentConfig& config);

}  // namespace fedmix
