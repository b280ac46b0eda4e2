#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"

namespace fedmix {

// Compact mask-based separator configuration. The architecture is fixed by
// the layout below; all sizes derive from these fields.
struct ModelConfig {
  int frame_len = 32;
  int hop = 16;
  int basis = 64;
  int hidden = 128;
  int num_sources = 3;
  std::uint64_t init_seed = 1;
};

void validate_model_config(const ModelConfig& config);

struct ParamSegment {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const ParamSegment&) const = default;
};

using ParamLayout = std::vector<ParamSegment>;

// Layout is a pure function of the config: analysis basis, mask hidden layer,
// per-source mask heads, synthesis basis.
ParamLayout layout_of(const ModelConfig& config);
Eigen::Index layout_size(const ParamLayout& layout);

// Flat parameter vector plus its layout descriptor. Two vectors are
// aggregable iff their layouts are identical.
struct ParamVector {
  Eigen::VectorXd values;
  ParamLayout layout;

  Eigen::Index size() const { return values.size(); }
};

bool layouts_match(const ParamLayout& a, const ParamLayout& b);

// Deterministic initialization: weights uniform in +/- sqrt(6/(fan_in+fan_out))
// per segment, biases zero.
ParamVector init_params(const ModelConfig& config);

// Digest of the architecture (not the seed); used to bind checkpoints to a
// compatible ModelConfig.
std::uint64_t config_digest(const ModelConfig& config);

}  // namespace fedmix
