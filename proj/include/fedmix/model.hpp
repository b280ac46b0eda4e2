#pragma once

#include <vector>

#include "fedmix/audio.hpp"
#include "fedmix/params.hpp"
#include "fedmix/tape.hpp"

namespace fedmix {

struct LossInstance;  // losses.hpp

// Runs the separator forward: framing, learned analysis basis with ReLU
// features, a one-hidden-layer mask network with per-source sigmoid masks,
// masked synthesis with overlap-add, and the mixture-consistency projection.
// Returns num_sources sources of the mixture's length; slot 0 carries the
// speech estimate by loss convention.
SourceStack separate(const ModelConfig& config, const ParamVector& params,
                     const AudioBuffer& mixture);

// Records the same computation on a tape. Returns the T x M source stack
// (sources as columns). Bit-identical to separate() by construction: both
// paths run the same kernels in the same order.
ad::Value build_separator(ad::Tape& tape, const ModelConfig& config,
                          const Eigen::VectorXd& mixture);

struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Mean loss and mean gradient over a batch of loss instances. All instances
// must share one loss kind.
LossAndGrad separate_with_grad(const ModelConfig& config, const ParamVector& params,
                               const std::vector<LossInstance>& batch);

}  // namespace fedmix
