#pragma once

#include <Eigen/Dense>

#include "fedmix/params.hpp"

namespace fedmix {

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class OptimizerRegime { kFromScratch, kFineTune };

// lr = 1e-3 when training from scratch, 1e-4 when fine-tuning a pre-trained
// initialization; moments start at zero.
AdamState make_optimizer(OptimizerRegime regime, Eigen::Index param_len);

struct AdamResult {
  AdamState state;
  ParamVector params;
};

// One bias-corrected Adam update. Pure: returns fresh state and parameters.
AdamResult adam_step(const AdamState& state, const ParamVector& params,
                     const Eigen::VectorXd& grad);

}  // namespace fedmix
