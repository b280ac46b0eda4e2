#include "fedmix/adam.hpp"

#include <cmath>

namespace fedmix {

AdamState make_optimizer(OptimizerRegime regime, Eigen::Index param_len) {
  require(param_len > 0, "make_optimizer: param_len must be positive");
  AdamState state;
  state.first_moment = Eigen::VectorXd::Zero(param_len);
  state.second_moment = Eigen::VectorXd::Zero(param_len);
  state.learning_rate = regime == OptimizerRegime::kFineTune ? 1e-4 : 1e-3;
  return state;
}

AdamResult adam_step(const AdamState& state, const ParamVector& params,
                     const Eigen::VectorXd& grad) {
  require(state.first_moment.size() == params.size(), "adam_step: state/param mismatch");
  require(grad.size() == params.size(), "adam_step: grad/param mismatch");
  if (!grad.allFinite()) throw NumericError("adam_step: non-finite gradient");

  AdamResult out;
  out.state = state;
  out.state.step_count = state.step_count + 1;
  out.state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  out.state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseProduct(grad);

  const double t = static_cast<double>(out.state.step_count);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  const Eigen::VectorXd m_hat = out.state.first_moment / bias1;
  const Eigen::VectorXd v_hat = out.state.second_moment / bias2;

  const Eigen::ArrayXd denom = v_hat.array().sqrt() + state.eps;
  out.params = params;
  out.params.values -= state.learning_rate * (m_hat.array() / denom).matrix();
  return out;
}

}  // namespace fedmix
