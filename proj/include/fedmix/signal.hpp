#pragma once

#include <Eigen/Dense>

#include "fedmix/audio.hpp"

namespace fedmix {

// Guard for the SI-SDR ratio. The epsilon is applied relative to the scaled
// target energy, which keeps the metric exactly scale invariant while still
// bounding the ratio by 1/eps at zero residual. Values are clamped to
// [-cap_db, +cap_db].
inline constexpr double kSiSdrEps = 1e-8;
inline constexpr double kSiSdrCapDb = 60.0;

struct SiSdrEval {
  double db = 0.0;
  bool capped = false;  // clamped at either bound; gradient is zero there
};

// SI-SDR(estimate, target) in dB over raw sample vectors. Throws DomainError
// when the target is identically zero.
SiSdrEval si_sdr_eval(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                      const Eigen::Ref<const Eigen::VectorXd>& target);

// d SI-SDR / d estimate at an uncapped point; zero vector when capped.
Eigen::VectorXd si_sdr_grad(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                            const Eigen::Ref<const Eigen::VectorXd>& target);

double si_sdr(const AudioBuffer& estimate, const AudioBuffer& target);

// si_sdr(estimate, target) - si_sdr(input_mixture, target).
double si_sdr_improvement(const AudioBuffer& estimate, const AudioBuffer& target,
                          const AudioBuffer& input_mixture);

// Elementwise sum x + n (the training-time mixture of mixtures).
AudioBuffer synthesize_mom(const AudioBuffer& noisy_speech, const AudioBuffer& noise);

// Distributes the residual (mixture - sum of estimates) uniformly over the M
// sources so the outputs sum to the mixture.
SourceStack mixture_consistency_project(const SourceStack& estimates,
                                        const AudioBuffer& mixture);

}  // namespace fedmix
