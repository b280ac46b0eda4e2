#include "fedmix/signal.hpp"

#include <cmath>

#include "fedmix/kernels.hpp"

namespace fedmix {

AudioBuffer make_audio(Eigen::VectorXd samples, int sample_rate) {
  require(samples.size() > 0, "audio buffer must have at least one sample");
  require(sample_rate > 0, "sample rate must be positive");
  if (!samples.allFinite()) throw NumericError("audio buffer contains non-finite samples");
  return AudioBuffer{std::move(samples), sample_rate};
}

void check_combinable(const AudioBuffer& a, const AudioBuffer& b) {
  require(a.length() == b.length(), "buffer lengths differ");
  require(a.sample_rate == b.sample_rate, "sample rates differ");
}

SiSdrEval si_sdr_eval(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                      const Eigen::Ref<const Eigen::VectorXd>& target) {
  require(estimate.size() == target.size(), "si_sdr: length mismatch");
  const double target_energy = target.squaredNorm();
  if (target_energy == 0.0) throw DomainError("si_sdr: target is identically zero");

  const double proj = estimate.dot(target);
  const double alpha = proj / target_energy;
  const double scaled_energy = alpha * alpha * target_energy;  // ||alpha*y||^2
  const double residual_energy = (alpha * target - estimate).squaredNorm();
  const double denom = residual_energy + kSiSdrEps * scaled_energy;

  SiSdrEval out;
  if (scaled_energy == 0.0) {
    out.db = -kSiSdrCapDb;
    out.capped = true;
    return out;
  }
  out.db = 10.0 * std::log10(scaled_energy / denom);
  if (out.db > kSiSdrCapDb) {
    out.db = kSiSdrCapDb;
    out.capped = true;
  } else if (out.db < -kSiSdrCapDb) {
    out.db = -kSiSdrCapDb;
    out.capped = true;
  }
  return out;
}

Eigen::VectorXd si_sdr_grad(const Eigen::Ref<const Eigen::VectorXd>& estimate,
                            const Eigen::Ref<const Eigen::VectorXd>& target) {
  const SiSdrEval eval = si_sdr_eval(estimate, target);
  if (eval.capped) return Eigen::VectorXd::Zero(estimate.size());

  const double target_energy = target.squaredNorm();
  const double proj = estimate.dot(target);
  const double alpha = proj / target_energy;
  const double scaled_energy = alpha * alpha * target_energy;
  const Eigen::VectorXd residual = alpha * target - estimate;
  const double denom = residual.squaredNorm() + kSiSdrEps * scaled_energy;

  // d num / d est = (2*alpha) * y; d den / d est = -2*r + eps * d num.
  const double k = 10.0 / std::log(10.0);
  const Eigen::VectorXd dnum = (2.0 * alpha) * target;
  return k * (dnum / scaled_energy - (-2.0 * residual + kSiSdrEps * dnum) / denom);
}

double si_sdr(const AudioBuffer& estimate, const AudioBuffer& target) {
  check_combinable(estimate, target);
  return si_sdr_eval(estimate.samples, target.samples).db;
}

double si_sdr_improvement(const AudioBuffer& estimate, const AudioBuffer& target,
                          const AudioBuffer& input_mixture) {
  check_combinable(estimate, target);
  check_combinable(input_mixture, target);
  return si_sdr(estimate, target) - si_sdr(input_mixture, target);
}

AudioBuffer synthesize_mom(const AudioBuffer& noisy_speech, const AudioBuffer& noise) {
  check_combinable(noisy_speech, noise);
  return AudioBuffer{noisy_speech.samples + noise.samples, noisy_speech.sample_rate};
}

SourceStack mixture_consistency_project(const SourceStack& estimates,
                                        const AudioBuffer& mixture) {
  require(estimates.num_sources() >= 1, "projection needs at least one source");
  require(estimates.length() == mixture.length(), "projection: length mismatch");
  require(estimates.sample_rate == mixture.sample_rate, "projection: sample rate mismatch");
  const Eigen::MatrixXd stack_tm = estimates.sources.transpose();
  const Eigen::MatrixXd projected = kern::mix_consistency(stack_tm, mixture.samples);
  return SourceStack{projected.transpose(), estimates.sample_rate};
}

}  // namespace fedmix
