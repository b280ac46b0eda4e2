#include "fedmix/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fedmix/model.hpp"
#include "fedmix/signal.hpp"

namespace fedmix {

namespace {

void check_instance_buffers(const LossInstance& instance) {
  check_combinable(instance.noisy_speech, instance.noise);
  check_combinable(instance.mom, instance.noisy_speech);
  if (instance.kind == LossKind::kSupervised) {
    require(instance.references.has_value(),
            "supervised instance is missing references");
    check_combinable(instance.references->first, instance.noisy_speech);
    check_combinable(instance.references->second, instance.noisy_speech);
  }
}

void check_stack(const SourceStack& estimates, const LossInstance& instance) {
  require(estimates.num_sources() == 3, "loss: estimate stack must hold M=3 sources");
  require(estimates.length() == instance.mom.length(), "loss: length mismatch");
}

double neg_si_sdr_value(const Eigen::VectorXd& est, const Eigen::VectorXd& target) {
  return -si_sdr_eval(est, target).db;
}

}  // namespace

LossInstance make_unsupervised_instance(AudioBuffer noisy_speech, AudioBuffer noise) {
  check_combinable(noisy_speech, noise);
  LossInstance instance;
  instance.kind = LossKind::kUnsupervised;
  instance.mom = synthesize_mom(noisy_speech, noise);
  instance.noisy_speech = std::move(noisy_speech);
  instance.noise = std::move(noise);
  return instance;
}

LossInstance make_supervised_instance(AudioBuffer noisy_speech, AudioBuffer noise,
                                      AudioBuffer speech_ref, AudioBuffer noise_ref) {
  check_combinable(noisy_speech, noise);
  check_combinable(speech_ref, noisy_speech);
  check_combinable(noise_ref, noisy_speech);
  const double worst =
      (noisy_speech.samples - speech_ref.samples - noise_ref.samples)
          .cwiseAbs()
          .maxCoeff();
  require(worst <= 1e-6,
          "supervised instance: references do not sum to the noisy mixture");
  LossInstance instance;
  instance.kind = LossKind::kSupervised;
  instance.mom = synthesize_mom(noisy_speech, noise);
  instance.noisy_speech = std::move(noisy_speech);
  instance.noise = std::move(noise);
  instance.references = std::make_pair(std::move(speech_ref), std::move(noise_ref));
  return instance;
}

double supervised_loss(const SourceStack& estimates, const LossInstance& instance) {
  require(instance.kind == LossKind::kSupervised, "supervised_loss: wrong instance kind");
  check_instance_buffers(instance);
  check_stack(estimates, instance);

  const Eigen::VectorXd est1 = estimates.sources.row(0).transpose();
  const Eigen::VectorXd est2 = estimates.sources.row(1).transpose();
  const Eigen::VectorXd est3 = estimates.sources.row(2).transpose();
  const Eigen::VectorXd& s1 = instance.references->first.samples;
  const Eigen::VectorXd& s2 = instance.references->second.samples;
  const Eigen::VectorXd& n = instance.noise.samples;

  const double speech_term = neg_si_sdr_value(est1, s1);
  const double perm_identity = neg_si_sdr_value(est2, s2) + neg_si_sdr_value(est3, n);
  const double perm_swapped = neg_si_sdr_value(est3, s2) + neg_si_sdr_value(est2, n);
  return speech_term + 0.5 * std::min(perm_identity, perm_swapped);
}

double unsupervised_mixit_loss(const SourceStack& estimates, const LossInstance& instance) {
  require(instance.kind == LossKind::kUnsupervised,
          "unsupervised_mixit_loss: wrong instance kind");
  check_instance_buffers(instance);
  check_stack(estimates, instance);

  const Eigen::VectorXd est1 = estimates.sources.row(0).transpose();
  const Eigen::VectorXd est2 = estimates.sources.row(1).transpose();
  const Eigen::VectorXd est3 = estimates.sources.row(2).transpose();
  const Eigen::VectorXd& x = instance.noisy_speech.samples;
  const Eigen::VectorXd& n = instance.noise.samples;

  const Eigen::VectorXd sum12 = est1 + est2;
  const Eigen::VectorXd sum13 = est1 + est3;
  const double perm_identity = neg_si_sdr_value(sum12, x) + neg_si_sdr_value(est3, n);
  const double perm_swapped = neg_si_sdr_value(sum13, x) + neg_si_sdr_value(est2, n);
  return std::min(perm_identity, perm_swapped);
}

ad::Value build_loss(ad::Tape& tape, ad::Value stack_tm, const LossInstance& instance) {
  check_instance_buffers(instance);
  const Eigen::MatrixXd& stack = tape.matrix_of(stack_tm);
  require(stack.cols() == 3, "loss: estimate stack must hold M=3 sources");
  require(stack.rows() == instance.mom.length(), "loss: length mismatch");

  const ad::Value est1 = tape.slice_cols(stack_tm, 0, 1);
  const ad::Value est2 = tape.slice_cols(stack_tm, 1, 1);
  const ad::Value est3 = tape.slice_cols(stack_tm, 2, 1);

  if (instance.kind == LossKind::kSupervised) {
    const ad::Value s1 = tape.constant(instance.references->first.samples, "s1");
    const ad::Value s2 = tape.constant(instance.references->second.samples, "s2");
    const ad::Value n = tape.constant(instance.noise.samples, "n");
    const ad::Value speech_term = tape.neg_si_sdr(est1, s1);
    const ad::Value perm_identity =
        tape.add(tape.neg_si_sdr(est2, s2), tape.neg_si_sdr(est3, n));
    const ad::Value perm_swapped =
        tape.add(tape.neg_si_sdr(est3, s2), tape.neg_si_sdr(est2, n));
    return tape.add(speech_term, tape.scale(tape.min2(perm_identity, perm_swapped), 0.5));
  }

  const ad::Value x = tape.constant(instance.noisy_speech.samples, "x");
  const ad::Value n = tape.constant(instance.noise.samples, "n");
  const ad::Value sum12 = tape.add(est1, est2);
  const ad::Value sum13 = tape.add(est1, est3);
  const ad::Value perm_identity =
      tape.add(tape.neg_si_sdr(sum12, x), tape.neg_si_sdr(est3, n));
  const ad::Value perm_swapped =
      tape.add(tape.neg_si_sdr(sum13, x), tape.neg_si_sdr(est2, n));
  return tape.min2(perm_identity, perm_swapped);
}

ad::Program LossProgram::bind(const LossInstance& instance) const {
  require(instance.kind == kind, "loss program: instance kind mismatch");
  const ModelConfig model_config = config;
  const LossInstance bound = instance;
  return [model_config, bound](ad::Tape& tape) {
    const ad::Value stack = build_separator(tape, model_config, bound.mom.samples);
    return build_loss(tape, stack, bound);
  };
}

LossProgram make_loss_program(LossKind kind, const ModelConfig& config) {
  validate_model_config(config);
  require(config.num_sources == 3, "loss program: model must emit M=3 sources");
  return LossProgram{kind, config};
}

}  // namespace fedmix
