#pragma once

#include <optional>
#include <utility>

#include "fedmix/audio.hpp"
#include "fedmix/params.hpp"
#include "fedmix/tape.hpp"

namespace fedmix {

enum class LossKind { kSupervised, kUnsupervised };

// One training example: the mixture-of-mixtures the model sees plus the
// targets each loss compares against. references = (s1, s2) is present iff
// the instance is supervised.
struct LossInstance {
  LossKind kind = LossKind::kUnsupervised;
  AudioBuffer mom;           // x + n, the model input
  AudioBuffer noisy_speech;  // x
  AudioBuffer noise;         // n
  std::optional<std::pair<AudioBuffer, AudioBuffer>> references;
};

// Validating constructors. The supervised variant checks x = s1 + s2 within
// 1e-6 per sample.
LossInstance make_unsupervised_instance(AudioBuffer noisy_speech, AudioBuffer noise);
LossInstance make_supervised_instance(AudioBuffer noisy_speech, AudioBuffer noise,
                                      AudioBuffer speech_ref, AudioBuffer noise_ref);

// L(s_hat_1, s1) + 1/2 * min over {(2,3),(3,2)} of [L(s_hat_p1, s2) + L(s_hat_p2, n)],
// with L = -SI-SDR. Ties resolve to the identity permutation (2,3).
double supervised_loss(const SourceStack& estimates, const LossInstance& instance);

// min over {(2,3),(3,2)} of [L(s_hat_1 + s_hat_p1, x) + L(s_hat_p2, n)].
// Slot 1 always takes part in reconstructing x.
double unsupervised_mixit_loss(const SourceStack& estimates, const LossInstance& instance);

// Records the matching loss on the tape given a T x M estimate stack.
// Evaluates bit-identically to the direct functions above.
ad::Value build_loss(ad::Tape& tape, ad::Value stack_tm, const LossInstance& instance);

// Full pipeline program (separator forward + loss) for the autodiff module.
struct LossProgram {
  LossKind kind = LossKind::kUnsupervised;
  ModelConfig config;

  ad::Program bind(const LossInstance& instance) const;
};

LossProgram make_loss_program(LossKind kind, const ModelConfig& config);

}  // namespace fedmix
