#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedmix/data.hpp"
#include "fedmix/model.hpp"
#include "fedmix/server.hpp"

namespace fedmix {

enum class NoiseCondition { kOneNoise, kTwoNoise };

// One scored example: the clean target s1, its paired first noise s2 inside
// the stored mixture x = s1 + s2, and a frozen extra noise for the two-noise
// condition.
struct EvalExample {
  std::string clip_id;
  AudioBuffer speech;      // s1
  AudioBuffer mixture_x;   // s1 + s2
  AudioBuffer extra_noise; // n, drawn once at set construction
};

struct EvalSet {
  std::string split;
  std::vector<EvalExample> examples;
};

// Builds the evaluation set for a split: held-out speaker folds are paired
// exactly like training folds, and each retained mixture gets one noise clip
// drawn from the split's noise pool with a fixed seed, so every round scores
// the same mixtures.
EvalSet build_eval_set(const Manifest& manifest, const std::string& split,
                       int sample_rate, std::uint64_t pairing_seed);

struct EvalResult {
  std::string split;
  NoiseCondition condition = NoiseCondition::kOneNoise;
  double mean_si_sdri = 0.0;
  std::vector<double> per_example;
  int num_examples = 0;
};

using SeparateFn = std::function<SourceStack(const AudioBuffer&)>;

// Scores slot 1 of the separation against the clean speech:
// SI-SDRi = SI-SDR(s_hat_1, s1) - SI-SDR(m, s1), m per the condition.
EvalResult evaluate_with(const SeparateFn& separate_fn, const EvalSet& eval_set,
                         NoiseCondition condition);

EvalResult evaluate_model(const ModelConfig& config, const ParamVector& params,
                          const EvalSet& eval_set, NoiseCondition condition);

// Round with the highest validation SI-SDRi (two-noise by default) among the
// evaluated rounds inside the final `window` rounds; ties go to the later
// round. Returns -1 when no evaluated round falls in the window.
int select_best_round(std::span<const RoundRecord> history, int window,
                      bool use_two_noise = true);

}  // namespace fedmix
