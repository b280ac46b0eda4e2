#include "fedmix/eval.hpp"

#include <map>

#include "fedmix/rng.hpp"
#include "fedmix/signal.hpp"

namespace fedmix {

EvalSet build_eval_set(const Manifest& manifest, const std::string& split,
                       int sample_rate, std::uint64_t pairing_seed) {
  std::map<std::string, std::vector<ManifestEntry>> folds;
  for (const auto& e : manifest.entries) {
    if (e.split == split && e.role == ClipRole::kMixture) {
      folds[e.speaker_id].push_back(e);
    }
  }
  if (folds.empty()) {
    throw ConfigError("eval: split '" + split + "' has no mixtures in the manifest");
  }

  std::vector<ManifestEntry> retained;
  std::vector<ManifestEntry> noise_pool;
  int fold_index = 0;
  for (const auto& [speaker, fold] : folds) {
    (void)speaker;
    auto pairing = pair_mixtures_with_noise(fold, mix_seed(pairing_seed, fold_index++));
    retained.insert(retained.end(), pairing.mixtures.begin(), pairing.mixtures.end());
    noise_pool.insert(noise_pool.end(), pairing.noise_sources.begin(),
                      pairing.noise_sources.end());
  }
  require(!noise_pool.empty(), "eval: empty noise pool after pairing");

  EvalSet set;
  set.split = split;
  Rng rng(mix_seed(pairing_seed, 0x4556414cULL));
  for (const auto& e : retained) {
    EvalExample example;
    example.clip_id = e.clip_id;
    example.mixture_x = load_clip(manifest.root_dir / e.path, sample_rate);
    example.speech = load_clip(manifest.root_dir / e.ref1_path, sample_rate);
    const auto& noise_entry = noise_pool[rng.below(noise_pool.size())];
    example.extra_noise =
        load_clip(manifest.root_dir / noise_entry.ref2_path, sample_rate);
    if (example.speech.samples.isZero(0.0)) {
      throw ConfigError("eval: clip '" + e.clip_id + "' has an all-zero speech reference");
    }
    set.examples.push_back(std::move(example));
  }
  return set;
}

EvalResult evaluate_with(const SeparateFn& separate_fn, const EvalSet& eval_set,
                         NoiseCondition condition) {
  require(!eval_set.examples.empty(), "evaluate: empty eval set");
  EvalResult result;
  result.split = eval_set.split;
  result.condition = condition;
  result.per_example.reserve(eval_set.examples.size());

  double total = 0.0;
  for (const auto& example : eval_set.examples) {
    const AudioBuffer mixture = condition == NoiseCondition::kOneNoise
                                    ? example.mixture_x
                                    : synthesize_mom(example.mixture_x, example.extra_noise);
    const SourceStack stack = separate_fn(mixture);
    require(stack.length() == mixture.length(), "evaluate: separator length mismatch");
    const AudioBuffer speech_estimate = stack.source(0);
    const double improvement =
        si_sdr_improvement(speech_estimate, example.speech, mixture);
    result.per_example.push_back(improvement);
    total += improvement;
  }
  result.num_examples = static_cast<int>(result.per_example.size());
  result.mean_si_sdri = total / static_cast<double>(result.num_examples);
  return result;
}

EvalResult evaluate_model(const ModelConfig& config, const ParamVector& params,
                          const EvalSet& eval_set, NoiseCondition condition) {
  return evaluate_with(
      [&](const AudioBuffer& mixture) { return separate(config, params, mixture); },
      eval_set, condition);
}

int select_best_round(std::span<const RoundRecord> history, int window,
                      bool use_two_noise) {
  require(window >= 1, "select_best_round: window must be positive");
  if (history.empty()) return -1;
  const int last_round = history.back().round;
  const int first_considered = last_round - std::min(window, last_round) + 1;

  int best_round = -1;
  double best_value = 0.0;
  for (const auto& record : history) {
    if (!record.metrics.has_values || record.round < first_considered) continue;
    const double value = use_two_noise ? record.metrics.valid_sisdri_2n
                                       : record.metrics.valid_sisdri_1n;
    if (best_round < 0 || value >= best_value) {  // ties go to the later round
      best_round = record.round;
      best_value = value;
    }
  }
  return best_round;
}

}  // namespace fedmix
