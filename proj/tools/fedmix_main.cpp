// fedmix: desk-scale simulator of federated learning for speech enhancement.
//
// Subcommands: generate, pretrain, train, sweep, evaluate. Every error exits
// nonzero with a single machine-parsable "E_<CODE>: message" line on stderr.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmix/commands.hpp"

namespace {

using namespace fedmix;

ExperimentConfig load_experiment_config(const std::string& config_file,
                                        const std::vector<std::string>& overrides) {
  ExperimentConfig config;
  if (!config_file.empty()) config = load_config_file(config_file, config);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + kv + "' is not of the form key=value");
    }
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

void print_eval(const char* split, double one_noise, double two_noise) {
  std::printf("%s  si_sdri_1n=%.4f dB  si_sdri_2n=%.4f dB\n", split, one_noise, two_noise);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedmix: federated speech-enhancement training simulator"};
  app.require_subcommand(1);

  // ---- generate ----
  auto* generate = app.add_subcommand("generate", "synthesize a training corpus");
  CorpusSpec spec;
  std::string spec_out = "corpus";
  generate->add_option("--out", spec_out, "output directory");
  generate->add_option("--train-speakers", spec.train_speakers, "train speakers");
  generate->add_option("--valid-speakers", spec.valid_speakers, "validation speakers");
  generate->add_option("--test-speakers", spec.test_speakers, "test speakers");
  generate->add_option("--clips-per-speaker", spec.clips_per_speaker, "train clips per speaker");
  generate->add_option("--eval-clips-per-speaker", spec.eval_clips_per_speaker,
                       "valid/test clips per speaker");
  generate->add_option("--seconds", spec.clip_seconds, "clip length in seconds");
  generate->add_option("--rate", spec.sample_rate, "sample rate in Hz");
  generate->add_option("--seed", spec.seed, "corpus seed");
  generate->add_option("--snr-min", spec.snr_min_db, "minimum mixture SNR (dB)");
  generate->add_option("--snr-max", spec.snr_max_db, "maximum mixture SNR (dB)");
  generate->add_option("--f0-min", spec.f0_min_hz, "lowest speaker fundamental (Hz)");
  generate->add_option("--f0-max", spec.f0_max_hz, "highest speaker fundamental (Hz)");
  generate->add_option("--noise-pole-min", spec.noise_pole_min, "AR(1) pole lower bound");
  generate->add_option("--noise-pole-max", spec.noise_pole_max, "AR(1) pole upper bound");
  generate->add_option("--prefix", spec.id_prefix, "speaker id prefix");

  // ---- shared config options ----
  std::string config_file;
  std::vector<std::string> overrides;
  auto add_config_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key=value config file");
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
  };

  auto* train = app.add_subcommand("train", "run federated training");
  add_config_options(train);

  auto* pretrain = app.add_subcommand("pretrain", "supervised single-node pre-training");
  add_config_options(pretrain);

  auto* sweep = app.add_subcommand("sweep", "train across supervised-client fractions");
  add_config_options(sweep);
  std::vector<double> ps_list{0.0, 0.25, 0.5, 0.75, 1.0};
  sweep->add_option("--ps", ps_list, "supervised fractions to sweep");

  auto* evaluate = app.add_subcommand("evaluate", "re-score a checkpoint");
  add_config_options(evaluate);
  std::string checkpoint_path;
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint to score")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      spec.out_dir = spec_out;
      const GenerateOutcome outcome = run_generate(spec);
      std::printf("manifest: %s (%d clips)\n", outcome.manifest_path.c_str(),
                  outcome.num_entries);
    } else if (train->parsed()) {
      const ExperimentConfig config = load_experiment_config(config_file, overrides);
      const TrainOutcome outcome = run_train(config);
      std::printf("best round %d  valid_2n=%.4f dB  test_2n=%.4f dB\n", outcome.best_round,
                  outcome.best_metrics.valid_sisdri_2n, outcome.best_metrics.test_sisdri_2n);
      // upload volume per round: one weight vector from each participant
      const double params_mb =
          static_cast<double>(layout_size(layout_of(config.model_config()))) * 8.0 / 1.0e6;
      std::printf("server traffic: %.2f MB/round (%d participants x %.2f MB)\n",
                  params_mb * participants_per_round(outcome.effective_num_clients),
                  participants_per_round(outcome.effective_num_clients), params_mb);
      std::printf("checkpoints: %s %s\n", outcome.best_checkpoint.c_str(),
                  outcome.final_checkpoint.c_str());
    } else if (pretrain->parsed()) {
      const ExperimentConfig config = load_experiment_config(config_file, overrides);
      const PretrainOutcome outcome = run_pretrain(config);
      std::printf("pretrained checkpoint: %s (%d epochs)\n",
                  outcome.checkpoint_path.c_str(), outcome.epochs_run);
    } else if (sweep->parsed()) {
      const ExperimentConfig config = load_experiment_config(config_file, overrides);
      const SweepOutcome outcome = run_sweep(config, ps_list);
      std::printf("summary: %s\n", outcome.summary_path.c_str());
      for (const auto& row : outcome.rows) {
        std::printf("p_s=%.2f  best_round=%d  test_1n=%.4f dB  test_2n=%.4f dB\n",
                    row.supervised_fraction, row.best_round, row.test_sisdri_1n,
                    row.test_sisdri_2n);
      }
    } else if (evaluate->parsed()) {
      const ExperimentConfig config = load_experiment_config(config_file, overrides);
      const EvaluateOutcome outcome = run_evaluate(config, checkpoint_path);
      print_eval("valid", outcome.valid_sisdri_1n, outcome.valid_sisdri_2n);
      print_eval("test ", outcome.test_sisdri_1n, outcome.test_sisdri_2n);
    }
  } catch (const ContractViolation& e) {
    std::cerr << "E_CONTRACT: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "E_DOMAIN: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "E_NUMERIC: " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "E_CONFIG: " << e.what() << '\n';
    return 5;
  } catch (const IngestionError& e) {
    std::cerr << "E_INGEST: " << e.what() << '\n';
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
