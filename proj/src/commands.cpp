#include "fedmix/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace fedmix {

namespace fs = std::filesystem;

fs::path resolve_out_dir(const std::string& out_dir) {
  fs::path path(out_dir);
  const char* root = std::getenv("FEDMIX_OUT_ROOT");
  if (root != nullptr && root[0] != '\0' && path.is_relative()) {
    return fs::path(root) / path;
  }
  return path;
}

GenerateOutcome run_generate(const CorpusSpec& spec) {
  CorpusSpec resolved = spec;
  resolved.out_dir = resolve_out_dir(spec.out_dir.string());
  const Manifest manifest = generate_synthetic_corpus(resolved);
  return GenerateOutcome{resolved.out_dir / "manifest.tsv",
                         static_cast<int>(manifest.entries.size())};
}

namespace {

std::string format_db(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += '|';
    out += std::to_string(ids[i]);
  }
  return out;
}

double manifest_clip_seconds(const Manifest& manifest) {
  double seconds = 0.0;
  for (const auto& e : manifest.entries) {
    if (e.role != ClipRole::kMixture) continue;
    if (seconds == 0.0) {
      seconds = e.duration_s;
    } else if (std::abs(e.duration_s - seconds) > 1e-9) {
      throw ConfigError("manifest mixes clip durations; fixed-length chunks required");
    }
  }
  if (seconds <= 0.0) throw ConfigError("manifest holds no mixtures");
  return seconds;
}

struct PreparedRun {
  Manifest manifest;
  std::vector<ClientState> clients;
  std::vector<long> client_sizes;
  FedRunConfig fed;
  EvalSet valid_set;
  EvalSet test_set;
  ParamVector initial;
};

OptimizerRegime regime_of(const ExperimentConfig& config) {
  return config.regime == "fine_tune" ? OptimizerRegime::kFineTune
                                      : OptimizerRegime::kFromScratch;
}

// Builds clients, eval sets and the initial weights for a training run.
PreparedRun prepare_run(const ExperimentConfig& config, bool supervised_all) {
  PreparedRun run;
  run.manifest = read_manifest(config.manifest);

  const ModelConfig model = config.model_config();
  run.fed.model = model;
  run.fed.batch_size = config.batch_size;
  run.fed.eval_every = config.eval_every;
  run.fed.selection_window = config.selection_window;
  run.fed.workers = config.workers;
  run.fed.reset_moments = config.reset_moments;
  run.fed.weighted_aggregate = config.weighted_aggregate;
  run.fed.sampling_seed = config.sampling_seed();
  run.fed.clip_seconds = manifest_clip_seconds(run.manifest);

  auto datasets = build_client_datasets(run.manifest, config.num_clients,
                                        config.partition_seed(), config.sample_rate);
  const int supervised_count =
      supervised_all
          ? config.num_clients
          : static_cast<int>(std::llround(config.supervised_fraction * config.num_clients));

  const OptimizerRegime regime = regime_of(config);
  auto make_client = [&](int id, ClientDataset dataset) {
    ClientState client;
    client.id = id;
    client.kind = id < supervised_count ? LossKind::kSupervised : LossKind::kUnsupervised;
    client.dataset = std::move(dataset);
    client.seed = mix_seed(config.training_seed(), static_cast<std::uint64_t>(id));
    client.optimizer = make_optimizer(regime, layout_size(layout_of(model)));
    return client;
  };

  if (config.solo_client >= 0) {
    run.clients.push_back(make_client(
        config.solo_client,
        std::move(datasets[static_cast<std::size_t>(config.solo_client)])));
  } else {
    for (int id = 0; id < config.num_clients; ++id) {
      run.clients.push_back(make_client(id, std::move(datasets[static_cast<std::size_t>(id)])));
    }
  }
  for (const auto& client : run.clients) {
    run.client_sizes.push_back(static_cast<long>(client.dataset.mixtures.size()));
  }

  run.valid_set = build_eval_set(run.manifest, "valid", config.sample_rate,
                                 config.eval_pairing_seed());
  run.test_set = build_eval_set(run.manifest, "test", config.sample_rate,
                                mix_seed(config.eval_pairing_seed(), 0x54455354ULL));

  if (!config.init_checkpoint.empty()) {
    run.initial = load_checkpoint(config.init_checkpoint, model).params;
  } else {
    run.initial = init_params(model);
  }
  return run;
}

class MetricsCsv {
 public:
  explicit MetricsCsv(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IngestionError("cannot open metrics csv: " + path.string());
    out_ << "round,participants,audio_hours,valid_sisdri_1n,valid_sisdri_2n,"
            "test_sisdri_1n,test_sisdri_2n,wall_seconds\n";
    out_.flush();
  }

  void append(const RoundRecord& record) {
    if (!record.metrics.has_values) return;
    char wall[32];
    std::snprintf(wall, sizeof(wall), "%.3f", record.wall_seconds);
    out_ << record.round << ',' << join_ids(record.participants) << ','
         << format_db(record.audio_hours) << ','
         << format_db(record.metrics.valid_sisdri_1n) << ','
         << format_db(record.metrics.valid_sisdri_2n) << ','
         << format_db(record.metrics.test_sisdri_1n) << ','
         << format_db(record.metrics.test_sisdri_2n) << ',' << wall << '\n';
    out_.flush();  // a killed run loses at most one row
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainOutcome run_train(const ExperimentConfig& config) {
  validate_experiment_config(config);
  PreparedRun run = prepare_run(config, /*supervised_all=*/false);

  const fs::path out_dir = resolve_out_dir(config.out_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream echo(out_dir / "config.resolved", std::ios::binary);
    echo << render_config(config);
  }

  const ModelConfig model = config.model_config();
  Evaluator evaluator = [&](const ParamVector& params) {
    EvalSummary summary;
    summary.valid_sisdri_1n =
        evaluate_model(model, params, run.valid_set, NoiseCondition::kOneNoise).mean_si_sdri;
    summary.valid_sisdri_2n =
        evaluate_model(model, params, run.valid_set, NoiseCondition::kTwoNoise).mean_si_sdri;
    summary.test_sisdri_1n =
        evaluate_model(model, params, run.test_set, NoiseCondition::kOneNoise).mean_si_sdri;
    summary.test_sisdri_2n =
        evaluate_model(model, params, run.test_set, NoiseCondition::kTwoNoise).mean_si_sdri;
    return summary;
  };

  MetricsCsv csv(out_dir / "metrics.csv");
  RoundCallback on_round = [&](const RoundRecord& record, const ParamVector& params) {
    csv.append(record);
    if (record.round % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_round_%05d.ckpt", record.round);
      save_checkpoint(out_dir / name, model, params,
                      CheckpointInfo{static_cast<std::uint32_t>(record.round), config.seed});
    }
  };

  TrainingOutcome training = run_training(run.initial, std::move(run.clients),
                                          config.rounds, run.fed, evaluator, on_round);

  TrainOutcome outcome;
  outcome.best_round = training.best_round;
  for (const auto& record : training.server.history) {
    if (record.round == training.best_round) outcome.best_metrics = record.metrics;
  }
  outcome.history = std::move(training.server.history);
  outcome.client_sizes = std::move(run.client_sizes);
  outcome.effective_num_clients = config.solo_client >= 0 ? 1 : config.num_clients;
  outcome.out_dir = out_dir;
  outcome.csv_path = out_dir / "metrics.csv";
  outcome.best_checkpoint = out_dir / "best.ckpt";
  outcome.final_checkpoint = out_dir / "final.ckpt";
  save_checkpoint(outcome.best_checkpoint, model, training.best_params,
                  CheckpointInfo{static_cast<std::uint32_t>(training.best_round), config.seed});
  save_checkpoint(outcome.final_checkpoint, model, training.server.global_params,
                  CheckpointInfo{static_cast<std::uint32_t>(config.rounds), config.seed});
  return outcome;
}

PretrainOutcome run_pretrain(const ExperimentConfig& config) {
  validate_experiment_config(config);

  // Pre-training runs fully supervised on a single node over its own corpus;
  // the federated corpus must not share speakers with it.
  ExperimentConfig pre = config;
  pre.num_clients = 1;
  pre.solo_client = -1;
  PreparedRun run = prepare_run(pre, /*supervised_all=*/true);

  if (!config.fl_manifest.empty()) {
    const Manifest fl_manifest = read_manifest(config.fl_manifest);
    const auto pretrain_speakers = speaker_set(run.manifest);
    for (const auto& speaker : speaker_set(fl_manifest)) {
      if (pretrain_speakers.count(speaker) > 0) {
        throw ConfigError("pretrain corpus shares speaker '" + speaker +
                          "' with the federated corpus");
      }
    }
  }

  const fs::path out_dir = resolve_out_dir(config.out_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream echo(out_dir / "config.resolved", std::ios::binary);
    echo << render_config(config);
  }

  const ModelConfig model = pre.model_config();
  ParamVector params = run.initial;

  if (config.epochs > 0) {
    Evaluator evaluator = [&](const ParamVector& p) {
      EvalSummary summary;
      summary.valid_sisdri_1n =
          evaluate_model(model, p, run.valid_set, NoiseCondition::kOneNoise).mean_si_sdri;
      summary.valid_sisdri_2n =
          evaluate_model(model, p, run.valid_set, NoiseCondition::kTwoNoise).mean_si_sdri;
      summary.test_sisdri_1n =
          evaluate_model(model, p, run.test_set, NoiseCondition::kOneNoise).mean_si_sdri;
      summary.test_sisdri_2n =
          evaluate_model(model, p, run.test_set, NoiseCondition::kTwoNoise).mean_si_sdri;
      return summary;
    };
    MetricsCsv csv(out_dir / "metrics.csv");

    // The hand-off takes the final weights, not a validation-selected round.
    ServerState server;
    server.global_params = run.initial;
    server.rng_seed = run.fed.sampling_seed;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      run_round(server, run.clients, run.fed, evaluator);
      csv.append(server.history.back());
    }
    params = server.global_params;
  }

  PretrainOutcome outcome;
  outcome.epochs_run = config.epochs;
  outcome.checkpoint_path = out_dir / "pretrained.ckpt";
  save_checkpoint(outcome.checkpoint_path, model, params,
                  CheckpointInfo{static_cast<std::uint32_t>(config.epochs), config.seed});
  return outcome;
}

SweepOutcome run_sweep(const ExperimentConfig& base, const std::vector<double>& ps_list) {
  require(!ps_list.empty(), "sweep: empty supervision list");
  const fs::path out_dir = resolve_out_dir(base.out_dir);
  fs::create_directories(out_dir);

  SweepOutcome outcome;
  for (const double ps : ps_list) {
    ExperimentConfig config = base;
    config.supervised_fraction = ps;
    char sub[32];
    std::snprintf(sub, sizeof(sub), "ps_%.2f", ps);
    config.out_dir = (fs::path(base.out_dir) / sub).string();
    const TrainOutcome train = run_train(config);

    SweepRow row;
    row.supervised_fraction = ps;
    row.best_round = train.best_round;
    row.valid_sisdri_1n = train.best_metrics.valid_sisdri_1n;
    row.valid_sisdri_2n = train.best_metrics.valid_sisdri_2n;
    row.test_sisdri_1n = train.best_metrics.test_sisdri_1n;
    row.test_sisdri_2n = train.best_metrics.test_sisdri_2n;
    outcome.rows.push_back(row);
  }

  outcome.summary_path = out_dir / "summary.tsv";
  std::ofstream summary(outcome.summary_path, std::ios::binary);
  if (!summary) throw IngestionError("cannot open sweep summary: " + outcome.summary_path.string());
  summary << "supervised_fraction\tbest_round\tvalid_sisdri_1n\tvalid_sisdri_2n\t"
             "test_sisdri_1n\ttest_sisdri_2n\n";
  for (const auto& row : outcome.rows) {
    char ps[32];
    std::snprintf(ps, sizeof(ps), "%.2f", row.supervised_fraction);
    summary << ps << '\t' << row.best_round << '\t' << format_db(row.valid_sisdri_1n)
            << '\t' << format_db(row.valid_sisdri_2n) << '\t'
            << format_db(row.test_sisdri_1n) << '\t' << format_db(row.test_sisdri_2n)
            << '\n';
  }
  return outcome;
}

EvaluateOutcome run_evaluate(const ExperimentConfig& config,
                             const std::filesystem::path& checkpoint_path) {
  if (config.manifest.empty()) throw ConfigError("config field 'manifest' is required");
  const Manifest manifest = read_manifest(config.manifest);
  const ModelConfig model = config.model_config();
  const ParamVector params = load_checkpoint(checkpoint_path, model).params;

  const EvalSet valid_set =
      build_eval_set(manifest, "valid", config.sample_rate, config.eval_pairing_seed());
  const EvalSet test_set = build_eval_set(manifest, "test", config.sample_rate,
                                          mix_seed(config.eval_pairing_seed(), 0x54455354ULL));

  EvaluateOutcome outcome;
  outcome.valid_sisdri_1n =
      evaluate_model(model, params, valid_set, NoiseCondition::kOneNoise).mean_si_sdri;
  outcome.valid_sisdri_2n =
      evaluate_model(model, params, valid_set, NoiseCondition::kTwoNoise).mean_si_sdri;
  outcome.test_sisdri_1n =
      evaluate_model(model, params, test_set, NoiseCondition::kOneNoise).mean_si_sdri;
  outcome.test_sisdri_2n =
      evaluate_model(model, params, test_set, NoiseCondition::kTwoNoise).mean_si_sdri;
  return outcome;
}

}  // namespace fedmix
