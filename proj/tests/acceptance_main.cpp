// Acceptance suite: runs every criterion end to end on synthetic corpora and
// prints one pass/fail line per criterion. Exit code is the failure count.
//
// Usage: fedmix_acceptance [--only 1,2,5] [--workdir DIR]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedmix/commands.hpp"
#include "fedmix/eval.hpp"
#include "fedmix/signal.hpp"

namespace fs = std::filesystem;
using namespace fedmix;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Drops the trailing wall_seconds field of each CSV line. Wall time is the
// one intentionally non-deterministic column.
std::string strip_wall_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    out += line.substr(0, comma);
    out += '\n';
  }
  return out;
}

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

struct AcceptanceContext {
  fs::path workdir;

  fs::path main_manifest;
  fs::path alt_manifest;

  std::optional<TrainOutcome> fed_scratch;  // C=8, R=200, unsupervised
  std::optional<TrainOutcome> pooled;       // C=1 on all data
  std::vector<TrainOutcome> solos;          // isolated single clients
  std::optional<PretrainOutcome> pretrain;
  std::optional<TrainOutcome> fed_finetune;
  std::optional<TrainOutcome> sweep_half;  // p_s = 0.5
  std::optional<TrainOutcome> sweep_full;  // p_s = 1.0

  // The default synthetic corpus: 8 training speakers (one per client at
  // C=8), individual voices spread over the full f0 range.
  CorpusSpec main_spec() const {
    CorpusSpec spec;
    spec.seed = 7;
    spec.id_prefix = "a";
    spec.out_dir = workdir / "corpus_main";
    return spec;
  }

  // Pre-training distribution: disjoint speaker ids, higher fundamentals,
  // opposite-sign noise poles.
  CorpusSpec alt_spec() const {
    CorpusSpec spec;
    spec.train_speakers = 8;
    spec.valid_speakers = 2;
    spec.test_speakers = 2;
    spec.eval_clips_per_speaker = 8;
    spec.seed = 11;
    spec.f0_min_hz = 160.0;
    spec.f0_max_hz = 480.0;
    spec.noise_pole_min = -0.9;
    spec.noise_pole_max = -0.3;
    spec.id_prefix = "b";
    spec.out_dir = workdir / "corpus_alt";
    return spec;
  }

  ExperimentConfig base_experiment(const std::string& out) const {
    ExperimentConfig config;
    config.manifest = main_manifest.string();
    config.out_dir = (workdir / out).string();
    config.num_clients = 8;
    config.rounds = 200;
    config.batch_size = 6;
    config.seed = 1;
    return config;
  }

  void ensure_corpora() {
    if (main_manifest.empty()) {
      main_manifest = run_generate(main_spec()).manifest_path;
      alt_manifest = run_generate(alt_spec()).manifest_path;
    }
  }

  const TrainOutcome& ensure_fed_scratch() {
    ensure_corpora();
    if (!fed_scratch) {
      std::fprintf(stderr, "[run] federated from-scratch C=8 R=200\n");
      fed_scratch = run_train(base_experiment("fed_scratch"));
    }
    return *fed_scratch;
  }

  const TrainOutcome& ensure_pooled() {
    ensure_corpora();
    if (!pooled) {
      std::fprintf(stderr, "[run] pooled single-node R=200\n");
      ExperimentConfig config = base_experiment("pooled");
      config.num_clients = 1;
      pooled = run_train(config);
    }
    return *pooled;
  }

  const std::vector<TrainOutcome>& ensure_solos() {
    ensure_corpora();
    if (solos.empty()) {
      for (int id : {0, 3, 6}) {
        std::fprintf(stderr, "[run] isolated client %d R=200\n", id);
        ExperimentConfig config = base_experiment("solo_" + std::to_string(id));
        config.solo_client = id;
        solos.push_back(run_train(config));
      }
    }
    return solos;
  }

  const PretrainOutcome& ensure_pretrain() {
    ensure_corpora();
    if (!pretrain) {
      std::fprintf(stderr, "[run] supervised pre-training, 20 epochs\n");
      ExperimentConfig config = base_experiment("pretrain");
      config.manifest = alt_manifest.string();
      config.fl_manifest = main_manifest.string();
      config.num_clients = 1;
      config.epochs = 20;
      pretrain = run_pretrain(config);
    }
    return *pretrain;
  }

  const TrainOutcome& ensure_fed_finetune() {
    const PretrainOutcome& pre = ensure_pretrain();
    if (!fed_finetune) {
      std::fprintf(stderr, "[run] federated fine-tune C=8 R=200\n");
      ExperimentConfig config = base_experiment("fed_finetune");
      config.init_checkpoint = pre.checkpoint_path.string();
      config.regime = "fine_tune";
      fed_finetune = run_train(config);
    }
    return *fed_finetune;
  }

  const TrainOutcome& ensure_sweep(double ps) {
    ensure_corpora();
    auto& slot = ps == 0.5 ? sweep_half : sweep_full;
    if (!slot) {
      std::fprintf(stderr, "[run] sweep p_s=%.2f C=8 R=200\n", ps);
      ExperimentConfig config =
          base_experiment(ps == 0.5 ? "sweep_half" : "sweep_full");
      config.supervised_fraction = ps;
      slot = run_train(config);
    }
    return *slot;
  }
};

ModelConfig grad_check_config() {
  ModelConfig config;
  config.frame_len = 8;
  config.hop = 4;
  config.basis = 8;
  config.hidden = 10;
  config.num_sources = 3;
  config.init_seed = 12;
  return config;
}

AudioBuffer random_audio(Rng& rng, Eigen::Index t, double scale = 0.5) {
  Eigen::VectorXd samples(t);
  for (Eigen::Index i = 0; i < t; ++i) samples(i) = scale * rng.normal();
  return AudioBuffer{std::move(samples), 8000};
}

LossInstance random_instance(Rng& rng, Eigen::Index t, LossKind kind) {
  if (kind == LossKind::kUnsupervised) {
    return make_unsupervised_instance(random_audio(rng, t), random_audio(rng, t, 0.3));
  }
  AudioBuffer s1 = random_audio(rng, t);
  AudioBuffer s2 = random_audio(rng, t, 0.3);
  AudioBuffer x{s1.samples + s2.samples, 8000};
  return make_supervised_instance(std::move(x), random_audio(rng, t, 0.3),
                                  std::move(s1), std::move(s2));
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

CriterionResult criterion_gradients(AcceptanceContext&) {
  const double started = now_seconds();
  const ModelConfig config = grad_check_config();
  const ParamVector params = init_params(config);
  Rng rng(2024);

  double worst = 0.0;
  int checked = 0;
  for (LossKind kind : {LossKind::kSupervised, LossKind::kUnsupervised}) {
    const LossProgram program = make_loss_program(kind, config);
    for (int instance = 0; instance < 5; ++instance) {
      const LossInstance inst = random_instance(rng, 64, kind);
      const auto report =
          ad::finite_diff_check(program.bind(inst), params.values, 1e-4, 1e-4);
      if (!report.pass) {
        return {false, "finite-difference mismatch, max rel error " +
                           std::to_string(report.max_rel_error)};
      }
      worst = std::max(worst, report.max_rel_error);
      checked += static_cast<int>(report.coords.size()) - report.num_skipped;
    }
  }
  const double elapsed = now_seconds() - started;
  if (elapsed >= 120.0) {
    return {false, "exceeded the 2 minute budget: " + std::to_string(elapsed) + "s"};
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max rel error %.3g over %d coordinates, %.1fs", worst, checked, elapsed);
  return {true, detail};
}

CriterionResult criterion_si_sdr(AcceptanceContext& context) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const AudioBuffer estimate = random_audio(rng, 256);
    const AudioBuffer target = random_audio(rng, 256);
    const double base = si_sdr(estimate, target);
    for (double c : {0.1, 1.0, 3.7}) {
      const AudioBuffer scaled{c * estimate.samples, 8000};
      if (std::abs(si_sdr(scaled, target) - base) >= 1e-9) {
        return {false, "scale invariance broken at trial " + std::to_string(trial)};
      }
    }
    if (si_sdr(target, target) != kSiSdrCapDb) {
      return {false, "perfect reconstruction did not hit the cap"};
    }
  }

  context.ensure_corpora();
  const Manifest manifest = read_manifest(context.main_manifest);
  const EvalSet set = build_eval_set(manifest, "valid", 8000, 99);
  const SeparateFn identity = [](const AudioBuffer& mixture) {
    SourceStack stack{Eigen::MatrixXd::Zero(3, mixture.length()), mixture.sample_rate};
    stack.sources.row(0) = mixture.samples.transpose();
    return stack;
  };
  for (NoiseCondition condition : {NoiseCondition::kOneNoise, NoiseCondition::kTwoNoise}) {
    const EvalResult result = evaluate_with(identity, set, condition);
    for (double v : result.per_example) {
      if (v != 0.0) return {false, "pass-through SI-SDRi is not exactly 0 dB"};
    }
  }
  return {true, "scale invariance < 1e-9 dB, cap hit, pass-through exactly 0 dB"};
}

CriterionResult criterion_consistency(AcceptanceContext&) {
  ModelConfig config;  // default separator
  Rng rng(31337);
  double worst_sum = 0.0, worst_idem = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    config.init_seed = 1000 + static_cast<std::uint64_t>(trial);
    const ParamVector params = init_params(config);
    const AudioBuffer mixture = random_audio(rng, 200 + 37 * (trial % 12));
    const SourceStack stack = separate(config, params, mixture);
    const Eigen::VectorXd sums = stack.sources.colwise().sum().transpose();
    worst_sum = std::max(worst_sum, (sums - mixture.samples).cwiseAbs().maxCoeff());

    const SourceStack again = mixture_consistency_project(stack, mixture);
    worst_idem =
        std::max(worst_idem, (again.sources - stack.sources).cwiseAbs().maxCoeff());
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail), "max |sum - x| = %.3g, idempotence gap %.3g",
                worst_sum, worst_idem);
  return {worst_sum < 1e-6 && worst_idem < 1e-12, detail};
}

CriterionResult criterion_permutation(AcceptanceContext&) {
  Rng rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd sources(3, 48);
    for (Eigen::Index r = 0; r < 3; ++r) {
      for (Eigen::Index c = 0; c < 48; ++c) sources(r, c) = 0.5 * rng.normal();
    }
    SourceStack stack{sources, 8000};
    SourceStack swapped = stack;
    swapped.sources.row(1) = stack.sources.row(2);
    swapped.sources.row(2) = stack.sources.row(1);

    const LossInstance sup = random_instance(rng, 48, LossKind::kSupervised);
    if (supervised_loss(stack, sup) != supervised_loss(swapped, sup)) {
      return {false, "supervised loss changed under slot swap"};
    }
    const LossInstance unsup = random_instance(rng, 48, LossKind::kUnsupervised);
    if (unsupervised_mixit_loss(stack, unsup) != unsupervised_mixit_loss(swapped, unsup)) {
      return {false, "unsupervised loss changed under slot swap"};
    }
  }
  return {true, "both losses exactly invariant over 100 instances"};
}

CriterionResult criterion_fedavg_oracle(AcceptanceContext& context) {
  const double started = now_seconds();
  context.ensure_corpora();
  const Manifest manifest = read_manifest(context.main_manifest);
  const auto shards = build_client_datasets(manifest, 8, 55, 8000);
  const ClientDataset shared = shards.front();

  ModelConfig model;  // default separator
  model.init_seed = 2;
  const ParamVector initial = init_params(model);

  FedRunConfig config;
  config.model = model;
  config.batch_size = 6;
  config.sampling_seed = 91;
  config.clip_seconds = 1.0;
  config.reset_moments = true;  // client state must be a pure function of the round

  auto make_client = [&](int id) {
    ClientState client;
    client.id = id;
    client.dataset = shared;
    client.kind = LossKind::kUnsupervised;
    client.seed = 4096;  // identical stream seed on every client
    client.optimizer = make_optimizer(OptimizerRegime::kFromScratch, initial.size());
    return client;
  };

  ServerState fed_server;
  fed_server.global_params = initial;
  std::vector<ClientState> fed_clients;
  for (int id = 0; id < 4; ++id) fed_clients.push_back(make_client(id));

  ServerState solo_server;
  solo_server.global_params = initial;
  std::vector<ClientState> solo_clients{make_client(0)};

  for (int round = 0; round < 10; ++round) {
    run_round(fed_server, fed_clients, config, nullptr);
    run_round(solo_server, solo_clients, config, nullptr);
  }
  const double gap = (fed_server.global_params.values - solo_server.global_params.values)
                         .cwiseAbs()
                         .maxCoeff();
  const double elapsed = now_seconds() - started;
  char detail[128];
  std::snprintf(detail, sizeof(detail), "max |theta_fed - theta_solo| = %.3g, %.1fs",
                gap, elapsed);
  return {gap < 1e-12 && elapsed < 300.0, detail};
}

CriterionResult criterion_federation_sanity(AcceptanceContext& context) {
  const double started = now_seconds();
  const TrainOutcome& pooled = context.ensure_pooled();  // oracle run first
  const TrainOutcome& fed = context.ensure_fed_scratch();
  const std::vector<TrainOutcome>& solos = context.ensure_solos();

  double solo_mean = 0.0;
  for (const auto& solo : solos) solo_mean += solo.best_metrics.valid_sisdri_2n;
  solo_mean /= static_cast<double>(solos.size());

  const double fed_best = fed.best_metrics.valid_sisdri_2n;
  const double pooled_best = pooled.best_metrics.valid_sisdri_2n;
  const double elapsed = now_seconds() - started;

  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "federated %.2f dB vs isolated mean %.2f dB (needs +1.0) and pooled "
                "%.2f dB (needs within 2.0), %.0fs",
                fed_best, solo_mean, pooled_best, elapsed);
  const bool pass = fed_best >= solo_mean + 1.0 && fed_best >= pooled_best - 2.0 &&
                    elapsed < 7200.0;
  return {pass, detail};
}

CriterionResult criterion_transfer(AcceptanceContext& context) {
  const TrainOutcome& scratch = context.ensure_fed_scratch();
  const TrainOutcome& tuned = context.ensure_fed_finetune();

  const double target = 0.8 * scratch.best_metrics.valid_sisdri_2n;
  auto rounds_to_reach = [&](const TrainOutcome& run) {
    for (const auto& record : run.history) {
      if (record.metrics.has_values && record.metrics.valid_sisdri_2n >= target) {
        return record.round;
      }
    }
    return 1 << 30;
  };
  const int scratch_rounds = rounds_to_reach(scratch);
  const int tuned_rounds = rounds_to_reach(tuned);

  char detail[192];
  std::snprintf(detail, sizeof(detail),
                "rounds to reach %.2f dB: pretrained %d vs from-scratch %d",
                target, tuned_rounds, scratch_rounds);
  return {tuned_rounds < scratch_rounds, detail};
}

CriterionResult criterion_sweep(AcceptanceContext& context) {
  const TrainOutcome& p0 = context.ensure_fed_scratch();
  const TrainOutcome& p_half = context.ensure_sweep(0.5);
  const TrainOutcome& p_full = context.ensure_sweep(1.0);

  const double t0 = p0.best_metrics.test_sisdri_2n;
  const double t_half = p_half.best_metrics.test_sisdri_2n;
  const double t_full = p_full.best_metrics.test_sisdri_2n;

  char detail[192];
  std::snprintf(detail, sizeof(detail),
                "test SI-SDRi (2n): p_s=0 %.2f dB, p_s=0.5 %.2f dB, p_s=1 %.2f dB",
                t0, t_half, t_full);
  const bool pass = t_full >= t_half && t_half >= t0 && (t_full - t0) >= 0.3;
  return {pass, detail};
}

CriterionResult criterion_scheduling(AcceptanceContext& context) {
  const TrainOutcome& fed = context.ensure_fed_scratch();
  const TrainOutcome& pooled = context.ensure_pooled();

  auto check_run = [](const TrainOutcome& run, int batch_size) -> std::string {
    const int expected_participants = std::max(1, run.effective_num_clients / 4);
    for (const auto& record : run.history) {
      if (static_cast<int>(record.participants.size()) != expected_participants) {
        return "round " + std::to_string(record.round) + ": |A| = " +
               std::to_string(record.participants.size()) + ", expected " +
               std::to_string(expected_participants);
      }
      for (std::size_t i = 0; i < record.participants.size(); ++i) {
        const long dataset_size =
            run.client_sizes.size() == 1
                ? run.client_sizes.front()
                : run.client_sizes[static_cast<std::size_t>(record.participants[i])];
        const int expected_steps = static_cast<int>(dataset_size / batch_size);
        if (record.steps_per_participant[i] != expected_steps) {
          return "round " + std::to_string(record.round) + ": K = " +
                 std::to_string(record.steps_per_participant[i]) + ", expected " +
                 std::to_string(expected_steps);
        }
      }
    }
    return "";
  };

  for (const TrainOutcome* run : {&fed, &pooled}) {
    const std::string problem = check_run(*run, 6);
    if (!problem.empty()) return {false, problem};
  }
  for (const TrainOutcome& solo : context.ensure_solos()) {
    const std::string problem = check_run(solo, 6);
    if (!problem.empty()) return {false, problem};
  }
  return {true, "K = floor(|D_c|/B) and |A| = max(1, C/4) on every recorded round"};
}

CriterionResult criterion_determinism(AcceptanceContext& context) {
  context.ensure_corpora();

  auto short_config = [&](const std::string& out, int workers) {
    ExperimentConfig config = context.base_experiment(out);
    config.rounds = 6;
    config.workers = workers;
    config.checkpoint_every = 3;
    return config;
  };

  struct RunFiles {
    std::string csv;
    std::vector<std::pair<std::string, std::string>> checkpoints;  // name -> bytes
  };
  auto capture = [&](const ExperimentConfig& config) {
    const TrainOutcome outcome = run_train(config);
    RunFiles files;
    files.csv = strip_wall_column(file_bytes(outcome.csv_path));
    for (const auto& entry : fs::directory_iterator(outcome.out_dir)) {
      if (entry.path().extension() == ".ckpt") {
        files.checkpoints.emplace_back(entry.path().filename().string(),
                                       file_bytes(entry.path()));
      }
    }
    std::sort(files.checkpoints.begin(), files.checkpoints.end());
    return files;
  };
  auto same = [](const RunFiles& a, const RunFiles& b) {
    return a.csv == b.csv && a.checkpoints == b.checkpoints;
  };

  const RunFiles w1_a = capture(short_config("det_w1_a", 1));
  const RunFiles w1_b = capture(short_config("det_w1_b", 1));
  const RunFiles w4_a = capture(short_config("det_w4_a", 4));
  const RunFiles w4_b = capture(short_config("det_w4_b", 4));

  if (!same(w1_a, w1_b)) return {false, "repeat with workers=1 diverged"};
  if (!same(w4_a, w4_b)) return {false, "repeat with workers=4 diverged"};
  if (!same(w1_a, w4_a)) return {false, "workers=1 and workers=4 disagree"};

  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "CSVs (wall clock aside) and %zu checkpoint files byte-identical "
                "for workers 1 and 4",
                w1_a.checkpoints.size());
  return {true, detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = fs::current_path() / "acceptance_out";
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) only = argv[++i];
    else if (arg == "--workdir" && i + 1 < argc) workdir = argv[++i];
  }
  // run hermetically regardless of the caller's environment
  unsetenv("FEDMIX_OUT_ROOT");

  std::error_code ec;
  fs::remove_all(workdir, ec);
  fs::create_directories(workdir);

  AcceptanceContext context;
  context.workdir = workdir;

  struct Criterion {
    int id;
    const char* name;
    std::function<CriterionResult(AcceptanceContext&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness vs central differences", criterion_gradients},
      {2, "SI-SDR scale invariance, cap, and pass-through zero", criterion_si_sdr},
      {3, "mixture consistency and idempotent projection", criterion_consistency},
      {4, "permutation invariance of both losses", criterion_permutation},
      {5, "FedAvg oracle equivalence with a single node", criterion_fedavg_oracle},
      {6, "federation beats isolation, tracks pooled training", criterion_federation_sanity},
      {7, "pre-trained initialization converges in fewer rounds", criterion_transfer},
      {8, "supervision sweep is monotone with a positive total gap", criterion_sweep},
      {9, "scheduling arithmetic K and |A| hold on every round", criterion_scheduling},
      {10, "byte-identical reruns for worker counts 1 and 4", criterion_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (!only.empty()) {
      const std::string token = std::to_string(criterion.id);
      bool selected = false;
      std::istringstream list(only);
      std::string item;
      while (std::getline(list, item, ',')) selected |= item == token;
      if (!selected) continue;
    }
    CriterionResult result;
    try {
      result = criterion.run(context);
    } catch (const std::exception& e) {
      result = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s (%s)\n", result.pass ? "PASS" : "FAIL",
                criterion.id, criterion.name, result.detail.c_str());
    std::fflush(stdout);
    if (!result.pass) ++failures;
  }
  return failures;
}
