#include "fedmix/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedmix/rng.hpp"

namespace fedmix {

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig config;
  config.frame_len = frame_len;
  config.hop = hop;
  config.basis = basis;
  config.hidden = hidden;
  config.num_sources = 3;
  config.init_seed = mix_seed(seed, 0x4d4f44454cULL);
  return config;
}

std::uint64_t ExperimentConfig::partition_seed() const { return mix_seed(seed, 1); }
std::uint64_t ExperimentConfig::sampling_seed() const { return mix_seed(seed, 2); }
std::uint64_t ExperimentConfig::training_seed() const { return mix_seed(seed, 3); }
std::uint64_t ExperimentConfig::eval_pairing_seed() const { return mix_seed(seed, 4); }

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

}  // namespace

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "num_clients") c.num_clients = static_cast<int>(parse_int(key, value));
  else if (key == "rounds") c.rounds = static_cast<int>(parse_int(key, value));
  else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "supervised_fraction") c.supervised_fraction = parse_double(key, value);
  else if (key == "regime") c.regime = value;
  else if (key == "init_checkpoint") c.init_checkpoint = value;
  else if (key == "eval_every") c.eval_every = static_cast<int>(parse_int(key, value));
  else if (key == "selection_window") c.selection_window = static_cast<int>(parse_int(key, value));
  else if (key == "workers") c.workers = static_cast<int>(parse_int(key, value));
  else if (key == "checkpoint_every") c.checkpoint_every = static_cast<int>(parse_int(key, value));
  else if (key == "reset_moments") c.reset_moments = parse_bool(key, value);
  else if (key == "weighted_aggregate") c.weighted_aggregate = parse_bool(key, value);
  else if (key == "solo_client") c.solo_client = static_cast<int>(parse_int(key, value));
  else if (key == "frame_len") c.frame_len = static_cast<int>(parse_int(key, value));
  else if (key == "hop") c.hop = static_cast<int>(parse_int(key, value));
  else if (key == "basis") c.basis = static_cast<int>(parse_int(key, value));
  else if (key == "hidden") c.hidden = static_cast<int>(parse_int(key, value));
  else if (key == "manifest") c.manifest = value;
  else if (key == "sample_rate") c.sample_rate = static_cast<int>(parse_int(key, value));
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "fl_manifest") c.fl_manifest = value;
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    apply_override(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

ExperimentConfig load_config_file(const std::filesystem::path& file, ExperimentConfig base) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file: " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), std::move(base));
}

void validate_experiment_config(const ExperimentConfig& c) {
  if (c.num_clients < 1) throw ConfigError("config field 'num_clients' must be >= 1");
  if (c.rounds < 1) throw ConfigError("config field 'rounds' must be >= 1");
  if (c.batch_size < 1) throw ConfigError("config field 'batch_size' must be >= 1");
  if (c.supervised_fraction < 0.0 || c.supervised_fraction > 1.0) {
    throw ConfigError("config field 'supervised_fraction' must lie in [0, 1]");
  }
  const double count = c.supervised_fraction * c.num_clients;
  if (std::abs(count - std::round(count)) > 1e-9) {
    throw ConfigError(
        "config field 'supervised_fraction' must yield an integer client count");
  }
  if (c.regime != "from_scratch" && c.regime != "fine_tune") {
    throw ConfigError("config field 'regime' must be from_scratch or fine_tune");
  }
  if (c.eval_every < 1) throw ConfigError("config field 'eval_every' must be >= 1");
  if (c.eval_every > c.selection_window) {
    throw ConfigError("config field 'eval_every' exceeds 'selection_window'");
  }
  if (c.workers < 1) throw ConfigError("config field 'workers' must be >= 1");
  if (c.checkpoint_every < 1) throw ConfigError("config field 'checkpoint_every' must be >= 1");
  if (c.solo_client >= c.num_clients) {
    throw ConfigError("config field 'solo_client' must be below 'num_clients'");
  }
  if (c.manifest.empty()) throw ConfigError("config field 'manifest' is required");
  if (c.epochs < 0) throw ConfigError("config field 'epochs' must be >= 0");
  validate_model_config(ModelConfig{c.frame_len, c.hop, c.basis, c.hidden, 3, 0});
}

std::string render_config(const ExperimentConfig& c) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", c.supervised_fraction);
  std::ostringstream out;
  out << "basis = " << c.basis << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "checkpoint_every = " << c.checkpoint_every << '\n'
      << "epochs = " << c.epochs << '\n'
      << "eval_every = " << c.eval_every << '\n'
      << "fl_manifest = " << c.fl_manifest << '\n'
      << "frame_len = " << c.frame_len << '\n'
      << "hidden = " << c.hidden << '\n'
      << "hop = " << c.hop << '\n'
      << "init_checkpoint = " << c.init_checkpoint << '\n'
      << "manifest = " << c.manifest << '\n'
      << "num_clients = " << c.num_clients << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "regime = " << c.regime << '\n'
      << "reset_moments = " << (c.reset_moments ? "true" : "false") << '\n'
      << "rounds = " << c.rounds << '\n'
      << "sample_rate = " << c.sample_rate << '\n'
      << "seed = " << c.seed << '\n'
      << "selection_window = " << c.selection_window << '\n'
      << "solo_client = " << c.solo_client << '\n'
      << "supervised_fraction = " << buf << '\n'
      << "weighted_aggregate = " << (c.weighted_aggregate ? "true" : "false") << '\n'
      << "workers = " << c.workers << '\n';
  return out.str();
}

}  // namespace fedmix
