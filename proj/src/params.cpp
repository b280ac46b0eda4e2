#include "fedmix/params.hpp"

#include <cmath>

#include "fedmix/rng.hpp"

namespace fedmix {

void validate_model_config(const ModelConfig& config) {
  if (config.frame_len <= 0 || config.hop <= 0 || config.basis <= 0 ||
      config.hidden <= 0 || config.num_sources <= 0) {
    throw ConfigError("model config: all sizes must be positive");
  }
  if (config.hop > config.frame_len) {
    throw ConfigError("model config: hop must not exceed frame_len");
  }
  if (config.basis < config.num_sources) {
    throw ConfigError("model config: basis must be at least num_sources");
  }
}

ParamLayout layout_of(const ModelConfig& config) {
  validate_model_config(config);
  const Eigen::Index fl = config.frame_len;
  const Eigen::Index nb = config.basis;
  const Eigen::Index nh = config.hidden;
  const Eigen::Index m = config.num_sources;

  ParamLayout layout;
  Eigen::Index offset = 0;
  auto push = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    layout.push_back(ParamSegment{name, rows, cols, offset});
    offset += rows * cols;
  };
  push("encoder", nb, fl);
  push("mask_w1", nh, nb);
  push("mask_b1", nh, 1);
  push("mask_w2", m * nb, nh);
  push("mask_b2", m * nb, 1);
  push("decoder", fl, nb);
  return layout;
}

Eigen::Index layout_size(const ParamLayout& layout) {
  Eigen::Index total = 0;
  for (const auto& seg : layout) total += seg.size();
  return total;
}

bool layouts_match(const ParamLayout& a, const ParamLayout& b) { return a == b; }

ParamVector init_params(const ModelConfig& config) {
  const ParamLayout layout = layout_of(config);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(layout_size(layout));
  Rng rng(mix_seed(config.init_seed, 0x494e4954ULL));
  for (const auto& seg : layout) {
    const bool is_bias = seg.cols == 1 && seg.name.find("_b") != std::string::npos;
    if (is_bias) continue;  // biases stay zero
    const double fan_in = static_cast<double>(seg.cols);
    const double fan_out = static_cast<double>(seg.rows);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < seg.size(); ++i) {
      values(seg.offset + i) = rng.uniform(-bound, bound);
    }
  }
  return ParamVector{std::move(values), layout};
}

std::uint64_t config_digest(const ModelConfig& config) {
  // FNV-1a over the architecture-defining fields.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(0x464d5631U);  // format tag
  feed(static_cast<std::uint64_t>(config.frame_len));
  feed(static_cast<std::uint64_t>(config.hop));
  feed(static_cast<std::uint64_t>(config.basis));
  feed(static_cast<std::uint64_t>(config.hidden));
  feed(static_cast<std::uint64_t>(config.num_sources));
  return h;
}

}  // namespace fedmix
