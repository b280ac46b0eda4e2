#include "fedmix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fedmix {

namespace {

constexpr char kMagic[8] = {'F', 'M', 'I', 'X', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamVector& params, const CheckpointInfo& info) {
  require(layouts_match(params.layout, layout_of(config)),
          "save_checkpoint: params do not match the model config");

  std::string bytes;
  bytes.reserve(29 + static_cast<std::size_t>(params.size()) * 8 + 12);
  bytes.append(kMagic, sizeof(kMagic));
  bytes.push_back(static_cast<char>(kVersion));
  put_u64(bytes, config_digest(config));
  put_u64(bytes, static_cast<std::uint64_t>(params.size()));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    put_u64(bytes, std::bit_cast<std::uint64_t>(params.values(i)));
  }
  put_u32(bytes, info.rounds_completed);
  put_u64(bytes, info.seed);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open checkpoint for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const ModelConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 25 || std::memcmp(p, kMagic, sizeof(kMagic)) != 0) {
    throw IngestionError("checkpoint " + path.string() + ": bad magic");
  }
  if (p[8] != kVersion) {
    throw IngestionError("checkpoint " + path.string() + ": unsupported version " +
                         std::to_string(static_cast<int>(p[8])));
  }
  const std::uint64_t digest = get_u64(p + 9);
  if (digest != config_digest(expected)) {
    throw ConfigError("checkpoint " + path.string() +
                      ": architecture digest does not match the model config");
  }
  const std::uint64_t count = get_u64(p + 17);
  const ParamLayout layout = layout_of(expected);
  if (count != static_cast<std::uint64_t>(layout_size(layout))) {
    throw IngestionError("checkpoint " + path.string() + ": declared parameter count " +
                         std::to_string(count) + " does not match the layout");
  }
  const std::size_t expected_size = 25 + static_cast<std::size_t>(count) * 8 + 12;
  if (bytes.size() != expected_size) {
    throw IngestionError("checkpoint " + path.string() + ": payload length mismatch");
  }

  LoadedCheckpoint loaded;
  loaded.params.layout = layout;
  loaded.params.values.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    loaded.params.values(static_cast<Eigen::Index>(i)) =
        std::bit_cast<double>(get_u64(p + 25 + 8 * i));
  }
  if (!loaded.params.values.allFinite()) {
    throw IngestionError("checkpoint " + path.string() + ": non-finite parameters");
  }
  loaded.info.rounds_completed = get_u32(p + 25 + 8 * count);
  loaded.info.seed = get_u64(p + 25 + 8 * count + 4);
  return loaded;
}

}  // namespace fedmix
