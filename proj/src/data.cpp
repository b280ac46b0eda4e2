#include "fedmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "fedmix/rng.hpp"

namespace fedmix {

namespace {

constexpr double kPcmScale = 32768.0;

std::string role_name(ClipRole role) {
  return role == ClipRole::kMixture ? "mixture" : "noise";
}

ClipRole role_from_name(const std::string& name, const std::filesystem::path& file) {
  if (name == "mixture") return ClipRole::kMixture;
  if (name == "noise") return ClipRole::kNoise;
  throw IngestionError("manifest " + file.string() + ": unknown role '" + name + "'");
}

std::string format_duration(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", seconds);
  return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, '\t')) fields.push_back(field);
  return fields;
}

// ---- little-endian helpers ----

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xffU));
  out.push_back(static_cast<char>((v >> 8) & 0xffU));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::int16_t quantize_sample(double x) {
  double scaled = std::nearbyint(x * kPcmScale);
  if (scaled > 32767.0) scaled = 32767.0;
  if (scaled < -32768.0) scaled = -32768.0;
  return static_cast<std::int16_t>(scaled);
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void write_manifest(const Manifest& manifest, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IngestionError("cannot open manifest for writing: " + file.string());
  out << "clip_id\tspeaker_id\trole\tsplit\tduration_s\tpath\tref1_path\tref2_path\n";
  for (const auto& e : manifest.entries) {
    out << e.clip_id << '\t' << e.speaker_id << '\t' << role_name(e.role) << '\t'
        << e.split << '\t' << format_duration(e.duration_s) << '\t' << e.path;
    if (e.role == ClipRole::kMixture) {
      out << '\t' << e.ref1_path << '\t' << e.ref2_path;
    }
    out << '\n';
  }
  if (!out) throw IngestionError("failed writing manifest: " + file.string());
}

Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open manifest: " + file.string());
  Manifest manifest;
  manifest.root_dir = file.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("manifest is empty: " + file.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 6) {
      throw IngestionError("manifest " + file.string() + ": short record '" + line + "'");
    }
    ManifestEntry e;
    e.clip_id = fields[0];
    e.speaker_id = fields[1];
    e.role = role_from_name(fields[2], file);
    e.split = fields[3];
    e.duration_s = std::stod(fields[4]);
    e.path = fields[5];
    if (fields.size() >= 8) {
      e.ref1_path = fields[6];
      e.ref2_path = fields[7];
    }
    if (e.role == ClipRole::kMixture && e.ref1_path.empty()) {
      throw IngestionError("manifest " + file.string() + ": mixture '" + e.clip_id +
                           "' lacks reference stems");
    }
    manifest.entries.push_back(std::move(e));
  }
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.clip_id).second) {
      throw IngestionError("manifest " + file.string() + ": duplicate clip_id '" +
                           e.clip_id + "'");
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  const auto n = static_cast<std::uint32_t>(audio.length());
  const std::uint32_t data_bytes = n * 2;
  const auto rate = static_cast<std::uint32_t>(audio.sample_rate);

  std::string bytes;
  bytes.reserve(44 + data_bytes);
  bytes += "RIFF";
  put_u32(bytes, 36 + data_bytes);
  bytes += "WAVEfmt ";
  put_u32(bytes, 16);       // fmt chunk size
  put_u16(bytes, 1);        // PCM
  put_u16(bytes, 1);        // mono
  put_u32(bytes, rate);
  put_u32(bytes, rate * 2);  // byte rate
  put_u16(bytes, 2);         // block align
  put_u16(bytes, 16);        // bits per sample
  bytes += "data";
  put_u32(bytes, data_bytes);
  for (Eigen::Index i = 0; i < audio.length(); ++i) {
    const std::int16_t q = quantize_sample(audio.samples(i));
    put_u16(bytes, static_cast<std::uint16_t>(q));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open wav for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("failed writing wav: " + path.string());
}

AudioBuffer load_clip(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open clip: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw IngestionError("clip " + path.string() + ": not a RIFF/WAVE file");
  }

  std::size_t at = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  while (at + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = get_u32(p + at + 4);
    if (std::memcmp(p + at, "fmt ", 4) == 0) {
      if (at + 8 + 16 > bytes.size()) {
        throw IngestionError("clip " + path.string() + ": truncated fmt chunk");
      }
      format = get_u16(p + at + 8);
      channels = get_u16(p + at + 10);
      rate = get_u32(p + at + 12);
      bits = get_u16(p + at + 22);
      have_fmt = true;
    } else if (std::memcmp(p + at, "data", 4) == 0) {
      if (at + 8 + chunk_len > bytes.size()) {
        throw IngestionError("clip " + path.string() + ": truncated data chunk");
      }
      data = p + at + 8;
      data_len = chunk_len;
    }
    at += 8 + chunk_len + (chunk_len & 1U);
  }

  if (!have_fmt || data == nullptr) {
    throw IngestionError("clip " + path.string() + ": missing fmt or data chunk");
  }
  if (format != 1 || bits != 16) {
    throw IngestionError("clip " + path.string() + ": unsupported format (need PCM16)");
  }
  if (channels != 1) {
    throw IngestionError("clip " + path.string() + ": expected mono, got " +
                         std::to_string(channels) + " channels");
  }
  if (static_cast<int>(rate) != expected_rate) {
    throw IngestionError("clip " + path.string() + ": sample rate " + std::to_string(rate) +
                         " does not match manifest rate " + std::to_string(expected_rate));
  }
  const std::uint32_t n = data_len / 2;
  if (n == 0) throw IngestionError("clip " + path.string() + ": no samples");

  Eigen::VectorXd samples(static_cast<Eigen::Index>(n));
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto raw = static_cast<std::int16_t>(get_u16(data + 2 * i));
    samples(static_cast<Eigen::Index>(i)) = static_cast<double>(raw) / kPcmScale;
  }
  return make_audio(std::move(samples), expected_rate);
}

// ---------------------------------------------------------------------------
// Partitioning and pairing
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> partition_speaker_ids(
    std::vector<std::string> speaker_ids, int num_clients, std::uint64_t seed) {
  require(num_clients >= 1, "partition: need at least one client");
  std::sort(speaker_ids.begin(), speaker_ids.end());
  speaker_ids.erase(std::unique(speaker_ids.begin(), speaker_ids.end()), speaker_ids.end());
  const int num_speakers = static_cast<int>(speaker_ids.size());
  if (num_speakers < num_clients) {
    throw ConfigError("partition: " + std::to_string(num_clients) +
                      " clients but only " + std::to_string(num_speakers) + " speakers");
  }

  Rng rng(mix_seed(seed, 0x5041525454ULL));
  rng.shuffle(speaker_ids);

  const int base = num_speakers / num_clients;
  const int remainder = num_speakers % num_clients;
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(num_clients));
  std::size_t at = 0;
  for (int c = 0; c < num_clients; ++c) {
    const int take = base + (c < remainder ? 1 : 0);
    auto& fold = folds[static_cast<std::size_t>(c)];
    fold.assign(speaker_ids.begin() + static_cast<long>(at),
                speaker_ids.begin() + static_cast<long>(at) + take);
    std::sort(fold.begin(), fold.end());
    at += static_cast<std::size_t>(take);
  }
  return folds;
}

FoldPairing pair_mixtures_with_noise(std::vector<ManifestEntry> fold, std::uint64_t seed) {
  if (fold.size() < 2) {
    throw ConfigError("pairing: speaker fold needs at least 2 clips, got " +
                      std::to_string(fold.size()));
  }
  for (const auto& e : fold) {
    require(e.role == ClipRole::kMixture, "pairing: fold must contain mixture entries");
    require(!e.ref2_path.empty(), "pairing: mixture lacks a noise stem");
  }
  std::sort(fold.begin(), fold.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.clip_id < b.clip_id; });
  Rng rng(mix_seed(seed, 0x50414952ULL));
  rng.shuffle(fold);

  const std::size_t keep = fold.size() / 2;  // discard ceil(n/2)
  FoldPairing pairing;
  pairing.mixtures.assign(fold.begin(), fold.begin() + static_cast<long>(keep));
  pairing.noise_sources.assign(fold.begin() + static_cast<long>(keep), fold.end());
  return pairing;
}

std::vector<ClientDataset> build_client_datasets(const Manifest& manifest,
                                                 int num_clients, std::uint64_t seed,
                                                 int sample_rate) {
  std::map<std::string, std::vector<ManifestEntry>> folds_by_speaker;
  for (const auto& e : manifest.entries) {
    if (e.split == "train" && e.role == ClipRole::kMixture) {
      folds_by_speaker[e.speaker_id].push_back(e);
    }
  }
  std::vector<std::string> speakers;
  speakers.reserve(folds_by_speaker.size());
  for (const auto& [speaker, _] : folds_by_speaker) speakers.push_back(speaker);

  const auto assignment = partition_speaker_ids(speakers, num_clients, seed);

  std::vector<ClientDataset> clients(static_cast<std::size_t>(num_clients));
  for (int c = 0; c < num_clients; ++c) {
    auto& client = clients[static_cast<std::size_t>(c)];
    for (const auto& speaker : assignment[static_cast<std::size_t>(c)]) {
      client.speaker_ids.insert(speaker);
      const auto pairing =
          pair_mixtures_with_noise(folds_by_speaker.at(speaker), mix_seed(seed, c));
      for (const auto& e : pairing.mixtures) {
        MixtureExample example;
        example.clip_id = e.clip_id;
        example.mixture = load_clip(manifest.root_dir / e.path, sample_rate);
        example.references = std::make_pair(
            load_clip(manifest.root_dir / e.ref1_path, sample_rate),
            load_clip(manifest.root_dir / e.ref2_path, sample_rate));
        client.mixtures.push_back(std::move(example));
      }
      for (const auto& e : pairing.noise_sources) {
        client.noises.push_back(load_clip(manifest.root_dir / e.ref2_path, sample_rate));
      }
    }
    if (client.mixtures.empty() || client.noises.empty()) {
      throw ConfigError("client " + std::to_string(c) +
                        " has an empty mixture or noise pool after pairing");
    }
  }
  return clients;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

void validate_corpus_spec(const CorpusSpec& spec) {
  auto positive = [](double v, const char* field) {
    if (v <= 0) throw ConfigError(std::string("corpus spec: field '") + field +
                                  "' must be positive");
  };
  positive(spec.train_speakers, "train_speakers");
  positive(spec.clips_per_speaker, "clips_per_speaker");
  positive(spec.clip_seconds, "clip_seconds");
  positive(spec.sample_rate, "sample_rate");
  if (spec.valid_speakers < 0 || spec.test_speakers < 0) {
    throw ConfigError("corpus spec: field 'valid_speakers'/'test_speakers' must be >= 0");
  }
  if ((spec.valid_speakers > 0 || spec.test_speakers > 0) &&
      spec.eval_clips_per_speaker < 2) {
    throw ConfigError("corpus spec: field 'eval_clips_per_speaker' must be >= 2");
  }
  if (spec.snr_max_db < spec.snr_min_db) {
    throw ConfigError("corpus spec: field 'snr_max_db' below 'snr_min_db'");
  }
  if (spec.f0_min_hz <= 0 || spec.f0_max_hz < spec.f0_min_hz) {
    throw ConfigError("corpus spec: field 'f0_min_hz'/'f0_max_hz' invalid");
  }
  if (spec.out_dir.empty()) throw ConfigError("corpus spec: field 'out_dir' is empty");
}

namespace {

struct SpeakerVoice {
  double f0_hz = 0.0;
  double am_rate_hz = 0.0;
  double rolloff = 1.0;        // harmonic amplitude decay exponent
  double odd_gain = 1.0;       // timbre: emphasis of odd harmonics
  double noise_center = 0.0;   // broadband AR(1) pole of this fold's noise
  double noise_hum_hz = 0.0;   // resonance of this fold's noise family
  double noise_hum_mix = 0.5;  // resonant share of the noise energy
};

// Speaker identity drives the non-IID structure. Fundamentals are log-spaced
// over [f0_min, f0_max] with a golden-ratio scramble (held-out speakers
// interleave with training ones instead of extrapolating). Each speaker also
// owns a noise family, mirroring a noise corpus split evenly across speaker
// folds: a broadband AR(1) floor plus a family-specific narrowband hum that
// sits in the same band as speech harmonics.
SpeakerVoice voice_for(const CorpusSpec& spec, int speaker_index) {
  const double position = std::fmod(0.61803398874989484 * (speaker_index + 1), 1.0);
  SpeakerVoice voice;
  voice.f0_hz = spec.f0_min_hz * std::pow(spec.f0_max_hz / spec.f0_min_hz, position);
  Rng traits(mix_seed(spec.seed, 0x564f494345ULL,
                      static_cast<std::uint64_t>(speaker_index)));
  voice.am_rate_hz = traits.uniform(1.5, 6.0);
  voice.rolloff = traits.uniform(0.8, 1.2);
  voice.odd_gain = traits.uniform(0.7, 1.0);
  const double pole_position = std::fmod(0.75487766624669276 * (speaker_index + 1), 1.0);
  voice.noise_center =
      spec.noise_pole_min + pole_position * (spec.noise_pole_max - spec.noise_pole_min);
  const double seed_phase = static_cast<double>(spec.seed % 997ULL) / 997.0;
  const double hum_position =
      std::fmod(0.41421356237309515 * (speaker_index + 1) + seed_phase, 1.0);
  voice.noise_hum_hz = 250.0 * std::pow(10.0, hum_position);  // 250..2500 Hz
  voice.noise_hum_mix = traits.uniform(0.35, 0.75);
  return voice;
}

Eigen::VectorXd synth_speech(const CorpusSpec& spec, const SpeakerVoice& voice,
                             Eigen::Index num_samples, Rng& rng) {
  const double rate = spec.sample_rate;
  const double f0 = voice.f0_hz * rng.uniform(0.96, 1.04);  // per-clip intonation
  const int num_harmonics = std::max(
      1, std::min(10, static_cast<int>(0.45 * rate / f0)));
  std::vector<double> phases(static_cast<std::size_t>(num_harmonics));
  for (auto& phase : phases) phase = rng.uniform(0.0, 2.0 * M_PI);
  const double am_phase = rng.uniform(0.0, 2.0 * M_PI);

  std::vector<double> amps(static_cast<std::size_t>(num_harmonics));
  for (int k = 0; k < num_harmonics; ++k) {
    const double parity = (k % 2 == 0) ? voice.odd_gain : 1.0;  // k even: harmonic 1,3,5...
    amps[static_cast<std::size_t>(k)] = parity / std::pow(k + 1, voice.rolloff);
  }

  Eigen::VectorXd out(num_samples);
  for (Eigen::Index i = 0; i < num_samples; ++i) {
    const double t = static_cast<double>(i) / rate;
    double sample = 0.0;
    for (int k = 0; k < num_harmonics; ++k) {
      sample += amps[static_cast<std::size_t>(k)] *
                std::sin(2.0 * M_PI * f0 * (k + 1) * t +
                         phases[static_cast<std::size_t>(k)]);
    }
    const double envelope =
        0.55 + 0.45 * std::sin(2.0 * M_PI * voice.am_rate_hz * t + am_phase);
    out(i) = sample * envelope;
  }
  out *= 0.08 / std::sqrt(out.squaredNorm() / static_cast<double>(num_samples));
  return out;
}

// Clip-specific spectral shape inside the fold's noise family: broadband
// AR(1) floor plus the family hum (a narrow AR(2) resonance) with per-clip
// jitter of both.
Eigen::VectorXd synth_noise(const CorpusSpec& spec, const SpeakerVoice& voice,
                            Eigen::Index num_samples, Rng& rng) {
  double pole = voice.noise_center + rng.uniform(-0.05, 0.05);
  pole = std::clamp(pole, -0.98, 0.98);
  Eigen::VectorXd broadband(num_samples);
  double state = 0.0;
  for (Eigen::Index i = 0; i < num_samples; ++i) {
    state = pole * state + rng.normal();
    broadband(i) = state;
  }

  const double hum_hz = voice.noise_hum_hz * rng.uniform(0.98, 1.02);
  const double radius = rng.uniform(0.96, 0.99);
  const double omega = 2.0 * M_PI * hum_hz / spec.sample_rate;
  const double a1 = 2.0 * radius * std::cos(omega);
  const double a2 = -radius * radius;
  Eigen::VectorXd hum(num_samples);
  double h1 = 0.0, h2 = 0.0;
  for (Eigen::Index i = 0; i < num_samples; ++i) {
    const double h = a1 * h1 + a2 * h2 + rng.normal();
    hum(i) = h;
    h2 = h1;
    h1 = h;
  }

  const double n = static_cast<double>(num_samples);
  broadband /= std::sqrt(broadband.squaredNorm() / n);
  hum /= std::sqrt(hum.squaredNorm() / n);
  const double mix = voice.noise_hum_mix;
  return (1.0 - mix) * broadband + mix * hum;
}

}  // namespace

Manifest generate_synthetic_corpus(const CorpusSpec& spec) {
  validate_corpus_spec(spec);
  namespace fs = std::filesystem;
  fs::create_directories(spec.out_dir / "wav");

  const auto num_samples =
      static_cast<Eigen::Index>(std::llround(spec.clip_seconds * spec.sample_rate));
  require(num_samples > 0, "corpus: clip length rounds to zero samples");
  const int total_speakers =
      spec.train_speakers + spec.valid_speakers + spec.test_speakers;

  Manifest manifest;
  manifest.root_dir = spec.out_dir;

  for (int s = 0; s < total_speakers; ++s) {
    const std::string split = s < spec.train_speakers
                                  ? "train"
                                  : (s < spec.train_speakers + spec.valid_speakers
                                         ? "valid"
                                         : "test");
    const int clips =
        split == "train" ? spec.clips_per_speaker : spec.eval_clips_per_speaker;
    char speaker_name[64];
    std::snprintf(speaker_name, sizeof(speaker_name), "%s_spk%03d",
                  spec.id_prefix.c_str(), s);
    const SpeakerVoice voice = voice_for(spec, s);

    for (int c = 0; c < clips; ++c) {
      Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(s),
                       static_cast<std::uint64_t>(c)));
      Eigen::VectorXd speech = synth_speech(spec, voice, num_samples, rng);
      Eigen::VectorXd noise = synth_noise(spec, voice, num_samples, rng);

      // Scale the noise stem so 10*log10(||s||^2 / ||n||^2) equals the draw.
      const double target_snr_db = rng.uniform(spec.snr_min_db, spec.snr_max_db);
      const double gain = std::sqrt(speech.squaredNorm() / noise.squaredNorm()) *
                          std::pow(10.0, -target_snr_db / 20.0);
      noise *= gain;

      // Quantize stems first and form the mixture from the quantized integers
      // so x = s1 + s2 holds exactly after reload. Keep peaks inside +/-0.95.
      double peak = std::max(speech.cwiseAbs().maxCoeff(), noise.cwiseAbs().maxCoeff());
      peak = std::max(peak, (speech + noise).cwiseAbs().maxCoeff());
      if (peak > 0.95) {
        const double shrink = 0.95 / peak;
        speech *= shrink;
        noise *= shrink;
      }

      Eigen::VectorXd speech_q(num_samples), noise_q(num_samples), mix_q(num_samples);
      for (Eigen::Index i = 0; i < num_samples; ++i) {
        const std::int16_t qs = quantize_sample(speech(i));
        const std::int16_t qn = quantize_sample(noise(i));
        speech_q(i) = static_cast<double>(qs) / kPcmScale;
        noise_q(i) = static_cast<double>(qn) / kPcmScale;
        mix_q(i) = static_cast<double>(qs + qn) / kPcmScale;
      }

      char clip_name[96];
      std::snprintf(clip_name, sizeof(clip_name), "%s_c%03d", speaker_name, c);
      const std::string base = std::string("wav/") + clip_name;

      write_wav(spec.out_dir / (base + ".wav"),
                AudioBuffer{mix_q, spec.sample_rate});
      write_wav(spec.out_dir / (base + "_s1.wav"),
                AudioBuffer{speech_q, spec.sample_rate});
      write_wav(spec.out_dir / (base + "_s2.wav"),
                AudioBuffer{noise_q, spec.sample_rate});

      ManifestEntry entry;
      entry.clip_id = clip_name;
      entry.speaker_id = speaker_name;
      entry.role = ClipRole::kMixture;
      entry.split = split;
      entry.duration_s = spec.clip_seconds;
      entry.path = base + ".wav";
      entry.ref1_path = base + "_s1.wav";
      entry.ref2_path = base + "_s2.wav";
      manifest.entries.push_back(std::move(entry));
    }
  }

  write_manifest(manifest, spec.out_dir / "manifest.tsv");
  return manifest;
}

std::set<std::string> speaker_set(const Manifest& manifest) {
  std::set<std::string> speakers;
  for (const auto& e : manifest.entries) speakers.insert(e.speaker_id);
  return speakers;
}

}  // namespace fedmix
