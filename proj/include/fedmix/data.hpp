#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedmix/audio.hpp"

namespace fedmix {

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class ClipRole { kMixture, kNoise };

struct ManifestEntry {
  std::string clip_id;
  std::string speaker_id;
  ClipRole role = ClipRole::kMixture;
  std::string split;  // "train" | "valid" | "test"
  double duration_s = 0.0;
  std::string path;      // relative to the manifest directory
  std::string ref1_path;  // speech stem, mixtures only
  std::string ref2_path;  // noise stem, mixtures only
};

struct Manifest {
  std::filesystem::path root_dir;  // directory holding the manifest file
  std::vector<ManifestEntry> entries;
};

// Tab-separated, one record per line, header row with field names:
// clip_id  speaker_id  role  split  duration_s  path  [ref1_path  ref2_path]
void write_manifest(const Manifest& manifest, const std::filesystem::path& file);
Manifest read_manifest(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// WAV I/O (RIFF/WAVE, PCM 16-bit little-endian, mono)
// ---------------------------------------------------------------------------

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

// Loads a clip and checks it against the expected sample rate. Integer PCM is
// scaled to [-1, 1). Throws IngestionError naming the clip on any mismatch.
AudioBuffer load_clip(const std::filesystem::path& path, int expected_rate);

// ---------------------------------------------------------------------------
// Client datasets
// ---------------------------------------------------------------------------

struct MixtureExample {
  std::string clip_id;
  AudioBuffer mixture;  // x
  std::optional<std::pair<AudioBuffer, AudioBuffer>> references;  // (s1, s2)
};

struct ClientDataset {
  std::vector<MixtureExample> mixtures;  // D_c^m
  std::vector<AudioBuffer> noises;       // D_c^n
  std::set<std::string> speaker_ids;
};

// Speaker-fold partition arithmetic: clients get floor(S/C) or ceil(S/C)
// speakers, remainder on the lowest-indexed clients; deterministic shuffle.
std::vector<std::vector<std::string>> partition_speaker_ids(
    std::vector<std::string> speaker_ids, int num_clients, std::uint64_t seed);

// Mixture/noise split of one speaker fold: floor(n/2) entries keep their
// mixture role, the noise stems of the discarded ceil(n/2) become the noise
// pool. Pure index-level logic; audio is loaded later.
struct FoldPairing {
  std::vector<ManifestEntry> mixtures;
  std::vector<ManifestEntry> noise_sources;  // discarded entries; use ref2
};
FoldPairing pair_mixtures_with_noise(std::vector<ManifestEntry> fold, std::uint64_t seed);

// Full pipeline: partition train-split speakers, pair each fold, load audio.
std::vector<ClientDataset> build_client_datasets(const Manifest& manifest,
                                                 int num_clients, std::uint64_t seed,
                                                 int sample_rate);

// ---------------------------------------------------------------------------
// Synthetic corpus generator
// ---------------------------------------------------------------------------

// Speech surrogates are per-speaker harmonic complexes (speaker-specific
// fundamental and AM envelope); noise surrogates are AR(1)-filtered noise
// with clip-specific pole. Mixtures are made at SNR drawn uniformly from
// [snr_min_db, snr_max_db]; stems are stored next to each mixture.
struct CorpusSpec {
  int train_speakers = 8;
  int valid_speakers = 4;
  int test_speakers = 4;
  int clips_per_speaker = 48;
  int eval_clips_per_speaker = 12;
  double clip_seconds = 1.0;
  int sample_rate = 8000;
  std::uint64_t seed = 7;
  double snr_min_db = -5.0;
  double snr_max_db = 5.0;
  double f0_min_hz = 120.0;
  double f0_max_hz = 400.0;
  double noise_pole_min = 0.25;  // AR(1) pole span of the noise families
  double noise_pole_max = 0.95;
  std::string id_prefix = "a";   // namespaces speaker ids across corpora
  std::filesystem::path out_dir;
};

void validate_corpus_spec(const CorpusSpec& spec);

// Writes wavs under out_dir/wav and the manifest to out_dir/manifest.tsv;
// returns the manifest. Byte-reproducible given the spec.
Manifest generate_synthetic_corpus(const CorpusSpec& spec);

// Speaker sets of two manifests, used for the pre-training overlap check.
std::set<std::string> speaker_set(const Manifest& manifest);

}  // namespace fedmix
