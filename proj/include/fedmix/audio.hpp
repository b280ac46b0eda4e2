#pragma once

// Marker used by the server-isolation architectural test: server-side
// translation units must never (transitively) include this header.
#define FEDMIX_AUDIO_HPP_SEEN 1

#include <Eigen/Dense>

#include "fedmix/errors.hpp"

namespace fedmix {

// Mono waveform with sample-rate metadata.
struct AudioBuffer {
  Eigen::VectorXd samples;
  int sample_rate = 8000;

  Eigen::Index length() const { return samples.size(); }
};

// Validating constructor for buffers entering the system from outside
// (file ingestion, synthesis). Internal signal math preserves the invariants.
AudioBuffer make_audio(Eigen::VectorXd samples, int sample_rate);

// Throws ContractViolation unless lengths and sample rates match.
void check_combinable(const AudioBuffer& a, const AudioBuffer& b);

// M sources of identical length and rate; row m is source m.
struct SourceStack {
  Eigen::MatrixXd sources;  // M x T
  int sample_rate = 8000;

  Eigen::Index num_sources() const { return sources.rows(); }
  Eigen::Index length() const { return sources.cols(); }

  AudioBuffer source(Eigen::Index m) const {
    return AudioBuffer{sources.row(m).transpose(), sample_rate};
  }
};

}  // namespace fedmix
