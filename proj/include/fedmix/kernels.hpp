#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "fedmix/errors.hpp"

namespace fedmix::kern {

// Shared forward kernels. The direct separator forward and the tape node
// evaluation both call these, in the same order, so the two paths produce
// bit-identical values.

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd matmul(const MatrixXd& a, const MatrixXd& b) { return a * b; }

inline MatrixXd add(const MatrixXd& a, const MatrixXd& b) { return a + b; }

inline MatrixXd add_bias(const MatrixXd& a, const VectorXd& bias) {
  return a.colwise() + bias;
}

inline MatrixXd hadamard(const MatrixXd& a, const MatrixXd& b) {
  return a.cwiseProduct(b);
}

inline MatrixXd scale(const MatrixXd& a, double c) { return a * c; }

inline MatrixXd relu(const MatrixXd& a) { return a.cwiseMax(0.0); }

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline MatrixXd sigmoid(const MatrixXd& a) {
  return a.unaryExpr([](double x) { return sigmoid_scalar(x); });
}

inline Index frame_count(Index signal_len, int frame_len, int hop) {
  if (signal_len <= frame_len) return 1;
  const Index extra = signal_len - frame_len;
  return 1 + (extra + hop - 1) / hop;
}

// Slices a signal into 50%-overlap-style frames (frame_len x F), zero-padding
// the tail so every sample is covered.
inline MatrixXd frame(const VectorXd& signal, int frame_len, int hop) {
  const Index num_frames = frame_count(signal.size(), frame_len, hop);
  const Index padded = (num_frames - 1) * hop + frame_len;
  VectorXd buf = VectorXd::Zero(padded);
  buf.head(signal.size()) = signal;
  MatrixXd frames(frame_len, num_frames);
  for (Index f = 0; f < num_frames; ++f) {
    frames.col(f) = buf.segment(f * hop, frame_len);
  }
  return frames;
}

// Inverse of frame(): overlap-add and truncate to out_len samples.
inline VectorXd overlap_add(const MatrixXd& frames, int hop, Index out_len) {
  const Index num_frames = frames.cols();
  const Index frame_len = frames.rows();
  const Index padded = (num_frames - 1) * hop + frame_len;
  require(out_len <= padded, "overlap_add: out_len exceeds frame coverage");
  VectorXd acc = VectorXd::Zero(padded);
  for (Index f = 0; f < num_frames; ++f) {
    acc.segment(f * hop, frame_len) += frames.col(f);
  }
  return acc.head(out_len);
}

// Mixture-consistency projection on a T x M stack (sources as columns):
// out_m = s_m + (x - sum_k s_k) / M, with a fixed summation order.
inline MatrixXd mix_consistency(const MatrixXd& stack_tm, const VectorXd& mixture) {
  const Index num_sources = stack_tm.cols();
  VectorXd resid = mixture;
  for (Index m = 0; m < num_sources; ++m) resid -= stack_tm.col(m);
  resid /= static_cast<double>(num_sources);
  MatrixXd out = stack_tm;
  for (Index m = 0; m < num_sources; ++m) out.col(m) += resid;
  return out;
}

}  // namespace fedmix::kern
