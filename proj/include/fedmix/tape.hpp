#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"

namespace fedmix::ad {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reverse-mode tape over the closed primitive set the separator and losses
// need. Forward values are computed eagerly at node construction; backward()
// walks the nodes in reverse. The primitive set is closed by this API, so an
// unsupported operation cannot be recorded.

enum class Op : std::uint8_t {
  kConst,
  kParam,
  kMatMul,
  kAdd,
  kAddBias,
  kHadamard,
  kScale,
  kRelu,
  kSigmoid,
  kFrame,
  kOverlapAdd,
  kConcatCols,
  kSliceRows,
  kSliceCols,
  kMixConsistency,
  kSum,
  kSumSquares,
  kNegSiSdr,
  kMin2,
  kWeightedSum,
};

struct Value {
  int index = -1;
};

struct Node {
  Op op;
  int a = -1;
  int b = -1;
  std::vector<int> operands;  // kWeightedSum / kConcatCols
  MatrixXd value;
  MatrixXd adjoint;
  Index i0 = 0;  // param offset | frame_len | slice start | out_len
  Index i1 = 0;  // param rows   | hop       | slice count
  double weight = 0.0;
  bool pick_b = false;  // kMin2: right branch achieved the minimum
  bool capped = false;  // kNegSiSdr: value clamped, gradient zero
  std::string label;
};

class Tape {
 public:
  explicit Tape(VectorXd params);

  const VectorXd& param_values() const { return params_; }
  Index num_params() const { return params_.size(); }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // ---- leaves ----
  Value constant(MatrixXd v, std::string label = {});
  Value param_segment(Index offset, Index rows, Index cols, std::string label = {});

  // ---- primitives ----
  Value matmul(Value a, Value b);
  Value add(Value a, Value b);
  Value add_bias(Value a, Value bias);  // bias is a column vector
  Value hadamard(Value a, Value b);
  Value scale(Value a, double c);
  Value relu(Value a);
  Value sigmoid(Value a);
  Value frame(Value signal, int frame_len, int hop);
  Value overlap_add(Value frames, int hop, Index out_len);
  Value concat_cols(const std::vector<Value>& columns);
  Value slice_rows(Value a, Index row0, Index nrows);
  Value slice_cols(Value a, Index col0, Index ncols);
  Value mixture_consistency(Value stack_tm, Value mixture);
  Value sum(Value a);
  Value sum_squares(Value a);
  // Composite loss term -SI-SDR(est, target); target must be a constant node.
  Value neg_si_sdr(Value est, Value target);
  Value min2(Value a, Value b);  // scalars; ties resolve to a
  Value weighted_sum(const std::vector<Value>& terms, double weight);

  // ---- inspection ----
  const MatrixXd& matrix_of(Value v) const { return node(v).value; }
  double value_of(Value v) const;
  bool is_scalar(Value v) const;

  // Gradient of a scalar root with respect to the flat parameter vector.
  VectorXd backward(Value root);

  // Non-smoothness telemetry for the finite-difference oracle.
  double min_relu_margin() const { return relu_margin_; }
  double min_tie_margin() const { return tie_margin_; }
  std::uint64_t branch_signature() const { return branch_hash_; }

 private:
  const Node& node(Value v) const;
  Value push(Node n);

  VectorXd params_;
  std::vector<Node> nodes_;
  double relu_margin_;
  double tie_margin_;
  std::uint64_t branch_hash_;
};

// A recordable computation: builds a scalar expression on the given tape.
// Inputs other than the parameters are bound into the closure.
using Program = std::function<Value(Tape&)>;

struct Recording {
  double loss = 0.0;
  Tape tape;
  Value root;
};

// Runs the program on a fresh tape and returns the scalar loss plus the tape.
Recording forward_record(const Program& program, VectorXd params);

// backward() over a fresh recording; returns dLoss/dparams.
VectorXd gradient(const Program& program, VectorXd params, double* loss_out = nullptr);

struct FiniteDiffCoord {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool skipped = false;
};

struct FiniteDiffReport {
  std::vector<FiniteDiffCoord> coords;
  double max_rel_error = 0.0;  // over non-skipped coordinates
  int num_skipped = 0;
  bool at_tie = false;   // base point sits on a permutation tie
  bool at_kink = false;  // base point sits on a ReLU kink
  bool pass = false;
};

// Central-difference check of backward() against the recorded program.
// Coordinates whose +/- evaluations sit within kink_margin of a ReLU kink or
// a min-branch tie (or whose branch pattern flips) are excluded; relative
// errors are measured against max(|analytic|, |numeric|, abs_floor).
FiniteDiffReport finite_diff_check(const Program& program, VectorXd params,
                                   double step, double tolerance,
                                   double abs_floor = 1e-5,
                                   double kink_margin = 1e-7);

}  // namespace fedmix::ad
