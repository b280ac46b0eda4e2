#include "fedmix/tape.hpp"

#include <cmath>
#include <limits>

#include "fedmix/kernels.hpp"
#include "fedmix/signal.hpp"

namespace fedmix::ad {

namespace {

std::uint64_t fnv_step(std::uint64_t h, std::uint64_t x) {
  h ^= x;
  return h * 0x100000001b3ULL;
}

}  // namespace

Tape::Tape(VectorXd params)
    : params_(std::move(params)),
      relu_margin_(std::numeric_limits<double>::infinity()),
      tie_margin_(std::numeric_limits<double>::infinity()),
      branch_hash_(0xcbf29ce484222325ULL) {
  if (!params_.allFinite()) throw NumericError("tape: non-finite parameters");
}

const Node& Tape::node(Value v) const {
  require(v.index >= 0 && v.index < num_nodes(), "tape: dangling value handle");
  return nodes_[static_cast<std::size_t>(v.index)];
}

Value Tape::push(Node n) {
  if (!n.value.allFinite()) {
    throw NumericError("tape: non-finite value at node " + std::to_string(nodes_.size()) +
                       (n.label.empty() ? "" : " (" + n.label + ")"));
  }
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::constant(MatrixXd v, std::string label) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  n.label = std::move(label);
  return push(std::move(n));
}

Value Tape::param_segment(Index offset, Index rows, Index cols, std::string label) {
  require(offset >= 0 && rows > 0 && cols > 0, "param_segment: bad shape");
  require(offset + rows * cols <= params_.size(), "param_segment: out of range");
  Node n;
  n.op = Op::kParam;
  n.i0 = offset;
  n.i1 = rows;
  n.value = Eigen::Map<const MatrixXd>(params_.data() + offset, rows, cols);
  n.label = std::move(label);
  return push(std::move(n));
}

Value Tape::matmul(Value a, Value b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.cols() == nb.value.rows(), "matmul: inner dimensions differ");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.index;
  n.b = b.index;
  n.value = kern::matmul(na.value, nb.value);
  return push(std::move(n));
}

Value Tape::add(Value a, Value b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.rows() == nb.value.rows() && na.value.cols() == nb.value.cols(),
          "add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a.index;
  n.b = b.index;
  n.value = kern::add(na.value, nb.value);
  return push(std::move(n));
}

Value Tape::add_bias(Value a, Value bias) {
  const Node& na = node(a);
  const Node& nb = node(bias);
  require(nb.value.cols() == 1 && nb.value.rows() == na.value.rows(),
          "add_bias: bias must be a column vector matching rows");
  Node n;
  n.op = Op::kAddBias;
  n.a = a.index;
  n.b = bias.index;
  n.value = kern::add_bias(na.value, nb.value.col(0));
  return push(std::move(n));
}

Value Tape::hadamard(Value a, Value b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.rows() == nb.value.rows() && na.value.cols() == nb.value.cols(),
          "hadamard: shape mismatch");
  Node n;
  n.op = Op::kHadamard;
  n.a = a.index;
  n.b = b.index;
  n.value = kern::hadamard(na.value, nb.value);
  return push(std::move(n));
}

Value Tape::scale(Value a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a.index;
  n.weight = c;
  n.value = kern::scale(node(a).value, c);
  return push(std::move(n));
}

Value Tape::relu(Value a) {
  const MatrixXd& in = node(a).value;
  if (in.size() > 0) {
    relu_margin_ = std::min(relu_margin_, in.cwiseAbs().minCoeff());
    for (Index c = 0; c < in.cols(); ++c) {
      for (Index r = 0; r < in.rows(); ++r) {
        branch_hash_ = fnv_step(branch_hash_, in(r, c) > 0.0 ? 1u : 0u);
      }
    }
  }
  Node n;
  n.op = Op::kRelu;
  n.a = a.index;
  n.value = kern::relu(in);
  return push(std::move(n));
}

Value Tape::sigmoid(Value a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.index;
  n.value = kern::sigmoid(node(a).value);
  return push(std::move(n));
}

Value Tape::frame(Value signal, int frame_len, int hop) {
  const Node& ns = node(signal);
  require(ns.value.cols() == 1, "frame: expects a column-vector signal");
  require(frame_len > 0 && hop > 0 && hop <= frame_len, "frame: bad frame/hop");
  Node n;
  n.op = Op::kFrame;
  n.a = signal.index;
  n.i0 = frame_len;
  n.i1 = hop;
  n.value = kern::frame(ns.value.col(0), frame_len, hop);
  return push(std::move(n));
}

Value Tape::overlap_add(Value frames, int hop, Index out_len) {
  const Node& nf = node(frames);
  require(hop > 0 && out_len > 0, "overlap_add: bad hop/out_len");
  Node n;
  n.op = Op::kOverlapAdd;
  n.a = frames.index;
  n.i0 = out_len;
  n.i1 = hop;
  n.value = kern::overlap_add(nf.value, hop, out_len);
  return push(std::move(n));
}

Value Tape::concat_cols(const std::vector<Value>& columns) {
  require(!columns.empty(), "concat_cols: empty input");
  const Index rows = node(columns.front()).value.rows();
  Index total_cols = 0;
  for (Value v : columns) {
    require(node(v).value.rows() == rows, "concat_cols: row mismatch");
    total_cols += node(v).value.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  MatrixXd out(rows, total_cols);
  Index at = 0;
  for (Value v : columns) {
    const MatrixXd& m = node(v).value;
    out.middleCols(at, m.cols()) = m;
    at += m.cols();
    n.operands.push_back(v.index);
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::slice_rows(Value a, Index row0, Index nrows) {
  const Node& na = node(a);
  require(row0 >= 0 && nrows > 0 && row0 + nrows <= na.value.rows(),
          "slice_rows: out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.index;
  n.i0 = row0;
  n.i1 = nrows;
  n.value = na.value.middleRows(row0, nrows);
  return push(std::move(n));
}

Value Tape::slice_cols(Value a, Index col0, Index ncols) {
  const Node& na = node(a);
  require(col0 >= 0 && ncols > 0 && col0 + ncols <= na.value.cols(),
          "slice_cols: out of range");
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.index;
  n.i0 = col0;
  n.i1 = ncols;
  n.value = na.value.middleCols(col0, ncols);
  return push(std::move(n));
}

Value Tape::mixture_consistency(Value stack_tm, Value mixture) {
  const Node& ns = node(stack_tm);
  const Node& nm = node(mixture);
  require(nm.value.cols() == 1, "mixture_consistency: mixture must be a column vector");
  require(ns.value.rows() == nm.value.rows(), "mixture_consistency: length mismatch");
  require(ns.value.cols() >= 1, "mixture_consistency: needs at least one source");
  Node n;
  n.op = Op::kMixConsistency;
  n.a = stack_tm.index;
  n.b = mixture.index;
  n.value = kern::mix_consistency(ns.value, nm.value.col(0));
  return push(std::move(n));
}

Value Tape::sum(Value a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.index;
  n.value = MatrixXd::Constant(1, 1, node(a).value.sum());
  return push(std::move(n));
}

Value Tape::sum_squares(Value a) {
  Node n;
  n.op = Op::kSumSquares;
  n.a = a.index;
  n.value = MatrixXd::Constant(1, 1, node(a).value.squaredNorm());
  return push(std::move(n));
}

Value Tape::neg_si_sdr(Value est, Value target) {
  const Node& ne = node(est);
  const Node& nt = node(target);
  require(nt.op == Op::kConst, "neg_si_sdr: target must be a constant node");
  require(ne.value.cols() == 1 && nt.value.cols() == 1,
          "neg_si_sdr: expects column vectors");
  require(ne.value.rows() == nt.value.rows(), "neg_si_sdr: length mismatch");
  const SiSdrEval eval = si_sdr_eval(ne.value.col(0), nt.value.col(0));
  Node n;
  n.op = Op::kNegSiSdr;
  n.a = est.index;
  n.b = target.index;
  n.capped = eval.capped;
  n.value = MatrixXd::Constant(1, 1, -eval.db);
  return push(std::move(n));
}

Value Tape::min2(Value a, Value b) {
  require(is_scalar(a) && is_scalar(b), "min2: expects scalar operands");
  const double va = node(a).value(0, 0);
  const double vb = node(b).value(0, 0);
  tie_margin_ = std::min(tie_margin_, std::abs(va - vb));
  Node n;
  n.op = Op::kMin2;
  n.a = a.index;
  n.b = b.index;
  n.pick_b = vb < va;  // tie resolves to the left branch
  branch_hash_ = fnv_step(branch_hash_, n.pick_b ? 3u : 2u);
  n.value = MatrixXd::Constant(1, 1, n.pick_b ? vb : va);
  return push(std::move(n));
}

Value Tape::weighted_sum(const std::vector<Value>& terms, double weight) {
  require(!terms.empty(), "weighted_sum: empty input");
  Node n;
  n.op = Op::kWeightedSum;
  n.weight = weight;
  double acc = 0.0;
  for (Value v : terms) {
    require(is_scalar(v), "weighted_sum: expects scalar terms");
    acc += weight * node(v).value(0, 0);
    n.operands.push_back(v.index);
  }
  n.value = MatrixXd::Constant(1, 1, acc);
  return push(std::move(n));
}

double Tape::value_of(Value v) const {
  require(is_scalar(v), "value_of: node is not scalar");
  return node(v).value(0, 0);
}

bool Tape::is_scalar(Value v) const {
  const Node& n = node(v);
  return n.value.rows() == 1 && n.value.cols() == 1;
}

VectorXd Tape::backward(Value root) {
  if (!is_scalar(root)) throw ContractViolation("backward: root must be scalar");

  for (auto& n : nodes_) n.adjoint = MatrixXd::Zero(n.value.rows(), n.value.cols());
  nodes_[static_cast<std::size_t>(root.index)].adjoint(0, 0) = 1.0;

  VectorXd grad = VectorXd::Zero(params_.size());

  for (int i = root.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.adjoint.isZero(0.0) && n.op != Op::kParam) continue;
    const MatrixXd& g = n.adjoint;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam: {
        const Index count = n.value.size();
        grad.segment(n.i0, count) +=
            Eigen::Map<const VectorXd>(n.adjoint.data(), count);
        break;
      }
      case Op::kMatMul: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        na.adjoint.noalias() += g * nb.value.transpose();
        nb.adjoint.noalias() += na.value.transpose() * g;
        break;
      }
      case Op::kAdd:
        nodes_[static_cast<std::size_t>(n.a)].adjoint += g;
        nodes_[static_cast<std::size_t>(n.b)].adjoint += g;
        break;
      case Op::kAddBias:
        nodes_[static_cast<std::size_t>(n.a)].adjoint += g;
        nodes_[static_cast<std::size_t>(n.b)].adjoint.col(0) += g.rowwise().sum();
        break;
      case Op::kHadamard: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        na.adjoint += g.cwiseProduct(nb.value);
        nb.adjoint += g.cwiseProduct(na.value);
        break;
      }
      case Op::kScale:
        nodes_[static_cast<std::size_t>(n.a)].adjoint += g * n.weight;
        break;
      case Op::kRelu: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        na.adjoint += g.cwiseProduct(
            (na.value.array() > 0.0).cast<double>().matrix());
        break;
      }
      case Op::kSigmoid: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        na.adjoint += g.cwiseProduct(
            n.value.cwiseProduct((1.0 - n.value.array()).matrix()));
        break;
      }
      case Op::kFrame: {
        // adjoint of framing = overlap-add of the frame adjoints
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        na.adjoint.col(0) +=
            kern::overlap_add(g, static_cast<int>(n.i1), na.value.rows());
        break;
      }
      case Op::kOverlapAdd: {
        // adjoint of overlap-add = framing of the (zero-extended) adjoint
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        const Index num_frames = na.value.cols();
        const Index frame_len = na.value.rows();
        const Index padded = (num_frames - 1) * n.i1 + frame_len;
        VectorXd ext = VectorXd::Zero(padded);
        ext.head(g.rows()) = g.col(0);
        for (Index f = 0; f < num_frames; ++f) {
          na.adjoint.col(f) += ext.segment(f * n.i1, frame_len);
        }
        break;
      }
      case Op::kConcatCols: {
        Index at = 0;
        for (int op_idx : n.operands) {
          Node& no = nodes_[static_cast<std::size_t>(op_idx)];
          no.adjoint += g.middleCols(at, no.value.cols());
          at += no.value.cols();
        }
        break;
      }
      case Op::kSliceRows:
        nodes_[static_cast<std::size_t>(n.a)].adjoint.middleRows(n.i0, n.i1) += g;
        break;
      case Op::kSliceCols:
        nodes_[static_cast<std::size_t>(n.a)].adjoint.middleCols(n.i0, n.i1) += g;
        break;
      case Op::kMixConsistency: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        const double inv_m = 1.0 / static_cast<double>(na.value.cols());
        const VectorXd row_sums = g.rowwise().sum();
        na.adjoint += g;
        na.adjoint.colwise() -= (inv_m * row_sums).eval();
        nb.adjoint.col(0) += inv_m * row_sums;
        break;
      }
      case Op::kSum:
        nodes_[static_cast<std::size_t>(n.a)].adjoint.array() += g(0, 0);
        break;
      case Op::kSumSquares:
        nodes_[static_cast<std::size_t>(n.a)].adjoint +=
            (2.0 * g(0, 0)) * nodes_[static_cast<std::size_t>(n.a)].value;
        break;
      case Op::kNegSiSdr: {
        if (!n.capped) {
          Node& na = nodes_[static_cast<std::size_t>(n.a)];
          const Node& nb = nodes_[static_cast<std::size_t>(n.b)];
          na.adjoint.col(0) -=
              g(0, 0) * si_sdr_grad(na.value.col(0), nb.value.col(0));
        }
        break;
      }
      case Op::kMin2: {
        const int chosen = n.pick_b ? n.b : n.a;
        nodes_[static_cast<std::size_t>(chosen)].adjoint(0, 0) += g(0, 0);
        break;
      }
      case Op::kWeightedSum:
        for (int op_idx : n.operands) {
          nodes_[static_cast<std::size_t>(op_idx)].adjoint(0, 0) += n.weight * g(0, 0);
        }
        break;
    }
  }

  if (!grad.allFinite()) throw NumericError("backward: non-finite gradient");
  return grad;
}

Recording forward_record(const Program& program, VectorXd params) {
  Tape tape(std::move(params));
  const Value root = program(tape);
  if (!tape.is_scalar(root)) {
    throw ContractViolation("forward_record: program must produce a scalar");
  }
  const double loss = tape.value_of(root);
  return Recording{loss, std::move(tape), root};
}

VectorXd gradient(const Program& program, VectorXd params, double* loss_out) {
  Recording rec = forward_record(program, std::move(params));
  if (loss_out != nullptr) *loss_out = rec.loss;
  return rec.tape.backward(rec.root);
}

FiniteDiffReport finite_diff_check(const Program& program, VectorXd params,
                                   double step, double tolerance,
                                   double abs_floor, double kink_margin) {
  require(step > 0.0, "finite_diff_check: step must be positive");
  FiniteDiffReport report;

  Recording base = forward_record(program, params);
  const VectorXd analytic = base.tape.backward(base.root);
  report.at_tie = base.tape.min_tie_margin() < kink_margin;
  report.at_kink = base.tape.min_relu_margin() < kink_margin;
  const bool base_nonsmooth = report.at_tie || report.at_kink;

  const Index n = params.size();
  report.coords.resize(static_cast<std::size_t>(n));

  for (Index i = 0; i < n; ++i) {
    FiniteDiffCoord& coord = report.coords[static_cast<std::size_t>(i)];
    coord.analytic = analytic(i);

    VectorXd shifted = params;
    shifted(i) = params(i) + step;
    Recording plus = forward_record(program, shifted);
    shifted(i) = params(i) - step;
    Recording minus = forward_record(program, shifted);

    const bool nonsmooth =
        base_nonsmooth ||
        plus.tape.min_relu_margin() < kink_margin ||
        plus.tape.min_tie_margin() < kink_margin ||
        minus.tape.min_relu_margin() < kink_margin ||
        minus.tape.min_tie_margin() < kink_margin ||
        plus.tape.branch_signature() != minus.tape.branch_signature();
    if (nonsmooth) {
      coord.skipped = true;
      ++report.num_skipped;
      continue;
    }

    coord.numeric = (plus.loss - minus.loss) / (2.0 * step);
    const double denom =
        std::max({std::abs(coord.analytic), std::abs(coord.numeric), abs_floor});
    coord.rel_error = std::abs(coord.analytic - coord.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, coord.rel_error);
  }

  report.pass = report.max_rel_error < tolerance &&
                report.num_skipped < static_cast<int>(n);
  return report;
}

}  // namespace fedmix::ad
