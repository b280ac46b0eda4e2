#include "fedmix/model.hpp"

#include "fedmix/kernels.hpp"
#include "fedmix/losses.hpp"

namespace fedmix {

namespace {

struct SegmentMap {
  const ParamSegment* encoder;
  const ParamSegment* mask_w1;
  const ParamSegment* mask_b1;
  const ParamSegment* mask_w2;
  const ParamSegment* mask_b2;
  const ParamSegment* decoder;
};

SegmentMap map_segments(const ParamLayout& layout) {
  SegmentMap map{};
  for (const auto& seg : layout) {
    if (seg.name == "encoder") map.encoder = &seg;
    else if (seg.name == "mask_w1") map.mask_w1 = &seg;
    else if (seg.name == "mask_b1") map.mask_b1 = &seg;
    else if (seg.name == "mask_w2") map.mask_w2 = &seg;
    else if (seg.name == "mask_b2") map.mask_b2 = &seg;
    else if (seg.name == "decoder") map.decoder = &seg;
  }
  require(map.encoder && map.mask_w1 && map.mask_b1 && map.mask_w2 &&
              map.mask_b2 && map.decoder,
          "parameter layout does not describe the separator");
  return map;
}

Eigen::Map<const Eigen::MatrixXd> segment_matrix(const Eigen::VectorXd& values,
                                                 const ParamSegment& seg) {
  return {values.data() + seg.offset, seg.rows, seg.cols};
}

}  // namespace

SourceStack separate(const ModelConfig& config, const ParamVector& params,
                     const AudioBuffer& mixture) {
  require(layouts_match(params.layout, layout_of(config)),
          "separate: parameter layout does not match config");
  if (mixture.length() < config.frame_len) {
    throw DomainError("separate: mixture shorter than one frame");
  }

  const SegmentMap seg = map_segments(params.layout);
  const Eigen::MatrixXd encoder = segment_matrix(params.values, *seg.encoder);
  const Eigen::MatrixXd mask_w1 = segment_matrix(params.values, *seg.mask_w1);
  const Eigen::VectorXd mask_b1 = segment_matrix(params.values, *seg.mask_b1);
  const Eigen::MatrixXd mask_w2 = segment_matrix(params.values, *seg.mask_w2);
  const Eigen::VectorXd mask_b2 = segment_matrix(params.values, *seg.mask_b2);
  const Eigen::MatrixXd decoder = segment_matrix(params.values, *seg.decoder);

  const Eigen::Index t = mixture.length();
  const int m = config.num_sources;

  // Mirror of build_separator(): same kernels, same order.
  const Eigen::MatrixXd frames = kern::frame(mixture.samples, config.frame_len, config.hop);
  const Eigen::MatrixXd features = kern::relu(kern::matmul(encoder, frames));
  const Eigen::MatrixXd hidden =
      kern::relu(kern::add_bias(kern::matmul(mask_w1, features), mask_b1));
  const Eigen::MatrixXd masks =
      kern::sigmoid(kern::add_bias(kern::matmul(mask_w2, hidden), mask_b2));

  Eigen::MatrixXd stack_tm(t, m);
  for (int s = 0; s < m; ++s) {
    const Eigen::MatrixXd mask = masks.middleRows(static_cast<Eigen::Index>(s) * config.basis,
                                                  config.basis);
    const Eigen::MatrixXd masked = kern::hadamard(mask, features);
    const Eigen::MatrixXd decoded = kern::matmul(decoder, masked);
    stack_tm.col(s) = kern::overlap_add(decoded, config.hop, t);
  }

  const Eigen::MatrixXd projected = kern::mix_consistency(stack_tm, mixture.samples);
  return SourceStack{projected.transpose(), mixture.sample_rate};
}

ad::Value build_separator(ad::Tape& tape, const ModelConfig& config,
                          const Eigen::VectorXd& mixture) {
  const ParamLayout layout = layout_of(config);
  require(tape.num_params() == layout_size(layout),
          "build_separator: parameter length does not match config");
  if (mixture.size() < config.frame_len) {
    throw DomainError("build_separator: mixture shorter than one frame");
  }

  const SegmentMap seg = map_segments(layout);
  auto param_node = [&](const ParamSegment* s) {
    return tape.param_segment(s->offset, s->rows, s->cols, s->name);
  };
  const ad::Value encoder = param_node(seg.encoder);
  const ad::Value mask_w1 = param_node(seg.mask_w1);
  const ad::Value mask_b1 = param_node(seg.mask_b1);
  const ad::Value mask_w2 = param_node(seg.mask_w2);
  const ad::Value mask_b2 = param_node(seg.mask_b2);
  const ad::Value decoder = param_node(seg.decoder);

  const Eigen::Index t = mixture.size();
  const int m = config.num_sources;

  const ad::Value mix_in = tape.constant(mixture, "mixture");
  const ad::Value frames = tape.frame(mix_in, config.frame_len, config.hop);
  const ad::Value features = tape.relu(tape.matmul(encoder, frames));
  const ad::Value hidden =
      tape.relu(tape.add_bias(tape.matmul(mask_w1, features), mask_b1));
  const ad::Value masks =
      tape.sigmoid(tape.add_bias(tape.matmul(mask_w2, hidden), mask_b2));

  std::vector<ad::Value> sources;
  sources.reserve(static_cast<std::size_t>(m));
  for (int s = 0; s < m; ++s) {
    const ad::Value mask = tape.slice_rows(masks, static_cast<Eigen::Index>(s) * config.basis,
                                           config.basis);
    const ad::Value masked = tape.hadamard(mask, features);
    const ad::Value decoded = tape.matmul(decoder, masked);
    sources.push_back(tape.overlap_add(decoded, config.hop, t));
  }

  const ad::Value stack_tm = tape.concat_cols(sources);
  return tape.mixture_consistency(stack_tm, mix_in);
}

LossAndGrad separate_with_grad(const ModelConfig& config, const ParamVector& params,
                               const std::vector<LossInstance>& batch) {
  require(!batch.empty(), "separate_with_grad: empty batch");
  for (const auto& instance : batch) {
    require(instance.kind == batch.front().kind,
            "separate_with_grad: mixed loss kinds in one batch");
  }

  ad::Tape tape(params.values);
  std::vector<ad::Value> losses;
  losses.reserve(batch.size());
  for (const auto& instance : batch) {
    const ad::Value stack = build_separator(tape, config, instance.mom.samples);
    losses.push_back(build_loss(tape, stack, instance));
  }
  const ad::Value root =
      tape.weighted_sum(losses, 1.0 / static_cast<double>(batch.size()));

  LossAndGrad out;
  out.loss = tape.value_of(root);
  out.grad = tape.backward(root);
  return out;
}

}  // namespace fedmix
