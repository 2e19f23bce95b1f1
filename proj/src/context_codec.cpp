#include "gc3/context_codec.hpp"

namespace gc3 {

ContextCodecParams ContextCodecParams::init(std::size_t context, std::size_t layers, GroupCommKind kind,
                                            std::size_t width, std::size_t hidden_dim, Initializer& init,
                                            std::size_t mhsa_hidden) {
  if (context < 2 || context % 2 != 0) throw ConfigError("C", "context size must be even and >= 2");
  if (layers == 0) throw ConfigError("L_c", "must be >= 1");
  ContextCodecParams p;
  p.context = context;
  for (auto* side : {&p.encoder, &p.decoder})
    for (std::size_t i = 0; i < layers; ++i) {
      CodecLayer layer;
      layer.comm = GroupCommParams::init(kind, width, hidden_dim, init, mhsa_hidden);
      layer.rnn = ResidualBLSTMParams::init(width, hidden_dim, init);
      side->push_back(std::move(layer));
    }
  return p;
}

void ContextCodecParams::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    encoder[i].comm.collect(out, prefix + ".enc" + std::to_string(i) + ".comm");
    encoder[i].rnn.collect(out, prefix + ".enc" + std::to_string(i) + ".rnn");
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    decoder[i].comm.collect(out, prefix + ".dec" + std::to_string(i) + ".comm");
    decoder[i].rnn.collect(out, prefix + ".dec" + std::to_string(i) + ".rnn");
  }
}

Tensor codec_layer(const CodecLayer& layer, const Tensor& blocks) {
  if (blocks.rank() != 4) throw DimensionError("codec_layer: expected [R×C×K×M], got " + shape_str(blocks.shape()));
  const std::size_t r = blocks.dim(0), c = blocks.dim(1), k = blocks.dim(2), m = blocks.dim(3);
  Tensor h = reshape(groupcomm(layer.comm, reshape(blocks, {r * c, k, m})), {r, c, k, m});
  Tensor seq = reshape(permute(h, {0, 2, 1, 3}), {r * k, c, m});
  return permute(reshape(residual_blstm(layer.rnn, seq), {r, k, c, m}), {0, 2, 1, 3});
}

Tensor context_segment(const Tensor& h, std::size_t context) {
  if (h.rank() != 3) throw DimensionError("context_segment: expected [T×K×M], got " + shape_str(h.shape()));
  return segment(h, Segmentation::plan(h.dim(0), context));
}

Tensor context_encode(const ContextCodecParams& params, const Tensor& blocks) {
  if (blocks.rank() != 4 || blocks.dim(1) != params.context) {
    throw DimensionError("context_encode: expected [R×" + std::to_string(params.context) + "×K×M], got " +
                         shape_str(blocks.shape()));
  }
  Tensor h = blocks;
  for (const auto& layer : params.encoder) h = codec_layer(layer, h);
  return mean(h, 1);
}

Tensor context_decode(const ContextCodecParams& params, const Tensor& summaries, const Tensor& blocks,
                      std::size_t length) {
  const auto seg = Segmentation::plan(length, params.context);
  if (blocks.rank() != 4 || blocks.dim(0) != seg.blocks || blocks.dim(1) != params.context) {
    throw DimensionError("context_decode: blocks " + shape_str(blocks.shape()) + " do not match " +
                         std::to_string(seg.blocks) + " blocks of " + std::to_string(params.context) + " frames");
  }
  const Shape expect{blocks.dim(0), blocks.dim(2), blocks.dim(3)};
  if (summaries.shape() != expect) {
    throw DimensionError("context_decode: summaries " + shape_str(summaries.shape()) + " should be " +
                         shape_str(expect));
  }
  Tensor h = add(blocks, reshape(summaries, {expect[0], 1, expect[1], expect[2]}));
  for (const auto& layer : params.decoder) h = codec_layer(layer, h);
  return unsegment(h, seg);
}

}  // namespace gc3
