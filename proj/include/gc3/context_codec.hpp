#pragma once

// Learnable temporal down/up-sampling of grouped features [T×K×M].

#include <vector>

#include "gc3/groupcomm.hpp"
#include "gc3/segmentation.hpp"

namespace gc3 {

struct CodecLayer {
  GroupCommParams comm;
  ResidualBLSTMParams rnn;
};

struct ContextCodecParams {
  std::size_t context = 0;  // C
  std::vector<CodecLayer> encoder;
  std::vector<CodecLayer> decoder;

  static ContextCodecParams init(std::size_t context, std::size_t layers, GroupCommKind kind, std::size_t width,
                                 std::size_t hidden_dim, Initializer& init, std::size_t mhsa_hidden = 0);
  void collect(NamedParams& out, const std::string& prefix) const;
};

/// GroupComm across groups per frame, then the shared residual BLSTM over the
/// C frames of every (block, group). blocks [R×C×K×M].
Tensor codec_layer(const CodecLayer& layer, const Tensor& blocks);

/// H [T×K×M] -> blocks [R×C×K×M].
Tensor context_segment(const Tensor& h, std::size_t context);
/// blocks [R×C×K×M] -> summaries [R×K×M].
Tensor context_encode(const ContextCodecParams& params, const Tensor& blocks);
/// Adds each summary to every frame of its block, runs the decoder layers and
/// overlap-adds back to [T×K×M].
Tensor context_decode(const ContextCodecParams& params, const Tensor& summaries, const Tensor& blocks,
                      std::size_t length);

}  // namespace gc3
