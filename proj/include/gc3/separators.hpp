#pragma once

// Sequence models over grouped features x [S×G×W]: S frames, G groups of
// width W. Baseline models use G=1 and no GroupComm; grouped models apply one
// GroupComm module at the input of every block and share all block weights
// across groups.

#include <optional>
#include <vector>

#include "gc3/groupcomm.hpp"
#include "gc3/segmentation.hpp"

namespace gc3 {

enum class SeparatorKind { dprnn, tcn };

std::string to_string(SeparatorKind kind);
SeparatorKind separator_kind_from_string(const std::string& name);

struct DPRNNBlockParams {
  std::optional<GroupCommParams> comm;
  ResidualBLSTMParams intra;
  ResidualBLSTMParams inter;
};

struct TCNBlockParams {
  std::optional<GroupCommParams> comm;
  DSConvParams conv;
  std::size_t dilation = 1;
};

struct SeparatorParams {
  SeparatorKind kind = SeparatorKind::dprnn;
  std::size_t block_size = 0;  // B, DPRNN only
  std::vector<DPRNNBlockParams> dprnn;
  std::vector<TCNBlockParams> tcn;

  void collect(NamedParams& out, const std::string& prefix) const;
};

struct SeparatorShape {
  std::size_t width = 0;   // W
  std::size_t hidden = 0;  // H_o for BLSTMs, H_cnn for TCN blocks
  std::size_t comm_hidden = 0;
  std::optional<GroupCommKind> comm;
  std::size_t mhsa_hidden = 0;
};

SeparatorParams init_dprnn(const SeparatorShape& shape, std::size_t blocks, std::size_t block_size, Initializer& init);
/// stacks × blocks_per_stack blocks with dilations 1, 2, 4, .. restarting per stack.
SeparatorParams init_tcn(const SeparatorShape& shape, std::size_t stacks, std::size_t blocks_per_stack,
                         Initializer& init);

/// x [S×D] -> [R×B×D] or x [S×G×W] -> [R×B×G×W].
Tensor dprnn_segment(const Tensor& x, std::size_t block_size);
/// blocks [R×B×G×W], shape preserving.
Tensor dprnn_block(const DPRNNBlockParams& params, const Tensor& blocks);
Tensor dprnn_forward(const SeparatorParams& params, const Tensor& x);
/// x [S×G×W] (or [S×W]), shape preserving.
Tensor tcn_block(const TCNBlockParams& params, const Tensor& x);
Tensor tcn_forward(const SeparatorParams& params, const Tensor& x);
Tensor separator_forward(const SeparatorParams& params, const Tensor& x);

}  // namespace gc3
