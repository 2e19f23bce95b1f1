#include "gc3/separators.hpp"

namespace gc3 {

std::string to_string(SeparatorKind kind) { return kind == SeparatorKind::dprnn ? "dprnn" : "tcn"; }

SeparatorKind separator_kind_from_string(const std::string& name) {
  if (name == "dprnn") return SeparatorKind::dprnn;
  if (name == "tcn") return SeparatorKind::tcn;
  throw ConfigError("separator", "unknown kind '" + name + "' (expected dprnn or tcn)");
}

void SeparatorParams::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < dprnn.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    if (dprnn[i].comm) dprnn[i].comm->collect(out, p + ".comm");
    dprnn[i].intra.collect(out, p + ".intra");
    dprnn[i].inter.collect(out, p + ".inter");
  }
  for (std::size_t i = 0; i < tcn.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    if (tcn[i].comm) tcn[i].comm->collect(out, p + ".comm");
    tcn[i].conv.collect(out, p + ".conv");
  }
}

namespace {

std::optional<GroupCommParams> make_comm(const SeparatorShape& shape, Initializer& init) {
  if (!shape.comm) return std::nullopt;
  return GroupCommParams::init(*shape.comm, shape.width, shape.comm_hidden, init, shape.mhsa_hidden);
}

std::pair<Tensor, bool> as_grouped(const Tensor& x, const char* who) {
  if (x.rank() == 3) return {x, false};
  if (x.rank() == 2) return {reshape(x, {x.dim(0), 1, x.dim(1)}), true};
  throw DimensionError(std::string(who) + ": expected [S×D] or [S×G×W], got " + shape_str(x.shape()));
}

Tensor ungrouped(const Tensor& y, bool squeezed) { return squeezed ? reshape(y, {y.dim(0), y.dim(2)}) : y; }

}  // namespace

SeparatorParams init_dprnn(const SeparatorShape& shape, std::size_t blocks, std::size_t block_size, Initializer& init) {
  if (block_size < 2 || block_size % 2 != 0) throw ConfigError("B", "block size must be even and >= 2");
  SeparatorParams p;
  p.kind = SeparatorKind::dprnn;
  p.block_size = block_size;
  for (std::size_t i = 0; i < blocks; ++i) {
    DPRNNBlockParams b;
    b.comm = make_comm(shape, init);
    b.intra = ResidualBLSTMParams::init(shape.width, shape.hidden, init);
    b.inter = ResidualBLSTMParams::init(shape.width, shape.hidden, init);
    p.dprnn.push_back(std::move(b));
  }
  return p;
}

SeparatorParams init_tcn(const SeparatorShape& shape, std::size_t stacks, std::size_t blocks_per_stack,
                         Initializer& init) {
  SeparatorParams p;
  p.kind = SeparatorKind::tcn;
  for (std::size_t s = 0; s < stacks; ++s)
    for (std::size_t i = 0; i < blocks_per_stack; ++i) {
      TCNBlockParams b;
      b.comm = make_comm(shape, init);
      b.conv = DSConvParams::init(shape.width, shape.hidden, init);
      b.dilation = std::size_t{1} << i;
      p.tcn.push_back(std::move(b));
    }
  return p;
}

Tensor dprnn_segment(const Tensor& x, std::size_t block_size) {
  return segment(x, Segmentation::plan(x.dim(0), block_size));
}

Tensor dprnn_block(const DPRNNBlockParams& params, const Tensor& blocks) {
  if (blocks.rank() != 4) throw DimensionError("dprnn_block: expected [R×B×G×W], got " + shape_str(blocks.shape()));
  const std::size_t r = blocks.dim(0), b = blocks.dim(1), g = blocks.dim(2), w = blocks.dim(3);
  Tensor h = blocks;
  if (params.comm) h = reshape(groupcomm(*params.comm, reshape(h, {r * b, g, w})), {r, b, g, w});
  Tensor intra = reshape(permute(h, {0, 2, 1, 3}), {r * g, b, w});
  h = permute(reshape(residual_blstm(params.intra, intra), {r, g, b, w}), {0, 2, 1, 3});
  Tensor inter = reshape(permute(h, {1, 2, 0, 3}), {b * g, r, w});
  return permute(reshape(residual_blstm(params.inter, inter), {b, g, r, w}), {2, 0, 1, 3});
}

Tensor dprnn_forward(const SeparatorParams& params, const Tensor& x_in) {
  auto [x, squeezed] = as_grouped(x_in, "dprnn_forward");
  const auto seg = Segmentation::plan(x.dim(0), params.block_size);
  Tensor h = segment(x, seg);
  for (const auto& block : params.dprnn) h = dprnn_block(block, h);
  return ungrouped(unsegment(h, seg), squeezed);
}

Tensor tcn_block(const TCNBlockParams& params, const Tensor& x_in) {
  auto [x, squeezed] = as_grouped(x_in, "tcn_block");
  Tensor h = params.comm ? groupcomm(*params.comm, x) : x;
  h = permute(ds_conv_block(params.conv, permute(h, {1, 0, 2}), params.dilation), {1, 0, 2});
  return ungrouped(h, squeezed);
}

Tensor tcn_forward(const SeparatorParams& params, const Tensor& x) {
  Tensor h = x;
  for (const auto& block : params.tcn) h = tcn_block(block, h);
  return h;
}

Tensor separator_forward(const SeparatorParams& params, const Tensor& x) {
  return params.kind == SeparatorKind::dprnn ? dprnn_forward(params, x) : tcn_forward(params, x);
}

}  // namespace gc3
