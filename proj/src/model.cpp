#include "gc3/model.hpp"

#include <cmath>

namespace gc3 {

NamedParams SeparationModel::parameters() const {
  NamedParams out;
  out.emplace_back("encoder", encoder);
  if (bottleneck) bottleneck->collect(out, "bottleneck");
  if (codec) codec->collect(out, "codec");
  separator.collect(out, "separator");
  mask_act.collect(out, "mask.act");
  mask.collect(out, "mask.fc");
  out.emplace_back("decoder", decoder);
  return out;
}

SeparationModel build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  SeparationModel m;
  m.config = config;
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.window));
  m.encoder = init.uniform({config.N, 1, config.window}, bound);
  const std::size_t width = config.separator_width();
  if (!config.grouped()) m.bottleneck = LinearParams::init(config.H_i, config.N, init);
  if (config.variant == Variant::gc3) {
    m.codec = ContextCodecParams::init(config.C, config.L_c, config.groupcomm, width, config.H_o, init,
                                       config.mhsa_hidden);
  }
  SeparatorShape shape;
  shape.width = width;
  shape.comm_hidden = config.H_o;
  shape.mhsa_hidden = config.mhsa_hidden;
  if (config.grouped()) shape.comm = config.groupcomm;
  if (config.separator == SeparatorKind::dprnn) {
    shape.hidden = config.H_o;
    m.separator = init_dprnn(shape, config.L_s, config.B, init);
  } else {
    shape.hidden = config.tcn_hidden();
    m.separator = init_tcn(shape, config.tcn_stacks, config.tcn_blocks, init);
  }
  m.mask_act = PReLUParams::init();
  m.mask = config.grouped() ? LinearParams::init(config.sources * config.M, config.M, init)
                            : LinearParams::init(config.sources * config.N, config.H_i, init);
  m.decoder = init.uniform({config.N, 1, config.window}, bound);
  return m;
}

std::size_t frame_count(const ModelConfig& config, std::size_t samples) {
  if (samples < config.window) {
    throw DimensionError("waveform of " + std::to_string(samples) + " samples is shorter than the " +
                         std::to_string(config.window) + "-sample window");
  }
  return (samples - config.window + config.stride - 1) / config.stride + 1;
}

Tensor encode_waveform(const SeparationModel& model, const Tensor& waveform) {
  const auto& c = model.config;
  if (waveform.rank() != 1) throw DimensionError("encode_waveform: expected [L], got " + shape_str(waveform.shape()));
  const std::size_t length = waveform.dim(0);
  const std::size_t padded = (frame_count(c, length) - 1) * c.stride + c.window;
  Tensor x = reshape(pad(waveform, 0, 0, padded - length), {1, padded});
  return conv1d(x, model.encoder, c.stride);
}

namespace {

Tensor mask_head(const SeparationModel& model, const Tensor& features) {
  return relu(fc(model.mask, prelu(model.mask_act, features)));
}

}  // namespace

Tensor separate_features(const SeparationModel& model, const Tensor& h) {
  const auto& c = model.config;
  if (h.rank() != 2 || h.dim(0) != c.N) {
    throw DimensionError("separate_features: expected [" + std::to_string(c.N) + "×T], got " + shape_str(h.shape()));
  }
  const std::size_t frames = h.dim(1), x = c.sources;
  Tensor ht = transpose(h);  // [T×N]
  if (!c.grouped()) {
    Tensor y = separator_forward(model.separator, fc(*model.bottleneck, ht));
    return permute(reshape(mask_head(model, y), {frames, x, c.N}), {1, 2, 0});
  }
  const GroupSpec spec = c.group_spec();
  const std::size_t k = spec.groups();
  Tensor groups = group_split(ht, spec);  // [T×K'×M]
  Tensor y;
  if (c.variant == Variant::gc3) {
    Tensor blocks = context_segment(groups, c.C);
    Tensor summaries = separator_forward(model.separator, context_encode(*model.codec, blocks));
    y = context_decode(*model.codec, summaries, blocks, frames);
  } else {
    y = separator_forward(model.separator, groups);
  }
  Tensor per_source = permute(reshape(mask_head(model, y), {frames, k, x, c.M}), {2, 0, 1, 3});
  return permute(group_merge(per_source, spec), {0, 2, 1});
}

Tensor decode_waveforms(const SeparationModel& model, const Tensor& h, const Tensor& masks, std::size_t length) {
  const auto& c = model.config;
  if (masks.rank() != 3 || masks.dim(0) != c.sources || masks.dim(1) != h.dim(0) || masks.dim(2) != h.dim(1)) {
    throw DimensionError("decode_waveforms: masks " + shape_str(masks.shape()) + " do not match features " +
                         shape_str(h.shape()) + " for " + std::to_string(c.sources) + " sources");
  }
  std::vector<Tensor> outs;
  for (std::size_t s = 0; s < c.sources; ++s) {
    Tensor wave = conv_transpose1d(mul(select(masks, 0, s), h), model.decoder, c.stride);  // [1×Lp]
    if (wave.dim(1) < length) throw DimensionError("decode_waveforms: decoded length shorter than requested");
    outs.push_back(reshape(slice(wave, 1, 0, length), {length}));
  }
  return stack(outs, 0);
}

Tensor separate(const SeparationModel& model, const Tensor& waveform) {
  Tensor h = encode_waveform(model, waveform);
  return decode_waveforms(model, h, separate_features(model, h), waveform.dim(0));
}

}  // namespace gc3
