#include "gc3/complexity.hpp"

#include "gc3/model.hpp"
#include "gc3/segmentation.hpp"

namespace gc3 {

std::uint64_t ComplexityReport::total_params() const {
  std::uint64_t n = 0;
  for (const auto& e : entries) n += e.params;
  return n;
}

std::uint64_t ComplexityReport::total_macs() const {
  std::uint64_t n = 0;
  for (const auto& e : entries) n += e.macs;
  return n;
}

ComplexityEntry count_linear(std::string name, std::uint64_t in, std::uint64_t out, std::uint64_t vectors) {
  return {std::move(name), in * out + out, in * out * vectors};
}

ComplexityEntry subtotal(const ComplexityReport& report, const std::string& prefix) {
  ComplexityEntry total{prefix, 0, 0};
  for (const auto& e : report.entries)
    if (e.name.starts_with(prefix)) {
      total.params += e.params;
      total.macs += e.macs;
    }
  return total;
}

namespace {

using u64 = std::uint64_t;

struct Cost {
  u64 params = 0;
  u64 macs = 0;  // per application unit (see callers)
};

Cost linear(u64 in, u64 out) { return {in * out + out, in * out}; }
Cost layer_norm(u64 dim) { return {2 * dim, 0}; }

Cost lstm(u64 in, u64 hidden) { return {4 * hidden * (in + hidden) + 8 * hidden, 4 * hidden * (in + hidden) + 16 * hidden}; }

// Per sequence position.
Cost residual_blstm(u64 width, u64 hidden) {
  const Cost l = lstm(width, hidden), proj = linear(2 * hidden, width), norm = layer_norm(width);
  return {2 * l.params + proj.params + norm.params, 2 * l.macs + proj.macs};
}

// Per frame, for `groups` groups.
Cost groupcomm(const ModelConfig& c, u64 groups) {
  const u64 m = c.M, h = c.H_o;
  switch (c.groupcomm) {
    case GroupCommKind::blstm: {
      const Cost rb = residual_blstm(m, h);
      return {rb.params, groups * rb.macs};
    }
    case GroupCommKind::tac: {
      const u64 d = 3 * h;
      const Cost p = linear(m, d), r = linear(d, d), s = linear(2 * d, m);
      return {p.params + r.params + s.params + 3, groups * p.macs + r.macs + groups * s.macs};
    }
    case GroupCommKind::mhsa: {
      const u64 f = c.mhsa_hidden ? c.mhsa_hidden : default_mhsa_hidden(c.M, c.H_o);
      const u64 heads = MHSAParams::kHeads, hd = heads * m;
      const Cost fc1 = linear(m, f), fc2 = linear(f, m);
      const u64 params = 3 * hd * m + hd * m + fc1.params + 1 + fc2.params;
      const u64 macs = groups * 3 * hd * m + 2 * heads * groups * groups * m + groups * hd * m +
                       groups * (fc1.macs + fc2.macs);
      return {params, macs};
    }
  }
  return {};
}

// Per frame.
Cost ds_conv(u64 width, u64 hidden) {
  const Cost expand = linear(width, hidden), project = linear(hidden, width);
  const u64 params = expand.params + 1 + 2 * hidden + 3 * hidden + hidden + 1 + 2 * hidden + project.params;
  return {params, expand.macs + 3 * hidden + project.macs};
}

void push(ComplexityReport& r, std::string name, u64 params, u64 macs) {
  r.entries.push_back({std::move(name), params, macs});
}

void separator(ComplexityReport& r, const ModelConfig& c, u64 frames, u64 groups) {
  const u64 width = c.separator_width();
  if (c.separator == SeparatorKind::dprnn) {
    const u64 positions = Segmentation::plan(frames, c.B).blocks * c.B;
    const Cost rb = residual_blstm(width, c.H_o);
    for (std::size_t i = 0; i < c.L_s; ++i) {
      const std::string p = "separator.block" + std::to_string(i);
      if (c.grouped()) {
        const Cost gc = groupcomm(c, groups);
        push(r, p + ".comm", gc.params, positions * gc.macs);
      }
      push(r, p + ".intra", rb.params, positions * groups * rb.macs);
      push(r, p + ".inter", rb.params, positions * groups * rb.macs);
    }
  } else {
    const Cost block = ds_conv(width, c.tcn_hidden());
    for (std::size_t i = 0; i < c.tcn_stacks * c.tcn_blocks; ++i) {
      const std::string p = "separator.block" + std::to_string(i);
      if (c.grouped()) {
        const Cost gc = groupcomm(c, groups);
        push(r, p + ".comm", gc.params, frames * gc.macs);
      }
      push(r, p + ".conv", block.params, frames * groups * block.macs);
    }
  }
}

}  // namespace

ComplexityReport analyze(const ModelConfig& c, std::size_t samples) {
  c.validate();
  ComplexityReport r;
  r.model = c.name;
  r.samples = samples;
  const u64 frames = frame_count(c, samples);
  const u64 padded = (frames - 1) * c.stride + c.window;
  const u64 kernel = c.N * c.window;
  push(r, "encoder", kernel, frames * kernel);
  u64 groups = 1;
  if (!c.grouped()) {
    r.entries.push_back(count_linear("bottleneck", c.N, c.H_i, frames));
    separator(r, c, frames, 1);
  } else {
    groups = c.group_spec().groups();
    u64 sep_frames = frames;
    if (c.variant == Variant::gc3) {
      const auto seg = Segmentation::plan(frames, c.C);
      const u64 positions = seg.blocks * c.C;
      const Cost gc = groupcomm(c, groups), rb = residual_blstm(c.M, c.H_o);
      for (const char* side : {"enc", "dec"})
        for (std::size_t i = 0; i < c.L_c; ++i) {
          const std::string p = std::string("codec.") + side + std::to_string(i);
          push(r, p + ".comm", gc.params, positions * gc.macs);
          push(r, p + ".rnn", rb.params, positions * groups * rb.macs);
        }
      sep_frames = seg.blocks;
    }
    separator(r, c, sep_frames, groups);
  }
  const u64 in = c.grouped() ? c.M : c.H_i;
  const u64 out = c.grouped() ? c.sources * c.M : c.sources * c.N;
  push(r, "mask.act", 1, 0);
  r.entries.push_back(count_linear("mask.fc", in, out, frames * groups));
  push(r, "mask.apply", 0, c.sources * c.N * frames);
  push(r, "decoder", kernel, c.sources * padded * kernel);
  return r;
}

ComplexityReport count_params(const ModelConfig& config) {
  return analyze(config, config.window);
}

ComplexityReport count_macs(const ModelConfig& config, std::size_t samples) { return analyze(config, samples); }

}  // namespace gc3
