#include "gc3/groupcomm.hpp"

#include <cmath>

namespace gc3 {

GroupSpec GroupSpec::from_groups(std::size_t N, std::size_t K) {
  if (K == 0 || N % K != 0) throw ConfigError("K", "must divide N=" + std::to_string(N));
  return {N, N / K, 0.0};
}

std::size_t GroupSpec::hop() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(M) * (1.0 - overlap)));
}

std::size_t GroupSpec::groups() const { return (N - M) / hop() + 1; }

void GroupSpec::validate() const {
  if (M == 0 || M > N) throw ConfigError("M", "group width must be in [1, N]");
  if (overlap < 0.0 || overlap >= 1.0) throw ConfigError("group_overlap", "must be in [0, 1)");
  if (hop() == 0) throw ConfigError("group_overlap", "leaves a group hop of 0");
  if ((N - M) % hop() != 0) {
    throw ConfigError("group_overlap", "groups of width " + std::to_string(M) + " and hop " + std::to_string(hop()) +
                                           " do not tile N=" + std::to_string(N));
  }
}

Tensor group_split(const Tensor& h, const GroupSpec& spec) {
  spec.validate();
  if (h.rank() == 0 || h.shape().back() != spec.N) {
    throw DimensionError("group_split: input " + shape_str(h.shape()) + " does not end in N=" + std::to_string(spec.N));
  }
  return frames(h, -1, spec.M, spec.hop());
}

Tensor group_merge(const Tensor& groups, const GroupSpec& spec) {
  spec.validate();
  if (groups.rank() < 2 || groups.dim(-1) != spec.M || groups.dim(-2) != spec.groups()) {
    throw DimensionError("group_merge: " + shape_str(groups.shape()) + " does not match " +
                         std::to_string(spec.groups()) + " groups of width " + std::to_string(spec.M));
  }
  Tensor merged = overlap_add(groups, static_cast<int>(groups.rank()) - 2, spec.hop());
  if (spec.hop() == spec.M) return merged;
  std::vector<double> inverse(spec.N, 0.0);
  for (std::size_t g = 0; g < spec.groups(); ++g)
    for (std::size_t m = 0; m < spec.M; ++m) inverse[g * spec.hop() + m] += 1.0;
  for (auto& v : inverse) v = 1.0 / v;
  return mul(merged, Tensor({spec.N}, std::move(inverse)));
}

std::string to_string(GroupCommKind kind) {
  switch (kind) {
    case GroupCommKind::blstm: return "blstm";
    case GroupCommKind::tac: return "tac";
    case GroupCommKind::mhsa: return "mhsa";
  }
  return "?";
}

GroupCommKind groupcomm_kind_from_string(const std::string& name) {
  if (name == "blstm") return GroupCommKind::blstm;
  if (name == "tac") return GroupCommKind::tac;
  if (name == "mhsa") return GroupCommKind::mhsa;
  throw ConfigError("groupcomm", "unknown kind '" + name + "' (expected blstm, tac or mhsa)");
}

std::size_t default_mhsa_hidden(std::size_t width, std::size_t hidden_dim) {
  const double m = static_cast<double>(width), h = static_cast<double>(hidden_dim);
  const double blstm = 2.0 * (4.0 * h * (m + h) + 8.0 * h) + (2.0 * h * m + m) + 2.0 * m;
  const double fixed = 16.0 * m * m + m + 1.0;
  const auto fitted = static_cast<long>(std::lround((blstm - fixed) / (2.0 * m + 1.0)));
  return std::max<std::size_t>(4 * width, fitted > 0 ? static_cast<std::size_t>(fitted) : 0);
}

GroupCommParams GroupCommParams::init(GroupCommKind kind, std::size_t width, std::size_t hidden_dim, Initializer& init,
                                      std::size_t mhsa_hidden) {
  GroupCommParams p;
  p.kind = kind;
  switch (kind) {
    case GroupCommKind::blstm:
      p.blstm = ResidualBLSTMParams::init(width, hidden_dim, init);
      break;
    case GroupCommKind::tac: {
      const std::size_t d = 3 * hidden_dim;
      p.tac.transform = LinearParams::init(d, width, init);
      p.tac.average = LinearParams::init(d, d, init);
      p.tac.concat = LinearParams::init(width, 2 * d, init);
      p.tac.transform_act = PReLUParams::init();
      p.tac.average_act = PReLUParams::init();
      p.tac.concat_act = PReLUParams::init();
      break;
    }
    case GroupCommKind::mhsa: {
      const std::size_t hd = MHSAParams::kHeads * width;
      const double bound = 1.0 / std::sqrt(static_cast<double>(width));
      p.mhsa.query = init.uniform({hd, width}, bound);
      p.mhsa.key = init.uniform({hd, width}, bound);
      p.mhsa.value = init.uniform({hd, width}, bound);
      p.mhsa.output = init.uniform({width, hd}, 1.0 / std::sqrt(static_cast<double>(hd)));
      const std::size_t f = mhsa_hidden ? mhsa_hidden : default_mhsa_hidden(width, hidden_dim);
      p.mhsa.hidden = LinearParams::init(f, width, init);
      p.mhsa.hidden_act = PReLUParams::init();
      p.mhsa.project = LinearParams::init(width, f, init);
      break;
    }
  }
  return p;
}

std::size_t GroupCommParams::width() const {
  switch (kind) {
    case GroupCommKind::blstm: return blstm.width();
    case GroupCommKind::tac: return tac.transform.in();
    case GroupCommKind::mhsa: return mhsa.query.dim(1);
  }
  return 0;
}

void GroupCommParams::collect(NamedParams& out, const std::string& prefix) const {
  switch (kind) {
    case GroupCommKind::blstm:
      blstm.collect(out, prefix + ".blstm");
      break;
    case GroupCommKind::tac:
      tac.transform.collect(out, prefix + ".tac.transform");
      tac.transform_act.collect(out, prefix + ".tac.transform_act");
      tac.average.collect(out, prefix + ".tac.average");
      tac.average_act.collect(out, prefix + ".tac.average_act");
      tac.concat.collect(out, prefix + ".tac.concat");
      tac.concat_act.collect(out, prefix + ".tac.concat_act");
      break;
    case GroupCommKind::mhsa:
      out.emplace_back(prefix + ".mhsa.query", mhsa.query);
      out.emplace_back(prefix + ".mhsa.key", mhsa.key);
      out.emplace_back(prefix + ".mhsa.value", mhsa.value);
      out.emplace_back(prefix + ".mhsa.output", mhsa.output);
      mhsa.hidden.collect(out, prefix + ".mhsa.hidden");
      mhsa.hidden_act.collect(out, prefix + ".mhsa.hidden_act");
      mhsa.project.collect(out, prefix + ".mhsa.project");
      break;
  }
}

namespace {

std::pair<Tensor, bool> as_frames(const Tensor& g, std::size_t width, const char* who) {
  if ((g.rank() != 2 && g.rank() != 3) || g.dim(-1) != width) {
    throw DimensionError(std::string(who) + ": expected [F×K×" + std::to_string(width) + "] or [K×" +
                         std::to_string(width) + "], got " + shape_str(g.shape()));
  }
  if (g.rank() == 3) return {g, false};
  return {reshape(g, {1, g.dim(0), g.dim(1)}), true};
}

Tensor unframe(const Tensor& y, bool squeezed) { return squeezed ? reshape(y, {y.dim(1), y.dim(2)}) : y; }

// [F×K×heads·d] -> [F·heads×K×d]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t f = x.dim(0), k = x.dim(1), d = x.dim(2) / heads;
  return reshape(permute(reshape(x, {f, k, heads, d}), {0, 2, 1, 3}), {f * heads, k, d});
}

}  // namespace

Tensor groupcomm(const GroupCommParams& params, const Tensor& groups) {
  switch (params.kind) {
    case GroupCommKind::blstm: return groupcomm_blstm(params.blstm, groups);
    case GroupCommKind::tac: return groupcomm_tac(params.tac, groups);
    case GroupCommKind::mhsa: return groupcomm_mhsa(params.mhsa, groups);
  }
  return groups;
}

Tensor groupcomm_blstm(const ResidualBLSTMParams& params, const Tensor& groups) {
  auto [g, squeezed] = as_frames(groups, params.width(), "groupcomm_blstm");
  return unframe(residual_blstm(params, g), squeezed);
}

Tensor groupcomm_tac(const TACParams& params, const Tensor& groups) {
  auto [g, squeezed] = as_frames(groups, params.transform.in(), "groupcomm_tac");
  const std::size_t f = g.dim(0), k = g.dim(1), d = params.transform.out();
  Tensor each = prelu(params.transform_act, fc(params.transform, g));
  Tensor shared = prelu(params.average_act, fc(params.average, mean(each, 1)));
  Tensor joined = concat({each, broadcast_to(reshape(shared, {f, 1, d}), {f, k, d})}, -1);
  return unframe(add(prelu(params.concat_act, fc(params.concat, joined)), g), squeezed);
}

Tensor mhsa_attention(const MHSAParams& params, const Tensor& groups) {
  auto [g, squeezed] = as_frames(groups, params.query.dim(1), "groupcomm_mhsa");
  const std::size_t f = g.dim(0), k = g.dim(1), heads = MHSAParams::kHeads;
  Tensor q = split_heads(matmul_nt(g, params.query), heads);
  Tensor kk = split_heads(matmul_nt(g, params.key), heads);
  Tensor scores = scale(matmul_nt(q, kk), 1.0 / std::sqrt(static_cast<double>(params.head_dim())));
  return reshape(softmax(scores, -1), {f, heads, k, k});
}

Tensor groupcomm_mhsa(const MHSAParams& params, const Tensor& groups) {
  auto [g, squeezed] = as_frames(groups, params.query.dim(1), "groupcomm_mhsa");
  const std::size_t f = g.dim(0), k = g.dim(1), heads = MHSAParams::kHeads, d = params.head_dim();
  Tensor weights = reshape(mhsa_attention(params, g), {f * heads, k, k});
  Tensor v = split_heads(matmul_nt(g, params.value), heads);
  Tensor attended = matmul(weights, v);  // [F·heads×K×d]
  Tensor joined = reshape(permute(reshape(attended, {f, heads, k, d}), {0, 2, 1, 3}), {f, k, heads * d});
  Tensor mixed = matmul_nt(joined, params.output);
  Tensor y = fc(params.project, prelu(params.hidden_act, fc(params.hidden, mixed)));
  return unframe(add(y, g), squeezed);
}

}  // namespace gc3
