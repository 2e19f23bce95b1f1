#pragma once

// Feature groups and the communication modules applied across them.
// Grouped tensors keep groups on axis -2 and group features on axis -1:
// [..×N] splits into [..×K'×M].

#include <string>

#include "gc3/errors.hpp"
#include "gc3/layers.hpp"

namespace gc3 {

struct GroupSpec {
  std::size_t N = 0;
  std::size_t M = 0;
  double overlap = 0.0;

  /// Non-overlapping split of N features into K groups.
  static GroupSpec from_groups(std::size_t N, std::size_t K);
  std::size_t hop() const;
  /// Number of groups actually produced (K').
  std::size_t groups() const;
  /// Throws ConfigError when (N, M, overlap) do not tile [0, N).
  void validate() const;
};

Tensor group_split(const Tensor& h, const GroupSpec& spec);
/// Coverage-normalized overlap-add over the feature axis.
Tensor group_merge(const Tensor& groups, const GroupSpec& spec);

enum class GroupCommKind { blstm, tac, mhsa };

std::string to_string(GroupCommKind kind);
GroupCommKind groupcomm_kind_from_string(const std::string& name);

struct TACParams {
  LinearParams transform;  // P: M→D
  LinearParams average;    // R: D→D
  LinearParams concat;     // S: 2D→M
  PReLUParams transform_act, average_act, concat_act;
};

struct MHSAParams {
  static constexpr std::size_t kHeads = 4;
  Tensor query;   // [heads·d_k × M], head-major rows
  Tensor key;     // [heads·d_k × M]
  Tensor value;   // [heads·d_k × M]
  Tensor output;  // W^o as [M × heads·d_k]
  LinearParams hidden;  // M→F
  PReLUParams hidden_act;
  LinearParams project;  // F→M

  std::size_t head_dim() const { return query.dim(0) / kHeads; }
};

/// One shared parameter set whatever the group count.
struct GroupCommParams {
  GroupCommKind kind = GroupCommKind::tac;
  ResidualBLSTMParams blstm;
  TACParams tac;
  MHSAParams mhsa;

  /// hidden_dim is H_o: BLSTM hidden width, TAC uses D = 3·H_o. mhsa_hidden
  /// of 0 picks the post-attention width that matches the BLSTM variant size.
  static GroupCommParams init(GroupCommKind kind, std::size_t width, std::size_t hidden_dim, Initializer& init,
                              std::size_t mhsa_hidden = 0);
  std::size_t width() const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

/// Post-attention FC width used when none is configured.
std::size_t default_mhsa_hidden(std::size_t width, std::size_t hidden_dim);

/// Applies the module across groups independently for every leading index:
/// groups [F×K'×M] or [K'×M], shape preserved.
Tensor groupcomm(const GroupCommParams& params, const Tensor& groups);
Tensor groupcomm_blstm(const ResidualBLSTMParams& params, const Tensor& groups);
Tensor groupcomm_tac(const TACParams& params, const Tensor& groups);
Tensor groupcomm_mhsa(const MHSAParams& params, const Tensor& groups);
/// Attention weights of the MHSA module: [F×heads×K'×K'].
Tensor mhsa_attention(const MHSAParams& params, const Tensor& groups);

}  // namespace gc3
