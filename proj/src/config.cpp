#include "gc3/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <set>
#include <sstream>

namespace gc3 {

namespace pt = boost::property_tree;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::groupcomm: return "groupcomm";
    case Variant::gc3: return "gc3";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "groupcomm") return Variant::groupcomm;
  if (name == "gc3") return Variant::gc3;
  throw ConfigError("variant", "unknown value '" + name + "' (expected baseline, groupcomm or gc3)");
}

GroupSpec ModelConfig::group_spec() const {
  if (!grouped()) return {N, N, 0.0};
  return {N, M, group_overlap};
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(field, "must be positive");
  };
  positive(sources, "X");
  positive(sample_rate, "sample_rate");
  positive(window, "window");
  positive(stride, "stride");
  positive(N, "N");
  positive(H_i, "H_i");
  positive(H_o, "H_o");
  if (variant == Variant::baseline) {
    if (K != 1) throw ConfigError("K", "baseline models use K=1");
    if (group_overlap != 0.0) throw ConfigError("group_overlap", "baseline models have no groups");
  } else {
    if (K < 2) throw ConfigError("K", "grouped models need K >= 2");
    if (N % K != 0) throw ConfigError("K", "must divide N=" + std::to_string(N));
    if (M != N / K) throw ConfigError("M", "must equal N/K=" + std::to_string(N / K));
    if (H_i != M) throw ConfigError("H_i", "grouped models run their BLSTMs at the group width M=" + std::to_string(M));
    if (group_overlap != 0.0 && group_overlap != 0.25 && group_overlap != 0.5) {
      throw ConfigError("group_overlap", "must be 0, 0.25 or 0.5");
    }
    group_spec().validate();
  }
  if (variant == Variant::gc3) {
    if (L_c == 0) throw ConfigError("L_c", "gc3 models need at least one codec layer");
    if (C < 2 || C % 2 != 0) throw ConfigError("C", "context size must be even and >= 2");
  }
  if (separator == SeparatorKind::dprnn && (B < 2 || B % 2 != 0)) {
    throw ConfigError("B", "DPRNN block size must be even and >= 2");
  }
}

namespace {

const std::set<std::string> kKeys{
    "model.name",       "model.variant",    "model.separator", "model.groupcomm", "model.X",
    "model.sample_rate", "model.window",    "model.stride",    "widths.N",        "widths.K",
    "widths.M",         "widths.H_i",       "widths.H_o",      "widths.H_cnn",    "widths.mhsa_hidden",
    "widths.group_overlap", "depths.L_s",   "depths.L_c",      "depths.C",        "depths.B",
    "depths.tcn_stacks", "depths.tcn_blocks"};

std::size_t get_size(const pt::ptree& tree, const std::string& key, std::size_t fallback) {
  auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const long long n = std::stoll(*v, &used);
    if (used != v->size() || n < 0) throw std::invalid_argument("");
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(key.substr(key.find('.') + 1), "expected a non-negative integer, got '" + *v + "'");
  }
}

double get_real(const pt::ptree& tree, const std::string& key, double fallback) {
  auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key.substr(key.find('.') + 1), "expected a number, got '" + *v + "'");
  }
}

}  // namespace

ModelConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("file", e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "key outside of a section");
    for (const auto& [key, value] : body)
      if (!kKeys.count(section + "." + key)) throw ConfigError(key, "unknown key in [" + section + "]");
  }
  ModelConfig c;
  c.name = tree.get<std::string>("model.name", "");
  if (auto v = tree.get_optional<std::string>("model.variant")) c.variant = variant_from_string(*v);
  if (auto v = tree.get_optional<std::string>("model.separator")) c.separator = separator_kind_from_string(*v);
  if (auto v = tree.get_optional<std::string>("model.groupcomm")) c.groupcomm = groupcomm_kind_from_string(*v);
  c.sources = get_size(tree, "model.X", c.sources);
  c.sample_rate = get_size(tree, "model.sample_rate", c.sample_rate);
  c.window = get_size(tree, "model.window", c.window);
  c.stride = get_size(tree, "model.stride", c.stride);
  c.N = get_size(tree, "widths.N", c.N);
  c.K = get_size(tree, "widths.K", c.K);
  c.M = get_size(tree, "widths.M", c.K ? c.N / c.K : 0);
  c.H_i = get_size(tree, "widths.H_i", c.H_i);
  c.H_o = get_size(tree, "widths.H_o", c.H_o);
  c.H_cnn = get_size(tree, "widths.H_cnn", c.H_cnn);
  c.mhsa_hidden = get_size(tree, "widths.mhsa_hidden", c.mhsa_hidden);
  c.group_overlap = get_real(tree, "widths.group_overlap", c.group_overlap);
  c.L_s = get_size(tree, "depths.L_s", c.L_s);
  c.L_c = get_size(tree, "depths.L_c", c.L_c);
  c.C = get_size(tree, "depths.C", c.C);
  c.B = get_size(tree, "depths.B", c.B);
  c.tcn_stacks = get_size(tree, "depths.tcn_stacks", c.tcn_stacks);
  c.tcn_blocks = get_size(tree, "depths.tcn_blocks", c.tcn_blocks);
  c.validate();
  return c;
}

ModelConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  return parse_config(in);
}

std::string serialize_config(const ModelConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "[model]\n";
  if (!c.name.empty()) out << "name = " << c.name << "\n";
  out << "variant = " << to_string(c.variant) << "\n"
      << "separator = " << to_string(c.separator) << "\n"
      << "groupcomm = " << to_string(c.groupcomm) << "\n"
      << "X = " << c.sources << "\n"
      << "sample_rate = " << c.sample_rate << "\n"
      << "window = " << c.window << "\n"
      << "stride = " << c.stride << "\n\n"
      << "[widths]\n"
      << "N = " << c.N << "\nK = " << c.K << "\nM = " << c.M << "\nH_i = " << c.H_i << "\nH_o = " << c.H_o
      << "\nH_cnn = " << c.H_cnn << "\nmhsa_hidden = " << c.mhsa_hidden << "\ngroup_overlap = " << c.group_overlap
      << "\n\n[depths]\n"
      << "L_s = " << c.L_s << "\nL_c = " << c.L_c << "\nC = " << c.C << "\nB = " << c.B
      << "\ntcn_stacks = " << c.tcn_stacks << "\ntcn_blocks = " << c.tcn_blocks << "\n";
  return out.str();
}

}  // namespace gc3
