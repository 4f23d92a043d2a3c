// Copyright 2026 The compgen Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "compgen/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "compgen/common.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

template <typename T>
std::string join(const std::vector<T>& v, const std::string& sep = ",") {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s << sep;
    if constexpr (std::is_floating_point_v<T>)
      s << fmt(v[i]);
    else
      s << v[i];
  }
  return s.str();
}

std::string vec_str(const Eigen::VectorXd& v) {
  std::vector<double> x(v.data(), v.data() + v.size());
  return join(x);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    if (!value.empty() && value.front() == '-') throw std::invalid_argument(value);
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected an unsigned integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split(value, ',')) out.push_back(parse_double(key, item));
  return out;
}

// Reads keys from a map and records which were used.
class Reader {
 public:
  explicit Reader(const ConfigMap& map) : map_(map) {}

  bool has(const std::string& key) const { return map_.count(key) > 0; }
  const std::string* raw(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  void str(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }
  void real(const std::string& key, double& out) {
    if (auto v = raw(key)) out = parse_double(key, *v);
  }
  template <typename I>
  void integer(const std::string& key, I& out) {
    if (auto v = raw(key)) {
      if constexpr (std::is_same_v<I, std::uint64_t>)
        out = parse_u64(key, *v);
      else if constexpr (std::is_same_v<I, std::size_t>)
        out = static_cast<std::size_t>(parse_u64(key, *v));
      else
        out = static_cast<I>(parse_int(key, *v));
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (auto v = raw(key)) out = parse_bool(key, *v);
  }
  void reals(const std::string& key, std::vector<double>& out) {
    if (auto v = raw(key)) out = parse_doubles(key, *v);
  }
  void check_all_used() const {
    for (const auto& [k, v] : map_)
      if (!used_.count(k)) throw ValidationError("unknown config key '" + k + "'");
  }

 private:
  const ConfigMap& map_;
  std::set<std::string> used_;
};

ConfigMap with_prefix(const ConfigMap& keys, const std::string& section) {
  ConfigMap out;
  for (const auto& [k, v] : keys) out[section + "." + k] = v;
  return out;
}

}  // namespace

ConfigMap parse_ini(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  ConfigMap out;
  for (const auto& [section, child] : tree) {
    if (child.empty()) throw ValidationError("config key '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : child) out[section + "." + trim(key)] = trim(value.data());
  }
  return out;
}

ConfigMap read_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  return parse_ini(in);
}

ConfigMap support_to_map(const SupportSpec& spec) {
  ConfigMap m;
  m["kind"] = to_string(spec.kind);
  m["thickness"] = fmt(spec.thickness);
  m["band_width"] = fmt(spec.band_width);
  m["sigma"] = join(spec.sigma);
  std::vector<std::string> gaps;
  for (const auto& g : spec.gaps)
    gaps.push_back(std::to_string(g.slot) + "," + std::to_string(g.dim) + "," + fmt(g.excluded.lo) + "," +
                   fmt(g.excluded.hi));
  m["gaps"] = join(gaps, " | ");
  for (std::size_t k = 0; k < spec.anchors.size(); ++k) {
    std::vector<std::string> a;
    for (const auto& v : spec.anchors[k]) a.push_back(vec_str(v));
    m["anchors" + std::to_string(k)] = join(a, " | ");
  }
  return m;
}

SupportSpec support_from_map(const ConfigMap& keys, const LatentBox& box, const std::string& section) {
  const ConfigMap prefixed = with_prefix(keys, section);
  Reader r(prefixed);
  SupportSpec s;
  s.box = box;
  std::string kind = "full";
  r.str(section + ".kind", kind);
  s.kind = support_kind_from_string(kind);
  r.real(section + ".thickness", s.thickness);
  r.real(section + ".band_width", s.band_width);
  r.reals(section + ".sigma", s.sigma);
  if (auto v = r.raw(section + ".gaps"); v && !v->empty()) {
    for (const auto& item : split(*v, '|')) {
      const auto f = parse_doubles(section + ".gaps", item);
      if (f.size() != 4) throw ValidationError("config key '" + section + ".gaps': each gap is slot,dim,lo,hi");
      s.gaps.push_back({static_cast<int>(f[0]), static_cast<int>(f[1]), {f[2], f[3]}});
    }
  }
  if (s.anchored()) s.anchors.resize(static_cast<std::size_t>(box.slots()));
  for (int k = 0; k < box.slots(); ++k) {
    const std::string key = section + ".anchors" + std::to_string(k);
    auto v = r.raw(key);
    if (!v || v->empty()) continue;
    if (!s.anchored()) throw ValidationError("config key '" + key + "' only applies to anchored supports");
    for (const auto& item : split(*v, '|')) {
      const auto f = parse_doubles(key, item);
      if (static_cast<int>(f.size()) != box.dim())
        throw ValidationError("config key '" + key + "': anchors need " + std::to_string(box.dim()) + " coordinates");
      s.anchors[static_cast<std::size_t>(k)].push_back(Eigen::Map<const Eigen::VectorXd>(f.data(), box.dim()));
    }
  }
  r.check_all_used();
  s.validate();
  return s;
}

ExperimentConfig config_from_map(const ConfigMap& map) {
  ExperimentConfig c;
  ConfigMap rest, train_keys, test_keys;
  for (const auto& [k, v] : map) {
    if (k.rfind("train_support.", 0) == 0)
      train_keys[k.substr(14)] = v;
    else if (k.rfind("test_support.", 0) == 0)
      test_keys[k.substr(13)] = v;
    else
      rest[k] = v;
  }
  Reader r(rest);
  r.str("experiment.name", c.name);
  r.integer("experiment.seed", c.seed);
  r.integer("experiment.seeds", c.seeds);
  r.integer("experiment.train_samples", c.train_samples);
  r.integer("experiment.test_samples", c.test_samples);
  r.str("experiment.out", c.out);

  r.str("model.family", c.family);
  if (auto v = r.raw("model.composition")) c.composition = composition_kind_from_string(*v);
  r.integer("model.slots", c.slots);
  r.integer("model.dim", c.dim);
  r.integer("model.height", c.sprite.height);
  r.integer("model.width", c.sprite.width);
  c.sprite.channels = c.composition == CompositionKind::kAlphaComposite ? 4 : 3;
  r.integer("model.channels", c.sprite.channels);
  if (auto v = r.raw("model.latents")) {
    c.sprite.latents.clear();
    for (const auto& name : split(*v, ',')) c.sprite.latents.push_back(sprite_latent_from_string(name));
  }
  r.real("model.edge_sharpness", c.sprite.edge_sharpness);
  r.real("model.intensity", c.sprite.intensity);
  r.real("model.x", c.sprite.x);
  r.real("model.y", c.sprite.y);
  r.real("model.shape", c.sprite.shape);
  r.real("model.size", c.sprite.size);
  r.reals("model.hues", c.hues);
  r.integer("model.smooth_outputs", c.smooth_outputs);
  r.real("model.smooth_scale", c.smooth_scale);
  r.integer("model.smooth_seed", c.smooth_seed);
  r.str("model.coefficients", c.coefficients);
  std::vector<double> box = {0.0, 1.0};
  r.reals("model.box", box);
  if (box.size() != 2 || !(box[0] < box[1])) throw ValidationError("config key 'model.box': expected lo,hi with lo < hi");
  if (c.family == "sprite" && !r.has("model.dim")) c.dim = static_cast<int>(c.sprite.latents.size());
  if (c.slots < 1 || c.slots > 16) throw ValidationError("config key 'model.slots': expected 1..16");
  if (c.dim < 1) throw ValidationError("config key 'model.dim': expected >= 1");

  r.str("net.kind", c.model_kind);
  r.integer("net.hidden_width", c.hidden_width);
  r.integer("net.hidden_layers", c.hidden_layers);
  if (auto v = r.raw("net.activation")) c.activation = activation_from_string(*v);
  r.boolean("net.share_weights", c.share_weights);

  r.integer("train.epochs", c.train.epochs);
  r.integer("train.batch_size", c.train.batch_size);
  r.real("train.learning_rate", c.train.learning_rate);
  r.real("train.beta1", c.train.beta1);
  r.real("train.beta2", c.train.beta2);
  r.real("train.epsilon", c.train.epsilon);
  r.boolean("train.shuffle", c.train.shuffle);

  r.integer("eval.def2_resolution", c.def2_resolution);
  r.integer("eval.def2_probes", c.def2_probes);
  r.boolean("eval.def3", c.def3);
  r.integer("eval.def3_grid", c.def3_options.probe_grid_resolution);
  r.real("eval.def3_slice_tol", c.def3_options.slice_tol);
  r.integer("eval.def3_max_pprime", c.def3_options.max_pprime);
  r.real("eval.def3_h", c.def3_options.h);
  r.real("eval.def3_tau", c.def3_options.tau);
  r.integer("eval.def3_max_candidates", c.def3_options.max_candidates);
  r.integer("eval.heatmap_resolution", c.heatmap_resolution);
  r.integer("eval.heatmap_per_cell", c.heatmap_per_cell);
  if (auto v = r.raw("eval.heatmap_axes")) {
    const auto f = parse_doubles("eval.heatmap_axes", *v);
    if (f.size() != 4) throw ValidationError("config key 'eval.heatmap_axes': expected slot_a,dim_a,slot_b,dim_b");
    c.heatmap_axes = {static_cast<int>(f[0]), static_cast<int>(f[1]), static_cast<int>(f[2]), static_cast<int>(f[3])};
  }
  r.check_all_used();

  const LatentBox lbox(c.slots, c.dim, std::vector<Interval>(static_cast<std::size_t>(c.slots * c.dim), {box[0], box[1]}));
  c.train_support = support_from_map(train_keys, lbox, "train_support");
  c.test_support = support_from_map(test_keys, lbox, "test_support");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) { return config_from_map(read_ini(path)); }

CompositionalModel ExperimentConfig::build_model() const {
  CompositionalModel m;
  m.composition = composition;
  m.latent_box = train_support.box;
  for (int k = 0; k < slots; ++k) {
    if (family == "sprite") {
      SpriteRenderer s = sprite;
      s.hue = hues.empty() ? sprite.hue : hues[static_cast<std::size_t>(k) % hues.size()];
      m.families.emplace_back(s);
    } else {
      const CanvasLayout layout = CanvasLayout::flat(smooth_outputs);
      SmoothAnalytic f = SmoothAnalytic::random(dim, layout, derive_seed(smooth_seed, static_cast<std::uint64_t>(k)), smooth_scale);
      if (!coefficients.empty()) {
        std::ifstream in(coefficients);
        if (!in) throw ValidationError("cannot open coefficient file " + coefficients);
        f.coefficients = load_coefficients_csv(in, smooth_outputs, SmoothAnalytic::feature_count(dim));
      }
      m.families.emplace_back(f);
    }
  }
  m.validate();
  return m;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ValidationError("config key 'experiment.name' must not be empty");
  if (seeds < 1) throw ValidationError("config key 'experiment.seeds': expected >= 1");
  if (train_samples < 1 || test_samples < 1) throw ValidationError("sample counts must be >= 1");
  if (family != "sprite" && family != "smooth")
    throw ValidationError("config key 'model.family': expected sprite or smooth, got '" + family + "'");
  if (family == "sprite" && static_cast<int>(sprite.latents.size()) != dim)
    throw ValidationError("config key 'model.dim' must equal the number of sprite latents");
  if (family == "smooth" && composition == CompositionKind::kAlphaComposite)
    throw ValidationError("alpha compositing needs the sprite family");
  if (model_kind != "compositional" && model_kind != "monolithic")
    throw ValidationError("config key 'net.kind': expected compositional or monolithic, got '" + model_kind + "'");
  if (hidden_width < 1 || hidden_layers < 0) throw ValidationError("config keys 'net.hidden_*' are out of range");
  if (model_kind == "compositional" && composition == CompositionKind::kStepOcclusion)
    throw ValidationError("step occlusion cannot be trained; use sum, sigmoid or alpha");
  train.validate();
  if (!train_support.box.same_shape(test_support.box)) throw ValidationError("train and test supports disagree on K or D");
  if (def2_resolution < 1 || def2_probes < 1) throw ValidationError("config keys 'eval.def2_*' are out of range");
  if (heatmap_resolution < 4) throw ValidationError("config key 'eval.heatmap_resolution': expected >= 4");
  if (heatmap_per_cell < 1) throw ValidationError("config key 'eval.heatmap_per_cell': expected >= 1");
  const auto& a = heatmap_axes;
  for (auto [s, d] : {std::pair{a.slot_a, a.dim_a}, std::pair{a.slot_b, a.dim_b}})
    if (s < 0 || s >= slots || d < 0 || d >= dim) throw ValidationError("config key 'eval.heatmap_axes' is out of range");
  build_model();
}

ConfigMap to_map(const ExperimentConfig& c) {
  ConfigMap m;
  m["experiment.name"] = c.name;
  m["experiment.seed"] = std::to_string(c.seed);
  m["experiment.seeds"] = std::to_string(c.seeds);
  m["experiment.train_samples"] = std::to_string(c.train_samples);
  m["experiment.test_samples"] = std::to_string(c.test_samples);
  m["experiment.out"] = c.out;
  m["model.family"] = c.family;
  m["model.composition"] = to_string(c.composition);
  m["model.slots"] = std::to_string(c.slots);
  m["model.dim"] = std::to_string(c.dim);
  const Interval& ax = c.train_support.box.axis(0, 0);
  m["model.box"] = fmt(ax.lo) + "," + fmt(ax.hi);
  if (c.family == "sprite") {
    m["model.height"] = std::to_string(c.sprite.height);
    m["model.width"] = std::to_string(c.sprite.width);
    m["model.channels"] = std::to_string(c.sprite.channels);
    std::vector<std::string> names;
    for (auto l : c.sprite.latents) names.push_back(to_string(l));
    m["model.latents"] = join(names);
    m["model.edge_sharpness"] = fmt(c.sprite.edge_sharpness);
    m["model.intensity"] = fmt(c.sprite.intensity);
    m["model.x"] = fmt(c.sprite.x);
    m["model.y"] = fmt(c.sprite.y);
    m["model.shape"] = fmt(c.sprite.shape);
    m["model.size"] = fmt(c.sprite.size);
    m["model.hues"] = join(c.hues);
  } else {
    m["model.smooth_outputs"] = std::to_string(c.smooth_outputs);
    m["model.smooth_scale"] = fmt(c.smooth_scale);
    m["model.smooth_seed"] = std::to_string(c.smooth_seed);
    m["model.coefficients"] = c.coefficients;
  }
  for (const auto& [k, v] : support_to_map(c.train_support)) m["train_support." + k] = v;
  for (const auto& [k, v] : support_to_map(c.test_support)) m["test_support." + k] = v;
  m["net.kind"] = c.model_kind;
  m["net.hidden_width"] = std::to_string(c.hidden_width);
  m["net.hidden_layers"] = std::to_string(c.hidden_layers);
  m["net.activation"] = to_string(c.activation);
  m["net.share_weights"] = c.share_weights ? "true" : "false";
  m["train.epochs"] = std::to_string(c.train.epochs);
  m["train.batch_size"] = std::to_string(c.train.batch_size);
  m["train.learning_rate"] = fmt(c.train.learning_rate);
  m["train.beta1"] = fmt(c.train.beta1);
  m["train.beta2"] = fmt(c.train.beta2);
  m["train.epsilon"] = fmt(c.train.epsilon);
  m["train.shuffle"] = c.train.shuffle ? "true" : "false";
  m["eval.def2_resolution"] = std::to_string(c.def2_resolution);
  m["eval.def2_probes"] = std::to_string(c.def2_probes);
  m["eval.def3"] = c.def3 ? "true" : "false";
  m["eval.def3_grid"] = std::to_string(c.def3_options.probe_grid_resolution);
  m["eval.def3_slice_tol"] = fmt(c.def3_options.slice_tol);
  m["eval.def3_max_pprime"] = std::to_string(c.def3_options.max_pprime);
  m["eval.def3_h"] = fmt(c.def3_options.h);
  m["eval.def3_tau"] = fmt(c.def3_options.tau);
  m["eval.def3_max_candidates"] = std::to_string(c.def3_options.max_candidates);
  m["eval.heatmap_resolution"] = std::to_string(c.heatmap_resolution);
  m["eval.heatmap_per_cell"] = std::to_string(c.heatmap_per_cell);
  const auto& a = c.heatmap_axes;
  m["eval.heatmap_axes"] = std::to_string(a.slot_a) + "," + std::to_string(a.dim_a) + "," +
                           std::to_string(a.slot_b) + "," + std::to_string(a.dim_b);
  return m;
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  const ConfigMap m = to_map(config);
  std::string section;
  for (const auto& [key, value] : m) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : to_map(config)) {
    if (k == "experiment.name" || k == "experiment.out") continue;
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace compgen
