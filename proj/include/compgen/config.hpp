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

// Experiment configuration: flat INI sections with `key = value` and comma
// lists. See README.md for the schema.

#ifndef COMPGEN_CONFIG_HPP_
#define COMPGEN_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "compgen/differential.hpp"
#include "compgen/generative.hpp"
#include "compgen/latent.hpp"
#include "compgen/learner.hpp"

namespace compgen {

// "section.key" -> value.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_ini(std::istream& in);
ConfigMap read_ini(const std::string& path);

struct HeatmapAxes {
  int slot_a = 0, dim_a = 0;
  int slot_b = 1, dim_b = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  int seeds = 3;
  std::size_t train_samples = 5000;
  std::size_t test_samples = 1000;
  std::string out;

  // [model]
  std::string family = "sprite";  // sprite | smooth
  CompositionKind composition = CompositionKind::kSigmoidOcclusion;
  int slots = 2;
  int dim = 3;
  SpriteRenderer sprite;
  std::vector<double> hues = {0.0, 0.5};
  int smooth_outputs = 16;
  double smooth_scale = 0.5;
  std::uint64_t smooth_seed = 7;
  std::string coefficients;  // CSV path shared by all slots; empty = random

  SupportSpec train_support;
  SupportSpec test_support;

  // [net]
  std::string model_kind = "compositional";  // compositional | monolithic
  int hidden_width = 128;
  int hidden_layers = 4;
  Activation activation = Activation::kTanh;
  bool share_weights = false;

  TrainConfig train;

  // [eval]
  int def2_resolution = 10;
  std::size_t def2_probes = 20000;
  bool def3 = true;
  SufficiencyOptions def3_options;
  int heatmap_resolution = 16;
  int heatmap_per_cell = 32;
  HeatmapAxes heatmap_axes;

  CompositionalModel build_model() const;
  void validate() const;
};

ExperimentConfig config_from_map(const ConfigMap& map);
ExperimentConfig load_config(const std::string& path);

// Canonical "section.key" -> value pairs of every field.
ConfigMap to_map(const ExperimentConfig& config);
void write_config(std::ostream& out, const ExperimentConfig& config);

// FNV-1a 64 over the sorted canonical pairs, excluding name and out; hex.
std::string config_hash(const ExperimentConfig& config);

// SupportSpec <-> keys of one section (without the section prefix).
ConfigMap support_to_map(const SupportSpec& spec);
SupportSpec support_from_map(const ConfigMap& keys, const LatentBox& box, const std::string& section);

}  // namespace compgen

#endif  // COMPGEN_CONFIG_HPP_
