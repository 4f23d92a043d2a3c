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

// Compositional representations: component families render one slot latent
// to a canvas, and a composition function merges the K canvases into one
// observation.
//
// Canvas storage is channel-major: value (channel c, row r, column x) lives
// at index c * height * width + r * width + x. Every built-in composition is
// pixel-local, so an observation pixel depends only on the same pixel of each
// canvas.

#ifndef COMPGEN_GENERATIVE_HPP_
#define COMPGEN_GENERATIVE_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "compgen/latent.hpp"

namespace compgen {

struct CanvasLayout {
  int height = 1;
  int width = 1;
  int channels = 1;

  // A flat M-vector is stored as a 1 x M single-channel layout.
  static CanvasLayout flat(int m) { return {1, m, 1}; }

  int pixels() const { return height * width; }
  int size() const { return height * width * channels; }
  bool operator==(const CanvasLayout&) const = default;
};

struct ComponentCanvas {
  CanvasLayout layout;
  Eigen::VectorXd values;
};

struct Observation {
  CanvasLayout layout;
  Eigen::VectorXd values;
};

enum class SpriteLatent { kX, kY, kShape, kSize, kHue };

std::string to_string(SpriteLatent latent);
SpriteLatent sprite_latent_from_string(const std::string& name);

// Superellipse sprite with a logistic edge on a black canvas.
//   exponent     p = 0.5 + 3.5 * shape   (diamond -> circle -> square)
//   half-extent  r = 0.05 + 0.25 * size  (fraction of the canvas width)
//   centre       (x, y) in normalised image coordinates
//   mask         logistic(edge_sharpness * (1 - superellipse_distance))
//   colour       three raised cosines of hue, 120 degrees apart
// RGB channels hold intensity * mask * colour; a fourth channel holds the
// mask as alpha. Latents not listed in `latents` are held at the fixed
// values below.
struct SpriteRenderer {
  int height = 16;
  int width = 16;
  int channels = 3;
  double edge_sharpness = 40.0;
  double intensity = 1.0;
  std::vector<SpriteLatent> latents = {SpriteLatent::kX, SpriteLatent::kY,
                                       SpriteLatent::kShape, SpriteLatent::kSize,
                                       SpriteLatent::kHue};
  double x = 0.5;
  double y = 0.5;
  double shape = 3.0 / 7.0;  // p = 2, a disc
  double size = 0.5;
  double hue = 0.0;

  int dim() const { return static_cast<int>(latents.size()); }
  CanvasLayout layout() const { return {height, width, channels}; }
  void validate() const;
};

// phi(z) = coefficients * features(z) over a fixed smooth basis of the slot
// latent z in [0, 1]^D:
//   1,
//   sin(pi f z_d), cos(pi f z_d)          for f in {1, 2}, every axis d,
//   sin(pi (z_d + z_e))                   for every axis pair d < e.
struct SmoothAnalytic {
  int dim = 1;
  CanvasLayout layout = CanvasLayout::flat(1);
  Eigen::MatrixXd coefficients;  // layout.size() x feature_count(dim)

  static int feature_count(int dim);
  static Eigen::VectorXd features(const Eigen::VectorXd& z);
  // F x D matrix of d feature / d z.
  static Eigen::MatrixXd feature_gradients(const Eigen::VectorXd& z);

  // Coefficients drawn uniformly from [-scale, scale] / sqrt(F), so canvas
  // values stay O(scale) for any D.
  static SmoothAnalytic random(int dim, CanvasLayout layout, std::uint64_t seed,
                               double scale = 0.5);
  void validate() const;
};

using ComponentFamily = std::variant<SpriteRenderer, SmoothAnalytic>;

int family_dim(const ComponentFamily& family);
CanvasLayout family_layout(const ComponentFamily& family);

enum class CompositionKind { kSum, kSigmoidOcclusion, kStepOcclusion, kAlphaComposite };

std::string to_string(CompositionKind kind);
CompositionKind composition_kind_from_string(const std::string& name);

// Output channel count of one observation pixel for `input_channels` per
// canvas pixel.
int output_channels(CompositionKind kind, int input_channels);

// One pixel of the composition. `in` holds K consecutive groups of
// `in_channels` values (slot-major), `out` receives output_channels values.
// In the occlusion kinds `sharpness` multiplies the gate argument.
void compose_pixel(CompositionKind kind, int slots, int in_channels,
                   std::span<const double> in, std::span<double> out,
                   double sharpness = 1.0);

// Exact vector-Jacobian product of compose_pixel: grad_in = J^T grad_out.
// StepOcclusion uses the almost-everywhere derivative (the gate is constant).
void compose_pixel_vjp(CompositionKind kind, int slots, int in_channels,
                       std::span<const double> in, std::span<const double> grad_out,
                       std::span<double> grad_in, double sharpness = 1.0);

struct CompositionalModel {
  std::vector<ComponentFamily> families;
  CompositionKind composition = CompositionKind::kSum;
  LatentBox latent_box;

  int slots() const { return static_cast<int>(families.size()); }
  int slot_dim() const { return latent_box.dim(); }
  CanvasLayout canvas_layout() const;
  CanvasLayout observation_layout() const;
  void validate() const;
};

ComponentCanvas render_component(const ComponentFamily& family,
                                 const Eigen::VectorXd& z_k);

Observation compose(CompositionKind kind,
                    std::span<const ComponentCanvas> canvases,
                    double sharpness = 1.0);

Observation evaluate(const CompositionalModel& model, const LatentPoint& z);

struct LabeledObservation {
  LatentPoint latent;
  Observation observation;
};

std::vector<LabeledObservation> dataset(const CompositionalModel& model,
                                        const SampleSet& samples, int jobs = 1);

// Latents as columns (K*D x n) and observations as columns (N x n).
Eigen::MatrixXd latent_matrix(const std::vector<LabeledObservation>& data);
Eigen::MatrixXd observation_matrix(const std::vector<LabeledObservation>& data);

// CSV with header output_index,feature_index,coefficient. Entries not listed
// are zero.
Eigen::MatrixXd load_coefficients_csv(std::istream& in, int outputs, int features);

}  // namespace compgen

#endif  // COMPGEN_GENERATIVE_HPP_
