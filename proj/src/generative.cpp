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

#include "compgen/generative.hpp"

#include <array>
#include <cmath>
#include <istream>
#include <numbers>
#include <sstream>

#include "compgen/common.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

constexpr double kPi = std::numbers::pi;
// Smoothing of |t| inside the superellipse norm so the distance stays
// differentiable on the sprite's axes.
constexpr double kAbsSmoothing = 1e-3;
constexpr int kMaxSlots = 16;
constexpr int kMaxChannels = 8;

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double heaviside(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? 0.0 : 0.5); }

struct SpriteParams {
  double x, y, shape, size, hue;
};

SpriteParams resolve_sprite(const SpriteRenderer& s, const Eigen::VectorXd& z) {
  SpriteParams p{s.x, s.y, s.shape, s.size, s.hue};
  for (int i = 0; i < s.dim(); ++i) {
    switch (s.latents[static_cast<std::size_t>(i)]) {
      case SpriteLatent::kX: p.x = z[i]; break;
      case SpriteLatent::kY: p.y = z[i]; break;
      case SpriteLatent::kShape: p.shape = z[i]; break;
      case SpriteLatent::kSize: p.size = z[i]; break;
      case SpriteLatent::kHue: p.hue = z[i]; break;
    }
  }
  return p;
}

ComponentCanvas render_sprite(const SpriteRenderer& s, const Eigen::VectorXd& z) {
  const SpriteParams p = resolve_sprite(s, z);
  const double exponent = 0.5 + 3.5 * p.shape;
  const double radius = 0.05 + 0.25 * p.size;
  std::array<double, 3> colour{};
  for (int c = 0; c < 3; ++c)
    colour[static_cast<std::size_t>(c)] = 0.5 + 0.5 * std::cos(2.0 * kPi * (p.hue - c / 3.0));

  ComponentCanvas canvas{s.layout(), Eigen::VectorXd::Zero(s.layout().size())};
  const int plane = s.height * s.width;
  for (int row = 0; row < s.height; ++row) {
    const double v = (row + 0.5) / s.height;
    for (int col = 0; col < s.width; ++col) {
      const double u = (col + 0.5) / s.width;
      const double du = (u - p.x) / radius;
      const double dv = (v - p.y) / radius;
      const double au = std::sqrt(du * du + kAbsSmoothing * kAbsSmoothing);
      const double av = std::sqrt(dv * dv + kAbsSmoothing * kAbsSmoothing);
      const double dist =
          std::pow(std::pow(au, exponent) + std::pow(av, exponent), 1.0 / exponent);
      const double mask = logistic(s.edge_sharpness * (1.0 - dist));
      const int pix = row * s.width + col;
      for (int c = 0; c < 3; ++c)
        canvas.values[c * plane + pix] = s.intensity * mask * colour[static_cast<std::size_t>(c)];
      if (s.channels == 4) canvas.values[3 * plane + pix] = mask;
    }
  }
  return canvas;
}

ComponentCanvas render_smooth(const SmoothAnalytic& s, const Eigen::VectorXd& z) {
  return {s.layout, s.coefficients * SmoothAnalytic::features(z)};
}

// Right fold of the front-over-back gate, slot 0 frontmost.
void occlusion_forward(bool step, int slots, int channels, std::span<const double> in,
                       std::span<double> out, double sharpness) {
  for (int c = 0; c < channels; ++c) {
    double back = in[static_cast<std::size_t>((slots - 1) * channels + c)];
    for (int k = slots - 2; k >= 0; --k) {
      const double a = in[static_cast<std::size_t>(k * channels + c)];
      const double gate = step ? heaviside(a) : logistic(sharpness * a);
      back = gate * a + (1.0 - gate) * back;
    }
    out[static_cast<std::size_t>(c)] = back;
  }
}

void occlusion_vjp(bool step, int slots, int channels, std::span<const double> in,
                   std::span<const double> grad_out, std::span<double> grad_in,
                   double sharpness) {
  std::array<double, kMaxSlots> backs{};
  for (int c = 0; c < channels; ++c) {
    // backs[k] is the fold of slots k..K-1.
    backs[static_cast<std::size_t>(slots - 1)] = in[static_cast<std::size_t>((slots - 1) * channels + c)];
    for (int k = slots - 2; k >= 0; --k) {
      const double a = in[static_cast<std::size_t>(k * channels + c)];
      const double gate = step ? heaviside(a) : logistic(sharpness * a);
      backs[static_cast<std::size_t>(k)] = gate * a + (1.0 - gate) * backs[static_cast<std::size_t>(k + 1)];
    }
    double g = grad_out[static_cast<std::size_t>(c)];
    for (int k = 0; k < slots - 1; ++k) {
      const double a = in[static_cast<std::size_t>(k * channels + c)];
      const double b = backs[static_cast<std::size_t>(k + 1)];
      double gate, dgate;
      if (step) {
        gate = heaviside(a);
        dgate = 0.0;
      } else {
        gate = logistic(sharpness * a);
        dgate = sharpness * gate * (1.0 - gate);
      }
      grad_in[static_cast<std::size_t>(k * channels + c)] = g * (gate + dgate * (a - b));
      g *= 1.0 - gate;
    }
    grad_in[static_cast<std::size_t>((slots - 1) * channels + c)] = g;
  }
}

// Front-over-back alpha step: (rgb1, a1) over (rgb2, a2).
struct AlphaState {
  std::array<double, 3> rgb;
  double alpha;
};

AlphaState alpha_over(const double* front, const AlphaState& back) {
  const double a1 = front[3];
  const double a2 = back.alpha;
  const double xa = a1 + (1.0 - a1) * a2;
  const double w = xa != 0.0 ? a2 / xa : 0.0;
  AlphaState s;
  s.alpha = xa;
  for (int c = 0; c < 3; ++c)
    s.rgb[static_cast<std::size_t>(c)] =
        a1 * front[c] + (1.0 - a1) * w * back.rgb[static_cast<std::size_t>(c)];
  return s;
}

void alpha_forward(int slots, std::span<const double> in, std::span<double> out) {
  const double* last = &in[static_cast<std::size_t>((slots - 1) * 4)];
  AlphaState s{{last[0], last[1], last[2]}, last[3]};
  for (int k = slots - 2; k >= 0; --k) s = alpha_over(&in[static_cast<std::size_t>(k * 4)], s);
  for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c)] = s.rgb[static_cast<std::size_t>(c)];
}

void alpha_vjp(int slots, std::span<const double> in, std::span<const double> grad_out,
               std::span<double> grad_in) {
  std::array<AlphaState, kMaxSlots> states{};
  const double* last = &in[static_cast<std::size_t>((slots - 1) * 4)];
  states[static_cast<std::size_t>(slots - 1)] = {{last[0], last[1], last[2]}, last[3]};
  for (int k = slots - 2; k >= 0; --k)
    states[static_cast<std::size_t>(k)] =
        alpha_over(&in[static_cast<std::size_t>(k * 4)], states[static_cast<std::size_t>(k + 1)]);

  std::array<double, 3> g_rgb{grad_out[0], grad_out[1], grad_out[2]};
  double g_alpha = 0.0;  // the final alpha is not an output
  for (int k = 0; k < slots - 1; ++k) {
    const double* f = &in[static_cast<std::size_t>(k * 4)];
    const AlphaState& back = states[static_cast<std::size_t>(k + 1)];
    const double a1 = f[3];
    const double a2 = back.alpha;
    const double xa = a1 + (1.0 - a1) * a2;
    double w = 0.0, dw_da1 = 0.0, dw_da2 = 0.0;
    if (xa != 0.0) {
      w = a2 / xa;
      dw_da1 = -a2 * (1.0 - a2) / (xa * xa);
      dw_da2 = a1 / (xa * xa);
    }
    double g_a1 = g_alpha * (1.0 - a2);
    double g_a2 = g_alpha * (1.0 - a1);
    std::array<double, 3> g_back{};
    for (int c = 0; c < 3; ++c) {
      const double g = g_rgb[static_cast<std::size_t>(c)];
      const double r2 = back.rgb[static_cast<std::size_t>(c)];
      grad_in[static_cast<std::size_t>(k * 4 + c)] = g * a1;
      g_a1 += g * (f[c] - w * r2 + (1.0 - a1) * r2 * dw_da1);
      g_a2 += g * (1.0 - a1) * r2 * dw_da2;
      g_back[static_cast<std::size_t>(c)] = g * (1.0 - a1) * w;
    }
    grad_in[static_cast<std::size_t>(k * 4 + 3)] = g_a1;
    g_rgb = g_back;
    g_alpha = g_a2;
  }
  for (int c = 0; c < 3; ++c)
    grad_in[static_cast<std::size_t>((slots - 1) * 4 + c)] = g_rgb[static_cast<std::size_t>(c)];
  grad_in[static_cast<std::size_t>((slots - 1) * 4 + 3)] = g_alpha;
}

void check_pixel_args(CompositionKind kind, int slots, int in_channels) {
  if (slots < 1 || slots > kMaxSlots) throw ValidationError("composition supports 1..16 slots");
  if (in_channels < 1 || in_channels > kMaxChannels)
    throw ValidationError("composition supports 1..8 channels");
  if (kind == CompositionKind::kAlphaComposite && in_channels != 4)
    throw ValidationError("alpha compositing needs 4-channel (RGBa) canvases");
}

}  // namespace

std::string to_string(SpriteLatent latent) {
  switch (latent) {
    case SpriteLatent::kX: return "x";
    case SpriteLatent::kY: return "y";
    case SpriteLatent::kShape: return "shape";
    case SpriteLatent::kSize: return "size";
    case SpriteLatent::kHue: return "hue";
  }
  return "?";
}

SpriteLatent sprite_latent_from_string(const std::string& name) {
  if (name == "x") return SpriteLatent::kX;
  if (name == "y") return SpriteLatent::kY;
  if (name == "shape") return SpriteLatent::kShape;
  if (name == "size") return SpriteLatent::kSize;
  if (name == "hue" || name == "color" || name == "colour") return SpriteLatent::kHue;
  throw ValidationError("unknown sprite latent '" + name + "'");
}

void SpriteRenderer::validate() const {
  if (height < 1 || width < 1) throw ValidationError("sprite canvas must be at least 1x1");
  if (channels != 3 && channels != 4) throw ValidationError("sprite canvas needs 3 or 4 channels");
  if (!(edge_sharpness > 0.0) || !std::isfinite(edge_sharpness))
    throw ValidationError("edge sharpness must be finite and positive");
  if (!std::isfinite(intensity)) throw ValidationError("sprite intensity must be finite");
  if (latents.empty()) throw ValidationError("sprite renderer needs at least one latent");
}

int SmoothAnalytic::feature_count(int dim) { return 1 + 4 * dim + dim * (dim - 1) / 2; }

Eigen::VectorXd SmoothAnalytic::features(const Eigen::VectorXd& z) {
  const int dim = static_cast<int>(z.size());
  Eigen::VectorXd f(feature_count(dim));
  int i = 0;
  f[i++] = 1.0;
  for (int d = 0; d < dim; ++d) {
    for (int freq = 1; freq <= 2; ++freq) {
      f[i++] = std::sin(kPi * freq * z[d]);
      f[i++] = std::cos(kPi * freq * z[d]);
    }
  }
  for (int d = 0; d < dim; ++d)
    for (int e = d + 1; e < dim; ++e) f[i++] = std::sin(kPi * (z[d] + z[e]));
  return f;
}

Eigen::MatrixXd SmoothAnalytic::feature_gradients(const Eigen::VectorXd& z) {
  const int dim = static_cast<int>(z.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(feature_count(dim), dim);
  int i = 1;
  for (int d = 0; d < dim; ++d) {
    for (int freq = 1; freq <= 2; ++freq) {
      const double w = kPi * freq;
      g(i++, d) = w * std::cos(w * z[d]);
      g(i++, d) = -w * std::sin(w * z[d]);
    }
  }
  for (int d = 0; d < dim; ++d)
    for (int e = d + 1; e < dim; ++e) {
      const double c = kPi * std::cos(kPi * (z[d] + z[e]));
      g(i, d) = c;
      g(i, e) = c;
      ++i;
    }
  return g;
}

SmoothAnalytic SmoothAnalytic::random(int dim, CanvasLayout layout, std::uint64_t seed,
                                      double scale) {
  SmoothAnalytic s;
  s.dim = dim;
  s.layout = layout;
  s.coefficients.resize(layout.size(), feature_count(dim));
  RandomStream rng(seed, 0);
  const double norm = 1.0 / std::sqrt(static_cast<double>(s.coefficients.cols()));
  for (Eigen::Index j = 0; j < s.coefficients.cols(); ++j)
    for (Eigen::Index i = 0; i < s.coefficients.rows(); ++i)
      s.coefficients(i, j) = norm * rng.uniform(-scale, scale);
  return s;
}

void SmoothAnalytic::validate() const {
  if (dim < 1) throw ValidationError("smooth family needs D >= 1");
  if (coefficients.rows() != layout.size() || coefficients.cols() != feature_count(dim))
    throw ValidationError("smooth family coefficient table is " +
                          std::to_string(coefficients.rows()) + "x" +
                          std::to_string(coefficients.cols()) + ", expected " +
                          std::to_string(layout.size()) + "x" +
                          std::to_string(feature_count(dim)));
  if (!coefficients.allFinite()) throw ValidationError("smooth family has non-finite coefficients");
}

int family_dim(const ComponentFamily& family) {
  return std::visit(
      [](const auto& f) -> int {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SpriteRenderer>) return f.dim();
        else return f.dim;
      },
      family);
}

CanvasLayout family_layout(const ComponentFamily& family) {
  return std::visit(
      [](const auto& f) -> CanvasLayout {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SpriteRenderer>) return f.layout();
        else return f.layout;
      },
      family);
}

std::string to_string(CompositionKind kind) {
  switch (kind) {
    case CompositionKind::kSum: return "sum";
    case CompositionKind::kSigmoidOcclusion: return "sigmoid";
    case CompositionKind::kStepOcclusion: return "step";
    case CompositionKind::kAlphaComposite: return "alpha";
  }
  return "?";
}

CompositionKind composition_kind_from_string(const std::string& name) {
  if (name == "sum") return CompositionKind::kSum;
  if (name == "sigmoid") return CompositionKind::kSigmoidOcclusion;
  if (name == "step") return CompositionKind::kStepOcclusion;
  if (name == "alpha") return CompositionKind::kAlphaComposite;
  throw ValidationError("unknown composition kind '" + name + "'");
}

int output_channels(CompositionKind kind, int input_channels) {
  return kind == CompositionKind::kAlphaComposite ? 3 : input_channels;
}

void compose_pixel(CompositionKind kind, int slots, int in_channels,
                   std::span<const double> in, std::span<double> out, double sharpness) {
  check_pixel_args(kind, slots, in_channels);
  switch (kind) {
    case CompositionKind::kSum:
      for (int c = 0; c < in_channels; ++c) {
        double s = 0.0;
        for (int k = 0; k < slots; ++k) s += in[static_cast<std::size_t>(k * in_channels + c)];
        out[static_cast<std::size_t>(c)] = s;
      }
      return;
    case CompositionKind::kSigmoidOcclusion:
      occlusion_forward(false, slots, in_channels, in, out, sharpness);
      return;
    case CompositionKind::kStepOcclusion:
      occlusion_forward(true, slots, in_channels, in, out, sharpness);
      return;
    case CompositionKind::kAlphaComposite:
      alpha_forward(slots, in, out);
      return;
  }
}

void compose_pixel_vjp(CompositionKind kind, int slots, int in_channels,
                       std::span<const double> in, std::span<const double> grad_out,
                       std::span<double> grad_in, double sharpness) {
  check_pixel_args(kind, slots, in_channels);
  switch (kind) {
    case CompositionKind::kSum:
      for (int k = 0; k < slots; ++k)
        for (int c = 0; c < in_channels; ++c)
          grad_in[static_cast<std::size_t>(k * in_channels + c)] = grad_out[static_cast<std::size_t>(c)];
      return;
    case CompositionKind::kSigmoidOcclusion:
      occlusion_vjp(false, slots, in_channels, in, grad_out, grad_in, sharpness);
      return;
    case CompositionKind::kStepOcclusion:
      occlusion_vjp(true, slots, in_channels, in, grad_out, grad_in, sharpness);
      return;
    case CompositionKind::kAlphaComposite:
      alpha_vjp(slots, in, grad_out, grad_in);
      return;
  }
}

CanvasLayout CompositionalModel::canvas_layout() const {
  if (families.empty()) throw ValidationError("model has no component families");
  return family_layout(families.front());
}

CanvasLayout CompositionalModel::observation_layout() const {
  const CanvasLayout c = canvas_layout();
  return {c.height, c.width, output_channels(composition, c.channels)};
}

void CompositionalModel::validate() const {
  if (families.empty()) throw ValidationError("model needs K >= 1 component families");
  if (latent_box.slots() != slots())
    throw ValidationError("latent box slot count does not match the number of families");
  const CanvasLayout layout = canvas_layout();
  for (const auto& f : families) {
    std::visit([](const auto& fam) { fam.validate(); }, f);
    if (family_dim(f) != latent_box.dim())
      throw ValidationError("component family latent dimension does not match the box");
    if (!(family_layout(f) == layout))
      throw ValidationError("component families produce incompatible canvas layouts");
  }
  if (composition == CompositionKind::kAlphaComposite && layout.channels != 4)
    throw ValidationError("alpha compositing needs 4-channel canvases");
}

ComponentCanvas render_component(const ComponentFamily& family, const Eigen::VectorXd& z_k) {
  const int dim = family_dim(family);
  if (z_k.size() != dim)
    throw ValidationError("slot latent has dimension " + std::to_string(z_k.size()) +
                          ", family expects " + std::to_string(dim));
  for (int d = 0; d < dim; ++d) {
    if (!(z_k[d] >= 0.0 && z_k[d] <= 1.0)) {
      std::string name = "axis " + std::to_string(d);
      if (const auto* s = std::get_if<SpriteRenderer>(&family))
        name = "'" + to_string(s->latents[static_cast<std::size_t>(d)]) + "' (" + name + ")";
      throw ValidationError("slot latent " + name + " = " + std::to_string(z_k[d]) +
                            " lies outside [0, 1]");
    }
  }
  ComponentCanvas canvas = std::visit(
      [&](const auto& f) -> ComponentCanvas {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SpriteRenderer>) return render_sprite(f, z_k);
        else return render_smooth(f, z_k);
      },
      family);
  if (!canvas.values.allFinite()) throw RuntimeFailure("component canvas is not finite");
  return canvas;
}

Observation compose(CompositionKind kind, std::span<const ComponentCanvas> canvases,
                    double sharpness) {
  if (canvases.empty()) throw ValidationError("compose needs at least one canvas");
  const CanvasLayout layout = canvases.front().layout;
  for (const auto& c : canvases) {
    if (!(c.layout == layout)) throw ValidationError("canvas layouts differ");
    if (c.values.size() != layout.size()) throw ValidationError("canvas size does not match its layout");
  }
  const int slots = static_cast<int>(canvases.size());
  const int cin = layout.channels;
  const int cout = output_channels(kind, cin);
  check_pixel_args(kind, slots, cin);
  const int plane = layout.pixels();
  Observation obs{{layout.height, layout.width, cout}, Eigen::VectorXd(plane * cout)};
  std::array<double, kMaxSlots * kMaxChannels> in{};
  std::array<double, kMaxChannels> out{};
  for (int p = 0; p < plane; ++p) {
    for (int k = 0; k < slots; ++k)
      for (int c = 0; c < cin; ++c)
        in[static_cast<std::size_t>(k * cin + c)] = canvases[static_cast<std::size_t>(k)].values[c * plane + p];
    compose_pixel(kind, slots, cin, std::span<const double>(in.data(), static_cast<std::size_t>(slots * cin)),
                  std::span<double>(out.data(), static_cast<std::size_t>(cout)), sharpness);
    for (int c = 0; c < cout; ++c) obs.values[c * plane + p] = out[static_cast<std::size_t>(c)];
  }
  return obs;
}

Observation evaluate(const CompositionalModel& model, const LatentPoint& z) {
  if (z.slots() != model.slots()) throw ValidationError("latent point slot count does not match the model");
  check_in_box(model.latent_box, z);
  std::vector<ComponentCanvas> canvases;
  canvases.reserve(static_cast<std::size_t>(model.slots()));
  for (int k = 0; k < model.slots(); ++k)
    canvases.push_back(render_component(model.families[static_cast<std::size_t>(k)], z.slot(k)));
  return compose(model.composition, canvases);
}

std::vector<LabeledObservation> dataset(const CompositionalModel& model,
                                        const SampleSet& samples, int jobs) {
  model.validate();
  std::vector<LabeledObservation> out(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    out[i] = {samples.points[i], evaluate(model, samples.points[i])};
  });
  return out;
}

Eigen::MatrixXd latent_matrix(const std::vector<LabeledObservation>& data) {
  if (data.empty()) return {};
  Eigen::MatrixXd m(data.front().latent.flat().size(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = data[i].latent.flat();
  return m;
}

Eigen::MatrixXd observation_matrix(const std::vector<LabeledObservation>& data) {
  if (data.empty()) return {};
  Eigen::MatrixXd m(data.front().observation.values.size(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = data[i].observation.values;
  return m;
}

Eigen::MatrixXd load_coefficients_csv(std::istream& in, int outputs, int features) {
  Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(outputs, features);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.find("output_index") != std::string::npos) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
      throw ValidationError("coefficient CSV line " + std::to_string(line_no) + " needs 3 fields");
    const int i = std::stoi(a), j = std::stoi(b);
    if (i < 0 || i >= outputs || j < 0 || j >= features)
      throw ValidationError("coefficient CSV line " + std::to_string(line_no) + " index out of range");
    coeff(i, j) = std::stod(c);
  }
  return coeff;
}

}  // namespace compgen
