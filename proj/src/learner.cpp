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

#include "compgen/learner.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

#include "compgen/rng.hpp"

namespace compgen {
namespace {

constexpr int kMaxPixel = 64;

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 8);
}

std::uint64_t get_bytes(std::istream& in, int n) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), n);
  if (!in) throw ValidationError("truncated CGL1 parameter file");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ValidationError("unknown activation '" + name + "' (expected tanh or relu)");
}

NetSpec NetSpec::mlp(int input, int hidden_width, int hidden_layers, int output, Activation activation) {
  NetSpec s;
  s.widths.push_back(input);
  for (int i = 0; i < hidden_layers; ++i) {
    s.widths.push_back(hidden_width);
    s.activations.push_back(activation);
  }
  s.widths.push_back(output);
  return s;
}

std::size_t NetSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l)
    n += static_cast<std::size_t>(widths[l + 1]) * (static_cast<std::size_t>(widths[l]) + 1);
  return n;
}

void NetSpec::validate() const {
  if (widths.size() < 2) throw ValidationError("a network needs input and output widths");
  for (int w : widths)
    if (w < 1) throw ValidationError("network widths must be >= 1");
  if (activations.size() + 2 != widths.size())
    throw ValidationError("one activation per hidden layer is required");
}

Eigen::VectorXd init_params(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.param_count()));
  std::size_t off = 0;
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.widths[static_cast<std::size_t>(l)];
    const int out = spec.widths[static_cast<std::size_t>(l + 1)];
    const double bound = std::sqrt(6.0 / in);
    RandomStream rng(seed, static_cast<std::uint64_t>(l));
    for (int i = 0; i < in * out; ++i) p[static_cast<Eigen::Index>(off + static_cast<std::size_t>(i))] = rng.uniform(-bound, bound);
    off += static_cast<std::size_t>(out) * static_cast<std::size_t>(in + 1);
  }
  return p;
}

Mlp::Mlp(NetSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Eigen::MatrixXd Mlp::forward(const double* params, const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != spec_.input()) throw ValidationError("network input has the wrong dimension");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  Eigen::MatrixXd a = x;
  const double* p = params;
  for (int l = 0; l < spec_.layers(); ++l) {
    const int in = spec_.widths[static_cast<std::size_t>(l)];
    const int out = spec_.widths[static_cast<std::size_t>(l + 1)];
    Eigen::Map<const Eigen::MatrixXd> w(p, out, in);
    Eigen::Map<const Eigen::VectorXd> b(p + static_cast<std::ptrdiff_t>(out) * in, out);
    Eigen::MatrixXd zl = w * a;
    zl.colwise() += b;
    if (l + 1 < spec_.layers()) {
      if (spec_.activations[static_cast<std::size_t>(l)] == Activation::kTanh)
        zl = zl.array().tanh();
      else
        zl = zl.array().max(0.0);
    }
    a = std::move(zl);
    if (cache) cache->activations.push_back(a);
    p += static_cast<std::ptrdiff_t>(out) * (in + 1);
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const double* params, const Cache& cache, const Eigen::MatrixXd& grad_out,
                              double* grad) const {
  const int layers = spec_.layers();
  std::vector<std::size_t> offs(static_cast<std::size_t>(layers));
  std::size_t off = 0;
  for (int l = 0; l < layers; ++l) {
    offs[static_cast<std::size_t>(l)] = off;
    off += static_cast<std::size_t>(spec_.widths[static_cast<std::size_t>(l + 1)]) *
           static_cast<std::size_t>(spec_.widths[static_cast<std::size_t>(l)] + 1);
  }
  Eigen::MatrixXd g = grad_out;
  for (int l = layers - 1; l >= 0; --l) {
    const int in = spec_.widths[static_cast<std::size_t>(l)];
    const int out = spec_.widths[static_cast<std::size_t>(l + 1)];
    if (l + 1 < layers) {
      const Eigen::MatrixXd& a = cache.activations[static_cast<std::size_t>(l + 1)];
      if (spec_.activations[static_cast<std::size_t>(l)] == Activation::kTanh)
        g.array() *= 1.0 - a.array().square();
      else
        g.array() *= (a.array() > 0.0).cast<double>();
    }
    const std::size_t o = offs[static_cast<std::size_t>(l)];
    Eigen::Map<Eigen::MatrixXd> gw(grad + o, out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad + o + static_cast<std::size_t>(out) * in, out);
    gw.noalias() += g * cache.activations[static_cast<std::size_t>(l)].transpose();
    gb += g.rowwise().sum();
    Eigen::Map<const Eigen::MatrixXd> w(params + o, out, in);
    g = w.transpose() * g;
  }
  return g;
}

Eigen::VectorXd Network::forward(const Eigen::VectorXd& z) const {
  return forward(Eigen::MatrixXd(z)).col(0);
}

Eigen::VectorXd Network::backward(const Eigen::VectorXd& z, const Eigen::VectorXd& target) const {
  Eigen::VectorXd grad;
  loss_and_gradient(Eigen::MatrixXd(z), Eigen::MatrixXd(target), grad);
  return grad;
}

namespace {

void check_batch(const Network& net, const Eigen::MatrixXd& z, const Eigen::MatrixXd& target) {
  if (z.rows() != net.input_dim()) throw ValidationError("network input has the wrong dimension");
  if (target.rows() != net.output_dim()) throw ValidationError("target has the wrong dimension");
  if (z.cols() != target.cols()) throw ValidationError("input and target batch sizes differ");
}

// Fixed-size chunks summed in order keep results independent of `jobs`.
template <typename Fn>
double chunked_reduce(Eigen::Index n, int jobs, std::size_t params, Eigen::VectorXd& grad, Fn fn) {
  const Eigen::Index chunks = (n + Network::kChunk - 1) / Network::kChunk;
  std::vector<Eigen::VectorXd> grads(static_cast<std::size_t>(chunks));
  std::vector<double> losses(static_cast<std::size_t>(chunks), 0.0);
  parallel_for(static_cast<std::size_t>(chunks), jobs, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * Network::kChunk;
    const Eigen::Index len = std::min<Eigen::Index>(Network::kChunk, n - begin);
    grads[c] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params));
    losses[c] = fn(begin, len, grads[c].data());
  });
  grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params));
  double loss = 0.0;
  for (std::size_t c = 0; c < grads.size(); ++c) {
    grad += grads[c];
    loss += losses[c];
  }
  return loss;
}

}  // namespace

MonolithicNet::MonolithicNet(NetSpec spec, std::uint64_t seed) : mlp_(std::move(spec)) {
  params = init_params(mlp_.spec(), seed);
}

Eigen::MatrixXd MonolithicNet::forward(const Eigen::MatrixXd& z) const {
  return mlp_.forward(params.data(), z);
}

double MonolithicNet::loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target,
                                        Eigen::VectorXd& grad) const {
  check_batch(*this, z, target);
  return chunked_reduce(z.cols(), jobs, param_count(), grad, [&](Eigen::Index b, Eigen::Index len, double* g) {
    Mlp::Cache cache;
    const Eigen::MatrixXd pred = mlp_.forward(params.data(), z.middleCols(b, len), &cache);
    const Eigen::MatrixXd diff = pred - target.middleCols(b, len);
    mlp_.backward(params.data(), cache, diff, g);
    return 0.5 * diff.squaredNorm();
  });
}

CompositionalNet::CompositionalNet(std::vector<NetSpec> slot_specs, CompositionKind composition,
                                   CanvasLayout canvas, bool share_weights, std::uint64_t seed)
    : slots_(static_cast<int>(slot_specs.size())),
      composition_(composition),
      canvas_(canvas),
      share_(share_weights),
      alpha_head_(composition == CompositionKind::kAlphaComposite) {
  if (slot_specs.empty()) throw ValidationError("a compositional net needs K >= 1 slot nets");
  if (composition == CompositionKind::kStepOcclusion)
    throw ValidationError("step occlusion is not differentiable; use sum, sigmoid or alpha");
  if (alpha_head_ && canvas.channels != 4) throw ValidationError("alpha compositing needs 4-channel canvases");
  if (slots_ * canvas.channels > kMaxPixel) throw ValidationError("too many values per pixel");
  for (const auto& s : slot_specs) {
    s.validate();
    if (s.output() != canvas.size()) throw ValidationError("slot net output must equal the canvas size M");
    if (s.input() != slot_specs.front().input()) throw ValidationError("slot nets must share the latent dimension");
  }
  if (share_) {
    for (const auto& s : slot_specs)
      if (!(s == slot_specs.front())) throw ValidationError("shared weights need identical slot specs");
    slot_specs.resize(1);
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < slot_specs.size(); ++i) {
    offsets_.push_back(total);
    total += slot_specs[i].param_count();
    mlps_.emplace_back(slot_specs[i]);
  }
  params.resize(static_cast<Eigen::Index>(total));
  for (std::size_t i = 0; i < mlps_.size(); ++i)
    params.segment(static_cast<Eigen::Index>(offsets_[i]), static_cast<Eigen::Index>(mlps_[i].param_count())) =
        init_params(mlps_[i].spec(), derive_seed(seed, i));
}

int CompositionalNet::input_dim() const { return slots_ * mlps_.front().spec().input(); }

int CompositionalNet::output_dim() const {
  return canvas_.pixels() * output_channels(composition_, canvas_.channels);
}

std::vector<NetSpec> CompositionalNet::specs() const {
  std::vector<NetSpec> out;
  for (const auto& m : mlps_) out.push_back(m.spec());
  return out;
}

std::size_t CompositionalNet::offset(int k) const { return share_ ? 0 : offsets_[static_cast<std::size_t>(k)]; }
const Mlp& CompositionalNet::mlp(int k) const { return share_ ? mlps_.front() : mlps_[static_cast<std::size_t>(k)]; }

Eigen::MatrixXd CompositionalNet::slot_canvas(int k, const Eigen::MatrixXd& z_k) const {
  if (k < 0 || k >= slots_) throw ValidationError("slot index out of range");
  Eigen::MatrixXd c = mlp(k).forward(params.data() + offset(k), z_k);
  if (alpha_head_) {
    const int plane = canvas_.pixels();
    c.middleRows(3 * plane, plane) = c.middleRows(3 * plane, plane).unaryExpr(&logistic);
  }
  return c;
}

double CompositionalNet::run(const Eigen::MatrixXd& z, const Eigen::MatrixXd* target,
                             Eigen::MatrixXd* prediction, double* grad) const {
  const int d = mlps_.front().spec().input();
  const int plane = canvas_.pixels();
  const int cin = canvas_.channels;
  const int cout = output_channels(composition_, cin);
  const Eigen::Index batch = z.cols();
  std::vector<Mlp::Cache> caches(static_cast<std::size_t>(slots_));
  std::vector<Eigen::MatrixXd> canvases(static_cast<std::size_t>(slots_));
  for (int k = 0; k < slots_; ++k) {
    canvases[static_cast<std::size_t>(k)] =
        mlp(k).forward(params.data() + offset(k), z.middleRows(k * d, d), grad ? &caches[static_cast<std::size_t>(k)] : nullptr);
    if (alpha_head_) {
      auto rows = canvases[static_cast<std::size_t>(k)].middleRows(3 * plane, plane);
      rows = rows.unaryExpr(&logistic);
    }
  }
  if (composition_ != CompositionKind::kAlphaComposite) {
    // Channel-wise compositions act elementwise on whole canvases.
    std::vector<Eigen::ArrayXXd> gates, backs(static_cast<std::size_t>(slots_));
    backs.back() = canvases.back().array();
    for (int k = slots_ - 2; k >= 0; --k) {
      const Eigen::ArrayXXd a = canvases[static_cast<std::size_t>(k)].array();
      const auto& b = backs[static_cast<std::size_t>(k + 1)];
      if (composition_ == CompositionKind::kSum) {
        backs[static_cast<std::size_t>(k)] = a + b;
      } else {
        Eigen::ArrayXXd gate = 1.0 / (1.0 + (-a).exp());
        backs[static_cast<std::size_t>(k)] = gate * a + (1.0 - gate) * b;
        gates.insert(gates.begin(), std::move(gate));
      }
    }
    double loss = 0.0;
    if (target) {
      Eigen::ArrayXXd g = backs.front() - target->array();
      loss = 0.5 * g.square().sum();
      if (grad) {
        for (int k = 0; k < slots_; ++k) {
          Eigen::MatrixXd gk;
          if (k + 1 == slots_ || composition_ == CompositionKind::kSum) {
            gk = g.matrix();
          } else {
            const auto& gate = gates[static_cast<std::size_t>(k)];
            const Eigen::ArrayXXd a = canvases[static_cast<std::size_t>(k)].array();
            gk = (g * (gate + gate * (1.0 - gate) * (a - backs[static_cast<std::size_t>(k + 1)]))).matrix();
            g *= 1.0 - gate;
          }
          mlp(k).backward(params.data() + offset(k), caches[static_cast<std::size_t>(k)], gk, grad + offset(k));
        }
      }
    }
    if (prediction) *prediction = backs.front().matrix();
    return loss;
  }
  Eigen::MatrixXd out(plane * cout, batch);
  std::vector<Eigen::MatrixXd> grad_canvas;
  if (grad) grad_canvas.assign(static_cast<std::size_t>(slots_), Eigen::MatrixXd::Zero(plane * cin, batch));
  std::array<double, kMaxPixel> in{}, gin{};
  std::array<double, 8> o{}, gout{};
  const auto n_in = static_cast<std::size_t>(slots_ * cin);
  double loss = 0.0;
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (int p = 0; p < plane; ++p) {
      for (int k = 0; k < slots_; ++k)
        for (int c = 0; c < cin; ++c)
          in[static_cast<std::size_t>(k * cin + c)] = canvases[static_cast<std::size_t>(k)](c * plane + p, s);
      compose_pixel(composition_, slots_, cin, std::span<const double>(in.data(), n_in),
                    std::span<double>(o.data(), static_cast<std::size_t>(cout)));
      for (int c = 0; c < cout; ++c) out(c * plane + p, s) = o[static_cast<std::size_t>(c)];
      if (!target) continue;
      for (int c = 0; c < cout; ++c) {
        const double r = o[static_cast<std::size_t>(c)] - (*target)(c * plane + p, s);
        gout[static_cast<std::size_t>(c)] = r;
        loss += 0.5 * r * r;
      }
      if (!grad) continue;
      compose_pixel_vjp(composition_, slots_, cin, std::span<const double>(in.data(), n_in),
                        std::span<const double>(gout.data(), static_cast<std::size_t>(cout)),
                        std::span<double>(gin.data(), n_in));
      for (int k = 0; k < slots_; ++k)
        for (int c = 0; c < cin; ++c)
          grad_canvas[static_cast<std::size_t>(k)](c * plane + p, s) = gin[static_cast<std::size_t>(k * cin + c)];
    }
  }
  if (grad) {
    for (int k = 0; k < slots_; ++k) {
      Eigen::MatrixXd& g = grad_canvas[static_cast<std::size_t>(k)];
      if (alpha_head_) {
        const auto a = canvases[static_cast<std::size_t>(k)].middleRows(3 * plane, plane).array();
        g.middleRows(3 * plane, plane).array() *= a * (1.0 - a);
      }
      mlp(k).backward(params.data() + offset(k), caches[static_cast<std::size_t>(k)], g, grad + offset(k));
    }
  }
  if (prediction) *prediction = std::move(out);
  return loss;
}

Eigen::MatrixXd CompositionalNet::forward(const Eigen::MatrixXd& z) const {
  if (z.rows() != input_dim()) throw ValidationError("network input has the wrong dimension");
  Eigen::MatrixXd pred;
  run(z, nullptr, &pred, nullptr);
  return pred;
}

double CompositionalNet::loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target,
                                           Eigen::VectorXd& grad) const {
  check_batch(*this, z, target);
  return chunked_reduce(z.cols(), jobs, param_count(), grad, [&](Eigen::Index b, Eigen::Index len, double* g) {
    const Eigen::MatrixXd t = target.middleCols(b, len);
    return run(z.middleCols(b, len), &t, nullptr, g);
  });
}

ParamMatch match_param_count(const std::vector<NetSpec>& slot_specs, bool share_weights,
                             int observation_size, double tolerance) {
  if (slot_specs.empty()) throw ValidationError("match_param_count needs slot specs");
  if (observation_size < 1) throw ValidationError("observation size must be >= 1");
  ParamMatch m;
  for (const auto& s : slot_specs) {
    s.validate();
    m.target += s.param_count();
    if (share_weights) break;
  }
  const NetSpec& base = slot_specs.front();
  const int input = base.input() * static_cast<int>(slot_specs.size());
  NetSpec spec;
  spec.widths = base.widths;
  spec.widths.front() = input;
  spec.widths.back() = observation_size;
  spec.activations = base.activations;
  const int hidden = static_cast<int>(spec.widths.size()) - 2;
  auto with_width = [&](int w0) {
    NetSpec s = spec;
    for (int i = 1; i <= hidden; ++i)
      s.widths[static_cast<std::size_t>(i)] = std::max(
          1, static_cast<int>(std::lround(static_cast<double>(w0) * base.widths[static_cast<std::size_t>(i)] /
                                          base.widths[1])));
    return s;
  };
  if (hidden == 0) {
    m.spec = spec;
  } else {
    NetSpec best = with_width(1);
    for (int w = 1;; ++w) {
      NetSpec s = with_width(w);
      const auto diff = [&](const NetSpec& x) {
        return std::abs(static_cast<double>(x.param_count()) - static_cast<double>(m.target));
      };
      if (diff(s) < diff(best)) best = s;
      if (s.param_count() >= m.target || w > (1 << 22)) break;
    }
    m.spec = best;
  }
  m.achieved = m.spec.param_count();
  m.ratio = static_cast<double>(m.achieved) / static_cast<double>(m.target);
  m.within_tolerance = std::abs(m.ratio - 1.0) <= tolerance;
  return m;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("moment coefficients must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,mse\n" << std::setprecision(10);
  for (std::size_t e = 0; e < mse.size(); ++e) out << e + 1 << ',' << mse[e] << "\n";
}

TrainHistory train(Network& net, const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                   const TrainConfig& config) {
  config.validate();
  if (z.cols() == 0) throw ValidationError("training set is empty");
  check_batch(net, z, x);
  const Eigen::Index n = z.cols();
  const Eigen::Index p = static_cast<Eigen::Index>(net.param_count());
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(p), m2 = Eigen::VectorXd::Zero(p), grad;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  TrainHistory hist;
  std::uint64_t step = 0;
  const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n);
  Eigen::MatrixXd zb(z.rows(), bs), xb(x.rows(), bs);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      RandomStream rng(config.seed, static_cast<std::uint64_t>(epoch));
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    }
    double sse = 0.0;
    for (Eigen::Index b = 0; b < n; b += bs) {
      const Eigen::Index len = std::min(bs, n - b);
      zb.resize(z.rows(), len);
      xb.resize(x.rows(), len);
      for (Eigen::Index i = 0; i < len; ++i) {
        zb.col(i) = z.col(order[static_cast<std::size_t>(b + i)]);
        xb.col(i) = x.col(order[static_cast<std::size_t>(b + i)]);
      }
      const double loss = net.loss_and_gradient(zb, xb, grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1), epoch + 1);
      sse += 2.0 * loss;
      grad /= static_cast<double>(len);
      ++step;
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      net.params.array() -= config.learning_rate * (m1.array() / c1) /
                            ((m2.array() / c2).sqrt() + config.epsilon);
    }
    const double mse = sse / (static_cast<double>(n) * static_cast<double>(x.rows()));
    if (!std::isfinite(mse)) throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1), epoch + 1);
    hist.mse.push_back(mse);
  }
  return hist;
}

Metrics evaluate_metrics(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
  if (target.cols() == 0) throw ValidationError("metrics need a nonempty dataset");
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw ValidationError("prediction and target shapes differ");
  const Eigen::VectorXd mean = target.rowwise().mean();
  const double ss_tot = (target.colwise() - mean).squaredNorm();
  if (!(ss_tot > 0.0)) throw ValidationError("R² undefined: target variance is zero");
  const double ss_res = (prediction - target).squaredNorm();
  Metrics m;
  m.mse = ss_res / static_cast<double>(target.size());
  m.r2_vw = 1.0 - ss_res / ss_tot;
  return m;
}

Metrics evaluate_metrics(const Network& net, const Eigen::MatrixXd& z, const Eigen::MatrixXd& x) {
  check_batch(net, z, x);
  return evaluate_metrics(net.forward(z), x);
}

void save_params(std::ostream& out, const Network& net) {
  out.write("CGL1", 4);
  const auto specs = net.specs();
  put_u32(out, static_cast<std::uint32_t>(specs.size()));
  for (const auto& s : specs) {
    put_u32(out, static_cast<std::uint32_t>(s.widths.size()));
    for (int w : s.widths) put_u32(out, static_cast<std::uint32_t>(w));
    for (Activation a : s.activations) put_u32(out, a == Activation::kTanh ? 0u : 1u);
  }
  put_u64(out, static_cast<std::uint64_t>(net.params.size()));
  for (Eigen::Index i = 0; i < net.params.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(net.params[i]));
  if (!out) throw RuntimeFailure("failed to write parameter file");
}

void save_params(const std::string& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  save_params(out, net);
}

ParamFile read_params(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::string(magic.data(), 4) != "CGL1") throw ValidationError("not a CGL1 parameter file");
  ParamFile f;
  const auto nets = get_bytes(in, 4);
  if (nets == 0 || nets > 1024) throw ValidationError("CGL1 file has an invalid net count");
  for (std::uint64_t i = 0; i < nets; ++i) {
    NetSpec s;
    const auto dims = get_bytes(in, 4);
    if (dims < 2 || dims > 1024) throw ValidationError("CGL1 file has an invalid layer count");
    for (std::uint64_t d = 0; d < dims; ++d) s.widths.push_back(static_cast<int>(get_bytes(in, 4)));
    for (std::uint64_t d = 0; d + 2 < dims; ++d) {
      const auto code = get_bytes(in, 4);
      if (code > 1) throw ValidationError("CGL1 file has an unknown activation code");
      s.activations.push_back(code == 0 ? Activation::kTanh : Activation::kRelu);
    }
    s.validate();
    f.specs.push_back(std::move(s));
  }
  const auto count = get_bytes(in, 8);
  std::size_t expected = 0;
  for (const auto& s : f.specs) expected += s.param_count();
  if (count != expected) throw ValidationError("CGL1 parameter count does not match the layer dims");
  f.params.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) f.params[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_bytes(in, 8));
  return f;
}

void load_params(std::istream& in, Network& net) {
  ParamFile f = read_params(in);
  if (f.specs != net.specs()) throw ValidationError("CGL1 layer dims do not match the network");
  net.params = std::move(f.params);
}

void load_params(const std::string& path, Network& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open parameter file " + path);
  load_params(in, net);
}

}  // namespace compgen
