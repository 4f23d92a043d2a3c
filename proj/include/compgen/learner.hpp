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

// Fully-connected networks with hand-written reverse mode, compositional and
// monolithic model wrappers, Adam training and the R^2 metrics.

#ifndef COMPGEN_LEARNER_HPP_
#define COMPGEN_LEARNER_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compgen/common.hpp"
#include "compgen/generative.hpp"

namespace compgen {

enum class Activation { kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// widths = {input, hidden..., output}; one activation per hidden layer,
// linear output.
struct NetSpec {
  std::vector<int> widths;
  std::vector<Activation> activations;

  static NetSpec mlp(int input, int hidden_width, int hidden_layers, int output,
                     Activation activation = Activation::kTanh);

  int input() const { return widths.front(); }
  int output() const { return widths.back(); }
  int layers() const { return static_cast<int>(widths.size()) - 1; }
  std::size_t param_count() const;
  void validate() const;
  bool operator==(const NetSpec&) const = default;
};

// Weights U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), biases zero. Layer l
// stores W (out x in, column-major) followed by b.
Eigen::VectorXd init_params(const NetSpec& spec, std::uint64_t seed);

// Stateless evaluation of one NetSpec over a parameter span.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // layer inputs, then output
  };

  explicit Mlp(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  std::size_t param_count() const { return spec_.param_count(); }

  // x: input x batch. Returns output x batch.
  Eigen::MatrixXd forward(const double* params, const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  // Accumulates d loss / d params into grad and returns d loss / d x.
  Eigen::MatrixXd backward(const double* params, const Cache& cache, const Eigen::MatrixXd& grad_out,
                           double* grad) const;

 private:
  NetSpec spec_;
};

class Network {
 public:
  virtual ~Network() = default;

  virtual std::string kind() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual std::vector<NetSpec> specs() const = 0;

  std::size_t param_count() const { return static_cast<std::size_t>(params.size()); }

  // z: input x batch -> prediction: output x batch.
  virtual Eigen::MatrixXd forward(const Eigen::MatrixXd& z) const = 0;
  // Sum over the batch of 0.5 * ||prediction - target||^2; grad receives the
  // summed parameter gradient (resized and overwritten).
  virtual double loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target,
                                   Eigen::VectorXd& grad) const = 0;

  Eigen::VectorXd forward(const Eigen::VectorXd& z) const;
  Eigen::VectorXd backward(const Eigen::VectorXd& z, const Eigen::VectorXd& target) const;

  // Samples per chunk of the deterministic gradient reduction.
  static constexpr int kChunk = 128;
  int jobs = 1;
  Eigen::VectorXd params;
};

class MonolithicNet : public Network {
 public:
  explicit MonolithicNet(NetSpec spec, std::uint64_t seed = 0);

  std::string kind() const override { return "monolithic"; }
  int input_dim() const override { return mlp_.spec().input(); }
  int output_dim() const override { return mlp_.spec().output(); }
  std::vector<NetSpec> specs() const override { return {mlp_.spec()}; }
  Eigen::MatrixXd forward(const Eigen::MatrixXd& z) const override;
  double loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target,
                           Eigen::VectorXd& grad) const override;
  using Network::forward;

 private:
  Mlp mlp_;
};

// K slot decoders D -> M composed by a fixed CompositionKind. With
// AlphaComposite the alpha channel of every canvas passes through a logistic
// head.
class CompositionalNet : public Network {
 public:
  CompositionalNet(std::vector<NetSpec> slot_specs, CompositionKind composition,
                   CanvasLayout canvas, bool share_weights = false, std::uint64_t seed = 0);

  std::string kind() const override { return "compositional"; }
  int input_dim() const override;
  int output_dim() const override;
  std::vector<NetSpec> specs() const override;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& z) const override;
  double loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target,
                           Eigen::VectorXd& grad) const override;
  using Network::forward;

  int slots() const { return slots_; }
  CompositionKind composition() const { return composition_; }
  const CanvasLayout& canvas() const { return canvas_; }
  bool share_weights() const { return share_; }
  // Canvases of slot k: M x batch, z_k: D x batch.
  Eigen::MatrixXd slot_canvas(int k, const Eigen::MatrixXd& z_k) const;

 private:
  std::size_t offset(int k) const;
  const Mlp& mlp(int k) const;
  double run(const Eigen::MatrixXd& z, const Eigen::MatrixXd* target, Eigen::MatrixXd* prediction,
             double* grad) const;

  int slots_;
  CompositionKind composition_;
  CanvasLayout canvas_;
  bool share_;
  bool alpha_head_;
  std::vector<Mlp> mlps_;
  std::vector<std::size_t> offsets_;
};

struct ParamMatch {
  NetSpec spec;
  std::size_t target = 0;
  std::size_t achieved = 0;
  double ratio = 1.0;  // achieved / target
  bool within_tolerance = true;
};

// Monolithic spec (K*D -> N, same depth and activations as slot 0) whose
// hidden widths are scaled so the parameter count is within +-5% of the
// compositional total.
ParamMatch match_param_count(const std::vector<NetSpec>& slot_specs, bool share_weights,
                             int observation_size, double tolerance = 0.05);

struct TrainConfig {
  int epochs = 300;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

class DivergenceError : public RuntimeFailure {
 public:
  DivergenceError(const std::string& what, int epoch) : RuntimeFailure(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct TrainHistory {
  std::vector<double> mse;  // per epoch, running mean over the epoch's batches

  // Columns: epoch,mse
  void write_csv(std::ostream& out) const;
};

// z: input x n, x: output x n.
TrainHistory train(Network& net, const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                   const TrainConfig& config);

struct Metrics {
  double mse = 0.0;
  double r2_vw = 0.0;
};

// Targets and predictions as output x n matrices.
Metrics evaluate_metrics(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);
Metrics evaluate_metrics(const Network& net, const Eigen::MatrixXd& z, const Eigen::MatrixXd& x);

// CGL1 parameter files.
void save_params(std::ostream& out, const Network& net);
void save_params(const std::string& path, const Network& net);
struct ParamFile {
  std::vector<NetSpec> specs;
  Eigen::VectorXd params;
};
ParamFile read_params(std::istream& in);
// Loads into net after checking the stored layer dims match.
void load_params(std::istream& in, Network& net);
void load_params(const std::string& path, Network& net);

}  // namespace compgen

#endif  // COMPGEN_LEARNER_HPP_
