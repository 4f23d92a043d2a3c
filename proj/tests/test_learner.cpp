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

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <Eigen/Cholesky>

#include "compgen/common.hpp"
#include "compgen/learner.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

Eigen::MatrixXd random_matrix(RandomStream& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Max relative error of the analytic gradient over sampled coordinates.
double gradient_check(Network& net, const Eigen::MatrixXd& z, const Eigen::MatrixXd& t, int coords,
                      std::uint64_t seed) {
  Eigen::VectorXd grad;
  net.loss_and_gradient(z, t, grad);
  RandomStream rng(seed, 0);
  double worst = 0.0;
  const double h = 1e-5;
  for (int c = 0; c < coords; ++c) {
    const auto i = static_cast<Eigen::Index>(rng.below(net.params.size()));
    const double saved = net.params[i];
    Eigen::VectorXd unused;
    net.params[i] = saved + h;
    const double up = net.loss_and_gradient(z, t, unused);
    net.params[i] = saved - h;
    const double down = net.loss_and_gradient(z, t, unused);
    net.params[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd) + std::abs(grad[i]), 1e-6));
  }
  return worst;
}

TEST(NetSpec, ParamCountAndValidation) {
  const NetSpec s = NetSpec::mlp(3, 8, 2, 5);
  EXPECT_EQ(s.widths, (std::vector<int>{3, 8, 8, 5}));
  EXPECT_EQ(s.param_count(), 3U * 8 + 8 + 8 * 8 + 8 + 8 * 5 + 5);
  NetSpec bad = s;
  bad.widths[1] = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(InitParams, DeterministicSeededAndBounded) {
  const NetSpec s = NetSpec::mlp(7, 16, 3, 4);
  const Eigen::VectorXd a = init_params(s, 3), b = init_params(s, 3), c = init_params(s, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::size_t off = 0;
  for (int l = 0; l < s.layers(); ++l) {
    const int in = s.widths[static_cast<std::size_t>(l)], out = s.widths[static_cast<std::size_t>(l + 1)];
    const double bound = std::sqrt(6.0 / in);
    const auto w = a.segment(static_cast<Eigen::Index>(off), in * out);
    const auto bias = a.segment(static_cast<Eigen::Index>(off) + in * out, out);
    EXPECT_LE(w.cwiseAbs().maxCoeff(), bound);
    EXPECT_TRUE(bias.isZero());
    off += static_cast<std::size_t>(in * out + out);
  }
}

TEST(Backward, LinearScalarHandChainRule) {
  NetSpec s;
  s.widths = {1, 1};
  MonolithicNet net(s, 0);
  net.params << 2.0, 0.0;
  Eigen::VectorXd z(1), t(1);
  z << 3.0;
  t << 1.0;
  const Eigen::VectorXd g = net.backward(z, t);
  EXPECT_DOUBLE_EQ(g[0], 15.0);
  EXPECT_DOUBLE_EQ(g[1], 5.0);
}

TEST(Forward, ZeroParamsGiveZeroOutput) {
  MonolithicNet net(NetSpec::mlp(4, 6, 2, 3), 1);
  net.params.setZero();
  Eigen::VectorXd z = Eigen::VectorXd::Constant(4, 0.7);
  EXPECT_TRUE(net.forward(z).isZero());
  EXPECT_THROW(net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(3))), ValidationError);
}

TEST(BackwardProperty, FiniteDifferenceAcrossNetsAndCompositions) {
  RandomStream rng(11, 0);
  for (auto act : {Activation::kTanh, Activation::kRelu}) {
    MonolithicNet mono(NetSpec::mlp(4, 7, 2, 5, act), 5);
    const Eigen::MatrixXd z = random_matrix(rng, 4, 6), t = random_matrix(rng, 5, 6);
    EXPECT_LT(gradient_check(mono, z, t, 10, 1), 1e-4) << to_string(act);
  }
  for (auto kind : {CompositionKind::kSum, CompositionKind::kSigmoidOcclusion, CompositionKind::kAlphaComposite}) {
    for (bool share : {false, true}) {
      const int channels = kind == CompositionKind::kAlphaComposite ? 4 : 3;
      const CanvasLayout canvas{2, 2, channels};
      const NetSpec slot = NetSpec::mlp(2, 6, 2, canvas.size());
      CompositionalNet net({slot, slot}, kind, canvas, share, 7);
      const Eigen::MatrixXd z = random_matrix(rng, 4, 5, 0.0, 1.0);
      const Eigen::MatrixXd t = random_matrix(rng, net.output_dim(), 5, 0.0, 1.0);
      EXPECT_LT(gradient_check(net, z, t, 10, 2), 1e-4) << to_string(kind) << " share=" << share;
    }
  }
}

TEST(BackwardProperty, ChunkedReductionIsExactAndJobIndependent) {
  RandomStream rng(12, 0);
  MonolithicNet net(NetSpec::mlp(3, 10, 2, 4), 2);
  const Eigen::MatrixXd z = random_matrix(rng, 3, 300), t = random_matrix(rng, 4, 300);
  Eigen::VectorXd g1, g4;
  const double l1 = net.loss_and_gradient(z, t, g1);
  net.jobs = 4;
  const double l4 = net.loss_and_gradient(z, t, g4);
  EXPECT_EQ(l1, l4);
  EXPECT_EQ(g1, g4);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g1.size());
  for (int i = 0; i < 300; ++i) sum += net.backward(Eigen::VectorXd(z.col(i)), Eigen::VectorXd(t.col(i)));
  EXPECT_LT((sum - g1).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(CompositionalNetProperty, SumSlotGradientLocality) {
  RandomStream rng(13, 0);
  const CanvasLayout canvas{2, 2, 3};
  const int m = canvas.size();
  const NetSpec slot = NetSpec::mlp(2, 5, 1, m);
  CompositionalNet net({slot, slot}, CompositionKind::kSum, canvas, false, 3);
  const auto n0 = static_cast<Eigen::Index>(slot.param_count());
  const Eigen::Index w_off = 2 * 5 + 5, b_off = w_off + 5 * m;
  // Slot 0 draws only even outputs, slot 1 only odd ones, so the canvases never interact.
  auto confine = [&](int k) {
    const Eigen::Index base = k * n0;
    for (int o = 0; o < m; ++o) {
      if (o % 2 == k) continue;
      for (int i = 0; i < 5; ++i) net.params[base + w_off + i * m + o] = 0.0;
      net.params[base + b_off + o] = 0.0;
    }
  };
  confine(0);
  confine(1);
  const Eigen::MatrixXd z = random_matrix(rng, 4, 3, 0.0, 1.0);
  const Eigen::MatrixXd t = Eigen::MatrixXd::Zero(net.output_dim(), 3);
  Eigen::VectorXd ga, gb;
  net.loss_and_gradient(z, t, ga);
  for (Eigen::Index i = n0; i < 2 * n0; ++i) net.params[i] += rng.uniform(-1, 1);
  confine(1);
  net.loss_and_gradient(z, t, gb);
  // Entries tied to slot 0's zeroed outputs see slot 1's residual, so only
  // the live entries must match.
  std::vector<char> live(static_cast<std::size_t>(n0), 1);
  for (int o = 1; o < m; o += 2) {
    for (int i = 0; i < 5; ++i) live[static_cast<std::size_t>(w_off + i * m + o)] = 0;
    live[static_cast<std::size_t>(b_off + o)] = 0;
  }
  for (Eigen::Index i = 0; i < n0; ++i)
    if (live[static_cast<std::size_t>(i)]) EXPECT_EQ(ga[i], gb[i]) << i;
  EXPECT_NE(ga.tail(n0), gb.tail(n0));
}

TEST(CompositionalNet, RejectsStepOcclusion) {
  const NetSpec slot = NetSpec::mlp(2, 4, 1, 3);
  EXPECT_THROW(CompositionalNet({slot, slot}, CompositionKind::kStepOcclusion, {1, 1, 3}), ValidationError);
}

TEST(MatchParamCount, WithinFivePercent) {
  const NetSpec slot = NetSpec::mlp(3, 64, 4, 768);
  const ParamMatch m = match_param_count({slot, slot}, false, 768);
  EXPECT_EQ(m.target, 2 * slot.param_count());
  EXPECT_TRUE(m.within_tolerance);
  EXPECT_GE(m.achieved, static_cast<std::size_t>(0.95 * m.target));
  EXPECT_LE(m.achieved, static_cast<std::size_t>(1.05 * m.target));
  EXPECT_EQ(m.spec.input(), 6);
  EXPECT_EQ(m.spec.output(), 768);
  EXPECT_DOUBLE_EQ(m.ratio, static_cast<double>(m.achieved) / m.target);
}

TEST(MatchParamCount, TenThousandTarget) {
  // Two slots: 2 * (2*w + w + w*10 + 10) with w chosen so the total is near 10 000.
  const NetSpec slot = NetSpec::mlp(2, 384, 1, 10);
  const ParamMatch m = match_param_count({slot, slot}, false, 10);
  EXPECT_EQ(m.target, 10004U);
  EXPECT_GE(m.achieved, 9500U);
  EXPECT_LE(m.achieved, 10500U);
}

TEST(MatchParamCount, SharedWeightsAndSingleLayer) {
  const NetSpec slot = NetSpec::mlp(3, 32, 2, 48);
  EXPECT_EQ(match_param_count({slot, slot}, true, 48).target, slot.param_count());
  NetSpec linear;
  linear.widths = {3, 48};
  const ParamMatch m = match_param_count({linear, linear}, false, 48);
  EXPECT_EQ(m.spec.widths, (std::vector<int>{6, 48}));
  EXPECT_EQ(m.achieved, 6U * 48 + 48);
}

TEST(Train, MemorizesSingleSample) {
  MonolithicNet net(NetSpec::mlp(2, 16, 2, 3), 1);
  Eigen::MatrixXd z(2, 1), x(3, 1);
  z << 0.2, 0.7;
  x << 0.5, -0.3, 0.1;
  TrainConfig c;
  c.epochs = 2000;
  c.learning_rate = 3e-3;
  train(net, z, x, c);
  EXPECT_LT((net.forward(z) - x).squaredNorm() / 3.0, 1e-6);
}

TEST(Train, LinearNetReachesLeastSquares) {
  RandomStream rng(14, 0);
  const int n = 200;
  const Eigen::MatrixXd z = random_matrix(rng, 2, n);
  Eigen::MatrixXd x(1, n);
  for (int i = 0; i < n; ++i) x(0, i) = 0.7 * z(0, i) - 0.4 * z(1, i) + 0.1 + 0.05 * rng.uniform(-1, 1);
  // Normal-equations optimum with an intercept.
  Eigen::MatrixXd a(n, 3);
  a.leftCols(2) = z.transpose();
  a.col(2).setOnes();
  const Eigen::VectorXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * x.transpose());
  const double optimum = (a * beta - x.transpose()).squaredNorm() / n;

  NetSpec s;
  s.widths = {2, 1};
  MonolithicNet net(s, 4);
  TrainConfig c;
  c.epochs = 800;
  c.batch_size = 50;
  c.learning_rate = 1e-2;
  train(net, z, x, c);
  c.epochs = 2000;
  c.batch_size = n;
  c.learning_rate = 1e-4;
  train(net, z, x, c);
  const double mse = evaluate_metrics(net.forward(z), x).mse;
  EXPECT_NEAR(mse, optimum, 1e-6);
}

TEST(Train, SeedDeterminism) {
  RandomStream rng(15, 0);
  const Eigen::MatrixXd z = random_matrix(rng, 2, 64), x = random_matrix(rng, 3, 64);
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 16;
  c.seed = 9;
  MonolithicNet a(NetSpec::mlp(2, 8, 2, 3), 1), b(NetSpec::mlp(2, 8, 2, 3), 1);
  b.jobs = 3;
  const TrainHistory ha = train(a, z, x, c), hb = train(b, z, x, c);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(ha.mse, hb.mse);
  std::ostringstream csv;
  ha.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, 10), "epoch,mse\n");
}

TEST(Train, DivergenceReportsEpoch) {
  RandomStream rng(16, 0);
  const Eigen::MatrixXd z = random_matrix(rng, 2, 32);
  Eigen::MatrixXd x = random_matrix(rng, 1, 32);
  x(0, 3) = std::numeric_limits<double>::infinity();
  MonolithicNet net(NetSpec::mlp(2, 4, 1, 1), 1);
  TrainConfig c;
  c.epochs = 3;
  try {
    train(net, z, x, c);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
  }
}

TEST(Metrics, PerfectAndMeanPredictors) {
  RandomStream rng(17, 0);
  const Eigen::MatrixXd t = random_matrix(rng, 4, 50);
  const Metrics perfect = evaluate_metrics(t, t);
  EXPECT_EQ(perfect.mse, 0.0);
  EXPECT_EQ(perfect.r2_vw, 1.0);
  const Eigen::MatrixXd mean = t.rowwise().mean().replicate(1, 50);
  EXPECT_NEAR(evaluate_metrics(mean, t).r2_vw, 0.0, 1e-14);
}

TEST(Metrics, ZeroVarianceAndShapeErrors) {
  const Eigen::MatrixXd t = Eigen::MatrixXd::Constant(3, 5, 0.25);
  try {
    evaluate_metrics(t, t);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("R² undefined"), std::string::npos);
  }
  EXPECT_THROW(evaluate_metrics(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 3)), ValidationError);
}

TEST(MetricsProperty, ShiftInvariance) {
  RandomStream rng(18, 0);
  const Eigen::MatrixXd t = random_matrix(rng, 3, 40), p = t + 0.3 * random_matrix(rng, 3, 40);
  const double base = evaluate_metrics(p, t).r2_vw;
  const Eigen::MatrixXd shift = Eigen::MatrixXd::Constant(3, 40, 7.5);
  EXPECT_NEAR(evaluate_metrics(p + shift, t + shift).r2_vw, base, 1e-12);
  EXPECT_LE(base, 1.0);
}

TEST(Serialization, Cgl1RoundTrip) {
  const CanvasLayout canvas{2, 2, 3};
  const NetSpec slot = NetSpec::mlp(2, 5, 2, canvas.size(), Activation::kRelu);
  CompositionalNet a({slot, slot}, CompositionKind::kSigmoidOcclusion, canvas, false, 3);
  std::stringstream buf;
  save_params(buf, a);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "CGL1");
  CompositionalNet b({slot, slot}, CompositionKind::kSigmoidOcclusion, canvas, false, 99);
  load_params(buf, b);
  EXPECT_EQ(a.params, b.params);
  std::stringstream again(bytes);
  const ParamFile f = read_params(again);
  EXPECT_EQ(f.specs, a.specs());

  MonolithicNet other(NetSpec::mlp(4, 3, 1, 12), 0);
  std::stringstream mismatch(bytes);
  EXPECT_THROW(load_params(mismatch, other), ValidationError);
  std::stringstream garbage("XXXX1234");
  EXPECT_THROW(read_params(garbage), ValidationError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(read_params(truncated), ValidationError);
}

}  // namespace
}  // namespace compgen
