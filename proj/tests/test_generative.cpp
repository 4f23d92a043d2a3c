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
#include <numbers>

#include <gtest/gtest.h>

#include "compgen/common.hpp"
#include "compgen/generative.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ComponentCanvas flat_canvas(std::initializer_list<double> v) {
  return {CanvasLayout::flat(static_cast<int>(v.size())), vec(v)};
}

double sigma(double t) { return 1.0 / (1.0 + std::exp(-t)); }

SpriteRenderer sprite(int hw, double beta) {
  SpriteRenderer r;
  r.height = r.width = hw;
  r.edge_sharpness = beta;
  return r;
}

TEST(RenderComponent, SmallSpriteMatchesLogisticOracle) {
  SpriteRenderer r = sprite(16, 40.0);
  const Eigen::VectorXd z = vec({0.5, 0.5, 3.0 / 7.0, 0.0, 0.0});
  const ComponentCanvas c = render_component(r, z);
  const double radius = 0.05;
  const double margin = radius * (1.0 + std::log(999.0) / 40.0);
  for (int row = 0; row < 16; ++row) {
    for (int col = 0; col < 16; ++col) {
      const double du = (col + 0.5) / 16 - 0.5, dv = (row + 0.5) / 16 - 0.5;
      const double d = std::hypot(du, dv);
      const double expected = sigma(40.0 * (1.0 - d / radius));
      const double got = c.values[row * 16 + col];  // red channel, hue 0
      EXPECT_NEAR(got, expected, 1e-4);
      if (d > margin) EXPECT_LT(got, 1e-3);
      EXPECT_GE(got, 0.0);
      EXPECT_LE(got, 1.0);
    }
  }
}

TEST(RenderComponent, OutOfBoxLatentRejected) {
  EXPECT_THROW(render_component(sprite(8, 40.0), vec({1.5, 0.5, 0.5, 0.5, 0.5})), ValidationError);
}

TEST(RenderComponent, SmoothAnalyticZeroAndSingleTerm) {
  SmoothAnalytic s;
  s.dim = 2;
  s.layout = CanvasLayout::flat(3);
  s.coefficients = Eigen::MatrixXd::Zero(3, SmoothAnalytic::feature_count(2));
  EXPECT_TRUE(render_component(s, vec({0.3, 0.8})).values.isZero());
  // Feature 3 is sin(2 pi z_0); feature 9 is sin(pi (z_0 + z_1)).
  s.coefficients(0, 3) = 1.0;
  s.coefficients(2, 9) = 1.0;
  for (const auto& z : {vec({0.1, 0.2}), vec({0.5, 0.9}), vec({0.77, 0.33})}) {
    const Eigen::VectorXd v = render_component(s, z).values;
    EXPECT_NEAR(v[0], std::sin(2 * kPi * z[0]), 1e-14);
    EXPECT_NEAR(v[1], 0.0, 1e-14);
    EXPECT_NEAR(v[2], std::sin(kPi * (z[0] + z[1])), 1e-14);
  }
}

TEST(Compose, SumOfTwoCanvases) {
  const std::vector<ComponentCanvas> cs = {flat_canvas({1, 2}), flat_canvas({3, 4})};
  const Observation o = compose(CompositionKind::kSum, cs);
  EXPECT_EQ(o.values, vec({4, 6}));
}

TEST(Compose, SigmoidScalarExample) {
  const std::vector<ComponentCanvas> cs = {flat_canvas({0.0}), flat_canvas({2.0})};
  EXPECT_DOUBLE_EQ(compose(CompositionKind::kSigmoidOcclusion, cs).values[0], 1.0);
}

TEST(Compose, SigmoidMatchesFormula) {
  RandomStream rng(1, 1);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    const std::vector<ComponentCanvas> cs = {flat_canvas({a}), flat_canvas({b})};
    EXPECT_NEAR(compose(CompositionKind::kSigmoidOcclusion, cs).values[0],
                sigma(a) * a + sigma(-a) * b, 1e-14);
  }
}

TEST(Compose, AlphaOpaqueForegroundWins) {
  CanvasLayout l{1, 1, 4};
  const std::vector<ComponentCanvas> cs = {{l, vec({0.3, 0.3, 0.3, 1.0})},
                                           {l, vec({0.8, 0.8, 0.8, 0.5})}};
  const Observation o = compose(CompositionKind::kAlphaComposite, cs);
  ASSERT_EQ(o.layout.channels, 3);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(o.values[c], 0.3);
}

TEST(Compose, AlphaTransparentForegroundReturnsBackground) {
  CanvasLayout l{1, 2, 4};
  // Channel-major: r r g g b b a a.
  const std::vector<ComponentCanvas> cs = {
      {l, vec({0.9, 0.1, 0.4, 0.6, 0.2, 0.7, 0.0, 0.0})},
      {l, vec({0.25, 0.5, 0.75, 0.125, 0.5, 0.375, 0.6, 1.0})}};
  const Observation o = compose(CompositionKind::kAlphaComposite, cs);
  EXPECT_EQ(o.values, vec({0.25, 0.5, 0.75, 0.125, 0.5, 0.375}));
}

TEST(Compose, AlphaZeroTotalAlphaIsZero) {
  CanvasLayout l{1, 1, 4};
  const std::vector<ComponentCanvas> cs = {{l, vec({0.5, 0.5, 0.5, 0.0})},
                                           {l, vec({0.5, 0.5, 0.5, 0.0})}};
  const Observation o = compose(CompositionKind::kAlphaComposite, cs);
  EXPECT_TRUE(o.values.allFinite());
  EXPECT_TRUE(o.values.isZero());
}

TEST(Compose, LayoutMismatchRejected) {
  const std::vector<ComponentCanvas> cs = {flat_canvas({1, 2}), flat_canvas({3})};
  EXPECT_THROW(compose(CompositionKind::kSum, cs), ValidationError);
  const std::vector<ComponentCanvas> rgb = {{{1, 1, 3}, vec({1, 1, 1})}, {{1, 1, 3}, vec({1, 1, 1})}};
  EXPECT_THROW(compose(CompositionKind::kAlphaComposite, rgb), ValidationError);
}

TEST(ComposeProperty, Locality) {
  RandomStream rng(3, 0);
  for (auto kind : {CompositionKind::kSum, CompositionKind::kSigmoidOcclusion,
                    CompositionKind::kStepOcclusion, CompositionKind::kAlphaComposite}) {
    const CanvasLayout l{3, 3, 4};
    std::vector<ComponentCanvas> cs(3, {l, Eigen::VectorXd(l.size())});
    for (auto& c : cs)
      for (Eigen::Index i = 0; i < c.values.size(); ++i) c.values[i] = rng.uniform(0.05, 0.95);
    const Observation base = compose(kind, cs);
    const int pixel = 4;
    cs[1].values[2 * l.pixels() + pixel] += 0.1;
    const Observation moved = compose(kind, cs);
    for (int c = 0; c < base.layout.channels; ++c)
      for (int p = 0; p < l.pixels(); ++p)
        if (p != pixel) EXPECT_EQ(base.values[c * l.pixels() + p], moved.values[c * l.pixels() + p]);
  }
}

TEST(ComposeProperty, SharpSigmoidApproachesStep) {
  RandomStream rng(4, 0);
  std::vector<ComponentCanvas> cs = {flat_canvas({0, 0, 0, 0, 0, 0}), flat_canvas({0, 0, 0, 0, 0, 0})};
  for (int i = 0; i < 6; ++i) {
    cs[0].values[i] = rng.uniform(-1, 1);
    cs[1].values[i] = rng.uniform(-1, 1);
  }
  const Eigen::VectorXd step = compose(CompositionKind::kStepOcclusion, cs).values;
  double prev = std::numeric_limits<double>::infinity();
  for (double t : {1.0, 10.0, 100.0}) {
    const double err = (compose(CompositionKind::kSigmoidOcclusion, cs, t).values - step).cwiseAbs().maxCoeff();
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(ComposeProperty, ThreeSlotFoldIsNested) {
  const std::vector<ComponentCanvas> cs = {flat_canvas({0.3}), flat_canvas({-0.2}), flat_canvas({0.9})};
  const double inner = sigma(-0.2) * -0.2 + (1 - sigma(-0.2)) * 0.9;
  const double outer = sigma(0.3) * 0.3 + (1 - sigma(0.3)) * inner;
  EXPECT_NEAR(compose(CompositionKind::kSigmoidOcclusion, cs).values[0], outer, 1e-15);
}

CompositionalModel two_sprites(CompositionKind kind, int hw) {
  CompositionalModel m;
  SpriteRenderer a = sprite(hw, 40.0), b = sprite(hw, 40.0);
  b.hue = 0.5;
  a.latents = b.latents = {SpriteLatent::kX, SpriteLatent::kY, SpriteLatent::kSize};
  m.families = {a, b};
  m.composition = kind;
  m.latent_box = LatentBox::unit(2, 3);
  return m;
}

TEST(Evaluate, SingleSlotSumIsIdentity) {
  CompositionalModel m;
  m.families = {SmoothAnalytic::random(2, CanvasLayout::flat(5), 3)};
  m.latent_box = LatentBox::unit(1, 2);
  LatentPoint z(1, 2, vec({0.2, 0.6}));
  EXPECT_EQ(evaluate(m, z).values, render_component(m.families[0], z.slot(0)).values);
}

// Where the foreground canvas is ~0, sigma(0)=0.5 gates the background.
TEST(Evaluate, FarSpritesShowHalfBackground) {
  const CompositionalModel m = two_sprites(CompositionKind::kSigmoidOcclusion, 16);
  const LatentPoint z = LatentPoint::from_slots({vec({0.15, 0.15, 0.1}), vec({0.75, 0.75, 0.3})});
  const Observation o = evaluate(m, z);
  const ComponentCanvas bg = render_component(m.families[1], z.slot(1));
  const ComponentCanvas fg = render_component(m.families[0], z.slot(0));
  for (Eigen::Index i = 0; i < o.values.size(); ++i) {
    if (bg.values[i] > 0.05 && fg.values[i] < 1e-3) EXPECT_NEAR(o.values[i], 0.5 * bg.values[i], 1e-3) << i;
  }
}

TEST(Evaluate, ZeroFamiliesGiveZero) {
  CompositionalModel m;
  SmoothAnalytic s = SmoothAnalytic::random(2, CanvasLayout::flat(4), 1);
  s.coefficients.setZero();
  m.families = {s, s};
  m.latent_box = LatentBox::unit(2, 2);
  EXPECT_TRUE(evaluate(m, LatentPoint(2, 2, vec({0.1, 0.2, 0.3, 0.4}))).values.isZero());
}

TEST(EvaluateProperty, SlotIndependenceAndPurity) {
  const CompositionalModel m = two_sprites(CompositionKind::kSigmoidOcclusion, 8);
  const LatentPoint z = LatentPoint::from_slots({vec({0.3, 0.4, 0.5}), vec({0.6, 0.7, 0.2})});
  LatentPoint moved = z;
  moved(1, 0) = 0.1;
  EXPECT_EQ(render_component(m.families[0], z.slot(0)).values,
            render_component(m.families[0], moved.slot(0)).values);
  EXPECT_EQ(evaluate(m, z).values, evaluate(m, z).values);
}

TEST(Dataset, OrderPreservedAndRecheckable) {
  const CompositionalModel m = two_sprites(CompositionKind::kSum, 8);
  const SampleSet s = sample_support(SupportSpec::full_box(m.latent_box), 3, 2);
  const auto d = dataset(m, s, 2);
  ASSERT_EQ(d.size(), 3U);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(d[i].latent == s.points[i]);
    EXPECT_EQ(d[i].observation.values, evaluate(m, s.points[i]).values);
  }
  SampleSet empty;
  empty.spec = s.spec;
  EXPECT_TRUE(dataset(m, empty).empty());
}

TEST(Model, AlphaNeedsFourChannels) {
  CompositionalModel m = two_sprites(CompositionKind::kAlphaComposite, 8);
  EXPECT_THROW(m.validate(), ValidationError);
  for (auto& f : m.families) std::get<SpriteRenderer>(f).channels = 4;
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.observation_layout().channels, 3);
}

}  // namespace
}  // namespace compgen
