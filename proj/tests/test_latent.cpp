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

#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "compgen/common.hpp"
#include "compgen/latent.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SupportSpec ortho2d(double eps) {
  return SupportSpec::orthogonal(LatentBox::unit(2, 2),
                                 {{vec({0.25, 0.25}), vec({0.75, 0.75})}, {vec({0.5, 0.5})}}, eps);
}

SupportSpec gapped2d() {
  return SupportSpec::gapped(LatentBox::unit(2, 2),
                             {{vec({0.65, 0.5}), vec({0.85, 0.5})}, {vec({0.5, 0.5})}}, 0.02,
                             {{0, 0, {0.14, 0.46}}});
}

TEST(LatentBox, UnitAndValidation) {
  const LatentBox box = LatentBox::unit(2, 3);
  EXPECT_EQ(box.size(), 6);
  EXPECT_DOUBLE_EQ(box.axis(1, 2).hi, 1.0);
  EXPECT_THROW(LatentBox(1, 1, {{0.5, 0.5}}), ValidationError);
  EXPECT_THROW(LatentBox(1, 2, {{0.0, 1.0}}), ValidationError);
}

TEST(LatentPoint, OutOfBoxNamesAxis) {
  LatentPoint z(2, 2);
  z(1, 0) = 1.5;
  try {
    check_in_box(LatentBox::unit(2, 2), z);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("slot 1 axis 0"), std::string::npos) << e.what();
  }
}

TEST(SampleSupport, FullBoxInsideUnitSquare) {
  const SampleSet s = sample_support(SupportSpec::full_box(LatentBox::unit(1, 2)), 4, 7);
  ASSERT_EQ(s.size(), 4U);
  for (const auto& z : s.points) {
    EXPECT_GE(z.flat().minCoeff(), 0.0);
    EXPECT_LE(z.flat().maxCoeff(), 1.0);
  }
}

TEST(SampleSupport, ZeroThicknessAnchorsAreExact) {
  const SupportSpec spec = SupportSpec::orthogonal(LatentBox::unit(2, 2),
                                                   {{vec({0.3, 0.7})}, {vec({0.6, 0.2})}}, 0.0);
  const SampleSet s = sample_support(spec, 500, 3);
  for (const auto& z : s.points) {
    const bool on1 = z.slot(0) == vec({0.3, 0.7});
    const bool on2 = z.slot(1) == vec({0.6, 0.2});
    EXPECT_TRUE(on1 || on2);
  }
}

TEST(SampleSupport, GapIsNeverSampled) {
  const SampleSet s = sample_support(gapped2d(), 20000, 11);
  for (const auto& z : s.points) {
    EXPECT_FALSE(z(0, 0) >= 0.14 && z(0, 0) <= 0.46) << z(0, 0);
  }
}

TEST(SampleSupport, DeterministicAndSeedSensitive) {
  const SupportSpec spec = ortho2d(0.02);
  const SampleSet a = sample_support(spec, 300, 5, 1);
  const SampleSet b = sample_support(spec, 300, 5, 4);
  const SampleSet c = sample_support(spec, 300, 6);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a.points[i] == b.points[i]);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a.points[i] == c.points[i]);
  EXPECT_TRUE(differs);
}

TEST(SampleSupport, InvalidSpecNamesAxis) {
  SupportSpec bad = SupportSpec::gapped(LatentBox::unit(2, 2), {{vec({0.9, 0.5})}, {vec({0.5, 0.5})}},
                                        0.02, {{0, 1, {0.0, 1.0}}});
  try {
    sample_support(bad, 10, 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("slot 0 axis 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sample_support(SupportSpec::full_box(LatentBox::unit(1, 1)), 0, 1), ValidationError);
}

// Membership soundness over randomly drawn specs of every kind.
TEST(SampleSupportProperty, MembershipSoundness) {
  RandomStream rng(2024, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const int slots = 1 + static_cast<int>(rng.below(3));
    const int dim = 1 + static_cast<int>(rng.below(3));
    const LatentBox box = LatentBox::unit(slots, dim);
    std::vector<std::vector<Eigen::VectorXd>> anchors(static_cast<std::size_t>(slots));
    for (auto& a : anchors) {
      const int count = 1 + static_cast<int>(rng.below(2));
      for (int i = 0; i < count; ++i) {
        Eigen::VectorXd v(dim);
        for (int d = 0; d < dim; ++d) v[d] = rng.uniform(0.6, 0.95);
        a.push_back(v);
      }
    }
    const double eps = rng.uniform(0.0, 0.05);
    std::vector<SupportSpec> specs = {
        SupportSpec::full_box(box), SupportSpec::orthogonal(box, anchors, eps),
        SupportSpec::gaussian(box, anchors, eps, {rng.uniform(0.05, 0.3)}),
        SupportSpec::gapped(box, anchors, eps, {{0, 0, {0.1, 0.4}}})};
    if (slots > 1) specs.push_back(SupportSpec::diagonal(box, rng.uniform(0.05, 0.5)));
    for (const auto& spec : specs) {
      const SampleSet s = sample_support(spec, 200, static_cast<std::uint64_t>(trial));
      for (const auto& z : s.points) ASSERT_TRUE(contains(spec, z)) << to_string(spec.kind);
    }
  }
}

TEST(MarginalCoverage, FullBoxCoversEveryCell) {
  const SampleSet s = sample_support(SupportSpec::full_box(LatentBox::unit(1, 2)), 1000, 1);
  const CoverageGrid g = marginal_coverage(s, 0, 8);
  std::vector<std::uint64_t> brute(64, 0);
  for (const auto& z : s.points) {
    const int i = std::min(7, static_cast<int>(z(0, 0) * 8));
    const int j = std::min(7, static_cast<int>(z(0, 1) * 8));
    ++brute[static_cast<std::size_t>(j * 8 + i)];
  }
  EXPECT_EQ(g.counts, brute);
  EXPECT_EQ(g.covered_count(), 64U);
}

TEST(MarginalCoverage, SingleAnchorOneCell) {
  const SupportSpec spec = SupportSpec::orthogonal(LatentBox::unit(2, 2),
                                                   {{vec({0.3, 0.3})}, {vec({0.6, 0.6})}}, 0.0);
  SampleSet s = sample_support(spec, 200, 1);
  for (auto& z : s.points) z.set_slot(0, vec({0.3, 0.3}));
  EXPECT_EQ(marginal_coverage(s, 0, 8).covered_count(), 1U);
}

TEST(MarginalCoverage, CountsSumToSamplesAndRejectsBadInput) {
  const SampleSet s = sample_support(ortho2d(0.02), 777, 2);
  for (int k = 0; k < 2; ++k) {
    const CoverageGrid g = marginal_coverage(s, k, 5);
    std::uint64_t total = 0;
    for (auto c : g.counts) total += c;
    EXPECT_EQ(total, 777U);
  }
  EXPECT_THROW(marginal_coverage(s, 0, 1), ValidationError);
  SampleSet empty;
  empty.spec = s.spec;
  EXPECT_THROW(marginal_coverage(empty, 0, 4), ValidationError);
}

TEST(MarginalCoverage, GapCellsOnlyAreEmpty) {
  const SampleSet s = sample_support(gapped2d(), 100000, 4);
  const CoverageGrid g = marginal_coverage(s, 0, 50);
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const auto b = g.cell_bounds(c);
    const bool inside_gap = b[0].lo >= 0.14 - 1e-12 && b[0].hi <= 0.46 + 1e-12;
    EXPECT_EQ(g.covered(c), !inside_gap) << "cell " << c;
  }
}

TEST(CompositionalSupport, OrthogonalVsFullBoxPasses) {
  const SupportSpec p = SupportSpec::orthogonal(
      LatentBox::unit(2, 3), {{vec({0.25, 0.25, 0.5}), vec({0.75, 0.75, 0.5})}, {vec({0.5, 0.5, 0.5})}},
      0.02);
  const auto r = check_compositional_support(p, SupportSpec::full_box(p.box), 10, 20000, 1);
  EXPECT_TRUE(r.pass());
  EXPECT_TRUE(r.offending.empty());
}

TEST(CompositionalSupport, GapFailsOnSlotOneOnly) {
  const SupportSpec p = gapped2d();
  const auto r = check_compositional_support(p, SupportSpec::full_box(p.box), 50, 200000, 9);
  ASSERT_EQ(r.slot_pass.size(), 2U);
  EXPECT_FALSE(r.slot_pass[0]);
  EXPECT_TRUE(r.slot_pass[1]);
  std::set<std::size_t> expected;
  for (int j = 0; j < 50; ++j)
    for (int i = 7; i < 23; ++i) expected.insert(static_cast<std::size_t>(j * 50 + i));
  std::set<std::size_t> got;
  for (const auto& c : r.offending) {
    EXPECT_EQ(c.slot, 0);
    EXPECT_FALSE(c.covered_by_p);
    EXPECT_TRUE(c.covered_by_q);
    got.insert(c.cell_index);
  }
  EXPECT_EQ(got, expected);
}

TEST(CompositionalSupport, ReflexiveForEverySpec) {
  const LatentBox box = LatentBox::unit(2, 2);
  for (const auto& spec : {SupportSpec::full_box(box), ortho2d(0.02), gapped2d(),
                           SupportSpec::diagonal(box, 0.3)}) {
    EXPECT_TRUE(check_compositional_support(spec, spec, 6, 20000, 3).pass()) << to_string(spec.kind);
  }
}

TEST(CompositionalSupport, MonotoneUnderEnlargement) {
  const LatentBox box = LatentBox::unit(2, 2);
  const SupportSpec q = SupportSpec::full_box(box);
  for (double w : {0.3, 0.6, 1.0}) {
    EXPECT_TRUE(check_compositional_support(SupportSpec::diagonal(box, w), q, 6, 20000, 2).pass());
  }
  const auto narrow = SupportSpec::orthogonal(box, {{vec({0.5, 0.5})}, {vec({0.5, 0.5})}}, 0.02);
  const auto wide = SupportSpec::orthogonal(box, {{vec({0.5, 0.5})}, {vec({0.5, 0.5})}}, 0.2);
  const auto rn = check_compositional_support(narrow, q, 6, 20000, 2);
  const auto rw = check_compositional_support(wide, q, 6, 20000, 2);
  for (int k = 0; k < 2; ++k)
    if (rn.slot_pass[static_cast<std::size_t>(k)]) EXPECT_TRUE(rw.slot_pass[static_cast<std::size_t>(k)]);
}

TEST(CompositionalSupport, MismatchedShapesRejected) {
  EXPECT_THROW(check_compositional_support(SupportSpec::full_box(LatentBox::unit(2, 2)),
                                           SupportSpec::full_box(LatentBox::unit(3, 2)), 4, 100, 1),
               ValidationError);
}

TEST(SlicePoints, AnchorPlaneSlice) {
  const SupportSpec spec = ortho2d(0.02);
  const SampleSet s = sample_support(spec, 2000, 8);
  const auto slice = slice_points(s, 1, vec({0.5, 0.5}), 0.02);
  std::size_t brute = 0;
  for (const auto& z : s.points) brute += max_norm_distance(z.slot(1), vec({0.5, 0.5})) <= 0.02;
  EXPECT_EQ(slice.size(), brute);
  EXPECT_GT(slice.size(), 500U);
}

TEST(SlicePoints, ZeroToleranceIsGenericallyEmpty) {
  const SampleSet s = sample_support(SupportSpec::full_box(LatentBox::unit(2, 2)), 1000, 8);
  EXPECT_TRUE(slice_points(s, 0, vec({0.5, 0.5}), 0.0).empty());
  EXPECT_THROW(slice_points(s, 0, vec({0.5, 0.5}), -1.0), ValidationError);
}

TEST(SlicePoints, DiagonalBandSliceStaysNearCentre) {
  const SupportSpec spec = SupportSpec::diagonal(LatentBox::unit(2, 2), 0.3);
  const SampleSet s = sample_support(spec, 20000, 8);
  const auto slice = slice_points(s, 0, vec({0.5, 0.5}), 0.01);
  ASSERT_FALSE(slice.empty());
  for (const auto& z : slice) EXPECT_LE(max_norm_distance(z.slot(1), vec({0.5, 0.5})), 0.31 + 1e-12);
}

}  // namespace
}  // namespace compgen
