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

// Latent spaces, support specifications and their samplers, and the
// marginal-coverage test for compositional support.
//
// A latent point has K slots of D coordinates each. All coordinates live in
// a LatentBox. Support kinds:
//   FullBox             uniform over the whole box.
//   OrthogonalAnchors   union over slots k of slabs in which slot k is free
//                       and every other slot sits within max-norm
//                       `thickness` of one of its anchors.
//   GappedOrthogonal    OrthogonalAnchors minus per-axis excluded intervals.
//   GaussianOrthogonal  OrthogonalAnchors support; the free slot follows a
//                       box-truncated normal centred on the box (per-axis
//                       sigma) instead of a uniform.
//   DiagonalBand        all slots pairwise within max-norm `band_width`,
//                       coordinate by coordinate.

#ifndef COMPGEN_LATENT_HPP_
#define COMPGEN_LATENT_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace compgen {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

class LatentBox {
 public:
  LatentBox() = default;
  LatentBox(int slots, int dim, std::vector<Interval> axes);

  // [0, 1]^(slots * dim).
  static LatentBox unit(int slots, int dim);

  int slots() const { return slots_; }
  int dim() const { return dim_; }
  int size() const { return slots_ * dim_; }

  const Interval& axis(int slot, int d) const {
    return axes_[static_cast<std::size_t>(slot * dim_ + d)];
  }
  const std::vector<Interval>& axes() const { return axes_; }

  bool same_shape(const LatentBox& other) const;
  bool operator==(const LatentBox& other) const;

 private:
  int slots_ = 0;
  int dim_ = 0;
  std::vector<Interval> axes_;
};

// K slots of D coordinates; stored flat, slot-major.
class LatentPoint {
 public:
  LatentPoint() = default;
  LatentPoint(int slots, int dim);
  LatentPoint(int slots, int dim, Eigen::VectorXd flat);
  static LatentPoint from_slots(const std::vector<Eigen::VectorXd>& slots);

  int slots() const { return slots_; }
  int dim() const { return dim_; }

  const Eigen::VectorXd& flat() const { return values_; }
  Eigen::VectorXd& flat() { return values_; }

  double operator()(int slot, int d) const { return values_[slot * dim_ + d]; }
  double& operator()(int slot, int d) { return values_[slot * dim_ + d]; }

  Eigen::VectorXd slot(int k) const { return values_.segment(k * dim_, dim_); }
  void set_slot(int k, const Eigen::VectorXd& value);

  bool operator==(const LatentPoint& other) const;

 private:
  int slots_ = 0;
  int dim_ = 0;
  Eigen::VectorXd values_;
};

// Throws ValidationError naming the first offending axis.
void check_in_box(const LatentBox& box, const LatentPoint& z);

enum class SupportKind {
  kFullBox,
  kOrthogonalAnchors,
  kDiagonalBand,
  kGappedOrthogonal,
  kGaussianOrthogonal,
};

std::string to_string(SupportKind kind);
SupportKind support_kind_from_string(const std::string& name);

struct AxisGap {
  int slot = 0;
  int dim = 0;
  Interval excluded;
};

struct SupportSpec {
  SupportKind kind = SupportKind::kFullBox;
  LatentBox box;
  // anchors[k] lists the anchor values of slot k (OrthogonalAnchors family).
  std::vector<std::vector<Eigen::VectorXd>> anchors;
  double thickness = 0.02;
  double band_width = 0.1;
  std::vector<AxisGap> gaps;
  // Per-axis standard deviation for GaussianOrthogonal; one entry is
  // broadcast to all D axes.
  std::vector<double> sigma = {0.2};

  static SupportSpec full_box(LatentBox box);
  static SupportSpec orthogonal(LatentBox box,
                                std::vector<std::vector<Eigen::VectorXd>> anchors,
                                double thickness);
  static SupportSpec diagonal(LatentBox box, double width);
  static SupportSpec gapped(LatentBox box,
                            std::vector<std::vector<Eigen::VectorXd>> anchors,
                            double thickness, std::vector<AxisGap> gaps);
  static SupportSpec gaussian(LatentBox box,
                              std::vector<std::vector<Eigen::VectorXd>> anchors,
                              double thickness, std::vector<double> sigma);

  bool anchored() const {
    return kind == SupportKind::kOrthogonalAnchors ||
           kind == SupportKind::kGappedOrthogonal ||
           kind == SupportKind::kGaussianOrthogonal;
  }

  // Throws ValidationError with a diagnostic naming the offending axis.
  void validate() const;
};

// Membership predicate for supp(spec). `slack` widens every tolerance
// (slab thickness, band width) and shrinks gaps by the same amount.
bool contains(const SupportSpec& spec, const LatentPoint& z, double slack = 0.0);

struct SampleSet {
  std::vector<LatentPoint> points;
  std::uint64_t seed = 0;
  SupportSpec spec;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Point i is drawn from counter stream (seed, i), so the result does not
// depend on the number of worker threads.
SampleSet sample_support(const SupportSpec& spec, std::size_t n,
                         std::uint64_t seed, int jobs = 1);

struct CoverageGrid {
  int slot = 0;
  int resolution = 0;
  std::vector<Interval> axes;  // marginal box of the slot, D entries
  std::vector<std::uint64_t> counts;  // resolution^D, axis 0 fastest

  int dim() const { return static_cast<int>(axes.size()); }
  std::size_t cell_count() const { return counts.size(); }
  bool covered(std::size_t cell) const { return counts[cell] > 0; }
  std::size_t covered_count() const;
  // Cell containing v: half-open [lo, hi) except the last cell on each axis.
  std::size_t cell_of(const Eigen::VectorXd& v) const;
  std::vector<int> cell_indices(std::size_t cell) const;
  std::vector<Interval> cell_bounds(std::size_t cell) const;
  Eigen::VectorXd cell_center(std::size_t cell) const;

  // Columns: slot,cell_index,lo_0..lo_{D-1},hi_0..hi_{D-1},count
  void write_csv(std::ostream& out) const;
};

CoverageGrid marginal_coverage(const SampleSet& samples, int k, int resolution);

struct OffendingCell {
  int slot = 0;
  std::size_t cell_index = 0;
  std::vector<Interval> bounds;
  bool covered_by_p = false;
  bool covered_by_q = false;
};

struct CompositionalSupportReport {
  std::vector<bool> slot_pass;
  std::vector<OffendingCell> offending;
  bool pass() const;
};

// Compares the covered-cell sets of the per-slot marginals of n_probe
// samples from p and from q.
CompositionalSupportReport check_compositional_support(
    const SupportSpec& p, const SupportSpec& q, int resolution,
    std::size_t n_probe, std::uint64_t seed);

// Points whose slot k lies within max-norm `tol` of z_k_star.
std::vector<LatentPoint> slice_points(const SampleSet& samples, int k,
                                      const Eigen::VectorXd& z_k_star,
                                      double tol);

double max_norm_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace compgen

#endif  // COMPGEN_LATENT_HPP_
