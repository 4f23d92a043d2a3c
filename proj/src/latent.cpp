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

#include "compgen/latent.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "compgen/common.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

constexpr double kMembershipEps = 1e-12;
constexpr int kMaxRejections = 100000;

std::string axis_name(int slot, int d) {
  std::ostringstream os;
  os << "slot " << slot << " axis " << d;
  return os.str();
}

// Max-norm distance from v to the closest anchor of a slot.
double distance_to_anchors(const Eigen::VectorXd& v,
                           const std::vector<Eigen::VectorXd>& anchors) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : anchors) best = std::min(best, max_norm_distance(v, a));
  return best;
}

bool in_gap(const SupportSpec& spec, const LatentPoint& z, double slack) {
  for (const auto& g : spec.gaps) {
    const double v = z(g.slot, g.dim);
    if (v >= g.excluded.lo + slack && v <= g.excluded.hi - slack) return true;
  }
  return false;
}

// Slab membership: slot `free_slot` unconstrained, every other slot within
// thickness of an anchor.
bool on_slab(const SupportSpec& spec, const LatentPoint& z, int free_slot,
             double slack) {
  for (int j = 0; j < z.slots(); ++j) {
    if (j == free_slot) continue;
    if (distance_to_anchors(z.slot(j), spec.anchors[static_cast<std::size_t>(j)]) >
        spec.thickness + slack + kMembershipEps) {
      return false;
    }
  }
  return true;
}

double draw_truncated_normal(RandomStream& rng, const Interval& axis,
                             double sigma) {
  const double centre = 0.5 * (axis.lo + axis.hi);
  for (int i = 0; i < kMaxRejections; ++i) {
    const double v = centre + sigma * rng.normal();
    if (axis.contains(v)) return v;
  }
  return centre;
}

LatentPoint draw_anchored(const SupportSpec& spec, RandomStream& rng) {
  const LatentBox& box = spec.box;
  LatentPoint z(box.slots(), box.dim());
  const int free_slot = static_cast<int>(rng.below(static_cast<std::uint64_t>(box.slots())));
  for (int j = 0; j < box.slots(); ++j) {
    if (j == free_slot) {
      for (int d = 0; d < box.dim(); ++d) {
        const Interval& ax = box.axis(j, d);
        if (spec.kind == SupportKind::kGaussianOrthogonal) {
          const double s = spec.sigma.size() == 1
                               ? spec.sigma[0]
                               : spec.sigma[static_cast<std::size_t>(d)];
          z(j, d) = draw_truncated_normal(rng, ax, s);
        } else {
          z(j, d) = rng.uniform(ax.lo, ax.hi);
        }
      }
      continue;
    }
    const auto& anchors = spec.anchors[static_cast<std::size_t>(j)];
    const auto& a = anchors[rng.below(anchors.size())];
    for (int d = 0; d < box.dim(); ++d) {
      const Interval& ax = box.axis(j, d);
      const double lo = std::max(ax.lo, a[d] - spec.thickness);
      const double hi = std::min(ax.hi, a[d] + spec.thickness);
      z(j, d) = spec.thickness > 0.0 ? rng.uniform(lo, hi) : a[d];
    }
  }
  return z;
}

LatentPoint draw_diagonal(const SupportSpec& spec, RandomStream& rng) {
  const LatentBox& box = spec.box;
  LatentPoint z(box.slots(), box.dim());
  // The band is a product over coordinates, so each coordinate's K-tuple is
  // drawn independently by rejection from its K-cube.
  for (int d = 0; d < box.dim(); ++d) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxRejections && !accepted; ++attempt) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (int k = 0; k < box.slots(); ++k) {
        const Interval& ax = box.axis(k, d);
        z(k, d) = rng.uniform(ax.lo, ax.hi);
        lo = std::min(lo, z(k, d));
        hi = std::max(hi, z(k, d));
      }
      accepted = hi - lo <= spec.band_width;
    }
    if (!accepted) {
      throw RuntimeFailure("diagonal band too narrow to sample on axis " +
                           std::to_string(d));
    }
  }
  return z;
}

LatentPoint draw_point(const SupportSpec& spec, RandomStream& rng) {
  switch (spec.kind) {
    case SupportKind::kFullBox: {
      LatentPoint z(spec.box.slots(), spec.box.dim());
      for (int k = 0; k < spec.box.slots(); ++k)
        for (int d = 0; d < spec.box.dim(); ++d)
          z(k, d) = rng.uniform(spec.box.axis(k, d).lo, spec.box.axis(k, d).hi);
      return z;
    }
    case SupportKind::kOrthogonalAnchors:
    case SupportKind::kGaussianOrthogonal:
      return draw_anchored(spec, rng);
    case SupportKind::kGappedOrthogonal:
      for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
        LatentPoint z = draw_anchored(spec, rng);
        if (!in_gap(spec, z, 0.0)) return z;
      }
      throw RuntimeFailure("gapped support rejected every draw");
    case SupportKind::kDiagonalBand:
      return draw_diagonal(spec, rng);
  }
  throw ValidationError("unknown support kind");
}

}  // namespace

// ---------------------------------------------------------------------------

LatentBox::LatentBox(int slots, int dim, std::vector<Interval> axes)
    : slots_(slots), dim_(dim), axes_(std::move(axes)) {
  if (slots < 1 || dim < 1) throw ValidationError("latent box needs K >= 1 and D >= 1");
  if (axes_.size() != static_cast<std::size_t>(slots * dim))
    throw ValidationError("latent box axis count does not equal K*D");
  for (int k = 0; k < slots; ++k)
    for (int d = 0; d < dim; ++d)
      if (!(axis(k, d).lo < axis(k, d).hi))
        throw ValidationError("latent box " + axis_name(k, d) + " has lo >= hi");
}

LatentBox LatentBox::unit(int slots, int dim) {
  return LatentBox(slots, dim,
                   std::vector<Interval>(static_cast<std::size_t>(std::max(slots * dim, 0)),
                                         Interval{0.0, 1.0}));
}

bool LatentBox::same_shape(const LatentBox& other) const {
  return slots_ == other.slots_ && dim_ == other.dim_;
}

bool LatentBox::operator==(const LatentBox& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t i = 0; i < axes_.size(); ++i)
    if (axes_[i].lo != other.axes_[i].lo || axes_[i].hi != other.axes_[i].hi) return false;
  return true;
}

LatentPoint::LatentPoint(int slots, int dim)
    : slots_(slots), dim_(dim), values_(Eigen::VectorXd::Zero(slots * dim)) {}

LatentPoint::LatentPoint(int slots, int dim, Eigen::VectorXd flat)
    : slots_(slots), dim_(dim), values_(std::move(flat)) {
  if (values_.size() != slots * dim)
    throw ValidationError("latent point size does not equal K*D");
}

LatentPoint LatentPoint::from_slots(const std::vector<Eigen::VectorXd>& slots) {
  if (slots.empty()) throw ValidationError("latent point needs at least one slot");
  const int dim = static_cast<int>(slots.front().size());
  LatentPoint z(static_cast<int>(slots.size()), dim);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].size() != dim) throw ValidationError("latent slots differ in dimension");
    z.set_slot(static_cast<int>(k), slots[k]);
  }
  return z;
}

void LatentPoint::set_slot(int k, const Eigen::VectorXd& value) {
  if (value.size() != dim_) throw ValidationError("slot value has wrong dimension");
  values_.segment(k * dim_, dim_) = value;
}

bool LatentPoint::operator==(const LatentPoint& other) const {
  return slots_ == other.slots_ && dim_ == other.dim_ && values_ == other.values_;
}

void check_in_box(const LatentBox& box, const LatentPoint& z) {
  if (z.slots() != box.slots() || z.dim() != box.dim())
    throw ValidationError("latent point shape does not match the latent box");
  for (int k = 0; k < box.slots(); ++k)
    for (int d = 0; d < box.dim(); ++d)
      if (!box.axis(k, d).contains(z(k, d)))
        throw ValidationError("latent " + axis_name(k, d) + " = " +
                              std::to_string(z(k, d)) + " lies outside the box");
}

std::string to_string(SupportKind kind) {
  switch (kind) {
    case SupportKind::kFullBox: return "full";
    case SupportKind::kOrthogonalAnchors: return "orthogonal";
    case SupportKind::kDiagonalBand: return "diagonal";
    case SupportKind::kGappedOrthogonal: return "gapped";
    case SupportKind::kGaussianOrthogonal: return "gaussian";
  }
  return "unknown";
}

SupportKind support_kind_from_string(const std::string& name) {
  if (name == "full") return SupportKind::kFullBox;
  if (name == "orthogonal") return SupportKind::kOrthogonalAnchors;
  if (name == "diagonal") return SupportKind::kDiagonalBand;
  if (name == "gapped") return SupportKind::kGappedOrthogonal;
  if (name == "gaussian") return SupportKind::kGaussianOrthogonal;
  throw ValidationError("unknown support kind '" + name + "'");
}

SupportSpec SupportSpec::full_box(LatentBox box) {
  SupportSpec s;
  s.kind = SupportKind::kFullBox;
  s.box = std::move(box);
  return s;
}

SupportSpec SupportSpec::orthogonal(LatentBox box,
                                    std::vector<std::vector<Eigen::VectorXd>> anchors,
                                    double thickness) {
  SupportSpec s;
  s.kind = SupportKind::kOrthogonalAnchors;
  s.box = std::move(box);
  s.anchors = std::move(anchors);
  s.thickness = thickness;
  return s;
}

SupportSpec SupportSpec::diagonal(LatentBox box, double width) {
  SupportSpec s;
  s.kind = SupportKind::kDiagonalBand;
  s.box = std::move(box);
  s.band_width = width;
  return s;
}

SupportSpec SupportSpec::gapped(LatentBox box,
                                std::vector<std::vector<Eigen::VectorXd>> anchors,
                                double thickness, std::vector<AxisGap> gaps) {
  SupportSpec s = orthogonal(std::move(box), std::move(anchors), thickness);
  s.kind = SupportKind::kGappedOrthogonal;
  s.gaps = std::move(gaps);
  return s;
}

SupportSpec SupportSpec::gaussian(LatentBox box,
                                  std::vector<std::vector<Eigen::VectorXd>> anchors,
                                  double thickness, std::vector<double> sigma) {
  SupportSpec s = orthogonal(std::move(box), std::move(anchors), thickness);
  s.kind = SupportKind::kGaussianOrthogonal;
  s.sigma = std::move(sigma);
  return s;
}

void SupportSpec::validate() const {
  if (box.slots() < 1 || box.dim() < 1) throw ValidationError("support has an empty latent box");
  if (anchored()) {
    if (anchors.size() != static_cast<std::size_t>(box.slots()))
      throw ValidationError("anchored support needs an anchor list for every slot");
    if (thickness < 0.0) throw ValidationError("slab thickness must be >= 0");
    for (int k = 0; k < box.slots(); ++k) {
      const auto& list = anchors[static_cast<std::size_t>(k)];
      if (list.empty())
        throw ValidationError("slot " + std::to_string(k) + " has no anchor");
      for (const auto& a : list) {
        if (a.size() != box.dim())
          throw ValidationError("anchor of slot " + std::to_string(k) + " has wrong dimension");
        for (int d = 0; d < box.dim(); ++d)
          if (!box.axis(k, d).contains(a[d]))
            throw ValidationError("anchor on " + axis_name(k, d) + " lies outside the box");
      }
    }
  }
  if (kind == SupportKind::kDiagonalBand && !(band_width > 0.0))
    throw ValidationError("diagonal band width must be > 0");
  if (kind == SupportKind::kGaussianOrthogonal) {
    if (sigma.size() != 1 && sigma.size() != static_cast<std::size_t>(box.dim()))
      throw ValidationError("gaussian sigma needs 1 or D entries");
    for (double s : sigma)
      if (!(s > 0.0)) throw ValidationError("gaussian sigma must be > 0");
  }
  if (kind == SupportKind::kGappedOrthogonal) {
    for (const auto& g : gaps) {
      if (g.slot < 0 || g.slot >= box.slots() || g.dim < 0 || g.dim >= box.dim())
        throw ValidationError("gap refers to a non-existent axis");
      const Interval& ax = box.axis(g.slot, g.dim);
      const std::string name = axis_name(g.slot, g.dim);
      if (!(g.excluded.lo < g.excluded.hi))
        throw ValidationError("gap on " + name + " has lo >= hi");
      if (g.excluded.lo <= ax.lo && g.excluded.hi >= ax.hi)
        throw ValidationError("gap on " + name + " removes the whole axis");
    }
    // Union of the gaps on one axis must leave part of the axis, and every
    // anchor slab must keep part of its extent.
    for (int k = 0; k < box.slots(); ++k) {
      for (int d = 0; d < box.dim(); ++d) {
        std::vector<Interval> cut;
        for (const auto& g : gaps)
          if (g.slot == k && g.dim == d) cut.push_back(g.excluded);
        if (cut.empty()) continue;
        std::sort(cut.begin(), cut.end(),
                  [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        auto left_open = [&](double lo, double hi) {
          // True if [lo, hi] keeps a piece outside every gap.
          double cursor = lo;
          for (const auto& c : cut) {
            if (c.lo > cursor) return true;
            cursor = std::max(cursor, c.hi);
            if (cursor >= hi) return false;
          }
          return cursor < hi;
        };
        const Interval& ax = box.axis(k, d);
        if (!left_open(ax.lo, ax.hi))
          throw ValidationError("gaps on " + axis_name(k, d) + " leave an empty support");
        bool any_slab = false;
        for (const auto& a : anchors[static_cast<std::size_t>(k)]) {
          const double lo = std::max(ax.lo, a[d] - thickness);
          const double hi = std::min(ax.hi, a[d] + thickness);
          if (lo == hi) {
            bool inside = false;
            for (const auto& c : cut) inside = inside || c.contains(lo);
            any_slab = any_slab || !inside;
          } else {
            any_slab = any_slab || left_open(lo, hi);
          }
        }
        if (!any_slab)
          throw ValidationError("gaps on " + axis_name(k, d) +
                                " swallow every anchor slab of the slot");
      }
    }
  }
}

bool contains(const SupportSpec& spec, const LatentPoint& z, double slack) {
  const LatentBox& box = spec.box;
  if (z.slots() != box.slots() || z.dim() != box.dim()) return false;
  for (int k = 0; k < box.slots(); ++k)
    for (int d = 0; d < box.dim(); ++d) {
      const Interval& ax = box.axis(k, d);
      if (z(k, d) < ax.lo - kMembershipEps || z(k, d) > ax.hi + kMembershipEps) return false;
    }
  switch (spec.kind) {
    case SupportKind::kFullBox:
      return true;
    case SupportKind::kDiagonalBand:
      for (int d = 0; d < box.dim(); ++d) {
        double lo = z(0, d), hi = z(0, d);
        for (int k = 1; k < box.slots(); ++k) {
          lo = std::min(lo, z(k, d));
          hi = std::max(hi, z(k, d));
        }
        if (hi - lo > spec.band_width + slack + kMembershipEps) return false;
      }
      return true;
    case SupportKind::kGappedOrthogonal:
      if (in_gap(spec, z, slack)) return false;
      [[fallthrough]];
    case SupportKind::kOrthogonalAnchors:
    case SupportKind::kGaussianOrthogonal:
      for (int k = 0; k < box.slots(); ++k)
        if (on_slab(spec, z, k, slack)) return true;
      return false;
  }
  return false;
}

SampleSet sample_support(const SupportSpec& spec, std::size_t n,
                         std::uint64_t seed, int jobs) {
  if (n < 1) throw ValidationError("sample_support needs n >= 1");
  spec.validate();
  SampleSet out;
  out.seed = seed;
  out.spec = spec;
  out.points.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    RandomStream rng(seed, i);
    out.points[i] = draw_point(spec, rng);
  });
  return out;
}

// ---------------------------------------------------------------------------

std::size_t CoverageGrid::covered_count() const {
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
}

std::size_t CoverageGrid::cell_of(const Eigen::VectorXd& v) const {
  std::size_t cell = 0;
  std::size_t stride = 1;
  for (int d = 0; d < dim(); ++d) {
    const Interval& ax = axes[static_cast<std::size_t>(d)];
    long i = static_cast<long>(std::floor((v[d] - ax.lo) / ax.width() * resolution));
    i = std::clamp(i, 0L, static_cast<long>(resolution - 1));
    cell += static_cast<std::size_t>(i) * stride;
    stride *= static_cast<std::size_t>(resolution);
  }
  return cell;
}

std::vector<int> CoverageGrid::cell_indices(std::size_t cell) const {
  std::vector<int> idx(static_cast<std::size_t>(dim()));
  for (int d = 0; d < dim(); ++d) {
    idx[static_cast<std::size_t>(d)] = static_cast<int>(cell % static_cast<std::size_t>(resolution));
    cell /= static_cast<std::size_t>(resolution);
  }
  return idx;
}

std::vector<Interval> CoverageGrid::cell_bounds(std::size_t cell) const {
  const auto idx = cell_indices(cell);
  std::vector<Interval> b(idx.size());
  for (std::size_t d = 0; d < idx.size(); ++d) {
    const double w = axes[d].width() / resolution;
    b[d] = {axes[d].lo + w * idx[d], axes[d].lo + w * (idx[d] + 1)};
  }
  return b;
}

Eigen::VectorXd CoverageGrid::cell_center(std::size_t cell) const {
  const auto b = cell_bounds(cell);
  Eigen::VectorXd c(static_cast<Eigen::Index>(b.size()));
  for (std::size_t d = 0; d < b.size(); ++d) c[static_cast<Eigen::Index>(d)] = 0.5 * (b[d].lo + b[d].hi);
  return c;
}

void CoverageGrid::write_csv(std::ostream& out) const {
  out << "slot,cell_index";
  for (int d = 0; d < dim(); ++d) out << ",lo_" << d;
  for (int d = 0; d < dim(); ++d) out << ",hi_" << d;
  out << ",count\n";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto b = cell_bounds(c);
    out << slot << ',' << c;
    for (const auto& iv : b) out << ',' << iv.lo;
    for (const auto& iv : b) out << ',' << iv.hi;
    out << ',' << counts[c] << '\n';
  }
}

CoverageGrid marginal_coverage(const SampleSet& samples, int k, int resolution) {
  if (samples.empty()) throw ValidationError("marginal_coverage on an empty sample set");
  if (resolution < 2) throw ValidationError("coverage resolution must be >= 2");
  const LatentBox& box = samples.spec.box;
  if (k < 0 || k >= box.slots()) throw ValidationError("slot index out of range");
  CoverageGrid grid;
  grid.slot = k;
  grid.resolution = resolution;
  for (int d = 0; d < box.dim(); ++d) grid.axes.push_back(box.axis(k, d));
  std::size_t cells = 1;
  for (int d = 0; d < box.dim(); ++d) cells *= static_cast<std::size_t>(resolution);
  grid.counts.assign(cells, 0);
  for (const auto& z : samples.points) ++grid.counts[grid.cell_of(z.slot(k))];
  return grid;
}

bool CompositionalSupportReport::pass() const {
  return std::all_of(slot_pass.begin(), slot_pass.end(), [](bool b) { return b; });
}

CompositionalSupportReport check_compositional_support(
    const SupportSpec& p, const SupportSpec& q, int resolution,
    std::size_t n_probe, std::uint64_t seed) {
  if (!p.box.same_shape(q.box))
    throw ValidationError("supports differ in slot count K or slot dimension D");
  if (!(p.box == q.box)) throw ValidationError("supports are defined over different boxes");
  const SampleSet ps = sample_support(p, n_probe, derive_seed(seed, 1));
  const SampleSet qs = sample_support(q, n_probe, derive_seed(seed, 2));
  CompositionalSupportReport report;
  for (int k = 0; k < p.box.slots(); ++k) {
    const CoverageGrid gp = marginal_coverage(ps, k, resolution);
    const CoverageGrid gq = marginal_coverage(qs, k, resolution);
    bool pass = true;
    for (std::size_t c = 0; c < gp.cell_count(); ++c) {
      if (gp.covered(c) == gq.covered(c)) continue;
      pass = false;
      report.offending.push_back({k, c, gp.cell_bounds(c), gp.covered(c), gq.covered(c)});
    }
    report.slot_pass.push_back(pass);
  }
  return report;
}

std::vector<LatentPoint> slice_points(const SampleSet& samples, int k,
                                      const Eigen::VectorXd& z_k_star, double tol) {
  if (tol < 0.0) throw ValidationError("slice tolerance must be >= 0");
  std::vector<LatentPoint> out;
  for (const auto& z : samples.points)
    if (max_norm_distance(z.slot(k), z_k_star) <= tol) out.push_back(z);
  return out;
}

double max_norm_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace compgen
