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

#include "compgen/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace compgen {
namespace {

constexpr double kCoordEps = 1e-12;

void sort_unique(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || std::abs(x - out.back()) > kCoordEps) out.push_back(x);
  v = std::move(out);
}

int locate(const std::vector<double>& axis, double v) {
  for (std::size_t i = 0; i < axis.size(); ++i)
    if (std::abs(axis[i] - v) <= kCoordEps) return static_cast<int>(i);
  return -1;
}

// Steps of at most `step` that land exactly on b.
int step_count(double a, double b, double step) {
  const double n = std::ceil(std::abs(b - a) / step - 1e-9);
  return std::max(1, static_cast<int>(n));
}

LatentPoint with_slot(const LatentPoint& base, int k, const Eigen::VectorXd& zk) {
  LatentPoint z = base;
  z.set_slot(k, zk);
  return z;
}

// Whether the whole segment (endpoints and RK midpoints) stays in support.
bool segment_in_support(const SupportSpec& support, const LatentPoint& base, int k, int axis,
                        double a, double b, double step) {
  const int n = step_count(a, b, step);
  const double dt = (b - a) / n;
  LatentPoint z = base;
  for (int i = 0; i < 2 * n; ++i) {
    z(k, axis) = a + 0.5 * dt * (i + 1);
    if (!contains(support, z)) return false;
  }
  return true;
}

}  // namespace

TeacherOracle teacher_from_model(const CompositionalModel& model) {
  model.validate();
  TeacherOracle t;
  t.box = model.latent_box;
  t.evaluate = [model](const LatentPoint& z) { return evaluate(model, z); };
  return t;
}

ComponentJacobianSolution solve_component_jacobian(const std::vector<JacobianEstimate>& df_list,
                                                   const std::vector<JacobianEstimate>& dc_list,
                                                   double tau) {
  if (df_list.empty() || df_list.size() != dc_list.size())
    throw ValidationError("df and dC lists must be non-empty and of equal length");
  const Eigen::Index n = dc_list.front().matrix.rows();
  const Eigen::Index m = dc_list.front().matrix.cols();
  const Eigen::Index d = df_list.front().matrix.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, d);
  bool analytic = true;
  for (std::size_t i = 0; i < dc_list.size(); ++i) {
    const auto& dc = dc_list[i].matrix;
    const auto& df = df_list[i].matrix;
    if (dc.rows() != n || dc.cols() != m) throw ValidationError("dC shapes differ across P'");
    if (df.rows() != n || df.cols() != d) throw ValidationError("df shapes differ across P'");
    a += dc;
    b += df;
    analytic = analytic && dc_list[i].method == JacobianMethod::kAnalyticOracle;
  }
  if (tau < 0.0) tau = analytic ? 1e-8 : 1e-3;
  const Eigen::MatrixXd gram = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw RuntimeFailure("eigendecomposition of sum dC^T sum dC failed");
  std::vector<double> sv(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) sv[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, eig.eigenvalues()[i]));
  ComponentJacobianSolution sol;
  sol.rank = rank_from_singular_values(sv, tau, static_cast<int>(m));
  if (!sol.rank.full_rank()) {
    std::ostringstream msg;
    msg << "sum of composition Jacobians has rank " << sol.rank.numerical_rank << " < M = " << m;
    throw RankDeficiencyError(msg.str(), sol.rank, df_list.front().base);
  }
  const Eigen::VectorXd inv = eig.eigenvalues().cwiseInverse();
  sol.jacobian = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() *
                 (a.transpose() * b);
  sol.residual = (a * sol.jacobian - b).norm();
  return sol;
}

std::size_t SlotGrid::node_count() const {
  std::size_t n = 1;
  for (const auto& a : axis_nodes) n *= a.size();
  return n;
}

std::vector<int> SlotGrid::node_indices(std::size_t node) const {
  std::vector<int> idx(axis_nodes.size());
  for (std::size_t a = 0; a < axis_nodes.size(); ++a) {
    idx[a] = static_cast<int>(node % axis_nodes[a].size());
    node /= axis_nodes[a].size();
  }
  return idx;
}

Eigen::VectorXd SlotGrid::node_point(std::size_t node) const {
  const auto idx = node_indices(node);
  Eigen::VectorXd v(dim());
  for (int a = 0; a < dim(); ++a) v[a] = axis_nodes[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
  return v;
}

SlotGrid regular_slot_grid(const LatentBox& box, int k, int nodes_per_axis) {
  if (nodes_per_axis < 2) throw ValidationError("a reconstruction grid needs >= 2 nodes per axis");
  if (k < 0 || k >= box.slots()) throw ValidationError("slot index out of range");
  SlotGrid g;
  for (int d = 0; d < box.dim(); ++d) {
    const Interval& ax = box.axis(k, d);
    std::vector<double> nodes(static_cast<std::size_t>(nodes_per_axis));
    for (int i = 0; i < nodes_per_axis; ++i)
      nodes[static_cast<std::size_t>(i)] = ax.lo + ax.width() * i / (nodes_per_axis - 1);
    g.axis_nodes.push_back(std::move(nodes));
  }
  return g;
}

std::vector<SlotGrid> regular_grids(const LatentBox& box, int nodes_per_axis) {
  std::vector<SlotGrid> out;
  for (int k = 0; k < box.slots(); ++k) out.push_back(regular_slot_grid(box, k, nodes_per_axis));
  return out;
}

std::size_t SlotPlan::lattice_index(const std::vector<int>& idx) const {
  std::size_t index = 0, stride = 1;
  for (std::size_t a = 0; a < lattice.size(); ++a) {
    index += stride * static_cast<std::size_t>(idx[a]);
    stride *= lattice[a].size();
  }
  return index;
}

std::vector<int> SlotPlan::lattice_indices(std::size_t index) const {
  std::vector<int> idx(lattice.size());
  for (std::size_t a = 0; a < lattice.size(); ++a) {
    idx[a] = static_cast<int>(index % lattice[a].size());
    index /= lattice[a].size();
  }
  return idx;
}

Eigen::VectorXd SlotPlan::lattice_point(std::size_t index) const {
  const auto idx = lattice_indices(index);
  Eigen::VectorXd v(static_cast<Eigen::Index>(lattice.size()));
  for (std::size_t a = 0; a < lattice.size(); ++a) v[static_cast<Eigen::Index>(a)] = lattice[a][static_cast<std::size_t>(idx[a])];
  return v;
}

std::size_t SlotPlan::find(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != lattice.size()) return npos;
  std::vector<int> idx(lattice.size());
  for (std::size_t a = 0; a < lattice.size(); ++a) {
    idx[a] = locate(lattice[a], v[static_cast<Eigen::Index>(a)]);
    if (idx[a] < 0) return npos;
  }
  return lattice_index(idx);
}

std::size_t PathPlan::unreachable_count() const {
  std::size_t n = 0;
  for (const auto& u : unreachable_nodes) n += u.size();
  return n;
}

LatentPoint auto_initial_point(const SupportSpec& support) {
  const LatentBox& box = support.box;
  LatentPoint p0(box.slots(), box.dim());
  for (int k = 0; k < box.slots(); ++k) {
    if (support.anchored() && static_cast<std::size_t>(k) < support.anchors.size() &&
        !support.anchors[static_cast<std::size_t>(k)].empty()) {
      p0.set_slot(k, support.anchors[static_cast<std::size_t>(k)].front());
    } else {
      for (int d = 0; d < box.dim(); ++d) {
        const Interval& ax = box.axis(k, d);
        p0(k, d) = 0.5 * (ax.lo + ax.hi);
      }
    }
  }
  return p0;
}

PathPlan plan_paths(const SupportSpec& support, const std::vector<SlotGrid>& q_grid,
                    std::optional<LatentPoint> p0_opt, const PlanOptions& options) {
  support.validate();
  const LatentBox& box = support.box;
  const int slots = box.slots();
  const int dim = box.dim();
  if (static_cast<int>(q_grid.size()) != slots) throw ValidationError("q_grid needs one grid per slot");
  if (!(options.step > 0.0)) throw ValidationError("integration step must be positive");
  PathPlan plan;
  plan.step = options.step;
  plan.support = support;
  plan.q_grid = q_grid;
  plan.p0 = p0_opt ? *p0_opt : auto_initial_point(support);
  check_in_box(box, plan.p0);
  if (!contains(support, plan.p0)) throw ValidationError("initial point p0 lies outside supp P");
  for (int k = 0; k < slots; ++k) plan.slot_order.push_back(k);
  plan.slots.resize(static_cast<std::size_t>(slots));
  plan.unreachable_nodes.resize(static_cast<std::size_t>(slots));
  for (int k = 0; k < slots; ++k) {
    const SlotGrid& grid = q_grid[static_cast<std::size_t>(k)];
    if (grid.dim() != dim) throw ValidationError("q_grid dimension does not match the box");
    for (int d = 0; d < dim; ++d)
      for (double v : grid.axis_nodes[static_cast<std::size_t>(d)])
        if (!box.axis(k, d).contains(v))
          throw ValidationError("q_grid node outside the latent box on slot " + std::to_string(k) +
                                " axis " + std::to_string(d));
    SlotPlan& sp = plan.slots[static_cast<std::size_t>(k)];
    sp.slot = k;
    if (static_cast<std::size_t>(k) < options.axis_orders.size() &&
        !options.axis_orders[static_cast<std::size_t>(k)].empty()) {
      sp.axis_order = options.axis_orders[static_cast<std::size_t>(k)];
      std::vector<int> check = sp.axis_order;
      std::sort(check.begin(), check.end());
      for (int d = 0; d < dim; ++d)
        if (static_cast<int>(check.size()) != dim || check[static_cast<std::size_t>(d)] != d)
          throw ValidationError("axis order of slot " + std::to_string(k) + " is not a permutation");
    } else {
      for (int d = 0; d < dim; ++d) sp.axis_order.push_back(d);
    }
    if (support.anchored())
      sp.extra_targets = support.anchors[static_cast<std::size_t>(k)];
    sp.lattice.resize(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      auto& axis = sp.lattice[static_cast<std::size_t>(d)];
      axis = grid.axis_nodes[static_cast<std::size_t>(d)];
      axis.push_back(plan.p0(k, d));
      for (const auto& t : sp.extra_targets) axis.push_back(t[d]);
      sort_unique(axis);
    }
    std::size_t size = 1;
    for (const auto& axis : sp.lattice) size *= axis.size();
    sp.reachable.assign(size, 0);

    std::vector<int> start(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) start[static_cast<std::size_t>(d)] = locate(sp.lattice[static_cast<std::size_t>(d)], plan.p0(k, d));
    std::vector<std::size_t> frontier = {sp.lattice_index(start)};
    sp.reachable[frontier.front()] = 1;
    for (int axis : sp.axis_order) {
      const auto& values = sp.lattice[static_cast<std::size_t>(axis)];
      std::vector<std::size_t> next;
      for (std::size_t origin : frontier) {
        next.push_back(origin);
        auto idx = sp.lattice_indices(origin);
        const int i0 = idx[static_cast<std::size_t>(axis)];
        const LatentPoint base = with_slot(plan.p0, k, sp.lattice_point(origin));
        for (int dir : {+1, -1}) {
          for (int i = i0; i + dir >= 0 && i + dir < static_cast<int>(values.size()); i += dir) {
            if (!segment_in_support(support, base, k, axis, values[static_cast<std::size_t>(i)],
                                    values[static_cast<std::size_t>(i + dir)], plan.step))
              break;
            idx[static_cast<std::size_t>(axis)] = i + dir;
            const std::size_t li = sp.lattice_index(idx);
            sp.reachable[li] = 1;
            next.push_back(li);
          }
        }
      }
      frontier = std::move(next);
    }
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
      const std::size_t li = sp.find(grid.node_point(node));
      if (li == SlotPlan::npos || !sp.reachable[li]) plan.unreachable_nodes[static_cast<std::size_t>(k)].push_back(node);
    }
  }
  return plan;
}

namespace {

struct Context {
  LatentPoint point;                     // slot k entry is overwritten per stage
  std::vector<ComponentCanvas> canvases;  // slot k entry is overwritten per stage
};

struct SlotState {
  Eigen::MatrixXd values;  // M x lattice size
  std::vector<char> done;
};

struct Rhs {
  const TeacherOracle* teacher;
  CompositionKind composition;
  const SupportSpec* support;
  const std::vector<Context>* contexts;
  int k;
  int axis;
  const IntegrationOptions* options;
  int max_contexts;
  const SliceContextSource* slices;

  std::vector<Context> slice_contexts(const Eigen::VectorXd& zk, int budget) const {
    std::vector<Context> out;
    if (!slices || !slices->samples || budget <= 0) return out;
    std::vector<LatentPoint> pts = slice_points(*slices->samples, k, zk, options->slice_tol);
    const std::size_t stride = std::max<std::size_t>(1, pts.size() / static_cast<std::size_t>(budget));
    for (std::size_t i = 0; i < pts.size() && static_cast<int>(out.size()) < budget; i += stride) {
      LatentPoint z = with_slot(pts[i], k, zk);
      if (!contains(*support, z)) continue;
      Context ctx;
      ctx.point = z;
      for (int j = 0; j < z.slots(); ++j)
        ctx.canvases.push_back(j == k ? ComponentCanvas{}
                                      : render_component(slices->families[static_cast<std::size_t>(j)], z.slot(j)));
      out.push_back(std::move(ctx));
    }
    return out;
  }

  // d phi_k / d z_{k,axis} at slot latent zk with running estimate y.
  Eigen::VectorXd operator()(const Eigen::VectorXd& zk, const Eigen::VectorXd& y) const {
    const LatentBox& box = teacher->box;
    const double h = options->h;
    const CanvasLayout sum_dc_layout = (*contexts).front().canvases[static_cast<std::size_t>(k)].layout;
    BlockJacobian sum_dc;
    Eigen::VectorXd sum_df;
    int used = 0;
    std::vector<const Context*> set;
    for (const Context& ctx : *contexts) set.push_back(&ctx);
    const std::vector<Context> extra =
        slices ? slice_contexts(zk, max_contexts - static_cast<int>(set.size())) : std::vector<Context>{};
    for (const Context& ctx : extra) set.push_back(&ctx);
    for (const Context* ctx_ptr : set) {
      const Context& ctx = *ctx_ptr;
      if (used >= max_contexts) break;
      LatentPoint z = with_slot(ctx.point, k, zk);
      if (!contains(*support, z)) continue;
      std::vector<ComponentCanvas> canvases = ctx.canvases;
      canvases[static_cast<std::size_t>(k)] = ComponentCanvas{sum_dc_layout, y};
      BlockJacobian dc = composition_blocks(composition, canvases, k, 0.0, JacobianMethod::kAnalyticOracle);
      const Interval& ax = box.axis(k, axis);
      const double c = std::clamp(zk[axis], ax.lo + h, ax.hi - h);
      z(k, axis) = c + h;
      const Eigen::VectorXd plus = teacher->evaluate(z).values;
      z(k, axis) = c - h;
      const Eigen::VectorXd minus = teacher->evaluate(z).values;
      const Eigen::VectorXd df = (plus - minus) / (2.0 * h);
      if (used == 0) {
        sum_dc = std::move(dc);
        sum_df = df;
      } else {
        sum_dc += dc;
        sum_df += df;
      }
      ++used;
    }
    if (used == 0) throw RuntimeFailure("empty superposition set on an in-support path");
    const RankReport rank = sum_dc.rank(options->tau);
    if (!rank.full_rank()) {
      std::ostringstream msg;
      msg << "sum of composition Jacobians over " << used << " configurations has rank "
          << rank.numerical_rank << " < M = " << rank.target << " on slot " << k;
      LatentPoint where = with_slot((*contexts).front().point, k, zk);
      throw RankDeficiencyError(msg.str(), rank, where);
    }
    const CanvasLayout& layout = sum_dc.canvas;
    const int plane = layout.pixels();
    const int cin = layout.channels;
    const int cout = sum_dc.out_channels;
    Eigen::VectorXd out(layout.size());
    Eigen::VectorXd b(cout);
    for (int p = 0; p < plane; ++p) {
      const Eigen::MatrixXd& a = sum_dc.blocks[static_cast<std::size_t>(p)];
      for (int o = 0; o < cout; ++o) b[o] = sum_df[o * plane + p];
      const Eigen::VectorXd x = (a.transpose() * a).ldlt().solve(a.transpose() * b);
      for (int c = 0; c < cin; ++c) out[c * plane + p] = x[c];
    }
    return out;
  }
};

std::vector<Context> build_contexts(const PathPlan& plan, int k,
                                    const std::vector<SlotState>& states,
                                    const std::vector<char>& slot_done,
                                    const std::vector<ComponentCanvas>& phi0,
                                    CompositionKind composition, int max_contexts) {
  const int slots = plan.p0.slots();
  // Candidate (latent, canvas) values for every other slot.
  std::vector<std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>> options(static_cast<std::size_t>(slots));
  for (int j = 0; j < slots; ++j) {
    auto& opt = options[static_cast<std::size_t>(j)];
    opt.emplace_back(plan.p0.slot(j), phi0[static_cast<std::size_t>(j)].values);
    if (j == k || !slot_done[static_cast<std::size_t>(j)] || composition == CompositionKind::kSum) continue;
    const SlotPlan& sp = plan.slots[static_cast<std::size_t>(j)];
    const SlotState& st = states[static_cast<std::size_t>(j)];
    for (const auto& t : sp.extra_targets) {
      if ((t - plan.p0.slot(j)).cwiseAbs().maxCoeff() <= kCoordEps) continue;
      const std::size_t li = sp.find(t);
      if (li == SlotPlan::npos || !st.done[li]) continue;
      opt.emplace_back(t, st.values.col(static_cast<Eigen::Index>(li)));
    }
  }
  std::vector<Context> out;
  std::vector<std::size_t> idx(static_cast<std::size_t>(slots), 0);
  while (static_cast<int>(out.size()) < max_contexts) {
    Context ctx;
    ctx.point = plan.p0;
    ctx.canvases = phi0;
    for (int j = 0; j < slots; ++j) {
      if (j == k) continue;
      const auto& o = options[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
      ctx.point.set_slot(j, o.first);
      ctx.canvases[static_cast<std::size_t>(j)].values = o.second;
    }
    out.push_back(std::move(ctx));
    int j = 0;
    for (; j < slots; ++j) {
      if (j == k) continue;
      auto& i = idx[static_cast<std::size_t>(j)];
      if (++i < options[static_cast<std::size_t>(j)].size()) break;
      i = 0;
    }
    if (j == slots) break;
  }
  return out;
}

}  // namespace

GridField integrate_component(const TeacherOracle& teacher, CompositionKind composition,
                              const PathPlan& plan, const std::vector<ComponentCanvas>& phi0,
                              const IntegrationOptions& options,
                              const SliceContextSource* slices) {
  const int slots = plan.p0.slots();
  if (slices && slices->samples && static_cast<int>(slices->families.size()) != slots)
    throw ValidationError("slice context source needs one family per slot");
  if (!teacher.evaluate) throw ValidationError("teacher oracle has no evaluation function");
  if (!teacher.box.same_shape(plan.support.box)) throw ValidationError("teacher box does not match the plan");
  if (static_cast<int>(phi0.size()) != slots) throw ValidationError("phi0 needs one canvas per slot");
  if (!(options.h > 0.0)) throw ValidationError("finite-difference step h must be positive");
  if (options.max_contexts < 1) throw ValidationError("max_contexts must be >= 1");
  const CanvasLayout layout = phi0.front().layout;
  for (const auto& c : phi0)
    if (!(c.layout == layout) || c.values.size() != layout.size())
      throw ValidationError("phi0 canvases must share one layout");
  if (output_channels(composition, layout.channels) * layout.pixels() <
      layout.size())
    throw RankDeficiencyError("observation dimension N is smaller than canvas dimension M; "
                              "no superposition set can reach rank M",
                              RankReport{{}, 0, options.tau, 0.0, layout.size()}, plan.p0);
  {
    const Observation f0 = teacher.evaluate(plan.p0);
    if (f0.values.size() != output_channels(composition, layout.channels) * layout.pixels())
      throw ValidationError("teacher observation size does not match the composition of phi0");
  }
  const int m = layout.size();
  std::vector<SlotState> states(static_cast<std::size_t>(slots));
  std::vector<char> slot_done(static_cast<std::size_t>(slots), 0);
  const int max_contexts = composition == CompositionKind::kSum ? 1 : options.max_contexts;

  for (int k : plan.slot_order) {
    const SlotPlan& sp = plan.slots[static_cast<std::size_t>(k)];
    SlotState& st = states[static_cast<std::size_t>(k)];
    st.values = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(sp.lattice_size()));
    st.done.assign(sp.lattice_size(), 0);
    const std::vector<Context> contexts =
        build_contexts(plan, k, states, slot_done, phi0, composition, max_contexts);
    std::vector<int> start(sp.lattice.size());
    for (std::size_t d = 0; d < sp.lattice.size(); ++d)
      start[d] = locate(sp.lattice[d], plan.p0(k, static_cast<int>(d)));
    const std::size_t origin0 = sp.lattice_index(start);
    st.values.col(static_cast<Eigen::Index>(origin0)) = phi0[static_cast<std::size_t>(k)].values;
    st.done[origin0] = 1;
    std::vector<std::size_t> frontier = {origin0};
    for (int axis : sp.axis_order) {
      const auto& values = sp.lattice[static_cast<std::size_t>(axis)];
      const Rhs rhs{&teacher, composition, &plan.support, &contexts, k, axis, &options, max_contexts,
                    composition == CompositionKind::kSum ? nullptr : slices};
      // Each origin owns the line it sweeps, so workers never share a node.
      std::vector<std::vector<std::size_t>> reached(frontier.size());
      parallel_for(frontier.size(), options.jobs, [&](std::size_t f) {
        const std::size_t origin = frontier[f];
        auto idx = sp.lattice_indices(origin);
        const int i0 = idx[static_cast<std::size_t>(axis)];
        for (int dir : {+1, -1}) {
          Eigen::VectorXd zk = sp.lattice_point(origin);
          Eigen::VectorXd y = st.values.col(static_cast<Eigen::Index>(origin));
          for (int i = i0; i + dir >= 0 && i + dir < static_cast<int>(values.size()); i += dir) {
            idx[static_cast<std::size_t>(axis)] = i + dir;
            const std::size_t li = sp.lattice_index(idx);
            if (!sp.reachable[li]) break;
            const double a = values[static_cast<std::size_t>(i)];
            const double b = values[static_cast<std::size_t>(i + dir)];
            const int n = step_count(a, b, plan.step);
            const double dt = (b - a) / n;
            for (int s = 0; s < n; ++s) {
              const double t = a + dt * s;
              zk[axis] = t;
              const Eigen::VectorXd k1 = rhs(zk, y);
              zk[axis] = t + 0.5 * dt;
              const Eigen::VectorXd k2 = rhs(zk, y + 0.5 * dt * k1);
              const Eigen::VectorXd k3 = rhs(zk, y + 0.5 * dt * k2);
              zk[axis] = s + 1 == n ? b : t + dt;
              const Eigen::VectorXd k4 = rhs(zk, y + dt * k3);
              y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            zk[axis] = b;
            if (!y.allFinite()) throw RuntimeFailure("integration diverged on slot " + std::to_string(k));
            st.values.col(static_cast<Eigen::Index>(li)) = y;
            st.done[li] = 1;
            reached[f].push_back(li);
          }
        }
      });
      std::vector<std::size_t> next;
      for (std::size_t f = 0; f < frontier.size(); ++f) {
        next.push_back(frontier[f]);
        next.insert(next.end(), reached[f].begin(), reached[f].end());
      }
      frontier = std::move(next);
    }
    slot_done[static_cast<std::size_t>(k)] = 1;
  }

  GridField field;
  field.grids = plan.q_grid;
  field.layout = layout;
  field.step = plan.step;
  for (int k = 0; k < slots; ++k) {
    const SlotGrid& grid = plan.q_grid[static_cast<std::size_t>(k)];
    const SlotPlan& sp = plan.slots[static_cast<std::size_t>(k)];
    const SlotState& st = states[static_cast<std::size_t>(k)];
    Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(grid.node_count()));
    std::vector<char> filled(grid.node_count(), 0);
    for (std::size_t node = 0; node < grid.node_count(); ++node) {
      const std::size_t li = sp.find(grid.node_point(node));
      if (li == SlotPlan::npos || !st.done[li]) continue;
      vals.col(static_cast<Eigen::Index>(node)) = st.values.col(static_cast<Eigen::Index>(li));
      filled[node] = 1;
    }
    field.values.push_back(std::move(vals));
    field.filled.push_back(std::move(filled));
  }
  return field;
}

ComponentCanvas GridField::interpolate(int k, const Eigen::VectorXd& z_k) const {
  if (k < 0 || k >= slots()) throw ValidationError("slot index out of range");
  const SlotGrid& grid = grids[static_cast<std::size_t>(k)];
  const int dim = grid.dim();
  if (z_k.size() != dim) throw ValidationError("latent dimension does not match the grid");
  std::vector<int> lower(static_cast<std::size_t>(dim));
  std::vector<double> frac(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const auto& nodes = grid.axis_nodes[static_cast<std::size_t>(d)];
    const double v = z_k[d];
    if (v < nodes.front() - 1e-9 || v > nodes.back() + 1e-9)
      throw ValidationError("slot " + std::to_string(k) + " axis " + std::to_string(d) +
                            " value lies outside the reconstruction grid");
    int i = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), v) - nodes.begin()) - 1;
    i = std::clamp(i, 0, static_cast<int>(nodes.size()) - 2);
    lower[static_cast<std::size_t>(d)] = i;
    frac[static_cast<std::size_t>(d)] = std::clamp(
        (v - nodes[static_cast<std::size_t>(i)]) / (nodes[static_cast<std::size_t>(i + 1)] - nodes[static_cast<std::size_t>(i)]), 0.0, 1.0);
  }
  ComponentCanvas out;
  out.layout = layout;
  out.values = Eigen::VectorXd::Zero(layout.size());
  const Eigen::MatrixXd& vals = values[static_cast<std::size_t>(k)];
  const auto& fill = filled[static_cast<std::size_t>(k)];
  for (unsigned corner = 0; corner < (1u << dim); ++corner) {
    double w = 1.0;
    std::size_t node = 0, stride = 1;
    for (int d = 0; d < dim; ++d) {
      const bool up = (corner >> d) & 1u;
      w *= up ? frac[static_cast<std::size_t>(d)] : 1.0 - frac[static_cast<std::size_t>(d)];
      node += stride * static_cast<std::size_t>(lower[static_cast<std::size_t>(d)] + (up ? 1 : 0));
      stride *= grid.axis_nodes[static_cast<std::size_t>(d)].size();
    }
    if (w == 0.0) continue;
    if (!fill[node])
      throw ValidationError("slot " + std::to_string(k) + " query needs unreachable grid node " +
                            std::to_string(node));
    out.values += w * vals.col(static_cast<Eigen::Index>(node));
  }
  return out;
}

void GridField::write_csv(std::ostream& out, int k) const {
  if (k < 0 || k >= slots()) throw ValidationError("slot index out of range");
  const SlotGrid& grid = grids[static_cast<std::size_t>(k)];
  for (int d = 0; d < grid.dim(); ++d) out << "node_" << d << ',';
  for (int i = 0; i < layout.size(); ++i) out << "value_" << i << (i + 1 < layout.size() ? "," : "\n");
  out << std::setprecision(17);
  const auto& vals = values[static_cast<std::size_t>(k)];
  for (std::size_t node = 0; node < grid.node_count(); ++node) {
    if (!filled[static_cast<std::size_t>(k)][node]) continue;
    const Eigen::VectorXd p = grid.node_point(node);
    for (int d = 0; d < grid.dim(); ++d) out << p[d] << ',';
    for (int i = 0; i < layout.size(); ++i)
      out << vals(i, static_cast<Eigen::Index>(node)) << (i + 1 < layout.size() ? "," : "\n");
  }
}

void ReconstructionReport::write_csv(std::ostream& out) const {
  out << "metric,slot,value\n" << std::setprecision(17);
  out << "q_mse,," << q_mse << "\n";
  out << "tolerance,," << tolerance << "\n";
  out << "q_samples,," << q_samples << "\n";
  out << "pass,," << (pass() ? 1 : 0) << "\n";
  for (std::size_t k = 0; k < slot_errors.size(); ++k) {
    out << "max_abs_error," << k << ',' << slot_errors[k].max_abs << "\n";
    out << "mean_abs_error," << k << ',' << slot_errors[k].mean_abs << "\n";
    out << "nodes," << k << ',' << slot_errors[k].nodes << "\n";
  }
}

std::string ReconstructionReport::summary() const {
  std::ostringstream s;
  s << std::setprecision(6) << "q_mse=" << q_mse << " tol=" << tolerance << " n=" << q_samples
    << " pass=" << (pass() ? 1 : 0);
  for (std::size_t k = 0; k < slot_errors.size(); ++k)
    s << " slot" << k << "_max_abs=" << slot_errors[k].max_abs;
  return s.str();
}

ReconstructionReport verify_generalization(const GridField& field, CompositionKind composition,
                                           const TeacherOracle& teacher,
                                           const SampleSet& q_samples, double tol,
                                           const CompositionalModel* ground_truth) {
  if (q_samples.points.empty()) throw ValidationError("verify_generalization needs Q samples");
  if (!(tol >= 0.0)) throw ValidationError("tolerance must be non-negative");
  ReconstructionReport report;
  report.tolerance = tol;
  report.q_samples = q_samples.points.size();
  report.audit_mode = ground_truth != nullptr;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<ComponentCanvas> canvases(static_cast<std::size_t>(field.slots()));
  for (const LatentPoint& q : q_samples.points) {
    for (int k = 0; k < field.slots(); ++k) canvases[static_cast<std::size_t>(k)] = field.interpolate(k, q.slot(k));
    const Eigen::VectorXd pred = compose(composition, canvases).values;
    const Eigen::VectorXd truth = teacher.evaluate(q).values;
    if (pred.size() != truth.size()) throw ValidationError("teacher and reconstruction sizes differ");
    total += (pred - truth).squaredNorm();
    count += static_cast<std::size_t>(pred.size());
  }
  report.q_mse = total / static_cast<double>(count);
  if (ground_truth) {
    for (int k = 0; k < field.slots(); ++k) {
      SlotError e;
      double sum = 0.0;
      std::size_t entries = 0;
      const SlotGrid& grid = field.grids[static_cast<std::size_t>(k)];
      const ComponentFamily& fam = ground_truth->families[static_cast<std::size_t>(k)];
      for (std::size_t node = 0; node < grid.node_count(); ++node) {
        if (!field.filled[static_cast<std::size_t>(k)][node]) continue;
        const Eigen::VectorXd diff = field.values[static_cast<std::size_t>(k)].col(static_cast<Eigen::Index>(node)) -
                                     render_component(fam, grid.node_point(node)).values;
        e.max_abs = std::max(e.max_abs, diff.cwiseAbs().maxCoeff());
        sum += diff.cwiseAbs().sum();
        entries += static_cast<std::size_t>(diff.size());
        ++e.nodes;
      }
      e.mean_abs = entries ? sum / static_cast<double>(entries) : 0.0;
      report.slot_errors.push_back(e);
    }
  }
  return report;
}

}  // namespace compgen
