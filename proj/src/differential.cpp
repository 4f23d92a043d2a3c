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

#include "compgen/differential.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

#include <Eigen/SVD>

#include "compgen/common.hpp"

namespace compgen {
namespace {

constexpr int kMaxPixelValues = 16 * 8;

void check_slot(const CompositionalModel& model, int k) {
  if (k < 0 || k >= model.slots()) throw ValidationError("slot index out of range");
}

void check_step(double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be > 0");
}

}  // namespace

RankReport rank_from_singular_values(std::vector<double> singular_values, double tau,
                                     int target) {
  std::sort(singular_values.begin(), singular_values.end(), std::greater<>());
  RankReport r;
  r.singular_values = std::move(singular_values);
  r.relative_tolerance = tau;
  r.target = target;
  const double smax = r.singular_values.empty() ? 0.0 : r.singular_values.front();
  r.cutoff = tau * smax;
  r.numerical_rank = smax > 0.0
                         ? static_cast<int>(std::count_if(r.singular_values.begin(),
                                                          r.singular_values.end(),
                                                          [&](double s) { return s > r.cutoff; }))
                         : 0;
  return r;
}

RankReport rank_report(const Eigen::MatrixXd& matrix, double tau, int target) {
  if (!matrix.allFinite()) throw RuntimeFailure("rank of a non-finite matrix");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(matrix);
  const Eigen::VectorXd s = svd.singularValues();
  return rank_from_singular_values(std::vector<double>(s.data(), s.data() + s.size()), tau, target);
}

BlockJacobian& BlockJacobian::operator+=(const BlockJacobian& other) {
  if (blocks.empty()) {
    *this = other;
    return *this;
  }
  if (!(canvas == other.canvas) || out_channels != other.out_channels)
    throw ValidationError("block Jacobians differ in shape");
  for (std::size_t p = 0; p < blocks.size(); ++p) blocks[p] += other.blocks[p];
  return *this;
}

Eigen::MatrixXd BlockJacobian::to_dense() const {
  const int plane = canvas.pixels();
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(plane * out_channels, canvas.size());
  for (int p = 0; p < plane; ++p)
    for (int o = 0; o < out_channels; ++o)
      for (int c = 0; c < canvas.channels; ++c)
        dense(o * plane + p, c * plane + p) = blocks[static_cast<std::size_t>(p)](o, c);
  return dense;
}

RankReport BlockJacobian::rank(double tau) const {
  std::vector<double> sv;
  sv.reserve(static_cast<std::size_t>(canvas.size()));
  for (const auto& b : blocks) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
    const Eigen::VectorXd s = svd.singularValues();
    sv.insert(sv.end(), s.data(), s.data() + s.size());
    // A block with fewer rows than columns contributes structural zeros.
    for (Eigen::Index i = s.size(); i < b.cols(); ++i) sv.push_back(0.0);
  }
  return rank_from_singular_values(std::move(sv), tau, canvas.size());
}

Eigen::VectorXd BlockJacobian::column_norms() const {
  const int plane = canvas.pixels();
  Eigen::VectorXd n(canvas.size());
  for (int p = 0; p < plane; ++p)
    for (int c = 0; c < canvas.channels; ++c)
      n[c * plane + p] = blocks[static_cast<std::size_t>(p)].col(c).norm();
  return n;
}

std::vector<ComponentCanvas> render_all(const CompositionalModel& model, const LatentPoint& z) {
  check_in_box(model.latent_box, z);
  std::vector<ComponentCanvas> canvases;
  canvases.reserve(static_cast<std::size_t>(model.slots()));
  for (int k = 0; k < model.slots(); ++k)
    canvases.push_back(render_component(model.families[static_cast<std::size_t>(k)], z.slot(k)));
  return canvases;
}

BlockJacobian composition_blocks(CompositionKind kind, const std::vector<ComponentCanvas>& canvases,
                                 int k, double h, JacobianMethod method) {
  if (canvases.empty()) throw ValidationError("composition_blocks needs canvases");
  const CanvasLayout layout = canvases.front().layout;
  const int slots = static_cast<int>(canvases.size());
  const int cin = layout.channels;
  const int cout = output_channels(kind, cin);
  const int plane = layout.pixels();
  if (slots * cin > kMaxPixelValues) throw ValidationError("too many values per pixel");
  BlockJacobian jac;
  jac.canvas = layout;
  jac.out_channels = cout;
  jac.blocks.assign(static_cast<std::size_t>(plane), Eigen::MatrixXd::Zero(cout, cin));
  std::array<double, kMaxPixelValues> in{};
  std::array<double, kMaxPixelValues> grad_in{};
  std::array<double, 8> plus{}, minus{}, grad_out{};
  const auto n_in = static_cast<std::size_t>(slots * cin);
  for (int p = 0; p < plane; ++p) {
    for (int j = 0; j < slots; ++j)
      for (int c = 0; c < cin; ++c)
        in[static_cast<std::size_t>(j * cin + c)] = canvases[static_cast<std::size_t>(j)].values[c * plane + p];
    Eigen::MatrixXd& block = jac.blocks[static_cast<std::size_t>(p)];
    if (method == JacobianMethod::kAnalyticOracle) {
      for (int o = 0; o < cout; ++o) {
        grad_out.fill(0.0);
        grad_out[static_cast<std::size_t>(o)] = 1.0;
        compose_pixel_vjp(kind, slots, cin, std::span<const double>(in.data(), n_in),
                          std::span<const double>(grad_out.data(), static_cast<std::size_t>(cout)),
                          std::span<double>(grad_in.data(), n_in));
        for (int c = 0; c < cin; ++c) block(o, c) = grad_in[static_cast<std::size_t>(k * cin + c)];
      }
    } else {
      check_step(h);
      for (int c = 0; c < cin; ++c) {
        const std::size_t idx = static_cast<std::size_t>(k * cin + c);
        const double saved = in[idx];
        in[idx] = saved + h;
        compose_pixel(kind, slots, cin, std::span<const double>(in.data(), n_in),
                      std::span<double>(plus.data(), static_cast<std::size_t>(cout)));
        in[idx] = saved - h;
        compose_pixel(kind, slots, cin, std::span<const double>(in.data(), n_in),
                      std::span<double>(minus.data(), static_cast<std::size_t>(cout)));
        in[idx] = saved;
        for (int o = 0; o < cout; ++o)
          block(o, c) = (plus[static_cast<std::size_t>(o)] - minus[static_cast<std::size_t>(o)]) / (2.0 * h);
      }
    }
  }
  return jac;
}

JacobianEstimate jacobian_of_composition(const CompositionalModel& model, const LatentPoint& z,
                                         int k, double h, JacobianMethod method) {
  model.validate();
  check_slot(model, k);
  std::vector<ComponentCanvas> canvases = render_all(model, z);
  JacobianEstimate est;
  est.method = method;
  est.base = z;
  if (method == JacobianMethod::kAnalyticOracle) {
    est.matrix = composition_blocks(model.composition, canvases, k, h, method).to_dense();
  } else {
    check_step(h);
    est.step = h;
    const int m = canvases[static_cast<std::size_t>(k)].layout.size();
    const int n = model.observation_layout().size();
    est.matrix.resize(n, m);
    for (int i = 0; i < m; ++i) {
      const double saved = canvases[static_cast<std::size_t>(k)].values[i];
      canvases[static_cast<std::size_t>(k)].values[i] = saved + h;
      const Eigen::VectorXd plus = compose(model.composition, canvases).values;
      canvases[static_cast<std::size_t>(k)].values[i] = saved - h;
      const Eigen::VectorXd minus = compose(model.composition, canvases).values;
      canvases[static_cast<std::size_t>(k)].values[i] = saved;
      est.matrix.col(i) = (plus - minus) / (2.0 * h);
    }
  }
  if (!est.matrix.allFinite()) throw RuntimeFailure("composition Jacobian is not finite");
  return est;
}

JacobianEstimate jacobian_of_component(const CompositionalModel& model, const LatentPoint& z,
                                       int k, double h, JacobianMethod method) {
  check_slot(model, k);
  const ComponentFamily& family = model.families[static_cast<std::size_t>(k)];
  const Eigen::VectorXd zk = z.slot(k);
  JacobianEstimate est;
  est.method = method;
  est.base = z;
  if (method == JacobianMethod::kAnalyticOracle) {
    const auto* smooth = std::get_if<SmoothAnalytic>(&family);
    if (smooth == nullptr)
      throw ValidationError("analytic component Jacobian needs a SmoothAnalytic family");
    est.matrix = smooth->coefficients * SmoothAnalytic::feature_gradients(zk);
    return est;
  }
  check_step(h);
  est.step = h;
  const int dim = static_cast<int>(zk.size());
  for (int d = 0; d < dim; ++d) {
    const Interval& ax = model.latent_box.axis(k, d);
    if (zk[d] - h < ax.lo || zk[d] + h > ax.hi)
      throw ValidationError("slot " + std::to_string(k) + " axis " + std::to_string(d) +
                            " is closer than h to the box edge");
  }
  est.matrix.resize(family_layout(family).size(), dim);
  for (int d = 0; d < dim; ++d) {
    Eigen::VectorXd up = zk, down = zk;
    up[d] += h;
    down[d] -= h;
    est.matrix.col(d) = (render_component(family, up).values - render_component(family, down).values) / (2.0 * h);
  }
  return est;
}

JacobianEstimate jacobian_of_f(const ObservationFn& f, const LatentBox& box, const LatentPoint& z,
                               int k, double h) {
  check_step(h);
  if (k < 0 || k >= box.slots()) throw ValidationError("slot index out of range");
  for (int d = 0; d < box.dim(); ++d) {
    const Interval& ax = box.axis(k, d);
    if (z(k, d) - h < ax.lo || z(k, d) + h > ax.hi)
      throw ValidationError("slot " + std::to_string(k) + " axis " + std::to_string(d) + " = " +
                            std::to_string(z(k, d)) + " is closer than h to the box edge");
  }
  JacobianEstimate est;
  est.step = h;
  est.base = z;
  for (int d = 0; d < box.dim(); ++d) {
    LatentPoint up = z, down = z;
    up(k, d) += h;
    down(k, d) -= h;
    const Eigen::VectorXd col = (f(up).values - f(down).values) / (2.0 * h);
    if (d == 0) est.matrix.resize(col.size(), box.dim());
    est.matrix.col(d) = col;
  }
  if (!est.matrix.allFinite()) throw RuntimeFailure("observable Jacobian is not finite");
  return est;
}

JacobianEstimate jacobian_of_f(const CompositionalModel& model, const LatentPoint& z, int k,
                               double h) {
  model.validate();
  return jacobian_of_f([&](const LatentPoint& p) { return evaluate(model, p); }, model.latent_box,
                       z, k, h);
}

RankReport summed_jacobian_rank(const CompositionalModel& model,
                                const std::vector<LatentPoint>& pprime, int k, double h,
                                double tau) {
  model.validate();
  check_slot(model, k);
  if (pprime.empty()) throw ValidationError("summed_jacobian_rank needs a non-empty P'");
  BlockJacobian sum;
  for (const auto& p : pprime)
    sum += composition_blocks(model.composition, render_all(model, p), k, h,
                              JacobianMethod::kCentralDifference);
  return sum.rank(tau);
}

// ---------------------------------------------------------------------------

bool SufficiencyReport::pass() const {
  return std::all_of(probes.begin(), probes.end(), [](const ProbeResult& p) { return p.pass; });
}

int SufficiencyReport::failed() const {
  return static_cast<int>(
      std::count_if(probes.begin(), probes.end(), [](const ProbeResult& p) { return !p.pass; }));
}

void SufficiencyReport::write_csv(std::ostream& out) const {
  const Eigen::Index dim = probes.empty() ? 0 : probes.front().probe.size();
  out << "slot,probe_index";
  for (Eigen::Index d = 0; d < dim; ++d) out << ",probe_" << d;
  out << ",pprime_size,rank,M,pass\n";
  for (const auto& p : probes) {
    out << p.slot << ',' << p.probe_index;
    for (Eigen::Index d = 0; d < p.probe.size(); ++d) out << ',' << p.probe[d];
    out << ',' << p.pprime_size << ',' << p.rank.numerical_rank << ',' << target << ','
        << (p.pass ? "true" : "false") << '\n';
  }
}

namespace {

ProbeResult run_probe(const CompositionalModel& model, const SampleSet& samples, int k,
                      int probe_index, const Eigen::VectorXd& probe,
                      const SufficiencyOptions& opt) {
  ProbeResult result;
  result.slot = k;
  result.probe_index = probe_index;
  result.probe = probe;
  const int m = model.canvas_layout().size();
  result.rank.target = m;

  std::vector<LatentPoint> candidates;
  for (LatentPoint c : slice_points(samples, k, probe, opt.slice_tol)) {
    c.set_slot(k, probe);
    if (contains(samples.spec, c)) candidates.push_back(std::move(c));
  }
  if (candidates.empty()) {
    result.reason = "no support points";
    return result;
  }
  if (opt.max_candidates > 0 && candidates.size() > static_cast<std::size_t>(opt.max_candidates)) {
    std::vector<LatentPoint> thinned;
    const double stride = static_cast<double>(candidates.size()) / opt.max_candidates;
    for (int i = 0; i < opt.max_candidates; ++i)
      thinned.push_back(candidates[static_cast<std::size_t>(i * stride)]);
    candidates = std::move(thinned);
  }
  std::vector<BlockJacobian> jacs;
  std::vector<Eigen::VectorXd> norms;
  jacs.reserve(candidates.size());
  for (const auto& c : candidates) {
    jacs.push_back(composition_blocks(model.composition, render_all(model, c), k, opt.h,
                                      JacobianMethod::kCentralDifference));
    norms.push_back(jacs.back().column_norms());
  }

  BlockJacobian sum;
  Eigen::VectorXd sum_norms = Eigen::VectorXd::Zero(m);
  std::vector<bool> used(candidates.size(), false);
  for (int step = 0; step < opt.max_pprime; ++step) {
    // Pick the candidate that lights the most columns still dark in the sum.
    double scale = sum_norms.size() > 0 ? sum_norms.maxCoeff() : 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (!used[i]) scale = std::max(scale, norms[i].maxCoeff());
    const double dark = opt.tau * scale;
    long best = -1;
    long best_score = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      long score = 0;
      for (int j = 0; j < m; ++j)
        if (sum_norms[j] <= dark && norms[i][j] > dark) ++score;
      if (score > best_score) {
        best_score = score;
        best = static_cast<long>(i);
      }
    }
    if (best < 0) {
      for (std::size_t i = 0; i < candidates.size() && best < 0; ++i)
        if (!used[i]) best = static_cast<long>(i);
    }
    if (best < 0) break;
    used[static_cast<std::size_t>(best)] = true;
    sum += jacs[static_cast<std::size_t>(best)];
    sum_norms = sum.column_norms();
    ++result.pprime_size;
    result.rank = sum.rank(opt.tau);
    if (result.rank.full_rank()) break;
  }
  result.pass = result.rank.full_rank();
  if (!result.pass)
    result.reason = result.pprime_size >= opt.max_pprime ? "rank deficient at max P' size"
                                                         : "rank deficient, candidates exhausted";
  return result;
}

}  // namespace

SufficiencyReport check_sufficient_support(const CompositionalModel& model,
                                           const SampleSet& samples,
                                           const SufficiencyOptions& options) {
  model.validate();
  if (samples.empty()) throw ValidationError("check_sufficient_support needs samples");
  if (!samples.spec.box.same_shape(model.latent_box))
    throw ValidationError("samples and model disagree on K or D");
  struct Task {
    int slot;
    int index;
    Eigen::VectorXd probe;
  };
  std::vector<Task> tasks;
  for (int k = 0; k < model.slots(); ++k) {
    const CoverageGrid grid = marginal_coverage(samples, k, options.probe_grid_resolution);
    int index = 0;
    for (std::size_t c = 0; c < grid.cell_count(); ++c)
      if (grid.covered(c)) tasks.push_back({k, index++, grid.cell_center(c)});
  }
  SufficiencyReport report;
  report.target = model.canvas_layout().size();
  report.probes.resize(tasks.size());
  parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
    report.probes[i] = run_probe(model, samples, tasks[i].slot, tasks[i].index, tasks[i].probe, options);
  });
  return report;
}

}  // namespace compgen
