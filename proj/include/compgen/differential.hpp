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

// Jacobians of compositional models and the sufficient-support verifier.

#ifndef COMPGEN_DIFFERENTIAL_HPP_
#define COMPGEN_DIFFERENTIAL_HPP_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compgen/generative.hpp"
#include "compgen/latent.hpp"

namespace compgen {

enum class JacobianMethod { kCentralDifference, kAnalyticOracle };

struct JacobianEstimate {
  Eigen::MatrixXd matrix;
  JacobianMethod method = JacobianMethod::kCentralDifference;
  double step = 0.0;  // 0 for analytic estimates
  LatentPoint base;
};

struct RankReport {
  std::vector<double> singular_values;  // descending
  int numerical_rank = 0;
  double relative_tolerance = 0.0;
  double cutoff = 0.0;  // relative_tolerance * sigma_max
  int target = 0;

  bool full_rank() const { return numerical_rank == target; }
};

// numerical_rank = #{sigma_i > tau * sigma_max}.
RankReport rank_from_singular_values(std::vector<double> singular_values, double tau,
                                     int target);
RankReport rank_report(const Eigen::MatrixXd& matrix, double tau, int target);

// d C / d canvas_k for a pixel-local composition: one (out_channels x
// in_channels) block per pixel. The dense N x M matrix is block-diagonal
// after grouping rows and columns by pixel.
struct BlockJacobian {
  CanvasLayout canvas;
  int out_channels = 0;
  std::vector<Eigen::MatrixXd> blocks;

  BlockJacobian& operator+=(const BlockJacobian& other);
  Eigen::MatrixXd to_dense() const;
  // Union of the per-block singular values.
  RankReport rank(double tau) const;
  // Euclidean norm of each of the M columns, canvas index order.
  Eigen::VectorXd column_norms() const;
};

std::vector<ComponentCanvas> render_all(const CompositionalModel& model,
                                        const LatentPoint& z);

BlockJacobian composition_blocks(CompositionKind kind,
                                 const std::vector<ComponentCanvas>& canvases, int k,
                                 double h, JacobianMethod method);

// N x M Jacobian of the composition w.r.t. canvas k at the rendered canvases.
// The central-difference route perturbs every canvas entry and re-runs the
// whole composition; the analytic route uses the exact pixel VJPs.
JacobianEstimate jacobian_of_composition(const CompositionalModel& model,
                                         const LatentPoint& z, int k, double h,
                                         JacobianMethod method = JacobianMethod::kCentralDifference);

// M x D Jacobian of the component function of slot k. SmoothAnalytic
// families support the analytic route; sprites use central differences.
JacobianEstimate jacobian_of_component(const CompositionalModel& model,
                                       const LatentPoint& z, int k, double h,
                                       JacobianMethod method = JacobianMethod::kCentralDifference);

using ObservationFn = std::function<Observation(const LatentPoint&)>;

// N x D central differences of f w.r.t. the coordinates of slot k. Throws
// ValidationError if any slot-k coordinate is closer than h to the box edge.
JacobianEstimate jacobian_of_f(const ObservationFn& f, const LatentBox& box,
                               const LatentPoint& z, int k, double h);
JacobianEstimate jacobian_of_f(const CompositionalModel& model, const LatentPoint& z,
                               int k, double h);

// Rank of sum_{p in pprime} dC/dphi_k(phi(p)), central differences.
RankReport summed_jacobian_rank(const CompositionalModel& model,
                                const std::vector<LatentPoint>& pprime, int k,
                                double h, double tau);

struct SufficiencyOptions {
  int probe_grid_resolution = 4;
  double slice_tol = 0.05;
  int max_pprime = 32;
  double h = 1e-3;
  double tau = 1e-3;
  // Slice candidates beyond this count are thinned by a fixed stride.
  int max_candidates = 256;
  int jobs = 1;
};

struct ProbeResult {
  int slot = 0;
  int probe_index = 0;
  Eigen::VectorXd probe;
  int pprime_size = 0;
  RankReport rank;
  bool pass = false;
  std::string reason;
};

struct SufficiencyReport {
  std::vector<ProbeResult> probes;
  int target = 0;

  bool pass() const;
  int failed() const;
  // Columns: slot,probe_index,probe_0..probe_{D-1},pprime_size,rank,M,pass
  void write_csv(std::ostream& out) const;
};

// For each slot and each probe on a regular grid restricted to covered
// marginal cells, grows P' greedily (most newly exposed columns first) from
// the samples whose slot k lies within slice_tol of the probe, with slot k
// snapped onto the probe value and kept only if still in supp P. A probe
// passes once the summed composition Jacobian reaches rank M.
SufficiencyReport check_sufficient_support(const CompositionalModel& model,
                                           const SampleSet& samples,
                                           const SufficiencyOptions& options);

}  // namespace compgen

#endif  // COMPGEN_DIFFERENTIAL_HPP_
