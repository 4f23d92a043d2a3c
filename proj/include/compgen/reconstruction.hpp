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

// Reconstruction of component functions from observations on the training
// support: recover d phi_k / d z_k by least squares over superposition sets,
// then integrate along single-coordinate paths from an initial point where
// the canvases are known.

#ifndef COMPGEN_RECONSTRUCTION_HPP_
#define COMPGEN_RECONSTRUCTION_HPP_

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compgen/common.hpp"
#include "compgen/differential.hpp"
#include "compgen/generative.hpp"
#include "compgen/latent.hpp"

namespace compgen {

struct TeacherOracle {
  ObservationFn evaluate;
  LatentBox box;
};

TeacherOracle teacher_from_model(const CompositionalModel& model);

// Carries the rank report of the summed composition Jacobian.
class RankDeficiencyError : public RuntimeFailure {
 public:
  RankDeficiencyError(const std::string& what, RankReport report,
                      std::optional<LatentPoint> location = std::nullopt)
      : RuntimeFailure(what), report_(std::move(report)), location_(std::move(location)) {}

  const RankReport& report() const { return report_; }
  const std::optional<LatentPoint>& location() const { return location_; }

 private:
  RankReport report_;
  std::optional<LatentPoint> location_;
};

struct ComponentJacobianSolution {
  Eigen::MatrixXd jacobian;  // M x D
  double residual = 0.0;     // || sum dC * J - sum df ||_F
  RankReport rank;
};

// Least-squares solution of (sum dC) J = (sum df) through the normal
// equations. tau < 0 selects 1e-8 when every dC estimate is analytic and
// 1e-3 otherwise. Throws RankDeficiencyError if sum dC has rank < M.
ComponentJacobianSolution solve_component_jacobian(const std::vector<JacobianEstimate>& df_list,
                                                   const std::vector<JacobianEstimate>& dc_list,
                                                   double tau = -1.0);

// Node coordinates per axis of one slot.
struct SlotGrid {
  std::vector<std::vector<double>> axis_nodes;

  int dim() const { return static_cast<int>(axis_nodes.size()); }
  std::size_t node_count() const;
  std::vector<int> node_indices(std::size_t node) const;
  Eigen::VectorXd node_point(std::size_t node) const;
};

SlotGrid regular_slot_grid(const LatentBox& box, int k, int nodes_per_axis);
std::vector<SlotGrid> regular_grids(const LatentBox& box, int nodes_per_axis);

// Integration lattice of one slot: per axis the grid nodes, the initial
// point's coordinate, and the coordinates of extra targets (anchors other
// slots use as contexts). Lattice points are indexed mixed-radix with axis
// 0 fastest.
struct SlotPlan {
  int slot = 0;
  std::vector<int> axis_order;
  std::vector<std::vector<double>> lattice;
  std::vector<char> reachable;
  std::vector<Eigen::VectorXd> extra_targets;

  std::size_t lattice_size() const { return reachable.size(); }
  std::size_t lattice_index(const std::vector<int>& idx) const;
  std::vector<int> lattice_indices(std::size_t index) const;
  Eigen::VectorXd lattice_point(std::size_t index) const;
  // Lattice index of an exact coordinate vector, or npos.
  std::size_t find(const Eigen::VectorXd& v) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct PathPlan {
  LatentPoint p0;
  double step = 1.0 / 64.0;
  SupportSpec support;
  std::vector<SlotGrid> q_grid;
  std::vector<int> slot_order;
  std::vector<SlotPlan> slots;  // indexed by slot
  // Grid nodes of q_grid that no in-support path reaches, per slot.
  std::vector<std::vector<std::size_t>> unreachable_nodes;

  std::size_t unreachable_count() const;
};

struct PlanOptions {
  double step = 1.0 / 64.0;
  // Per-slot sweep order over the slot's axes; empty means 0, 1, ..., D-1.
  std::vector<std::vector<int>> axis_orders;
};

// Initial point chosen automatically: anchors[k][0] for anchored supports,
// the box centre otherwise.
LatentPoint auto_initial_point(const SupportSpec& support);

// Each slot is swept axis by axis starting from p0, with every other slot
// held at p0. Segments leaving supp P mark the rest of that line, and all
// lattice points swept from it, unreachable.
PathPlan plan_paths(const SupportSpec& support, const std::vector<SlotGrid>& q_grid,
                    std::optional<LatentPoint> p0, const PlanOptions& options = {});

struct GridField {
  std::vector<SlotGrid> grids;
  std::vector<Eigen::MatrixXd> values;  // per slot: M x node_count
  std::vector<std::vector<char>> filled;
  CanvasLayout layout;
  std::string integrator = "rk4";
  double step = 0.0;

  int slots() const { return static_cast<int>(grids.size()); }
  // Multilinear interpolation; throws ValidationError outside the grid hull
  // or when a needed node was never reached.
  ComponentCanvas interpolate(int k, const Eigen::VectorXd& z_k) const;
  // Columns: node_0..node_{D-1},value_0..value_{M-1}
  void write_csv(std::ostream& out, int k) const;
};

struct IntegrationOptions {
  double h = 1e-3;
  // Relative rank tolerance on the summed composition Jacobian (analytic).
  double tau = 1e-8;
  int max_contexts = 32;
  // Slice half-width for sample-slice superposition sets.
  double slice_tol = 0.02;
  int jobs = 1;
};

// Optional source of superposition sets drawn from support samples: the
// samples whose slot k lies within slice_tol of the running value, snapped
// onto it, with the other slots rendered by `families`.
struct SliceContextSource {
  const SampleSet* samples = nullptr;
  std::vector<ComponentFamily> families;
};

// Integrates every slot along the plan. At each stage point of a step, the
// superposition set holds the in-support context configurations with known
// canvases (other slots at p0, and at anchors reconstructed earlier); df is
// the teacher's central difference along the moving axis and dC is evaluated
// at the running estimate. With `slices`, sample-slice configurations are
// appended to the in-support context set. Aborts with RankDeficiencyError on
// rank loss.
GridField integrate_component(const TeacherOracle& teacher, CompositionKind composition,
                              const PathPlan& plan, const std::vector<ComponentCanvas>& phi0,
                              const IntegrationOptions& options = {},
                              const SliceContextSource* slices = nullptr);

struct SlotError {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  std::size_t nodes = 0;
};

struct ReconstructionReport {
  std::vector<SlotError> slot_errors;  // empty without ground truth
  double q_mse = 0.0;
  double tolerance = 0.0;
  std::size_t q_samples = 0;
  bool audit_mode = false;

  bool pass() const { return q_mse <= tolerance; }
  void write_csv(std::ostream& out) const;
  std::string summary() const;
};

// MSE between C(phi_hat(q)) and teacher(q) over q_samples; per-slot node
// errors against `ground_truth` when given.
ReconstructionReport verify_generalization(const GridField& field, CompositionKind composition,
                                           const TeacherOracle& teacher,
                                           const SampleSet& q_samples, double tol,
                                           const CompositionalModel* ground_truth = nullptr);

}  // namespace compgen

#endif  // COMPGEN_RECONSTRUCTION_HPP_
