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

// Experiment orchestration: single runs, the multi-seed table and the
// reconstruction-error heatmap.

#ifndef COMPGEN_HARNESS_HPP_
#define COMPGEN_HARNESS_HPP_

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "compgen/config.hpp"
#include "compgen/learner.hpp"

namespace compgen {

// Stream tags for derive_seed(run_seed, tag).
enum SeedTag : std::uint64_t {
  kSeedTrain = 1,
  kSeedIdTest = 2,
  kSeedAllTest = 3,
  kSeedInit = 4,
  kSeedShuffle = 5,
  kSeedDef2 = 6,
  kSeedHeatmap = 7,
};

struct RunOptions {
  std::filesystem::path out_dir;  // empty: no files
  int jobs = 1;
  std::ostream* log = nullptr;
};

struct ExperimentRecord {
  std::string name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string model_kind;
  std::size_t param_count = 0;
  double param_ratio = 1.0;  // monolithic / compositional reference
  double mse_id = 0.0, mse_all = 0.0, r2_id = 0.0, r2_all = 0.0;
  bool def2_pass = false;
  bool def3_ran = false;
  bool def3_pass = false;
  int def3_failed = 0;
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;
};

struct ExperimentResult {
  ExperimentRecord record;
  std::unique_ptr<Network> net;
  TrainHistory history;
};

// The network a config trains. Monolithic nets are parameter-matched to the
// compositional net the same [net] section describes.
std::unique_ptr<Network> build_network(const ExperimentConfig& config, std::uint64_t seed,
                                       ParamMatch* match = nullptr);

// Samples, Def 2/Def 3 verdicts, training and ID/all metrics for one seed.
// Errors propagate as ValidationError/RuntimeFailure prefixed by the name.
ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                                const RunOptions& options = {});

struct TableRow {
  std::string name;
  int seed_count = 0;
  int failed_runs = 0;
  double mse_id_mean = 0, mse_id_sd = 0, mse_all_mean = 0, mse_all_sd = 0;
  double r2_id_mean = 0, r2_id_sd = 0, r2_all_mean = 0, r2_all_sd = 0;
  bool def2_pass = false;
  bool def3_pass = false;
};

struct TableResult {
  std::vector<TableRow> rows;
  std::vector<ExperimentRecord> records;  // config order, then seed order
};

// Runs every config for seeds seed, seed+1, ..., seed+seeds-1. Failed runs
// are recorded and excluded from the aggregates.
TableResult run_table(const std::vector<ExperimentConfig>& configs, const RunOptions& options = {});

// name,seed_count,mse_id_mean,mse_id_sd,mse_all_mean,mse_all_sd,r2_id_mean,
// r2_id_sd,r2_all_mean,r2_all_sd,def2_pass,def3_pass
void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows);
// One line per run, without timings.
void write_runs_csv(std::ostream& out, const std::vector<ExperimentRecord>& records);
void write_timings_csv(std::ostream& out, const std::vector<ExperimentRecord>& records);

struct HeatmapGrid {
  HeatmapAxes axes;
  int resolution = 0;
  double a_lo = 0, a_hi = 1, b_lo = 0, b_hi = 1;
  std::vector<double> mean_err;  // i (axis a) major: mean_err[i * resolution + j]
  std::vector<char> in_support;

  double cell_lo_a(int i) const;
  double cell_hi_a(int i) const;
  double cell_lo_b(int j) const;
  double cell_hi_b(int j) const;
  double global_mean() const;
  // Mean over cells whose axis-a extent lies fully inside / fully outside
  // [lo, hi].
  double band_mean(double lo, double hi, bool inside) const;

  // i,j,z1x_lo,z1x_hi,z2x_lo,z2x_hi,mean_err,in_support
  void write_csv(std::ostream& out) const;
  // Gray = 255 * min(err, p99) / p99, p99 the 99th percentile of the cells;
  // row 0 at the top is the highest axis-b cell.
  void write_pgm(std::ostream& out) const;
};

// Mean squared reconstruction error per cell over `per_cell` samples of the
// remaining latents; in_support marks cells holding a projected train sample.
HeatmapGrid heatmap(const ExperimentConfig& config, const Network& net, std::uint64_t seed,
                    int jobs = 1);

}  // namespace compgen

#endif  // COMPGEN_HARNESS_HPP_
