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

#include "compgen/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "compgen/common.hpp"
#include "compgen/io.hpp"
#include "compgen/rng.hpp"

namespace compgen {
namespace {

NetSpec slot_spec(const ExperimentConfig& c, int canvas_size) {
  return NetSpec::mlp(c.dim, c.hidden_width, c.hidden_layers, canvas_size, c.activation);
}

void log_line(const RunOptions& o, const std::string& s) {
  if (o.log) *o.log << s << std::endl;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

ExperimentResult run_inner(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  ExperimentRecord& rec = result.record;
  rec.name = config.name;
  rec.config_hash = config_hash(config);
  rec.seed = seed;
  rec.model_kind = config.model_kind;
  const CompositionalModel model = config.build_model();
  const int jobs = std::max(1, options.jobs);

  const SampleSet train_set = sample_support(config.train_support, config.train_samples, derive_seed(seed, kSeedTrain), jobs);
  const SampleSet id_set = sample_support(config.train_support, config.test_samples, derive_seed(seed, kSeedIdTest), jobs);
  const SampleSet all_set = sample_support(config.test_support, config.test_samples, derive_seed(seed, kSeedAllTest), jobs);

  const CompositionalSupportReport def2 = check_compositional_support(
      config.train_support, config.test_support, config.def2_resolution, config.def2_probes, derive_seed(seed, kSeedDef2));
  rec.def2_pass = def2.pass();
  SufficiencyReport def3;
  if (config.def3) {
    SufficiencyOptions opt = config.def3_options;
    opt.jobs = jobs;
    def3 = check_sufficient_support(model, train_set, opt);
    rec.def3_ran = true;
    rec.def3_pass = def3.pass();
    rec.def3_failed = def3.failed();
  }
  log_line(options, config.name + " seed=" + std::to_string(seed) + " def2_pass=" + (rec.def2_pass ? "true" : "false") +
                        " def3_pass=" + (rec.def3_ran ? (rec.def3_pass ? "true" : "false") : "skipped"));

  const auto train_data = dataset(model, train_set, jobs);
  const auto id_data = dataset(model, id_set, jobs);
  const auto all_data = dataset(model, all_set, jobs);
  ParamMatch match;
  result.net = build_network(config, derive_seed(seed, kSeedInit), &match);
  result.net->jobs = jobs;
  rec.param_count = result.net->param_count();
  rec.param_ratio = config.model_kind == "monolithic" ? match.ratio : 1.0;
  TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, kSeedShuffle);
  result.history = train(*result.net, latent_matrix(train_data), observation_matrix(train_data), tc);
  const Metrics id = evaluate_metrics(*result.net, latent_matrix(id_data), observation_matrix(id_data));
  const Metrics all = evaluate_metrics(*result.net, latent_matrix(all_data), observation_matrix(all_data));
  rec.mse_id = id.mse;
  rec.mse_all = all.mse;
  rec.r2_id = id.r2_vw;
  rec.r2_all = all.r2_vw;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_line(options, config.name + " seed=" + std::to_string(seed) + " r2_id=" + format_double(rec.r2_id, 4) +
                        " r2_all=" + format_double(rec.r2_all, 4) + " seconds=" + format_double(rec.wall_seconds, 4));

  if (!options.out_dir.empty()) {
    const auto dir = ensure_dir(options.out_dir);
    {
      auto out = open_output(dir / "config.cfg");
      write_config(out, config);
    }
    {
      auto out = open_output(dir / "loss.csv");
      result.history.write_csv(out);
    }
    save_params((dir / "params.cgl").string(), *result.net);
    {
      auto out = open_output(dir / "def2_offending.csv");
      out << "slot,cell_index\n";
      for (const auto& c : def2.offending) out << c.slot << ',' << c.cell_index << "\n";
    }
    if (rec.def3_ran) {
      auto out = open_output(dir / "def3.csv");
      def3.write_csv(out);
    }
    {
      auto out = open_output(dir / "record.csv");
      write_runs_csv(out, {rec});
    }
    const int tiles = static_cast<int>(std::min<std::size_t>(16, all_data.size()));
    const Eigen::MatrixXd z = latent_matrix(all_data).leftCols(tiles);
    const Eigen::MatrixXd x = observation_matrix(all_data).leftCols(tiles);
    write_image_grid(dir / "truth_all.ppm", model.observation_layout(), x, 8);
    write_image_grid(dir / "pred_all.ppm", model.observation_layout(), result.net->forward(z), 8);
  }
  return result;
}

}  // namespace

std::unique_ptr<Network> build_network(const ExperimentConfig& config, std::uint64_t seed, ParamMatch* match) {
  const CompositionalModel model = config.build_model();
  const CanvasLayout canvas = model.canvas_layout();
  const int n = model.observation_layout().size();
  const std::vector<NetSpec> specs(static_cast<std::size_t>(config.slots), slot_spec(config, canvas.size()));
  if (config.model_kind == "compositional") {
    if (match) *match = ParamMatch{};
    return std::make_unique<CompositionalNet>(specs, config.composition, canvas, config.share_weights, seed);
  }
  ParamMatch m = match_param_count(specs, config.share_weights, n);
  if (match) *match = m;
  return std::make_unique<MonolithicNet>(m.spec, seed);
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options) {
  try {
    return run_inner(config, seed, options);
  } catch (const ValidationError& e) {
    throw ValidationError(config.name + ": " + e.what());
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure(config.name + ": " + e.what());
  }
}

TableResult run_table(const std::vector<ExperimentConfig>& configs, const RunOptions& options) {
  struct Task {
    std::size_t config;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    configs[c].validate();
    for (int s = 0; s < configs[c].seeds; ++s) tasks.push_back({c, configs[c].seed + static_cast<std::uint64_t>(s)});
  }
  TableResult result;
  result.records.resize(tasks.size());
  const int jobs = std::max(1, options.jobs);
  parallel_for(tasks.size(), jobs, [&](std::size_t t) {
    const ExperimentConfig& cfg = configs[tasks[t].config];
    RunOptions run;
    run.log = jobs == 1 ? options.log : nullptr;
    if (!options.out_dir.empty())
      run.out_dir = options.out_dir / cfg.name / ("seed_" + std::to_string(tasks[t].seed));
    try {
      result.records[t] = run_experiment(cfg, tasks[t].seed, run).record;
    } catch (const std::exception& e) {
      ExperimentRecord& r = result.records[t];
      r.name = cfg.name;
      r.config_hash = config_hash(cfg);
      r.seed = tasks[t].seed;
      r.model_kind = cfg.model_kind;
      r.ok = false;
      r.error = e.what();
    }
  });
  std::size_t t = 0;
  for (const auto& cfg : configs) {
    TableRow row;
    row.name = cfg.name;
    std::vector<double> mi, ma, ri, ra;
    bool d2 = true, d3 = true;
    for (int s = 0; s < cfg.seeds; ++s, ++t) {
      const ExperimentRecord& r = result.records[t];
      if (!r.ok) {
        ++row.failed_runs;
        continue;
      }
      mi.push_back(r.mse_id);
      ma.push_back(r.mse_all);
      ri.push_back(r.r2_id);
      ra.push_back(r.r2_all);
      d2 = d2 && r.def2_pass;
      d3 = d3 && r.def3_ran && r.def3_pass;
    }
    row.seed_count = static_cast<int>(mi.size());
    row.mse_id_mean = mean_of(mi);
    row.mse_id_sd = sd_of(mi);
    row.mse_all_mean = mean_of(ma);
    row.mse_all_sd = sd_of(ma);
    row.r2_id_mean = mean_of(ri);
    row.r2_id_sd = sd_of(ri);
    row.r2_all_mean = mean_of(ra);
    row.r2_all_sd = sd_of(ra);
    row.def2_pass = row.seed_count > 0 && d2;
    row.def3_pass = row.seed_count > 0 && d3;
    result.rows.push_back(row);
  }
  return result;
}

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "name,seed_count,mse_id_mean,mse_id_sd,mse_all_mean,mse_all_sd,r2_id_mean,r2_id_sd,"
         "r2_all_mean,r2_all_sd,def2_pass,def3_pass\n";
  out << std::setprecision(6);
  for (const auto& r : rows)
    out << r.name << ',' << r.seed_count << ',' << r.mse_id_mean << ',' << r.mse_id_sd << ',' << r.mse_all_mean
        << ',' << r.mse_all_sd << ',' << r.r2_id_mean << ',' << r.r2_id_sd << ',' << r.r2_all_mean << ','
        << r.r2_all_sd << ',' << (r.def2_pass ? "true" : "false") << ',' << (r.def3_pass ? "true" : "false") << "\n";
}

void write_runs_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  out << "name,config_hash,seed,model_kind,param_count,param_ratio,mse_id,mse_all,r2_id,r2_all,"
         "def2_pass,def3_pass,def3_failed,ok,error\n";
  out << std::setprecision(6);
  for (const auto& r : records) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.name << ',' << r.config_hash << ',' << r.seed << ',' << r.model_kind << ',' << r.param_count << ','
        << r.param_ratio << ',' << r.mse_id << ',' << r.mse_all << ',' << r.r2_id << ',' << r.r2_all << ','
        << (r.def2_pass ? "true" : "false") << ','
        << (r.def3_ran ? (r.def3_pass ? "true" : "false") : "skipped") << ',' << r.def3_failed << ','
        << (r.ok ? "true" : "false") << ',' << err << "\n";
  }
}

void write_timings_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  out << "name,seed,wall_seconds\n" << std::setprecision(6);
  for (const auto& r : records) out << r.name << ',' << r.seed << ',' << r.wall_seconds << "\n";
}

double HeatmapGrid::cell_lo_a(int i) const { return a_lo + (a_hi - a_lo) * i / resolution; }
double HeatmapGrid::cell_hi_a(int i) const { return a_lo + (a_hi - a_lo) * (i + 1) / resolution; }
double HeatmapGrid::cell_lo_b(int j) const { return b_lo + (b_hi - b_lo) * j / resolution; }
double HeatmapGrid::cell_hi_b(int j) const { return b_lo + (b_hi - b_lo) * (j + 1) / resolution; }

double HeatmapGrid::global_mean() const { return mean_of(mean_err); }

double HeatmapGrid::band_mean(double lo, double hi, bool inside) const {
  double s = 0.0;
  int n = 0;
  for (int i = 0; i < resolution; ++i) {
    const bool in = cell_lo_a(i) >= lo && cell_hi_a(i) <= hi;
    const bool out = cell_hi_a(i) <= lo || cell_lo_a(i) >= hi;
    if (inside ? !in : !out) continue;
    for (int j = 0; j < resolution; ++j) {
      s += mean_err[static_cast<std::size_t>(i * resolution + j)];
      ++n;
    }
  }
  if (n == 0) throw ValidationError("no heatmap cells lie " + std::string(inside ? "inside" : "outside") + " the band");
  return s / n;
}

void HeatmapGrid::write_csv(std::ostream& out) const {
  out << "i,j,z1x_lo,z1x_hi,z2x_lo,z2x_hi,mean_err,in_support\n" << std::setprecision(8);
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j)
      out << i << ',' << j << ',' << cell_lo_a(i) << ',' << cell_hi_a(i) << ',' << cell_lo_b(j) << ','
          << cell_hi_b(j) << ',' << mean_err[static_cast<std::size_t>(i * resolution + j)] << ','
          << (in_support[static_cast<std::size_t>(i * resolution + j)] ? 1 : 0) << "\n";
}

void HeatmapGrid::write_pgm(std::ostream& out) const {
  std::vector<double> sorted = mean_err;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(std::max(0.0, std::ceil(0.99 * static_cast<double>(sorted.size())) - 1.0));
  const double p99 = sorted.empty() ? 0.0 : sorted[idx];
  std::vector<unsigned char> gray(static_cast<std::size_t>(resolution * resolution));
  for (int row = 0; row < resolution; ++row) {
    const int j = resolution - 1 - row;
    for (int i = 0; i < resolution; ++i) {
      const double e = mean_err[static_cast<std::size_t>(i * resolution + j)];
      gray[static_cast<std::size_t>(row * resolution + i)] = p99 > 0.0 ? to_byte(std::min(e, p99) / p99) : 0;
    }
  }
  compgen::write_pgm(out, resolution, resolution, gray);
}

HeatmapGrid heatmap(const ExperimentConfig& config, const Network& net, std::uint64_t seed, int jobs) {
  config.validate();
  const CompositionalModel model = config.build_model();
  const LatentBox& box = config.train_support.box;
  if (net.input_dim() != box.size() || net.output_dim() != model.observation_layout().size())
    throw ValidationError("network does not match the config's model");
  HeatmapGrid g;
  g.axes = config.heatmap_axes;
  g.resolution = config.heatmap_resolution;
  const Interval& ia = box.axis(g.axes.slot_a, g.axes.dim_a);
  const Interval& ib = box.axis(g.axes.slot_b, g.axes.dim_b);
  g.a_lo = ia.lo;
  g.a_hi = ia.hi;
  g.b_lo = ib.lo;
  g.b_hi = ib.hi;
  const int res = g.resolution;
  g.mean_err.assign(static_cast<std::size_t>(res * res), 0.0);
  g.in_support.assign(static_cast<std::size_t>(res * res), 0);
  const int ia_flat = g.axes.slot_a * box.dim() + g.axes.dim_a;
  const int ib_flat = g.axes.slot_b * box.dim() + g.axes.dim_b;
  const std::uint64_t key = derive_seed(seed, kSeedHeatmap);
  parallel_for(static_cast<std::size_t>(res * res), std::max(1, jobs), [&](std::size_t cell) {
    const int i = static_cast<int>(cell) / res;
    const int j = static_cast<int>(cell) % res;
    RandomStream rng(key, cell);
    Eigen::MatrixXd z(box.size(), config.heatmap_per_cell);
    Eigen::MatrixXd x(model.observation_layout().size(), config.heatmap_per_cell);
    for (int s = 0; s < config.heatmap_per_cell; ++s) {
      LatentPoint p(box.slots(), box.dim());
      for (int a = 0; a < box.size(); ++a) p.flat()[a] = rng.uniform(box.axes()[static_cast<std::size_t>(a)].lo, box.axes()[static_cast<std::size_t>(a)].hi);
      p.flat()[ia_flat] = 0.5 * (g.cell_lo_a(i) + g.cell_hi_a(i));
      p.flat()[ib_flat] = 0.5 * (g.cell_lo_b(j) + g.cell_hi_b(j));
      z.col(s) = p.flat();
      x.col(s) = evaluate(model, p).values;
    }
    g.mean_err[cell] = (net.forward(z) - x).squaredNorm() / static_cast<double>(x.size());
  });
  const SampleSet train_set = sample_support(config.train_support, config.train_samples, derive_seed(seed, kSeedTrain), jobs);
  for (const auto& p : train_set.points) {
    auto cell_of = [res](double v, double lo, double hi) {
      return std::clamp(static_cast<int>(std::floor((v - lo) / (hi - lo) * res)), 0, res - 1);
    };
    const int i = cell_of(p.flat()[ia_flat], g.a_lo, g.a_hi);
    const int j = cell_of(p.flat()[ib_flat], g.b_lo, g.b_hi);
    g.in_support[static_cast<std::size_t>(i * res + j)] = 1;
  }
  return g;
}

}  // namespace compgen
