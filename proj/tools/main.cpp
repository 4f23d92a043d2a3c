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

// compgen command-line interface.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "compgen/common.hpp"
#include "compgen/config.hpp"
#include "compgen/differential.hpp"
#include "compgen/generative.hpp"
#include "compgen/harness.hpp"
#include "compgen/io.hpp"
#include "compgen/latent.hpp"
#include "compgen/learner.hpp"
#include "compgen/reconstruction.hpp"
#include "compgen/rng.hpp"

namespace fs = std::filesystem;
using namespace compgen;

namespace {

struct Globals {
  std::vector<std::string> configs;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool quiet = false;
  int jobs = 1;
};

class Result {
 public:
  template <typename T>
  Result& add(const std::string& key, const T& value) {
    std::ostringstream s;
    if constexpr (std::is_same_v<T, bool>)
      s << (value ? "true" : "false");
    else if constexpr (std::is_floating_point_v<T>)
      s << format_double(value, 6);
    else
      s << value;
    items_.emplace_back(key, s.str());
    return *this;
  }
  std::string line() const {
    std::string out = "RESULT";
    for (const auto& [k, v] : items_) out += " " + k + "=" + v;
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

fs::path out_dir(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("COMPGEN_OUT"); env && *env) return env;
  return "out";
}

ExperimentConfig load_one(const Globals& g) {
  if (g.configs.empty()) throw ValidationError("--config <path> is required");
  if (g.configs.size() > 1) throw ValidationError("this subcommand takes a single --config");
  ExperimentConfig c = load_config(g.configs.front());
  if (g.seed_set) c.seed = g.seed;
  return c;
}

std::ostream& log(const Globals& g) {
  static std::ostringstream sink;
  if (g.quiet) {
    sink.str("");
    return sink;
  }
  return std::cerr;
}

std::string path_str(const fs::path& p) { return p.string(); }

Result cmd_gen(const Globals& g, const std::string& split, std::size_t n) {
  const ExperimentConfig c = load_one(g);
  const CompositionalModel model = c.build_model();
  const SupportSpec& spec = split == "all" ? c.test_support : c.train_support;
  const std::uint64_t tag = split == "train" ? kSeedTrain : split == "id" ? kSeedIdTest : kSeedAllTest;
  if (n == 0) n = split == "train" ? c.train_samples : c.test_samples;
  const SampleSet samples = sample_support(spec, n, derive_seed(c.seed, tag), g.jobs);
  const auto data = dataset(model, samples, g.jobs);
  const fs::path dir = ensure_dir(out_dir(g));
  const fs::path csv = dir / ("dataset_" + split + ".csv");
  {
    auto out = open_output(csv);
    const int kd = model.latent_box.size();
    const int nobs = model.observation_layout().size();
    for (int i = 0; i < kd; ++i) out << 'z' << i << ',';
    for (int i = 0; i < nobs; ++i) out << 'x' << i << (i + 1 < nobs ? "," : "\n");
    for (const auto& d : data) {
      Eigen::VectorXd row(kd + nobs);
      row << d.latent.flat(), d.observation.values;
      write_csv_row(out, row, 8);
    }
  }
  const int tiles = static_cast<int>(std::min<std::size_t>(64, data.size()));
  write_image_grid(dir / ("preview_" + split + ".ppm"), model.observation_layout(),
                   observation_matrix(data).leftCols(tiles), 8);
  log(g) << "wrote " << data.size() << " samples to " << csv.string() << "\n";
  return Result().add("split", split).add("n", data.size()).add("N", model.observation_layout().size()).add("path", path_str(csv));
}

Result cmd_check_support(const Globals& g) {
  const ExperimentConfig c = load_one(g);
  const auto report = check_compositional_support(c.train_support, c.test_support, c.def2_resolution,
                                                  c.def2_probes, derive_seed(c.seed, kSeedDef2));
  const fs::path dir = ensure_dir(out_dir(g));
  const SampleSet p = sample_support(c.train_support, c.def2_probes, derive_seed(derive_seed(c.seed, kSeedDef2), 1), g.jobs);
  for (int k = 0; k < c.slots; ++k) {
    auto out = open_output(dir / ("coverage_train_slot" + std::to_string(k) + ".csv"));
    marginal_coverage(p, k, c.def2_resolution).write_csv(out);
  }
  {
    auto out = open_output(dir / "def2_offending.csv");
    out << "slot,cell_index\n";
    for (const auto& cell : report.offending) out << cell.slot << ',' << cell.cell_index << "\n";
  }
  for (std::size_t k = 0; k < report.slot_pass.size(); ++k)
    log(g) << "slot " << k << ": " << (report.slot_pass[k] ? "pass" : "fail") << "\n";
  return Result().add("pass", report.pass()).add("offending", report.offending.size());
}

Result cmd_check_sufficient(const Globals& g) {
  const ExperimentConfig c = load_one(g);
  const CompositionalModel model = c.build_model();
  const SampleSet samples = sample_support(c.train_support, c.train_samples, derive_seed(c.seed, kSeedTrain), g.jobs);
  SufficiencyOptions opt = c.def3_options;
  opt.jobs = g.jobs;
  const auto report = check_sufficient_support(model, samples, opt);
  const fs::path dir = ensure_dir(out_dir(g));
  {
    auto out = open_output(dir / "def3.csv");
    report.write_csv(out);
  }
  log(g) << report.failed() << " of " << report.probes.size() << " probes failed\n";
  return Result().add("pass", report.pass()).add("probes", report.probes.size()).add("probes_failed", report.failed()).add("M", report.target);
}

Result cmd_reconstruct(const Globals& g, int nodes, double step, double tol, std::size_t q_n,
                       const std::string& params, const std::string& slices) {
  const ExperimentConfig c = load_one(g);
  const CompositionalModel model = c.build_model();
  TeacherOracle teacher;
  std::vector<ComponentCanvas> phi0;
  std::unique_ptr<Network> net;
  const LatentPoint p0 = auto_initial_point(c.train_support);
  const bool audit = !params.empty();
  if (audit) {
    ExperimentConfig nc = c;
    nc.model_kind = "compositional";
    net = build_network(nc, 0);
    load_params(params, *net);
    auto* comp = dynamic_cast<CompositionalNet*>(net.get());
    teacher.box = model.latent_box;
    teacher.evaluate = [comp, layout = model.observation_layout()](const LatentPoint& z) {
      return Observation{layout, comp->forward(Eigen::VectorXd(z.flat()))};
    };
    for (int k = 0; k < c.slots; ++k)
      phi0.push_back({model.canvas_layout(), comp->slot_canvas(k, Eigen::MatrixXd(p0.slot(k))).col(0)});
  } else {
    teacher = teacher_from_model(model);
    phi0 = render_all(model, p0);
  }
  PlanOptions po;
  po.step = step;
  const PathPlan plan = plan_paths(c.train_support, regular_grids(model.latent_box, nodes), p0, po);
  IntegrationOptions io;
  io.jobs = g.jobs;
  SliceContextSource src;
  SampleSet samples;
  if (slices == "samples") {
    samples = sample_support(c.train_support, c.train_samples, derive_seed(c.seed, kSeedTrain), g.jobs);
    src.samples = &samples;
    src.families = model.families;
  } else if (slices != "anchors") {
    throw ValidationError("--contexts must be anchors or samples");
  }
  log(g) << "integrating " << c.slots << " slots, " << plan.unreachable_count() << " unreachable nodes\n";
  const GridField field = integrate_component(teacher, c.composition, plan, phi0, io, src.samples ? &src : nullptr);
  const fs::path dir = ensure_dir(out_dir(g));
  for (int k = 0; k < c.slots; ++k) {
    auto out = open_output(dir / ("field_slot" + std::to_string(k) + ".csv"));
    field.write_csv(out, k);
  }
  {
    auto out = open_output(dir / "unreachable.csv");
    out << "slot,node\n";
    for (int k = 0; k < c.slots; ++k)
      for (auto n : plan.unreachable_nodes[static_cast<std::size_t>(k)]) out << k << ',' << n << "\n";
  }
  Result r;
  r.add("audit", audit).add("unreachable", plan.unreachable_count());
  if (plan.unreachable_count() > 0) {
    log(g) << "skipping Q verification: the field has unreachable nodes\n";
    return r.add("verified", false);
  }
  const SampleSet q = sample_support(c.test_support, q_n, derive_seed(c.seed, kSeedAllTest), g.jobs);
  const ReconstructionReport rep = verify_generalization(field, c.composition, teacher, q, tol, audit ? nullptr : &model);
  {
    auto out = open_output(dir / "reconstruction.csv");
    rep.write_csv(out);
  }
  log(g) << rep.summary() << "\n";
  r.add("verified", true).add("pass", rep.pass()).add("q_mse", rep.q_mse).add("tol", tol);
  for (std::size_t k = 0; k < rep.slot_errors.size(); ++k)
    r.add("slot" + std::to_string(k) + "_max_abs", rep.slot_errors[k].max_abs);
  return r;
}

Result cmd_train(const Globals& g) {
  const ExperimentConfig c = load_one(g);
  RunOptions o;
  o.out_dir = out_dir(g);
  o.jobs = g.jobs;
  o.log = g.quiet ? nullptr : &std::cerr;
  const ExperimentResult res = run_experiment(c, c.seed, o);
  const auto& rec = res.record;
  return Result()
      .add("name", rec.name)
      .add("hash", rec.config_hash)
      .add("seed", rec.seed)
      .add("params", rec.param_count)
      .add("mse_id", rec.mse_id)
      .add("mse_all", rec.mse_all)
      .add("r2_id", rec.r2_id)
      .add("r2_all", rec.r2_all)
      .add("def2_pass", rec.def2_pass)
      .add("def3_pass", rec.def3_ran ? (rec.def3_pass ? "true" : "false") : "skipped");
}

Result cmd_table(const Globals& g, int seeds) {
  if (g.configs.empty()) throw ValidationError("--config <path> is required (repeatable)");
  std::vector<ExperimentConfig> configs;
  for (const auto& p : g.configs) {
    ExperimentConfig c = load_config(p);
    if (g.seed_set) c.seed = g.seed;
    if (seeds > 0) c.seeds = seeds;
    configs.push_back(std::move(c));
  }
  RunOptions o;
  o.out_dir = out_dir(g);
  o.jobs = g.jobs;
  o.log = g.quiet ? nullptr : &std::cerr;
  const TableResult t = run_table(configs, o);
  const fs::path dir = ensure_dir(out_dir(g));
  {
    auto out = open_output(dir / "table.csv");
    write_table_csv(out, t.rows);
  }
  {
    auto out = open_output(dir / "runs.csv");
    write_runs_csv(out, t.records);
  }
  {
    auto out = open_output(dir / "timings.csv");
    write_timings_csv(out, t.records);
  }
  if (!g.quiet) write_table_csv(std::cerr, t.rows);
  int failed = 0;
  for (const auto& r : t.records) failed += r.ok ? 0 : 1;
  return Result().add("rows", t.rows.size()).add("runs", t.records.size()).add("failed_runs", failed).add("path", path_str(dir / "table.csv"));
}

Result cmd_heatmap(const Globals& g, const std::string& params, int resolution) {
  ExperimentConfig c = load_one(g);
  if (resolution > 0) c.heatmap_resolution = resolution;
  c.validate();
  const fs::path dir = ensure_dir(out_dir(g));
  std::unique_ptr<Network> net;
  if (!params.empty()) {
    net = build_network(c, 0);
    load_params(params, *net);
  } else {
    RunOptions o;
    o.out_dir = dir / "train";
    o.jobs = g.jobs;
    o.log = g.quiet ? nullptr : &std::cerr;
    net = run_experiment(c, c.seed, o).net;
  }
  const HeatmapGrid h = heatmap(c, *net, c.seed, g.jobs);
  {
    auto out = open_output(dir / "heatmap.csv");
    h.write_csv(out);
  }
  {
    auto out = open_output(dir / "heatmap.pgm", true);
    h.write_pgm(out);
  }
  Result r;
  r.add("resolution", h.resolution).add("mean_err", h.global_mean());
  for (const auto& gap : c.train_support.gaps) {
    if (gap.slot != c.heatmap_axes.slot_a || gap.dim != c.heatmap_axes.dim_a) continue;
    const double in = h.band_mean(gap.excluded.lo, gap.excluded.hi, true);
    const double out = h.band_mean(gap.excluded.lo, gap.excluded.hi, false);
    r.add("gap_inside", in).add("gap_outside", out).add("gap_ratio", in / out);
    break;
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compgen: compositional generalization toolkit"};
  Globals g;
  g.jobs = default_jobs();
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--config", g.configs, "Experiment config file (repeatable for table)");
  app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { g.seed = s; g.seed_set = true; }, "Override the config seed");
  app.add_option("--out", g.out, "Output directory (default: $COMPGEN_OUT or ./out)");
  app.add_flag("--quiet", g.quiet, "Only print the RESULT line");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string split = "train";
  std::size_t n = 0;
  auto* gen = app.add_subcommand("gen", "Emit a dataset");
  gen->add_option("--split", split, "train, id or all")->check(CLI::IsMember({"train", "id", "all"}));
  gen->add_option("--n", n, "Sample count (default from config)");

  auto* support = app.add_subcommand("check-support", "Def 2: compositional support of train vs test");
  auto* sufficient = app.add_subcommand("check-sufficient", "Def 3: sufficient support on the train samples");

  int nodes = 9;
  double step = 1.0 / 64.0, tol = 1e-3;
  std::size_t q_n = 1000;
  std::string params, contexts = "anchors";
  auto* recon = app.add_subcommand("reconstruct", "Reconstruct component functions along support paths");
  recon->add_option("--nodes", nodes, "Grid nodes per latent axis")->check(CLI::Range(2, 1000));
  recon->add_option("--step", step, "Integration step")->check(CLI::PositiveNumber);
  recon->add_option("--tol", tol, "Q-equivalence MSE tolerance");
  recon->add_option("--q-samples", q_n, "Q samples for verification");
  recon->add_option("--params", params, "Audit a trained compositional net (CGL1 file)");
  recon->add_option("--contexts", contexts, "Superposition sets: anchors or samples");

  auto* trn = app.add_subcommand("train", "Train the configured model and report ID/all metrics");
  int seeds = 0;
  auto* table = app.add_subcommand("table", "Run configs x seeds and aggregate");
  table->add_option("--seeds", seeds, "Seeds per config (default from config)");
  table->add_option("configs", g.configs, "Config files");

  int resolution = 0;
  std::string hparams;
  auto* heat = app.add_subcommand("heatmap", "Reconstruction-error heatmap over two latent axes");
  heat->add_option("--params", hparams, "Trained net (CGL1); trains first when absent");
  heat->add_option("--resolution", resolution, "Cells per axis (>= 4)");

  for (auto* sub : {gen, support, sufficient, recon, trn, table, heat}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }
  try {
    Result r;
    if (*gen) r = cmd_gen(g, split, n);
    else if (*support) r = cmd_check_support(g);
    else if (*sufficient) r = cmd_check_sufficient(g);
    else if (*recon) r = cmd_reconstruct(g, nodes, step, tol, q_n, params, contexts);
    else if (*trn) r = cmd_train(g);
    else if (*table) r = cmd_table(g, seeds);
    else if (*heat) r = cmd_heatmap(g, hparams, resolution);
    std::cout << r.line() << std::endl;
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (std::string(e.what()).find("--config") != std::string::npos) std::cerr << app.help();
    std::cout << "RESULT error=validation" << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << "RESULT error=runtime" << std::endl;
    return 2;
  }
}
