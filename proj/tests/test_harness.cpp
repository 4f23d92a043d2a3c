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

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "compgen/common.hpp"
#include "compgen/config.hpp"
#include "compgen/harness.hpp"
#include "compgen/io.hpp"

namespace compgen {
namespace {

const char* kTiny = R"(
[experiment]
name = tiny
seed = 3
seeds = 2
train_samples = 200
test_samples = 100

[model]
family = sprite
composition = sigmoid
height = 4
width = 4
latents = x,y
edge_sharpness = 8

[train_support]
kind = orthogonal
thickness = 0.02
anchors0 = 0.25,0.25 | 0.75,0.75
anchors1 = 0.5,0.5

[test_support]
kind = full

[net]
kind = compositional
hidden_width = 8
hidden_layers = 2

[train]
epochs = 3
batch_size = 32

[eval]
def2_resolution = 4
def2_probes = 2000
def3_grid = 2
def3_slice_tol = 0.1
heatmap_resolution = 4
heatmap_per_cell = 2
)";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return config_from_map(parse_ini(in));
}

TEST(Config, ParsesSectionsAndAnchors) {
  const ExperimentConfig c = parse(kTiny);
  EXPECT_EQ(c.name, "tiny");
  EXPECT_EQ(c.dim, 2);
  EXPECT_EQ(c.train_support.kind, SupportKind::kOrthogonalAnchors);
  ASSERT_EQ(c.train_support.anchors[0].size(), 2U);
  EXPECT_DOUBLE_EQ(c.train_support.anchors[0][1][1], 0.75);
  EXPECT_EQ(c.test_support.kind, SupportKind::kFullBox);
  EXPECT_DOUBLE_EQ(c.sprite.edge_sharpness, 8.0);
  EXPECT_EQ(c.build_model().observation_layout().size(), 48);
}

TEST(Config, UnknownKeyAndBadValueRejected) {
  EXPECT_THROW(parse(std::string(kTiny) + "\n[net]\nwidht = 3\n"), ValidationError);
  EXPECT_THROW(parse("[model]\nslots = many\n"), ValidationError);
  EXPECT_THROW(parse("[model\n"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/path.cfg"), ValidationError);
}

TEST(ConfigProperty, HashStableUnderReorderAndRoundTrip) {
  const ExperimentConfig a = parse(kTiny);
  // Same content, sections and keys in a different order, different name.
  const std::string reordered = R"(
[eval]
heatmap_per_cell = 2
heatmap_resolution = 4
def3_slice_tol = 0.1
def3_grid = 2
def2_probes = 2000
def2_resolution = 4
[train]
batch_size = 32
epochs = 3
[net]
hidden_layers = 2
hidden_width = 8
kind = compositional
[test_support]
kind = full
[train_support]
anchors1 = 0.5,0.5
anchors0 = 0.25,0.25 | 0.75,0.75
thickness = 0.02
kind = orthogonal
[model]
edge_sharpness = 8
latents = x,y
width = 4
height = 4
composition = sigmoid
family = sprite
[experiment]
test_samples = 100
train_samples = 200
seeds = 2
seed = 3
name = renamed
)";
  const ExperimentConfig b = parse(reordered);
  EXPECT_EQ(config_hash(a), config_hash(b));
  std::ostringstream out;
  write_config(out, a);
  EXPECT_EQ(config_hash(parse(out.str())), config_hash(a));
  ExperimentConfig c = a;
  c.train.epochs = 4;
  EXPECT_NE(config_hash(c), config_hash(a));
}

TEST(Harness, ParamMatchedMonolithic) {
  ExperimentConfig c = parse(kTiny);
  c.model_kind = "monolithic";
  ParamMatch match;
  const auto net = build_network(c, 0, &match);
  EXPECT_EQ(net->kind(), "monolithic");
  EXPECT_TRUE(match.within_tolerance);
  EXPECT_EQ(net->param_count(), match.achieved);
}

TEST(Harness, RunExperimentWritesArtifactsAndVerdicts) {
  const ExperimentConfig c = parse(kTiny);
  const auto dir = std::filesystem::temp_directory_path() / "compgen_test_run";
  std::filesystem::remove_all(dir);
  RunOptions o;
  o.out_dir = dir;
  const ExperimentResult r = run_experiment(c, 3, o);
  EXPECT_TRUE(r.record.ok) << r.record.error;
  EXPECT_TRUE(r.record.def2_pass);
  EXPECT_TRUE(r.record.def3_ran);
  EXPECT_TRUE(std::isfinite(r.record.r2_all));
  EXPECT_EQ(r.history.mse.size(), 3U);
  for (const char* f : {"config.cfg", "loss.csv", "params.cgl", "def3.csv", "record.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

TEST(Harness, TableAggregatesAndIsDeterministic) {
  ExperimentConfig a = parse(kTiny);
  ExperimentConfig b = a;
  b.name = "tiny_copy";
  RunOptions o;
  o.jobs = 2;
  const TableResult t = run_table({a, b}, o);
  ASSERT_EQ(t.records.size(), 4U);
  ASSERT_EQ(t.rows.size(), 2U);
  EXPECT_EQ(t.rows[0].seed_count, 2);
  EXPECT_EQ(t.rows[0].r2_all_mean, t.rows[1].r2_all_mean);
  EXPECT_EQ(t.rows[0].mse_id_sd, t.rows[1].mse_id_sd);
  std::ostringstream x, y;
  write_table_csv(x, t.rows);
  write_table_csv(y, run_table({a, b}, o).rows);
  EXPECT_EQ(x.str(), y.str());
  EXPECT_EQ(x.str().substr(0, x.str().find('\n')),
            "name,seed_count,mse_id_mean,mse_id_sd,mse_all_mean,mse_all_sd,r2_id_mean,r2_id_sd,"
            "r2_all_mean,r2_all_sd,def2_pass,def3_pass");
}

TEST(Harness, FailedRunIsRecordedNotFatal) {
  ExperimentConfig bad = parse(kTiny);
  bad.name = "diverges";
  bad.train.learning_rate = 1e300;
  const TableResult t = run_table({bad, parse(kTiny)});
  ASSERT_EQ(t.rows.size(), 2U);
  EXPECT_EQ(t.rows[0].failed_runs, 2);
  EXPECT_FALSE(t.records[0].ok);
  EXPECT_NE(t.records[0].error.find("diverges"), std::string::npos);
  EXPECT_EQ(t.rows[1].failed_runs, 0);
}

TEST(Heatmap, UntrainedModelEmitsGridAndFiles) {
  const ExperimentConfig c = parse(kTiny);
  const auto net = build_network(c, 0);
  const HeatmapGrid g = heatmap(c, *net, 1);
  ASSERT_EQ(g.mean_err.size(), 16U);
  for (double v : g.mean_err) EXPECT_GE(v, 0.0);
  EXPECT_GT(g.global_mean(), 0.01);
  std::ostringstream csv, pgm;
  g.write_csv(csv);
  g.write_pgm(pgm);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "i,j,z1x_lo,z1x_hi,z2x_lo,z2x_hi,mean_err,in_support");
  EXPECT_EQ(pgm.str().substr(0, 2), "P5");
  EXPECT_EQ(pgm.str().size(), std::string("P5\n4 4\n255\n").size() + 16);
  ExperimentConfig small = c;
  small.heatmap_resolution = 3;
  EXPECT_THROW(heatmap(small, *net, 1), ValidationError);
}

TEST(Heatmap, BandMeanUsesWholeCells) {
  HeatmapGrid g;
  g.resolution = 4;
  g.mean_err = {1, 1, 1, 1, 5, 5, 5, 5, 9, 9, 9, 9, 1, 1, 1, 1};
  g.in_support.assign(16, 1);
  EXPECT_DOUBLE_EQ(g.band_mean(0.25, 0.75, true), 7.0);
  EXPECT_DOUBLE_EQ(g.band_mean(0.25, 0.75, false), 1.0);
  EXPECT_DOUBLE_EQ(g.global_mean(), 4.0);
}

TEST(Io, ImagesAndCsv) {
  std::ostringstream pgm;
  write_pgm(pgm, 2, 1, {0, 255});
  EXPECT_EQ(pgm.str(), std::string("P5\n2 1\n255\n") + std::string("\x00\xff", 2));
  EXPECT_EQ(to_byte(-1.0), 0);
  EXPECT_EQ(to_byte(2.0), 255);
  std::ostringstream row;
  write_csv_row(row, Eigen::Vector2d(0.5, -1.0));
  EXPECT_EQ(row.str(), "0.5,-1\n");
}

}  // namespace
}  // namespace compgen
