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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "compgen/common.hpp"
#include "compgen/config.hpp"
#include "compgen/differential.hpp"
#include "compgen/generative.hpp"
#include "compgen/harness.hpp"
#include "compgen/latent.hpp"
#include "compgen/learner.hpp"
#include "compgen/reconstruction.hpp"

namespace py = pybind11;
using namespace compgen;

namespace {

Eigen::MatrixXd points_matrix(const SampleSet& s) {
  if (s.points.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(s.points.size()), s.points.front().flat().size());
  for (std::size_t i = 0; i < s.points.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = s.points[i].flat().transpose();
  return m;
}

LatentPoint point_of(const LatentBox& box, const Eigen::VectorXd& flat) {
  if (flat.size() != box.size()) throw ValidationError("latent vector has the wrong length");
  return LatentPoint(box.slots(), box.dim(), flat);
}

py::dict rank_dict(const RankReport& r) {
  py::dict d;
  d["singular_values"] = r.singular_values;
  d["rank"] = r.numerical_rank;
  d["target"] = r.target;
  d["full_rank"] = r.full_rank();
  d["cutoff"] = r.cutoff;
  return d;
}

py::dict record_dict(const ExperimentRecord& r) {
  py::dict d;
  d["name"] = r.name;
  d["config_hash"] = r.config_hash;
  d["seed"] = r.seed;
  d["model_kind"] = r.model_kind;
  d["param_count"] = r.param_count;
  d["mse_id"] = r.mse_id;
  d["mse_all"] = r.mse_all;
  d["r2_id"] = r.r2_id;
  d["r2_all"] = r.r2_all;
  d["def2_pass"] = r.def2_pass;
  d["def3_pass"] = r.def3_ran ? py::cast(r.def3_pass) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_compgen, m) {
  m.doc() = "compgen core bindings";
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  py::enum_<CompositionKind>(m, "CompositionKind")
      .value("SUM", CompositionKind::kSum)
      .value("SIGMOID_OCCLUSION", CompositionKind::kSigmoidOcclusion)
      .value("STEP_OCCLUSION", CompositionKind::kStepOcclusion)
      .value("ALPHA_COMPOSITE", CompositionKind::kAlphaComposite);
  py::enum_<SupportKind>(m, "SupportKind")
      .value("FULL_BOX", SupportKind::kFullBox)
      .value("ORTHOGONAL", SupportKind::kOrthogonalAnchors)
      .value("DIAGONAL", SupportKind::kDiagonalBand)
      .value("GAPPED", SupportKind::kGappedOrthogonal)
      .value("GAUSSIAN", SupportKind::kGaussianOrthogonal);

  py::class_<LatentBox>(m, "LatentBox")
      .def_static("unit", &LatentBox::unit, py::arg("slots"), py::arg("dim"))
      .def_property_readonly("slots", &LatentBox::slots)
      .def_property_readonly("dim", &LatentBox::dim);

  py::class_<SupportSpec>(m, "SupportSpec")
      .def_static("full_box", &SupportSpec::full_box, py::arg("box"))
      .def_static("orthogonal", &SupportSpec::orthogonal, py::arg("box"), py::arg("anchors"), py::arg("thickness") = 0.02)
      .def_static("diagonal", &SupportSpec::diagonal, py::arg("box"), py::arg("width"))
      .def_static(
          "gapped",
          [](LatentBox box, std::vector<std::vector<Eigen::VectorXd>> anchors, double thickness,
             std::vector<std::tuple<int, int, double, double>> gaps) {
            std::vector<AxisGap> g;
            for (auto [s, d, lo, hi] : gaps) g.push_back({s, d, {lo, hi}});
            return SupportSpec::gapped(std::move(box), std::move(anchors), thickness, std::move(g));
          },
          py::arg("box"), py::arg("anchors"), py::arg("thickness"), py::arg("gaps"))
      .def_readonly("kind", &SupportSpec::kind)
      .def_readonly("box", &SupportSpec::box)
      .def("validate", &SupportSpec::validate)
      .def("contains", [](const SupportSpec& s, const Eigen::VectorXd& z) { return contains(s, point_of(s.box, z)); });

  py::class_<SampleSet>(m, "SampleSet")
      .def("__len__", [](const SampleSet& s) { return s.points.size(); })
      .def("array", &points_matrix, "Samples as an (n, K*D) array");

  m.def("sample_support", &sample_support, py::arg("spec"), py::arg("n"), py::arg("seed"), py::arg("jobs") = 1);
  m.def(
      "check_compositional_support",
      [](const SupportSpec& p, const SupportSpec& q, int res, std::size_t n_probe, std::uint64_t seed) {
        const auto r = check_compositional_support(p, q, res, n_probe, seed);
        py::dict d;
        d["pass"] = r.pass();
        d["slot_pass"] = r.slot_pass;
        py::list cells;
        for (const auto& c : r.offending) cells.append(py::make_tuple(c.slot, c.cell_index));
        d["offending"] = cells;
        return d;
      },
      py::arg("p"), py::arg("q"), py::arg("resolution"), py::arg("n_probe"), py::arg("seed"));

  py::class_<SpriteRenderer>(m, "SpriteRenderer")
      .def(py::init([](int height, int width, int channels, std::vector<std::string> latents, double sharpness,
                       double intensity, double hue) {
             SpriteRenderer r;
             r.height = height;
             r.width = width;
             r.channels = channels;
             r.latents.clear();
             for (const auto& l : latents) r.latents.push_back(sprite_latent_from_string(l));
             r.edge_sharpness = sharpness;
             r.intensity = intensity;
             r.hue = hue;
             r.validate();
             return r;
           }),
           py::arg("height") = 16, py::arg("width") = 16, py::arg("channels") = 3,
           py::arg("latents") = std::vector<std::string>{"x", "y", "size"}, py::arg("edge_sharpness") = 40.0,
           py::arg("intensity") = 1.0, py::arg("hue") = 0.0)
      .def_property_readonly("dim", &SpriteRenderer::dim);

  py::class_<SmoothAnalytic>(m, "SmoothAnalytic")
      .def_static(
          "random",
          [](int dim, int outputs, std::uint64_t seed, double scale) {
            return SmoothAnalytic::random(dim, CanvasLayout::flat(outputs), seed, scale);
          },
          py::arg("dim"), py::arg("outputs"), py::arg("seed"), py::arg("scale") = 0.5)
      .def_readwrite("coefficients", &SmoothAnalytic::coefficients);

  py::class_<CompositionalModel>(m, "CompositionalModel")
      .def(py::init([](py::list families, CompositionKind kind) {
             CompositionalModel model;
             for (auto f : families) {
               if (py::isinstance<SpriteRenderer>(f))
                 model.families.emplace_back(f.cast<SpriteRenderer>());
               else
                 model.families.emplace_back(f.cast<SmoothAnalytic>());
             }
             model.composition = kind;
             model.latent_box = LatentBox::unit(model.slots(), family_dim(model.families.front()));
             model.validate();
             return model;
           }),
           py::arg("families"), py::arg("composition"))
      .def_property_readonly("slots", &CompositionalModel::slots)
      .def_property_readonly("box", [](const CompositionalModel& m) { return m.latent_box; })
      .def_property_readonly("observation_size", [](const CompositionalModel& m) { return m.observation_layout().size(); })
      .def_property_readonly("canvas_size", [](const CompositionalModel& m) { return m.canvas_layout().size(); });

  m.def("evaluate", [](const CompositionalModel& model, const Eigen::VectorXd& z) {
    return evaluate(model, point_of(model.latent_box, z)).values;
  });
  m.def("render_components", [](const CompositionalModel& model, const Eigen::VectorXd& z) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& c : render_all(model, point_of(model.latent_box, z))) out.push_back(c.values);
    return out;
  });
  m.def(
      "jacobian_of_composition",
      [](const CompositionalModel& model, const Eigen::VectorXd& z, int k, double h, bool analytic) {
        return jacobian_of_composition(model, point_of(model.latent_box, z), k, h,
                                       analytic ? JacobianMethod::kAnalyticOracle : JacobianMethod::kCentralDifference)
            .matrix;
      },
      py::arg("model"), py::arg("z"), py::arg("k"), py::arg("h") = 1e-3, py::arg("analytic") = false);
  m.def(
      "rank_report", [](const Eigen::MatrixXd& a, double tau) { return rank_dict(rank_report(a, tau, static_cast<int>(a.cols()))); },
      py::arg("matrix"), py::arg("tau") = 1e-3);
  m.def(
      "check_sufficient_support",
      [](const CompositionalModel& model, const SampleSet& samples, int grid, double slice_tol, int max_pprime) {
        SufficiencyOptions o;
        o.probe_grid_resolution = grid;
        o.slice_tol = slice_tol;
        o.max_pprime = max_pprime;
        const auto r = check_sufficient_support(model, samples, o);
        py::dict d;
        d["pass"] = r.pass();
        d["probes"] = r.probes.size();
        d["failed"] = r.failed();
        d["M"] = r.target;
        return d;
      },
      py::arg("model"), py::arg("samples"), py::arg("grid") = 4, py::arg("slice_tol") = 0.05, py::arg("max_pprime") = 32);
  m.def(
      "solve_component_jacobian",
      [](const std::vector<Eigen::MatrixXd>& df, const std::vector<Eigen::MatrixXd>& dc) {
        std::vector<JacobianEstimate> a, b;
        for (const auto& x : df) a.push_back({x, JacobianMethod::kAnalyticOracle, 0.0, {}});
        for (const auto& x : dc) b.push_back({x, JacobianMethod::kAnalyticOracle, 0.0, {}});
        const auto s = solve_component_jacobian(a, b);
        return py::make_tuple(s.jacobian, s.residual);
      },
      py::arg("df_list"), py::arg("dc_list"));
  m.def(
      "reconstruct",
      [](const CompositionalModel& model, const SupportSpec& support, int nodes, double step,
         const SupportSpec& q_spec, std::size_t q_samples, double tol, std::uint64_t seed) {
        const PathPlan plan = plan_paths(support, regular_grids(model.latent_box, nodes), std::nullopt, {step, {}});
        py::dict d;
        d["unreachable"] = plan.unreachable_count();
        const GridField field =
            integrate_component(teacher_from_model(model), model.composition, plan, render_all(model, plan.p0));
        if (plan.unreachable_count() == 0) {
          const auto rep = verify_generalization(field, model.composition, teacher_from_model(model),
                                                 sample_support(q_spec, q_samples, seed), tol, &model);
          d["q_mse"] = rep.q_mse;
          d["pass"] = rep.pass();
          std::vector<double> errs;
          for (const auto& e : rep.slot_errors) errs.push_back(e.max_abs);
          d["max_node_error"] = errs;
        }
        return d;
      },
      py::arg("model"), py::arg("support"), py::arg("nodes") = 9, py::arg("step") = 1.0 / 64.0, py::arg("q_spec"),
      py::arg("q_samples") = 1000, py::arg("tol") = 1e-3, py::arg("seed") = 0);
  m.def(
      "evaluate_metrics",
      [](const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
        const Metrics mt = evaluate_metrics(prediction.transpose(), target.transpose());
        return py::make_tuple(mt.mse, mt.r2_vw);
      },
      py::arg("prediction"), py::arg("target"), "Metrics over (n, outputs) arrays: (mse, r2_vw)");

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readwrite("name", &ExperimentConfig::name)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("train_samples", &ExperimentConfig::train_samples)
      .def_readwrite("test_samples", &ExperimentConfig::test_samples)
      .def_property(
          "epochs", [](const ExperimentConfig& c) { return c.train.epochs; },
          [](ExperimentConfig& c, int e) { c.train.epochs = e; })
      .def_readwrite("hidden_width", &ExperimentConfig::hidden_width)
      .def_readwrite("model_kind", &ExperimentConfig::model_kind)
      .def_readwrite("def3", &ExperimentConfig::def3)
      .def("hash", &config_hash)
      .def("build_model", &ExperimentConfig::build_model);
  m.def("load_config", &load_config, py::arg("path"));
  m.def(
      "parse_config",
      [](const std::string& text) {
        std::istringstream in(text);
        return config_from_map(parse_ini(in));
      },
      py::arg("text"));
  m.def(
      "run_experiment",
      [](const ExperimentConfig& c, std::uint64_t seed) {
        ExperimentRecord rec;
        {
          py::gil_scoped_release release;
          rec = run_experiment(c, seed).record;
        }
        return record_dict(rec);
      },
      py::arg("config"), py::arg("seed"));
}
