#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gflow/alignment.hpp"
#include "gflow/costs.hpp"
#include "gflow/data.hpp"
#include "gflow/flow.hpp"
#include "gflow/io.hpp"
#include "gflow/metrics.hpp"
#include "gflow/selftest.hpp"

namespace py = pybind11;
using namespace gflow;

namespace {

LatentGeometry latent(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& features) {
  return make_latent(Coords(coords), features);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Geometric optimal-transport flow matching for featured point clouds";

  py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<PersistenceError>(m, "PersistenceError", PyExc_OSError);

  py::class_<PointSet>(m, "PointSet")
      .def_readwrite("coords", &PointSet::coords)
      .def_readwrite("features", &PointSet::features)
      .def_property_readonly("n", &PointSet::size)
      .def("__len__", &PointSet::size);
  py::class_<Geometry, PointSet>(m, "Geometry")
      .def(py::init([](const Eigen::MatrixXd& coords, const Eigen::MatrixXd& features, std::string tag) {
             return make_geometry(Coords(coords), features, std::move(tag));
           }),
           py::arg("coords"), py::arg("features"), py::arg("tag") = "")
      .def_readwrite("tag", &Geometry::tag)
      .def("__eq__", [](const Geometry& a, const Geometry& b) { return a == b; });
  py::class_<LatentGeometry, PointSet>(m, "LatentGeometry")
      .def(py::init(&latent), py::arg("coords"), py::arg("features"));

  py::class_<TemplateSpec>(m, "TemplateSpec")
      .def(py::init<>())
      .def_readwrite("num_templates", &TemplateSpec::num_templates)
      .def_readwrite("atoms_per_template", &TemplateSpec::atoms_per_template)
      .def_readwrite("coord_scale", &TemplateSpec::coord_scale)
      .def_readwrite("feature_classes", &TemplateSpec::feature_classes)
      .def_readwrite("jitter_sigma", &TemplateSpec::jitter_sigma)
      .def_readwrite("seed", &TemplateSpec::seed);
  py::class_<ValidityRule>(m, "ValidityRule")
      .def(py::init<>())
      .def_readwrite("min_pair_dist", &ValidityRule::min_pair_dist)
      .def_readwrite("max_radius", &ValidityRule::max_radius)
      .def_readwrite("onehot_margin", &ValidityRule::onehot_margin);

  m.def("make_dataset", &make_dataset, py::arg("spec"), py::arg("count"), py::arg("rule") = ValidityRule{});
  m.def(
      "is_valid",
      [](const PointSet& g, const ValidityRule& rule) {
        const Validity v = is_valid(g, rule);
        return py::make_tuple(v.ok, v.reason);
      },
      py::arg("geometry"), py::arg("rule") = ValidityRule{}, "Returns (ok, first failed clause).");

  m.def("hungarian", [](const Eigen::MatrixXd& c) { return hungarian(CostMatrix{c}).map(); },
        "Column j is assigned row result[j].");
  m.def(
      "kabsch", [](const Eigen::MatrixXd& x_target, const Eigen::MatrixXd& x_ref) {
        return Eigen::Matrix3d(kabsch(Coords(x_target), Coords(x_ref)).matrix());
      },
      py::arg("x_target"), py::arg("x_ref"));

  py::class_<OmtSolution>(m, "OmtSolution")
      .def_property_readonly("rotation", [](const OmtSolution& s) { return Eigen::Matrix3d(s.rotation.matrix()); })
      .def_property_readonly("permutation", [](const OmtSolution& s) { return s.permutation.map(); })
      .def_readonly("aligned_target", &OmtSolution::aligned_target)
      .def_readonly("cost", &OmtSolution::cost)
      .def_readonly("iterations", &OmtSolution::iterations);
  m.def(
      "solve_omt", [](const PointSet& z1, const PointSet& z0, double lambda, int max_iters) {
        return solve_omt(z1, z0, lambda, max_iters);
      },
      py::arg("z1"), py::arg("z0"), py::arg("lambda_") = 0.5, py::arg("max_iters") = 1);
  m.def(
      "brute_force_cost", [](const PointSet& z1, const PointSet& z0, double lambda) {
        return brute_force_omt(z1, z0, lambda).cost;
      },
      py::arg("z1"), py::arg("z0"), py::arg("lambda_") = 0.5);
  m.def("optimal_molecule_cost", &optimal_molecule_cost, py::arg("g0"), py::arg("g1"), py::arg("lambda_") = 0.5,
        py::arg("exact") = false, py::arg("max_iters") = 1);

  m.def("sample_noise", &sample_noise, py::arg("n"), py::arg("k"), py::arg("seed"));
  m.def(
      "project_zero_com", [](const Geometry& g) { return project_zero_com(g); }, py::arg("geometry"));

  py::class_<Model>(m, "Model")
      .def_readonly("identity_latent", &Model::identity_latent)
      .def_property_readonly("latent_k", &Model::latent_k)
      .def_property_readonly("param_count", &Model::param_count)
      .def_readonly("size_histogram", &Model::size_histogram)
      .def(
          "encode", [](const Model& self, const PointSet& g) { return encode(self, g, 0.0, 0); },
          py::arg("geometry"))
      .def(
          "decode", [](const Model& self, const PointSet& z) { return decode(self, z); }, py::arg("z"))
      .def(
          "velocity", [](const Model& self, const PointSet& z, double t) { return forward(self, z, t); },
          py::arg("z"), py::arg("t"));

  m.def(
      "train",
      [](const std::vector<Geometry>& data, const std::string& config_json) {
        const TrainConfig cfg = train_config_from_json(nlohmann::json::parse(config_json));
        TrainResult r = train(data, cfg);
        return py::make_tuple(std::move(r.model), r.loss_curve);
      },
      py::arg("data"), py::arg("config_json") = "{}", "Returns (model, flow loss curve).");

  m.def(
      "generate",
      [](const Model& model, int count, std::uint64_t seed, const std::string& solver, int steps) {
        SolverConfig cfg;
        cfg.method = solver_method_from_string(solver);
        cfg.fixed_steps = steps;
        const auto gen = generate(model, count, cfg, seed);
        py::list out;
        for (const auto& s : gen) out.append(py::make_tuple(s.geometry, s.steps));
        return out;
      },
      py::arg("model"), py::arg("count"), py::arg("seed") = 0, py::arg("solver") = "adaptive", py::arg("steps") = 100,
      "Returns a list of (geometry, accepted steps).");

  m.def("save_geometries", &save_geometries, py::arg("path"), py::arg("geometries"));
  m.def("load_geometries", &load_geometries, py::arg("path"), py::arg("allow_empty") = false);
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("model"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def(
      "eval_pairs",
      [](const std::filesystem::path& path, double lambda) {
        const CostReport r = distribution_cost(load_pairs(path), lambda);
        return py::dict(py::arg("total_cost") = r.total_cost, py::arg("per_atom_cost") = r.per_atom_cost,
                        py::arg("num_pairs") = r.num_pairs, py::arg("coord_part") = r.coord_part,
                        py::arg("feature_part") = r.feature_part);
      },
      py::arg("path"), py::arg("lambda_") = 0.5);

  m.def(
      "selftest",
      [](const std::string& suite, std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_selftest(suite, seed)) out.append(py::make_tuple(r.suite, r.name, r.passed, r.measured));
        return out;
      },
      py::arg("suite") = "align", py::arg("seed") = 0, "Returns a list of (suite, check, passed, measured).");
}
