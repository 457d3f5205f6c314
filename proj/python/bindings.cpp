#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "memvr/bench.hpp"
#include "memvr/errors.hpp"
#include "memvr/neighbors.hpp"
#include "memvr/theory.hpp"

namespace py = pybind11;
using namespace memvr;

namespace {

ConfigMap config_from(const std::map<std::string, std::string>& overrides, const std::string& text) {
  ConfigMap m;
  if (!text.empty()) m.merge_text(text, "<config>");
  for (const auto& [k, v] : overrides) m.set(k, v);
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Variance-reduced SGD with uniform q-memorization";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<LossModel>(m, "Problem")
      .def(py::init([](const Matrix& x, const Vector& y, const std::string& loss, double mu) {
             return LossModel(ProblemInstance(x, y, parse_loss_kind(loss), mu));
           }),
           py::arg("features"), py::arg("labels"), py::arg("loss"), py::arg("mu"))
      .def_property_readonly("n", &LossModel::n)
      .def_property_readonly("d", &LossModel::d)
      .def_property_readonly("mu", &LossModel::mu)
      .def_property_readonly("lipschitz", &LossModel::lipschitz)
      .def_property_readonly("loss", [](const LossModel& p) { return std::string(to_string(p.instance().loss())); })
      .def_property_readonly("features", [](const LossModel& p) { return p.instance().features(); })
      .def_property_readonly("labels", [](const LossModel& p) { return p.instance().labels(); })
      .def("objective", [](const LossModel& p, const Vector& w) { return objective(p, w); }, py::arg("w"))
      .def("gradient", [](const LossModel& p, const Vector& w) { return full_objective_and_gradient(p, w).gradient; },
           py::arg("w"))
      .def("point_gradient", [](const LossModel& p, std::size_t i, const Vector& w) {
             if (i >= p.n()) throw py::index_error("datapoint index out of range");
             return point_gradient(p, i, w).gradient;
           }, py::arg("i"), py::arg("w"))
      .def("reference", [](const LossModel& p) {
             const auto r = reference_optimum(p);
             return py::make_tuple(r.w_star, r.f_star);
           }, "(w*, f*) from a Newton solve");

  m.def("synthesize", [](std::size_t n, std::size_t d, const std::string& loss, double mu, std::uint64_t seed,
                         double noise, std::size_t clusters, double cluster_spread, double feature_scale) {
          SyntheticSpec s{n, d, parse_loss_kind(loss), mu, seed, noise, clusters, cluster_spread, feature_scale};
          return LossModel(synthesize_problem(s).instance);
        },
        py::arg("n"), py::arg("d"), py::arg("loss") = "ridge", py::arg("mu") = 0.1, py::arg("seed") = 0,
        py::arg("noise") = 0.0, py::arg("clusters") = 0, py::arg("cluster_spread") = 0.1,
        py::arg("feature_scale") = 1.0);

  m.def("load_libsvm", [](const std::string& path, const std::string& loss, double mu) {
          return LossModel(load_libsvm(path, parse_loss_kind(loss), mu));
        },
        py::arg("path"), py::arg("loss"), py::arg("mu"));

  m.def("knn_children", [](const LossModel& p, std::size_t q) {
          const auto g = build_knn_graph(p.instance(), q);
          std::vector<std::vector<std::size_t>> out(g.n());
          for (std::size_t i = 0; i < g.n(); ++i) out[i].assign(g.children(i).begin(), g.children(i).end());
          return out;
        },
        py::arg("problem"), py::arg("q"), "Children N_i of every node in the kNN sharing graph");

  m.def("default_config", [] { return ConfigMap().entries(); });
  m.def("run_trace", [](const std::map<std::string, std::string>& overrides, const std::string& text) {
          const RunConfig c = to_run_config(config_from(overrides, text));
          MetricsTrace t;
          {
            py::gil_scoped_release release;
            t = run_experiment(c);
          }
          return py::make_tuple(format_trace(t), t.diverged, t.divergence_message);
        },
        py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("text") = "",
        "Runs every seed of a configuration; returns (csv, diverged, message)");
  m.def("render_svg", [](const std::string& csv, const std::string& x_axis, const std::string& title) {
          return render_svg(parse_trace(csv), x_axis == "gradient" ? XAxis::gradient_evals : XAxis::datapoint_evals,
                            title);
        },
        py::arg("csv"), py::arg("x_axis") = "datapoint", py::arg("title") = "");

  auto th = m.def_submodule("theory", "Closed-form step sizes and rates");
  th.def("regime_k", &theory::regime_k, py::arg("mu"), py::arg("lipschitz"), py::arg("n"), py::arg("q"));
  th.def("a_star", &theory::a_star, py::arg("k"));
  th.def("gamma_star", &theory::gamma_star, py::arg("k"), py::arg("lipschitz"));
  th.def("a_tilde", &theory::a_tilde, py::arg("k"));
  th.def("gamma_tilde", &theory::gamma_tilde, py::arg("k"), py::arg("lipschitz"));
  th.def("universal_gamma", &theory::universal_gamma, py::arg("lipschitz"));
  th.def("universal_ratio", &theory::universal_ratio_check, py::arg("k"));
  th.def("rho_star", &theory::rho_star, py::arg("k"), py::arg("mu"), py::arg("lipschitz"), py::arg("q"), py::arg("n"));
  th.def("rho", py::overload_cast<double, double, double, std::size_t, std::size_t>(&theory::rho_of_gamma),
         py::arg("gamma"), py::arg("mu"), py::arg("lipschitz"), py::arg("n"), py::arg("q"));
  th.def("approx_bound", &theory::approx_bound, py::arg("t"), py::arg("gamma"), py::arg("mu"), py::arg("eps"),
         py::arg("l0"));
}
