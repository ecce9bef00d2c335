#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "geobias/cli.hpp"
#include "geobias/dci.hpp"
#include "geobias/errors.hpp"
#include "geobias/geometry.hpp"
#include "geobias/ingest.hpp"
#include "geobias/manifest.hpp"
#include "geobias/pipeline.hpp"
#include "geobias/psychometrics.hpp"
#include "geobias/regression.hpp"
#include "geobias/synth.hpp"

namespace py = pybind11;
using namespace geobias;

namespace {

py::dict factor_dict(const FactorSolution& fs) {
  py::dict d;
  d["n_factors"] = fs.n_factors;
  d["retained_items"] = fs.retained_items;
  d["dropped_items"] = fs.dropped_items;
  d["loadings"] = fs.loadings;
  d["raw_loadings"] = fs.raw_loadings();
  d["communalities"] = fs.communalities;
  d["uniqueness"] = fs.uniqueness;
  d["scores"] = fs.scores;
  d["eigenvalues"] = fs.eigenvalues;
  d["smc_used"] = fs.smc_used;
  d["iterations"] = fs.iterations;
  return d;
}

py::dict fit_dict(const OlsFit& fit) {
  py::list coefs;
  for (const auto& c : fit.coefficients) {
    py::dict e;
    e["name"] = c.name;
    e["coef"] = c.coef;
    e["std_err"] = c.std_err;
    e["t"] = c.t;
    e["p"] = c.p;
    e["ci_low"] = c.ci_low;
    e["ci_high"] = c.ci_high;
    coefs.append(e);
  }
  py::dict d;
  d["coefficients"] = coefs;
  d["n"] = fit.n;
  d["dof"] = fit.dof;
  d["rss"] = fit.rss;
  d["r_squared"] = fit.r_squared;
  d["degenerate_fit"] = fit.degenerate_fit;
  d["residuals"] = fit.residuals;
  return d;
}

PipelineOptions pipeline_options(const std::string& input_dir, const std::string& out_dir) {
  const std::filesystem::path in(input_dir);
  PipelineOptions o;
  o.users = (in / SynthFiles::users).string();
  o.geoip = (in / SynthFiles::geoip).string();
  o.polygons = (in / SynthFiles::polygons).string();
  o.dci = (in / SynthFiles::dci).string();
  o.registrations = (in / SynthFiles::registrations).string();
  o.out_dir = out_dir;
  return o;
}

}  // namespace

PYBIND11_MODULE(_geobias, m) {
  m.doc() = "Geolocation bias audit toolkit";
  m.attr("__version__") = GEOBIAS_VERSION;

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("run", py::overload_cast<const std::vector<std::string>&>(&geobias::run), py::arg("args"),
        "Run a CLI command line (without the program name); returns the exit code.");

  m.def(
      "synth",
      [](const std::string& config_json, const std::string& out_dir, unsigned threads) {
        SynthStageOptions o;
        o.config = synth_config_from_json(config_json);
        o.out_dir = out_dir;
        py::gil_scoped_release release;
        return to_json(run_synth_stage(o, threads));
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("threads") = 0,
      "Write a synthetic world into out_dir; returns the manifest JSON.");

  m.def(
      "pipeline",
      [](const std::string& input_dir, const std::string& out_dir, const std::string& bins,
         unsigned threads) {
        PipelineOptions o = pipeline_options(input_dir, out_dir);
        o.bins = bins;
        py::gil_scoped_release release;
        return to_json(run_pipeline(o, threads));
      },
      py::arg("input_dir"), py::arg("out_dir"), py::arg("bins") = "quintiles", py::arg("threads") = 0,
      "Run every stage on synth-named files in input_dir; returns the manifest JSON.");

  m.def(
      "composite_dci",
      [](const std::string& path) {
        auto rows = load_dci_csv(read_input_file(path), LoadPolicy::strict).rows;
        std::map<std::string, double> out;
        for (const auto& [zip, s] : composite_dci(rows)) out[zip] = s.dci;
        return out;
      },
      py::arg("path"), "ZIP -> composite distress score from a metrics CSV.");

  m.def("haversine_miles",
        [](double lat1, double lon1, double lat2, double lon2) {
          return haversine_miles({lat1, lon1}, {lat2, lon2});
        },
        py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));

  m.def(
      "boundary_distance_degrees",
      [](double lat, double lon, const std::vector<std::pair<double, double>>& ring) {
        Ring r;
        for (const auto& [a, b] : ring) r.push_back({a, b});
        if (!r.empty() && !(r.front() == r.back())) r.push_back(r.front());
        return boundary_distance_degrees({lat, lon}, std::vector<PolygonPart>{{r, {}}});
      },
      py::arg("lat"), py::arg("lon"), py::arg("ring"),
      "Distance in degrees from a point to a simple polygon given as (lat, lon) vertices.");

  m.def("cronbach_alpha", &cronbach_alpha, py::arg("scores"));
  m.def("spearman_brown", &spearman_brown, py::arg("alpha"), py::arg("p_items"),
        py::arg("target_items"));
  m.def(
      "principal_factors",
      [](const Eigen::MatrixXd& x, int n_factors, int iterate) {
        return factor_dict(principal_factors(x, n_factors, iterate));
      },
      py::arg("scores"), py::arg("n_factors") = 1, py::arg("iterate") = 0);
  m.def(
      "ols_fit",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
         double ci_level) { return fit_dict(ols_fit(x, y, names, ci_level)); },
      py::arg("x"), py::arg("y"), py::arg("names"), py::arg("ci_level") = 0.95);
  m.def("student_t_two_sided_p", &student_t_two_sided_p, py::arg("t"), py::arg("dof"));
}
