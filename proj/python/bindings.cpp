#include "perfhom/error.hpp"
#include "perfhom/harness.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

namespace py = pybind11;
using perfhom::StudyConfig;
using perfhom::TheoremTag;

namespace {

// Python objects cross the boundary as JSON text.
nlohmann::json to_json(const py::object& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

StudyConfig config_from(const py::dict& config) {
  StudyConfig c = to_json(config).get<StudyConfig>();
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_perfhom, m) {
  m.doc() = "Convergence studies for perforated domains with thin inclusions";

  static py::exception<perfhom::Error> error(m, "PerfhomError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const perfhom::Error& e) {
      py::object exc = error;
      py::object instance = exc(e.what());
      instance.attr("code") = std::string(perfhom::to_string(e.code()));
      PyErr_SetObject(error.ptr(), instance.ptr());
    } catch (const nlohmann::json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "default_config",
      [](const std::string& tag, int dim) {
        return to_python(StudyConfig::defaults(perfhom::theorem_tag_from_string(tag), dim));
      },
      py::arg("tag") = "T2", py::arg("dim") = 2, "Default study configuration of a theorem tag as a dict.");

  m.def(
      "predicted_bound",
      [](const std::string& tag, double eps, double eta, int n, std::optional<double> kappa, double f_omega,
         double f_theta) {
        return perfhom::predicted_bound(perfhom::theorem_tag_from_string(tag), eps, eta, n, kappa,
                                        {f_omega, f_theta});
      },
      py::arg("tag"), py::arg("eps"), py::arg("eta") = 1.0, py::arg("n") = 2, py::arg("kappa") = py::none(),
      py::arg("f_omega") = 1.0, py::arg("f_theta") = 0.0);

  m.def(
      "fit_rate",
      [](const std::vector<std::pair<double, double>>& pairs) { return to_python(perfhom::fit_rate(pairs)); },
      py::arg("pairs"), "Least-squares slope of log(error) against log(eps).");

  m.def(
      "run_study",
      [](const py::dict& config, int jobs) {
        const StudyConfig c = config_from(config);
        perfhom::RateReport r;
        {
          py::gil_scoped_release release;
          r = perfhom::run_study(c, {jobs});
        }
        return to_python(r);
      },
      py::arg("config"), py::arg("jobs") = 1);

  m.def(
      "run_kappa_study",
      [](const py::dict& config) {
        const StudyConfig c = config_from(config);
        perfhom::KappaStudy s;
        {
          py::gil_scoped_release release;
          s = perfhom::run_kappa_study(c);
        }
        return to_python(s);
      },
      py::arg("config"));

  m.def(
      "run_corrector_study",
      [](const py::dict& config, int order, int grid) {
        const StudyConfig c = config_from(config);
        perfhom::CorrectorStudy s;
        {
          py::gil_scoped_release release;
          s = perfhom::run_corrector_study(c, order, grid);
        }
        return to_python(s);
      },
      py::arg("config"), py::arg("order") = 64, py::arg("grid") = 256);

  m.def(
      "validate_layout",
      [](const py::dict& config, double eps) {
        const StudyConfig c = config_from(config);
        return to_python(perfhom::validate_layout(c.layout_at(eps)));
      },
      py::arg("config"), py::arg("eps"));

  m.def(
      "s_norm_constant",
      [](double value, double h_surface) {
        perfhom::Box box;
        box.dim = 2;
        box.lo = perfhom::Vec3(0, -0.5, 0);
        box.hi = perfhom::Vec3(1, 0.5, 0);
        perfhom::SlabOptions o;
        o.h_surface = h_surface;
        const auto slab = perfhom::make_slab(box, 0.0, o);
        return perfhom::s_norm(slab, perfhom::SurfaceDensity::constant(value)).value;
      },
      py::arg("value"), py::arg("h_surface") = 1.0 / 64,
      "Multiplier norm of a constant density on S = (0,1) x {0} in the flat slab.");
}
