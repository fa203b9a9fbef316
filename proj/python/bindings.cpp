// Python bindings for the homogenization laboratory: medium presets,
// corrector solves, effective tensors, Monte Carlo simulation and the
// energy-distance diagnostic.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "homlab/config.hpp"
#include "homlab/diagnostics.hpp"
#include "homlab/effective.hpp"
#include "homlab/sde.hpp"

namespace py = pybind11;
using namespace homlab;
using nlohmann::json;

namespace {

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<long>(i)] = v[i];
  return out;
}

py::array_t<double> to_numpy(const Mat& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  auto r = out.mutable_unchecked<2>();
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) r(i, j) = m(i, j);
  return out;
}

py::array_t<double> to_numpy(const Vec& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  auto r = out.mutable_unchecked<1>();
  for (long i = 0; i < v.size(); ++i) r(i) = v[i];
  return out;
}

Mat from_numpy(const py::array_t<double>& arr) {
  auto buf = arr.unchecked<2>();
  Mat m(static_cast<int>(buf.shape(0)), static_cast<int>(buf.shape(1)));
  for (py::ssize_t i = 0; i < buf.shape(0); ++i)
    for (py::ssize_t j = 0; j < buf.shape(1); ++j) m(i, j) = buf(i, j);
  return m;
}

SimConfig sim_config_from_dict(const py::dict& d, int dim) {
  SimConfig c;
  c.dim = dim;
  c.x0 = Vec::Zero(dim);
  for (auto item : d) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "epsilon")
      c.epsilon = py::cast<double>(item.second);
    else if (key == "viscosity_n")
      c.viscosity_n = py::cast<double>(item.second);
    else if (key == "horizon")
      c.horizon = py::cast<double>(item.second);
    else if (key == "dt0")
      c.dt0 = py::cast<double>(item.second);
    else if (key == "paths")
      c.paths = py::cast<long>(item.second);
    else if (key == "seed")
      c.seed = py::cast<uint64_t>(item.second);
    else if (key == "save_stride")
      c.save_stride = py::cast<int>(item.second);
    else if (key == "density_initial")
      c.density_initial = py::cast<bool>(item.second);
    else if (key == "x0")
      c.x0 = to_vec(py::cast<std::vector<double>>(item.second));
    else
      throw ConfigError("simulate: unknown key '" + key + "'");
  }
  return c;
}

py::tuple ensemble_to_python(const TrajectoryEnsemble& e) {
  py::array_t<double> states({static_cast<py::ssize_t>(e.paths),
                              static_cast<py::ssize_t>(e.times.size()),
                              static_cast<py::ssize_t>(e.dim)});
  auto r = states.mutable_unchecked<3>();
  for (long p = 0; p < e.paths; ++p)
    for (size_t t = 0; t < e.times.size(); ++t)
      for (int i = 0; i < e.dim; ++i) r(p, static_cast<py::ssize_t>(t), i) = e.state(p, t)[i];
  py::array_t<double> times(static_cast<py::ssize_t>(e.times.size()));
  auto rt = times.mutable_unchecked<1>();
  for (size_t t = 0; t < e.times.size(); ++t) rt(static_cast<py::ssize_t>(t)) = e.times[t];
  py::list flagged;
  for (uint8_t f : e.flagged) flagged.append(static_cast<bool>(f));
  return py::make_tuple(times, states, flagged);
}

std::vector<Vec> cloud_from_numpy(const py::array_t<double>& arr) {
  std::vector<Vec> out;
  if (arr.ndim() == 1) {
    auto buf = arr.unchecked<1>();
    for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
      Vec v(1);
      v[0] = buf(i);
      out.push_back(v);
    }
  } else {
    auto buf = arr.unchecked<2>();
    for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
      Vec v(static_cast<int>(buf.shape(1)));
      for (py::ssize_t j = 0; j < buf.shape(1); ++j) v[static_cast<long>(j)] = buf(i, j);
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(homlab, m) {
  m.doc() =
      "Homogenization laboratory: corrector solves, effective tensors and "
      "multiscale Monte Carlo for locally periodic diffusions";

  py::register_exception<ConfigError>(m, "HomlabConfigError");
  py::register_exception<InputDomainError>(m, "HomlabInputError");

  py::class_<Medium, std::shared_ptr<Medium>>(m, "Medium")
      .def_property_readonly("dim", &Medium::dim)
      .def_property_readonly("preset_id", &Medium::preset_id)
      .def_property_readonly("control_constant", &Medium::control_constant)
      .def(
          "eval_coeffs",
          [](const Medium& self, const std::vector<double>& x, const std::vector<double>& y) {
            const CoeffEval ce = self.eval(to_vec(x), to_vec(y));
            py::dict out;
            out["a"] = to_numpy(ce.a);
            out["sigma"] = to_numpy(ce.sigma);
            out["sigma_tilde"] = to_numpy(ce.sigma_tilde);
            out["a_tilde"] = to_numpy(ce.a_tilde);
            out["h"] = to_numpy(ce.h);
            out["v"] = ce.v;
            out["grad_v"] = to_numpy(ce.grad_v);
            return out;
          },
          py::arg("x"), py::arg("y"))
      .def(
          "eval_drifts",
          [](const Medium& self, const std::vector<double>& x, const std::vector<double>& y) {
            const Drifts d = self.drifts(to_vec(x), to_vec(y));
            return py::make_tuple(to_numpy(d.b), to_numpy(d.c));
          },
          py::arg("x"), py::arg("y"))
      .def(
          "validate",
          [](const Medium& self, int grid) {
            const ValidationReport r = validate_assumptions(self, grid);
            py::list checks;
            for (const auto& c : r.checks) {
              py::dict d;
              d["check_name"] = c.name;
              d["margin"] = c.margin;
              d["pass"] = c.pass;
              checks.append(d);
            }
            py::dict out;
            out["checks"] = checks;
            out["pass"] = r.pass;
            return out;
          },
          py::arg("grid") = 16)
      .def(
          "microscopic_ergodicity",
          [](const Medium& self, int cutoff) {
            const ErgodicityResult r = check_microscopic_ergodicity(self, cutoff);
            py::dict out;
            out["ergodic"] = r.ergodic;
            out["null_dim"] = r.null_dim;
            out["cutoff"] = r.cutoff;
            out["resolution_warning"] = r.resolution_warning;
            return out;
          },
          py::arg("cutoff") = 8);

  m.def(
      "make_medium",
      [](const std::string& config_json) {
        return medium_from_config(json::parse(config_json));
      },
      py::arg("config_json"), "Create a preset medium from a JSON object string");

  py::class_<EffectiveTensors>(m, "TensorTable")
      .def_property_readonly("kernel_dim",
                             [](const EffectiveTensors& t) { return t.geometry.kernel_dim; })
      .def_property_readonly("kernel_basis",
                             [](const EffectiveTensors& t) {
                               return to_numpy(Mat(t.geometry.kernel_basis));
                             })
      .def_property_readonly("alpha_min",
                             [](const EffectiveTensors& t) { return t.geometry.alpha_min; })
      .def_property_readonly("alpha_max",
                             [](const EffectiveTensors& t) { return t.geometry.alpha_max; })
      .def("interpolate_a",
           [](const EffectiveTensors& t, const std::vector<double>& y) {
             bool inside = true;
             const Mat a = t.interpolate_a(to_vec(y), &inside);
             return py::make_tuple(to_numpy(a), inside);
           })
      .def("interpolate_b",
           [](const EffectiveTensors& t, const std::vector<double>& y) {
             bool inside = true;
             const Vec b = t.interpolate_b(to_vec(y), &inside);
             return py::make_tuple(to_numpy(b), inside);
           })
      .def("to_json", &EffectiveTensors::to_json)
      .def_static("from_json", &EffectiveTensors::from_json);

  m.def(
      "effective_a",
      [](std::shared_ptr<Medium> medium, int k_gal, const std::vector<double>& y,
         const std::vector<double>& ladder) {
        const RealTrigBasis basis(medium->dim(), k_gal);
        return to_numpy(effective_a(*medium, basis, to_vec(y), ladder));
      },
      py::arg("medium"), py::arg("k_gal"), py::arg("y"), py::arg("lambda_ladder"));

  m.def(
      "effective_h",
      [](std::shared_ptr<Medium> medium, int k_gal, const std::vector<double>& y,
         const std::vector<double>& ladder) {
        const RealTrigBasis basis(medium->dim(), k_gal);
        return to_numpy(effective_h(*medium, basis, to_vec(y), ladder));
      },
      py::arg("medium"), py::arg("k_gal"), py::arg("y"), py::arg("lambda_ladder"));

  m.def(
      "variational_a_tilde",
      [](std::shared_ptr<Medium> medium, int k_gal) {
        const RealTrigBasis basis(medium->dim(), k_gal);
        double h1 = 0.0;
        const Mat at = variational_a_tilde(*medium, basis, &h1);
        return py::make_tuple(to_numpy(at), h1);
      },
      py::arg("medium"), py::arg("k_gal"));

  m.def(
      "build_tensor_table",
      [](std::shared_ptr<Medium> medium, int k_gal, double y_min, double y_max, int points,
         const std::vector<double>& ladder, int threads) {
        const RealTrigBasis basis(medium->dim(), k_gal);
        const GridSpec grid = GridSpec::uniform(medium->dim(), y_min, y_max, points);
        return build_effective_tensors(*medium, basis, grid, ladder, threads);
      },
      py::arg("medium"), py::arg("k_gal"), py::arg("y_min"), py::arg("y_max"), py::arg("points"),
      py::arg("lambda_ladder"), py::arg("threads") = 1);

  m.def(
      "solve_corrector",
      [](std::shared_ptr<Medium> medium, int k_gal, const std::vector<double>& y, double lam,
         int component, const std::string& kind, int viscosity_n) {
        const RealTrigBasis basis(medium->dim(), k_gal);
        ResolventProblem p;
        p.medium = medium.get();
        p.y = to_vec(y);
        p.lambda = lam;
        p.drift_component = component;
        if (kind == "full")
          p.kind = OperatorKind::Full;
        else if (kind == "symmetric")
          p.kind = OperatorKind::Symmetric;
        else if (kind == "full_viscous")
          p.kind = OperatorKind::FullViscous;
        else if (kind == "symmetric_viscous")
          p.kind = OperatorKind::SymmetricViscous;
        else
          throw ConfigError("unknown operator kind: " + kind);
        p.viscosity_n = viscosity_n;
        const CorrectorSolution s = solve_resolvent(p, basis);
        py::dict out;
        py::array_t<double> coeffs(static_cast<py::ssize_t>(s.coeffs.size()));
        auto r = coeffs.mutable_unchecked<1>();
        for (long i = 0; i < s.coeffs.size(); ++i) r(i) = s.coeffs[i];
        out["coefficients"] = coeffs;
        out["l2_sq"] = s.l2_sq;
        out["h1_energy"] = s.h1_energy;
        out["weak_residual"] = s.weak_residual;
        out["json"] = corrector_to_json(s);
        return out;
      },
      py::arg("medium"), py::arg("k_gal"), py::arg("y"), py::arg("lambda_"),
      py::arg("component") = 0, py::arg("kind") = "full", py::arg("viscosity_n") = 0);

  m.def(
      "simulate_xeps",
      [](std::shared_ptr<Medium> medium, const py::dict& config, int threads) {
        return ensemble_to_python(
            simulate_xeps(sim_config_from_dict(config, medium->dim()), *medium, threads));
      },
      py::arg("medium"), py::arg("config"), py::arg("threads") = 1);

  m.def(
      "simulate_xn",
      [](std::shared_ptr<Medium> medium, const py::dict& config, int threads) {
        return ensemble_to_python(
            simulate_xn(sim_config_from_dict(config, medium->dim()), *medium, threads));
      },
      py::arg("medium"), py::arg("config"), py::arg("threads") = 1);

  m.def(
      "simulate_limit",
      [](const EffectiveTensors& table, std::shared_ptr<Medium> medium, const py::dict& config,
         int threads) {
        return ensemble_to_python(simulate_limit(sim_config_from_dict(config, table.grid.dim),
                                                 table, threads, &medium->potential()));
      },
      py::arg("table"), py::arg("medium"), py::arg("config"), py::arg("threads") = 1);

  m.def(
      "sqrt_psd",
      [](const py::array_t<double>& a) { return to_numpy(sqrt_psd(from_numpy(a))); },
      py::arg("matrix"));

  m.def(
      "energy_distance",
      [](const py::array_t<double>& a, const py::array_t<double>& b, uint64_t seed,
         long cap_pairs) {
        const DistanceResult d =
            energy_distance(cloud_from_numpy(a), cloud_from_numpy(b), seed, cap_pairs);
        return py::make_tuple(d.value, d.se);
      },
      py::arg("a"), py::arg("b"), py::arg("seed") = 1, py::arg("cap_pairs") = 1000000);

  m.def(
      "sample_initial",
      [](int dim, const std::string& kind, double halfwidth, long count, uint64_t seed) {
        const Potential pot = kind == "gaussian" ? Potential::gaussian(dim)
                                                 : Potential::uniform_box(dim, halfwidth);
        const auto pts = sample_initial(pot, count, seed);
        py::array_t<double> out({static_cast<py::ssize_t>(count), static_cast<py::ssize_t>(dim)});
        auto r = out.mutable_unchecked<2>();
        for (long p = 0; p < count; ++p)
          for (int i = 0; i < dim; ++i) r(p, i) = pts[static_cast<size_t>(p)][i];
        return out;
      },
      py::arg("dim"), py::arg("kind"), py::arg("halfwidth"), py::arg("count"), py::arg("seed"));
}
