#include "homlab/config.hpp"

#include <fstream>
#include <set>

namespace homlab {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

Mat parse_matrix(const json& j, int dim, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ConfigError(where + ": expected a " + std::to_string(dim) + "x" +
                      std::to_string(dim) + " matrix");
  Mat m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const json& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != dim)
      throw ConfigError(where + ": ragged matrix");
    for (int c = 0; c < dim; ++c) m(r, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return m;
}

Potential parse_potential(const json& j, int dim) {
  if (j.is_null()) return Potential::gaussian(dim);
  check_keys(j, {"kind", "halfwidth"}, "medium.potential");
  const std::string kind = j.value("kind", "gaussian");
  if (kind == "gaussian") return Potential::gaussian(dim);
  if (kind == "uniform") return Potential::uniform_box(dim, j.value("halfwidth", 1.0));
  throw ConfigError("medium.potential: unknown kind '" + kind + "'");
}

std::shared_ptr<Medium> parse_medium(const json& j) {
  check_keys(j,
             {"preset", "dim", "potential", "a_matrix", "h_matrix", "control_m", "alpha", "beta",
              "gamma", "c", "delta"},
             "medium");
  const std::string preset = j.value("preset", "");
  if (preset == "constant") {
    const int dim = j.value("dim", 1);
    Potential pot = parse_potential(j.contains("potential") ? j["potential"] : json(), dim);
    Mat a0 = j.contains("a_matrix") ? parse_matrix(j["a_matrix"], dim, "medium.a_matrix")
                                    : Mat(Mat::Identity(dim, dim));
    Mat h0 = j.contains("h_matrix") ? parse_matrix(j["h_matrix"], dim, "medium.h_matrix")
                                    : Mat(Mat::Zero(dim, dim));
    return make_constant_medium_from_a(dim, a0, h0, j.value("control_m", 1.0), std::move(pot));
  }
  if (preset == "sine1d") {
    Potential pot = parse_potential(j.contains("potential") ? j["potential"] : json(), 1);
    return make_sine1d_medium(j.value("alpha", 2.0), j.value("beta", 1.0), std::move(pot));
  }
  if (preset == "sec4") {
    Potential pot = parse_potential(j.contains("potential") ? j["potential"] : json(), 2);
    return make_degenerate2d_medium(j.value("c", 2.0), j.value("delta", 0.0), std::move(pot));
  }
  if (preset == "separable") {
    const int dim = j.value("dim", 1);
    Potential pot = parse_potential(j.contains("potential") ? j["potential"] : json(), dim);
    return make_separable_medium(dim, j.value("alpha", 2.0), j.value("beta", 1.0),
                                 j.value("gamma", 0.5), std::move(pot));
  }
  if (preset == "null") {
    const int dim = j.value("dim", 1);
    Potential pot = parse_potential(j.contains("potential") ? j["potential"] : json(), dim);
    return make_null_medium(dim, std::move(pot));
  }
  throw ConfigError("medium: unknown preset '" + preset + "'");
}

template <class T>
std::vector<T> parse_ladder(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array");
  std::vector<T> out;
  for (const auto& v : j) out.push_back(v.get<T>());
  return out;
}

}  // namespace

std::shared_ptr<Medium> medium_from_config(const nlohmann::json& medium_section) {
  return parse_medium(medium_section);
}

uint64_t config_hash_of(const json& j) {
  const std::string text = j.dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

json merge_config(json base, const json& overrides) {
  if (!overrides.is_object() || !base.is_object()) return overrides;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      base[it.key()] = merge_config(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, {"medium", "basis", "ladders", "y_grid", "y_point", "sim", "compare",
                 "tolerances"},
             "config");
  if (!j.contains("medium")) throw ConfigError("config: 'medium' section is required");

  ExperimentConfig cfg;
  cfg.raw = j;
  cfg.hash = config_hash_of(j);
  cfg.medium = medium_from_config(j["medium"]);
  const int d = cfg.medium->dim();

  if (j.contains("basis")) {
    check_keys(j["basis"], {"k_gal", "quadrature_per_axis"}, "basis");
    cfg.k_gal = j["basis"].value("k_gal", 8);
    cfg.quadrature = j["basis"].value("quadrature_per_axis", 0);
  }
  cfg.k_gal = std::max(cfg.k_gal, cfg.medium->max_x_frequency() + 2);

  if (j.contains("ladders")) {
    check_keys(j["ladders"], {"lambda", "epsilon", "n", "h"}, "ladders");
    if (j["ladders"].contains("lambda"))
      cfg.lambda_ladder = parse_ladder<double>(j["ladders"]["lambda"], "ladders.lambda");
    if (j["ladders"].contains("epsilon"))
      cfg.epsilon_ladder = parse_ladder<double>(j["ladders"]["epsilon"], "ladders.epsilon");
    if (j["ladders"].contains("n"))
      cfg.n_ladder = parse_ladder<int>(j["ladders"]["n"], "ladders.n");
    if (j["ladders"].contains("h"))
      cfg.h_steps = parse_ladder<double>(j["ladders"]["h"], "ladders.h");
  }

  if (j.contains("y_grid")) {
    check_keys(j["y_grid"], {"min", "max", "points"}, "y_grid");
    cfg.y_grid = GridSpec::uniform(d, j["y_grid"].value("min", -1.0),
                                   j["y_grid"].value("max", 1.0), j["y_grid"].value("points", 5));
    cfg.has_y_grid = true;
  }

  cfg.y_point = Vec::Zero(d);
  if (j.contains("y_point")) {
    const auto v = j["y_point"].get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d) throw ConfigError("y_point: wrong dimension");
    for (int i = 0; i < d; ++i) cfg.y_point[i] = v[static_cast<size_t>(i)];
  }

  cfg.sim.dim = d;
  cfg.sim.x0 = Vec::Zero(d);
  if (j.contains("sim")) {
    const json& s = j["sim"];
    check_keys(s,
               {"mode", "epsilon", "viscosity_n", "horizon", "dt0", "paths", "seed",
                "save_stride", "initial", "tensor_table"},
               "sim");
    const std::string mode = s.value("mode", "eps");
    if (mode == "eps")
      cfg.sim_mode = SimMode::Eps;
    else if (mode == "n")
      cfg.sim_mode = SimMode::N;
    else if (mode == "limit")
      cfg.sim_mode = SimMode::Limit;
    else
      throw ConfigError("sim.mode: expected eps, n or limit");
    cfg.sim.limit_mode = cfg.sim_mode == SimMode::Limit;
    cfg.sim.epsilon = s.value("epsilon", 1.0);
    if (s.contains("viscosity_n")) {
      if (s["viscosity_n"].is_string()) {
        if (s["viscosity_n"].get<std::string>() != "inf")
          throw ConfigError("sim.viscosity_n: number or \"inf\"");
      } else {
        cfg.sim.viscosity_n = s["viscosity_n"].get<double>();
      }
    }
    cfg.sim.horizon = s.value("horizon", 1.0);
    cfg.sim.dt0 = s.value("dt0", 1e-2);
    cfg.sim.paths = s.value("paths", 100L);
    cfg.sim.seed = s.value("seed", 1UL);
    cfg.sim.save_stride = s.value("save_stride", 1);
    if (s.contains("initial")) {
      check_keys(s["initial"], {"kind", "point"}, "sim.initial");
      const std::string kind = s["initial"].value("kind", "point");
      if (kind == "density") {
        cfg.sim.density_initial = true;
      } else if (kind == "point") {
        if (s["initial"].contains("point")) {
          const auto v = s["initial"]["point"].get<std::vector<double>>();
          if (static_cast<int>(v.size()) != d)
            throw ConfigError("sim.initial.point: wrong dimension");
          for (int i = 0; i < d; ++i) cfg.sim.x0[i] = v[static_cast<size_t>(i)];
        }
      } else {
        throw ConfigError("sim.initial.kind: expected point or density");
      }
    }
    cfg.tensor_table_path = s.value("tensor_table", "");
  }
  cfg.sim.config_hash = cfg.hash;

  if (j.contains("compare")) {
    check_keys(j["compare"], {"cap_pairs", "observable", "ensemble_a", "ensemble_b"}, "compare");
    cfg.cap_pairs = j["compare"].value("cap_pairs", 1000000L);
    cfg.ensemble_a_path = j["compare"].value("ensemble_a", "");
    cfg.ensemble_b_path = j["compare"].value("ensemble_b", "");
    if (j["compare"].contains("observable")) {
      check_keys(j["compare"]["observable"], {"x", "y"}, "compare.observable");
      cfg.observable = Observable::parse(j["compare"]["observable"].value("x", "sin_x1"),
                                         j["compare"]["observable"].value("y", "one"));
    }
  }

  if (j.contains("tolerances")) {
    if (!j["tolerances"].is_object()) throw ConfigError("tolerances: expected an object");
    for (auto it = j["tolerances"].begin(); it != j["tolerances"].end(); ++it)
      cfg.tolerances[it.key()] = it.value().get<double>();
  }
  return cfg;
}

std::string validation_report_to_json(const ValidationReport& report,
                                      const ErgodicityResult* ergodicity, uint64_t config_hash) {
  json j;
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash));
  j["config_hash"] = hex;
  json checks = json::array();
  for (const auto& c : report.checks)
    checks.push_back(
        {{"check_name", c.name}, {"margin", c.margin}, {"pass", c.pass}, {"note", c.note}});
  j["checks"] = checks;
  j["pass"] = report.pass;
  if (ergodicity) {
    j["ergodicity"] = {{"ergodic", ergodicity->ergodic},
                       {"null_dim", ergodicity->null_dim},
                       {"cutoff", ergodicity->cutoff},
                       {"resolution_warning", ergodicity->resolution_warning},
                       {"note", ergodicity->note}};
  }
  return j.dump(2);
}

}  // namespace homlab
