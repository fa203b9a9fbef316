// homlab: config-driven experiments for divergence-form diffusions with a
// periodic fast scale: assumption validation, corrector-based effective
// tensors, multiscale Monte Carlo and convergence diagnostics.

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <thread>

#include "homlab/config.hpp"
#include "homlab/diagnostics.hpp"
#include "homlab/effective.hpp"
#include "homlab/sde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace homlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCriterionFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string hex_hash(uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int cmd_validate(const ExperimentConfig& cfg, const fs::path& out_dir, int /*threads*/) {
  const ValidationReport report = validate_assumptions(*cfg.medium, 16);
  const ErgodicityResult erg = check_microscopic_ergodicity(
      *cfg.medium, std::max(8, cfg.medium->max_x_frequency() + 6));
  write_text(out_dir / "validation.json", validation_report_to_json(report, &erg, cfg.hash));

  for (const auto& c : report.checks)
    std::cout << (c.pass ? "[pass] " : "[FAIL] ") << c.name << " (margin " << c.margin << ")\n";
  if (!erg.ergodic)
    std::cout << "[warn] reference operator has a " << erg.null_dim
              << "-dimensional numerical null space at cutoff " << erg.cutoff
              << " (resonant fast direction; rational-slope media do this)\n";
  return report.pass ? kExitOk : kExitCriterionFailure;
}

int cmd_effective(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
  if (!cfg.has_y_grid) throw ConfigError("effective: config needs a y_grid section");
  const RealTrigBasis basis = cfg.make_basis();
  EffectiveTensors table =
      build_effective_tensors(*cfg.medium, basis, cfg.y_grid, cfg.lambda_ladder, threads);
  table.config_hash = cfg.hash;
  write_text(out_dir / "tensors.json", table.to_json());

  double h1 = 0.0;
  const Mat a_tilde_var = variational_a_tilde(*cfg.medium, basis, &h1);
  json geo;
  geo["config_hash"] = hex_hash(cfg.hash);
  geo["kernel_dim"] = table.geometry.kernel_dim;
  geo["alpha_min"] = table.geometry.alpha_min;
  geo["alpha_max"] = table.geometry.alpha_max;
  geo["worst_principal_angle"] = table.geometry.worst_principal_angle;
  geo["worst_b_kernel_overlap"] = table.geometry.worst_b_kernel_overlap;
  geo["pass"] = table.geometry.pass;
  geo["variational_a_tilde"] =
      std::vector<double>(a_tilde_var.data(), a_tilde_var.data() + a_tilde_var.size());
  geo["variational_minimizer_h1"] = h1;
  write_text(out_dir / "geometry.json", geo.dump(2));

  std::cout << "tensors on " << table.grid.total() << " grid points, kernel dim "
            << table.geometry.kernel_dim << "\n";
  return table.geometry.pass ? kExitOk : kExitCriterionFailure;
}

EffectiveTensors load_tensor_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tensor table: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return EffectiveTensors::from_json(text);
}

int cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
  TrajectoryEnsemble ens;
  switch (cfg.sim_mode) {
    case SimMode::Eps:
      ens = simulate_xeps(cfg.sim, *cfg.medium, threads);
      break;
    case SimMode::N:
      ens = simulate_xn(cfg.sim, *cfg.medium, threads);
      break;
    case SimMode::Limit: {
      if (cfg.tensor_table_path.empty())
        throw ConfigError("simulate: limit mode needs sim.tensor_table");
      const EffectiveTensors table = load_tensor_table(cfg.tensor_table_path);
      ens = simulate_limit(cfg.sim, table, threads, &cfg.medium->potential());
      break;
    }
  }
  ens.write_binary((out_dir / "ensemble.bin").string());
  if (static_cast<size_t>(ens.paths) * ens.times.size() <= 20000)
    ens.write_csv((out_dir / "ensemble.csv").string());
  std::cout << "paths " << ens.paths << ", saved times " << ens.times.size() << ", flagged "
            << ens.flagged_count() << ", content " << hex_hash(ens.content_id) << "\n";
  return kExitOk;
}

// Direct two-ensemble comparison from saved files. The marginals must live
// at the same physical time or the request is rejected as a usage error.
int cmd_compare_files(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const TrajectoryEnsemble a = TrajectoryEnsemble::read_binary(cfg.ensemble_a_path);
  const TrajectoryEnsemble b = TrajectoryEnsemble::read_binary(cfg.ensemble_b_path);
  if (std::abs(a.horizon - b.horizon) > 1e-12)
    throw ConfigError("compare: ensembles have mismatched horizons (" +
                      std::to_string(a.horizon) + " vs " + std::to_string(b.horizon) + ")");
  const DistanceResult d = weak_distance(a, a.times.size() - 1, b, b.times.size() - 1,
                                         cfg.sim.seed + 101, cfg.cap_pairs);
  json out;
  out["config_hash"] = hex_hash(cfg.hash);
  out["ensemble_a"] = cfg.ensemble_a_path;
  out["ensemble_b"] = cfg.ensemble_b_path;
  out["time"] = a.times.back();
  out["energy_distance"] = d.value;
  out["se"] = d.se;
  out["pairs_used"] = d.pairs_used;
  write_text(out_dir / "report.json", out.dump(2));
  char buf[160];
  std::snprintf(buf, sizeof buf, "energy distance at T=%g: %.6g +- %.6g (%ld pairs)\n",
                a.times.back(), d.value, d.se, d.pairs_used);
  write_text(out_dir / "report.txt", buf);
  std::cout << buf;
  return kExitOk;
}

int cmd_compare(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
  if (!cfg.ensemble_a_path.empty() || !cfg.ensemble_b_path.empty()) {
    if (cfg.ensemble_a_path.empty() || cfg.ensemble_b_path.empty())
      throw ConfigError("compare: ensemble_a and ensemble_b must both be set");
    return cmd_compare_files(cfg, out_dir);
  }

  json out;
  out["config_hash"] = hex_hash(cfg.hash);
  std::string text_report;
  std::string csv = "ladder,parameter,value,se\n";
  bool all_pass = true;

  // Weak-convergence ladder against the limit diffusion.
  {
    EffectiveTensors table;
    if (!cfg.tensor_table_path.empty()) {
      table = load_tensor_table(cfg.tensor_table_path);
    } else {
      if (!cfg.has_y_grid) throw ConfigError("compare: need y_grid or sim.tensor_table");
      table = build_effective_tensors(*cfg.medium, cfg.make_basis(), cfg.y_grid,
                                      cfg.lambda_ladder, threads);
    }
    const ConvergenceReport ladder =
        convergence_ladder(*cfg.medium, table, cfg.epsilon_ladder, cfg.sim, threads,
                           cfg.sim.seed + 101, cfg.cap_pairs);
    out["weak_convergence"] = json::parse(ladder.to_json());
    text_report += "weak convergence: d(eps) =";
    for (const auto& e : ladder.entries) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "  %.3g (%.3g +- %.3g)", e.parameter, e.value, e.se);
      text_report += buf;
      std::snprintf(buf, sizeof buf, "weak_convergence,%.17g,%.17g,%.17g\n", e.parameter,
                    e.value, e.se);
      csv += buf;
    }
    text_report += ladder.trend_pass ? "  [trend pass]\n" : "  [trend not separated]\n";
    const bool heterogeneous = cfg.medium->max_x_frequency() > 0;
    all_pass = all_pass && (heterogeneous ? ladder.trend_pass : ladder.control_pass);
  }

  // Ergodic-averaging ladder for the configured observable.
  {
    const ConvergenceReport erg =
        ergodic_average_check(*cfg.medium, cfg.epsilon_ladder, cfg.observable, cfg.sim, threads);
    out["ergodic_averaging"] = json::parse(erg.to_json());
    text_report += "ergodic averaging: sup-error(eps) =";
    for (const auto& e : erg.entries) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "  %.3g (%.3g +- %.3g)", e.parameter, e.value, e.se);
      text_report += buf;
      std::snprintf(buf, sizeof buf, "ergodic_averaging,%.17g,%.17g,%.17g\n", e.parameter,
                    e.value, e.se);
      csv += buf;
    }
    text_report += erg.trend_pass ? "  [trend pass]\n" : "  [trend not separated]\n";
    all_pass = all_pass && erg.trend_pass;
  }

  out["pass"] = all_pass;
  write_text(out_dir / "report.json", out.dump(2));
  write_text(out_dir / "report.txt", text_report);
  write_text(out_dir / "report.csv", csv);
  std::cout << text_report;
  return all_pass ? kExitOk : kExitCriterionFailure;
}

json default_scenario_config() {
  json j;
  j["medium"] = {{"preset", "sec4"},
                 {"c", 2.0},
                 {"delta", 0.0},
                 {"potential", {{"kind", "gaussian"}}}};
  j["basis"] = {{"k_gal", 8}};
  j["ladders"] = {{"lambda", {1e-1, 1e-2, 1e-3, 1e-4}}, {"epsilon", {0.4, 0.2, 0.1}}};
  j["y_grid"] = {{"min", -5.0}, {"max", 5.0}, {"points", 11}};
  j["sim"] = {{"horizon", 1.0},
              {"dt0", 5e-3},
              {"paths", 1000},
              {"seed", 2024},
              {"save_stride", 20},
              {"initial", {{"kind", "point"}, {"point", {0.0, 0.0}}}}};
  j["compare"] = {{"cap_pairs", 1000000}};
  return j;
}

// Bundled end-to-end scenario on the two-dimensional degenerate preset:
// validation, effective tensors against the known constant-coefficient
// answer, the variational cross-check, kernel geometry against the null
// space of sigma_tilde^T, confined limit simulation and the epsilon ladder.
int cmd_scenario(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
  if (cfg.medium->preset_id() != "sec4")
    throw ConfigError("scenario: medium preset must be sec4");
  const double c_param = cfg.raw["medium"].value("c", 2.0);
  const double delta = cfg.raw["medium"].value("delta", 0.0);

  const double tol_tensor = cfg.tol("sec4_tensor_tol", 1e-8);
  const double tol_var = cfg.tol("variational_match_tol", 1e-8);
  const double tol_min = cfg.tol("minimizer_norm_tol", 1e-8);
  const double tol_angle = cfg.tol("kernel_angle_tol", 1e-6);
  const double tol_conf = cfg.tol("confinement_tol", 1e-8);

  json summary;
  summary["config_hash"] = hex_hash(cfg.hash);
  summary["tolerances"] = {{"sec4_tensor_tol", tol_tensor},
                           {"variational_match_tol", tol_var},
                           {"minimizer_norm_tol", tol_min},
                           {"kernel_angle_tol", tol_angle},
                           {"confinement_tol", tol_conf}};
  bool all_pass = true;

  // 1. Assumptions (hard gate) and the ergodicity probe (warning only:
  // every floating-point slope is rational, so the probe can resonate).
  const ValidationReport vr = validate_assumptions(*cfg.medium, 16);
  const ErgodicityResult erg = check_microscopic_ergodicity(*cfg.medium, 16);
  summary["assumptions"] = json::parse(validation_report_to_json(vr, &erg, cfg.hash));
  summary["assumptions_pass"] = vr.pass;
  all_pass = all_pass && vr.pass;

  // 2. Effective tensors on the macro grid.
  const RealTrigBasis basis = cfg.make_basis();
  EffectiveTensors table =
      build_effective_tensors(*cfg.medium, basis, cfg.y_grid, cfg.lambda_ladder, threads);
  table.config_hash = cfg.hash;
  write_text(out_dir / "tensors.json", table.to_json());

  Mat reference(2, 2);
  reference << 1.0 + 1.0 / (c_param * c_param), 1.0 / c_param + c_param,
      1.0 / c_param + c_param, c_param * c_param + 1.0;

  double worst_dev = 0.0;
  for (const auto& a : table.a_bar)
    worst_dev = std::max(worst_dev, (a - reference).cwiseAbs().maxCoeff());
  summary["a_bar_max_deviation_from_reference"] = worst_dev;
  const bool tensor_ok = delta != 0.0 || worst_dev <= tol_tensor;
  summary["a_bar_matches_reference"] = tensor_ok;
  all_pass = all_pass && tensor_ok;

  // 3. Variational cross-check (the reference field is constant, so the
  // minimizer must be the zero function).
  double h1 = 0.0;
  const Mat a_tilde_var = variational_a_tilde(*cfg.medium, basis, &h1);
  const double var_dev = (a_tilde_var - reference).cwiseAbs().maxCoeff();
  summary["variational_deviation"] = var_dev;
  summary["variational_minimizer_h1"] = h1;
  const bool var_ok = var_dev <= tol_var && h1 <= tol_min;
  summary["variational_pass"] = var_ok;
  all_pass = all_pass && var_ok;

  // 4. Kernel geometry: computed basis against Ker(sigma_tilde^T),
  // with the transposed candidate recorded for comparison.
  Vec analytic_kernel(2);
  analytic_kernel << c_param, -1.0;
  analytic_kernel /= analytic_kernel.norm();
  Vec alternate(2);
  alternate << 1.0, -c_param;
  alternate /= alternate.norm();
  double kernel_angle = 1.5707963267948966, alternate_angle = 1.5707963267948966;
  if (table.geometry.kernel_dim == 1) {
    const Vec k = Vec(table.geometry.kernel_basis.col(0));
    kernel_angle = std::acos(std::min(1.0, std::abs(k.dot(analytic_kernel))));
    alternate_angle = std::acos(std::min(1.0, std::abs(k.dot(alternate))));
  }
  summary["kernel_dim"] = table.geometry.kernel_dim;
  summary["kernel_angle_to_sigma_tilde_null"] = kernel_angle;
  summary["kernel_angle_to_transposed_candidate"] = alternate_angle;
  const bool kernel_ok =
      table.geometry.kernel_dim == 1 && kernel_angle <= tol_angle && table.geometry.pass;
  summary["kernel_pass"] = kernel_ok;
  all_pass = all_pass && kernel_ok;

  // 5. Limit simulation and kernel confinement.
  SimConfig limit_cfg = cfg.sim;
  limit_cfg.limit_mode = true;
  const TrajectoryEnsemble limit_ens =
      simulate_limit(limit_cfg, table, threads, &cfg.medium->potential());
  limit_ens.write_binary((out_dir / "limit_ensemble.bin").string());
  const double confinement =
      kernel_confinement(limit_ens, table.geometry.kernel_basis, cfg.sim.x0);
  summary["kernel_confinement_residual"] = confinement;
  const bool conf_ok = confinement <= tol_conf;
  summary["confinement_pass"] = conf_ok;
  all_pass = all_pass && conf_ok;

  // 6. Epsilon ladder: a homogeneous scenario (delta = 0) must sit on the
  // split-half null; a modulated one must show the decreasing trend.
  const ConvergenceReport ladder =
      convergence_ladder(*cfg.medium, table, cfg.epsilon_ladder, cfg.sim, threads,
                         cfg.sim.seed + 101, cfg.cap_pairs);
  summary["epsilon_ladder"] = json::parse(ladder.to_json());
  const bool ladder_ok = delta == 0.0 ? ladder.control_pass : ladder.trend_pass;
  summary["ladder_pass"] = ladder_ok;
  all_pass = all_pass && ladder_ok;

  summary["pass"] = all_pass;
  write_text(out_dir / "summary.json", summary.dump(2));

  std::string line;
  auto verdict = [&](const char* name, bool ok) {
    line += std::string(ok ? "[pass] " : "[FAIL] ") + name + "\n";
  };
  verdict("assumptions", vr.pass);
  verdict("effective tensor matches reference", tensor_ok);
  verdict("variational cross-check", var_ok);
  verdict("kernel geometry", kernel_ok);
  verdict("kernel confinement", conf_ok);
  verdict("epsilon ladder", ladder_ok);
  if (!erg.ergodic)
    line += "[warn] resonant fast direction: null dim " + std::to_string(erg.null_dim) +
            " at cutoff " + std::to_string(erg.cutoff) + "\n";
  write_text(out_dir / "summary.txt", line);
  std::cout << line;
  return all_pass ? kExitOk : kExitCriterionFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homogenization laboratory for locally periodic diffusions"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker count (speed only, never results)");
  };

  CLI::App* validate = app.add_subcommand("validate", "check the structural assumptions");
  CLI::App* effective = app.add_subcommand("effective", "compute homogenized tensor tables");
  CLI::App* simulate = app.add_subcommand("simulate", "run a Monte Carlo ensemble");
  CLI::App* compare = app.add_subcommand("compare", "convergence diagnostics ladders");
  CLI::App* scenario =
      app.add_subcommand("sec4", "bundled two-dimensional degenerate example, end to end");
  for (CLI::App* sub : {validate, effective, simulate, compare}) add_common(sub, true);
  add_common(scenario, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    fs::create_directories(out_dir);
    ExperimentConfig cfg;
    if (app.got_subcommand(scenario)) {
      json merged = default_scenario_config();
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file: " + config_path);
        merged = merge_config(merged, json::parse(in, nullptr, true));
      }
      cfg = ExperimentConfig::from_json(merged);
    } else {
      cfg = ExperimentConfig::load(config_path);
    }

    if (app.got_subcommand(validate)) return cmd_validate(cfg, out_dir, threads);
    if (app.got_subcommand(effective)) return cmd_effective(cfg, out_dir, threads);
    if (app.got_subcommand(simulate)) return cmd_simulate(cfg, out_dir, threads);
    if (app.got_subcommand(compare)) return cmd_compare(cfg, out_dir, threads);
    if (app.got_subcommand(scenario)) return cmd_scenario(cfg, out_dir, threads);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputDomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
