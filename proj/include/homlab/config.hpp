#ifndef HOMLAB_CONFIG_HPP
#define HOMLAB_CONFIG_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homlab/diagnostics.hpp"
#include "homlab/effective.hpp"
#include "homlab/medium.hpp"
#include "homlab/sde.hpp"

namespace homlab {

enum class SimMode { Eps, N, Limit };

// One experiment description: medium preset, discretization, ladders, grid,
// simulation parameters and tolerance overrides. Parsing is strict; unknown
// keys are rejected so config typos cannot silently change a run.
struct ExperimentConfig {
  nlohmann::json raw;
  uint64_t hash = 0;

  std::shared_ptr<Medium> medium;
  int k_gal = 8;
  int quadrature = 0;  // 0 = choose from k_gal

  std::vector<double> lambda_ladder{1e-1, 1e-2, 1e-3};
  std::vector<double> epsilon_ladder{0.4, 0.2, 0.1};
  std::vector<int> n_ladder{10, 100, 10000};
  std::vector<double> h_steps{1e-2, 1e-3};

  bool has_y_grid = false;
  GridSpec y_grid;
  Vec y_point;

  SimMode sim_mode = SimMode::Eps;
  SimConfig sim;
  std::string tensor_table_path;

  long cap_pairs = 1000000;
  Observable observable;
  std::string ensemble_a_path;  // when both set, compare runs on saved files
  std::string ensemble_b_path;

  std::map<std::string, double> tolerances;
  double tol(const std::string& name, double fallback) const {
    auto it = tolerances.find(name);
    return it == tolerances.end() ? fallback : it->second;
  }

  RealTrigBasis make_basis() const { return RealTrigBasis(medium->dim(), k_gal, quadrature); }

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_json(const nlohmann::json& j);
};

uint64_t config_hash_of(const nlohmann::json& j);

/// Build a medium from the config's "medium" object (strict keys).
std::shared_ptr<Medium> medium_from_config(const nlohmann::json& medium_section);

/// Deep-merge overrides into a base config document (objects merge
/// recursively, scalars/arrays replace).
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides);

std::string validation_report_to_json(const ValidationReport& report,
                                      const ErgodicityResult* ergodicity, uint64_t config_hash);

}  // namespace homlab

#endif
