#ifndef HOMLAB_DIAGNOSTICS_HPP
#define HOMLAB_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "homlab/effective.hpp"
#include "homlab/sde.hpp"
#include "homlab/types.hpp"

namespace homlab {

// Two-sample energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| with a grouped
// jackknife standard error. Beyond `cap_pairs` the three terms are
// estimated over one shared seeded pair subsample, which keeps the
// statistic exactly zero on identical inputs and exactly symmetric.
struct DistanceResult {
  double value = 0.0;
  double se = 0.0;
  long pairs_used = 0;
};

DistanceResult energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b,
                               uint64_t seed, long cap_pairs = 1000000);

/// Energy distance between the time-T marginals of two ensembles
/// (flagged paths excluded).
DistanceResult weak_distance(const TrajectoryEnsemble& ens_a, size_t time_index_a,
                             const TrajectoryEnsemble& ens_b, size_t time_index_b,
                             uint64_t seed, long cap_pairs = 1000000);

struct TrendEntry {
  double parameter = 0.0;  // epsilon (or n, lambda)
  double value = 0.0;
  double se = 0.0;
};

// Report shared by the ladder diagnostics: entries plus SE-guarded verdicts.
struct ConvergenceReport {
  std::string name;
  std::vector<TrendEntry> entries;
  double null_value = 0.0;  // split-half calibration
  double null_se = 0.0;
  bool trend_pass = false;    // last below first by >= 2 combined SEs
  bool control_pass = false;  // every entry within 3 SEs of the null
  std::string note;

  std::string to_json() const;
};

/// Check that last < first with >= 2 combined standard errors.
bool trend_separated(const TrendEntry& first, const TrendEntry& last);

/// Distances d(X^eps_T, X_T) along a decreasing epsilon ladder against one
/// limit ensemble, with a split-half null from the limit ensemble.
ConvergenceReport convergence_ladder(const Medium& medium, const EffectiveTensors& tensors,
                                     const std::vector<double>& eps_ladder,
                                     const SimConfig& base, int threads, uint64_t diag_seed,
                                     long cap_pairs = 1000000);

/// max over paths, saved times and kernel vectors of |<X_t - x0, k>|.
double kernel_confinement(const TrajectoryEnsemble& ens, const MatX& kernel_basis, const Vec& x0);

// Product observables Psi(x, y) = f(x) g(y) whose torus average of f is
// exact, so the averaged observable is known in closed form.
struct Observable {
  enum class XKind { One, SinX1, TwoPlusSinX1 };
  enum class YKind { One, Y1, GaussNorm };
  XKind x_kind = XKind::SinX1;
  YKind y_kind = YKind::One;

  double x_value(const Vec& x_reduced) const;
  double x_mean() const;
  double y_value(const Vec& y) const;
  double value(const Vec& x_reduced, const Vec& y) const { return x_value(x_reduced) * y_value(y); }
  double averaged(const Vec& y) const { return x_mean() * y_value(y); }
  bool x_independent() const { return x_kind == XKind::One; }
  static Observable parse(const std::string& x_name, const std::string& y_name);
};

/// Per epsilon: E over paths of sup_{saved s<=T} |int_0^s (Psi - Psi_bar)|^2.
ConvergenceReport ergodic_average_check(const Medium& medium,
                                        const std::vector<double>& eps_ladder,
                                        const Observable& observable, const SimConfig& base,
                                        int threads);

struct MomentRow {
  double time = 0.0;
  int coordinate = 0;
  double mean = 0.0;
  double mean_se = 0.0;
  double second = 0.0;
  double second_se = 0.0;
  double mean_gap = 0.0;    // |mean - analytic|
  double second_gap = 0.0;  // |second - analytic|
  bool pass = false;        // both gaps within 3 SEs
};

/// Empirical per-coordinate moments against the invariant density; the
/// ensemble must have been started from the density.
std::vector<MomentRow> invariant_measure_check(const TrajectoryEnsemble& ens,
                                               const Potential& potential);

struct RegularityRow {
  std::string quantity;  // u, dy_j u, w
  double lambda = 0.0;
  double energy = 0.0;  // lambda |g|_2^2 + ||g||_1^2
  std::vector<double> lipschitz_ratio;  // per h step
};

struct RegularityTable {
  std::vector<RegularityRow> rows;
  std::vector<int> n_ladder;
  std::vector<double> visc_h1_decay;
  std::vector<double> visc_grad_decay;
  std::vector<double> h_steps;
  double symmetric_match = 0.0;  // max |w - u| coefficient gap when H = 0
  bool h_is_zero = false;
  bool energy_flat = false;      // max/min energy ratio within 10% per quantity
  bool lipschitz_stable = false; // no >2x ratio growth along refinements
  bool viscosity_decays = false;
  std::string to_json() const;
};

RegularityTable regularity_suite(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                                 const std::vector<double>& lambda_ladder,
                                 const std::vector<int>& n_ladder,
                                 const std::vector<double>& h_steps);

}  // namespace homlab

#endif
