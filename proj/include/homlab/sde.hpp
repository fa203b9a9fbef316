#ifndef HOMLAB_SDE_HPP
#define HOMLAB_SDE_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "homlab/effective.hpp"
#include "homlab/medium.hpp"
#include "homlab/rng.hpp"
#include "homlab/types.hpp"

namespace homlab {

struct SimConfig {
  int dim = 1;
  double epsilon = 1.0;
  bool limit_mode = false;
  double viscosity_n = std::numeric_limits<double>::infinity();
  double horizon = 1.0;
  double dt0 = 1e-2;
  long paths = 100;
  uint64_t seed = 1;
  bool density_initial = false;
  Vec x0;
  int save_stride = 1;
  uint64_t config_hash = 0;

  /// Micro-resolved step: dt0 * epsilon^2 for the multiscale process,
  /// dt0 for the limit diffusion. Rounded so an integer number of steps
  /// lands exactly on the horizon.
  double effective_dt() const;
  long step_count() const;
  std::vector<long> save_steps() const;
  void check() const;
};

struct TrajectoryEnsemble {
  int dim = 0;
  long paths = 0;
  std::vector<double> times;
  std::vector<double> states;  // [path][time][dim] row-major
  std::vector<uint8_t> flagged;
  std::vector<uint64_t> stream_ids;
  bool density_initial = false;
  double horizon = 0.0;
  uint64_t config_hash = 0;
  uint64_t content_id = 0;

  const double* state(long path, size_t time_index) const {
    return states.data() + (static_cast<size_t>(path) * times.size() + time_index) *
                               static_cast<size_t>(dim);
  }
  double* state(long path, size_t time_index) {
    return states.data() + (static_cast<size_t>(path) * times.size() + time_index) *
                               static_cast<size_t>(dim);
  }
  long flagged_count() const;
  void finalize_content_id();

  void write_binary(const std::string& path) const;
  static TrajectoryEnsemble read_binary(const std::string& path);
  void write_csv(const std::string& path) const;
};

/// Euler-Maruyama for the multiscale process: drift b(x/eps, x)/eps +
/// c(x/eps, x), noise sigma(x/eps, x). Per-path counter-based streams make
/// the result independent of the worker count.
TrajectoryEnsemble simulate_xeps(const SimConfig& config, const Medium& medium, int threads);

/// Viscosity-regularized process: adds drift -grad V / n and an independent
/// Brownian term with coefficient sqrt(2/n). n = infinity reduces
/// bit-exactly to simulate_xeps.
TrajectoryEnsemble simulate_xn(const SimConfig& config, const Medium& medium, int threads);

/// Homogenized limit diffusion driven by an interpolated tensor table:
/// drift B(x), noise sqrt(A)(x) restricted to the complement of the kernel.
/// `potential` is only needed for density initial conditions.
TrajectoryEnsemble simulate_limit(const SimConfig& config, const EffectiveTensors& tensors,
                                  int threads, const Potential* potential = nullptr);

/// i.i.d. draws from the density exp(-2V); deterministic in (seed, count).
std::vector<Vec> sample_initial(const Potential& potential, long count, uint64_t seed);

// Single-path stepper used by the simulators and by diagnostics that need
// to accumulate along the fine time grid.
class MicroStepper {
 public:
  MicroStepper(const SimConfig& config, const Medium& medium, long path_id);

  const Vec& state() const { return x_; }
  double dt() const { return dt_; }
  long steps() const { return steps_; }
  bool blown_up() const { return blown_; }

  /// Advance one step; returns false once the path has blown up.
  bool step(long k);

 private:
  const Medium& medium_;
  const SimConfig& config_;
  CounterRng noise_;
  CounterRng visc_noise_;
  Vec x_;
  Vec b_, c_;
  Mat sigma_;
  double dt_, sqrt_dt_, eps_, visc_drift_, visc_noise_coef_;
  long steps_;
  bool finite_n_;
  bool blown_ = false;
};

}  // namespace homlab

#endif
