#ifndef HOMLAB_MEDIUM_HPP
#define HOMLAB_MEDIUM_HPP

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "homlab/potential.hpp"
#include "homlab/types.hpp"

namespace homlab {

// All coefficient fields and their analytic derivatives at one point.
// dx_aph[i] is the x_i-derivative of (a + H), dy_aph[i] the y_i-derivative.
struct CoeffEval {
  Mat a;
  Mat sigma;
  Mat sigma_tilde;
  Mat a_tilde;
  Mat h;
  std::array<Mat, kMaxDim> dx_aph;
  std::array<Mat, kMaxDim> dy_aph;
  double v = 0.0;
  Vec grad_v;
};

struct Drifts {
  Vec b;  // microscopic drift, x-divergence of (a+H)/2
  Vec c;  // macroscopic drift, weighted y-divergence of (a+H)/2
};

// Raw per-preset data: sigma-level fields and their analytic derivatives.
// The base class assembles a = sigma sigma^T and the (a+H) derivatives.
struct RawFields {
  Mat sigma;
  Mat sigma_tilde;
  Mat h;
  std::array<Mat, kMaxDim> dx_sigma;
  std::array<Mat, kMaxDim> dy_sigma;
  std::array<Mat, kMaxDim> dx_h;
  std::array<Mat, kMaxDim> dy_h;
};

// Periodic surrogate medium: coefficients are 2*pi-periodic in the fast
// variable x and smooth in the slow variable y. Immutable after
// construction; every evaluation is pure.
class Medium {
 public:
  virtual ~Medium() = default;

  int dim() const { return dim_; }
  const std::string& preset_id() const { return preset_id_; }
  double control_constant() const { return control_m_; }
  double regularity_constant() const { return regularity_lambda_; }
  const Potential& potential() const { return potential_; }

  /// Largest fast-variable frequency present in a, H or a_tilde.
  int max_x_frequency() const { return k_med_; }
  bool y_dependent() const { return y_dependent_; }
  bool analytic_derivatives() const { return analytic_derivatives_; }

  /// All coefficient fields at (x mod 2*pi, y).
  CoeffEval eval(const Vec& x, const Vec& y) const;

  /// Induced drifts from the analytic preset derivatives.
  Drifts drifts(const Vec& x, const Vec& y) const;

  /// Hot-path variant for the SDE integrator: no derivative matrices kept.
  void drift_diffusion(const Vec& x, const Vec& y, Vec& b, Vec& c, Mat& sigma) const;

  /// x reduced to the canonical cell [0, 2*pi)^d. fmod is exact, so any
  /// input that equals x + 2*pi*e_i bit-for-bit reduces to the same cell
  /// point and re-evaluates identically.
  static Vec reduce_periodic(const Vec& x);

 protected:
  Medium(int dim, std::string preset_id, double control_m, double regularity_lambda,
         Potential potential, int k_med, bool y_dependent, bool analytic_derivatives)
      : dim_(dim),
        preset_id_(std::move(preset_id)),
        control_m_(control_m),
        regularity_lambda_(regularity_lambda),
        potential_(std::move(potential)),
        k_med_(k_med),
        y_dependent_(y_dependent),
        analytic_derivatives_(analytic_derivatives) {}

  /// Preset evaluation at an already-reduced x.
  virtual void eval_raw(const Vec& x_reduced, const Vec& y, RawFields& out) const = 0;

 private:
  int dim_;
  std::string preset_id_;
  double control_m_;
  double regularity_lambda_;
  Potential potential_;
  int k_med_;
  bool y_dependent_;
  bool analytic_derivatives_;
};

// Shipped preset catalog ------------------------------------------------

/// x- and y-independent fields: sigma = sigma_tilde = sigma0, H = h0.
std::unique_ptr<Medium> make_constant_medium(int dim, const Mat& sigma0, const Mat& h0,
                                             double control_m, Potential potential);
/// Convenience: constant medium from a symmetric PSD diffusion matrix a0.
std::unique_ptr<Medium> make_constant_medium_from_a(int dim, const Mat& a0, const Mat& h0,
                                                    double control_m, Potential potential);

/// 1D scalar a(x) = alpha + beta*sin(x), sigma = sigma_tilde = sqrt(a), H = 0.
std::unique_ptr<Medium> make_sine1d_medium(double alpha, double beta, Potential potential);

/// 2D degenerate preset: constant rank-one sigma_tilde = [[1, 1/c], [c, 1]],
/// sigma = (1 + delta*sin(x1 + y1)/2) * sigma_tilde, H = 0.
std::unique_ptr<Medium> make_degenerate2d_medium(double c, double delta, Potential potential);

/// Separable a(x, y) = (alpha + beta*cos(x1)) * (1 + gamma*exp(-|y|^2)) * Id.
std::unique_ptr<Medium> make_separable_medium(int dim, double alpha, double beta, double gamma,
                                              Potential potential);

/// Zero dynamics: sigma = sigma_tilde = H = 0.
std::unique_ptr<Medium> make_null_medium(int dim, Potential potential);

// Assumption validation --------------------------------------------------

struct ValidationCheck {
  std::string name;
  double margin = 0.0;  // >= 0 means satisfied (sign convention per check)
  bool pass = false;
  std::string note;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool pass = true;
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Worst-case margins for antisymmetry, the two-sided control bound,
/// boundedness, the Lipschitz-in-y bound and density normalization,
/// sampled on a grid with `grid_points` points per axis (>= 8).
ValidationReport validate_assumptions(const Medium& medium, int grid_points);

struct ErgodicityResult {
  bool ergodic = false;
  int null_dim = 0;
  int cutoff = 0;
  bool resolution_warning = false;
  std::string note;
};

/// Galerkin null-space probe of the reference operator
/// (1/2) sum_i D_i(a_tilde_ij D_j) on modes |k|_inf <= cutoff. The medium
/// is declared ergodic when constants are the only numerical null vectors.
ErgodicityResult check_microscopic_ergodicity(const Medium& medium, int cutoff);

}  // namespace homlab

#endif
