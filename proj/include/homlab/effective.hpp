#ifndef HOMLAB_EFFECTIVE_HPP
#define HOMLAB_EFFECTIVE_HPP

#include <array>
#include <string>
#include <vector>

#include "homlab/corrector.hpp"
#include "homlab/medium.hpp"
#include "homlab/types.hpp"

namespace homlab {

// Rectangular macro grid: per-axis origin, step and point count.
struct GridSpec {
  int dim = 1;
  Vec origin;
  Vec step;
  std::array<int, kMaxDim> counts{};

  size_t total() const;
  Vec point(size_t flat) const;
  std::array<int, kMaxDim> unflatten(size_t flat) const;
  size_t flatten(const std::array<int, kMaxDim>& idx) const;
  bool on_boundary(size_t flat) const;

  static GridSpec uniform(int dim, double lo, double hi, int points_per_axis);
};

struct KernelGeometry {
  int kernel_dim = 0;
  MatX kernel_basis;      // d x kernel_dim, orthonormal
  MatX complement_basis;  // d x (d - kernel_dim), orthonormal
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  double worst_principal_angle = 0.0;
  double worst_b_kernel_overlap = 0.0;  // max |<B, k>| / |B|
  double worst_h_kernel_image = 0.0;    // max |H k| / |H|
  bool pass = true;
  std::string note;
};

// Homogenized coefficient tables on the macro grid, with the degenerate
// geometry extracted once (the kernel does not depend on the grid point).
struct EffectiveTensors {
  GridSpec grid;
  std::vector<Mat> a_bar;
  std::vector<Mat> h_bar;
  std::vector<Vec> b_bar;
  std::vector<uint8_t> boundary_flag;  // one-sided differences used here
  KernelGeometry geometry;
  uint64_t config_hash = 0;

  /// Piecewise-cubic (per axis) interpolation; linear when an axis has
  /// fewer than 4 points. `inside` is false when y leaves the table.
  Mat interpolate_a(const Vec& y, bool* inside) const;
  Vec interpolate_b(const Vec& y, bool* inside) const;

  std::string to_json() const;
  static EffectiveTensors from_json(const std::string& text);
};

/// Extrapolated torus average of (I + Du)^T a (I + Du) at the macro point.
Mat effective_a(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                const std::vector<double>& lambda_ladder);

/// Same quadrature with H in the middle; antisymmetric result.
Mat effective_h(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                const std::vector<double>& lambda_ladder);

/// Both tensors from one set of corrector solves.
void effective_a_h(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                   const std::vector<double>& lambda_ladder, Mat* a_out, Mat* h_out);

/// Weighted divergence of the tensor table: grid differences of (A+H)
/// against the analytic gradient of the potential.
std::vector<Vec> effective_b(const GridSpec& grid, const std::vector<Mat>& a_bar,
                             const std::vector<Mat>& h_bar, const Potential& potential,
                             std::vector<uint8_t>* boundary_flag);

/// Variational reference tensor: per direction x, minimize the quadratic
/// torus average |sigma_tilde^T (D phi + x)|^2 over the Galerkin space
/// (minimum-norm least squares; the normal matrix may be singular).
Mat variational_a_tilde(const Medium& medium, const RealTrigBasis& basis,
                        double* minimizer_h1 = nullptr);

/// Eigen-analysis of the tensor table: kernel basis (threshold 1e-8 times
/// the spectral norm), two-sided bounds on the complement, principal-angle
/// agreement across the grid, B-orthogonality.
KernelGeometry kernel_and_geometry(const GridSpec& grid, const std::vector<Mat>& a_bar,
                                   const std::vector<Mat>& h_bar, const std::vector<Vec>& b_bar);

/// Full pipeline: correctors on every grid point, then B and geometry.
EffectiveTensors build_effective_tensors(const Medium& medium, const RealTrigBasis& basis,
                                         const GridSpec& grid,
                                         const std::vector<double>& lambda_ladder, int threads);

/// Symmetric PSD square root; input must be symmetric within 1e-8 and have
/// eigenvalues >= -1e-9 (clipped to zero).
Mat sqrt_psd(const Mat& m);

}  // namespace homlab

#endif
