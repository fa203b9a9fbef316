#ifndef HOMLAB_FOURIER_HPP
#define HOMLAB_FOURIER_HPP

#include <array>
#include <complex>
#include <functional>
#include <vector>

#include "homlab/types.hpp"

namespace homlab {

using Complex = std::complex<double>;

// Integer multi-index on the torus, |k|_inf bounded by the owning object.
using ModeIndex = std::array<int, kMaxDim>;

inline int inf_norm(const ModeIndex& k, int dim) {
  int m = 0;
  for (int i = 0; i < dim; ++i) m = std::max(m, std::abs(k[i]));
  return m;
}

// Complex Fourier representation of a real matrix-valued 2*pi-periodic
// field: coeff(m) = torus-average of f(x) exp(-i m.x), stored densely for
// |m|_inf <= kmax. Hermitian symmetry coeff(-m) = conj(coeff(m)) holds by
// construction from real samples.
class MatrixFieldModes {
 public:
  MatrixFieldModes() = default;
  MatrixFieldModes(int dim, int rows, int kmax);

  /// Tensor-trapezoid projection of `field` onto modes |m|_inf <= kmax,
  /// using nq >= 2*kmax + 2 nodes per axis. `tail_energy` reports the
  /// relative energy found in the probe shell beyond kmax (aliasing guard).
  static MatrixFieldModes from_field(const std::function<Mat(const Vec&)>& field, int dim,
                                     int rows, int kmax, int nq, double* tail_energy);

  int dim() const { return dim_; }
  int rows() const { return rows_; }
  int kmax() const { return kmax_; }

  const MatXc& coeff(const ModeIndex& m) const { return table_[flat(m)]; }
  MatXc& coeff(const ModeIndex& m) { return table_[flat(m)]; }
  bool in_band(const ModeIndex& m) const {
    for (int i = 0; i < dim_; ++i)
      if (std::abs(m[i]) > kmax_) return false;
    return true;
  }

  /// Real-part evaluation; imaginary residual stays below 1e-12 * scale.
  Mat evaluate(const Vec& x) const;
  double evaluate_imag_residual(const Vec& x) const;

  /// Largest |m|_inf with non-negligible coefficient.
  int effective_bandwidth(double rel_tol = 1e-14) const;

 private:
  size_t flat(const ModeIndex& m) const;

  int dim_ = 0;
  int rows_ = 0;
  int kmax_ = 0;
  std::vector<MatXc> table_;
};

// Real trigonometric Galerkin basis on the d-torus:
// {1} along with cos(k.x), sin(k.x) for canonical k with 0 < |k|_inf <= kgal
// (canonical: first nonzero component positive). Orthogonal under the torus
// average with norms 1 and 1/2.
class RealTrigBasis {
 public:
  enum class ModeType { Const, Cos, Sin };
  struct Mode {
    ModeType type;
    ModeIndex k;
  };

  RealTrigBasis(int dim, int kgal, int quadrature_per_axis = 0);

  int dim() const { return dim_; }
  int cutoff() const { return kgal_; }
  int quadrature_per_axis() const { return nq_; }
  size_t size() const { return modes_.size(); }
  const Mode& mode(size_t p) const { return modes_[p]; }
  const std::vector<Mode>& modes() const { return modes_; }

  /// Index of a mode, -1 when outside the basis.
  long find(ModeType type, const ModeIndex& k) const;

  double value(size_t p, const Vec& x) const;
  Vec grad(size_t p, const Vec& x) const;

  /// Torus-average norm (phi_p, phi_p)_2: 1 for the constant, 1/2 otherwise.
  double norm_sq(size_t p) const { return modes_[p].type == ModeType::Const ? 1.0 : 0.5; }

  /// Quadrature nodes of the tensor-trapezoid rule (equal weights 1/nq^d).
  size_t node_count() const;
  Vec node(size_t q) const;
  double node_weight() const;

  /// Synthesize coefficient vectors on the nodes.
  ///   values: u(x_q), gradients: Du(x_q) stacked per node.
  void evaluate_on_nodes(const VecX& coeffs, VecX* values, MatX* gradients) const;

 private:
  int dim_;
  int kgal_;
  int nq_;
  std::vector<Mode> modes_;
};

// Quadratic-form assembly in the real basis through exact mode coupling:
// entries are (1/2) * torus-avg( (g D phi_q) . D phi_p ) for a matrix
// trig-polynomial field g. Equivalent to tensor-trapezoid quadrature with
// enough nodes; banded because g has few modes.
MatX assemble_gradient_form(const MatrixFieldModes& g, const RealTrigBasis& basis);

/// rhs entries -(1/2) * torus-avg( (g e_i) . D phi_p ).
VecX assemble_drift_rhs(const MatrixFieldModes& g, const RealTrigBasis& basis, int component);

/// Diagonal of the mass matrix (the basis is orthogonal).
VecX mass_diagonal(const RealTrigBasis& basis);

}  // namespace homlab

#endif
