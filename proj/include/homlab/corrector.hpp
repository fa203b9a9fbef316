#ifndef HOMLAB_CORRECTOR_HPP
#define HOMLAB_CORRECTOR_HPP

#include <memory>
#include <string>
#include <vector>

#include "homlab/fourier.hpp"
#include "homlab/medium.hpp"
#include "homlab/types.hpp"

namespace homlab {

enum class OperatorKind { Full, Symmetric, FullViscous, SymmetricViscous };
enum class RhsKind { DriftComponent, SingleMode };

const char* to_string(OperatorKind k);

inline bool is_viscous(OperatorKind k) {
  return k == OperatorKind::FullViscous || k == OperatorKind::SymmetricViscous;
}
inline bool is_symmetric(OperatorKind k) {
  return k == OperatorKind::Symmetric || k == OperatorKind::SymmetricViscous;
}

// One resolvent problem lambda*u - L u = rhs at a frozen macro point y.
// The full operator uses a + H, the symmetric one a alone; viscous kinds
// replace a by a + Id/n.
struct ResolventProblem {
  const Medium* medium = nullptr;
  Vec y;
  double lambda = 1.0;
  OperatorKind kind = OperatorKind::Full;
  int viscosity_n = 0;  // >= 1 for viscous kinds
  RhsKind rhs_kind = RhsKind::DriftComponent;
  int drift_component = 0;  // which b_i drives the problem
  RealTrigBasis::ModeType rhs_mode_type = RealTrigBasis::ModeType::Cos;
  ModeIndex rhs_mode_k{};
  double rhs_amplitude = 1.0;

  std::string rhs_label() const;
  void check() const;
};

// Medium coefficient fields projected on the fast-variable Fourier band at
// a frozen y; shared by assembly and the effective-tensor quadratures.
struct MediumModes {
  MatrixFieldModes a_plus_h;
  MatrixFieldModes a;
  MatrixFieldModes h;
  MatrixFieldModes a_tilde;
  double alias_tail = 0.0;
};

MediumModes sample_medium_modes(const Medium& medium, const RealTrigBasis& basis, const Vec& y);

struct AssembledSystem {
  MatX matrix;
  VecX rhs;
};

/// Galerkin matrix lambda*(phi_p, phi_q) + (1/2)((a+H) D phi_q, D phi_p)
/// and right-hand side; viscous kinds add (1/(2n)) (D phi_q, D phi_p).
AssembledSystem assemble(const ResolventProblem& problem, const RealTrigBasis& basis);
AssembledSystem assemble(const ResolventProblem& problem, const RealTrigBasis& basis,
                         const MediumModes& modes);

struct CorrectorSolution {
  std::shared_ptr<const RealTrigBasis> basis;
  VecX coeffs;
  double lambda = 0.0;
  VecX y_point;
  OperatorKind kind = OperatorKind::Full;
  std::string rhs_label;

  double l2_sq = 0.0;        // |u|_2^2
  double lambda_l2 = 0.0;    // lambda |u|_2^2
  double h1_energy = 0.0;    // ||u||_1^2 = (1/2)(a_tilde Du, Du)_2
  double bform_energy = 0.0; // B(u, u) for the problem's operator
  double grad_l2_sq = 0.0;   // |Du|_2^2
  double weak_residual = 0.0;
  double residual_scale = 1.0;

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  /// sigma_tilde(x)^T Du(x): the only gradient direction that survives the
  /// degenerate limit.
  Vec sigma_tilde_gradient(const Medium& medium, const Vec& x) const;
};

/// Build a solution record (norms included) from a coefficient vector.
CorrectorSolution make_solution(std::shared_ptr<const RealTrigBasis> basis,
                                const MediumModes& modes, const ResolventProblem& problem,
                                const VecX& coeffs);

CorrectorSolution solve_resolvent(const ResolventProblem& problem, const RealTrigBasis& basis);
CorrectorSolution solve_resolvent(const ResolventProblem& problem,
                                  std::shared_ptr<const RealTrigBasis> basis,
                                  const MediumModes& modes);

struct ExtrapolationResult {
  VecX limit_coeffs;                 // Richardson limit of the coefficients
  std::vector<double> lambda_decay;  // lambda |u_lambda|_2^2 per rung
  std::vector<CorrectorSolution> solutions;
};

/// Solve along a decreasing lambda ladder (>= 3 rungs, consecutive ratio
/// <= 1/4) and extrapolate to lambda -> 0. The energies lambda|u|_2^2 must
/// decrease toward zero or the extrapolation is rejected.
ExtrapolationResult extrapolate_corrector(const ResolventProblem& base,
                                          const std::vector<double>& lambda_ladder,
                                          const RealTrigBasis& basis);

/// Polynomial (Neville) extrapolation of vector samples to lambda = 0.
VecX richardson_to_zero(const std::vector<double>& lambdas, const std::vector<VecX>& values);

struct YDerivatives {
  std::vector<CorrectorSolution> first;   // d/dy_j u, one per direction
  std::vector<CorrectorSolution> second;  // d^2/dy_j^2 u, one per direction
  double h_step = 0.0;
};

/// Central finite differences of the corrector in the macro variable.
YDerivatives corrector_y_derivatives(const ResolventProblem& problem,
                                     const RealTrigBasis& basis, double h_step);

struct ViscosityDecay {
  std::vector<int> n_ladder;
  std::vector<double> h1_distance;     // ||u^(n) - u||_1
  std::vector<double> grad_l2_over_n;  // n^{-1} |D u^(n)|_2^2
};

/// Distances between the viscous solutions and the unregularized one along
/// an increasing n ladder (>= 3 entries); both sequences must decay from
/// first to last.
ViscosityDecay viscosity_consistency(const ResolventProblem& problem, const RealTrigBasis& basis,
                                     const std::vector<int>& n_ladder);

std::string corrector_to_json(const CorrectorSolution& s);

}  // namespace homlab

#endif
