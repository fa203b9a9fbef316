#ifndef HOMLAB_TYPES_HPP
#define HOMLAB_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace homlab {

// Spatial dimension is small (presets are 1D/2D); bounded-size Eigen types
// keep coefficient evaluation off the heap in the SDE hot loop.
constexpr int kMaxDim = 4;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using MatXc = Eigen::MatrixXcd;
using VecXc = Eigen::VectorXcd;

constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Input outside the operation's domain (non-finite point, bad parameter).
struct InputDomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Preset cannot supply what was asked of it (e.g. analytic derivatives).
struct UnsupportedPresetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Quadrature/basis resolution is insufficient for the coefficient field.
struct ResolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear solve failed or produced an unusable residual.
struct SingularSystemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The lambda ladder does not behave like a convergent resolvent family.
struct ExtrapolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor input violates symmetry/positivity requirements.
struct InvalidTensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Effective-tensor geometry inconsistent across the macro grid.
struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Monte Carlo run lost more paths than the blow-up budget allows.
struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Configuration file malformed or schema-violating.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_finite(const Vec& v, const std::string& what) {
  if (!v.allFinite()) throw InputDomainError(what + ": non-finite input");
}

}  // namespace homlab

#endif
