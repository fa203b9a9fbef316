#ifndef HOMLAB_POTENTIAL_HPP
#define HOMLAB_POTENTIAL_HPP

#include <cmath>

#include "homlab/rng.hpp"
#include "homlab/types.hpp"

namespace homlab {

// Confining potential V through its probability density exp(-2V).
// Two shipped families: the standard Gaussian-type density
// pi^{-d/2} exp(-|y|^2) and a constant-V box used as a test fixture
// (flat density on [-L, L]^d, zero gradient).
class Potential {
 public:
  enum class Kind { Gaussian, UniformBox };

  static Potential gaussian(int dim) { return Potential(Kind::Gaussian, dim, 0.0); }
  static Potential uniform_box(int dim, double halfwidth) {
    if (halfwidth <= 0.0) throw InputDomainError("uniform_box: halfwidth must be positive");
    return Potential(Kind::UniformBox, dim, halfwidth);
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }

  double value(const Vec& y) const {
    if (kind_ == Kind::Gaussian) {
      return 0.5 * y.squaredNorm() + 0.25 * dim_ * std::log(kPi);
    }
    return 0.5 * dim_ * std::log(2.0 * halfwidth_);
  }

  Vec grad(const Vec& y) const {
    if (kind_ == Kind::Gaussian) return y;
    return Vec::Zero(dim_);
  }

  double density(const Vec& y) const { return std::exp(-2.0 * value(y)); }

  /// Per-coordinate mean of the density (both families are centered).
  double coord_mean() const { return 0.0; }

  /// Per-coordinate second moment of the density.
  double coord_second_moment() const {
    if (kind_ == Kind::Gaussian) return 0.5;
    return halfwidth_ * halfwidth_ / 3.0;
  }

  /// Box over which the numerical normalization check integrates.
  double truncation_halfwidth() const {
    return kind_ == Kind::Gaussian ? 7.0 : halfwidth_;
  }

  /// One i.i.d. draw from exp(-2V) dy; fully determined by (rng, counter).
  Vec sample(const CounterRng& rng, uint64_t counter) const {
    Vec y(dim_);
    if (kind_ == Kind::Gaussian) {
      for (int i = 0; i < dim_; ++i) y[i] = rng.normal(counter, i) * kInvSqrt2;
    } else {
      for (int i = 0; i < dim_; ++i)
        y[i] = (2.0 * rng.uniform(counter, i) - 1.0) * halfwidth_;
    }
    return y;
  }

 private:
  Potential(Kind kind, int dim, double halfwidth)
      : kind_(kind), dim_(dim), halfwidth_(halfwidth) {}

  static constexpr double kPi = 3.14159265358979323846264338327950288;
  static constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

  Kind kind_;
  int dim_;
  double halfwidth_;
};

}  // namespace homlab

#endif
