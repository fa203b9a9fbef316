#include "homlab/medium.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "homlab/fourier.hpp"

namespace homlab {

namespace {

bool advanceY(std::array<int, kMaxDim>& idx, int dim, int n) {
  for (int i = 0; i < dim; ++i) {
    if (++idx[i] < n) return true;
    idx[i] = 0;
  }
  return false;
}

void size_raw(RawFields& rf, int dim) {
  rf.sigma = Mat::Zero(dim, dim);
  rf.sigma_tilde = Mat::Zero(dim, dim);
  rf.h = Mat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    rf.dx_sigma[i] = Mat::Zero(dim, dim);
    rf.dy_sigma[i] = Mat::Zero(dim, dim);
    rf.dx_h[i] = Mat::Zero(dim, dim);
    rf.dy_h[i] = Mat::Zero(dim, dim);
  }
}

double spectral_norm(const Mat& m) {
  return m.rows() == 0 ? 0.0 : Eigen::JacobiSVD<MatX>(MatX(m)).singularValues()[0];
}

double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<MatX> es(MatX(0.5 * (sym + sym.transpose())));
  return es.eigenvalues().minCoeff();
}

}  // namespace

Vec Medium::reduce_periodic(const Vec& x) {
  Vec r(x.size());
  for (long i = 0; i < x.size(); ++i) {
    double v = std::fmod(x[i], kTwoPi);
    if (v < 0.0) v += kTwoPi;
    r[i] = v;
  }
  return r;
}

CoeffEval Medium::eval(const Vec& x, const Vec& y) const {
  require_finite(x, "medium.eval x");
  require_finite(y, "medium.eval y");
  RawFields rf;
  size_raw(rf, dim_);
  eval_raw(reduce_periodic(x), y, rf);

  CoeffEval out;
  out.sigma = rf.sigma;
  out.sigma_tilde = rf.sigma_tilde;
  out.h = rf.h;
  out.a = rf.sigma * rf.sigma.transpose();
  out.a_tilde = rf.sigma_tilde * rf.sigma_tilde.transpose();
  for (int i = 0; i < dim_; ++i) {
    out.dx_aph[i] = rf.dx_sigma[i] * rf.sigma.transpose() +
                    rf.sigma * rf.dx_sigma[i].transpose() + rf.dx_h[i];
    out.dy_aph[i] = rf.dy_sigma[i] * rf.sigma.transpose() +
                    rf.sigma * rf.dy_sigma[i].transpose() + rf.dy_h[i];
  }
  out.v = potential_.value(y);
  out.grad_v = potential_.grad(y);
  return out;
}

Drifts Medium::drifts(const Vec& x, const Vec& y) const {
  if (!analytic_derivatives_)
    throw UnsupportedPresetError(preset_id_ + ": analytic derivatives unavailable");
  const CoeffEval ce = eval(x, y);
  Drifts d;
  d.b = Vec::Zero(dim_);
  d.c = Vec::Zero(dim_);
  const Mat aph = ce.a + ce.h;
  for (int j = 0; j < dim_; ++j) {
    double bj = 0.0, cj = 0.0;
    for (int i = 0; i < dim_; ++i) {
      bj += ce.dx_aph[i](i, j);
      cj += ce.dy_aph[i](i, j) - 2.0 * ce.grad_v[i] * aph(i, j);
    }
    d.b[j] = 0.5 * bj;
    d.c[j] = 0.5 * cj;
  }
  return d;
}

void Medium::drift_diffusion(const Vec& x, const Vec& y, Vec& b, Vec& c, Mat& sigma) const {
  RawFields rf;
  size_raw(rf, dim_);
  eval_raw(reduce_periodic(x), y, rf);
  sigma = rf.sigma;

  const Mat a = rf.sigma * rf.sigma.transpose();
  const Mat aph = a + rf.h;
  const Vec gv = potential_.grad(y);
  b.setZero(dim_);
  c.setZero(dim_);
  for (int i = 0; i < dim_; ++i) {
    const Mat dai = rf.dx_sigma[i] * rf.sigma.transpose() +
                    rf.sigma * rf.dx_sigma[i].transpose() + rf.dx_h[i];
    const Mat dyi = rf.dy_sigma[i] * rf.sigma.transpose() +
                    rf.sigma * rf.dy_sigma[i].transpose() + rf.dy_h[i];
    for (int j = 0; j < dim_; ++j) {
      b[j] += 0.5 * dai(i, j);
      c[j] += 0.5 * (dyi(i, j) - 2.0 * gv[i] * aph(i, j));
    }
  }
}

// ---------------------------------------------------------------------------
// Presets

namespace {

class ConstantMedium final : public Medium {
 public:
  ConstantMedium(int dim, Mat sigma0, Mat h0, double control_m, Potential potential)
      : Medium(dim, "constant", control_m,
               spectral_norm(sigma0) + spectral_norm(h0) + 1.0, std::move(potential),
               /*k_med=*/0, /*y_dependent=*/false, /*analytic=*/true),
        sigma0_(std::move(sigma0)),
        h0_(std::move(h0)) {}

  void eval_raw(const Vec&, const Vec&, RawFields& rf) const override {
    rf.sigma = sigma0_;
    rf.sigma_tilde = sigma0_;
    rf.h = h0_;
  }

 private:
  Mat sigma0_, h0_;
};

class NullMedium final : public Medium {
 public:
  NullMedium(int dim, Potential potential)
      : Medium(dim, "null", 1.0, 1.0, std::move(potential), 0, false, true) {}
  void eval_raw(const Vec&, const Vec&, RawFields&) const override {}
};

class Sine1dMedium final : public Medium {
 public:
  Sine1dMedium(double alpha, double beta, Potential potential)
      : Medium(1, "sine1d", 1.0,
               std::sqrt(alpha + std::abs(beta)) + std::abs(beta) / (alpha - std::abs(beta)) + 2.0,
               std::move(potential), 1, false, true),
        alpha_(alpha),
        beta_(beta) {
    if (alpha <= std::abs(beta))
      throw InputDomainError("sine1d: alpha must exceed |beta| for positivity");
  }

  void eval_raw(const Vec& x, const Vec&, RawFields& rf) const override {
    const double a = alpha_ + beta_ * std::sin(x[0]);
    const double s = std::sqrt(a);
    rf.sigma(0, 0) = s;
    rf.sigma_tilde(0, 0) = s;
    rf.dx_sigma[0](0, 0) = 0.5 * beta_ * std::cos(x[0]) / s;
  }

 private:
  double alpha_, beta_;
};

// Degenerate 2D preset: rank-one constant reference matrix, scalar
// periodic-in-(x1+y1) modulation of sigma. H = 0.
class Degenerate2dMedium final : public Medium {
 public:
  Degenerate2dMedium(double c, double delta, Potential potential)
      : Medium(2, "sec4", control_for(delta),
               (1.0 + std::abs(delta)) * tilde_norm(c) + 2.0, std::move(potential),
               delta == 0.0 ? 0 : 2, /*y_dependent=*/delta != 0.0, true),
        c_(c),
        delta_(delta) {
    if (c == 0.0) throw InputDomainError("degenerate2d: c must be nonzero");
    if (std::abs(delta) >= 1.0)
      throw InputDomainError("degenerate2d: |delta| must be < 1");
    tilde_ = Mat::Zero(2, 2);
    tilde_(0, 0) = 1.0;
    tilde_(0, 1) = 1.0 / c;
    tilde_(1, 0) = c;
    tilde_(1, 1) = 1.0;
  }

  void eval_raw(const Vec& x, const Vec& y, RawFields& rf) const override {
    const double phase = x[0] + y[0];
    const double u = 1.0 + 0.5 * delta_ * std::sin(phase);
    const double du = 0.5 * delta_ * std::cos(phase);
    rf.sigma = u * tilde_;
    rf.sigma_tilde = tilde_;
    rf.dx_sigma[0] = du * tilde_;
    rf.dy_sigma[0] = du * tilde_;
  }

 private:
  static double control_for(double delta) {
    const double lo = 1.0 - 0.5 * std::abs(delta);
    const double hi = 1.0 + 0.5 * std::abs(delta);
    return std::max(hi * hi, 1.0 / (lo * lo));
  }
  static double tilde_norm(double c) {
    return std::sqrt((1.0 + c * c) * (1.0 + 1.0 / (c * c)));
  }

  double c_, delta_;
  Mat tilde_;
};

class SeparableMedium final : public Medium {
 public:
  SeparableMedium(int dim, double alpha, double beta, double gamma, Potential potential)
      : Medium(dim, "separable", 1.0 + std::abs(gamma),
               std::sqrt((alpha + std::abs(beta)) * (1.0 + std::abs(gamma))) + 2.0,
               std::move(potential), 1, gamma != 0.0, true),
        alpha_(alpha),
        beta_(beta),
        gamma_(gamma) {
    if (alpha <= std::abs(beta))
      throw InputDomainError("separable: alpha must exceed |beta|");
    if (gamma < 0.0) throw InputDomainError("separable: gamma must be >= 0");
  }

  void eval_raw(const Vec& x, const Vec& y, RawFields& rf) const override {
    const int d = dim();
    const double p = alpha_ + beta_ * std::cos(x[0]);
    const double dp = -beta_ * std::sin(x[0]);
    const double e = std::exp(-y.squaredNorm());
    const double q = 1.0 + gamma_ * e;
    const double sp = std::sqrt(p), sq = std::sqrt(q);
    for (int i = 0; i < d; ++i) {
      rf.sigma(i, i) = sp * sq;
      rf.sigma_tilde(i, i) = sp;
      rf.dx_sigma[0](i, i) = 0.5 * dp * sq / sp;
    }
    for (int j = 0; j < d; ++j) {
      const double dqj = -2.0 * y[j] * gamma_ * e;
      for (int i = 0; i < d; ++i) rf.dy_sigma[j](i, i) = 0.5 * sp * dqj / sq;
    }
  }

 private:
  double alpha_, beta_, gamma_;
};

}  // namespace

std::unique_ptr<Medium> make_constant_medium(int dim, const Mat& sigma0, const Mat& h0,
                                             double control_m, Potential potential) {
  return std::make_unique<ConstantMedium>(dim, sigma0, h0, control_m, std::move(potential));
}

std::unique_ptr<Medium> make_constant_medium_from_a(int dim, const Mat& a0, const Mat& h0,
                                                    double control_m, Potential potential) {
  Eigen::SelfAdjointEigenSolver<MatX> es{MatX(a0)};
  VecX ev = es.eigenvalues();
  for (long i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-12) throw InvalidTensorError("constant medium: a0 not PSD");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  Mat sigma0 = Mat(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  return make_constant_medium(dim, sigma0, h0, control_m, std::move(potential));
}

std::unique_ptr<Medium> make_sine1d_medium(double alpha, double beta, Potential potential) {
  return std::make_unique<Sine1dMedium>(alpha, beta, std::move(potential));
}

std::unique_ptr<Medium> make_degenerate2d_medium(double c, double delta, Potential potential) {
  return std::make_unique<Degenerate2dMedium>(c, delta, std::move(potential));
}

std::unique_ptr<Medium> make_separable_medium(int dim, double alpha, double beta, double gamma,
                                              Potential potential) {
  return std::make_unique<SeparableMedium>(dim, alpha, beta, gamma, std::move(potential));
}

std::unique_ptr<Medium> make_null_medium(int dim, Potential potential) {
  return std::make_unique<NullMedium>(dim, std::move(potential));
}

// ---------------------------------------------------------------------------
// Assumption validation

namespace {

// Dyadic grid point: multiple of 2^-30, so that adding 2*pi stays exact.
double dyadic(double v) { return std::ldexp(std::round(std::ldexp(v, 30)), -30); }

}  // namespace

ValidationReport validate_assumptions(const Medium& medium, int grid_points) {
  if (grid_points < 8) throw InputDomainError("validate_assumptions: grid must be >= 8");
  const int d = medium.dim();
  const double m_const = medium.control_constant();
  const double lam = medium.regularity_constant();

  ValidationCheck antisym{"h_antisymmetry", 0.0, true, "max |H + H^T|"};
  ValidationCheck lower{"control_lower", 0.0, true, "max negative part of eig(a - a_tilde/M)"};
  ValidationCheck upper{"control_upper", 0.0, true, "max negative part of eig(M a_tilde - a)"};
  ValidationCheck bounds{"field_bounds", 0.0, true, "max field norm above Lambda"};
  ValidationCheck lip{"sigma_y_lipschitz", 0.0, true,
                      "max negative part of eig(M a_tilde |h|^2 - dsigma dsigma^T)"};
  ValidationCheck dens{"density_normalization", 0.0, true, "|integral of exp(-2V) - 1|"};
  ValidationCheck period{"x_periodicity", 0.0, true, "max |f(x + 2 pi e_i) - f(x)|"};

  const int gy = medium.y_dependent() ? 5 : 1;
  const double ybox = 2.0;
  const std::array<double, 2> hsteps{0.1, 0.01};

  std::array<int, kMaxDim> xi{};
  Vec x(d), y(d);
  do {
    for (int i = 0; i < d; ++i) x[i] = dyadic(kTwoPi * xi[i] / grid_points);
    std::array<int, kMaxDim> yi{};
    do {
      for (int i = 0; i < d; ++i)
        y[i] = gy == 1 ? 0.3 : -ybox + 2.0 * ybox * yi[i] / (gy - 1);
      const CoeffEval ce = medium.eval(x, y);

      antisym.margin = std::max(antisym.margin, (ce.h + ce.h.transpose()).cwiseAbs().maxCoeff());
      lower.margin = std::max(lower.margin,
                              std::max(0.0, -min_eigenvalue(ce.a - ce.a_tilde / m_const)));
      upper.margin = std::max(upper.margin,
                              std::max(0.0, -min_eigenvalue(m_const * ce.a_tilde - ce.a)));
      const double field_norm = std::max({spectral_norm(ce.sigma), spectral_norm(ce.sigma_tilde),
                                          spectral_norm(ce.h)});
      bounds.margin = std::max(bounds.margin, std::max(0.0, field_norm - lam));

      for (double hs : hsteps) {
        for (int dir = 0; dir < d; ++dir) {
          Vec yh = y;
          yh[dir] += hs;
          const Mat ds = medium.eval(x, yh).sigma - ce.sigma;
          const Mat gap = m_const * ce.a_tilde * (hs * hs) - ds * ds.transpose();
          lip.margin = std::max(lip.margin, std::max(0.0, -min_eigenvalue(gap)));
        }
      }

      // Bit-exact periodicity at dyadic nodes.
      for (int dir = 0; dir < d; ++dir) {
        Vec xs = x;
        xs[dir] += kTwoPi;
        const CoeffEval cs = medium.eval(xs, y);
        double diff = (cs.a - ce.a).cwiseAbs().maxCoeff();
        diff = std::max(diff, (cs.sigma - ce.sigma).cwiseAbs().maxCoeff());
        diff = std::max(diff, (cs.h - ce.h).cwiseAbs().maxCoeff());
        period.margin = std::max(period.margin, diff);
      }
    } while (advanceY(yi, d, gy));
  } while (advanceY(xi, d, grid_points));

  // Density normalization over the truncation box (trapezoid; the shipped
  // densities are analytic so the rule is spectrally accurate).
  {
    const Potential& pot = medium.potential();
    const double L = pot.truncation_halfwidth();
    const int nq = 200;
    const double h = 2.0 * L / nq;
    double integral = 0.0;
    std::array<int, kMaxDim> qi{};
    Vec yy(d);
    do {
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        yy[i] = -L + h * qi[i];
        if (qi[i] == 0 || qi[i] == nq) w *= 0.5;
      }
      integral += w * pot.density(yy);
    } while (advanceY(qi, d, nq + 1));
    integral *= std::pow(h, d);
    dens.margin = std::abs(integral - 1.0);
  }

  antisym.pass = antisym.margin <= 1e-12;
  lower.pass = lower.margin <= 1e-10;
  upper.pass = upper.margin <= 1e-10;
  bounds.pass = bounds.margin <= 0.0;
  lip.pass = lip.margin <= 1e-10;
  dens.pass = dens.margin <= 1e-6;
  period.pass = period.margin == 0.0;

  ValidationReport report;
  report.checks = {antisym, lower, upper, bounds, lip, dens, period};
  for (const auto& c : report.checks) report.pass = report.pass && c.pass;
  return report;
}

ErgodicityResult check_microscopic_ergodicity(const Medium& medium, int cutoff) {
  if (cutoff < 1) throw InputDomainError("ergodicity: cutoff must be >= 1");
  const int d = medium.dim();
  ErgodicityResult res;
  res.cutoff = cutoff;

  const int kmed = medium.max_x_frequency();
  if (cutoff < kmed) {
    res.resolution_warning = true;
    res.note = "cutoff below the medium's fast-mode bandwidth";
  }

  const int nq = 2 * (cutoff + kmed) + 4;
  RealTrigBasis basis(d, cutoff, std::max(nq, 4 * cutoff));
  double tail = 0.0;
  MatrixFieldModes atilde = MatrixFieldModes::from_field(
      [&](const Vec& x) { return medium.eval(x, Vec::Zero(d)).a_tilde; }, d, d, kmed,
      basis.quadrature_per_axis(), &tail);
  if (tail > 1e-6) {
    res.resolution_warning = true;
    res.note += (res.note.empty() ? "" : "; ");
    res.note += "aliasing tail above tolerance";
  }

  const MatX form = assemble_gradient_form(atilde, basis);
  Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (form + form.transpose()));
  const VecX ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  int null_dim = 0;
  for (long i = 0; i < ev.size(); ++i)
    if (std::abs(ev[i]) < 1e-8 * std::max(top, 1e-300)) ++null_dim;
  if (top == 0.0) null_dim = static_cast<int>(ev.size());

  res.null_dim = null_dim;
  res.ergodic = (null_dim == 1);
  return res;
}

}  // namespace homlab
