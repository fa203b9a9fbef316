#include <doctest.h>

#include <cmath>
#include <memory>

#include "homlab/corrector.hpp"

using namespace homlab;

namespace {

Vec vec1(double a) {
  Vec v(1);
  v[0] = a;
  return v;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v[0] = a;
  v[1] = b;
  return v;
}

double unit_rand(uint64_t i) {
  uint64_t z = i + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

ResolventProblem drift_problem(const Medium& m, double lambda, int component = 0) {
  ResolventProblem p;
  p.medium = &m;
  p.y = Vec::Zero(m.dim());
  p.lambda = lambda;
  p.kind = OperatorKind::Full;
  p.rhs_kind = RhsKind::DriftComponent;
  p.drift_component = component;
  return p;
}

ResolventProblem mode_problem(const Medium& m, double lambda, int k1,
                              RealTrigBasis::ModeType type = RealTrigBasis::ModeType::Cos) {
  ResolventProblem p;
  p.medium = &m;
  p.y = Vec::Zero(m.dim());
  p.lambda = lambda;
  p.kind = OperatorKind::Full;
  p.rhs_kind = RhsKind::SingleMode;
  p.rhs_mode_type = type;
  p.rhs_mode_k = ModeIndex{};
  p.rhs_mode_k[0] = k1;
  return p;
}

// Brute-force quadrature assembly: the independent oracle for the
// mode-coupling assembly path.
MatX quadrature_matrix(const Medium& m, const Vec& y, double lambda, const RealTrigBasis& basis,
                       bool include_h, double viscosity = 0.0) {
  const size_t n = basis.size();
  MatX out = MatX::Zero(static_cast<long>(n), static_cast<long>(n));
  const double w = basis.node_weight();
  for (size_t q = 0; q < basis.node_count(); ++q) {
    const Vec x = basis.node(q);
    const CoeffEval ce = m.eval(x, y);
    Mat field = include_h ? Mat(ce.a + ce.h) : ce.a;
    for (int i = 0; i < m.dim(); ++i) field(i, i) += viscosity;
    for (size_t p = 0; p < n; ++p) {
      const double vp = basis.value(p, x);
      const Vec gp = basis.grad(p, x);
      for (size_t r = 0; r < n; ++r) {
        const double vr = basis.value(r, x);
        const Vec gr = basis.grad(r, x);
        out(static_cast<long>(p), static_cast<long>(r)) +=
            w * (lambda * vp * vr + 0.5 * gp.dot(field * gr));
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("basis functions are orthogonal under the torus average") {
  RealTrigBasis basis(2, 3, 16);
  const double w = basis.node_weight();
  for (size_t p = 0; p < basis.size(); ++p) {
    for (size_t q = p; q < std::min(basis.size(), p + 7); ++q) {
      double acc = 0.0;
      for (size_t node = 0; node < basis.node_count(); ++node) {
        const Vec x = basis.node(node);
        acc += w * basis.value(p, x) * basis.value(q, x);
      }
      const double expect = p == q ? basis.norm_sq(p) : 0.0;
      CHECK(std::abs(acc - expect) < 1e-12);
    }
  }
}

TEST_CASE("assembly matches hand quadrature values") {
  SUBCASE("constant identity: diagonal entry for cos(x1) is 3/4") {
    auto m = make_constant_medium_from_a(1, Mat(Mat::Identity(1, 1)), Mat(Mat::Zero(1, 1)), 1.0,
                                         Potential::gaussian(1));
    RealTrigBasis basis(1, 4);
    const AssembledSystem sys = assemble(drift_problem(*m, 1.0), basis);
    ModeIndex k{};
    k[0] = 1;
    const long idx = basis.find(RealTrigBasis::ModeType::Cos, k);
    REQUIRE(idx >= 0);
    CHECK(sys.matrix(idx, idx) == doctest::Approx(0.75).epsilon(1e-14));
  }

  SUBCASE("constant coefficients produce a zero drift rhs") {
    auto m = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), Mat(Mat::Zero(2, 2)), 1.0,
                                         Potential::gaussian(2));
    RealTrigBasis basis(2, 3);
    const AssembledSystem sys = assemble(drift_problem(*m, 1.0), basis);
    CHECK(sys.rhs.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("antisymmetric field leaves the symmetric part untouched") {
    Mat h(2, 2);
    h << 0.0, 0.4, -0.4, 0.0;
    auto with_h = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), h, 2.0,
                                              Potential::gaussian(2));
    auto no_h = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), Mat(Mat::Zero(2, 2)),
                                            2.0, Potential::gaussian(2));
    RealTrigBasis basis(2, 3);
    const MatX a_h = assemble(drift_problem(*with_h, 0.5), basis).matrix;
    const MatX a_0 = assemble(drift_problem(*no_h, 0.5), basis).matrix;
    const MatX sym = 0.5 * (a_h + a_h.transpose());
    CHECK((sym - a_0).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("mode-coupling assembly equals brute-force quadrature") {
    auto m = make_degenerate2d_medium(2.0, 0.6, Potential::gaussian(2));
    const Vec y = vec2(0.4, -0.7);
    RealTrigBasis basis(2, 4, 24);
    ResolventProblem p = drift_problem(*m, 0.3);
    p.y = y;
    const AssembledSystem sys = assemble(p, basis);
    const MatX oracle = quadrature_matrix(*m, y, 0.3, basis, true);
    CHECK((sys.matrix - oracle).cwiseAbs().maxCoeff() < 1e-11);
  }

  SUBCASE("viscous assembly equals brute force with a + Id/n") {
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 6);
    ResolventProblem p = drift_problem(*m, 0.2);
    p.kind = OperatorKind::FullViscous;
    p.viscosity_n = 7;
    const AssembledSystem sys = assemble(p, basis);
    const MatX oracle = quadrature_matrix(*m, Vec::Zero(1), 0.2, basis, true, 1.0 / 7.0);
    CHECK((sys.matrix - oracle).cwiseAbs().maxCoeff() < 1e-11);
  }

  SUBCASE("basis under-resolving the medium is rejected") {
    auto m = make_degenerate2d_medium(2.0, 0.6, Potential::gaussian(2));
    RealTrigBasis basis(2, 3);  // k_med = 2 needs k_gal >= 4
    CHECK_THROWS_AS(assemble(drift_problem(*m, 1.0), basis), ResolutionError);
  }
}

TEST_CASE("resolvent solves reproduce analytic solutions") {
  SUBCASE("constant coefficients give the zero corrector") {
    auto m = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), Mat(Mat::Zero(2, 2)), 1.0,
                                         Potential::gaussian(2));
    RealTrigBasis basis(2, 3);
    const CorrectorSolution u = solve_resolvent(drift_problem(*m, 1.0), basis);
    CHECK(u.coeffs.cwiseAbs().maxCoeff() == 0.0);
    CHECK(u.h1_energy == 0.0);
  }

  SUBCASE("single mode: lambda u - u''/2 = cos x has u = (2/3) cos x") {
    auto m = make_constant_medium_from_a(1, Mat(Mat::Identity(1, 1)), Mat(Mat::Zero(1, 1)), 1.0,
                                         Potential::gaussian(1));
    RealTrigBasis basis(1, 6);
    const CorrectorSolution u = solve_resolvent(mode_problem(*m, 1.0, 1), basis);
    ModeIndex k{};
    k[0] = 1;
    const long idx = basis.find(RealTrigBasis::ModeType::Cos, k);
    CHECK(std::abs(u.coeffs[idx] - 2.0 / 3.0) < 1e-10);
    VecX rest = u.coeffs;
    rest[idx] = 0.0;
    CHECK(rest.cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("viscous single mode picks up the (1 + 1/n) factor") {
    auto m = make_constant_medium_from_a(1, Mat(Mat::Identity(1, 1)), Mat(Mat::Zero(1, 1)), 1.0,
                                         Potential::gaussian(1));
    RealTrigBasis basis(1, 6);
    for (int n : {3, 10, 1000}) {
      ResolventProblem p = mode_problem(*m, 1.0, 1);
      p.kind = OperatorKind::FullViscous;
      p.viscosity_n = n;
      const CorrectorSolution u = solve_resolvent(p, basis);
      ModeIndex k{};
      k[0] = 1;
      const long idx = basis.find(RealTrigBasis::ModeType::Cos, k);
      const double expected = 1.0 / (1.0 + 0.5 * (1.0 + 1.0 / n));
      CHECK(std::abs(u.coeffs[idx] - expected) < 1e-10);
    }
  }

  SUBCASE("sine1d gradient energy approaches the explicit corrector energy") {
    // u'(x) -> abar/a(x) - 1 with abar = sqrt(3); the limiting energy is
    // (1/2) avg(a (abar/a - 1)^2), computed here by quadrature.
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 32);
    const CorrectorSolution u = solve_resolvent(drift_problem(*m, 1e-4), basis);

    const double abar = std::sqrt(3.0);
    double oracle = 0.0;
    const int nq = 4096;
    for (int q = 0; q < nq; ++q) {
      const double x = kTwoPi * q / nq;
      const double a = 2.0 + std::sin(x);
      oracle += 0.5 * a * (abar / a - 1.0) * (abar / a - 1.0);
    }
    oracle /= nq;
    CHECK(u.h1_energy == doctest::Approx(oracle).epsilon(1e-3));
  }

  SUBCASE("energy identity holds to 1e-8 relative") {
    auto m = make_degenerate2d_medium(2.0, 0.6, Potential::gaussian(2));
    RealTrigBasis basis(2, 6);
    ResolventProblem p = drift_problem(*m, 0.05);
    p.y = vec2(0.2, 0.6);
    const AssembledSystem sys = assemble(p, basis);
    const CorrectorSolution u = solve_resolvent(p, basis);
    const double pairing = sys.rhs.dot(u.coeffs);
    const double lhs = u.lambda_l2 + u.bform_energy;
    CHECK(std::abs(lhs - pairing) <= 1e-8 * std::max(std::abs(pairing), 1.0));
  }

  SUBCASE("weak residual vanishes against every basis function") {
    auto m = make_separable_medium(2, 2.0, 1.0, 0.5, Potential::gaussian(2));
    RealTrigBasis basis(2, 4);
    ResolventProblem p = drift_problem(*m, 0.1);
    p.y = vec2(-0.4, 0.9);
    const CorrectorSolution u = solve_resolvent(p, basis);
    CHECK(u.weak_residual <= 1e-8 * u.residual_scale);
  }
}

TEST_CASE("operator structure invariants") {
  SUBCASE("coercivity against the reference energy") {
    auto m = make_degenerate2d_medium(2.0, 0.6, Potential::gaussian(2));
    RealTrigBasis basis(2, 4);
    const MediumModes mm = sample_medium_modes(*m, basis, vec2(0.1, 0.3));
    ResolventProblem p = drift_problem(*m, 1.0);
    p.y = vec2(0.1, 0.3);
    const AssembledSystem sys = assemble(p, basis, mm);
    const MatX g_tilde = assemble_gradient_form(mm.a_tilde, basis);
    const VecX mass = mass_diagonal(basis);
    const double inv_m = 1.0 / m->control_constant();
    for (int trial = 0; trial < 20; ++trial) {
      VecX phi(static_cast<long>(basis.size()));
      for (long i = 0; i < phi.size(); ++i)
        phi[i] = 2.0 * unit_rand(static_cast<uint64_t>(trial * 1000 + i)) - 1.0;
      const double bform = phi.dot(sys.matrix * phi) - 1.0 * phi.dot(mass.asDiagonal() * phi);
      const double href = phi.dot(g_tilde * phi);
      CHECK(bform >= inv_m * href - 1e-10 * std::max(1.0, std::abs(bform)));
    }
  }

  SUBCASE("symmetric kind assembles a symmetric matrix") {
    Mat h(2, 2);
    h << 0.0, 0.4, -0.4, 0.0;
    auto m = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), h, 2.0,
                                         Potential::gaussian(2));
    RealTrigBasis basis(2, 3);
    ResolventProblem p = drift_problem(*m, 0.7);
    p.kind = OperatorKind::Symmetric;
    const MatX a = assemble(p, basis).matrix;
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("gauge shift leaves gradients untouched") {
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 16);
    const CorrectorSolution u = solve_resolvent(drift_problem(*m, 1e-2), basis);
    CorrectorSolution shifted = u;
    shifted.coeffs[0] += 5.0;  // constant mode
    for (int trial = 0; trial < 10; ++trial) {
      const Vec x = vec1(kTwoPi * unit_rand(7000 + trial));
      CHECK((shifted.gradient(x) - u.gradient(x)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((shifted.sigma_tilde_gradient(*m, x) - u.sigma_tilde_gradient(*m, x))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("lambda extrapolation") {
  const std::vector<double> ladder{1e-1, 1e-2, 1e-3};

  SUBCASE("constant coefficients extrapolate to zero") {
    auto m = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), Mat(Mat::Zero(2, 2)), 1.0,
                                         Potential::gaussian(2));
    RealTrigBasis basis(2, 3);
    const ExtrapolationResult r = extrapolate_corrector(drift_problem(*m, 1.0), ladder, basis);
    CHECK(r.limit_coeffs.cwiseAbs().maxCoeff() == 0.0);
    for (double v : r.lambda_decay) CHECK(v == 0.0);
  }

  SUBCASE("degenerate preset energies decrease strictly") {
    auto m = make_degenerate2d_medium(2.0, 0.6, Potential::gaussian(2));
    RealTrigBasis basis(2, 5);
    ResolventProblem p = drift_problem(*m, 1.0);
    p.y = vec2(0.3, 0.3);
    const ExtrapolationResult r = extrapolate_corrector(p, ladder, basis);
    CHECK(r.lambda_decay[0] > r.lambda_decay[1]);
    CHECK(r.lambda_decay[1] > r.lambda_decay[2]);
  }

  SUBCASE("ladder preconditions are enforced") {
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 8);
    CHECK_THROWS_AS(extrapolate_corrector(drift_problem(*m, 1.0), {1e-1, 1e-2}, basis),
                    InputDomainError);
    CHECK_THROWS_AS(extrapolate_corrector(drift_problem(*m, 1.0), {1e-1, 5e-2, 2.4e-2}, basis),
                    InputDomainError);
  }
}

TEST_CASE("macro-variable derivatives of the corrector") {
  SUBCASE("y-independent medium has zero y-derivative") {
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 16);
    const YDerivatives d = corrector_y_derivatives(drift_problem(*m, 1e-2), basis, 1e-3);
    CHECK(d.first[0].coeffs.cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("separable medium: difference quotients stay Lipschitz-stable") {
    auto m = make_separable_medium(1, 2.0, 1.0, 0.5, Potential::gaussian(1));
    RealTrigBasis basis(1, 12);
    ResolventProblem p = drift_problem(*m, 1e-2);
    p.y = vec1(0.4);
    auto shared = std::make_shared<RealTrigBasis>(basis);
    const MediumModes mm = sample_medium_modes(*m, basis, p.y);
    const MatX g_tilde = assemble_gradient_form(mm.a_tilde, basis);
    const CorrectorSolution u0 = solve_resolvent(p, shared, mm);

    std::vector<double> ratios;
    for (double h : {1e-2, 1e-3}) {
      ResolventProblem ps = p;
      ps.y[0] += h;
      const MediumModes mms = sample_medium_modes(*m, basis, ps.y);
      const CorrectorSolution us = solve_resolvent(ps, shared, mms);
      const VecX diff = us.coeffs - u0.coeffs;
      ratios.push_back(std::sqrt(std::max(0.0, diff.dot(g_tilde * diff))) / h);
    }
    CHECK(ratios[0] > 0.0);
    CHECK(ratios[1] > 0.0);
    CHECK(std::max(ratios[0], ratios[1]) <= 2.0 * std::min(ratios[0], ratios[1]));
  }

  SUBCASE("y-dependent degenerate preset: derivative energies decay with lambda") {
    auto m = make_degenerate2d_medium(2.0, 0.6, Potential::gaussian(2));
    RealTrigBasis basis(2, 5);
    std::vector<double> decay;
    for (double lam : {1e-1, 1e-2, 1e-3}) {
      ResolventProblem p = drift_problem(*m, lam);
      p.y = vec2(0.2, -0.3);
      const YDerivatives d = corrector_y_derivatives(p, basis, 1e-3);
      CHECK(d.first[0].coeffs.cwiseAbs().maxCoeff() > 1e-8);
      decay.push_back(lam * d.first[0].l2_sq);
    }
    CHECK(decay[1] < decay[0]);
    CHECK(decay[2] < decay[1]);
  }

  SUBCASE("step outside the allowed range is rejected") {
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 8);
    CHECK_THROWS_AS(corrector_y_derivatives(drift_problem(*m, 1e-2), basis, 0.5),
                    InputDomainError);
  }
}

TEST_CASE("vanishing-viscosity consistency") {
  const std::vector<int> ladder{10, 100, 10000};

  SUBCASE("constant coefficients: all distances vanish") {
    auto m = make_constant_medium_from_a(2, Mat(Mat::Identity(2, 2)), Mat(Mat::Zero(2, 2)), 1.0,
                                         Potential::gaussian(2));
    RealTrigBasis basis(2, 3);
    const ViscosityDecay v = viscosity_consistency(drift_problem(*m, 1e-2), basis, ladder);
    for (double d : v.h1_distance) CHECK(d == 0.0);
    for (double d : v.grad_l2_over_n) CHECK(d == 0.0);
  }

  SUBCASE("sine1d distances decay along n") {
    auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
    RealTrigBasis basis(1, 16);
    const ViscosityDecay v = viscosity_consistency(drift_problem(*m, 1e-2), basis, ladder);
    CHECK(v.h1_distance[0] > v.h1_distance[1]);
    CHECK(v.h1_distance[1] > v.h1_distance[2]);
    CHECK(v.grad_l2_over_n[0] > v.grad_l2_over_n[1]);
    CHECK(v.grad_l2_over_n[1] > v.grad_l2_over_n[2]);
  }

  SUBCASE("single-mode rescale difference tends to zero") {
    auto m = make_constant_medium_from_a(1, Mat(Mat::Identity(1, 1)), Mat(Mat::Zero(1, 1)), 1.0,
                                         Potential::gaussian(1));
    RealTrigBasis basis(1, 6);
    ResolventProblem p = mode_problem(*m, 1.0, 1);
    const ViscosityDecay v = viscosity_consistency(p, basis, ladder);
    for (size_t i = 0; i < ladder.size(); ++i) {
      const double n = ladder[i];
      const double expect = std::abs(1.0 / (1.0 + 0.5 * (1.0 + 1.0 / n)) - 1.0 / 1.5);
      // ||u^(n) - u||_1 for a pure cos-mode difference c: sqrt(c^2 / 4).
      CHECK(v.h1_distance[i] == doctest::Approx(expect * 0.5).epsilon(1e-8));
    }
    CHECK(v.h1_distance.back() < v.h1_distance.front());
  }
}

TEST_CASE("corrector JSON export carries the contract fields") {
  auto m = make_sine1d_medium(2.0, 1.0, Potential::gaussian(1));
  RealTrigBasis basis(1, 8);
  const CorrectorSolution u = solve_resolvent(drift_problem(*m, 1e-2), basis);
  const std::string text = corrector_to_json(u);
  CHECK(text.find("\"lambda\"") != std::string::npos);
  CHECK(text.find("\"coefficients\"") != std::string::npos);
  CHECK(text.find("\"energy\"") != std::string::npos);
  CHECK(text.find("\"residual\"") != std::string::npos);
}
