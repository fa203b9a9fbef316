#include "homlab/corrector.hpp"

#include <Eigen/LU>
#include <cmath>
#include <nlohmann/json.hpp>

namespace homlab {

const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::Full: return "full";
    case OperatorKind::Symmetric: return "symmetric";
    case OperatorKind::FullViscous: return "full_viscous";
    case OperatorKind::SymmetricViscous: return "symmetric_viscous";
  }
  return "?";
}

std::string ResolventProblem::rhs_label() const {
  if (rhs_kind == RhsKind::DriftComponent) return "b_" + std::to_string(drift_component + 1);
  std::string s = rhs_mode_type == RealTrigBasis::ModeType::Cos ? "cos(" : "sin(";
  for (int i = 0; i < medium->dim(); ++i)
    s += (i ? "," : "") + std::to_string(rhs_mode_k[i]);
  return s + ")";
}

void ResolventProblem::check() const {
  if (!medium) throw InputDomainError("resolvent: medium missing");
  if (!(lambda > 0.0)) throw InputDomainError("resolvent: lambda must be positive");
  if (is_viscous(kind) && viscosity_n < 1)
    throw InputDomainError("resolvent: viscous kinds need n >= 1");
  if (rhs_kind == RhsKind::DriftComponent &&
      (drift_component < 0 || drift_component >= medium->dim()))
    throw InputDomainError("resolvent: drift component out of range");
  require_finite(y, "resolvent y");
}

MediumModes sample_medium_modes(const Medium& medium, const RealTrigBasis& basis, const Vec& y) {
  const int d = medium.dim();
  const int kmed = medium.max_x_frequency();
  if (basis.cutoff() < kmed + 2)
    throw ResolutionError("basis cutoff must exceed the medium bandwidth by 2");

  MediumModes mm;
  double tail_aph = 0.0, tail_at = 0.0;
  mm.a_plus_h = MatrixFieldModes::from_field(
      [&](const Vec& x) {
        const CoeffEval ce = medium.eval(x, y);
        return Mat(ce.a + ce.h);
      },
      d, d, kmed, basis.quadrature_per_axis(), &tail_aph);
  mm.a = MatrixFieldModes::from_field(
      [&](const Vec& x) { return medium.eval(x, y).a; }, d, d, kmed,
      basis.quadrature_per_axis(), nullptr);
  mm.h = MatrixFieldModes::from_field(
      [&](const Vec& x) { return medium.eval(x, y).h; }, d, d, kmed,
      basis.quadrature_per_axis(), nullptr);
  mm.a_tilde = MatrixFieldModes::from_field(
      [&](const Vec& x) { return medium.eval(x, y).a_tilde; }, d, d, kmed,
      basis.quadrature_per_axis(), &tail_at);
  mm.alias_tail = std::max(tail_aph, tail_at);
  if (mm.alias_tail > 1e-6)
    throw ResolutionError("quadrature under-resolved: mode-energy tail " +
                          std::to_string(mm.alias_tail));
  return mm;
}

namespace {

MatrixFieldModes operator_field(const ResolventProblem& p, const MediumModes& mm) {
  MatrixFieldModes g = is_symmetric(p.kind) ? mm.a : mm.a_plus_h;
  if (is_viscous(p.kind)) {
    ModeIndex zero{};
    g.coeff(zero) += MatXc::Identity(g.rows(), g.rows()) / static_cast<double>(p.viscosity_n);
  }
  return g;
}

VecX problem_rhs(const ResolventProblem& p, const RealTrigBasis& basis, const MediumModes& mm) {
  if (p.rhs_kind == RhsKind::DriftComponent) {
    // The drift pairing uses a + H regardless of the operator kind for the
    // full problems; the symmetric problems are driven by the same b_i.
    return assemble_drift_rhs(mm.a_plus_h, basis, p.drift_component);
  }
  VecX r = VecX::Zero(static_cast<long>(basis.size()));
  const long idx = basis.find(p.rhs_mode_type, p.rhs_mode_k);
  if (idx < 0) throw InputDomainError("resolvent: rhs mode outside the basis");
  r[idx] = p.rhs_amplitude * basis.norm_sq(static_cast<size_t>(idx));
  return r;
}

}  // namespace

AssembledSystem assemble(const ResolventProblem& p, const RealTrigBasis& basis,
                         const MediumModes& mm) {
  p.check();
  AssembledSystem sys;
  sys.matrix = assemble_gradient_form(operator_field(p, mm), basis);
  const VecX mass = mass_diagonal(basis);
  for (long i = 0; i < sys.matrix.rows(); ++i) sys.matrix(i, i) += p.lambda * mass[i];
  sys.rhs = problem_rhs(p, basis, mm);
  return sys;
}

AssembledSystem assemble(const ResolventProblem& p, const RealTrigBasis& basis) {
  const MediumModes mm = sample_medium_modes(*p.medium, basis, p.y);
  return assemble(p, basis, mm);
}

double CorrectorSolution::value(const Vec& x) const {
  double v = 0.0;
  for (size_t p = 0; p < basis->size(); ++p) v += coeffs[static_cast<long>(p)] * basis->value(p, x);
  return v;
}

Vec CorrectorSolution::gradient(const Vec& x) const {
  Vec g = Vec::Zero(basis->dim());
  for (size_t p = 0; p < basis->size(); ++p) {
    const double c = coeffs[static_cast<long>(p)];
    if (c != 0.0) g += c * basis->grad(p, x);
  }
  return g;
}

Vec CorrectorSolution::sigma_tilde_gradient(const Medium& medium, const Vec& x) const {
  Vec y = Vec::Zero(basis->dim());
  if (y_point.size() == basis->dim())
    for (int i = 0; i < basis->dim(); ++i) y[i] = y_point[i];
  const Mat st = medium.eval(x, y).sigma_tilde;
  return st.transpose() * gradient(x);
}

CorrectorSolution make_solution(std::shared_ptr<const RealTrigBasis> basis,
                                const MediumModes& modes, const ResolventProblem& problem,
                                const VecX& coeffs) {
  CorrectorSolution s;
  s.basis = std::move(basis);
  s.coeffs = coeffs;
  s.lambda = problem.lambda;
  s.y_point = VecX(problem.y);
  s.kind = problem.kind;
  s.rhs_label = problem.rhs_label();

  const RealTrigBasis& b = *s.basis;
  double l2 = 0.0, grad = 0.0;
  for (size_t p = 0; p < b.size(); ++p) {
    const double c = coeffs[static_cast<long>(p)];
    l2 += c * c * b.norm_sq(p);
    double k2 = 0.0;
    for (int i = 0; i < b.dim(); ++i) {
      const double ki = b.mode(p).k[i];
      k2 += ki * ki;
    }
    grad += c * c * k2 * 0.5;
  }
  s.l2_sq = l2;
  s.lambda_l2 = problem.lambda * l2;
  s.grad_l2_sq = grad;

  const MatX g_tilde = assemble_gradient_form(modes.a_tilde, b);
  s.h1_energy = coeffs.dot(g_tilde * coeffs);
  const MatX g_op = assemble_gradient_form(operator_field(problem, modes), b);
  s.bform_energy = coeffs.dot(g_op * coeffs);
  return s;
}

CorrectorSolution solve_resolvent(const ResolventProblem& problem,
                                  std::shared_ptr<const RealTrigBasis> basis,
                                  const MediumModes& modes) {
  const AssembledSystem sys = assemble(problem, *basis, modes);
  Eigen::PartialPivLU<MatX> lu(sys.matrix);
  VecX u = lu.solve(sys.rhs);

  const double scale =
      std::max({sys.rhs.cwiseAbs().maxCoeff(),
                sys.matrix.cwiseAbs().maxCoeff() * std::max(u.cwiseAbs().maxCoeff(), 1e-300),
                1e-300});
  VecX resid = sys.rhs - sys.matrix * u;
  if (resid.cwiseAbs().maxCoeff() > 1e-13 * scale) {
    u += lu.solve(resid);  // one refinement step
    resid = sys.rhs - sys.matrix * u;
  }
  const double rel = resid.cwiseAbs().maxCoeff() / scale;
  if (!u.allFinite() || rel > 1e-12)
    throw SingularSystemError("resolvent solve failed at lambda=" + std::to_string(problem.lambda) +
                              " (rcond=" + std::to_string(lu.rcond()) +
                              ", relative residual=" + std::to_string(rel) + ")");

  CorrectorSolution s = make_solution(std::move(basis), modes, problem, u);
  s.weak_residual = resid.cwiseAbs().maxCoeff();
  s.residual_scale = scale;
  return s;
}

CorrectorSolution solve_resolvent(const ResolventProblem& problem, const RealTrigBasis& basis) {
  auto shared = std::make_shared<RealTrigBasis>(basis);
  const MediumModes mm = sample_medium_modes(*problem.medium, *shared, problem.y);
  return solve_resolvent(problem, shared, mm);
}

VecX richardson_to_zero(const std::vector<double>& lambdas, const std::vector<VecX>& values) {
  std::vector<VecX> table = values;
  const size_t n = table.size();
  for (size_t m = 1; m < n; ++m)
    for (size_t i = 0; i + m < n; ++i)
      table[i] = (lambdas[i + m] * table[i] - lambdas[i] * table[i + m]) /
                 (lambdas[i + m] - lambdas[i]);
  return table[0];
}

ExtrapolationResult extrapolate_corrector(const ResolventProblem& base,
                                          const std::vector<double>& ladder,
                                          const RealTrigBasis& basis) {
  if (ladder.size() < 3) throw InputDomainError("extrapolation: ladder needs >= 3 rungs");
  for (size_t i = 0; i + 1 < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0) || !(ladder[i + 1] > 0.0))
      throw InputDomainError("extrapolation: lambdas must be positive");
    if (ladder[i + 1] > 0.25 * ladder[i])
      throw InputDomainError("extrapolation: ladder must decrease geometrically (ratio <= 1/4)");
  }

  auto shared = std::make_shared<RealTrigBasis>(basis);
  const MediumModes mm = sample_medium_modes(*base.medium, *shared, base.y);

  ExtrapolationResult out;
  std::vector<VecX> coeffs;
  for (double lam : ladder) {
    ResolventProblem p = base;
    p.lambda = lam;
    CorrectorSolution s = solve_resolvent(p, shared, mm);
    out.lambda_decay.push_back(s.lambda_l2);
    coeffs.push_back(s.coeffs);
    out.solutions.push_back(std::move(s));
  }

  const double scale = std::max(out.lambda_decay.front(), 1e-300);
  for (size_t i = 0; i + 1 < out.lambda_decay.size(); ++i) {
    if (out.lambda_decay[i + 1] > out.lambda_decay[i] * (1.0 + 1e-9) + 1e-14 * scale)
      throw ExtrapolationError("lambda |u|_2^2 not decreasing along the ladder");
  }

  out.limit_coeffs = richardson_to_zero(ladder, coeffs);
  return out;
}

YDerivatives corrector_y_derivatives(const ResolventProblem& problem, const RealTrigBasis& basis,
                                     double h_step) {
  if (!(h_step >= 1e-6 && h_step <= 1e-2))
    throw InputDomainError("y-derivatives: h_step must lie in [1e-6, 1e-2]");
  problem.check();
  auto shared = std::make_shared<RealTrigBasis>(basis);
  const int d = problem.medium->dim();

  const MediumModes mm0 = sample_medium_modes(*problem.medium, *shared, problem.y);
  const CorrectorSolution center = solve_resolvent(problem, shared, mm0);

  YDerivatives out;
  out.h_step = h_step;
  for (int j = 0; j < d; ++j) {
    ResolventProblem plus = problem, minus = problem;
    plus.y[j] += h_step;
    minus.y[j] -= h_step;
    const MediumModes mmp = sample_medium_modes(*problem.medium, *shared, plus.y);
    const MediumModes mmm = sample_medium_modes(*problem.medium, *shared, minus.y);
    const CorrectorSolution up = solve_resolvent(plus, shared, mmp);
    const CorrectorSolution um = solve_resolvent(minus, shared, mmm);

    const VecX d1 = (up.coeffs - um.coeffs) / (2.0 * h_step);
    const VecX d2 = (up.coeffs - 2.0 * center.coeffs + um.coeffs) / (h_step * h_step);
    CorrectorSolution s1 = make_solution(shared, mm0, problem, d1);
    CorrectorSolution s2 = make_solution(shared, mm0, problem, d2);
    s1.rhs_label = "dy" + std::to_string(j + 1) + " " + problem.rhs_label();
    s2.rhs_label = "dy2" + std::to_string(j + 1) + " " + problem.rhs_label();
    out.first.push_back(std::move(s1));
    out.second.push_back(std::move(s2));
  }
  return out;
}

ViscosityDecay viscosity_consistency(const ResolventProblem& problem, const RealTrigBasis& basis,
                                     const std::vector<int>& n_ladder) {
  if (n_ladder.size() < 3) throw InputDomainError("viscosity: ladder needs >= 3 entries");
  for (size_t i = 0; i + 1 < n_ladder.size(); ++i)
    if (n_ladder[i + 1] <= n_ladder[i])
      throw InputDomainError("viscosity: ladder must increase");

  auto shared = std::make_shared<RealTrigBasis>(basis);
  const MediumModes mm = sample_medium_modes(*problem.medium, *shared, problem.y);

  ResolventProblem base = problem;
  base.kind = is_symmetric(problem.kind) ? OperatorKind::Symmetric : OperatorKind::Full;
  base.viscosity_n = 0;
  const CorrectorSolution u = solve_resolvent(base, shared, mm);

  const MatX g_tilde = assemble_gradient_form(mm.a_tilde, *shared);
  ViscosityDecay out;
  out.n_ladder = n_ladder;
  for (int n : n_ladder) {
    ResolventProblem p = problem;
    p.kind = is_symmetric(problem.kind) ? OperatorKind::SymmetricViscous
                                        : OperatorKind::FullViscous;
    p.viscosity_n = n;
    const CorrectorSolution un = solve_resolvent(p, shared, mm);
    const VecX diff = un.coeffs - u.coeffs;
    out.h1_distance.push_back(std::sqrt(std::max(0.0, diff.dot(g_tilde * diff))));
    out.grad_l2_over_n.push_back(un.grad_l2_sq / static_cast<double>(n));
  }
  return out;
}

std::string corrector_to_json(const CorrectorSolution& s) {
  nlohmann::json j;
  j["y"] = std::vector<double>(s.y_point.data(), s.y_point.data() + s.y_point.size());
  j["lambda"] = s.lambda;
  j["operator_kind"] = to_string(s.kind);
  j["rhs_kind"] = s.rhs_label;
  j["coefficients"] = std::vector<double>(s.coeffs.data(), s.coeffs.data() + s.coeffs.size());
  j["energy"] = s.h1_energy;
  j["residual"] = s.weak_residual;
  return j.dump(2);
}

}  // namespace homlab
