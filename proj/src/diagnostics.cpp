#include "homlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <nlohmann/json.hpp>

#include "homlab/parallel.hpp"
#include "homlab/rng.hpp"

namespace homlab {

namespace {

using nlohmann::json;

uint64_t fnv1a_doubles(const std::vector<Vec>& v) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& x : v)
    for (long i = 0; i < x.size(); ++i) {
      double d = x[i];
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &d, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
      }
    }
  return h;
}

double pair_norm(const Vec& a, const Vec& b) { return (a - b).norm(); }

struct BlockSums {
  int m = 1;
  std::vector<double> sum;    // m x m
  std::vector<double> count;  // m x m
  double total = 0.0;
  double total_count = 0.0;

  explicit BlockSums(int blocks) : m(blocks), sum(blocks * blocks, 0.0),
                                   count(blocks * blocks, 0.0) {}
  void add(int ba, int bb, double w) {
    sum[static_cast<size_t>(ba * m + bb)] += w;
    count[static_cast<size_t>(ba * m + bb)] += 1.0;
    total += w;
    total_count += 1.0;
  }
  /// Mean with block k removed from both margins.
  bool delete_block(int k, double* mean) const {
    double s = total, c = total_count;
    for (int b = 0; b < m; ++b) {
      s -= sum[static_cast<size_t>(k * m + b)] + sum[static_cast<size_t>(b * m + k)];
      c -= count[static_cast<size_t>(k * m + b)] + count[static_cast<size_t>(b * m + k)];
    }
    s += sum[static_cast<size_t>(k * m + k)];
    c += count[static_cast<size_t>(k * m + k)];
    if (c <= 0.0) return false;
    *mean = s / c;
    return true;
  }
  double mean() const { return total_count > 0.0 ? total / total_count : 0.0; }
};

}  // namespace

DistanceResult energy_distance(const std::vector<Vec>& a_in, const std::vector<Vec>& b_in,
                               uint64_t seed, long cap_pairs) {
  if (a_in.empty() || b_in.empty())
    throw InputDomainError("energy_distance: empty sample");
  if (cap_pairs < 1) throw InputDomainError("energy_distance: cap must be positive");

  // Canonical orientation: the statistic is symmetric by construction, and
  // identical inputs share one code path so the result is exactly zero.
  const uint64_t ha = fnv1a_doubles(a_in), hb = fnv1a_doubles(b_in);
  const bool swap = (a_in.size() > b_in.size()) ||
                    (a_in.size() == b_in.size() && ha > hb);
  const std::vector<Vec>& a = swap ? b_in : a_in;
  const std::vector<Vec>& b = swap ? a_in : b_in;

  const long pa = static_cast<long>(a.size());
  const long pb = static_cast<long>(b.size());
  const int m = static_cast<int>(std::min<long>(20, std::min(pa, pb)));
  auto block_a = [&](long i) { return static_cast<int>(i * m / pa); };
  auto block_b = [&](long j) { return static_cast<int>(j * m / pb); };

  BlockSums s1(m), s2(m), s3(m);
  long pairs_used = 0;

  const double worst = std::max({static_cast<double>(pa) * pb, static_cast<double>(pa) * pa,
                                 static_cast<double>(pb) * pb});
  if (worst <= static_cast<double>(cap_pairs)) {
    for (long i = 0; i < pa; ++i)
      for (long j = 0; j < pb; ++j) s1.add(block_a(i), block_b(j), pair_norm(a[i], b[j]));
    for (long i = 0; i < pa; ++i)
      for (long j = 0; j < pa; ++j) s2.add(block_a(i), block_a(j), pair_norm(a[i], a[j]));
    for (long i = 0; i < pb; ++i)
      for (long j = 0; j < pb; ++j) s3.add(block_b(i), block_b(j), pair_norm(b[i], b[j]));
    pairs_used = static_cast<long>(pa) * pb;
  } else {
    // One shared seeded index stream drives all three terms.
    CounterRng rng(seed, rng_stream::kPairSubsample);
    for (long t = 0; t < cap_pairs; ++t) {
      const long i = static_cast<long>(rng.index_below(static_cast<uint64_t>(t), 0,
                                                       static_cast<uint64_t>(pa)));
      const long j = static_cast<long>(rng.index_below(static_cast<uint64_t>(t), 1,
                                                       static_cast<uint64_t>(pb)));
      s1.add(block_a(i), block_b(j), pair_norm(a[i], b[j]));
      const long ia = i % pa, ja = j % pa;
      s2.add(block_a(ia), block_a(ja), pair_norm(a[ia], a[ja]));
      const long ib = i % pb, jb = j % pb;
      s3.add(block_b(ib), block_b(jb), pair_norm(b[ib], b[jb]));
    }
    pairs_used = cap_pairs;
  }

  DistanceResult out;
  // The population quantity is nonnegative; the estimator can dip below
  // zero by sampling noise, so clamp (exact zeros stay exact).
  out.value = std::max(0.0, 2.0 * s1.mean() - s2.mean() - s3.mean());
  out.pairs_used = pairs_used;

  if (m >= 2) {
    std::vector<double> reps;
    for (int k = 0; k < m; ++k) {
      double t1, t2, t3;
      if (s1.delete_block(k, &t1) && s2.delete_block(k, &t2) && s3.delete_block(k, &t3))
        reps.push_back(2.0 * t1 - t2 - t3);
    }
    if (reps.size() >= 2) {
      double mean = 0.0;
      for (double r : reps) mean += r;
      mean /= static_cast<double>(reps.size());
      double ss = 0.0;
      for (double r : reps) ss += (r - mean) * (r - mean);
      const double mm = static_cast<double>(reps.size());
      out.se = std::sqrt((mm - 1.0) / mm * ss);
    }
  }
  return out;
}

namespace {

std::vector<Vec> marginal(const TrajectoryEnsemble& e, size_t time_index) {
  if (time_index >= e.times.size()) throw InputDomainError("weak_distance: bad time index");
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(e.paths));
  for (long p = 0; p < e.paths; ++p) {
    if (e.flagged[static_cast<size_t>(p)]) continue;
    Vec x(e.dim);
    const double* s = e.state(p, time_index);
    for (int i = 0; i < e.dim; ++i) x[i] = s[i];
    out.push_back(x);
  }
  return out;
}

}  // namespace

DistanceResult weak_distance(const TrajectoryEnsemble& ens_a, size_t time_index_a,
                             const TrajectoryEnsemble& ens_b, size_t time_index_b,
                             uint64_t seed, long cap_pairs) {
  if (ens_a.dim != ens_b.dim) throw InputDomainError("weak_distance: dimension mismatch");
  if (std::abs(ens_a.times[time_index_a] - ens_b.times[time_index_b]) > 1e-12)
    throw InputDomainError("weak_distance: ensembles sampled at different times");
  if (ens_a.paths < 100 || ens_b.paths < 100)
    throw InputDomainError("weak_distance: need >= 100 paths per ensemble");
  return energy_distance(marginal(ens_a, time_index_a), marginal(ens_b, time_index_b), seed,
                         cap_pairs);
}

bool trend_separated(const TrendEntry& first, const TrendEntry& last) {
  const double gap = first.value - last.value;
  return gap >= 2.0 * std::sqrt(first.se * first.se + last.se * last.se);
}

std::string ConvergenceReport::to_json() const {
  json j;
  j["name"] = name;
  json entries_json = json::array();
  for (const auto& e : entries)
    entries_json.push_back({{"parameter", e.parameter}, {"value", e.value}, {"se", e.se}});
  j["entries"] = entries_json;
  j["null_value"] = null_value;
  j["null_se"] = null_se;
  j["trend_pass"] = trend_pass;
  j["control_pass"] = control_pass;
  j["note"] = note;
  return j.dump(2);
}

ConvergenceReport convergence_ladder(const Medium& medium, const EffectiveTensors& tensors,
                                     const std::vector<double>& eps_ladder,
                                     const SimConfig& base, int threads, uint64_t diag_seed,
                                     long cap_pairs) {
  if (eps_ladder.size() < 3)
    throw InputDomainError("convergence ladder: >= 3 epsilon values required");
  for (size_t i = 0; i + 1 < eps_ladder.size(); ++i)
    if (eps_ladder[i + 1] >= eps_ladder[i])
      throw InputDomainError("convergence ladder: epsilon list must decrease");

  SimConfig limit_cfg = base;
  limit_cfg.limit_mode = true;
  const TrajectoryEnsemble limit =
      simulate_limit(limit_cfg, tensors, threads, &medium.potential());
  const size_t t_limit = limit.times.size() - 1;

  ConvergenceReport report;
  report.name = "weak_convergence";
  for (double eps : eps_ladder) {
    SimConfig cfg = base;
    cfg.limit_mode = false;
    cfg.epsilon = eps;
    const TrajectoryEnsemble ens = simulate_xeps(cfg, medium, threads);
    const DistanceResult d =
        weak_distance(ens, ens.times.size() - 1, limit, t_limit, diag_seed, cap_pairs);
    report.entries.push_back({eps, d.value, d.se});
  }

  // Split-half null from the limit ensemble.
  {
    std::vector<Vec> all = marginal(limit, t_limit);
    std::vector<Vec> half1(all.begin(), all.begin() + static_cast<long>(all.size() / 2));
    std::vector<Vec> half2(all.begin() + static_cast<long>(all.size() / 2), all.end());
    const DistanceResult d = energy_distance(half1, half2, diag_seed + 1, cap_pairs);
    report.null_value = d.value;
    report.null_se = d.se;
  }

  report.trend_pass = trend_separated(report.entries.front(), report.entries.back());
  report.control_pass = true;
  for (const auto& e : report.entries) {
    const double comb = std::sqrt(e.se * e.se + report.null_se * report.null_se);
    if (std::abs(e.value - report.null_value) > 3.0 * comb) report.control_pass = false;
  }
  return report;
}

double kernel_confinement(const TrajectoryEnsemble& ens, const MatX& kernel_basis,
                          const Vec& x0) {
  if (kernel_basis.cols() == 0) return 0.0;
  double worst = 0.0;
  for (long p = 0; p < ens.paths; ++p) {
    if (ens.flagged[static_cast<size_t>(p)]) continue;
    for (size_t t = 0; t < ens.times.size(); ++t) {
      const double* s = ens.state(p, t);
      for (long k = 0; k < kernel_basis.cols(); ++k) {
        double dot = 0.0;
        for (int i = 0; i < ens.dim; ++i) dot += (s[i] - x0[i]) * kernel_basis(i, k);
        worst = std::max(worst, std::abs(dot));
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Observables

double Observable::x_value(const Vec& x) const {
  switch (x_kind) {
    case XKind::One: return 1.0;
    case XKind::SinX1: return std::sin(x[0]);
    case XKind::TwoPlusSinX1: return 2.0 + std::sin(x[0]);
  }
  return 1.0;
}

double Observable::x_mean() const {
  switch (x_kind) {
    case XKind::One: return 1.0;
    case XKind::SinX1: return 0.0;
    case XKind::TwoPlusSinX1: return 2.0;
  }
  return 1.0;
}

double Observable::y_value(const Vec& y) const {
  switch (y_kind) {
    case YKind::One: return 1.0;
    case YKind::Y1: return y[0];
    case YKind::GaussNorm: return std::exp(-y.squaredNorm());
  }
  return 1.0;
}

Observable Observable::parse(const std::string& x_name, const std::string& y_name) {
  Observable o;
  if (x_name == "one")
    o.x_kind = XKind::One;
  else if (x_name == "sin_x1")
    o.x_kind = XKind::SinX1;
  else if (x_name == "two_plus_sin_x1")
    o.x_kind = XKind::TwoPlusSinX1;
  else
    throw ConfigError("unknown observable x part: " + x_name);
  if (y_name == "one")
    o.y_kind = YKind::One;
  else if (y_name == "y1")
    o.y_kind = YKind::Y1;
  else if (y_name == "gauss")
    o.y_kind = YKind::GaussNorm;
  else
    throw ConfigError("unknown observable y part: " + y_name);
  return o;
}

ConvergenceReport ergodic_average_check(const Medium& medium,
                                        const std::vector<double>& eps_ladder,
                                        const Observable& observable, const SimConfig& base,
                                        int threads) {
  if (eps_ladder.size() < 2)
    throw InputDomainError("ergodic check: >= 2 epsilon values required");
  for (size_t i = 0; i + 1 < eps_ladder.size(); ++i)
    if (eps_ladder[i + 1] >= eps_ladder[i])
      throw InputDomainError("ergodic check: epsilon list must decrease");

  ConvergenceReport report;
  report.name = "ergodic_averaging";
  for (double eps : eps_ladder) {
    SimConfig cfg = base;
    cfg.limit_mode = false;
    cfg.viscosity_n = std::numeric_limits<double>::infinity();
    cfg.epsilon = eps;
    cfg.check();
    const std::vector<long> saves = cfg.save_steps();
    const long steps = cfg.step_count();
    const double dt = cfg.effective_dt();

    std::vector<double> sup_sq(static_cast<size_t>(cfg.paths), 0.0);
    std::vector<uint8_t> bad(static_cast<size_t>(cfg.paths), 0);
    parallel_for(cfg.paths, threads, [&](long p) {
      MicroStepper stepper(cfg, medium, p);
      double i_fast = 0.0, i_avg = 0.0, sup = 0.0;
      size_t save_slot = 0;
      for (long k = 0; k <= steps; ++k) {
        if (save_slot < saves.size() && saves[save_slot] == k) {
          sup = std::max(sup, std::abs(i_fast - i_avg));
          ++save_slot;
        }
        if (k >= steps) break;
        const Vec& x = stepper.state();
        const Vec micro = Medium::reduce_periodic(x / eps);
        i_fast += observable.value(micro, x) * dt;
        i_avg += observable.averaged(x) * dt;
        if (!stepper.step(k)) {
          bad[static_cast<size_t>(p)] = 1;
          break;
        }
      }
      sup_sq[static_cast<size_t>(p)] = sup * sup;
    });

    double mean = 0.0;
    long n = 0;
    for (long p = 0; p < cfg.paths; ++p)
      if (!bad[static_cast<size_t>(p)]) {
        mean += sup_sq[static_cast<size_t>(p)];
        ++n;
      }
    if (n == 0) throw SimulationError("ergodic check: all paths failed");
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (long p = 0; p < cfg.paths; ++p)
      if (!bad[static_cast<size_t>(p)]) {
        const double diff = sup_sq[static_cast<size_t>(p)] - mean;
        ss += diff * diff;
      }
    const double se = n > 1 ? std::sqrt(ss / (static_cast<double>(n) * (n - 1.0))) : 0.0;
    report.entries.push_back({eps, mean, se});
  }

  report.trend_pass = observable.x_independent()
                          ? report.entries.back().value == 0.0
                          : trend_separated(report.entries.front(), report.entries.back());
  report.control_pass = true;
  if (observable.x_independent())
    for (const auto& e : report.entries) report.control_pass &= (e.value == 0.0);
  return report;
}

std::vector<MomentRow> invariant_measure_check(const TrajectoryEnsemble& ens,
                                               const Potential& potential) {
  if (!ens.density_initial)
    throw InputDomainError("invariant measure check requires a density initial law");
  std::vector<MomentRow> rows;
  const double m1_ref = potential.coord_mean();
  const double m2_ref = potential.coord_second_moment();
  for (size_t t = 0; t < ens.times.size(); ++t) {
    for (int i = 0; i < ens.dim; ++i) {
      double s1 = 0.0, s2 = 0.0, s4 = 0.0;
      long n = 0;
      for (long p = 0; p < ens.paths; ++p) {
        if (ens.flagged[static_cast<size_t>(p)]) continue;
        const double x = ens.state(p, t)[i];
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
        ++n;
      }
      MomentRow row;
      row.time = ens.times[t];
      row.coordinate = i;
      row.mean = s1 / n;
      row.second = s2 / n;
      const double var1 = std::max(0.0, s2 / n - row.mean * row.mean);
      const double var2 = std::max(0.0, s4 / n - row.second * row.second);
      row.mean_se = std::sqrt(var1 / n);
      row.second_se = std::sqrt(var2 / n);
      row.mean_gap = std::abs(row.mean - m1_ref);
      row.second_gap = std::abs(row.second - m2_ref);
      row.pass = row.mean_gap <= 3.0 * row.mean_se + 1e-12 &&
                 row.second_gap <= 3.0 * row.second_se + 1e-12;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Regularity suite

namespace {

double solution_energy(const CorrectorSolution& s) { return s.lambda_l2 + s.h1_energy; }

}  // namespace

std::string RegularityTable::to_json() const {
  json j;
  json rows_json = json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"quantity", r.quantity},
                         {"lambda", r.lambda},
                         {"energy", r.energy},
                         {"lipschitz_ratio", r.lipschitz_ratio}});
  j["rows"] = rows_json;
  j["n_ladder"] = n_ladder;
  j["visc_h1_decay"] = visc_h1_decay;
  j["visc_grad_decay"] = visc_grad_decay;
  j["h_steps"] = h_steps;
  j["symmetric_match"] = symmetric_match;
  j["h_is_zero"] = h_is_zero;
  j["energy_flat"] = energy_flat;
  j["lipschitz_stable"] = lipschitz_stable;
  j["viscosity_decays"] = viscosity_decays;
  return j.dump(2);
}

RegularityTable regularity_suite(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                                 const std::vector<double>& lambda_ladder,
                                 const std::vector<int>& n_ladder,
                                 const std::vector<double>& h_steps) {
  RegularityTable table;
  table.h_steps = h_steps;
  table.n_ladder = n_ladder;

  auto shared = std::make_shared<RealTrigBasis>(basis);
  const MediumModes mm = sample_medium_modes(medium, *shared, y);
  const MatX g_tilde = assemble_gradient_form(mm.a_tilde, *shared);

  ResolventProblem base;
  base.medium = &medium;
  base.y = y;
  base.kind = OperatorKind::Full;
  base.rhs_kind = RhsKind::DriftComponent;
  base.drift_component = 0;

  // H == 0 when the full and symmetric fields coincide.
  {
    double h_norm = 0.0;
    std::array<int, kMaxDim> idx{};
    ModeIndex mi{};
    bool more = true;
    while (more) {
      for (int i = 0; i < medium.dim(); ++i) mi[i] = idx[i] - mm.h.kmax();
      h_norm = std::max(h_norm, mm.h.coeff(mi).cwiseAbs().maxCoeff());
      more = false;
      for (int i = 0; i < medium.dim(); ++i) {
        if (++idx[i] < 2 * mm.h.kmax() + 1) {
          more = true;
          break;
        }
        idx[i] = 0;
      }
    }
    table.h_is_zero = h_norm <= 1e-14;
  }

  const double h_deriv = 1e-3;
  for (double lam : lambda_ladder) {
    ResolventProblem p = base;
    p.lambda = lam;
    const CorrectorSolution u = solve_resolvent(p, shared, mm);

    ResolventProblem ps = p;
    ps.kind = OperatorKind::Symmetric;
    const CorrectorSolution w = solve_resolvent(ps, shared, mm);
    if (table.h_is_zero)
      table.symmetric_match =
          std::max(table.symmetric_match, (u.coeffs - w.coeffs).cwiseAbs().maxCoeff());

    const YDerivatives dy = corrector_y_derivatives(p, *shared, h_deriv);

    auto lip_ratios = [&](const ResolventProblem& prob) {
      std::vector<double> out;
      for (double h : h_steps) {
        double worst = 0.0;
        for (int j = 0; j < medium.dim(); ++j) {
          ResolventProblem shifted = prob;
          shifted.y[j] += h;
          const MediumModes mm_s = sample_medium_modes(medium, *shared, shifted.y);
          const CorrectorSolution us = solve_resolvent(shifted, shared, mm_s);
          const CorrectorSolution uc = solve_resolvent(prob, shared, mm);
          const VecX diff = us.coeffs - uc.coeffs;
          worst = std::max(worst, std::sqrt(std::max(0.0, diff.dot(g_tilde * diff))) / h);
        }
        out.push_back(worst);
      }
      return out;
    };

    RegularityRow row_u{"u", lam, solution_energy(u), lip_ratios(p)};
    table.rows.push_back(row_u);
    for (int j = 0; j < medium.dim(); ++j) {
      RegularityRow row{"dy" + std::to_string(j + 1) + "_u", lam,
                        solution_energy(dy.first[static_cast<size_t>(j)]),
                        {}};
      table.rows.push_back(row);
    }
    RegularityRow row_w{"w", lam, solution_energy(w), lip_ratios(ps)};
    table.rows.push_back(row_w);
    const YDerivatives dyw = corrector_y_derivatives(ps, *shared, h_deriv);
    for (int j = 0; j < medium.dim(); ++j) {
      RegularityRow row{"dy" + std::to_string(j + 1) + "_w", lam,
                        solution_energy(dyw.first[static_cast<size_t>(j)]),
                        {}};
      table.rows.push_back(row);
    }
  }

  {
    ResolventProblem p = base;
    p.lambda = lambda_ladder.front();
    const ViscosityDecay vd = viscosity_consistency(p, *shared, n_ladder);
    table.visc_h1_decay = vd.h1_distance;
    table.visc_grad_decay = vd.grad_l2_over_n;
  }

  // Verdicts. Energies must stay flat (within 10%) across the lambda
  // ladder. Lipschitz ratios must not grow by more than 2x along a
  // refinement, neither in h at fixed lambda nor in lambda at fixed h
  // (decay is fine: a vanishing macro dependence satisfies the bound).
  table.energy_flat = true;
  table.lipschitz_stable = true;
  for (const char* q : {"u", "w"}) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    std::vector<const RegularityRow*> qrows;
    for (const auto& r : table.rows) {
      if (r.quantity != q) continue;
      qrows.push_back(&r);
      if (first) {
        lo = hi = r.energy;
        first = false;
      } else {
        lo = std::min(lo, r.energy);
        hi = std::max(hi, r.energy);
      }
    }
    if (hi > 1e-300 && hi > 1.1 * lo) table.energy_flat = false;
    for (const RegularityRow* r : qrows)
      for (size_t i = 0; i + 1 < r->lipschitz_ratio.size(); ++i)
        if (r->lipschitz_ratio[i + 1] > 2.0 * r->lipschitz_ratio[i] + 1e-300)
          table.lipschitz_stable = false;
    for (size_t k = 0; k + 1 < qrows.size(); ++k)
      for (size_t i = 0; i < qrows[k]->lipschitz_ratio.size() &&
                         i < qrows[k + 1]->lipschitz_ratio.size();
           ++i)
        if (qrows[k + 1]->lipschitz_ratio[i] > 2.0 * qrows[k]->lipschitz_ratio[i] + 1e-300)
          table.lipschitz_stable = false;
  }
  table.viscosity_decays = true;
  if (table.visc_h1_decay.size() >= 2) {
    const double scale_h1 = std::max(table.visc_h1_decay.front(), 1e-300);
    const double scale_g = std::max(table.visc_grad_decay.front(), 1e-300);
    if (table.visc_h1_decay.back() > table.visc_h1_decay.front() * (1.0 - 1e-12) + 1e-14 * scale_h1
        && table.visc_h1_decay.back() > 1e-14 * scale_h1)
      table.viscosity_decays = false;
    if (table.visc_grad_decay.back() >
            table.visc_grad_decay.front() * (1.0 - 1e-12) + 1e-14 * scale_g &&
        table.visc_grad_decay.back() > 1e-14 * scale_g)
      table.viscosity_decays = false;
  }
  return table;
}

}  // namespace homlab
