#include "homlab/effective.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <cmath>
#include <nlohmann/json.hpp>

#include "homlab/parallel.hpp"

namespace homlab {

namespace {

using nlohmann::json;

std::vector<double> to_vector(const MatX& m) {
  std::vector<double> v;
  v.reserve(static_cast<size_t>(m.size()));
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// GridSpec

size_t GridSpec::total() const {
  size_t n = 1;
  for (int i = 0; i < dim; ++i) n *= static_cast<size_t>(counts[i]);
  return n;
}

std::array<int, kMaxDim> GridSpec::unflatten(size_t flat) const {
  std::array<int, kMaxDim> idx{};
  for (int i = 0; i < dim; ++i) {
    idx[i] = static_cast<int>(flat % static_cast<size_t>(counts[i]));
    flat /= static_cast<size_t>(counts[i]);
  }
  return idx;
}

size_t GridSpec::flatten(const std::array<int, kMaxDim>& idx) const {
  size_t flat = 0;
  for (int i = dim - 1; i >= 0; --i)
    flat = flat * static_cast<size_t>(counts[i]) + static_cast<size_t>(idx[i]);
  return flat;
}

Vec GridSpec::point(size_t flat) const {
  const auto idx = unflatten(flat);
  Vec y(dim);
  for (int i = 0; i < dim; ++i) y[i] = origin[i] + step[i] * idx[i];
  return y;
}

bool GridSpec::on_boundary(size_t flat) const {
  const auto idx = unflatten(flat);
  for (int i = 0; i < dim; ++i)
    if (idx[i] == 0 || idx[i] == counts[i] - 1) return true;
  return false;
}

GridSpec GridSpec::uniform(int dim, double lo, double hi, int points_per_axis) {
  if (points_per_axis < 1) throw InputDomainError("grid: need >= 1 point per axis");
  GridSpec g;
  g.dim = dim;
  g.origin = Vec::Constant(dim, lo);
  g.step = Vec::Constant(dim, points_per_axis > 1 ? (hi - lo) / (points_per_axis - 1) : 1.0);
  for (int i = 0; i < dim; ++i) g.counts[i] = points_per_axis;
  return g;
}

// ---------------------------------------------------------------------------
// Effective tensors at one macro point

namespace {

// avg((g e_i) . Du) = -2 * rhs_g^{(i)} . coeffs, with rhs computed by the
// drift-pairing assembler.
struct PairingData {
  std::vector<VecX> r_a;  // per direction
  std::vector<VecX> r_h;
  MatX g_a;
  MatX g_h;
  Mat a_mean;
  Mat h_mean;
};

PairingData pairing_data(const MediumModes& mm, const RealTrigBasis& basis) {
  const int d = basis.dim();
  PairingData pd;
  for (int i = 0; i < d; ++i) {
    pd.r_a.push_back(assemble_drift_rhs(mm.a, basis, i));
    pd.r_h.push_back(assemble_drift_rhs(mm.h, basis, i));
  }
  pd.g_a = assemble_gradient_form(mm.a, basis);
  pd.g_h = assemble_gradient_form(mm.h, basis);
  ModeIndex zero{};
  pd.a_mean = Mat(mm.a.coeff(zero).real());
  pd.h_mean = Mat(mm.h.coeff(zero).real());
  return pd;
}

void tensors_from_correctors(const PairingData& pd, const std::vector<VecX>& c, Mat* a_out,
                             Mat* h_out) {
  const int d = static_cast<int>(c.size());
  if (a_out) {
    Mat A(d, d);
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l)
        A(i, l) = pd.a_mean(i, l) - 2.0 * pd.r_a[i].dot(c[l]) - 2.0 * pd.r_a[l].dot(c[i]) +
                  2.0 * c[i].dot(pd.g_a * c[l]);
    *a_out = 0.5 * (A + Mat(A.transpose()));
  }
  if (h_out) {
    Mat H(d, d);
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l)
        H(i, l) = pd.h_mean(i, l) + 2.0 * pd.r_h[i].dot(c[l]) - 2.0 * pd.r_h[l].dot(c[i]) +
                  2.0 * c[i].dot(pd.g_h * c[l]);
    *h_out = 0.5 * (H - Mat(H.transpose()));
  }
}

void check_ladder(const std::vector<double>& ladder) {
  if (ladder.size() < 3) throw InputDomainError("lambda ladder needs >= 3 rungs");
  for (size_t i = 0; i + 1 < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0) || !(ladder[i + 1] > 0.0))
      throw InputDomainError("lambda ladder must be positive");
    if (ladder[i + 1] > 0.25 * ladder[i])
      throw InputDomainError("lambda ladder must decrease geometrically (ratio <= 1/4)");
  }
}

}  // namespace

void effective_a_h(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                   const std::vector<double>& ladder, Mat* a_out, Mat* h_out) {
  check_ladder(ladder);
  const int d = medium.dim();
  auto shared = std::make_shared<RealTrigBasis>(basis);
  const MediumModes mm = sample_medium_modes(medium, *shared, y);
  const PairingData pd = pairing_data(mm, basis);

  ResolventProblem base;
  base.medium = &medium;
  base.y = y;
  base.kind = OperatorKind::Full;
  base.rhs_kind = RhsKind::DriftComponent;

  std::vector<VecX> a_seq, h_seq;
  std::vector<double> energies(static_cast<size_t>(d), 0.0);
  std::vector<std::vector<double>> decay(static_cast<size_t>(d));
  for (double lam : ladder) {
    std::vector<VecX> coeffs;
    for (int i = 0; i < d; ++i) {
      ResolventProblem p = base;
      p.lambda = lam;
      p.drift_component = i;
      CorrectorSolution s = solve_resolvent(p, shared, mm);
      decay[static_cast<size_t>(i)].push_back(s.lambda_l2);
      coeffs.push_back(std::move(s.coeffs));
    }
    Mat A(d, d), H(d, d);
    tensors_from_correctors(pd, coeffs, &A, &H);
    VecX af(d * d), hf(d * d);
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l) {
        af[i * d + l] = A(i, l);
        hf[i * d + l] = H(i, l);
      }
    a_seq.push_back(af);
    h_seq.push_back(hf);
  }

  for (int i = 0; i < d; ++i) {
    const auto& seq = decay[static_cast<size_t>(i)];
    const double scale = std::max(seq.front(), 1e-300);
    for (size_t k = 0; k + 1 < seq.size(); ++k)
      if (seq[k + 1] > seq[k] * (1.0 + 1e-9) + 1e-14 * scale)
        throw ExtrapolationError("lambda |u|_2^2 not decreasing at macro point");
  }

  const VecX a_lim = richardson_to_zero(ladder, a_seq);
  const VecX h_lim = richardson_to_zero(ladder, h_seq);
  if (a_out) {
    a_out->resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l) (*a_out)(i, l) = a_lim[i * d + l];
    *a_out = 0.5 * (*a_out + Mat(a_out->transpose()));
  }
  if (h_out) {
    h_out->resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < d; ++l) (*h_out)(i, l) = h_lim[i * d + l];
    *h_out = 0.5 * (*h_out - Mat(h_out->transpose()));
  }
}

Mat effective_a(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                const std::vector<double>& ladder) {
  Mat a;
  effective_a_h(medium, basis, y, ladder, &a, nullptr);
  return a;
}

Mat effective_h(const Medium& medium, const RealTrigBasis& basis, const Vec& y,
                const std::vector<double>& ladder) {
  Mat h;
  effective_a_h(medium, basis, y, ladder, nullptr, &h);
  return h;
}

// ---------------------------------------------------------------------------
// Drift tensor on the grid

std::vector<Vec> effective_b(const GridSpec& grid, const std::vector<Mat>& a_bar,
                             const std::vector<Mat>& h_bar, const Potential& potential,
                             std::vector<uint8_t>* boundary_flag) {
  const int d = grid.dim;
  const size_t n = grid.total();
  if (a_bar.size() != n || h_bar.size() != n)
    throw InputDomainError("effective_b: table size mismatch");

  std::vector<Mat> t(n);
  for (size_t g = 0; g < n; ++g) t[g] = a_bar[g] + h_bar[g];

  std::vector<Vec> b(n);
  if (boundary_flag) boundary_flag->assign(n, 0);
  for (size_t g = 0; g < n; ++g) {
    const auto idx = grid.unflatten(g);
    const Vec y = grid.point(g);
    const Vec gv = potential.grad(y);
    Vec out = Vec::Zero(d);
    bool one_sided = false;
    for (int j = 0; j < d; ++j) {
      Mat dj = Mat::Zero(d, d);
      if (grid.counts[j] >= 2) {
        auto lo = idx, hi = idx;
        double denom;
        if (idx[j] == 0) {
          hi[j] = idx[j] + 1;
          denom = grid.step[j];
          one_sided = true;
        } else if (idx[j] == grid.counts[j] - 1) {
          lo[j] = idx[j] - 1;
          denom = grid.step[j];
          one_sided = true;
        } else {
          lo[j] = idx[j] - 1;
          hi[j] = idx[j] + 1;
          denom = 2.0 * grid.step[j];
        }
        dj = (t[grid.flatten(hi)] - t[grid.flatten(lo)]) / denom;
      }
      for (int i = 0; i < d; ++i)
        out[i] += 0.5 * (dj(j, i) - 2.0 * gv[j] * t[grid.flatten(idx)](j, i));
    }
    b[g] = out;
    if (boundary_flag && one_sided) (*boundary_flag)[g] = 1;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Variational route

Mat variational_a_tilde(const Medium& medium, const RealTrigBasis& basis, double* minimizer_h1) {
  const int d = medium.dim();
  const MediumModes mm = sample_medium_modes(medium, basis, Vec::Zero(d));
  const MatX g = assemble_gradient_form(mm.a_tilde, basis);

  std::vector<VecX> rhs, sol;
  for (int i = 0; i < d; ++i) rhs.push_back(assemble_drift_rhs(mm.a_tilde, basis, i));

  Eigen::CompleteOrthogonalDecomposition<MatX> cod(g);
  cod.setThreshold(1e-10);
  double h1 = 0.0;
  for (int i = 0; i < d; ++i) {
    VecX c = cod.solve(rhs[i]);
    h1 = std::max(h1, c.dot(g * c));
    sol.push_back(std::move(c));
  }
  if (minimizer_h1) *minimizer_h1 = std::sqrt(std::max(0.0, h1));

  ModeIndex zero{};
  Mat at = Mat(mm.a_tilde.coeff(zero).real());
  for (int i = 0; i < d; ++i)
    for (int l = 0; l < d; ++l) at(i, l) -= 2.0 * rhs[i].dot(sol[static_cast<size_t>(l)]);
  return 0.5 * (at + Mat(at.transpose()));
}

// ---------------------------------------------------------------------------
// Kernel geometry

KernelGeometry kernel_and_geometry(const GridSpec& grid, const std::vector<Mat>& a_bar,
                                   const std::vector<Mat>& h_bar, const std::vector<Vec>& b_bar) {
  const size_t n = a_bar.size();
  if (n < 2) throw InputDomainError("kernel geometry needs >= 2 grid points");
  const int d = grid.dim;

  KernelGeometry geo;
  MatX kernel0, complement0;
  for (size_t g = 0; g < n; ++g) {
    Eigen::SelfAdjointEigenSolver<MatX> es(MatX(0.5 * (a_bar[g] + Mat(a_bar[g].transpose()))));
    const VecX ev = es.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    const double tau = 1e-8 * std::max(top, 1e-300);

    int kdim = 0;
    for (long i = 0; i < ev.size(); ++i)
      if (ev[i] <= tau) ++kdim;
    MatX kernel(d, kdim), complement(d, d - kdim);
    int kc = 0, cc = 0;
    for (long i = 0; i < ev.size(); ++i) {
      if (ev[i] <= tau)
        kernel.col(kc++) = es.eigenvectors().col(i);
      else {
        complement.col(cc++) = es.eigenvectors().col(i);
        geo.alpha_min = (geo.alpha_min == 0.0 && geo.alpha_max == 0.0)
                            ? ev[i]
                            : std::min(geo.alpha_min, ev[i]);
        geo.alpha_max = std::max(geo.alpha_max, ev[i]);
      }
    }

    if (g == 0) {
      geo.kernel_dim = kdim;
      kernel0 = kernel;
      complement0 = complement;
    } else if (kdim != geo.kernel_dim) {
      throw GeometryError("kernel dimension varies across the macro grid");
    } else if (kdim > 0) {
      // Principal angles between Ker at this point and at the first point.
      Eigen::JacobiSVD<MatX> svd(kernel0.transpose() * kernel);
      const double smin = svd.singularValues().minCoeff();
      geo.worst_principal_angle =
          std::max(geo.worst_principal_angle, std::acos(std::min(1.0, std::max(-1.0, smin))));
    }

    for (int k = 0; k < geo.kernel_dim && g < b_bar.size(); ++k) {
      const double bnorm = b_bar[g].norm();
      if (bnorm > 1e-300)
        geo.worst_b_kernel_overlap = std::max(
            geo.worst_b_kernel_overlap, std::abs(b_bar[g].dot(Vec(kernel0.col(k)))) / bnorm);
      const double hnorm = h_bar[g].norm();
      if (hnorm > 1e-300)
        geo.worst_h_kernel_image = std::max(
            geo.worst_h_kernel_image, (h_bar[g] * Vec(kernel0.col(k))).norm() / hnorm);
    }
  }

  geo.kernel_basis = kernel0;
  geo.complement_basis = complement0;
  geo.pass = geo.worst_principal_angle <= 1e-6 && geo.worst_b_kernel_overlap <= 1e-8 &&
             geo.worst_h_kernel_image <= 1e-8 &&
             (geo.kernel_dim == d || geo.alpha_min > 0.0);
  if (!geo.pass) geo.note = "degenerate-geometry invariants violated";
  return geo;
}

EffectiveTensors build_effective_tensors(const Medium& medium, const RealTrigBasis& basis,
                                         const GridSpec& grid,
                                         const std::vector<double>& ladder, int threads) {
  EffectiveTensors table;
  table.grid = grid;
  const size_t n = grid.total();
  table.a_bar.resize(n);
  table.h_bar.resize(n);

  parallel_for(static_cast<long>(n), threads, [&](long g) {
    Mat a, h;
    effective_a_h(medium, basis, grid.point(static_cast<size_t>(g)), ladder, &a, &h);
    table.a_bar[static_cast<size_t>(g)] = a;
    table.h_bar[static_cast<size_t>(g)] = h;
  });

  table.b_bar = effective_b(grid, table.a_bar, table.h_bar, medium.potential(),
                            &table.boundary_flag);
  table.geometry = kernel_and_geometry(grid, table.a_bar, table.h_bar, table.b_bar);
  return table;
}

// ---------------------------------------------------------------------------
// Interpolation

namespace {

struct AxisStencil {
  int base = 0;       // first stencil index (clamped later)
  double w[4] = {0};  // weights
  int count = 0;      // 4 cubic, 2 linear, 1 constant
};

AxisStencil axis_stencil(double coord, double origin, double step, int points, bool* inside) {
  AxisStencil st;
  if (points == 1) {
    st.count = 1;
    st.base = 0;
    st.w[0] = 1.0;
    return st;
  }
  const double s = (coord - origin) / step;
  if (s < -1e-9 || s > points - 1 + 1e-9) *inside = false;
  double cell;
  double frac = std::modf(std::min(std::max(s, 0.0), static_cast<double>(points - 1)), &cell);
  int i0 = static_cast<int>(cell);
  if (i0 >= points - 1) {
    i0 = points - 2;
    frac = 1.0;
  }
  if (points < 4) {
    st.count = 2;
    st.base = i0;
    st.w[0] = 1.0 - frac;
    st.w[1] = frac;
    return st;
  }
  // Catmull-Rom weights on the cell [i0, i0+1].
  const double t = frac, t2 = t * t, t3 = t2 * t;
  st.count = 4;
  st.base = i0 - 1;
  st.w[0] = 0.5 * (-t + 2.0 * t2 - t3);
  st.w[1] = 0.5 * (2.0 - 5.0 * t2 + 3.0 * t3);
  st.w[2] = 0.5 * (t + 4.0 * t2 - 3.0 * t3);
  st.w[3] = 0.5 * (-t2 + t3);
  return st;
}

template <class T>
T interpolate_table(const GridSpec& grid, const std::vector<T>& table, const Vec& y,
                    bool* inside, const T& zero) {
  bool in = true;
  AxisStencil st[kMaxDim];
  for (int i = 0; i < grid.dim; ++i)
    st[i] = axis_stencil(y[i], grid.origin[i], grid.step[i], grid.counts[i], &in);
  if (inside) *inside = in;

  T acc = zero;
  std::array<int, kMaxDim> off{};
  bool more = true;
  while (more) {
    double w = 1.0;
    std::array<int, kMaxDim> idx{};
    for (int i = 0; i < grid.dim; ++i) {
      w *= st[i].w[off[i]];
      int j = st[i].base + off[i];
      j = std::min(std::max(j, 0), grid.counts[i] - 1);
      idx[i] = j;
    }
    if (w != 0.0) acc += w * table[grid.flatten(idx)];
    more = false;
    for (int i = 0; i < grid.dim; ++i) {
      if (++off[i] < st[i].count) {
        more = true;
        break;
      }
      off[i] = 0;
    }
  }
  return acc;
}

}  // namespace

Mat EffectiveTensors::interpolate_a(const Vec& y, bool* inside) const {
  return interpolate_table<Mat>(grid, a_bar, y, inside, Mat::Zero(grid.dim, grid.dim));
}

Vec EffectiveTensors::interpolate_b(const Vec& y, bool* inside) const {
  return interpolate_table<Vec>(grid, b_bar, y, inside, Vec::Zero(grid.dim));
}

// ---------------------------------------------------------------------------
// PSD square root

Mat sqrt_psd(const Mat& m) {
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  if ((m - Mat(m.transpose())).cwiseAbs().maxCoeff() > 1e-8 * std::max(scale, 1.0))
    throw InvalidTensorError("sqrt_psd: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<MatX> es(MatX(0.5 * (m + Mat(m.transpose()))));
  VecX ev = es.eigenvalues();
  for (long i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-9 * std::max(scale, 1.0))
      throw InvalidTensorError("sqrt_psd: matrix indefinite beyond tolerance");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  Mat s = Mat(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  return 0.5 * (s + Mat(s.transpose()));
}

// ---------------------------------------------------------------------------
// Serialization

std::string EffectiveTensors::to_json() const {
  json j;
  j["format"] = "homlab-tensors-1";
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash));
  j["config_hash"] = hex;
  j["y_grid"] = {
      {"dim", grid.dim},
      {"origin", std::vector<double>(grid.origin.data(), grid.origin.data() + grid.dim)},
      {"step", std::vector<double>(grid.step.data(), grid.step.data() + grid.dim)},
      {"counts", std::vector<int>(grid.counts.begin(), grid.counts.begin() + grid.dim)}};
  json a = json::array(), h = json::array(), b = json::array();
  for (const auto& mt : a_bar) a.push_back(to_vector(MatX(mt)));
  for (const auto& mt : h_bar) h.push_back(to_vector(MatX(mt)));
  for (const auto& v : b_bar) b.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  j["a_bar"] = a;
  j["h_bar"] = h;
  j["b_bar"] = b;
  j["boundary_flag"] = boundary_flag;
  j["geometry"] = {{"kernel_dim", geometry.kernel_dim},
                   {"kernel_basis", to_vector(geometry.kernel_basis)},
                   {"complement_basis", to_vector(geometry.complement_basis)},
                   {"alpha_min", geometry.alpha_min},
                   {"alpha_max", geometry.alpha_max},
                   {"worst_principal_angle", geometry.worst_principal_angle},
                   {"worst_b_kernel_overlap", geometry.worst_b_kernel_overlap},
                   {"worst_h_kernel_image", geometry.worst_h_kernel_image},
                   {"pass", geometry.pass},
                   {"note", geometry.note}};
  return j.dump(2);
}

EffectiveTensors EffectiveTensors::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != std::string("homlab-tensors-1"))
    throw ConfigError("tensor table: unknown format");
  EffectiveTensors t;
  t.config_hash = std::stoull(j["config_hash"].get<std::string>(), nullptr, 16);
  const json& g = j["y_grid"];
  t.grid.dim = g["dim"].get<int>();
  const auto origin = g["origin"].get<std::vector<double>>();
  const auto step = g["step"].get<std::vector<double>>();
  const auto counts = g["counts"].get<std::vector<int>>();
  t.grid.origin = Vec(t.grid.dim);
  t.grid.step = Vec(t.grid.dim);
  for (int i = 0; i < t.grid.dim; ++i) {
    t.grid.origin[i] = origin[static_cast<size_t>(i)];
    t.grid.step[i] = step[static_cast<size_t>(i)];
    t.grid.counts[i] = counts[static_cast<size_t>(i)];
  }
  const int d = t.grid.dim;
  auto read_mats = [&](const json& arr) {
    std::vector<Mat> out;
    for (const auto& row : arr) {
      Mat m(d, d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) m(r, c) = row[static_cast<size_t>(r * d + c)].get<double>();
      out.push_back(m);
    }
    return out;
  };
  t.a_bar = read_mats(j["a_bar"]);
  t.h_bar = read_mats(j["h_bar"]);
  for (const auto& row : j["b_bar"]) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = row[static_cast<size_t>(i)].get<double>();
    t.b_bar.push_back(v);
  }
  t.boundary_flag = j["boundary_flag"].get<std::vector<uint8_t>>();
  const json& geo = j["geometry"];
  t.geometry.kernel_dim = geo["kernel_dim"].get<int>();
  auto read_mat = [&](const json& arr, int rows, int cols) {
    MatX m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = arr[static_cast<size_t>(r * cols + c)].get<double>();
    return m;
  };
  t.geometry.kernel_basis = read_mat(geo["kernel_basis"], d, t.geometry.kernel_dim);
  t.geometry.complement_basis = read_mat(geo["complement_basis"], d, d - t.geometry.kernel_dim);
  t.geometry.alpha_min = geo["alpha_min"].get<double>();
  t.geometry.alpha_max = geo["alpha_max"].get<double>();
  t.geometry.worst_principal_angle = geo["worst_principal_angle"].get<double>();
  t.geometry.worst_b_kernel_overlap = geo["worst_b_kernel_overlap"].get<double>();
  t.geometry.worst_h_kernel_image = geo["worst_h_kernel_image"].get<double>();
  t.geometry.pass = geo["pass"].get<bool>();
  t.geometry.note = geo["note"].get<std::string>();
  return t;
}

}  // namespace homlab
