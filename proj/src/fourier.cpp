#include "homlab/fourier.hpp"

#include <cmath>
#include <unordered_map>

namespace homlab {

namespace {

// Odometer over {0, ..., n-1}^dim.
bool advance(std::array<int, kMaxDim>& idx, int dim, int n) {
  for (int i = 0; i < dim; ++i) {
    if (++idx[i] < n) return true;
    idx[i] = 0;
  }
  return false;
}

bool canonical(const ModeIndex& k, int dim) {
  for (int i = 0; i < dim; ++i) {
    if (k[i] > 0) return true;
    if (k[i] < 0) return false;
  }
  return false;  // zero mode handled separately
}

}  // namespace

// ---------------------------------------------------------------------------
// MatrixFieldModes

MatrixFieldModes::MatrixFieldModes(int dim, int rows, int kmax)
    : dim_(dim), rows_(rows), kmax_(kmax) {
  size_t n = 1;
  for (int i = 0; i < dim; ++i) n *= static_cast<size_t>(2 * kmax + 1);
  table_.assign(n, MatXc::Zero(rows, rows));
}

size_t MatrixFieldModes::flat(const ModeIndex& m) const {
  size_t idx = 0;
  for (int i = dim_ - 1; i >= 0; --i)
    idx = idx * static_cast<size_t>(2 * kmax_ + 1) + static_cast<size_t>(m[i] + kmax_);
  return idx;
}

MatrixFieldModes MatrixFieldModes::from_field(const std::function<Mat(const Vec&)>& field,
                                              int dim, int rows, int kmax, int nq,
                                              double* tail_energy) {
  const int probe = kmax + 2;
  if (nq < 2 * probe + 2) nq = 2 * probe + 2;

  // Sample on the tensor grid.
  size_t nodes = 1;
  for (int i = 0; i < dim; ++i) nodes *= static_cast<size_t>(nq);
  std::vector<Mat> samples(nodes);
  {
    std::array<int, kMaxDim> idx{};
    Vec x(dim);
    size_t q = 0;
    do {
      for (int i = 0; i < dim; ++i) x[i] = kTwoPi * idx[i] / nq;
      samples[q++] = field(x);
    } while (advance(idx, dim, nq));
  }

  MatrixFieldModes wide(dim, rows, probe);
  const double w = 1.0 / static_cast<double>(nodes);
  std::array<int, kMaxDim> midx{};
  ModeIndex m{};
  do {
    for (int i = 0; i < dim; ++i) m[i] = midx[i] - probe;
    MatXc acc = MatXc::Zero(rows, rows);
    std::array<int, kMaxDim> idx{};
    size_t q = 0;
    do {
      double phase = 0.0;
      for (int i = 0; i < dim; ++i) phase += m[i] * (kTwoPi * idx[i] / nq);
      acc += samples[q++].cast<Complex>() * std::exp(Complex(0.0, -phase));
    } while (advance(idx, dim, nq));
    wide.coeff(m) = acc * w;
  } while (advance(midx, dim, 2 * probe + 1));

  // Energy beyond the retained band flags quadrature under-resolution.
  double total = 0.0, tail = 0.0;
  std::array<int, kMaxDim> tidx{};
  do {
    for (int i = 0; i < dim; ++i) m[i] = tidx[i] - probe;
    const double e = wide.coeff(m).squaredNorm();
    total += e;
    if (inf_norm(m, dim) > kmax) tail += e;
  } while (advance(tidx, dim, 2 * probe + 1));
  if (tail_energy) *tail_energy = total > 0.0 ? tail / total : 0.0;

  MatrixFieldModes out(dim, rows, kmax);
  std::array<int, kMaxDim> oidx{};
  do {
    for (int i = 0; i < dim; ++i) m[i] = oidx[i] - kmax;
    out.coeff(m) = wide.coeff(m);
  } while (advance(oidx, dim, 2 * kmax + 1));
  return out;
}

Mat MatrixFieldModes::evaluate(const Vec& x) const {
  MatXc acc = MatXc::Zero(rows_, rows_);
  std::array<int, kMaxDim> idx{};
  ModeIndex m{};
  do {
    for (int i = 0; i < dim_; ++i) m[i] = idx[i] - kmax_;
    double phase = 0.0;
    for (int i = 0; i < dim_; ++i) phase += m[i] * x[i];
    acc += coeff(m) * std::exp(Complex(0.0, phase));
  } while (advance(idx, dim_, 2 * kmax_ + 1));
  Mat out(rows_, rows_);
  out = acc.real();
  return out;
}

double MatrixFieldModes::evaluate_imag_residual(const Vec& x) const {
  MatXc acc = MatXc::Zero(rows_, rows_);
  std::array<int, kMaxDim> idx{};
  ModeIndex m{};
  do {
    for (int i = 0; i < dim_; ++i) m[i] = idx[i] - kmax_;
    double phase = 0.0;
    for (int i = 0; i < dim_; ++i) phase += m[i] * x[i];
    acc += coeff(m) * std::exp(Complex(0.0, phase));
  } while (advance(idx, dim_, 2 * kmax_ + 1));
  return acc.imag().cwiseAbs().maxCoeff();
}

int MatrixFieldModes::effective_bandwidth(double rel_tol) const {
  double peak = 0.0;
  std::array<int, kMaxDim> idx{};
  ModeIndex m{};
  do {
    for (int i = 0; i < dim_; ++i) m[i] = idx[i] - kmax_;
    peak = std::max(peak, coeff(m).cwiseAbs().maxCoeff());
  } while (advance(idx, dim_, 2 * kmax_ + 1));
  if (peak == 0.0) return 0;
  int band = 0;
  std::array<int, kMaxDim> idx2{};
  do {
    for (int i = 0; i < dim_; ++i) m[i] = idx2[i] - kmax_;
    if (coeff(m).cwiseAbs().maxCoeff() > rel_tol * peak) band = std::max(band, inf_norm(m, dim_));
  } while (advance(idx2, dim_, 2 * kmax_ + 1));
  return band;
}

// ---------------------------------------------------------------------------
// RealTrigBasis

RealTrigBasis::RealTrigBasis(int dim, int kgal, int quadrature_per_axis)
    : dim_(dim), kgal_(kgal) {
  if (dim < 1 || dim > kMaxDim) throw InputDomainError("basis: unsupported dimension");
  if (kgal < 1) throw InputDomainError("basis: cutoff must be >= 1");
  nq_ = quadrature_per_axis > 0 ? quadrature_per_axis : 4 * kgal;
  if (nq_ < 4 * kgal) throw InputDomainError("basis: quadrature must use >= 4*cutoff nodes per axis");

  modes_.push_back({ModeType::Const, ModeIndex{}});
  std::array<int, kMaxDim> idx{};
  ModeIndex k{};
  do {
    for (int i = 0; i < dim; ++i) k[i] = idx[i] - kgal;
    if (inf_norm(k, dim) == 0 || !canonical(k, dim)) continue;
    modes_.push_back({ModeType::Cos, k});
    modes_.push_back({ModeType::Sin, k});
  } while (advance(idx, dim, 2 * kgal + 1));
}

long RealTrigBasis::find(ModeType type, const ModeIndex& k) const {
  for (size_t p = 0; p < modes_.size(); ++p) {
    if (modes_[p].type != type) continue;
    bool same = true;
    for (int i = 0; i < dim_; ++i)
      if (modes_[p].k[i] != k[i]) same = false;
    if (same) return static_cast<long>(p);
  }
  return -1;
}

double RealTrigBasis::value(size_t p, const Vec& x) const {
  const Mode& m = modes_[p];
  if (m.type == ModeType::Const) return 1.0;
  double phase = 0.0;
  for (int i = 0; i < dim_; ++i) phase += m.k[i] * x[i];
  return m.type == ModeType::Cos ? std::cos(phase) : std::sin(phase);
}

Vec RealTrigBasis::grad(size_t p, const Vec& x) const {
  const Mode& m = modes_[p];
  Vec g = Vec::Zero(dim_);
  if (m.type == ModeType::Const) return g;
  double phase = 0.0;
  for (int i = 0; i < dim_; ++i) phase += m.k[i] * x[i];
  const double f = m.type == ModeType::Cos ? -std::sin(phase) : std::cos(phase);
  for (int i = 0; i < dim_; ++i) g[i] = m.k[i] * f;
  return g;
}

size_t RealTrigBasis::node_count() const {
  size_t n = 1;
  for (int i = 0; i < dim_; ++i) n *= static_cast<size_t>(nq_);
  return n;
}

Vec RealTrigBasis::node(size_t q) const {
  Vec x(dim_);
  for (int i = 0; i < dim_; ++i) {
    x[i] = kTwoPi * static_cast<double>(q % nq_) / nq_;
    q /= nq_;
  }
  return x;
}

double RealTrigBasis::node_weight() const {
  return 1.0 / static_cast<double>(node_count());
}

void RealTrigBasis::evaluate_on_nodes(const VecX& coeffs, VecX* values, MatX* gradients) const {
  const size_t n = node_count();
  if (values) values->setZero(static_cast<long>(n));
  if (gradients) gradients->setZero(dim_, static_cast<long>(n));
  for (size_t q = 0; q < n; ++q) {
    const Vec x = node(q);
    double v = 0.0;
    Vec g = Vec::Zero(dim_);
    for (size_t p = 0; p < modes_.size(); ++p) {
      const double c = coeffs[static_cast<long>(p)];
      if (c == 0.0) continue;
      if (values) v += c * value(p, x);
      if (gradients) g += c * grad(p, x);
    }
    if (values) (*values)[static_cast<long>(q)] = v;
    if (gradients) gradients->col(static_cast<long>(q)) = g;
  }
}

// ---------------------------------------------------------------------------
// Assembly through exact mode coupling.
//
// Complex representation of the real modes: 1 -> {0: 1},
// cos(k.x) -> {k: 1/2, -k: 1/2}, sin(k.x) -> {k: -i/2, -k: i/2}.
// For real trial/test functions the entry (1/2) avg((g D phi_q).D phi_p)
// expands over representative pairs (kp, kq) as
//   (1/2) conj(t_p) t_q kp^T ghat(kp - kq) kq,
// which is banded because ghat vanishes outside |m|_inf <= kmax.

namespace {

struct ComplexRep {
  int count;
  std::array<ModeIndex, 2> k;
  std::array<Complex, 2> t;
};

ComplexRep complex_rep(const RealTrigBasis::Mode& m, int dim) {
  ComplexRep r;
  if (m.type == RealTrigBasis::ModeType::Const) {
    r.count = 1;
    r.k[0] = ModeIndex{};
    r.t[0] = Complex(1.0, 0.0);
    return r;
  }
  r.count = 2;
  r.k[0] = m.k;
  r.k[1] = ModeIndex{};
  for (int i = 0; i < dim; ++i) r.k[1][i] = -m.k[i];
  if (m.type == RealTrigBasis::ModeType::Cos) {
    r.t[0] = Complex(0.5, 0.0);
    r.t[1] = Complex(0.5, 0.0);
  } else {
    r.t[0] = Complex(0.0, -0.5);
    r.t[1] = Complex(0.0, 0.5);
  }
  return r;
}

}  // namespace

MatX assemble_gradient_form(const MatrixFieldModes& g, const RealTrigBasis& basis) {
  const int dim = basis.dim();
  const size_t n = basis.size();
  MatX out = MatX::Zero(static_cast<long>(n), static_cast<long>(n));

  std::vector<ComplexRep> reps(n);
  for (size_t p = 0; p < n; ++p) reps[p] = complex_rep(basis.mode(p), dim);

  ModeIndex diff{};
  for (size_t p = 0; p < n; ++p) {
    if (basis.mode(p).type == RealTrigBasis::ModeType::Const) continue;
    for (size_t q = 0; q < n; ++q) {
      if (basis.mode(q).type == RealTrigBasis::ModeType::Const) continue;
      Complex acc(0.0, 0.0);
      bool touched = false;
      for (int ip = 0; ip < reps[p].count; ++ip) {
        for (int iq = 0; iq < reps[q].count; ++iq) {
          for (int i = 0; i < dim; ++i) diff[i] = reps[p].k[ip][i] - reps[q].k[iq][i];
          if (!g.in_band(diff)) continue;
          const MatXc& gh = g.coeff(diff);
          Complex quad(0.0, 0.0);
          for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
              quad += static_cast<double>(reps[p].k[ip][i]) *
                      static_cast<double>(reps[q].k[iq][j]) * gh(i, j);
          acc += std::conj(reps[p].t[ip]) * reps[q].t[iq] * quad;
          touched = true;
        }
      }
      if (touched) out(static_cast<long>(p), static_cast<long>(q)) = 0.5 * acc.real();
    }
  }
  return out;
}

VecX assemble_drift_rhs(const MatrixFieldModes& g, const RealTrigBasis& basis, int component) {
  const int dim = basis.dim();
  const size_t n = basis.size();
  VecX out = VecX::Zero(static_cast<long>(n));
  for (size_t p = 0; p < n; ++p) {
    if (basis.mode(p).type == RealTrigBasis::ModeType::Const) continue;
    const ComplexRep rep = complex_rep(basis.mode(p), dim);
    Complex acc(0.0, 0.0);
    for (int ip = 0; ip < rep.count; ++ip) {
      if (!g.in_band(rep.k[ip])) continue;
      const MatXc& gh = g.coeff(rep.k[ip]);
      Complex dot(0.0, 0.0);
      for (int j = 0; j < dim; ++j)
        dot += static_cast<double>(rep.k[ip][j]) * gh(j, component);
      acc += std::conj(rep.t[ip]) * Complex(0.0, 0.5) * dot;
    }
    out[static_cast<long>(p)] = acc.real();
  }
  return out;
}

VecX mass_diagonal(const RealTrigBasis& basis) {
  VecX d(static_cast<long>(basis.size()));
  for (size_t p = 0; p < basis.size(); ++p) d[static_cast<long>(p)] = basis.norm_sq(p);
  return d;
}

}  // namespace homlab
