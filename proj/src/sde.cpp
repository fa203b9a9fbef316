#include "homlab/sde.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "homlab/parallel.hpp"

namespace homlab {

namespace {

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::check() const {
  if (dim < 1 || dim > kMaxDim) throw InputDomainError("sim: unsupported dimension");
  if (!(horizon > 0.0)) throw InputDomainError("sim: horizon must be positive");
  if (!(dt0 > 0.0)) throw InputDomainError("sim: dt0 must be positive");
  if (!limit_mode && !(epsilon > 0.0)) throw InputDomainError("sim: epsilon must be positive");
  if (paths < 1) throw InputDomainError("sim: need at least one path");
  if (save_stride < 1) throw InputDomainError("sim: save stride must be >= 1");
  if (!(viscosity_n >= 1.0) && std::isfinite(viscosity_n))
    throw InputDomainError("sim: viscosity n must be >= 1 or infinite");
  if (!density_initial && x0.size() != dim)
    throw InputDomainError("sim: initial point has wrong dimension");
}

double SimConfig::effective_dt() const { return horizon / static_cast<double>(step_count()); }

long SimConfig::step_count() const {
  const double raw = limit_mode ? dt0 : dt0 * epsilon * epsilon;
  long n = static_cast<long>(std::llround(horizon / raw));
  return n < 1 ? 1 : n;
}

std::vector<long> SimConfig::save_steps() const {
  const long n = step_count();
  std::vector<long> s;
  for (long k = 0; k <= n; k += save_stride) s.push_back(k);
  if (s.back() != n) s.push_back(n);
  return s;
}

// ---------------------------------------------------------------------------
// TrajectoryEnsemble

long TrajectoryEnsemble::flagged_count() const {
  long n = 0;
  for (uint8_t f : flagged) n += f;
  return n;
}

void TrajectoryEnsemble::finalize_content_id() {
  uint64_t h = fnv1a(times.data(), times.size() * sizeof(double));
  h = fnv1a(states.data(), states.size() * sizeof(double), h);
  if (!flagged.empty()) h = fnv1a(flagged.data(), flagged.size(), h);
  content_id = h;
}

void TrajectoryEnsemble::write_binary(const std::string& path) const {
  nlohmann::json header;
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash));
  header["config_hash"] = hex;
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(content_id));
  header["content_id"] = hex;
  header["dim"] = dim;
  header["paths"] = paths;
  header["times"] = times;
  header["flagged"] = flagged;
  header["density_initial"] = density_initial;
  header["horizon"] = horizon;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw SimulationError("cannot open ensemble file for writing: " + path);
  out.write("HLE1", 4);
  const uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(states.data()),
            static_cast<std::streamsize>(states.size() * sizeof(double)));
}

TrajectoryEnsemble TrajectoryEnsemble::read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SimulationError("cannot open ensemble file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "HLE1", 4) != 0) throw SimulationError("bad ensemble file magic");
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header = nlohmann::json::parse(htext);

  TrajectoryEnsemble e;
  e.config_hash = std::stoull(header["config_hash"].get<std::string>(), nullptr, 16);
  e.content_id = std::stoull(header["content_id"].get<std::string>(), nullptr, 16);
  e.dim = header["dim"].get<int>();
  e.paths = header["paths"].get<long>();
  e.times = header["times"].get<std::vector<double>>();
  e.flagged = header["flagged"].get<std::vector<uint8_t>>();
  e.density_initial = header["density_initial"].get<bool>();
  e.horizon = header["horizon"].get<double>();
  e.states.resize(static_cast<size_t>(e.paths) * e.times.size() * static_cast<size_t>(e.dim));
  in.read(reinterpret_cast<char*>(e.states.data()),
          static_cast<std::streamsize>(e.states.size() * sizeof(double)));
  if (!in) throw SimulationError("truncated ensemble file: " + path);
  e.stream_ids.resize(static_cast<size_t>(e.paths));
  for (long p = 0; p < e.paths; ++p)
    e.stream_ids[static_cast<size_t>(p)] = rng_stream::for_path(static_cast<uint64_t>(p), 0);
  return e;
}

void TrajectoryEnsemble::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw SimulationError("cannot open csv for writing: " + path);
  out << "path_id,t";
  for (int i = 0; i < dim; ++i) out << ",x" << (i + 1);
  out << "\n";
  char buf[64];
  for (long p = 0; p < paths; ++p) {
    for (size_t t = 0; t < times.size(); ++t) {
      out << p;
      std::snprintf(buf, sizeof buf, ",%.17g", times[t]);
      out << buf;
      const double* s = state(p, t);
      for (int i = 0; i < dim; ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g", s[i]);
        out << buf;
      }
      out << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Initial conditions

std::vector<Vec> sample_initial(const Potential& potential, long count, uint64_t seed) {
  if (count < 1) throw InputDomainError("sample_initial: count must be >= 1");
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(count));
  for (long p = 0; p < count; ++p) {
    CounterRng rng(seed, rng_stream::for_path(static_cast<uint64_t>(p), rng_stream::kInitialDraw));
    out.push_back(potential.sample(rng, 0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// MicroStepper

MicroStepper::MicroStepper(const SimConfig& config, const Medium& medium, long path_id)
    : medium_(medium),
      config_(config),
      noise_(config.seed,
             rng_stream::for_path(static_cast<uint64_t>(path_id), rng_stream::kDrivingNoise)),
      visc_noise_(config.seed,
                  rng_stream::for_path(static_cast<uint64_t>(path_id),
                                       rng_stream::kViscosityNoise)) {
  dt_ = config.effective_dt();
  sqrt_dt_ = std::sqrt(dt_);
  eps_ = config.epsilon;
  steps_ = config.step_count();
  finite_n_ = std::isfinite(config.viscosity_n);
  visc_drift_ = finite_n_ ? 1.0 / config.viscosity_n : 0.0;
  visc_noise_coef_ = finite_n_ ? std::sqrt(2.0 / config.viscosity_n) : 0.0;

  if (config.density_initial) {
    CounterRng init(config.seed, rng_stream::for_path(static_cast<uint64_t>(path_id),
                                                      rng_stream::kInitialDraw));
    x_ = medium.potential().sample(init, 0);
  } else {
    x_ = config.x0;
  }
  b_ = Vec::Zero(config.dim);
  c_ = Vec::Zero(config.dim);
  sigma_ = Mat::Zero(config.dim, config.dim);
}

bool MicroStepper::step(long k) {
  if (blown_) return false;
  const int d = config_.dim;
  const Vec micro = x_ / eps_;
  medium_.drift_diffusion(micro, x_, b_, c_, sigma_);

  Vec dx = (b_ / eps_ + c_) * dt_;
  if (finite_n_) {
    dx -= visc_drift_ * medium_.potential().grad(x_) * dt_;
  }
  Vec xi(d);
  for (int i = 0; i < d; ++i) xi[i] = noise_.normal(static_cast<uint64_t>(k), i);
  dx += sigma_ * xi * sqrt_dt_;
  if (finite_n_) {
    for (int i = 0; i < d; ++i)
      dx[i] += visc_noise_coef_ * sqrt_dt_ * visc_noise_.normal(static_cast<uint64_t>(k), i);
  }
  x_ += dx;
  if (!x_.allFinite()) {
    blown_ = true;
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Simulators

namespace {

TrajectoryEnsemble make_empty_ensemble(const SimConfig& config) {
  TrajectoryEnsemble e;
  e.dim = config.dim;
  e.paths = config.paths;
  const double dt = config.effective_dt();
  for (long k : config.save_steps()) e.times.push_back(dt * static_cast<double>(k));
  e.states.assign(static_cast<size_t>(config.paths) * e.times.size() *
                      static_cast<size_t>(config.dim),
                  0.0);
  e.flagged.assign(static_cast<size_t>(config.paths), 0);
  e.stream_ids.resize(static_cast<size_t>(config.paths));
  for (long p = 0; p < config.paths; ++p)
    e.stream_ids[static_cast<size_t>(p)] =
        rng_stream::for_path(static_cast<uint64_t>(p), rng_stream::kDrivingNoise);
  e.density_initial = config.density_initial;
  e.horizon = config.horizon;
  e.config_hash = config.config_hash;
  return e;
}

void enforce_blowup_budget(const TrajectoryEnsemble& e) {
  const long bad = e.flagged_count();
  if (bad * 100 > e.paths)
    throw SimulationError("simulation failure: " + std::to_string(bad) + " of " +
                          std::to_string(e.paths) + " paths blew up");
}

TrajectoryEnsemble run_micro(const SimConfig& config, const Medium& medium, int threads) {
  config.check();
  if (medium.dim() != config.dim) throw InputDomainError("sim: medium dimension mismatch");
  TrajectoryEnsemble e = make_empty_ensemble(config);
  const std::vector<long> saves = config.save_steps();
  const long steps = config.step_count();

  parallel_for(config.paths, threads, [&](long p) {
    MicroStepper stepper(config, medium, p);
    size_t save_slot = 0;
    Vec frozen = stepper.state();
    for (long k = 0; k <= steps; ++k) {
      if (save_slot < saves.size() && saves[save_slot] == k) {
        const Vec& s = stepper.blown_up() ? frozen : stepper.state();
        double* dst = e.state(p, save_slot);
        for (int i = 0; i < config.dim; ++i) dst[i] = s[i];
        ++save_slot;
      }
      if (k < steps && !stepper.blown_up()) {
        if (!stepper.step(k)) {
          e.flagged[static_cast<size_t>(p)] = 1;
        } else {
          frozen = stepper.state();
        }
      }
    }
  });

  enforce_blowup_budget(e);
  e.finalize_content_id();
  return e;
}

}  // namespace

TrajectoryEnsemble simulate_xeps(const SimConfig& config, const Medium& medium, int threads) {
  SimConfig c = config;
  c.limit_mode = false;
  c.viscosity_n = std::numeric_limits<double>::infinity();
  return run_micro(c, medium, threads);
}

TrajectoryEnsemble simulate_xn(const SimConfig& config, const Medium& medium, int threads) {
  SimConfig c = config;
  c.limit_mode = false;
  return run_micro(c, medium, threads);
}

TrajectoryEnsemble simulate_limit(const SimConfig& config, const EffectiveTensors& tensors,
                                  int threads, const Potential* potential) {
  SimConfig c = config;
  c.limit_mode = true;
  c.viscosity_n = std::numeric_limits<double>::infinity();
  c.check();
  if (tensors.grid.dim != c.dim) throw InputDomainError("sim: tensor table dimension mismatch");
  if (c.density_initial && !potential)
    throw InputDomainError("sim: density initial condition needs the potential");

  TrajectoryEnsemble e = make_empty_ensemble(c);
  const std::vector<long> saves = c.save_steps();
  const long steps = c.step_count();
  const double dt = c.effective_dt();
  const double sqrt_dt = std::sqrt(dt);
  const int d = c.dim;
  const MatX q = tensors.geometry.complement_basis;  // d x (d - kdim)
  const bool reduced = tensors.geometry.kernel_dim > 0;

  parallel_for(c.paths, threads, [&](long p) {
    CounterRng noise(c.seed, rng_stream::for_path(static_cast<uint64_t>(p),
                                                  rng_stream::kDrivingNoise));
    Vec x;
    if (c.density_initial) {
      CounterRng init(c.seed, rng_stream::for_path(static_cast<uint64_t>(p),
                                                   rng_stream::kInitialDraw));
      x = potential->sample(init, 0);
    } else {
      x = c.x0;
    }
    size_t save_slot = 0;
    bool flagged = false;
    Vec frozen = x;
    for (long k = 0; k <= steps; ++k) {
      if (save_slot < saves.size() && saves[save_slot] == k) {
        const Vec& s = flagged ? frozen : x;
        double* dst = e.state(p, save_slot);
        for (int i = 0; i < d; ++i) dst[i] = s[i];
        ++save_slot;
      }
      if (k >= steps || flagged) continue;

      bool inside = true;
      const Mat a = tensors.interpolate_a(x, &inside);
      const Vec b = tensors.interpolate_b(x, nullptr);
      if (!inside) {
        flagged = true;
        e.flagged[static_cast<size_t>(p)] = 1;
        continue;
      }
      // Root the diffusion tensor inside the complement of the kernel so
      // the kernel directions receive exactly zero noise.
      Mat root;
      if (reduced && q.cols() == 0) {
        root = Mat::Zero(d, d);
      } else if (reduced) {
        const MatX small = q.transpose() * MatX(a) * q;
        Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (small + small.transpose()));
        VecX ev = es.eigenvalues();
        for (long i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
        root = Mat(q * es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose() *
                   q.transpose());
      } else {
        Eigen::SelfAdjointEigenSolver<MatX> es(MatX(0.5 * (a + Mat(a.transpose()))));
        VecX ev = es.eigenvalues();
        for (long i = 0; i < ev.size(); ++i) ev[i] = std::sqrt(std::max(ev[i], 0.0));
        root = Mat(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
      }
      Vec xi(d);
      for (int i = 0; i < d; ++i) xi[i] = noise.normal(static_cast<uint64_t>(k), i);
      x += b * dt + root * xi * sqrt_dt;
      if (!x.allFinite()) {
        flagged = true;
        e.flagged[static_cast<size_t>(p)] = 1;
      } else {
        frozen = x;
      }
    }
  });

  enforce_blowup_budget(e);
  e.finalize_content_id();
  return e;
}

}  // namespace homlab
