#include "twlab/evolve.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "twlab/error.hpp"

namespace twlab {

const char* stepper_name(Stepper s) {
  return s == Stepper::Rk4 ? "rk4" : "explicit-euler";
}

double EvolveConfig::dt_bound(const ReactionSystem& sys) {
  const double dmax = *std::max_element(sys.d.begin(), sys.d.end());
  return 0.2 / (4 * dmax + lipschitz_bound(sys));
}

EvolveConfig EvolveConfig::for_system(const ReactionSystem& sys, double t_end, int snapshot_every) {
  EvolveConfig cfg;
  cfg.dt = dt_bound(sys);
  cfg.t_end = t_end;
  cfg.snapshot_every = snapshot_every;
  return cfg;
}

void EvolveConfig::validate(const ReactionSystem& sys) const {
  if (!(dt > 0)) fail(ErrorCode::InvalidArgument, fmt::format("dt must be positive (got {})", dt));
  if (!(t_end >= 0) || !std::isfinite(t_end))
    fail(ErrorCode::InvalidArgument, fmt::format("t_end must be finite and >= 0 (got {})", t_end));
  if (snapshot_every < 1) fail(ErrorCode::InvalidArgument, "snapshot_every must be >= 1");
  const double bound = dt_bound(sys);
  // a hair of slack so that for_system's own dt always validates
  if (dt > bound * (1 + 1e-12))
    fail(ErrorCode::Parameter, fmt::format("dt = {} exceeds the explicit stability bound {:.6g}", dt, bound));
}

void ClipLedger::merge(const ClipLedger& o) {
  clipped += o.clipped;
  total += o.total;
  max = std::max(max, o.max);
  node_steps += o.node_steps;
}

namespace {

void check_state(const FieldState& s) {
  if (s.values.components() != s.K.size()) fail(ErrorCode::InvalidArgument, "state K has the wrong length");
  if (s.values.nodes() != s.grid.size()) fail(ErrorCode::InvalidArgument, "state values do not match the grid");
}

/// rhs into out; u is component-major with N nodes.
void rhs(const ReactionSystem& sys, const Grid& g, const Vec& K, const std::vector<double>& u,
         std::vector<double>& out) {
  const std::size_t n = sys.n();
  const std::size_t N = g.size();
  const std::size_t m = std::min(static_cast<std::size_t>(g.m), N);
  sys.kinetics->eval_nodes(u, N, out);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ui = u.data() + i * N;
    double* oi = out.data() + i * N;
    const double d = sys.d[i];
    // boundary reads: 0 on the left, K on the right
    for (std::size_t j = 0; j < N; ++j) {
      const double left = j >= m ? ui[j - m] : 0.0;
      const double right = j + m < N ? ui[j + m] : K[i];
      oi[j] += d * (right - 2.0 * ui[j] + left);
    }
  }
}

}  // namespace

Vec discrete_laplacian(const FieldState& s, std::size_t i) {
  check_state(s);
  if (i >= s.n()) fail(ErrorCode::InvalidArgument, fmt::format("component {} out of range", i));
  const std::size_t N = s.grid.size();
  const std::size_t m = static_cast<std::size_t>(s.grid.m);
  const auto u = s.values.component(i);
  Vec out(N);
  for (std::size_t j = 0; j < N; ++j) {
    const double left = j >= m ? u[j - m] : 0.0;
    const double right = j + m < N ? u[j + m] : s.K[i];
    out[j] = right - 2.0 * u[j] + left;
  }
  return out;
}

Field evolution_rhs(const ReactionSystem& sys, const FieldState& s) {
  check_state(s);
  Field out(s.n(), s.grid.size());
  rhs(sys, s.grid, s.K, s.values.raw(), out.raw());
  return out;
}

namespace {

/// Clips to [0, K] and throws on blow-up or overshoot beyond tolerance.
void settle(const FieldState& s, std::vector<double>& u, double t, ClipLedger& clip) {
  const std::size_t N = s.grid.size();
  for (std::size_t i = 0; i < s.n(); ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      double& v = u[i * N + j];
      if (!std::isfinite(v))
        fail(ErrorCode::BlowUp,
             fmt::format("component {} at x = {} became non-finite at t = {:.6g}", i + 1, s.grid.x(j), t));
      double over = 0;
      if (v < 0) over = -v;
      else if (v > s.K[i]) over = v - s.K[i];
      if (over == 0) continue;
      if (over > ClipLedger::clip_tolerance)
        fail(ErrorCode::Range, fmt::format("component {} at x = {} left [0, K] by {:.3e} at t = {:.6g}", i + 1,
                                           s.grid.x(j), over, t));
      v = std::clamp(v, 0.0, s.K[i]);
      ++clip.clipped;
      clip.total += over;
      clip.max = std::max(clip.max, over);
    }
  }
  clip.node_steps += static_cast<double>(N * s.n());
}

FieldState advance(const ReactionSystem& sys, const FieldState& s, double dt, Stepper stepper, ClipLedger& clip) {
  const std::size_t size = s.values.raw().size();
  const auto& u = s.values.raw();
  FieldState next = s;
  auto& out = next.values.raw();
  std::vector<double> k1(size);
  rhs(sys, s.grid, s.K, u, k1);
  if (stepper == Stepper::ExplicitEuler) {
    for (std::size_t q = 0; q < size; ++q) out[q] = u[q] + dt * k1[q];
  } else {
    std::vector<double> k2(size), k3(size), k4(size), tmp(size);
    for (std::size_t q = 0; q < size; ++q) tmp[q] = u[q] + 0.5 * dt * k1[q];
    rhs(sys, s.grid, s.K, tmp, k2);
    for (std::size_t q = 0; q < size; ++q) tmp[q] = u[q] + 0.5 * dt * k2[q];
    rhs(sys, s.grid, s.K, tmp, k3);
    for (std::size_t q = 0; q < size; ++q) tmp[q] = u[q] + dt * k3[q];
    rhs(sys, s.grid, s.K, tmp, k4);
    for (std::size_t q = 0; q < size; ++q) out[q] = u[q] + dt / 6.0 * (k1[q] + 2.0 * (k2[q] + k3[q]) + k4[q]);
  }
  next.t = s.t + dt;
  settle(next, out, next.t, clip);
  return next;
}

std::size_t step_count(const EvolveConfig& cfg) {
  if (cfg.t_end == 0) return 0;
  return static_cast<std::size_t>(std::ceil(cfg.t_end / cfg.dt - 1e-9));
}

}  // namespace

FieldState step(const ReactionSystem& sys, const FieldState& state, const EvolveConfig& cfg, ClipLedger* clip) {
  check_state(state);
  if (state.n() != sys.n()) fail(ErrorCode::InvalidArgument, "state and system dimensions differ");
  if (!(cfg.dt > 0)) fail(ErrorCode::InvalidArgument, "dt must be positive");
  ClipLedger local;
  FieldState next = advance(sys, state, cfg.dt, cfg.stepper, local);
  if (clip) clip->merge(local);
  return next;
}

EvolveRun integrate(const ReactionSystem& sys, const FieldState& state0, const EvolveConfig& cfg,
                    const SnapshotSink& sink) {
  cfg.validate(sys);
  check_state(state0);
  if (state0.n() != sys.n()) fail(ErrorCode::InvalidArgument, "state and system dimensions differ");
  EvolveRun run;
  run.steps = step_count(cfg);
  run.dt = run.steps ? cfg.t_end / static_cast<double>(run.steps) : cfg.dt;
  auto emit = [&](const FieldState& s) {
    if (sink) sink(s);
    else run.snapshots.push_back(s);
  };
  emit(state0);
  FieldState s = state0;
  for (std::size_t k = 1; k <= run.steps; ++k) {
    s = advance(sys, s, run.dt, cfg.stepper, run.clip);
    s.t = k == run.steps ? state0.t + cfg.t_end : state0.t + static_cast<double>(k) * run.dt;
    if (k % static_cast<std::size_t>(cfg.snapshot_every) == 0 || k == run.steps) emit(s);
  }
  return run;
}

ComparisonResult comparison_harness(const ReactionSystem& sys, const FieldState& lower0, const FieldState& upper0,
                                    const EvolveConfig& cfg) {
  cfg.validate(sys);
  check_state(lower0);
  check_state(upper0);
  if (!lower0.grid.same_geometry(upper0.grid)) fail(ErrorCode::InvalidArgument, "comparison states differ in grid");
  ComparisonResult res;
  auto track = [&](const FieldState& lo, const FieldState& up) {
    const auto& a = lo.values.raw();
    const auto& b = up.values.raw();
    for (std::size_t q = 0; q < a.size(); ++q) {
      const double v = a[q] - b[q];
      if (v > res.max_violation) {
        res.max_violation = v;
        res.worst_t = lo.t;
      }
    }
  };
  FieldState lo = lower0, up = upper0;
  track(lo, up);
  const std::size_t steps = step_count(cfg);
  const double dt = steps ? cfg.t_end / static_cast<double>(steps) : cfg.dt;
  for (std::size_t k = 1; k <= steps; ++k) {
    lo = advance(sys, lo, dt, cfg.stepper, res.clip);
    up = advance(sys, up, dt, cfg.stepper, res.clip);
    track(lo, up);
  }
  res.steps = steps;
  return res;
}

SqueezeSplit squeeze_split(const FieldState& v0, const FieldState& front0) {
  if (!v0.grid.same_geometry(front0.grid) || v0.n() != front0.n())
    fail(ErrorCode::InvalidArgument, "squeeze split needs matching states");
  SqueezeSplit sp{v0, v0};
  const auto& a = v0.values.raw();
  const auto& b = front0.values.raw();
  for (std::size_t q = 0; q < a.size(); ++q) {
    sp.lower.values.raw()[q] = std::min(a[q], b[q]);
    sp.upper.values.raw()[q] = std::max(a[q], b[q]);
  }
  return sp;
}

// ---------------------------------------------------------------------------
// Initial data

const char* bump_kind_name(BumpKind k) {
  return k == BumpKind::Gaussian ? "gaussian" : "cosine";
}

double Bump::operator()(double x0, double x) const {
  const double z = (x - x0) / width;
  if (kind == BumpKind::Gaussian) return amplitude * std::exp(-z * z);
  if (std::abs(z) >= 1) return 0.0;
  const double c = std::cos(0.5 * std::numbers::pi * z);
  return amplitude * c * c;
}

Grid evolution_grid(const WaveProfile& p, double t_end, const DomainMargins& mg) {
  if (!(t_end >= 0)) fail(ErrorCode::InvalidArgument, "t_end must be >= 0");
  double right = 0;
  if (p.tail.rho > 0) {
    double gap = 0;
    for (std::size_t i = 0; i < p.n(); ++i)
      gap = std::max(gap, std::abs(p.K[i] - p.values(i, p.values.nodes() - 1)));
    if (gap > mg.right_tol) right = std::min(mg.right_max, std::log(gap / mg.right_tol) / p.tail.rho);
  }
  double left = mg.left_min;
  if (p.tail.lambda > 0) left = std::max(left, std::log(1 / mg.left_tol) / (2 * p.tail.lambda));
  const int m = p.grid.m;
  Grid g;
  g.m = m;
  g.first = p.grid.first - static_cast<std::int64_t>(std::ceil((p.c * t_end + left) * m));
  g.last = p.grid.last + static_cast<std::int64_t>(std::ceil(right * m));
  return g;
}

InitialData make_initial_data(const WaveProfile& p, const Perturbation& pert, const Grid& grid) {
  if (grid.m != p.grid.m) fail(ErrorCode::InvalidArgument, "initial-data grid must share m with the profile");
  for (const auto& b : pert.bumps) {
    if (!(b.width > 0)) fail(ErrorCode::InvalidArgument, "bump width must be positive");
    if (!std::isfinite(b.amplitude)) fail(ErrorCode::InvalidArgument, "bump amplitude must be finite");
  }
  const std::size_t n = p.n(), N = grid.size();
  InitialData out;
  FieldState& s = out.state;
  s.grid = grid;
  s.t = 0;
  s.K = p.K;
  s.values = Field(n, N);
  const double mid = p.xi(p.midpoint_node());
  const Weight w(p.spectral.gamma, p.spectral.xi0);
  const double h = grid.h();
  for (std::size_t i = 0; i < n; ++i) {
    double prev = 0;
    for (std::size_t j = 0; j < N; ++j) {
      const std::int64_t k = grid.first + static_cast<std::int64_t>(j);
      const double x = grid.x(j);
      double dv = 0;
      for (const auto& b : pert.bumps) dv += b(b.center_at_front ? mid : b.center, x);
      const double v = p.extended(i, k) + dv;
      if (!(v >= 0) || !(v <= p.K[i]))
        fail(ErrorCode::Range,
             fmt::format("initial value {:.6g} of component {} at x = {} is outside [0, {}]", v, i + 1, x, p.K[i]));
      s.values(i, j) = v;
      const double wt = (j == 0 || j + 1 == N) ? 0.5 : 1.0;
      out.weighted_l1 += wt * h * w.omega1(x) * std::abs(dv);
      out.h1 += wt * h * dv * dv;
      if (j > 0) out.h1 += h * ((dv - prev) / h) * ((dv - prev) / h);
      out.max_abs = std::max(out.max_abs, std::abs(dv));
      prev = dv;
    }
  }
  out.h1 = std::sqrt(out.h1);
  if (!std::isfinite(out.weighted_l1) || !std::isfinite(out.h1))
    fail(ErrorCode::Range, "perturbation has no finite weighted-L1 / H1 proxy");
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot streams

namespace {

constexpr char kMagic[8] = {'T', 'W', 'S', 'N', 'A', 'P', 'B', '\0'};
constexpr std::uint32_t kBinaryVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(ErrorCode::Io, fmt::format("{}: truncated snapshot", path));
  return v;
}

}  // namespace

void write_snapshot_text(const FieldState& s, const std::string& path) {
  check_state(s);
  std::ofstream os(path);
  if (!os) fail(ErrorCode::Io, fmt::format("cannot open {} for writing", path));
  os << "# twlab-snapshot 1\n";
  os << fmt::format("# t = {:.17g}\n# n = {}\n# m = {}\n# first = {}\n# last = {}\n# K =", s.t, s.n(), s.grid.m,
                    s.grid.first, s.grid.last);
  for (double k : s.K) os << fmt::format(" {:.17g}", k);
  os << "\nx";
  for (std::size_t i = 0; i < s.n(); ++i) os << ",v" << i + 1;
  os << "\n";
  for (std::size_t j = 0; j < s.grid.size(); ++j) {
    std::string row = fmt::format("{:.17g}", s.grid.x(j));
    for (std::size_t i = 0; i < s.n(); ++i) row += fmt::format(",{:.17g}", s.values(i, j));
    os << row << "\n";
  }
  if (!os) fail(ErrorCode::Io, fmt::format("write to {} failed", path));
}

FieldState read_snapshot_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, fmt::format("cannot open {}", path));
  std::string line;
  std::getline(is, line);
  if (line != "# twlab-snapshot 1") fail(ErrorCode::Io, fmt::format("{}: not a text snapshot", path));
  FieldState s;
  std::size_t n = 0;
  while (std::getline(is, line) && line.rfind("# ", 0) == 0) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(2, eq - 2);
    std::istringstream vs(line.substr(eq + 3));
    if (key == "t") vs >> s.t;
    else if (key == "n") vs >> n;
    else if (key == "m") vs >> s.grid.m;
    else if (key == "first") vs >> s.grid.first;
    else if (key == "last") vs >> s.grid.last;
    else if (key == "K") {
      double k;
      while (vs >> k) s.K.push_back(k);
    }
  }
  if (n == 0 || s.K.size() != n || s.grid.last < s.grid.first)
    fail(ErrorCode::Io, fmt::format("{}: incomplete snapshot header", path));
  s.values = Field(n, s.grid.size());
  std::size_t j = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (j >= s.grid.size()) fail(ErrorCode::Io, fmt::format("{}: too many rows", path));
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream rs(line);
    double x;
    rs >> x;
    for (std::size_t i = 0; i < n; ++i)
      if (!(rs >> s.values(i, j))) fail(ErrorCode::Io, fmt::format("{}: short row {}", path, j + 1));
    ++j;
  }
  if (j != s.grid.size()) fail(ErrorCode::Io, fmt::format("{}: expected {} rows, found {}", path, s.grid.size(), j));
  return s;
}

void write_snapshot_binary(const FieldState& s, const std::string& path) {
  check_state(s);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, fmt::format("cannot open {} for writing", path));
  os.write(kMagic, sizeof kMagic);
  put(os, kBinaryVersion);
  put(os, static_cast<std::uint32_t>(s.n()));
  put(os, static_cast<std::int64_t>(s.grid.m));
  put(os, s.grid.first);
  put(os, s.grid.last);
  put(os, s.t);
  for (double k : s.K) put(os, k);
  // node-major rows: v_1..v_n per node
  for (std::size_t j = 0; j < s.grid.size(); ++j)
    for (std::size_t i = 0; i < s.n(); ++i) put(os, s.values(i, j));
  if (!os) fail(ErrorCode::Io, fmt::format("write to {} failed", path));
}

FieldState read_snapshot_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, fmt::format("cannot open {}", path));
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    fail(ErrorCode::Io, fmt::format("{}: not a binary snapshot", path));
  const auto version = get<std::uint32_t>(is, path);
  if (version != kBinaryVersion) fail(ErrorCode::Io, fmt::format("{}: unsupported snapshot version {}", path, version));
  const auto n = get<std::uint32_t>(is, path);
  FieldState s;
  s.grid.m = static_cast<int>(get<std::int64_t>(is, path));
  s.grid.first = get<std::int64_t>(is, path);
  s.grid.last = get<std::int64_t>(is, path);
  s.t = get<double>(is, path);
  if (n == 0 || s.grid.m < 1 || s.grid.last < s.grid.first)
    fail(ErrorCode::Io, fmt::format("{}: corrupt snapshot header", path));
  for (std::uint32_t i = 0; i < n; ++i) s.K.push_back(get<double>(is, path));
  s.values = Field(n, s.grid.size());
  for (std::size_t j = 0; j < s.grid.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) s.values(i, j) = get<double>(is, path);
  return s;
}

}  // namespace twlab
