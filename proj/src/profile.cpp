#include "twlab/profile.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "twlab/error.hpp"

namespace twlab {

Grid ProfileGrid::grid() const {
  if (m < 1) fail(ErrorCode::InvalidArgument, fmt::format("profile grid needs m >= 1 (got {})", m));
  if (!(L >= 10)) fail(ErrorCode::InvalidArgument, fmt::format("profile half width L = {} must be >= 10", L));
  return Grid::symmetric(m, L);
}

double TailModel::left(std::size_t i, double xi) const {
  const double e = std::exp(lambda * (xi - anchor));
  double v = chi.empty() ? eta[i] * e : (eta[i] + chi[i] * e) * e;
  if (!b.empty()) v += b[i] * std::exp(lambda2 * (xi - anchor));
  return v;
}

double WaveProfile::extended(std::size_t i, std::int64_t k) const {
  if (k < grid.first) return tail.left(i, static_cast<double>(k) / grid.m);
  if (k > grid.last) {
    const double edge = values(i, values.nodes() - 1);
    if (!(tail.rho > 0)) return K[i];
    return K[i] - (K[i] - edge) * std::exp(-tail.rho * static_cast<double>(k - grid.last) / grid.m);
  }
  return values(i, static_cast<std::size_t>(k - grid.first));
}

std::size_t WaveProfile::midpoint_node() const {
  for (std::size_t j = 0; j < values.nodes(); ++j)
    if (values(0, j) >= 0.5 * K[0]) return j;
  return values.nodes() - 1;
}

namespace {

/// Evaluates d D[u] + f(u) - c u' at xi for an analytic profile u.
template <class U, class DU>
void profile_operator(const ReactionSystem& sys, double c, double xi, U&& u, DU&& du, Vec& out, Vec& state) {
  const std::size_t n = sys.n();
  for (std::size_t i = 0; i < n; ++i) state[i] = u(i, xi);
  sys.f(state, out);
  for (std::size_t i = 0; i < n; ++i)
    out[i] += sys.d[i] * (u(i, xi + 1.0) - 2.0 * state[i] + u(i, xi - 1.0)) - c * du(i, xi);
}

/// sign = +1 checks op <= tol, sign = -1 checks op >= -tol.
template <class U, class DU>
InequalityCheck check_inequality(const ReactionSystem& sys, double c, const Grid& grid, const Vec& kinks, double sign,
                                 U&& u, DU&& du) {
  constexpr double tol = 1e-9;
  InequalityCheck chk;
  Vec out(sys.n()), state(sys.n());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double xi = grid.x(j);
    bool near = false;
    for (double k : kinks) near = near || std::abs(xi - k) <= grid.h() * (1 + 1e-9);
    if (near) {
      ++chk.excluded;
      continue;
    }
    ++chk.checked;
    profile_operator(sys, c, xi, u, du, out, state);
    bool bad = false;
    for (std::size_t i = 0; i < sys.n(); ++i) {
      const double v = sign * out[i];
      if (v > tol) bad = true;
      if (v > chk.worst) {
        chk.worst = v;
        chk.worst_xi = xi;
        chk.worst_component = i;
      }
    }
    chk.failing += bad;
  }
  return chk;
}

/// tau^3 (e^x - 1 - x - x^2/2) * 6 / x^3 with x = mu tau; reduces to tau^3 as mu -> 0.
double fitted_cubic(double tau, double mu) {
  const double x = mu * tau;
  double r;
  if (std::abs(x) < 1.0) {
    double term = 1.0;
    r = 0.0;
    for (int k = 3; k < 25; ++k) {
      term = (k == 3) ? 1.0 / 6.0 : term * x / k;
      r += term;
    }
    r *= 6.0;
  } else {
    r = 6.0 * (std::exp(x) - 1.0 - x - 0.5 * x * x) / (x * x * x);
  }
  return tau * tau * tau * r;
}

/// Weights for nodes tau = -1, 0, 1, 2 of the integral over [0, 1] of
/// e^{-a (1 - tau)} H(tau), exact for H in span{1, tau, tau^2, e^{mu tau}}.
/// With mu = 0 this is the exact integral of the cubic interpolant.
std::array<double, 4> exponential_weights(double a, double mu) {
  static constexpr std::array<double, 10> x = {
      -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472, -0.1488743389816312,
      0.1488743389816312,  0.4333953941292472,  0.6794095682990244,  0.8650633666889845,  0.9739065285171717};
  static constexpr std::array<double, 10> w = {
      0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963, 0.2955242247147529,
      0.2955242247147529, 0.2692667193099963, 0.2190863625159820, 0.1494513491505806, 0.0666713443086881};
  auto basis = [&](int b, double t) {
    switch (b) {
      case 0: return 1.0;
      case 1: return t;
      case 2: return t * t;
      default: return fitted_cubic(t, mu);
    }
  };
  Eigen::Matrix4d V;
  Eigen::Vector4d moments = Eigen::Vector4d::Zero();
  for (int b = 0; b < 4; ++b) {
    for (int k = 0; k < 4; ++k) V(b, k) = basis(b, k - 1.0);
    for (int q = 0; q < 10; ++q) {
      const double t = 0.5 * (x[q] + 1.0);
      moments(b) += 0.5 * w[q] * std::exp(-a * (1.0 - t)) * basis(b, t);
    }
  }
  const Eigen::Vector4d wt = V.fullPivLu().solve(moments);
  return {wt(0), wt(1), wt(2), wt(3)};
}

/// Two-node analogue on tau = 0, 1, exact for span{1, e^{mu tau}}. Both
/// weights are positive.
std::array<double, 2> fitted_linear_weights(double a, double mu) {
  auto g = [&](double t) { return std::abs(mu) < 1e-12 ? t : std::expm1(mu * t) / mu; };
  // moments of 1 and g against the kernel, by the same 10-point rule
  static constexpr std::array<double, 5> x = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                               0.8650633666889845, 0.9739065285171717};
  static constexpr std::array<double, 5> w = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                               0.1494513491505806, 0.0666713443086881};
  double m0 = 0, m1 = 0;
  for (int q = 0; q < 5; ++q)
    for (double sgn : {-1.0, 1.0}) {
      const double t = 0.5 * (sgn * x[q] + 1.0);
      const double k = 0.5 * w[q] * std::exp(-a * (1.0 - t));
      m0 += k;
      m1 += k * g(t);
    }
  // H(tau) = H0 + (H1 - H0) g(tau) / g(1)
  const double w1 = m1 / g(1.0);
  return {m0 - w1, w1};
}

}  // namespace

Field build_supersolution(const ReactionSystem& sys, const SpectralReport& spec, const Grid& grid, double anchor,
                          InequalityCheck* check) {
  const std::size_t n = sys.n();
  for (double e : spec.eta)
    if (!(e > 0)) fail(ErrorCode::ConstructionInvalid, "kernel vector must be positive");
  const double l1 = spec.lambda1;
  auto u = [&](std::size_t i, double xi) { return std::min(sys.K[i], spec.eta[i] * std::exp(l1 * (xi - anchor))); };
  auto du = [&](std::size_t i, double xi) {
    const double e = spec.eta[i] * std::exp(l1 * (xi - anchor));
    return e < sys.K[i] ? l1 * e : 0.0;
  };
  Vec kinks(n);
  for (std::size_t i = 0; i < n; ++i) kinks[i] = anchor + std::log(sys.K[i] / spec.eta[i]) / l1;
  const auto chk = check_inequality(sys, spec.c, grid, kinks, +1.0, u, du);
  if (chk.failing > 0)
    fail(ErrorCode::ConstructionInvalid,
         fmt::format("supersolution inequality fails at {} nodes; worst {:.3e} at xi = {} (component {})",
                     chk.failing, chk.worst, chk.worst_xi, chk.worst_component + 1));
  if (check) *check = chk;
  Field f(n, grid.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < grid.size(); ++j) f(i, j) = u(i, grid.x(j));
  return f;
}

Subsolution build_subsolution(const ReactionSystem& sys, const SpectralReport& spec, const Grid& grid, double anchor,
                              std::optional<double> eps_prime) {
  const std::size_t n = sys.n();
  const double l1 = spec.lambda1, gap = spec.lambda2 - spec.lambda1;
  const double ep = eps_prime.value_or(0.5 * std::min(spec.epsilon, 0.5 * gap));
  if (!(ep > 0 && ep < std::min(spec.epsilon, gap)))
    fail(ErrorCode::Parameter,
         fmt::format("subsolution exponent eps' = {} outside (0, {})", ep, std::min(spec.epsilon, gap)));
  const CharParams p = spec.params();
  const Eigen::MatrixXd J = char_matrix(l1 + ep, spec.c, p);
  const Eigen::VectorXd eta = Eigen::Map<const Eigen::VectorXd>(spec.eta.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd Jeta = J * eta;
  for (std::size_t i = 0; i < n; ++i)
    if (!(Jeta(i) < 0))
      fail(ErrorCode::ConstructionInvalid,
           fmt::format("J(lambda1 + eps') eta has nonnegative entry {} = {}", i + 1, Jeta(i)));

  Subsolution out;
  out.eps_prime = ep;
  for (int power = 0; power <= 20; ++power) {
    const double M = std::ldexp(1.0, power);
    auto u = [&](std::size_t i, double xi) {
      const double s = xi - anchor;
      return std::max(0.0, spec.eta[i] * std::exp(l1 * s) * (1.0 - M * std::exp(ep * s)));
    };
    auto du = [&](std::size_t i, double xi) {
      const double s = xi - anchor;
      if (1.0 - M * std::exp(ep * s) <= 0) return 0.0;
      return spec.eta[i] * std::exp(l1 * s) * (l1 - M * (l1 + ep) * std::exp(ep * s));
    };
    const Vec kinks{anchor - std::log(M) / ep};
    auto chk = check_inequality(sys, spec.c, grid, kinks, -1.0, u, du);
    if (chk.failing > 0) continue;
    out.M = M;
    out.check = chk;
    out.values = Field(n, grid.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < grid.size(); ++j) out.values(i, j) = u(i, grid.x(j));
    return out;
  }
  fail(ErrorCode::ConstructionInvalid, "no M <= 2^20 makes the subsolution inequality hold");
}

SuperSubPair make_super_sub_pair(const ReactionSystem& sys, const SpectralReport& spec, const Grid& grid,
                                 double anchor, std::optional<double> eps_prime) {
  SuperSubPair pair;
  pair.anchor = anchor;
  pair.upper = build_supersolution(sys, spec, grid, anchor, &pair.upper_check);
  auto sub = build_subsolution(sys, spec, grid, anchor, eps_prime);
  pair.lower = std::move(sub.values);
  pair.M = sub.M;
  pair.eps_prime = sub.eps_prime;
  pair.lower_check = sub.check;
  for (std::size_t k = 0; k < pair.upper.raw().size(); ++k)
    if (pair.lower.raw()[k] > pair.upper.raw()[k])
      fail(ErrorCode::ConstructionInvalid, "subsolution exceeds supersolution");
  return pair;
}

double default_beta(const ReactionSystem& sys) {
  const Vec slope = diagonal_slope_bound(sys);
  double beta = 0;
  for (std::size_t i = 0; i < sys.n(); ++i) beta = std::max(beta, 2 * sys.d[i] + slope[i]);
  return beta + 1.0;
}

Field monotone_iterate(const ReactionSystem& sys, double c, const SuperSubPair& pair, const TailModel& tail,
                       const Grid& grid, double beta, double tol, int max_iter, MonotoneLog* log) {
  const std::size_t n = sys.n();
  const std::size_t N = grid.size();
  const int m = grid.m;
  if (!(c > 0)) fail(ErrorCode::InvalidArgument, "wave speed must be positive");
  if (N < 4) fail(ErrorCode::Domain, "profile grid too small");
  const double h = grid.h();
  const double a = beta * h / c;
  const double decay = std::exp(-a);
  // Fitting the left-tail exponential keeps the discrete decay rate equal to
  // lambda1, so the pinned tail does not drift with L.
  auto w = exponential_weights(a, tail.lambda * h);
  for (double& v : w) v *= h / c;
  // The supersolution has kinks where the cubic rule overshoots, and on the
  // linear part of the tail its inequality holds with no slack. The first
  // sweep uses the positive two-node rule instead.
  auto w2 = fitted_linear_weights(a, tail.lambda * h);
  for (double& v : w2) v *= h / c;

  MonotoneLog lg;
  lg.beta = beta;
  lg.min_gap_lower = std::numeric_limits<double>::infinity();
  lg.max_gap_upper = -std::numeric_limits<double>::infinity();

  Field phi = pair.upper;
  Field next(n, N);
  // H at node indices first-1 .. last+1, stored with offset 1.
  Field H(n, N + 2);
  Vec state(n), fv(n);

  auto value = [&](std::size_t i, std::int64_t k) -> double {
    if (k < 0) return tail.left(i, static_cast<double>(grid.first + k) / m);
    if (k >= static_cast<std::int64_t>(N)) {
      const double edge = phi(i, N - 1);
      if (!(tail.rho > 0)) return sys.K[i];
      return sys.K[i] - (sys.K[i] - edge) * std::exp(-tail.rho * static_cast<double>(k - (N - 1)) / m);
    }
    return phi(i, static_cast<std::size_t>(k));
  };

  for (int it = 1; it <= max_iter; ++it) {
    for (std::int64_t k = -1; k <= static_cast<std::int64_t>(N); ++k) {
      for (std::size_t i = 0; i < n; ++i) state[i] = value(i, k);
      sys.f(state, fv);
      for (std::size_t i = 0; i < n; ++i)
        H(i, static_cast<std::size_t>(k + 1)) =
            sys.d[i] * (value(i, k + m) + value(i, k - m)) + (beta - 2 * sys.d[i]) * state[i] + fv[i];
    }
    double delta = 0, increase = -std::numeric_limits<double>::infinity();
    std::size_t worst_i = 0, worst_j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double T = tail.left(i, grid.x(0));
      next(i, 0) = T;
      for (std::size_t j = 1; j < N; ++j) {
        // H index of node j-2 is j-1 after the offset.
        if (it == 1) T = decay * T + w2[0] * H(i, j) + w2[1] * H(i, j + 1);
        else T = decay * T + w[0] * H(i, j - 1) + w[1] * H(i, j) + w[2] * H(i, j + 1) + w[3] * H(i, j + 2);
        next(i, j) = T;
      }
      for (std::size_t j = 0; j < N; ++j) {
        const double d = next(i, j) - phi(i, j);
        delta = std::max(delta, std::abs(d));
        if (d > increase) {
          increase = d;
          worst_i = i;
          worst_j = j;
        }
        lg.min_gap_lower = std::min(lg.min_gap_lower, next(i, j) - pair.lower(i, j));
        lg.max_gap_upper = std::max(lg.max_gap_upper, next(i, j) - pair.upper(i, j));
      }
    }
    if (!std::isfinite(delta)) fail(ErrorCode::Convergence, fmt::format("iterate {} is not finite", it));
    lg.max_increase = std::max(lg.max_increase, increase);
    lg.deltas.push_back(delta);
    lg.iterations = it;
    if (increase > 1e-10)
      fail(ErrorCode::MonotonicityBreach, fmt::format("iterate {} increased by {:.3e} (component {}, xi = {})", it,
                                                      increase, worst_i + 1, grid.x(worst_j)));
    if (lg.min_gap_lower < -1e-10)
      fail(ErrorCode::MonotonicityBreach,
           fmt::format("iterate {} fell below the subsolution by {:.3e}", it, -lg.min_gap_lower));
    if (lg.max_gap_upper > 1e-10)
      fail(ErrorCode::MonotonicityBreach,
           fmt::format("iterate {} rose above the supersolution by {:.3e}", it, lg.max_gap_upper));
    std::swap(phi, next);
    if (delta <= tol) {
      lg.converged = true;
      break;
    }
  }
  if (log) *log = lg;
  if (!lg.converged)
    fail(ErrorCode::Convergence,
         fmt::format("monotone iteration did not reach tol {} in {} iterations (last delta {:.3e})", tol, max_iter,
                     lg.deltas.empty() ? 0.0 : lg.deltas.back()));
  return phi;
}

ResidualReport profile_residual(const ReactionSystem& sys, const WaveProfile& p) {
  const int m = p.grid.m;
  if (m < 4) fail(ErrorCode::Domain, fmt::format("residual needs m >= 4 (got {})", m));
  const std::size_t N = p.values.nodes();
  if (N < static_cast<std::size_t>(2 * m + 1)) fail(ErrorCode::Domain, "profile grid shorter than two units");
  const std::size_t n = p.n();
  const double h = p.grid.h();
  ResidualReport r;
  Vec state(n), fv(n);
  for (std::size_t j = m; j + m < N; ++j) {
    for (std::size_t i = 0; i < n; ++i) state[i] = p.values(i, j);
    sys.f(state, fv);
    ++r.nodes;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = p.values;
      const double dphi = (v(i, j - 2) - 8 * v(i, j - 1) + 8 * v(i, j + 1) - v(i, j + 2)) / (12 * h);
      const double lap = v(i, j + m) - 2 * v(i, j) + v(i, j - m);
      const double res = std::abs(p.c * dphi - sys.d[i] * lap - fv[i]);
      if (res > r.max) {
        r.max = res;
        r.xi = p.xi(j);
        r.component = i;
      }
    }
  }
  return r;
}

BoundaryVerdict check_boundary_limits(const WaveProfile& p, double tail_fraction, double tol) {
  if (!(tail_fraction > 0 && tail_fraction < 0.25))
    fail(ErrorCode::InvalidArgument, fmt::format("tail fraction {} outside (0, 0.25)", tail_fraction));
  const std::size_t N = p.values.nodes();
  const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(tail_fraction * N));
  BoundaryVerdict v;
  for (std::size_t i = 0; i < p.n(); ++i)
    for (std::size_t k = 0; k < w; ++k) {
      v.left_worst = std::max(v.left_worst, std::abs(p.values(i, k)));
      v.right_worst = std::max(v.right_worst, std::abs(p.values(i, N - 1 - k) - p.K[i]));
    }
  v.left_ok = v.left_worst <= tol;
  v.right_ok = v.right_worst <= tol;
  v.pass = v.left_ok && v.right_ok;
  return v;
}

double select_xi0(const ReactionSystem& sys, const WaveProfile& p) {
  const std::size_t n = p.n(), N = p.values.nodes();
  Vec state(n);
  std::int64_t last_bad = -1;
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t i = 0; i < n; ++i) state[i] = p.values(i, j);
    const Eigen::MatrixXd A = sys.jacobian(state);
    bool ok = true;
    for (std::size_t col = 0; col < n && ok; ++col) {
      ok = -A.col(col).sum() > 0;
      double cross = 2 * A(col, col);
      for (std::size_t k = 0; k < n; ++k)
        if (k != col) cross += A(col, k) + A(k, col);
      ok = ok && -cross > 0;
    }
    if (!ok) last_bad = static_cast<std::int64_t>(j);
  }
  if (last_bad == static_cast<std::int64_t>(N) - 1)
    fail(ErrorCode::Parameter, "weight combinations are not positive at the right end of the profile");
  return p.xi(static_cast<std::size_t>(last_bad + 1)) + 1.0;
}

Vec tail_correction(const ReactionSystem& sys, const SpectralReport& spec) {
  const std::size_t n = sys.n();
  const Vec H = sys.hessian(Vec(n, 0.0));
  Eigen::VectorXd q(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) s += H[(i * n + j) * n + k] * spec.eta[j] * spec.eta[k];
    q(i) = -0.5 * s;
  }
  const Eigen::MatrixXd J = char_matrix(2 * spec.lambda1, spec.c, spec.params());
  const auto lu = J.fullPivLu();
  // Resonance (2 lambda1 = lambda2) or no quadratic part: keep the linear tail.
  if (q.cwiseAbs().maxCoeff() == 0 || lu.rcond() < 1e-8) return {};
  const Eigen::VectorXd chi = lu.solve(q);
  return Vec(chi.data(), chi.data() + n);
}

Vec fit_tail_mode(const WaveProfile& p) {
  const double l1 = p.tail.lambda, l2 = p.tail.lambda2;
  if (!(l1 > 0) || !(l2 > l1)) return {};
  const double x0 = p.grid.x_lo();
  const double x1 = std::min(x0 + 10.0, p.tail.anchor - 6.0 / l1);
  std::size_t M = 0;
  while (M < p.grid.size() && p.xi(M) <= x1 + 1e-12) ++M;
  if (M < 20) return {};
  Eigen::MatrixXd B(M, 3);
  for (std::size_t j = 0; j < M; ++j) {
    const double sg = p.xi(j) - x0;
    B(j, 0) = std::exp(l1 * sg);
    B(j, 1) = std::exp(l2 * sg);
    B(j, 2) = std::exp(3 * l1 * sg);
  }
  const Eigen::VectorXd scale = B.colwise().norm().cwiseInverse();
  const Eigen::MatrixXd Bs = B * scale.asDiagonal();
  const auto qr = Bs.colPivHouseholderQr();
  Vec out(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) {
    Eigen::VectorXd r(M);
    for (std::size_t j = 0; j < M; ++j) r(j) = p.values(i, j) - p.tail.left(i, p.xi(j));
    const Eigen::VectorXd coef = qr.solve(r).cwiseProduct(scale);
    // back to the anchor-based coordinate of the closure
    out[i] = coef(1) * std::exp(l2 * (p.tail.anchor - x0));
  }
  return out;
}

double default_anchor(double L, double lambda1, double rho, double tail_fraction) {
  if (!(rho > 0) || !(lambda1 > 0)) return 0.0;
  const double window = 2 * L * tail_fraction;
  return (L - window) * (rho - lambda1) / (lambda1 + rho);
}

ProfileSolution solve_profile(const ReactionSystem& sys, const SpectralReport& spec, const ProfileOptions& opt) {
  if (!(spec.c > spec.c_star * (1 + 1e-6)))
    fail(ErrorCode::SubThreshold,
         fmt::format("wave speed c = {:.17g} is not above c*(1+1e-6) with c* = {:.17g}", spec.c, spec.c_star));
  const Grid grid = ProfileGrid{opt.m, opt.L}.grid();
  const double anchor = opt.anchor.value_or(default_anchor(opt.L, spec.lambda1, spec.rho, opt.tail_fraction));

  double need = 0;
  {
    Vec worst(sys.n(), 0.0);
    const int s = 41;
    // Only the negative part of df_i/du_i has to be absorbed by beta.
    for (int k = 0; k < s; ++k) {
      Vec u(sys.n());
      for (std::size_t i = 0; i < sys.n(); ++i) u[i] = sys.K[i] * k / (s - 1);
      const auto A = sys.jacobian(u);
      for (std::size_t i = 0; i < sys.n(); ++i) worst[i] = std::max(worst[i], -A(i, i));
    }
    for (std::size_t i = 0; i < sys.n(); ++i) need = std::max(need, 2 * sys.d[i] + worst[i]);
  }
  const double beta = opt.beta.value_or(default_beta(sys));
  if (beta < need)
    fail(ErrorCode::Parameter, fmt::format("beta = {} is below the monotonicity bound {}", beta, need));

  ProfileSolution sol;
  sol.pair = make_super_sub_pair(sys, spec, grid, anchor, opt.eps_prime);
  TailModel tail{spec.eta, tail_correction(sys, spec), {}, spec.lambda1, spec.lambda2, anchor,
                 std::isfinite(spec.rho) ? spec.rho : 0.0};
  Field values = monotone_iterate(sys, spec.c, sol.pair, tail, grid, beta, opt.tol, opt.max_iter, &sol.log);
  sol.total_iterations = sol.log.iterations;

  // The pinned closure lacks the e^{lambda2 s} part of the true tail, which
  // shifts the phase of the interior against the closure. Fit it and re-solve.
  for (int pass = 0; pass < opt.tail_passes; ++pass) {
    WaveProfile trial;
    trial.grid = grid;
    trial.values = values;
    trial.tail = tail;
    const Vec db = fit_tail_mode(trial);
    if (db.empty()) break;
    double pin_change = 0;
    for (std::size_t i = 0; i < db.size(); ++i)
      pin_change = std::max(pin_change, std::abs(db[i]) * std::exp(spec.lambda2 * (grid.x_lo() - anchor)) /
                                            tail.left(i, grid.x_lo()));
    if (pin_change < 1e-13) break;
    if (tail.b.empty()) tail.b.assign(db.size(), 0.0);
    for (std::size_t i = 0; i < db.size(); ++i) tail.b[i] += db[i];
    values = monotone_iterate(sys, spec.c, sol.pair, tail, grid, beta, opt.tol, opt.max_iter, &sol.log);
    sol.total_iterations += sol.log.iterations;
    ++sol.passes;
  }

  WaveProfile& p = sol.profile;
  p.grid = grid;
  p.L = opt.L;
  p.c = spec.c;
  p.values = std::move(values);
  p.K = sys.K;
  p.tail = tail;
  p.spectral = spec;
  p.spectral.xi0 = select_xi0(sys, p);
  p.spectral_digest = p.spectral.digest();
  return sol;
}

// ---------------------------------------------------------------------------
// Text interchange

namespace {

std::string join(const Vec& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += fmt::format("{}{:.17g}", k ? " " : "", v[k]);
  return s;
}

Vec split(const std::string& s) {
  Vec out;
  std::istringstream is(s);
  double v;
  while (is >> v) out.push_back(v);
  return out;
}

}  // namespace

void write_profile(const WaveProfile& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::Io, fmt::format("cannot open {} for writing", path));
  const auto& s = p.spectral;
  os << "# twlab-profile 1\n";
  os << fmt::format("# n = {}\n# c = {:.17g}\n# c_star = {:.17g}\n# m = {}\n# L = {:.17g}\n", p.n(), p.c, s.c_star,
                    p.grid.m, p.L);
  os << fmt::format("# K = {}\n# anchor = {:.17g}\n# lambda1 = {:.17g}\n# lambda2 = {:.17g}\n# rho = {:.17g}\n",
                    join(p.K), p.tail.anchor, p.tail.lambda, s.lambda2, p.tail.rho);
  os << fmt::format("# eta = {}\n# gamma = {:.17g}\n# epsilon = {:.17g}\n# xi0 = {:.17g}\n# pq = {}\n", join(p.tail.eta),
                    s.gamma, s.epsilon, s.xi0, join(s.pq));
  if (!p.tail.chi.empty()) os << fmt::format("# chi = {}\n", join(p.tail.chi));
  if (!p.tail.b.empty()) os << fmt::format("# tail_b = {}\n", join(p.tail.b));
  os << fmt::format("# spectral_digest = {}\n", p.spectral_digest);
  os << "xi";
  for (std::size_t i = 0; i < p.n(); ++i) os << ",phi" << i + 1;
  os << "\n";
  for (std::size_t j = 0; j < p.values.nodes(); ++j) {
    std::string row = fmt::format("{:.17g}", p.xi(j));
    for (std::size_t i = 0; i < p.n(); ++i) row += fmt::format(",{:.17g}", p.values(i, j));
    os << row << "\n";
  }
  if (!os) fail(ErrorCode::Io, fmt::format("write to {} failed", path));
}

WaveProfile read_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, fmt::format("cannot open {}", path));
  std::string line;
  std::getline(is, line);
  if (line != "# twlab-profile 1") fail(ErrorCode::Io, fmt::format("{}: not a profile file", path));
  WaveProfile p;
  auto& s = p.spectral;
  std::size_t n = 0;
  int m = 0;
  while (std::getline(is, line) && line.rfind("# ", 0) == 0) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(2, eq - 2), val = line.substr(eq + 3);
    if (key == "spectral_digest") {
      p.spectral_digest = val;
      continue;
    }
    const Vec v = split(val);
    if (v.empty()) fail(ErrorCode::Io, fmt::format("{}: header field {} has no value", path, key));
    if (key == "n") n = static_cast<std::size_t>(v[0]);
    else if (key == "c") p.c = s.c = v[0];
    else if (key == "c_star") s.c_star = v[0];
    else if (key == "m") m = static_cast<int>(v[0]);
    else if (key == "L") p.L = v[0];
    else if (key == "K") p.K = v;
    else if (key == "anchor") p.tail.anchor = v[0];
    else if (key == "lambda1") p.tail.lambda = s.lambda1 = v[0];
    else if (key == "lambda2") p.tail.lambda2 = s.lambda2 = v[0];
    else if (key == "tail_b") p.tail.b = v;
    else if (key == "rho") p.tail.rho = s.rho = v[0];
    else if (key == "eta") p.tail.eta = s.eta = v;
    else if (key == "gamma") s.gamma = v[0];
    else if (key == "epsilon") s.epsilon = v[0];
    else if (key == "xi0") s.xi0 = v[0];
    else if (key == "pq") s.pq = v;
    else if (key == "chi") p.tail.chi = v;
  }
  if (n == 0 || m == 0 || p.K.size() != n || p.tail.eta.size() != n)
    fail(ErrorCode::Io, fmt::format("{}: incomplete profile header", path));
  s.n = n;
  // `line` now holds the column header.
  std::vector<Vec> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    Vec r = split(line);
    if (r.size() != n + 1) fail(ErrorCode::Io, fmt::format("{}: row {} has {} columns", path, rows.size() + 1, r.size()));
    rows.push_back(std::move(r));
  }
  if (rows.size() < 2) fail(ErrorCode::Io, fmt::format("{}: too few rows", path));
  p.grid = Grid::span(m, rows.front()[0], rows.back()[0]);
  if (p.grid.size() != rows.size()) fail(ErrorCode::Io, fmt::format("{}: rows do not form a uniform grid", path));
  p.values = Field(n, rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) p.values(i, j) = rows[j][i + 1];
  return p;
}

}  // namespace twlab
