#include "twlab/spectral.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "numeric.hpp"
#include "twlab/error.hpp"

namespace twlab {

namespace {

constexpr double kSearchCap = 50.0;
constexpr int kScan = 256;

/// (-1)^n det J: shares the sign conventions of the n = 2 polynomial
/// (negative at 0 when the state is unstable, positive between lambda1 and lambda2).
double oriented(double lambda, double c, const CharParams& p, At at) {
  const double v = eval_char_poly(lambda, c, p, at);
  return (p.n() % 2 == 0) ? v : -v;
}

void require_negative_diagonal(const Eigen::MatrixXd& A, const char* where) {
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    if (!(A(i, i) < 0))
      fail(ErrorCode::Parameter,
           fmt::format("diagonal entry {} of the Jacobian at {} is {} (must be negative)", i + 1, where, A(i, i)));
}

}  // namespace

CharParams CharParams::from(const ReactionSystem& sys) {
  const auto jd = jacobians(sys);
  return {sys.d, jd.A0, jd.AK};
}

double shift_symbol(double lambda) {
  const double s = std::sinh(0.5 * lambda);
  return 4.0 * s * s;
}

double eval_f_i(std::size_t i, double lambda, double c, const CharParams& p, At at) {
  return p.d[i] * shift_symbol(lambda) + p.A(at)(i, i) - c * lambda;
}

Eigen::MatrixXd char_matrix(double lambda, double c, const CharParams& p, At at) {
  Eigen::MatrixXd J = p.A(at);
  const double E = shift_symbol(lambda);
  for (std::size_t i = 0; i < p.n(); ++i) J(i, i) += p.d[i] * E - c * lambda;
  return J;
}

double eval_char_poly(double lambda, double c, const CharParams& p, At at) {
  if (p.n() == 2) {
    const auto& A = p.A(at);
    return eval_f_i(0, lambda, c, p, at) * eval_f_i(1, lambda, c, p, at) - A(0, 1) * A(1, 0);
  }
  return eval_char_poly_det(lambda, c, p, at);
}

double eval_char_poly_det(double lambda, double c, const CharParams& p, At at) {
  return char_matrix(lambda, c, p, at).determinant();
}

FiRoots f_i_roots(std::size_t i, double c, const CharParams& p, At at) {
  auto f = [&](double l) { return eval_f_i(i, l, c, p, at); };
  if (!(f(0) < 0))
    fail(ErrorCode::Parameter, fmt::format("f_{}(0) = {} must be negative", i + 1, f(0)));
  if (!(f(kSearchCap) > 0))
    fail(ErrorCode::Bracket, fmt::format("lambda_{}^+ not bracketed in (0, {}]: f_{}({}) = {} (c = {})", i + 1,
                                         kSearchCap, i + 1, kSearchCap, f(kSearchCap), c));
  if (!(f(-kSearchCap) > 0))
    fail(ErrorCode::Bracket, fmt::format("lambda_{}^- not bracketed in [-{}, 0)", i + 1, kSearchCap));
  return {num::bisect(f, -kSearchCap, 0.0), num::bisect(f, 0.0, kSearchCap)};
}

double lambda_m_plus(double c, const CharParams& p) {
  double lm = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.n(); ++i) lm = std::min(lm, f_i_roots(i, c, p).plus);
  return lm;
}

std::pair<double, double> char_poly_peak(double c, const CharParams& p) {
  const double lm = lambda_m_plus(c, p);
  auto P = [&](double l) { return oriented(l, c, p, At::Zero); };
  int best = 1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int k = 1; k < kScan; ++k) {
    const double v = P(lm * k / kScan);
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  return num::golden_max(P, lm * (best - 1) / kScan, lm * (best + 1) / kScan);
}

std::optional<PositiveRoots> find_positive_roots(double c, const CharParams& p) {
  if (!(c > 0)) fail(ErrorCode::InvalidArgument, fmt::format("wave speed must be positive (got {})", c));
  require_negative_diagonal(p.A0, "0");
  auto P = [&](double l) { return oriented(l, c, p, At::Zero); };
  const double p0 = P(0.0);
  if (!(p0 < 0))
    fail(ErrorCode::Parameter, fmt::format("P(0, c) = {} must be negative (alpha1 alpha2 < beta1 beta2)", p0));
  const double lm = lambda_m_plus(c, p);
  const auto [peak, peak_value] = char_poly_peak(c, p);
  if (!(peak_value > 0)) return std::nullopt;
  const double pm = P(lm);
  if (!(pm < 0))
    fail(ErrorCode::Bracket, fmt::format("lambda2 not bracketed: P(lambda_m^+ = {}) = {} is not negative", lm, pm));

  double scale = std::max(std::abs(p0), std::abs(peak_value));
  for (int k = 0; k <= kScan; ++k) scale = std::max(scale, std::abs(P(lm * k / kScan)));

  PositiveRoots r{};
  r.lambda1 = num::bisect(P, 0.0, peak);
  r.lambda2 = num::bisect(P, peak, lm);
  r.lambda_peak = peak;
  r.peak_value = peak_value;
  r.lambda_m_plus = lm;
  r.residual_scale = scale;
  for (double l : {r.lambda1, r.lambda2})
    if (std::abs(P(l)) > 1e-10 * scale)
      fail(ErrorCode::Convergence, fmt::format("root {} has residual {} above 1e-10 * {}", l, P(l), scale));
  return r;
}

double compute_c_star(const CharParams& p) {
  require_negative_diagonal(p.A0, "0");
  auto peak = [&](double c) { return char_poly_peak(c, p).second; };
  double lo = 0.0;
  if (!(peak(lo) < 0))
    fail(ErrorCode::Range, fmt::format("peak of P at c = 0 is {} (expected negative)", peak(lo)));
  double hi = 1.0;
  double ph = peak(hi);
  while (!(ph > 0)) {
    lo = hi;
    hi *= 2;
    if (hi > 1e6)
      fail(ErrorCode::Range, fmt::format("peak of P stays nonpositive up to c = {} (last peak {})", lo, ph));
    ph = peak(hi);
  }
  while (hi - lo > 1e-13 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (peak(mid) > 0 ? hi : lo) = mid;
  }
  return hi;
}

const char* lower_threshold_kind_name(LowerThreshold::Kind k) {
  switch (k) {
    case LowerThreshold::Kind::Minimum: return "minimum";
    case LowerThreshold::Kind::ZeroInfimum: return "infimum-at-zero";
    case LowerThreshold::Kind::InfimumAtInfinity: return "infimum-at-infinity";
    case LowerThreshold::Kind::MinusInfinity: return "minus-infinity";
  }
  return "?";
}

LowerThreshold compute_c_star_lower(double d_max, double alpha_max) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (alpha_max < 0) return {-std::numeric_limits<double>::infinity(), LowerThreshold::Kind::MinusInfinity, nan};
  if (alpha_max == 0) return {0.0, LowerThreshold::Kind::ZeroInfimum, nan};
  if (!(d_max > 0)) return {0.0, LowerThreshold::Kind::InfimumAtInfinity, nan};
  // Stationarity of (dE + a)/l: G(l) = d (l E'(l) - E(l)) - a, increasing from -a.
  auto G = [&](double l) { return d_max * (2.0 * l * std::sinh(l) - shift_symbol(l)) - alpha_max; };
  double hi = 1.0;
  while (!(G(hi) > 0)) hi *= 2;
  const double l = num::bisect(G, 0.0, hi);
  return {2.0 * d_max * std::sinh(l), LowerThreshold::Kind::Minimum, l};
}

LowerThreshold compute_c_star_lower(const CharParams& p) {
  double d_max = 0, a_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.n(); ++i) {
    d_max = std::max(d_max, p.d[i]);
    a_max = std::max(a_max, p.A0(i, i));
  }
  return compute_c_star_lower(d_max, a_max);
}

double find_lambda_bar(double c, const CharParams& p) {
  if (!(c > 0)) fail(ErrorCode::InvalidArgument, "wave speed must be positive");
  auto P = [&](double l) { return oriented(l, c, p, At::K); };
  if (!(P(0.0) > 0))
    fail(ErrorCode::Parameter, fmt::format("barred P(0, c) = {} must be positive", P(0.0)));
  const int steps = 5000;
  double prev = P(0.0);
  for (int k = 1; k <= steps; ++k) {
    const double l = kSearchCap * k / steps;
    const double v = P(l);
    if (prev < 0 && v >= 0) {
      const double lo = kSearchCap * (k - 1) / steps;
      const double root = num::bisect(P, lo, l);
      if (!(P(root - 1e-3) < 0))
        fail(ErrorCode::Bracket, fmt::format("barred root {} is not a negative-to-positive crossing", root));
      return root;
    }
    prev = v;
  }
  fail(ErrorCode::Bracket, fmt::format("no negative-to-positive crossing of the barred polynomial in (0, {}]",
                                       kSearchCap));
}

double k_side_decay_rate(double c, const CharParams& p) {
  auto P = [&](double l) { return oriented(l, c, p, At::K); };
  if (!(P(0.0) > 0))
    fail(ErrorCode::Parameter, fmt::format("barred P(0, c) = {} must be positive", P(0.0)));
  const int steps = 5000;
  for (int k = 1; k <= steps; ++k) {
    const double l = -kSearchCap * k / steps;
    if (P(l) <= 0) return -num::bisect(P, l, -kSearchCap * (k - 1) / steps);
  }
  fail(ErrorCode::Bracket, fmt::format("no negative root of the barred polynomial in [-{}, 0)", kSearchCap));
}

// ---------------------------------------------------------------------------
// Positive vectors

namespace {

void require_sign_pattern(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols() || A.rows() == 0) fail(ErrorCode::Domain, "matrix must be square and nonempty");
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (!std::isfinite(A(i, j))) fail(ErrorCode::Domain, "matrix has a nonfinite entry");
      if (i == j && A(i, j) > 0)
        fail(ErrorCode::Domain, fmt::format("diagonal entry ({},{}) = {} is positive", i + 1, j + 1, A(i, j)));
      if (i != j && A(i, j) < 0)
        fail(ErrorCode::Domain, fmt::format("off-diagonal entry ({},{}) = {} is negative", i + 1, j + 1, A(i, j)));
    }
}

}  // namespace

SignDeterminantLedger check_sign_determinants(const Eigen::MatrixXd& A) {
  require_sign_pattern(A);
  const int n = static_cast<int>(A.rows());
  SignDeterminantLedger led;
  if (n == 1) {
    led.entries.push_back({1, 1, A(0, 0), A(0, 0) < 0});
    led.ok = A(0, 0) < 0;
    return led;
  }
  for (int k = 1; k < n; ++k)
    for (int j = k + 1; j <= n; ++j) {
      Eigen::MatrixXd S(k + 1, k + 1);
      std::vector<int> idx(k + 1);
      for (int t = 0; t < k; ++t) idx[t] = t;
      idx[k] = j - 1;
      for (int r = 0; r <= k; ++r)
        for (int s = 0; s <= k; ++s) S(r, s) = A(idx[r], idx[s]);
      const double det = S.determinant();
      const double sign = (k % 2 == 1) ? 1.0 : -1.0;  // (-1)^(k-1)
      const bool ok = sign * det > 0;
      led.entries.push_back({k, j, det, ok});
      led.ok = led.ok && ok;
    }
  return led;
}

std::optional<Vec> positive_vector(const Eigen::MatrixXd& A) {
  if (!check_sign_determinants(A).ok) return std::nullopt;
  const Eigen::Index n = A.rows();
  // Under the determinant conditions -A is a nonsingular M-matrix, so
  // x = (-A)^{-1} 1 is positive and A x = -1.
  const Eigen::VectorXd x = A.partialPivLu().solve(-Eigen::VectorXd::Ones(n));
  const Eigen::VectorXd Ax = A * x;
  const double bound = -1e-12 * A.cwiseAbs().rowwise().sum().maxCoeff() * x.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(x(i) > 0) || !(Ax(i) < bound)) return std::nullopt;
  return Vec(x.data(), x.data() + n);
}

// ---------------------------------------------------------------------------
// Weight and eigenvectors

double Weight::omega1(double xi) const { return std::exp(-gamma_ * (xi - xi0_)); }

Weight build_weight(double gamma, double xi0) {
  if (!(gamma > 0)) fail(ErrorCode::InvalidArgument, fmt::format("weight exponent must be positive (got {})", gamma));
  return Weight(gamma, xi0);
}

Vec kernel_eigenvector(double lambda1, double c, const CharParams& p) {
  const std::size_t n = p.n();
  const Eigen::MatrixXd J = char_matrix(lambda1, c, p, At::Zero);
  Eigen::VectorXd eta(n);
  if (n == 2) {
    const double b1 = J(0, 1), f1 = J(0, 0);
    if (!(b1 > 0)) fail(ErrorCode::Domain, fmt::format("beta1 = {} must be positive for a kernel vector", b1));
    if (!(f1 < 0)) fail(ErrorCode::Domain, fmt::format("f1(lambda1, c) = {} must be negative", f1));
    eta << b1, -f1;
  } else {
    // J is Metzler with a zero eigenvalue at lambda1; take the eigenvector of
    // the eigenvalue with largest real part.
    Eigen::EigenSolver<Eigen::MatrixXd> es(J);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < es.eigenvalues().size(); ++k)
      if (es.eigenvalues()(k).real() > es.eigenvalues()(best).real()) best = k;
    eta = es.eigenvectors().col(best).real();
    if (eta.sum() < 0) eta = -eta;
  }
  eta /= eta.cwiseAbs().maxCoeff();
  for (std::size_t i = 0; i < n; ++i)
    if (!(eta(i) > 0)) fail(ErrorCode::Domain, fmt::format("kernel vector entry {} = {} is not positive", i + 1, eta(i)));
  const double res = (J * eta).cwiseAbs().maxCoeff();
  if (res > 1e-8) fail(ErrorCode::Domain, fmt::format("kernel vector residual {} exceeds 1e-8", res));
  return Vec(eta.data(), eta.data() + n);
}

WeightParams select_weight_params(double c, const CharParams& p, std::optional<double> epsilon) {
  const auto roots = find_positive_roots(c, p);
  if (!roots)
    fail(ErrorCode::SubThreshold, fmt::format("no positive characteristic roots at c = {}", c));
  const double gap = roots->lambda2 - roots->lambda1;
  const double eps = epsilon.value_or(0.1 * gap);
  if (!(eps > 0 && eps < 0.5 * gap))
    fail(ErrorCode::Parameter, fmt::format("epsilon = {} outside the valid range (0, {})", eps, 0.5 * gap));
  WeightParams w;
  w.epsilon = eps;
  w.gamma = roots->lambda1 + eps;
  w.P_gamma = eval_char_poly(w.gamma, c, p);
  if (!(oriented(w.gamma, c, p, At::Zero) > 0))
    fail(ErrorCode::Parameter, fmt::format("P(gamma) = {} is not positive; choose epsilon in (0, {})", w.P_gamma,
                                           0.5 * gap));
  for (std::size_t i = 0; i < p.n(); ++i)
    if (!(eval_f_i(i, w.gamma, c, p) < 0))
      fail(ErrorCode::Parameter, fmt::format("f_{}(gamma, c) is not negative", i + 1));
  const Eigen::MatrixXd Jt = char_matrix(w.gamma, c, p).transpose();
  auto pq = positive_vector(Jt);
  if (!pq) fail(ErrorCode::Parameter, "no positive vector for J(gamma, c)^T");
  w.pq = *pq;
  return w;
}

std::string SpectralReport::digest() const {
  std::string s;
  auto put = [&](double v) { s += fmt::format("{:.17g};", v); };
  put(c);
  put(c_star);
  put(lambda1);
  put(lambda2);
  put(gamma);
  for (double v : d) put(v);
  for (double v : eta) put(v);
  for (double v : pq) put(v);
  for (Eigen::Index i = 0; i < A0.size(); ++i) put(A0.data()[i]);
  for (Eigen::Index i = 0; i < AK.size(); ++i) put(AK.data()[i]);
  return fmt::format("{:016x}", num::fnv1a(s));
}

SpectralReport spectral_report(const ReactionSystem& sys, double c, std::optional<double> epsilon) {
  const CharParams p = CharParams::from(sys);
  SpectralReport r;
  r.n = p.n();
  r.d = p.d;
  r.A0 = p.A0;
  r.AK = p.AK;
  r.c = c;
  r.c_star = compute_c_star(p);
  r.c_star_lower = compute_c_star_lower(p);
  const auto roots = find_positive_roots(c, p);
  if (!roots)
    fail(ErrorCode::SubThreshold,
         fmt::format("c = {:.17g} has no positive characteristic roots (c* = {:.17g})", c, r.c_star));
  r.lambda1 = roots->lambda1;
  r.lambda2 = roots->lambda2;
  const auto w = select_weight_params(c, p, epsilon);
  r.epsilon = w.epsilon;
  r.gamma = w.gamma;
  r.P_gamma = w.P_gamma;
  r.pq = w.pq;
  r.pq_ledger = check_sign_determinants(char_matrix(w.gamma, c, p).transpose());
  r.eta = kernel_eigenvector(r.lambda1, c, p);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    r.lambda_bar = find_lambda_bar(c, p);
  } catch (const Error&) {
    r.lambda_bar = nan;
  }
  try {
    r.rho = k_side_decay_rate(c, p);
  } catch (const Error&) {
    r.rho = nan;
  }
  r.xi0 = nan;
  return r;
}

double resolve_speed(const CharParams& p, const SpeedChoice& s, double* c_star_out) {
  if (s.c.has_value() == s.multiplier.has_value())
    fail(ErrorCode::Config, "give exactly one of an absolute speed c or a multiplier of c*");
  const double cs = compute_c_star(p);
  if (c_star_out) *c_star_out = cs;
  if (s.c) return *s.c;
  if (!(*s.multiplier > 0)) fail(ErrorCode::Config, "speed multiplier must be positive");
  return *s.multiplier * cs;
}

}  // namespace twlab
