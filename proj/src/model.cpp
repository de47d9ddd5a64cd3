#include "twlab/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "twlab/error.hpp"

namespace twlab {

void Kinetics::eval_nodes(std::span<const double> u, std::size_t N, std::span<double> out) const {
  const std::size_t n = dim();
  std::vector<double> a(n), b(n);
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t i = 0; i < n; ++i) a[i] = u[i * N + j];
    eval(a, b);
    for (std::size_t i = 0; i < n; ++i) out[i * N + j] = b[i];
  }
}

// ---------------------------------------------------------------------------
// Epidemic form

void EpidemicKinetics::eval(std::span<const double> u, std::span<double> out) const {
  out[0] = -a1_ * u[0] + hbar(u[1]).value;
  out[1] = -a2_ * u[1] + gbar(u[0]).value;
}

void EpidemicKinetics::eval_nodes(std::span<const double> u, std::size_t N, std::span<double> out) const {
  const double* v1 = u.data();
  const double* v2 = u.data() + N;
  for (std::size_t j = 0; j < N; ++j) {
    out[j] = -a1_ * v1[j] + hbar_value(v2[j]);
    out[N + j] = -a2_ * v2[j] + gbar_value(v1[j]);
  }
}

void EpidemicKinetics::jacobian(std::span<const double> u, std::span<double> jac) const {
  jac[0] = -a1_;
  jac[1] = hbar(u[1]).d1;
  jac[2] = gbar(u[0]).d1;
  jac[3] = -a2_;
}

void EpidemicKinetics::hessian(std::span<const double> u, std::span<double> hess) const {
  std::fill(hess.begin(), hess.begin() + 8, 0.0);
  hess[3] = hbar(u[1]).d2;  // d2 h / dv2 dv2
  hess[4] = gbar(u[0]).d2;  // d2 g / dv1 dv1
}

namespace {

class Holling2Kinetics final : public EpidemicKinetics {
 public:
  explicit Holling2Kinetics(const Holling2Params& p) : EpidemicKinetics(p.a1, p.a2), p_(p) {}

  Scalar hbar(double x) const override { return saturating(x, p_.alpha1, p_.beta1, p_.gamma1); }
  Scalar gbar(double x) const override { return saturating(x, p_.alpha2, p_.beta2, p_.gamma2); }
  double hbar_value(double x) const override { return p_.alpha1 * x / (p_.beta1 + p_.gamma1 * x); }
  double gbar_value(double x) const override { return p_.alpha2 * x / (p_.beta2 + p_.gamma2 * x); }

 private:
  static Scalar saturating(double x, double alpha, double beta, double gamma) {
    const double den = beta + gamma * x;
    return {alpha * x / den, alpha * beta / (den * den), -2.0 * alpha * beta * gamma / (den * den * den)};
  }

  Holling2Params p_;
};

class RickerKinetics final : public EpidemicKinetics {
 public:
  explicit RickerKinetics(const RickerParams& p) : EpidemicKinetics(p.a1, p.a2), p_(p) {}

  Scalar hbar(double x) const override { return {p_.a * x, p_.a, 0.0}; }
  double hbar_value(double x) const override { return p_.a * x; }
  double gbar_value(double x) const override {
    return p_.p * x * std::exp(-p_.q * (p_.m == 1.0 ? x : std::pow(x, p_.m)));
  }

  Scalar gbar(double x) const override {
    const double xm = std::pow(x, p_.m);
    const double e = std::exp(-p_.q * xm);
    const double qmx = p_.q * p_.m * xm;
    const double d2 = p_.p * p_.q * p_.m * std::pow(x, p_.m - 1.0) * e * (qmx - 1.0 - p_.m);
    return {p_.p * x * e, p_.p * e * (1.0 - qmx), d2};
  }

 private:
  RickerParams p_;
};

class QuadraticKinetics final : public Kinetics {
 public:
  explicit QuadraticKinetics(QuadraticTables t) : t_(std::move(t)) {}

  std::size_t dim() const override { return t_.n; }

  void eval(std::span<const double> u, std::span<double> out) const override {
    const std::size_t n = t_.n;
    for (std::size_t i = 0; i < n; ++i) {
      double s = t_.constant[i];
      for (std::size_t j = 0; j < n; ++j) {
        s += t_.linear[i * n + j] * u[j];
        for (std::size_t k = 0; k < n; ++k) s += t_.quadratic[(i * n + j) * n + k] * u[j] * u[k];
      }
      out[i] = s;
    }
  }

  void jacobian(std::span<const double> u, std::span<double> jac) const override {
    const std::size_t n = t_.n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = t_.linear[i * n + j];
        for (std::size_t k = 0; k < n; ++k)
          s += (t_.quadratic[(i * n + j) * n + k] + t_.quadratic[(i * n + k) * n + j]) * u[k];
        jac[i * n + j] = s;
      }
  }

  void hessian(std::span<const double>, std::span<double> hess) const override {
    const std::size_t n = t_.n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          hess[(i * n + j) * n + k] =
              t_.quadratic[(i * n + j) * n + k] + t_.quadratic[(i * n + k) * n + j];
  }

 private:
  QuadraticTables t_;
};

void require_positive(double v, const char* name) {
  if (!(v > 0) || !std::isfinite(v))
    fail(ErrorCode::Parameter, fmt::format("parameter {} must be a positive finite number (got {})", name, v));
}

void check_equilibrium(const ReactionSystem& sys, double scale) {
  const Vec r = sys.f(sys.K);
  double worst = 0;
  for (double v : r) worst = std::max(worst, std::abs(v));
  if (worst > 1e-12 * scale)
    fail(ErrorCode::Parameter,
         fmt::format("{}: closed-form equilibrium residual {:.3e} exceeds tolerance", sys.name, worst));
}

}  // namespace

// ---------------------------------------------------------------------------
// ReactionSystem

Vec ReactionSystem::f(std::span<const double> u) const {
  Vec out(n());
  kinetics->eval(u, out);
  return out;
}

Eigen::MatrixXd ReactionSystem::jacobian(std::span<const double> u) const {
  const std::size_t k = n();
  Vec jac(k * k);
  kinetics->jacobian(u, jac);
  Eigen::MatrixXd A(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) A(i, j) = jac[i * k + j];
  return A;
}

Vec ReactionSystem::hessian(std::span<const double> u) const {
  Vec h(n() * n() * n());
  kinetics->hessian(u, h);
  return h;
}

JacobianData jacobians(const ReactionSystem& sys) {
  const Vec zero(sys.n(), 0.0);
  return {sys.jacobian(zero), sys.jacobian(sys.K)};
}

ReactionSystem make_holling2_model(const Holling2Params& p) {
  require_positive(p.a1, "a1");
  require_positive(p.a2, "a2");
  require_positive(p.d1, "d1");
  require_positive(p.d2, "d2");
  require_positive(p.alpha1, "alpha1");
  require_positive(p.alpha2, "alpha2");
  require_positive(p.beta1, "beta1");
  require_positive(p.beta2, "beta2");
  require_positive(p.gamma1, "gamma1");
  require_positive(p.gamma2, "gamma2");
  const double num = p.alpha1 * p.alpha2 - p.a1 * p.a2 * p.beta1 * p.beta2;
  if (!(num > 0))
    fail(ErrorCode::Parameter,
         fmt::format("Holling-II parameters violate alpha1*alpha2 > a1*a2*beta1*beta2 ({} <= {})",
                     p.alpha1 * p.alpha2, p.a1 * p.a2 * p.beta1 * p.beta2));

  ReactionSystem sys;
  sys.name = "holling2";
  sys.d = {p.d1, p.d2};
  sys.K = {num / (p.a1 * (p.a2 * p.beta1 * p.gamma2 + p.alpha2 * p.gamma1)),
           num / (p.a2 * (p.a1 * p.beta2 * p.gamma1 + p.alpha1 * p.gamma2))};
  sys.kinetics = std::make_shared<Holling2Kinetics>(p);
  check_equilibrium(sys, std::max(p.a1 * sys.K[0], p.a2 * sys.K[1]));
  return sys;
}

ReactionSystem make_ricker_model(const RickerParams& p) {
  require_positive(p.a, "a");
  require_positive(p.a1, "a1");
  require_positive(p.a2, "a2");
  require_positive(p.d1, "d1");
  require_positive(p.d2, "d2");
  require_positive(p.p, "p");
  require_positive(p.q, "q");
  require_positive(p.m, "m");
  const double ratio = p.a * p.p / (p.a1 * p.a2);
  const double cap = std::exp(1.0 / p.m);
  // A few ulps of slack so a boundary ratio typed in decimal is not rejected.
  if (!(ratio > 1.0) || ratio > cap * (1.0 + 4 * std::numeric_limits<double>::epsilon()))
    fail(ErrorCode::Parameter,
         fmt::format("Ricker parameters need 1 < a*p/(a1*a2) <= e^(1/m) = {:.17g}; got ratio {:.17g}",
                     cap, ratio));

  ReactionSystem sys;
  sys.name = "ricker";
  sys.d = {p.d1, p.d2};
  const double K1 = std::pow(std::log(ratio) / p.q, 1.0 / p.m);
  sys.K = {K1, p.a1 * K1 / p.a};
  sys.kinetics = std::make_shared<RickerKinetics>(p);
  check_equilibrium(sys, std::max({1.0, p.a1 * sys.K[0], p.a2 * sys.K[1]}));
  return sys;
}

ReactionSystem make_quadratic_model(std::string name, Vec d, Vec K, QuadraticTables tables) {
  const std::size_t n = tables.n;
  if (n == 0) fail(ErrorCode::Parameter, "custom system needs at least one component");
  if (d.size() != n) fail(ErrorCode::Parameter, fmt::format("d has {} entries, expected {}", d.size(), n));
  if (K.size() != n) fail(ErrorCode::Parameter, fmt::format("K has {} entries, expected {}", K.size(), n));
  if (tables.constant.empty()) tables.constant.assign(n, 0.0);
  if (tables.quadratic.empty()) tables.quadratic.assign(n * n * n, 0.0);
  if (tables.constant.size() != n || tables.linear.size() != n * n || tables.quadratic.size() != n * n * n)
    fail(ErrorCode::Parameter, "custom coefficient tables have inconsistent sizes");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(d[i] >= 0) || !std::isfinite(d[i]))
      fail(ErrorCode::Parameter, fmt::format("d[{}] = {} must be >= 0", i, d[i]));
    if (!(K[i] > 0) || !std::isfinite(K[i]))
      fail(ErrorCode::Parameter, fmt::format("K[{}] = {} must be > 0", i, K[i]));
  }
  ReactionSystem sys;
  sys.name = std::move(name);
  sys.d = std::move(d);
  sys.K = std::move(K);
  sys.kinetics = std::make_shared<QuadraticKinetics>(std::move(tables));
  return sys;
}

double equilibrium_residual(const ReactionSystem& sys, std::span<const double> point) {
  if (point.size() != sys.n())
    fail(ErrorCode::Domain, fmt::format("point has {} components, system has {}", point.size(), sys.n()));
  for (std::size_t i = 0; i < sys.n(); ++i)
    if (!(point[i] >= 0.0 && point[i] <= sys.K[i]))
      fail(ErrorCode::Domain, fmt::format("component {} = {} lies outside [0, {}]", i, point[i], sys.K[i]));
  double worst = 0;
  for (double v : sys.f(point)) worst = std::max(worst, std::abs(v));
  return worst;
}

double equilibrium_scale(const ReactionSystem& sys) {
  const double knorm = *std::max_element(sys.K.begin(), sys.K.end());
  const Eigen::MatrixXd AK = sys.jacobian(sys.K);
  return std::max(1.0, knorm * AK.cwiseAbs().rowwise().sum().maxCoeff());
}

namespace {

/// Visits every point of the uniform s^n lattice over [0, K].
template <class F>
void for_each_sample(const ReactionSystem& sys, int s, F&& visit) {
  const std::size_t n = sys.n();
  std::vector<int> idx(n, 0);
  Vec u(n, 0.0);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) u[i] = sys.K[i] * idx[i] / (s - 1);
    visit(std::as_const(u));
    std::size_t i = 0;
    while (i < n && ++idx[i] == s) idx[i++] = 0;
    if (i == n) break;
  }
}

}  // namespace

double lipschitz_bound(const ReactionSystem& sys, int samples_per_axis) {
  double lip = 0;
  for_each_sample(sys, std::max(2, samples_per_axis), [&](const Vec& u) {
    lip = std::max(lip, sys.jacobian(u).cwiseAbs().rowwise().sum().maxCoeff());
  });
  return lip;
}

Vec diagonal_slope_bound(const ReactionSystem& sys, int samples_per_axis) {
  Vec out(sys.n(), 0.0);
  for_each_sample(sys, std::max(2, samples_per_axis), [&](const Vec& u) {
    const auto A = sys.jacobian(u);
    for (std::size_t i = 0; i < sys.n(); ++i) out[i] = std::max(out[i], std::abs(A(i, i)));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Audit

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::NotApplicable: return "not-applicable";
  }
  return "?";
}

const HypothesisResult& HypothesisReport::at(std::string_view name) const {
  for (const auto& r : results)
    if (r.name == name) return r;
  fail(ErrorCode::InvalidArgument, fmt::format("no hypothesis named {}", name));
}

bool HypothesisReport::all_pass() const {
  return std::none_of(results.begin(), results.end(),
                      [](const HypothesisResult& r) { return r.verdict == Verdict::Fail; });
}

namespace {

/// Collects violations of one hypothesis, keeping the worst witness per quantity.
class Auditor {
 public:
  explicit Auditor(std::string name) { r_.name = std::move(name); }

  /// Records a check that passes iff ok; margin orders violations (larger = worse).
  void check(bool ok, const Vec& point, const std::string& quantity, double value, double margin) {
    ++checks_;
    if (ok) return;
    ++failures_;
    for (std::size_t k = 0; k < r_.witnesses.size(); ++k) {
      if (r_.witnesses[k].quantity != quantity) continue;
      if (margin > margins_[k]) {
        r_.witnesses[k] = {point, quantity, value};
        margins_[k] = margin;
      }
      return;
    }
    r_.witnesses.push_back({point, quantity, value});
    margins_.push_back(margin);
  }

  void note(std::string text) {
    if (!r_.detail.empty()) r_.detail += "; ";
    r_.detail += std::move(text);
  }

  HypothesisResult finish() {
    r_.verdict = failures_ == 0 ? Verdict::Pass : Verdict::Fail;
    note(fmt::format("{} checks, {} violations", checks_, failures_));
    return std::move(r_);
  }

 private:
  HypothesisResult r_;
  Vec margins_;
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
};

HypothesisResult not_applicable(std::string name, std::string why) {
  HypothesisResult r;
  r.name = std::move(name);
  r.verdict = Verdict::NotApplicable;
  r.detail = std::move(why);
  return r;
}

void check_equilibria(Auditor& a, const ReactionSystem& sys) {
  const double tol = 1e-12 * equilibrium_scale(sys);
  const Vec zero(sys.n(), 0.0);
  for (const Vec* p : {&zero, &sys.K}) {
    const Vec fv = sys.f(*p);
    for (std::size_t i = 0; i < sys.n(); ++i)
      a.check(std::abs(fv[i]) <= tol, *p, fmt::format("f{}", i + 1), fv[i], std::abs(fv[i]));
  }
  for (std::size_t i = 0; i < sys.n(); ++i)
    a.check(sys.K[i] > 0, sys.K, fmt::format("K{}", i + 1), sys.K[i], -sys.K[i]);
}

/// Off-diagonal partials >= 0 on the sample lattice.
void check_cooperative(Auditor& a, const ReactionSystem& sys, int s) {
  const std::size_t n = sys.n();
  const double tiny = 1e-14 * equilibrium_scale(sys);
  for_each_sample(sys, s, [&](const Vec& u) {
    const auto A = sys.jacobian(u);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j)
          a.check(A(i, j) >= -tiny, u, fmt::format("df{}/du{}", i + 1, j + 1), A(i, j), -A(i, j));
  });
}

/// Second partials <= 0 on the sample lattice.
void check_concave(Auditor& a, const ReactionSystem& sys, int s) {
  const std::size_t n = sys.n();
  const double tiny = 1e-14 * equilibrium_scale(sys);
  for_each_sample(sys, s, [&](const Vec& u) {
    const Vec H = sys.hessian(u);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k < n; ++k) {
          const double v = H[(i * n + j) * n + k];
          a.check(!(v > tiny), u, fmt::format("d2f{}/du{}du{}", i + 1, j + 1, k + 1), v, v);
        }
  });
}

void strict_negative(Auditor& a, const Vec& at, const std::string& q, double v) {
  a.check(v < 0, at, q, v, v);
}

/// Counts lattice cells (outside the two-cell neighbourhoods of 0 and K) in which every component of f changes sign.
void scan_extra_equilibria(const ReactionSystem& sys, int s, std::vector<std::string>& caveats) {
  const std::size_t n = sys.n();
  if (n > 4) {
    caveats.push_back("extra-equilibrium scan skipped for n > 4");
    return;
  }
  const std::size_t corners = std::size_t{1} << n;
  std::vector<int> idx(n, 0);
  std::size_t suspicious = 0;
  Vec first_hit;
  Vec u(n), fv(n);
  while (true) {
    bool touches_end = true, touches_start = true;
    for (std::size_t i = 0; i < n; ++i) {
      touches_start = touches_start && idx[i] <= 1;
      touches_end = touches_end && idx[i] >= s - 3;
    }
    if (!touches_start && !touches_end) {
      std::vector<int> neg(n, 0), pos(n, 0);
      for (std::size_t c = 0; c < corners; ++c) {
        for (std::size_t i = 0; i < n; ++i) u[i] = sys.K[i] * (idx[i] + ((c >> i) & 1)) / (s - 1);
        sys.f(u, fv);
        for (std::size_t i = 0; i < n; ++i) {
          neg[i] |= fv[i] <= 0;
          pos[i] |= fv[i] >= 0;
        }
      }
      bool all = true;
      for (std::size_t i = 0; i < n; ++i) all = all && neg[i] && pos[i];
      if (all) {
        if (suspicious++ == 0) {
          first_hit.resize(n);
          for (std::size_t i = 0; i < n; ++i) first_hit[i] = sys.K[i] * idx[i] / (s - 1);
        }
      }
    }
    std::size_t i = 0;
    while (i < n && ++idx[i] == s - 1) idx[i++] = 0;
    if (i == n) break;
  }
  if (suspicious == 0) {
    caveats.push_back(fmt::format(
        "no sign-change cell away from 0 and K at {} samples per axis; global uniqueness of "
        "equilibria in I is not certified",
        s));
  } else {
    std::string at;
    for (std::size_t i = 0; i < n; ++i) at += fmt::format("{}{:.6g}", i ? ", " : "", first_hit[i]);
    caveats.push_back(fmt::format(
        "{} lattice cells away from 0 and K contain a sign change of every component (first at ({})); "
        "a further equilibrium may exist",
        suspicious, at));
  }
}

}  // namespace

HypothesisReport audit_hypotheses(const ReactionSystem& sys, int samples_per_axis) {
  if (samples_per_axis < 2)
    fail(ErrorCode::InvalidArgument, "audit needs samples_per_axis >= 2");
  const int s = samples_per_axis;
  const std::size_t n = sys.n();
  HypothesisReport rep;
  rep.samples_per_axis = s;
  const Vec zero(n, 0.0);
  const auto jd = jacobians(sys);

  if (n == 2) {
    {
      Auditor a("H1");
      check_equilibria(a, sys);
      rep.results.push_back(a.finish());
    }
    {
      Auditor a("H2");
      check_cooperative(a, sys, s);
      rep.results.push_back(a.finish());
    }
    {
      Auditor a("H3");
      const auto& A = jd.A0;
      const auto& B = jd.AK;
      strict_negative(a, zero, "alpha1", A(0, 0));
      strict_negative(a, zero, "alpha2", A(1, 1));
      strict_negative(a, sys.K, "alpha1_bar", B(0, 0));
      strict_negative(a, sys.K, "alpha2_bar", B(1, 1));
      strict_negative(a, zero, "alpha1*alpha2-beta1*beta2", A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0));
      strict_negative(a, sys.K, "beta1_bar*beta2_bar-alpha1_bar*alpha2_bar",
                      B(0, 1) * B(1, 0) - B(0, 0) * B(1, 1));
      strict_negative(a, sys.K, "-beta1_bar*beta2_bar", -B(0, 1) * B(1, 0));
      rep.results.push_back(a.finish());
    }
    {
      Auditor a("H4");
      check_concave(a, sys, s);
      const auto& B = jd.AK;
      const double a1 = B(0, 0), a2 = B(1, 1), b1 = B(0, 1), b2 = B(1, 0);
      strict_negative(a, sys.K, "alpha1_bar+beta2_bar", a1 + b2);
      strict_negative(a, sys.K, "alpha2_bar+beta1_bar", a2 + b1);
      strict_negative(a, sys.K, "2*alpha1_bar+beta1_bar+beta2_bar", 2 * a1 + b1 + b2);
      strict_negative(a, sys.K, "2*alpha2_bar+beta1_bar+beta2_bar", 2 * a2 + b1 + b2);
      rep.results.push_back(a.finish());
    }
  } else {
    for (const char* h : {"H1", "H2", "H3", "H4"})
      rep.results.push_back(not_applicable(h, "two-component hypothesis; see A-family"));
  }

  {
    Auditor a("A1");
    check_equilibria(a, sys);
    rep.results.push_back(a.finish());
  }
  {
    Auditor a("A2");
    check_cooperative(a, sys, s);
    rep.results.push_back(a.finish());
  }
  {
    Auditor a("A4");
    check_concave(a, sys, s);
    const auto& B = jd.AK;
    for (std::size_t j = 0; j < n; ++j) {
      strict_negative(a, sys.K, fmt::format("column_sum_{}", j + 1), B.col(j).sum());
      double cross = 2 * B(j, j);
      for (std::size_t k = 0; k < n; ++k)
        if (k != j) cross += B(j, k) + B(k, j);
      strict_negative(a, sys.K, fmt::format("cross_sum_{}", j + 1), cross);
    }
    rep.results.push_back(a.finish());
  }

  if (const auto* epi = sys.epidemic()) {
    const double a1 = epi->a1(), a2 = epi->a2();
    const double K1 = sys.K[0], K2 = sys.K[1];
    const double tol = 1e-12 * equilibrium_scale(sys);
    {
      Auditor a("B1");
      const auto h0 = epi->hbar(0.0), g0 = epi->gbar(0.0);
      a.check(std::abs(h0.value) <= tol, {0.0}, "hbar(0)", h0.value, std::abs(h0.value));
      a.check(std::abs(g0.value) <= tol, {0.0}, "gbar(0)", g0.value, std::abs(g0.value));
      const double gK = epi->gbar(K1).value / a2;
      a.check(std::abs(K2 - gK) <= tol, {K1}, "K2-gbar(K1)/a2", K2 - gK, std::abs(K2 - gK));
      const double hg = epi->hbar(gK).value - a1 * K1;
      a.check(std::abs(hg) <= tol, {K1}, "hbar(gbar(K1)/a2)-a1*K1", hg, std::abs(hg));
      for (int k = 1; k < s - 1; ++k) {
        const double u = K1 * k / (s - 1);
        const double v = epi->hbar(epi->gbar(u).value / a2).value - a1 * u;
        a.check(v > 0, {u}, "hbar(gbar(u)/a2)-a1*u", v, -v);
      }
      rep.results.push_back(a.finish());
    }
    {
      Auditor a("B2");
      const double v = epi->hbar(0.0).d1 * epi->gbar(0.0).d1 - a1 * a2;
      a.check(v > 0, {0.0}, "hbar'(0)*gbar'(0)-a1*a2", v, -v);
      rep.results.push_back(a.finish());
    }
    {
      Auditor a("B3");
      for (int k = 0; k < s; ++k) {
        const double v = K2 * k / (s - 1);
        const auto h = epi->hbar(v);
        a.check(!(h.d2 > 0), {v}, "hbar''", h.d2, h.d2);
        a.check(h.d1 >= 0, {v}, "hbar'", h.d1, -h.d1);
        const double u = K1 * k / (s - 1);
        const auto g = epi->gbar(u);
        a.check(!(g.d2 > 0), {u}, "gbar''", g.d2, g.d2);
        a.check(g.d1 >= 0, {u}, "gbar'", g.d1, -g.d1);
      }
      rep.results.push_back(a.finish());
    }
    {
      Auditor a("B4");
      const double gp = epi->gbar(K1).d1, hp = epi->hbar(K2).d1;
      const double v = std::min(a1, a2) - std::max(gp, hp);
      a.check(v > 0, {K1, K2}, "min(a1,a2)-max(gbar'(K1),hbar'(K2))", v, -v);
      a.note(fmt::format("gbar'(K1)={:.17g}, hbar'(K2)={:.17g}", gp, hp));
      rep.results.push_back(a.finish());
    }
  } else {
    for (const char* h : {"B1", "B2", "B3", "B4"})
      rep.results.push_back(not_applicable(h, "not an epidemic-form model"));
  }

  scan_extra_equilibria(sys, s, rep.caveats);
  return rep;
}

}  // namespace twlab
