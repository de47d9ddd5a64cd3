#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "twlab/error.hpp"
#include "twlab/spectral.hpp"

using namespace twlab;

namespace {

double E(double l) { return std::exp(l) + std::exp(-l) - 2; }

double bisect(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a);
  for (int k = 0; k < 200; ++k) {
    const double m = 0.5 * (a + b), fm = f(m);
    if ((fm < 0) == (fa < 0)) a = m, fa = fm;
    else b = m;
  }
  return 0.5 * (a + b);
}

CharParams sym2(double d, double alpha, double beta) {
  CharParams p;
  p.d = {d, d};
  p.A0 = Eigen::MatrixXd(2, 2);
  p.A0 << alpha, beta, beta, alpha;
  p.AK = p.A0;
  return p;
}

}  // namespace

TEST_CASE("shift symbol and f_i") {
  CHECK(shift_symbol(0.0) == 0.0);
  CHECK(shift_symbol(1e-9) == doctest::Approx(1e-18).epsilon(1e-12));
  const auto p = sym2(1, -1, 2);
  CHECK(eval_f_i(0, 0.0, 3.7, p) == -1.0);
  CHECK(eval_f_i(1, 1.0, 2.0, p) == doctest::Approx(-1.913838730369512443).epsilon(1e-15));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-3, 3);
  for (int k = 0; k < 100; ++k) {
    const double l = U(rng), c = U(rng);
    CHECK(eval_f_i(0, l, c, p) == doctest::Approx(eval_f_i(0, -l, -c, p)).epsilon(1e-14));
  }
}

TEST_CASE("characteristic polynomial identities") {
  const auto p = CharParams::from(fixture::holling());
  CHECK(p.A0(0, 0) == doctest::Approx(-1.0));
  CHECK(p.A0(0, 1) == doctest::Approx(2.0));
  for (double c : {0.5, 2.0, 3.3}) {
    CHECK(eval_char_poly(0, c, p) == doctest::Approx(1.0 - 4.0).epsilon(1e-15));
    for (std::size_t i = 0; i < 2; ++i) {
      const auto r = f_i_roots(i, c, p);
      CHECK(r.minus < 0);
      CHECK(r.plus > 0);
      CHECK(eval_char_poly(r.minus, c, p) == doctest::Approx(-4.0).epsilon(1e-12));
      CHECK(eval_char_poly(r.plus, c, p) == doctest::Approx(-4.0).epsilon(1e-12));
    }
    for (double l : {-1.0, 0.3, 1.7}) {
      const double a = eval_char_poly(l, c, p), b = eval_char_poly_det(l, c, p);
      CHECK(std::abs(a - b) <= 1e-14 * std::max({1.0, std::abs(a)}));
    }
  }
}

TEST_CASE("threshold speed against the oracle") {
  const auto p = CharParams::from(fixture::holling());
  const double cs = compute_c_star(p);
  CHECK(std::abs(cs - fixture::holling_c_star) <= 1e-8);
  CHECK(cs >= fixture::holling_c_star);
  const auto pr = CharParams::from(fixture::ricker());
  CHECK(std::abs(compute_c_star(pr) - fixture::ricker_c_star) <= 1e-8);

  const auto at = find_positive_roots(cs, p);
  REQUIRE(at);
  CHECK(at->lambda2 - at->lambda1 <= 1e-3);
}

TEST_CASE("positive roots above and below threshold") {
  const auto p = CharParams::from(fixture::holling());
  const double c = 1.1 * fixture::holling_c_star;
  const auto r = find_positive_roots(c, p);
  REQUIRE(r);
  CHECK(r->lambda1 == doctest::Approx(fixture::holling_lambda1).epsilon(1e-10));
  CHECK(r->lambda2 == doctest::Approx(fixture::holling_lambda2).epsilon(1e-10));
  CHECK(eval_char_poly(0.5 * (r->lambda1 + r->lambda2), c, p) > 0);
  CHECK_FALSE(find_positive_roots(0.9 * fixture::holling_c_star, p));

  // below c* the dense-grid maximum of P on (0, lambda_m^+) is negative
  const double cl = 0.99 * fixture::holling_c_star;
  const double top = lambda_m_plus(cl, p);
  double best = -1e300;
  for (int k = 1; k < 20000; ++k) best = std::max(best, eval_char_poly(top * k / 20000.0, cl, p));
  CHECK(best < 0);

  // symmetric model: P = f^2 - beta^2, so the roots solve f = -beta
  auto f = [&](double l) { return E(l) - c * l - 1 + 2; };
  CHECK(r->lambda1 == doctest::Approx(bisect(f, 1e-9, fixture::holling_lambda_star)).epsilon(1e-12));
  CHECK(r->lambda2 == doctest::Approx(bisect(f, fixture::holling_lambda_star, 10)).epsilon(1e-12));
}

TEST_CASE("stronger coupling raises the threshold") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(0.3, 2.0);
  for (int k = 0; k < 10; ++k) {
    CharParams p;
    p.d = {U(rng), U(rng)};
    p.A0 = Eigen::MatrixXd(2, 2);
    p.A0 << -U(rng), U(rng), U(rng), -U(rng);
    if (p.A0.determinant() >= 0) p.A0(0, 1) *= 4 / std::abs(p.A0(0, 1) * p.A0(1, 0)) + 1;
    p.AK = p.A0;
    const double c1 = compute_c_star(p);
    auto q = p;
    q.A0(0, 1) *= 2, q.A0(1, 0) *= 2;
    q.AK = q.A0;
    CHECK(compute_c_star(q) > c1);
  }
}

TEST_CASE("lower threshold") {
  const auto zero = compute_c_star_lower(1.0, 0.0);
  CHECK(zero.kind == LowerThreshold::Kind::ZeroInfimum);
  CHECK(zero.value == 0.0);
  const auto unit = compute_c_star_lower(1.0, 1.0);
  CHECK(unit.kind == LowerThreshold::Kind::Minimum);
  CHECK(unit.value == doctest::Approx(fixture::lower_unit_value).epsilon(1e-10));
  CHECK(unit.argmin == doctest::Approx(fixture::lower_unit_argmin).epsilon(1e-6));
  const auto flat = compute_c_star_lower(0.0, 1.0);
  CHECK(flat.kind == LowerThreshold::Kind::InfimumAtInfinity);
  CHECK(flat.value == 0.0);
}

TEST_CASE("barred polynomial crossing and decay rate at K") {
  const auto p = CharParams::from(fixture::holling());
  const double c = 1.1 * fixture::holling_c_star;
  CHECK(eval_char_poly(0, c, p, At::K) == doctest::Approx(1 - 0.25).epsilon(1e-14));
  const double lb = find_lambda_bar(c, p);
  CHECK(lb == doctest::Approx(2.1001788583449749528).epsilon(1e-9));
  CHECK(k_side_decay_rate(c, p) == doctest::Approx(fixture::holling_rho).epsilon(1e-10));
  // observed direction: the crossing moves right as c grows
  CHECK(find_lambda_bar(1.2 * c, p) > lb);
}

TEST_CASE("sign determinants") {
  Eigen::MatrixXd A(2, 2);
  A << -1, 0.5, 0.5, -1;
  CHECK(check_sign_determinants(A).ok);
  const auto x = positive_vector(A);
  REQUIRE(x);
  const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x->data(), 2);
  CHECK((A * xv).maxCoeff() < 0);
  CHECK(xv.minCoeff() > 0);

  A << -1, 2, 2, -1;
  CHECK_FALSE(check_sign_determinants(A).ok);
  CHECK_FALSE(positive_vector(A));

  Eigen::MatrixXd one(1, 1);
  one << -0.3;
  CHECK(check_sign_determinants(one).ok);

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> U(0.01, 2.0);
  int agree = 0;
  for (int k = 0; k < 200; ++k) {
    Eigen::MatrixXd B(2, 2);
    B << -U(rng), U(rng), U(rng), -U(rng);
    if (std::abs(B.determinant()) < 1e-8) continue;
    CHECK(check_sign_determinants(B).ok == (B.determinant() > 0));
    ++agree;
  }
  CHECK(agree > 190);

  for (int k = 0; k < 200; ++k) {
    Eigen::MatrixXd B(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) B(i, j) = i == j ? -U(rng) : 0.5 * U(rng);
    CHECK(check_sign_determinants(B).ok == positive_vector(B).has_value());
  }
}

TEST_CASE("weight") {
  const auto w = build_weight(0.7, 2.0);
  CHECK(w(2.0) == 1.0);
  CHECK(w(1.0) == doctest::Approx(std::exp(0.7)).epsilon(1e-15));
  double prev = 1e300;
  for (double xi = -20; xi <= 10; xi += 0.1) {
    CHECK(w(xi) <= prev);
    prev = w(xi);
    if (xi <= 2.0) CHECK(w(xi) * std::exp(0.7 * (xi - 2.0)) == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(build_weight(-1, 0), Error);
}

TEST_CASE("kernel eigenvector") {
  const auto p = CharParams::from(fixture::holling());
  const double c = 1.1 * fixture::holling_c_star;
  const auto eta = kernel_eigenvector(fixture::holling_lambda1, c, p);
  CHECK(eta[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eta[1] == doctest::Approx(1.0).epsilon(1e-12));

  const auto pr = CharParams::from(fixture::ricker());
  const double cr = 1.1 * fixture::ricker_c_star;
  const auto v = kernel_eigenvector(fixture::ricker_lambda1, cr, pr);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(v.data(), 2);
  auto residual = [&](double l) { return (char_matrix(l, cr, pr) * x).cwiseAbs().maxCoeff(); };
  CHECK(v[0] > 0);
  CHECK(v[1] > 0);
  CHECK(std::max(v[0], v[1]) == 1.0);
  CHECK(residual(fixture::ricker_lambda1) <= 1e-8);
  const double r1 = residual(fixture::ricker_lambda1 + 1e-2), r2 = residual(fixture::ricker_lambda1 + 2e-2);
  CHECK(r1 > 1e-4);
  CHECK(r2 / r1 == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("weight parameters") {
  const auto p = CharParams::from(fixture::holling());
  const double c = 1.1 * fixture::holling_c_star;
  const auto w = select_weight_params(c, p);
  CHECK(w.gamma > fixture::holling_lambda1);
  CHECK(w.gamma < fixture::holling_lambda2);
  CHECK(w.P_gamma > 0);
  REQUIRE(w.pq.size() == 2);
  const double f1 = eval_f_i(0, w.gamma, c, p), f2 = eval_f_i(1, w.gamma, c, p);
  CHECK(w.pq[0] * f1 + w.pq[1] * p.A0(1, 0) < 0);
  CHECK(w.pq[0] * p.A0(0, 1) + w.pq[1] * f2 < 0);

  double prev_gamma = 1e300, prev_P = 1e300;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const auto s = select_weight_params(c, p, eps);
    CHECK(s.gamma < prev_gamma);
    CHECK(s.P_gamma > 0);
    CHECK(s.P_gamma < prev_P);
    prev_gamma = s.gamma, prev_P = s.P_gamma;
  }
  CHECK(prev_gamma - fixture::holling_lambda1 == doctest::Approx(1e-5).epsilon(1e-6));
}

TEST_CASE("spectral report") {
  const auto sys = fixture::holling();
  const double c = 1.1 * fixture::holling_c_star;
  const auto s = spectral_report(sys, c);
  CHECK(s.lambda1 < s.lambda2);
  CHECK(s.gamma > s.lambda1);
  CHECK(s.gamma < s.lambda2);
  CHECK(s.pq[0] > 0);
  CHECK(s.pq[1] > 0);
  CHECK(s.rho == doctest::Approx(fixture::holling_rho).epsilon(1e-10));
  // -alpha_bar_1 - beta_bar_2 > 0: the combination is positive at +infinity
  CHECK(-s.AK(0, 0) - s.AK(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.digest() == spectral_report(sys, c).digest());
  CHECK(s.digest() != spectral_report(sys, 1.2 * fixture::holling_c_star).digest());

  try {
    spectral_report(sys, 0.9 * fixture::holling_c_star);
    FAIL("expected SubThreshold");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SubThreshold);
  }
}

TEST_CASE("three-component positive vector") {
  QuadraticTables t;
  t.n = 3;
  t.constant = {0, 0, 0};
  t.linear = {-1, 1, 0.5, 0.5, -1, 1, 1, 0.5, -1};
  t.quadratic.assign(27, 0.0);
  t.quadratic[0] = t.quadratic[13] = t.quadratic[26] = -0.5;
  const auto sys = make_quadratic_model("coop3", {1, 0.5, 2}, {1, 1, 1}, t);
  const auto p = CharParams::from(sys);
  const double cs = compute_c_star(p);
  const double c = 1.1 * cs;
  const auto s = spectral_report(sys, c);
  CHECK(s.n == 3);
  CHECK(s.pq_ledger.ok);
  REQUIRE(s.pq.size() == 3);
  // oracle: the transposed linear part at gamma maps v to a negative vector
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(s.pq.data(), 3);
  CHECK(v.minCoeff() > 0);
  CHECK((char_matrix(s.gamma, c, p).transpose() * v).maxCoeff() < 0);
  // the root pair straddles a positive value of (-1)^n det J
  const double mid = 0.5 * (s.lambda1 + s.lambda2);
  CHECK(-eval_char_poly_det(mid, c, p) > 0);
  CHECK(-eval_char_poly_det(s.lambda1, c, p) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}
