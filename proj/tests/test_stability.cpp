#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "twlab/error.hpp"
#include "twlab/stability.hpp"

using namespace twlab;

namespace {

NormTrace synthetic(const std::function<double(double)>& g, double t_end = 50, double dt = 0.25) {
  NormTrace tr;
  tr.n = 1;
  for (double t = 0; t <= t_end + 1e-12; t += dt) {
    NormTuple nt;
    nt.linf = nt.l1 = nt.l2 = nt.wl1 = g(t);
    tr.push(t, {nt}, g(t));
  }
  return tr;
}

PerturbationField flat_field(double h, double lo, double hi, const std::function<double(double)>& v) {
  PerturbationField f;
  f.h = h;
  const auto N = static_cast<std::size_t>(std::lround((hi - lo) / h)) + 1;
  f.V = Field(2, N);
  for (std::size_t j = 0; j < N; ++j) {
    const double xi = lo + h * static_cast<double>(j);
    f.xi.push_back(xi);
    f.V(0, j) = v(xi);
    f.V(1, j) = -0.5 * v(xi);
  }
  return f;
}

FieldState front_state(const WaveProfile& p, const Grid& g, std::int64_t shift) {
  FieldState s;
  s.grid = g;
  s.K = p.K;
  s.values = Field(p.n(), g.size());
  for (std::size_t i = 0; i < p.n(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      s.values(i, j) = p.extended(i, g.first + static_cast<std::int64_t>(j) + shift);
  return s;
}

}  // namespace

TEST_CASE("monotone cubic") {
  std::vector<double> y;
  for (int k = 0; k <= 40; ++k) y.push_back(std::tanh(0.3 * (k - 20)));
  const MonotoneCubic mc(-2.0, 0.1, y);
  CHECK(mc.x_lo() == -2.0);
  CHECK(mc.x_hi() == doctest::Approx(2.0));
  double prev = -2;
  for (double x = -2; x <= 2; x += 0.013) {
    const double v = mc(x);
    CHECK(v >= prev - 1e-15);
    prev = v;
  }
  CHECK(mc(0.0) == doctest::Approx(0.0).scale(1));
  CHECK(std::abs(mc(0.05) - std::tanh(3 * 0.05)) <= 2.5e-4);
}

TEST_CASE("moving-frame deviation") {
  const auto& p = fixture::profile("holling2").profile;
  const auto g = Grid::span(p.grid.m, -60, 60);

  const auto at0 = moving_frame_deviation(front_state(p, g, 0), p, p.c);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < at0.xi.size(); ++j) CHECK(at0.V(i, j) == 0.0);

  // phi(x + s) with s a whole number of nodes at t = s / c
  const std::int64_t k = 37;
  auto moved = front_state(p, g, k);
  moved.t = static_cast<double>(k) / p.grid.m / p.c;
  const auto dev = moving_frame_deviation(moved, p, p.c);
  double worst = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < dev.xi.size(); ++j) worst = std::max(worst, std::abs(dev.V(i, j)));
  CHECK(worst <= std::pow(p.grid.h(), 3));

  auto bumped = front_state(p, g, 0);
  const Bump b{BumpKind::Cosine, 0.05, -5.0, false, 3.0};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < g.size(); ++j) bumped.values(i, j) += b(-5.0, g.x(j));
  const auto db = moving_frame_deviation(bumped, p, p.c);
  for (std::size_t j = 0; j < db.xi.size(); ++j)
    CHECK(std::abs(db.V(0, j) - b(-5.0, db.xi[j])) <= 1e-15);

  auto far = front_state(p, g, 0);
  far.t = 100 / p.c;
  CHECK_THROWS_AS(moving_frame_deviation(far, p, p.c), Error);
}

TEST_CASE("norms of simple deviations") {
  const Weight w(0.5, 0.0);
  const auto zero = flat_field(0.01, -5, 5, [](double) { return 0.0; });
  for (const auto& n : perturbation_norms(zero, w)) {
    CHECK(n.linf == 0.0);
    CHECK(n.l1 == 0.0);
    CHECK(n.l2 == 0.0);
    CHECK(n.wl1 == 0.0);
  }
  CHECK(energy_functional(zero, Vec{1.0, 2.0}, w) == 0.0);

  // plateau of height 2 on [1, 4], width 3
  const auto box = flat_field(0.001, -5, 10, [](double x) { return x >= 1 && x <= 4 ? 2.0 : 0.0; });
  const auto nb = perturbation_norms(box, w)[0];
  CHECK(nb.linf == 2.0);
  CHECK(nb.l1 == doctest::Approx(6.0).epsilon(1e-3));
  CHECK(nb.l2 == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-3));
  // omega1 decays right of xi0
  CHECK(nb.wl1 < nb.l1);

  // left of xi0 the weight exceeds 1
  const auto left = flat_field(0.001, -10, 5, [](double x) { return x >= -4 && x <= -1 ? 2.0 : 0.0; });
  const auto nl = perturbation_norms(left, w)[0];
  CHECK(nl.wl1 > nl.l1);
}

TEST_CASE("norm homogeneity") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(-1, 1);
  auto base = flat_field(0.1, -20, 20, [&](double) { return U(rng); });
  const Weight w(0.4, 3.0);
  const Vec pq{1.3, 0.7};
  const auto n0 = perturbation_norms(base, w);
  const double e0 = energy_functional(base, pq, w);
  for (double s : {0.5, 3.0, 1e-3}) {
    auto f = base;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < f.xi.size(); ++j) f.V(i, j) *= s;
    const auto n = perturbation_norms(f, w);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(n[i].linf == doctest::Approx(s * n0[i].linf).epsilon(1e-14));
      CHECK(n[i].l1 == doctest::Approx(s * n0[i].l1).epsilon(1e-14));
      CHECK(n[i].l2 == doctest::Approx(s * n0[i].l2).epsilon(1e-14));
      CHECK(n[i].wl1 == doctest::Approx(s * n0[i].wl1).epsilon(1e-14));
    }
    CHECK(energy_functional(f, pq, w) == doctest::Approx(s * e0).epsilon(1e-14));
  }
}

TEST_CASE("weighted L1 dominates L1 left of xi0") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> U(-1, 1);
  const double xi0 = 2.0;
  const auto f = flat_field(0.05, -30, xi0, [&](double) { return U(rng); });
  const auto n = perturbation_norms(f, Weight(0.6, xi0));
  for (const auto& c : n) CHECK(c.wl1 >= c.l1);
}

TEST_CASE("decay fit") {
  const auto tr = synthetic([](double t) { return 3 * std::exp(-0.7 * t); });
  const auto f = fit_decay_rate(tr, {NormKind::Linf, 0}, 5, 40);
  CHECK(f.mu == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(f.C == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(f.samples == 141);
  CHECK_FALSE(f.degenerate);

  const auto flat = fit_decay_rate(synthetic([](double) { return 0.2; }), {NormKind::Linf, 0}, 5, 40);
  CHECK(flat.degenerate);
  CHECK(flat.mu == 0.0);
  CHECK(std::isnan(flat.r2));

  const auto at_floor = fit_decay_rate(synthetic([](double t) { return 1e-9 * (1 + 0.1 * std::sin(t)); }),
                                       {NormKind::Linf, 0}, 5, 40, 1e-8);
  CHECK(at_floor.degenerate);

  CHECK_THROWS_AS(fit_decay_rate(tr, {NormKind::Linf, 0}, 5, 6), Error);
  CHECK_THROWS_AS(fit_decay_rate(synthetic([](double t) { return t < 10 ? 1.0 : 0.0; }), {NormKind::Linf, 0}, 5, 40),
                  Error);
}

TEST_CASE("decay fit is shift-equivariant") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> U(-0.05, 0.05);
  std::vector<double> noise;
  for (int k = 0; k < 400; ++k) noise.push_back(U(rng));
  auto g = [&](double t) { return 2 * std::exp(-0.4 * t + noise[static_cast<std::size_t>(std::lround(t * 4))]); };
  const auto base = fit_decay_rate(synthetic(g), {NormKind::Energy, 0}, 5, 40);
  for (double a : {0.1, 0.25, -0.3}) {
    const auto f = fit_decay_rate(synthetic([&](double t) { return g(t) * std::exp(a * t); }), {NormKind::Energy, 0}, 5, 40);
    CHECK(f.mu == doctest::Approx(base.mu - a).epsilon(1e-12));
    CHECK(f.C == doctest::Approx(base.C).epsilon(1e-12));
  }
}

TEST_CASE("norm trace csv") {
  NormTrace tr;
  tr.n = 2;
  tr.push(0.0, {{1, 2, 3, 4}, {5, 6, 7, 8}}, 9.0);
  tr.push(0.25, {{0.5, 1, 1.5, 2}, {2.5, 3, 3.5, 4}}, 4.5);
  const auto csv = tr.csv();
  CHECK(csv.rfind("t,linf_1,l1_1,l2_1,wl1_1,linf_2,l1_2,l2_2,wl1_2,energy\n", 0) == 0);
  CHECK(select_norm(tr, 1, {NormKind::L2, 1}) == 3.5);
  CHECK(select_norm(tr, 1, {NormKind::Energy, 0}) == 4.5);
}

TEST_CASE("squeeze detector") {
  const auto& p = fixture::profile("holling2").profile;
  const auto g = Grid::span(p.grid.m, -50, 50);
  std::vector<FieldState> mid{front_state(p, g, 0), front_state(p, g, 3)};
  mid[1].t = 0.1;
  const auto same = squeeze_check(mid, mid, mid);
  CHECK(same.max_violation() == 0.0);

  std::vector<FieldState> lower = mid, upper = mid;
  for (auto& s : lower)
    for (std::size_t j = 0; j < g.size(); ++j) s.values(0, j) *= 0.99;
  const auto ok = squeeze_check(lower, mid, upper);
  CHECK(ok.ordering == 0.0);
  const auto swapped = squeeze_check(upper, mid, lower);
  CHECK(swapped.ordering == doctest::Approx(0.01 * mid[0].values(0, g.size() - 1)));
  const auto bad = squeeze_check(mid, lower, upper);
  CHECK(bad.ordering > 1e-4);
  CHECK(bad.max_violation() > 1e-4);
}

TEST_CASE("interpolation floor") {
  const double f10 = interpolation_floor(fixture::profile("holling2").profile);
  const double f20 = interpolation_floor(fixture::profile("holling2", 20).profile);
  CHECK(f10 > 0);
  CHECK(f10 < 1e-8);
  CHECK(f20 < f10 / 8);
}

TEST_CASE("short holling2 stability run") {
  const auto sys = fixture::holling();
  const auto& p = fixture::profile("holling2").profile;
  StabilitySettings st;
  st.evolve = EvolveConfig::for_system(sys, 10);
  st.evolve.dt = 0.25 / std::ceil(0.25 / st.evolve.dt);
  st.perturbation.bumps.push_back({BumpKind::Cosine, 0.1, 0.0, true, 4.0});
  st.t_lo = 2;
  st.t_hi = 8;
  const auto run = run_stability(sys, p, st);
  CHECK_FALSE(run.zero_perturbation);
  REQUIRE(run.squeeze);
  CHECK(run.squeeze->max_violation() <= 1e-10);
  CHECK(run.clip.within_budget());
  CHECK(run.energy_excess <= 0.0);
  CHECK(run.mu > 0);
  CHECK(run.trace.times.size() == 41);
  CHECK(run.initial_linf == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("zero perturbation runs report the transport floor") {
  const auto sys = fixture::holling();
  const auto& p = fixture::profile("holling2").profile;
  StabilitySettings st;
  st.evolve = EvolveConfig::for_system(sys, 4);
  st.t_lo = 1;
  st.t_hi = 3;
  const auto run = run_stability(sys, p, st);
  CHECK(run.zero_perturbation);
  CHECK(run.floor == interpolation_floor(p));
  CHECK(run.transport_max > 0);
  CHECK(run.initial_linf == 0.0);
}
