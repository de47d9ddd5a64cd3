#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "twlab/error.hpp"
#include "twlab/evolve.hpp"

using namespace twlab;

namespace {

FieldState filled(const ReactionSystem& sys, const Grid& g, const std::function<double(std::size_t, double)>& v) {
  FieldState s;
  s.grid = g;
  s.K = sys.K;
  s.values = Field(sys.n(), g.size());
  for (std::size_t i = 0; i < sys.n(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) s.values(i, j) = v(i, g.x(j));
  return s;
}

double max_diff(const FieldState& a, const FieldState& b, std::size_t skip = 0) {
  double d = 0;
  for (std::size_t i = 0; i < a.n(); ++i)
    for (std::size_t j = skip; j + skip < a.values.nodes(); ++j)
      d = std::max(d, std::abs(a.values(i, j) - b.values(i, j)));
  return d;
}

std::string tmp(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("discrete laplacian") {
  const auto sys = fixture::holling();
  const auto g = Grid::symmetric(10, 8);
  const auto c = filled(sys, g, [](std::size_t, double) { return 0.4; });
  const auto lin = filled(sys, g, [](std::size_t, double x) { return 0.5 + 0.01 * x; });
  const double lam = 0.7;
  const auto ex = filled(sys, g, [&](std::size_t, double x) { return 1e-3 * std::exp(lam * x); });
  const double symbol = std::exp(lam) + std::exp(-lam) - 2;
  const auto Dc = discrete_laplacian(c, 0), Dl = discrete_laplacian(lin, 1), De = discrete_laplacian(ex, 0);
  double worst = 0;
  for (std::size_t j = g.m; j + g.m < g.size(); ++j) {
    CHECK(Dc[j] == 0.0);
    CHECK(std::abs(Dl[j]) <= 1e-15);
    const double want = symbol * ex.values(0, j);
    worst = std::max(worst, std::abs(De[j] - want) / want);
  }
  CHECK(worst <= 1e-13);
}

TEST_CASE("equilibria are fixed points of a step") {
  // the closures read 0 on the left and K on the right, so a constant state is
  // only stationary beyond the reach of one RK4 step (4 unit shifts)
  const auto sys = fixture::holling();
  const auto g = Grid::symmetric(4, 10);
  const std::size_t reach = 4 * g.m;
  auto cfg = EvolveConfig::for_system(sys, 1.0);
  const auto zero = filled(sys, g, [](std::size_t, double) { return 0.0; });
  const auto s0 = step(sys, zero, cfg);
  CHECK(max_diff(s0, zero, reach) == 0.0);
  CHECK(s0.values(0, g.size() - 1) > 0);
  const auto K = filled(sys, g, [&](std::size_t i, double) { return sys.K[i]; });
  const auto sK = step(sys, K, cfg);
  CHECK(max_diff(sK, K, reach) <= 1e-13);
  CHECK(sK.values(0, 0) < sys.K[0]);
  CHECK(sK.t == doctest::Approx(cfg.dt));
}

TEST_CASE("t_end = 0 returns the initial state only") {
  const auto sys = fixture::holling();
  const auto s = filled(sys, Grid::symmetric(2, 10), [](std::size_t, double x) { return x > 0 ? 1.0 : 0.0; });
  const auto run = integrate(sys, s, EvolveConfig::for_system(sys, 0.0));
  REQUIRE(run.snapshots.size() == 1);
  CHECK(run.steps == 0);
  CHECK(max_diff(run.snapshots[0], s) == 0.0);
}

TEST_CASE("dt above the stability bound is rejected") {
  const auto sys = fixture::holling();
  auto cfg = EvolveConfig::for_system(sys, 1.0);
  cfg.dt *= 1.5;
  CHECK_THROWS_AS(cfg.validate(sys), Error);
}

TEST_CASE("RK4 temporal order on the front run") {
  const auto sys = fixture::holling();
  const auto& p = fixture::profile("holling2").profile;
  const double T = 2;
  const auto grid = evolution_grid(p, T);
  const auto init = make_initial_data(p, {}, grid);
  const double dt = EvolveConfig::dt_bound(sys);
  FieldState out[3];
  for (int k = 0; k < 3; ++k) {
    EvolveConfig cfg;
    cfg.t_end = T;
    cfg.dt = dt / (1 << k);
    cfg.snapshot_every = 1 << 30;
    out[k] = integrate(sys, init.state, cfg).snapshots.back();
  }
  const double e1 = max_diff(out[0], out[1]), e2 = max_diff(out[1], out[2]);
  MESSAGE("dt-halving ratio " << e1 / e2);
  CHECK(std::log2(e1 / e2) >= 3.8);
}

TEST_CASE("explicit Euler runs and is first order") {
  const auto sys = fixture::holling();
  const auto& p = fixture::profile("holling2").profile;
  const auto grid = evolution_grid(p, 1.0);
  const auto init = make_initial_data(p, {}, grid);
  FieldState out[3];
  for (int k = 0; k < 3; ++k) {
    EvolveConfig cfg;
    cfg.t_end = 1;
    cfg.stepper = Stepper::ExplicitEuler;
    cfg.dt = EvolveConfig::dt_bound(sys) / (1 << k);
    cfg.snapshot_every = 1 << 30;
    out[k] = integrate(sys, init.state, cfg).snapshots.back();
  }
  const double order = std::log2(max_diff(out[0], out[1]) / max_diff(out[1], out[2]));
  CHECK(order == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("lattice mode m = 1 matches the lattice vector field") {
  for (const auto& sys : {fixture::holling(), fixture::ricker()}) {
    const auto g = Grid::span(1, -6, 6);
    const auto s = filled(sys, g, [&](std::size_t i, double x) { return sys.K[i] / (1 + std::exp(-x)); });
    const auto rhs = evolution_rhs(sys, s);
    for (std::size_t k = 0; k < g.size(); ++k) {
      Vec u{s.values(0, k), s.values(1, k)};
      const auto f = sys.f(u);
      for (std::size_t i = 0; i < 2; ++i) {
        const double left = k == 0 ? 0.0 : s.values(i, k - 1);
        const double right = k + 1 == g.size() ? sys.K[i] : s.values(i, k + 1);
        const double want = sys.d[i] * (right - 2 * s.values(i, k) + left) + f[i];
        CHECK(rhs(i, k) == want);
      }
    }
  }
}

TEST_CASE("comparison principle on random ordered pairs") {
  const auto sys = fixture::holling();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> U(0, 1);
  const auto g = Grid::symmetric(2, 15);
  auto cfg = EvolveConfig::for_system(sys, 5.0);
  for (int k = 0; k < 20; ++k) {
    const double a = U(rng) * 0.8, w = 1 + 3 * U(rng), x0 = 10 * (U(rng) - 0.5);
    auto lower = filled(sys, g, [&](std::size_t i, double x) { return a * sys.K[i] / (1 + std::exp(-(x - x0) / w)); });
    auto upper = lower;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < g.size(); ++j)
        upper.values(i, j) = std::min(sys.K[i], lower.values(i, j) + 0.2 * U(rng) * sys.K[i]);
    const auto r = comparison_harness(sys, lower, upper, cfg);
    CHECK(r.max_violation <= 1e-10);
    CHECK(r.clip.within_budget());
  }
}

TEST_CASE("comparison of trivial pairs") {
  const auto sys = fixture::holling();
  const auto g = Grid::symmetric(2, 10);
  auto cfg = EvolveConfig::for_system(sys, 3.0);
  const auto s = filled(sys, g, [&](std::size_t i, double x) { return sys.K[i] / (1 + std::exp(-x)); });
  CHECK(comparison_harness(sys, s, s, cfg).max_violation == 0.0);
  const auto zero = filled(sys, g, [](std::size_t, double) { return 0.0; });
  const auto K = filled(sys, g, [&](std::size_t i, double) { return sys.K[i]; });
  CHECK(comparison_harness(sys, zero, K, cfg).max_violation == 0.0);
  // stationary away from the opposite closure
  cfg.snapshot_every = 1 << 30;
  const auto wide = Grid::symmetric(1, 60);
  const auto z = filled(sys, wide, [](std::size_t, double) { return 0.0; });
  const auto k = filled(sys, wide, [&](std::size_t i, double) { return sys.K[i]; });
  CHECK(max_diff(integrate(sys, z, cfg).snapshots.back(), z, 40) <= 1e-12);
  CHECK(max_diff(integrate(sys, k, cfg).snapshots.back(), k, 40) <= 1e-12);
}

TEST_CASE("squeeze split") {
  const auto sys = fixture::holling();
  const auto g = Grid::symmetric(2, 10);
  const auto front = filled(sys, g, [&](std::size_t i, double x) { return sys.K[i] / (1 + std::exp(-x)); });
  const auto v = filled(sys, g, [&](std::size_t i, double x) { return sys.K[i] / (1 + std::exp(-x + std::sin(x))); });
  const auto sp = squeeze_split(v, front);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      CHECK(sp.lower.values(i, j) == std::min(v.values(i, j), front.values(i, j)));
      CHECK(sp.upper.values(i, j) == std::max(v.values(i, j), front.values(i, j)));
    }
}

TEST_CASE("initial data") {
  const auto& p = fixture::profile("holling2").profile;
  const auto grid = evolution_grid(p, 10);
  const auto plain = make_initial_data(p, {}, grid);
  CHECK(plain.weighted_l1 == 0.0);
  CHECK(plain.max_abs == 0.0);
  const std::int64_t off = p.grid.first - grid.first;
  for (std::size_t j = 0; j < p.values.nodes(); ++j) CHECK(plain.state.values(1, j + off) == p.values(1, j));

  Perturbation bump;
  // centered on the front midpoint; at x = 0 phi is already 0.97 K
  bump.bumps.push_back({BumpKind::Cosine, 0.1, 0.0, true, 5.0});
  const auto b = make_initial_data(p, bump, grid);
  CHECK(std::isfinite(b.weighted_l1));
  CHECK(b.weighted_l1 > 0);
  CHECK(b.max_abs == doctest::Approx(0.1).epsilon(1e-12));

  Perturbation big;
  big.bumps.push_back({BumpKind::Cosine, 2.0 * p.K[0], 0.0, false, 5.0});
  try {
    make_initial_data(p, big, grid);
    FAIL("expected Range");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Range);
  }
}

TEST_CASE("bump shapes") {
  const Bump c{BumpKind::Cosine, 2.0, 0.0, false, 4.0};
  CHECK(c(1.0, 1.0) == 2.0);
  CHECK(c(1.0, 5.0) == 0.0);
  CHECK(c(1.0, 3.0) == doctest::Approx(1.0).epsilon(1e-14));
  const Bump gs{BumpKind::Gaussian, 2.0, 0.0, false, 4.0};
  CHECK(gs(0.0, 4.0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("evolution grid") {
  const auto& p = fixture::profile("holling2").profile;
  const auto g = evolution_grid(p, 20);
  CHECK(g.m == p.grid.m);
  CHECK(g.x_lo() <= -p.L - p.c * 20 - 10);
  CHECK(g.x_hi() >= p.L);
  CHECK(g.x_hi() <= p.L + 100);
}

TEST_CASE("snapshot round trips") {
  const auto sys = fixture::ricker();
  auto s = filled(sys, Grid::span(10, -3, 4), [&](std::size_t i, double x) { return sys.K[i] / (1 + std::exp(-x)); });
  s.t = 1.0 / 3.0;
  const auto pt = tmp("twlab_snap.txt"), pb = tmp("twlab_snap.bin");
  write_snapshot_text(s, pt);
  write_snapshot_binary(s, pb);
  for (const auto& r : {read_snapshot_text(pt), read_snapshot_binary(pb)}) {
    CHECK(r.grid.same_geometry(s.grid));
    CHECK(r.t == s.t);
    CHECK(r.K == s.K);
    CHECK(max_diff(r, s) == 0.0);
  }
  std::remove(pt.c_str());
  {
    std::FILE* f = std::fopen(pb.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_snapshot_binary(pb), Error);
  std::remove(pb.c_str());
}

TEST_CASE("clip ledger budget") {
  ClipLedger c;
  c.node_steps = 1e6;
  c.total = 1e-3;
  CHECK(c.within_budget());
  c.total = 2e-3;
  CHECK_FALSE(c.within_budget());
  ClipLedger d;
  d.clipped = 2, d.total = 1e-10, d.max = 6e-11, d.node_steps = 10;
  c.merge(d);
  CHECK(c.clipped == 2);
  CHECK(c.node_steps == 1e6 + 10);
  CHECK(c.max == 6e-11);
}
