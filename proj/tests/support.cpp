#include "support.hpp"

#include <map>
#include <tuple>

namespace fixture {

const twlab::ProfileSolution& profile(const std::string& model, int m, double L, double tol) {
  static std::map<std::tuple<std::string, int, double, double>, twlab::ProfileSolution> cache;
  const auto key = std::make_tuple(model, m, L, tol);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const auto sys = model == "ricker" ? ricker() : holling();
  const auto p = twlab::CharParams::from(sys);
  const double c = 1.1 * twlab::compute_c_star(p);
  twlab::ProfileOptions o;
  o.m = m;
  o.L = L;
  o.tol = tol;
  o.max_iter = 5000;
  return cache.emplace(key, twlab::solve_profile(sys, twlab::spectral_report(sys, c), o)).first->second;
}

}  // namespace fixture
