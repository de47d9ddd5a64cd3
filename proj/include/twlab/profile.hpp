#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "twlab/field.hpp"
#include "twlab/grid.hpp"
#include "twlab/model.hpp"
#include "twlab/spectral.hpp"

namespace twlab {

/// Symmetric profile domain [-L, L] with m nodes per unit.
struct ProfileGrid {
  int m = 10;
  double L = 40;

  Grid grid() const;  // validates L >= 10 and L*m integral
};

/// Closures used outside the truncated domain. Left of -L each component
/// follows eta_i e^{lambda s} + chi_i e^{2 lambda s} + b_i e^{lambda2 s},
/// s = xi - anchor; right of L the deviation from K decays at rate rho from
/// its value at L (plain K when rho is not set).
struct TailModel {
  Vec eta;
  Vec chi;
  Vec b;  // second-root mode, fitted from a solve; empty until then
  double lambda = 0;
  double lambda2 = 0;
  double anchor = 0;
  double rho = 0;

  double left(std::size_t i, double xi) const;
};

struct WaveProfile {
  Grid grid;
  double L = 0;
  double c = 0;
  Field values;
  Vec K;
  TailModel tail;
  SpectralReport spectral;
  std::string spectral_digest;

  std::size_t n() const { return values.components(); }
  double xi(std::size_t j) const { return grid.x(j); }
  /// Value at integer node index k, which may lie outside the grid.
  double extended(std::size_t i, std::int64_t k) const;
  /// Node index (into values) of the first node where phi_1 reaches K_1 / 2.
  std::size_t midpoint_node() const;
};

/// Outcome of a numerical differential-inequality check.
struct InequalityCheck {
  std::size_t checked = 0;
  std::size_t excluded = 0;  // nodes inside a kink band
  std::size_t failing = 0;
  double worst = 0;          // largest violation (0 when none)
  double worst_xi = 0;
  std::size_t worst_component = 0;
  double fraction_ok() const { return checked ? 1.0 - double(failing) / double(checked) : 1.0; }
};

struct SuperSubPair {
  Field upper;
  Field lower;
  double anchor = 0;
  double M = 1;
  double eps_prime = 0;
  InequalityCheck upper_check;
  InequalityCheck lower_check;
};

/// Supersolution min{K_i, eta_i e^{lambda1 (xi - anchor)}}; the operator
/// d D[phi] + f(phi) - c phi' must be <= 1e-9 away from the kinks.
Field build_supersolution(const ReactionSystem& sys, const SpectralReport& spec, const Grid& grid, double anchor,
                          InequalityCheck* check = nullptr);

struct Subsolution {
  Field values;
  double M = 1;
  double eps_prime = 0;
  InequalityCheck check;
};

/// Subsolution max{0, eta_i e^{lambda1 s}(1 - M e^{eps' s})}, s = xi - anchor,
/// with M the smallest power of two (up to 2^20) passing the inequality check.
Subsolution build_subsolution(const ReactionSystem& sys, const SpectralReport& spec, const Grid& grid, double anchor,
                              std::optional<double> eps_prime = {});

SuperSubPair make_super_sub_pair(const ReactionSystem& sys, const SpectralReport& spec, const Grid& grid,
                                 double anchor, std::optional<double> eps_prime = {});

/// beta = max_i (2 d_i + max over I of |df_i/du_i|) + 1.
double default_beta(const ReactionSystem& sys);

struct MonotoneLog {
  int iterations = 0;
  bool converged = false;
  Vec deltas;                   // sup-norm change per iteration
  double max_increase = 0;      // largest nodewise increase between iterates
  double min_gap_lower = 0;     // min over iterates of (phi - lower)
  double max_gap_upper = 0;     // max over iterates of (phi - upper)
  double beta = 0;
};

/// Monotone iteration from pair.upper. Throws Convergence at max_iter and
/// MonotonicityBreach when an iterate increases or leaves the sandwich by
/// more than 1e-10.
Field monotone_iterate(const ReactionSystem& sys, double c, const SuperSubPair& pair, const TailModel& tail,
                       const Grid& grid, double beta, double tol, int max_iter, MonotoneLog* log = nullptr);

struct ResidualReport {
  double max = 0;
  double xi = 0;
  std::size_t component = 0;
  std::size_t nodes = 0;
};

/// max |c phi' - d D[phi] - f(phi)| with a five-point derivative, over nodes
/// at least one unit from each end.
ResidualReport profile_residual(const ReactionSystem& sys, const WaveProfile& profile);

struct BoundaryVerdict {
  bool pass = false;
  double left_worst = 0;   // max |phi| in the left window
  double right_worst = 0;  // max |phi - K| in the right window
  bool left_ok = false;
  bool right_ok = false;
};

BoundaryVerdict check_boundary_limits(const WaveProfile& profile, double tail_fraction, double tol);

/// Smallest xi beyond which the column and cross combinations of -df(phi) are
/// positive, plus one unit.
double select_xi0(const ReactionSystem& sys, const WaveProfile& profile);

/// Second-order tail coefficient: J(2 lambda1) chi = -(1/2) d2f(0)[eta, eta].
Vec tail_correction(const ReactionSystem& sys, const SpectralReport& spec);

/// Correction to the second-root coefficients b from the profile's departure
/// from its own left closure over [-L, -L + 10] (also fitting the e^{lambda s}
/// and e^{3 lambda s} parts). Empty when the window is too short.
Vec fit_tail_mode(const WaveProfile& profile);

/// Anchor that balances the left tail against the slow approach to K.
double default_anchor(double L, double lambda1, double rho, double tail_fraction);

struct ProfileOptions {
  int m = 10;
  double L = 40;
  double tol = 1e-8;
  int max_iter = 1000;
  double tail_fraction = 0.05;
  int tail_passes = 3;  // re-solves with a fitted second-root tail mode
  std::optional<double> beta;
  std::optional<double> anchor;
  std::optional<double> eps_prime;
};

struct ProfileSolution {
  WaveProfile profile;
  SuperSubPair pair;
  MonotoneLog log;  // of the final pass
  int passes = 1;
  int total_iterations = 0;
};

/// Builds the pair and iterates. Refuses c <= c*(1 + 1e-6).
ProfileSolution solve_profile(const ReactionSystem& sys, const SpectralReport& spec, const ProfileOptions& opt);

/// Delimited-text interchange format.
void write_profile(const WaveProfile& p, const std::string& path);
WaveProfile read_profile(const std::string& path);

}  // namespace twlab
