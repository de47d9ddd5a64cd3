#pragma once

#include <functional>
#include <string>
#include <vector>

#include "twlab/field.hpp"
#include "twlab/grid.hpp"
#include "twlab/model.hpp"
#include "twlab/profile.hpp"

namespace twlab {

/// Snapshot of the Cauchy problem on a truncated grid.
struct FieldState {
  Grid grid;
  double t = 0;
  Field values;
  Vec K;

  std::size_t n() const { return values.components(); }
};

enum class Stepper { Rk4, ExplicitEuler };
enum class Boundary { EquilibriumClamp };

const char* stepper_name(Stepper s);

struct EvolveConfig {
  double dt = 0.01;
  double t_end = 1;
  Stepper stepper = Stepper::Rk4;
  int snapshot_every = 1;
  Boundary boundary = Boundary::EquilibriumClamp;

  /// 0.2 / (4 max d_i + Lip f).
  static double dt_bound(const ReactionSystem& sys);
  /// Config with dt at the stability bound.
  static EvolveConfig for_system(const ReactionSystem& sys, double t_end, int snapshot_every = 1);
  void validate(const ReactionSystem& sys) const;
};

/// Overshoot outside [0, K] up to clip_tolerance is clipped and counted here.
struct ClipLedger {
  static constexpr double clip_tolerance = 1e-9;
  std::size_t clipped = 0;
  double total = 0;
  double max = 0;
  double node_steps = 0;

  void merge(const ClipLedger& o);
  /// total <= 1e-9 * node_steps
  bool within_budget() const { return total <= 1e-9 * node_steps; }
};

/// d-free second difference v(x+1) - 2 v(x) + v(x-1) of component i, with 0
/// read left of the grid and K_i read right of it.
Vec discrete_laplacian(const FieldState& state, std::size_t i);

/// d D[v] + f(v) for every component and node.
Field evolution_rhs(const ReactionSystem& sys, const FieldState& state);

FieldState step(const ReactionSystem& sys, const FieldState& state, const EvolveConfig& cfg,
                ClipLedger* clip = nullptr);

using SnapshotSink = std::function<void(const FieldState&)>;

struct EvolveRun {
  std::vector<FieldState> snapshots;  // empty when a sink consumed them
  ClipLedger clip;
  std::size_t steps = 0;
  double dt = 0;  // dt actually used (t_end / steps)
};

/// Steps to t_end, emitting state0, every snapshot_every-th state and the
/// final state.
EvolveRun integrate(const ReactionSystem& sys, const FieldState& state0, const EvolveConfig& cfg,
                    const SnapshotSink& sink = {});

struct ComparisonResult {
  double max_violation = 0;  // max over steps and nodes of (lower - upper)+
  double worst_t = 0;
  std::size_t steps = 0;
  ClipLedger clip;
};

/// Integrates lower0 and upper0 in lockstep and tracks the ordering.
ComparisonResult comparison_harness(const ReactionSystem& sys, const FieldState& lower0, const FieldState& upper0,
                                    const EvolveConfig& cfg);

/// v- = min(v0, phi) and v+ = max(v0, phi), with phi sampled on the state grid.
struct SqueezeSplit {
  FieldState lower;
  FieldState upper;
};

SqueezeSplit squeeze_split(const FieldState& v0, const FieldState& front0);

// ---------------------------------------------------------------------------
// Initial data

enum class BumpKind { Gaussian, Cosine };

const char* bump_kind_name(BumpKind k);

/// A bump added to every component. Gaussian: A exp(-((x - x0)/w)^2);
/// cosine: A cos^2(pi (x - x0) / (2 w)) on |x - x0| < w.
struct Bump {
  BumpKind kind = BumpKind::Cosine;
  double amplitude = 0;
  double center = 0;
  bool center_at_front = false;  // place x0 at the profile midpoint
  double width = 1;

  double operator()(double x0, double x) const;
};

struct Perturbation {
  std::vector<Bump> bumps;
};

/// The zero closure on the left leaves a boundary layer in the leading edge
/// decaying like e^{-2 lambda1 x}; the left margin covers it down to left_tol.
struct DomainMargins {
  double left_min = 10;      // extra room beyond c t_end
  double left_tol = 1e-14;
  double right_max = 100;    // cap for the right extension
  double right_tol = 1e-12;  // right extension stops once the closure is this close to K
};

/// [-L - c t_end - left, L + right]; the front phi(x + ct) moves toward -x.
Grid evolution_grid(const WaveProfile& profile, double t_end, const DomainMargins& margins = {});

struct InitialData {
  FieldState state;
  double weighted_l1 = 0;  // sum over components, omega1 from the profile spectral data
  double h1 = 0;
  double max_abs = 0;
};

/// phi (with its closures off the profile window) plus the perturbation,
/// sampled on grid. Throws Range naming the node when 0 <= v0 <= K fails.
InitialData make_initial_data(const WaveProfile& profile, const Perturbation& pert, const Grid& grid);

// ---------------------------------------------------------------------------
// Snapshot streams

void write_snapshot_text(const FieldState& s, const std::string& path);
void write_snapshot_binary(const FieldState& s, const std::string& path);
FieldState read_snapshot_text(const std::string& path);
FieldState read_snapshot_binary(const std::string& path);

}  // namespace twlab
