#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twlab/evolve.hpp"
#include "twlab/profile.hpp"
#include "twlab/spectral.hpp"

namespace twlab {

/// Piecewise cubic Hermite interpolant on a uniform grid. Node slopes are
/// fourth-order differences, limited (Fritsch-Carlson) so monotone data give
/// a monotone interpolant.
class MonotoneCubic {
 public:
  MonotoneCubic(double x0, double h, std::span<const double> y);

  double operator()(double x) const;
  double x_lo() const { return x0_; }
  double x_hi() const { return x0_ + h_ * static_cast<double>(y_.size() - 1); }

 private:
  double x0_;
  double h_;
  std::vector<double> y_;
  std::vector<double> s_;
};

/// V_i(xi_j, t) = v_i(x_j, t) - phi_i(xi_j) with xi_j = x_j + c t, on the
/// snapshot nodes whose xi_j lies inside the profile window.
struct PerturbationField {
  double t = 0;
  double h = 0;
  Vec xi;
  Field V;

  std::size_t n() const { return V.components(); }
};

/// Throws FrameShift when fewer than half the profile nodes overlap.
PerturbationField moving_frame_deviation(const FieldState& snapshot, const WaveProfile& profile, double c);

struct NormTuple {
  double linf = 0;
  double l1 = 0;
  double l2 = 0;
  double wl1 = 0;  // weight omega1 over the whole overlap
};

/// One tuple per component; trapezoid quadrature.
std::vector<NormTuple> perturbation_norms(const PerturbationField& dev, const Weight& weight);

/// sum_i pq_i |V_i|_{L1, omega1}.
double energy_functional(const PerturbationField& dev, std::span<const double> pq, const Weight& weight);

struct NormTrace {
  std::size_t n = 0;
  Vec times;
  std::vector<std::vector<NormTuple>> norms;  // [sample][component]
  Vec energy;                                 // empty when not tracked

  void push(double t, std::vector<NormTuple> tuple, std::optional<double> e = {});
  /// t, then linf/l1/l2/wl1 per component, then energy when tracked.
  std::string csv() const;
};

enum class NormKind { Linf, L1, L2, WeightedL1, Energy };

const char* norm_kind_name(NormKind k);

struct NormSelector {
  NormKind kind = NormKind::Linf;
  std::size_t component = 0;  // ignored for Energy
};

double select_norm(const NormTrace& trace, std::size_t sample, const NormSelector& sel);

struct DecayFit {
  double mu = 0;
  double C = 0;
  double r2 = 0;  // NaN when degenerate
  double t_lo = 0;
  double t_hi = 0;
  std::size_t samples = 0;
  bool degenerate = false;
};

/// Least squares on (t, log norm) over samples with t in [t_lo, t_hi].
/// FitDomain when fewer than 10 samples or a nonpositive norm. Degenerate
/// when log norm is flat or (with a floor) every sample sits at or below it.
DecayFit fit_decay_rate(const NormTrace& trace, const NormSelector& sel, double t_lo, double t_hi,
                        std::optional<double> floor = {});

struct SqueezeReport {
  double ordering = 0;    // max (v- - v)+ and (v - v+)+
  double sandwich = 0;    // max (v- - front)+ and (front - v+)+ against the evolved front
  double rectangle = 0;   // max (-v-)+ and (v+ - K)+
  double phi_sandwich = 0;  // same as sandwich against the resampled profile (informational)
  double worst_t = 0;

  double max_violation() const;
};

/// front may be empty; profile may be null (phi_sandwich then stays 0).
SqueezeReport squeeze_check(std::span<const FieldState> lower, std::span<const FieldState> mid,
                            std::span<const FieldState> upper, std::span<const FieldState> front = {},
                            const WaveProfile* profile = nullptr);

/// Max error of reconstructing the odd profile nodes from the even ones,
/// scaled by 2^-4 to the spacing h. Interior nodes only.
double interpolation_floor(const WaveProfile& profile);

/// Norms of one snapshot, optionally with the energy.
void record_norms(NormTrace& trace, const FieldState& snapshot, const WaveProfile& profile, const Weight& weight,
                  bool with_energy);

// ---------------------------------------------------------------------------
// Perturbed-front experiment

struct StabilitySettings {
  EvolveConfig evolve;           // dt, t_end, stepper; snapshot_every is ignored
  double sample_interval = 0.25;  // time between norm samples
  Perturbation perturbation;
  DomainMargins margins;
  double t_lo = 5;
  double t_hi = 40;
  bool squeeze = true;
  double squeeze_tol = 1e-10;
  double r2_min = 0.98;
  double terminal_ratio_max = 1e-3;
  double energy_from = 1;
  double transport_factor = 10;  // zero-perturbation runs: max L-inf <= factor * floor
};

struct StabilityRun {
  bool zero_perturbation = false;
  Grid grid;
  std::size_t steps = 0;
  double dt = 0;
  InitialData initial;
  NormTrace trace;        // perturbed run
  NormTrace front_trace;  // unperturbed run; equals trace for a zero perturbation
  std::vector<DecayFit> linf_fits;
  DecayFit energy_fit;
  double mu = 0;  // min over the per-component L-inf fits
  double r2_worst = 0;
  double initial_linf = 0;
  double terminal_linf = 0;
  double terminal_ratio = 0;
  // E(t_k) - E(t_{k-1}) beyond the unperturbed run's E, for t >= energy_from
  double energy_excess = 0;
  double energy_excess_t = 0;
  double energy_raw_increase = 0;
  double floor = 0;
  double transport_max = 0;  // max L-inf of the unperturbed run
  std::optional<SqueezeReport> squeeze;
  ClipLedger clip;
  std::vector<std::string> failures;

  bool pass() const { return failures.empty(); }
};

/// Evolves phi + perturbation (and, when needed, phi itself and the min/max
/// split) in lockstep, records norms every sample_interval and judges decay,
/// energy, squeeze and transport against the settings.
StabilityRun run_stability(const ReactionSystem& sys, const WaveProfile& profile, const StabilitySettings& settings);

}  // namespace twlab
