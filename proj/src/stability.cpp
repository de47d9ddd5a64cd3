#include "twlab/stability.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "twlab/error.hpp"

namespace twlab {

MonotoneCubic::MonotoneCubic(double x0, double h, std::span<const double> y)
    : x0_(x0), h_(h), y_(y.begin(), y.end()), s_(y.size(), 0.0) {
  const std::size_t N = y_.size();
  if (N < 2 || !(h > 0)) fail(ErrorCode::InvalidArgument, "interpolant needs two nodes and h > 0");
  // centered fourth-order slopes, one-sided fourth-order ones near the ends
  for (std::size_t j = 0; j < N; ++j) {
    if (N < 5) {
      s_[j] = j == 0 ? (y_[1] - y_[0]) / h : j + 1 == N ? (y_[j] - y_[j - 1]) / h : (y_[j + 1] - y_[j - 1]) / (2 * h);
    } else if (j >= 2 && j + 2 < N) {
      s_[j] = (y_[j - 2] - 8 * y_[j - 1] + 8 * y_[j + 1] - y_[j + 2]) / (12 * h);
    } else if (j < 2) {
      const double* u = y_.data() + j;
      s_[j] = j == 0 ? (-25 * u[0] + 48 * u[1] - 36 * u[2] + 16 * u[3] - 3 * u[4]) / (12 * h)
                     : (-3 * u[-1] - 10 * u[0] + 18 * u[1] - 6 * u[2] + u[3]) / (12 * h);
    } else {
      const double* u = y_.data() + j;
      s_[j] = j + 1 == N ? (25 * u[0] - 48 * u[-1] + 36 * u[-2] - 16 * u[-3] + 3 * u[-4]) / (12 * h)
                         : (3 * u[1] + 10 * u[0] - 18 * u[-1] + 6 * u[-2] - u[-3]) / (12 * h);
    }
  }
  for (std::size_t k = 0; k + 1 < N; ++k) {
    const double delta = (y_[k + 1] - y_[k]) / h;
    if (delta == 0) {
      s_[k] = s_[k + 1] = 0;
      continue;
    }
    double a = s_[k] / delta, b = s_[k + 1] / delta;
    if (a < 0) s_[k] = a = 0;
    if (b < 0) s_[k + 1] = b = 0;
    const double r = a * a + b * b;
    if (r > 9) {
      const double tau = 3 / std::sqrt(r);
      s_[k] = tau * a * delta;
      s_[k + 1] = tau * b * delta;
    }
  }
}

double MonotoneCubic::operator()(double x) const {
  const double u = (x - x0_) / h_;
  const double last = static_cast<double>(y_.size() - 1);
  if (u < -1e-9 || u > last + 1e-9)
    fail(ErrorCode::Domain, fmt::format("interpolation point {} outside [{}, {}]", x, x_lo(), x_hi()));
  std::size_t k = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, last - 1));
  const double t = u - static_cast<double>(k);
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y_[k] + (t3 - 2 * t2 + t) * h_ * s_[k] + (-2 * t3 + 3 * t2) * y_[k + 1] +
         (t3 - t2) * h_ * s_[k + 1];
}

PerturbationField moving_frame_deviation(const FieldState& snap, const WaveProfile& p, double c) {
  if (snap.grid.m != p.grid.m) fail(ErrorCode::InvalidArgument, "snapshot and profile grids differ in m");
  if (snap.n() != p.n()) fail(ErrorCode::InvalidArgument, "snapshot and profile dimensions differ");
  const double shift = c * snap.t;
  if (!std::isfinite(shift)) fail(ErrorCode::FrameShift, "frame shift is not finite");
  const double lo = p.grid.x_lo(), hi = p.grid.x_hi();
  std::vector<std::size_t> nodes;
  for (std::size_t j = 0; j < snap.grid.size(); ++j) {
    const double xi = snap.grid.x(j) + shift;
    if (xi >= lo && xi <= hi) nodes.push_back(j);
  }
  if (2 * nodes.size() < p.grid.size())
    fail(ErrorCode::FrameShift, fmt::format("frame shift {:.6g} leaves {} of {} profile nodes in the overlap", shift,
                                            nodes.size(), p.grid.size()));
  PerturbationField dev;
  dev.t = snap.t;
  dev.h = snap.grid.h();
  dev.V = Field(p.n(), nodes.size());
  dev.xi.resize(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) dev.xi[q] = snap.grid.x(nodes[q]) + shift;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const MonotoneCubic phi(p.grid.x_lo(), p.grid.h(), p.values.component(i));
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      // exact node hits skip the interpolant
      const double u = (dev.xi[q] - lo) * p.grid.m;
      const double r = std::round(u);
      const double ref = std::abs(u - r) < 1e-12 ? p.values(i, static_cast<std::size_t>(r)) : phi(dev.xi[q]);
      dev.V(i, q) = snap.values(i, nodes[q]) - ref;
    }
  }
  return dev;
}

std::vector<NormTuple> perturbation_norms(const PerturbationField& dev, const Weight& weight) {
  std::vector<NormTuple> out(dev.n());
  const std::size_t M = dev.xi.size();
  for (std::size_t i = 0; i < dev.n(); ++i) {
    NormTuple& t = out[i];
    for (std::size_t q = 0; q < M; ++q) {
      const double v = std::abs(dev.V(i, q));
      const double w = (q == 0 || q + 1 == M) ? 0.5 * dev.h : dev.h;
      t.linf = std::max(t.linf, v);
      t.l1 += w * v;
      t.l2 += w * v * v;
      t.wl1 += w * weight.omega1(dev.xi[q]) * v;
    }
    t.l2 = std::sqrt(t.l2);
  }
  return out;
}

double energy_functional(const PerturbationField& dev, std::span<const double> pq, const Weight& weight) {
  if (pq.size() != dev.n()) fail(ErrorCode::InvalidArgument, "energy weights have the wrong length");
  for (double v : pq)
    if (!(v > 0)) fail(ErrorCode::InvalidArgument, "energy weights must be positive");
  const auto norms = perturbation_norms(dev, weight);
  double e = 0;
  for (std::size_t i = 0; i < norms.size(); ++i) e += pq[i] * norms[i].wl1;
  return e;
}

void NormTrace::push(double t, std::vector<NormTuple> tuple, std::optional<double> e) {
  if (n == 0) n = tuple.size();
  if (tuple.size() != n) fail(ErrorCode::InvalidArgument, "norm tuple has the wrong length");
  if (!times.empty() && !(t > times.back()))
    fail(ErrorCode::InvalidArgument, fmt::format("trace times must increase ({} after {})", t, times.back()));
  if (!times.empty() && e.has_value() != (energy.size() == times.size()))
    fail(ErrorCode::InvalidArgument, "energy must be tracked for every sample or none");
  times.push_back(t);
  norms.push_back(std::move(tuple));
  if (e) energy.push_back(*e);
}

std::string NormTrace::csv() const {
  std::string s = "t";
  for (std::size_t i = 0; i < n; ++i) s += fmt::format(",linf_{0},l1_{0},l2_{0},wl1_{0}", i + 1);
  const bool with_e = !energy.empty();
  if (with_e) s += ",energy";
  s += "\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    s += fmt::format("{:.17g}", times[k]);
    for (const auto& t : norms[k]) s += fmt::format(",{:.17g},{:.17g},{:.17g},{:.17g}", t.linf, t.l1, t.l2, t.wl1);
    if (with_e) s += fmt::format(",{:.17g}", energy[k]);
    s += "\n";
  }
  return s;
}

const char* norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::Linf: return "linf";
    case NormKind::L1: return "l1";
    case NormKind::L2: return "l2";
    case NormKind::WeightedL1: return "wl1";
    case NormKind::Energy: return "energy";
  }
  return "?";
}

double select_norm(const NormTrace& tr, std::size_t k, const NormSelector& sel) {
  if (sel.kind == NormKind::Energy) {
    if (tr.energy.size() != tr.times.size()) fail(ErrorCode::InvalidArgument, "trace has no energy column");
    return tr.energy[k];
  }
  if (sel.component >= tr.n) fail(ErrorCode::InvalidArgument, fmt::format("component {} out of range", sel.component));
  const NormTuple& t = tr.norms[k][sel.component];
  switch (sel.kind) {
    case NormKind::Linf: return t.linf;
    case NormKind::L1: return t.l1;
    case NormKind::L2: return t.l2;
    default: return t.wl1;
  }
}

DecayFit fit_decay_rate(const NormTrace& tr, const NormSelector& sel, double t_lo, double t_hi,
                        std::optional<double> floor) {
  DecayFit fit;
  fit.t_lo = t_lo;
  fit.t_hi = t_hi;
  Vec ts, ys;
  bool above_floor = false;
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const double t = tr.times[k];
    if (t < t_lo || t > t_hi) continue;
    const double v = select_norm(tr, k, sel);
    if (!(v > 0))
      fail(ErrorCode::FitDomain, fmt::format("{} norm is {} at t = {}; cannot take its log", norm_kind_name(sel.kind), v, t));
    if (!floor || v > *floor) above_floor = true;
    ts.push_back(t);
    ys.push_back(std::log(v));
  }
  fit.samples = ts.size();
  if (ts.size() < 10)
    fail(ErrorCode::FitDomain, fmt::format("fit window [{}, {}] holds {} samples; need 10", t_lo, t_hi, ts.size()));
  const double N = static_cast<double>(ts.size());
  double tm = 0, ym = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    tm += ts[k];
    ym += ys[k];
  }
  tm /= N;
  ym /= N;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    stt += (ts[k] - tm) * (ts[k] - tm);
    sty += (ts[k] - tm) * (ys[k] - ym);
    syy += (ys[k] - ym) * (ys[k] - ym);
  }
  const double slope = sty / stt;
  fit.mu = -slope;
  fit.C = std::exp(ym - slope * tm);
  if (syy <= 1e-24 * N || !above_floor) {
    fit.degenerate = true;
    fit.r2 = std::numeric_limits<double>::quiet_NaN();
    if (syy <= 1e-24 * N) fit.mu = 0;
    return fit;
  }
  double sse = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double r = ys[k] - (ym + slope * (ts[k] - tm));
    sse += r * r;
  }
  fit.r2 = std::clamp(1.0 - sse / syy, 0.0, 1.0);
  return fit;
}

double SqueezeReport::max_violation() const { return std::max({ordering, sandwich, rectangle}); }

SqueezeReport squeeze_check(std::span<const FieldState> lower, std::span<const FieldState> mid,
                            std::span<const FieldState> upper, std::span<const FieldState> front,
                            const WaveProfile* profile) {
  if (lower.size() != mid.size() || mid.size() != upper.size() || (!front.empty() && front.size() != mid.size()))
    fail(ErrorCode::InvalidArgument, "squeeze runs differ in length");
  SqueezeReport rep;
  double worst = 0;
  auto bump = [&](double& slot, double v, double t) {
    if (v > slot) slot = v;
    if (v > worst) {
      worst = v;
      rep.worst_t = t;
    }
  };
  for (std::size_t k = 0; k < mid.size(); ++k) {
    const FieldState &a = lower[k], &b = mid[k], &c = upper[k];
    if (!a.grid.same_geometry(b.grid) || !b.grid.same_geometry(c.grid) || std::abs(a.t - b.t) > 1e-12 ||
        std::abs(b.t - c.t) > 1e-12)
      fail(ErrorCode::InvalidArgument, fmt::format("squeeze runs differ at sample {}", k));
    const double t = b.t;
    for (std::size_t i = 0; i < b.n(); ++i) {
      for (std::size_t j = 0; j < b.grid.size(); ++j) {
        bump(rep.ordering, a.values(i, j) - b.values(i, j), t);
        bump(rep.ordering, b.values(i, j) - c.values(i, j), t);
        bump(rep.rectangle, -a.values(i, j), t);
        bump(rep.rectangle, c.values(i, j) - c.K[i], t);
        if (!front.empty()) {
          const double f = front[k].values(i, j);
          bump(rep.sandwich, a.values(i, j) - f, t);
          bump(rep.sandwich, f - c.values(i, j), t);
        }
      }
    }
    if (profile && profile->c > 0) {
      const auto lo = moving_frame_deviation(a, *profile, profile->c);
      const auto up = moving_frame_deviation(c, *profile, profile->c);
      for (std::size_t i = 0; i < lo.n(); ++i)
        for (std::size_t q = 0; q < lo.xi.size(); ++q) {
          rep.phi_sandwich = std::max(rep.phi_sandwich, lo.V(i, q));
          rep.phi_sandwich = std::max(rep.phi_sandwich, -up.V(i, q));
        }
    }
  }
  return rep;
}

double interpolation_floor(const WaveProfile& p) {
  const std::size_t N = p.grid.size();
  if (N < 9) fail(ErrorCode::Domain, "profile too small for the interpolation floor");
  double worst = 0;
  const double h2 = 2 * p.grid.h();
  for (std::size_t i = 0; i < p.n(); ++i) {
    std::vector<double> even;
    for (std::size_t j = 0; j < N; j += 2) even.push_back(p.values(i, j));
    const MonotoneCubic coarse(p.grid.x_lo(), h2, even);
    // stay clear of the one-sided slopes at the ends
    for (std::size_t j = 5; j + 5 < N; j += 2) worst = std::max(worst, std::abs(coarse(p.xi(j)) - p.values(i, j)));
  }
  return worst / 16.0;
}

void record_norms(NormTrace& trace, const FieldState& snap, const WaveProfile& p, const Weight& weight,
                  bool with_energy) {
  const auto dev = moving_frame_deviation(snap, p, p.c);
  auto norms = perturbation_norms(dev, weight);
  std::optional<double> e;
  if (with_energy) {
    e = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i) *e += p.spectral.pq[i] * norms[i].wl1;
  }
  trace.push(snap.t, std::move(norms), e);
}

StabilityRun run_stability(const ReactionSystem& sys, const WaveProfile& p, const StabilitySettings& st) {
  st.evolve.validate(sys);
  if (!(st.sample_interval > 0)) fail(ErrorCode::InvalidArgument, "sample_interval must be positive");
  if (!(st.t_lo < st.t_hi)) fail(ErrorCode::InvalidArgument, "fit window must have t_lo < t_hi");
  StabilityRun run;
  const double t_end = st.evolve.t_end;
  run.grid = evolution_grid(p, t_end, st.margins);
  run.initial = make_initial_data(p, st.perturbation, run.grid);
  const InitialData front0 = make_initial_data(p, {}, run.grid);
  run.zero_perturbation = run.initial.max_abs == 0;
  run.floor = interpolation_floor(p);
  const Weight weight(p.spectral.gamma, p.spectral.xi0);

  run.steps = static_cast<std::size_t>(std::ceil(t_end / st.evolve.dt - 1e-9));
  run.dt = run.steps ? t_end / static_cast<double>(run.steps) : st.evolve.dt;
  EvolveConfig one = st.evolve;
  one.dt = run.dt;
  const std::size_t every = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(st.sample_interval / run.dt)));

  FieldState mid = run.initial.state;
  std::optional<FieldState> front, lower, upper;
  if (!run.zero_perturbation) front = front0.state;
  const bool squeeze = st.squeeze && !run.zero_perturbation;
  if (squeeze) {
    auto split = squeeze_split(mid, front0.state);
    lower = std::move(split.lower);
    upper = std::move(split.upper);
    run.squeeze = SqueezeReport{};
  }

  auto sample = [&] {
    record_norms(run.trace, mid, p, weight, true);
    if (front) record_norms(run.front_trace, *front, p, weight, true);
    if (squeeze) {
      const auto r = squeeze_check(std::span(&*lower, 1), std::span(&mid, 1), std::span(&*upper, 1),
                                   std::span(&*front, 1), &p);
      auto& acc = *run.squeeze;
      if (r.max_violation() > acc.max_violation()) acc.worst_t = r.worst_t;
      acc.ordering = std::max(acc.ordering, r.ordering);
      acc.sandwich = std::max(acc.sandwich, r.sandwich);
      acc.rectangle = std::max(acc.rectangle, r.rectangle);
      acc.phi_sandwich = std::max(acc.phi_sandwich, r.phi_sandwich);
    }
  };

  sample();
  for (std::size_t k = 1; k <= run.steps; ++k) {
    const double t = k == run.steps ? t_end : static_cast<double>(k) * run.dt;
    mid = step(sys, mid, one, &run.clip);
    mid.t = t;
    for (auto* s : {&front, &lower, &upper})
      if (*s) {
        **s = step(sys, **s, one, &run.clip);
        (*s)->t = t;
      }
    if (k % every == 0 || k == run.steps) sample();
  }
  if (run.zero_perturbation) run.front_trace = run.trace;

  for (const auto& sample_norms : run.front_trace.norms)
    for (const auto& c : sample_norms) run.transport_max = std::max(run.transport_max, c.linf);

  auto linf_max = [](const std::vector<NormTuple>& v) {
    double m = 0;
    for (const auto& c : v) m = std::max(m, c.linf);
    return m;
  };
  run.initial_linf = linf_max(run.trace.norms.front());
  run.terminal_linf = linf_max(run.trace.norms.back());
  run.terminal_ratio = run.initial_linf > 0 ? run.terminal_linf / run.initial_linf : 0.0;

  if (run.zero_perturbation) {
    const double limit = st.transport_factor * run.floor;
    if (run.transport_max > limit)
      run.failures.push_back(fmt::format("zero-perturbation deviation {:.3e} exceeds {} x floor = {:.3e}",
                                         run.transport_max, st.transport_factor, limit));
    return run;
  }

  run.mu = std::numeric_limits<double>::infinity();
  run.r2_worst = 1;
  for (std::size_t i = 0; i < p.n(); ++i) {
    try {
      const auto f = fit_decay_rate(run.trace, {NormKind::Linf, i}, st.t_lo, st.t_hi);
      run.linf_fits.push_back(f);
      run.mu = std::min(run.mu, f.mu);
      run.r2_worst = f.degenerate ? 0.0 : std::min(run.r2_worst, f.r2);
    } catch (const Error& e) {
      run.linf_fits.push_back(DecayFit{});
      run.mu = std::min(run.mu, 0.0);
      run.r2_worst = 0;
      run.failures.push_back(fmt::format("component {} L-inf fit: {}", i + 1, e.what()));
    }
  }
  try {
    run.energy_fit = fit_decay_rate(run.trace, {NormKind::Energy, 0}, st.t_lo, st.t_hi);
  } catch (const Error&) {
    run.energy_fit = DecayFit{};
    run.energy_fit.degenerate = true;
  }
  const auto& E = run.trace.energy;
  const auto& E0 = run.front_trace.energy;
  for (std::size_t k = 1; k < E.size(); ++k) {
    if (run.trace.times[k - 1] < st.energy_from) continue;
    const double inc = E[k] - E[k - 1];
    run.energy_raw_increase = std::max(run.energy_raw_increase, inc);
    // |E - E_pert| <= E_front, so only growth beyond the front's own E counts
    const double excess = inc - std::max(E0[k], E0[k - 1]);
    if (excess > run.energy_excess) {
      run.energy_excess = excess;
      run.energy_excess_t = run.trace.times[k];
    }
  }

  for (std::size_t i = 0; i < run.linf_fits.size(); ++i) {
    const auto& f = run.linf_fits[i];
    if (!(f.mu > 0)) run.failures.push_back(fmt::format("component {}: fitted mu = {:.4g} is not positive", i + 1, f.mu));
    if (f.degenerate || !(f.r2 >= st.r2_min))
      run.failures.push_back(fmt::format("component {}: r2 = {:.4f} below {}", i + 1, f.r2, st.r2_min));
  }
  if (!(run.terminal_ratio <= st.terminal_ratio_max))
    run.failures.push_back(fmt::format("terminal L-inf ratio {:.3e} above {:.1e}", run.terminal_ratio,
                                       st.terminal_ratio_max));
  if (run.energy_excess > 0)
    run.failures.push_back(
        fmt::format("energy grew by {:.3e} beyond the front floor at t = {:.4g}", run.energy_excess, run.energy_excess_t));
  if (run.squeeze && run.squeeze->max_violation() > st.squeeze_tol)
    run.failures.push_back(fmt::format("squeeze violation {:.3e} at t = {:.4g}", run.squeeze->max_violation(),
                                       run.squeeze->worst_t));
  if (!run.clip.within_budget())
    run.failures.push_back(fmt::format("clipped overshoot {:.3e} over budget", run.clip.total));
  return run;
}

}  // namespace twlab
