#include "twlab/twlab.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "twlab/experiment.hpp"

struct tw_model {
  twlab::ReactionSystem sys;
};

struct tw_profile {
  twlab::WaveProfile profile;
  int iterations = 0;
};

struct tw_experiment {
  twlab::ExperimentConfig cfg;
};

namespace {

thread_local std::string last_error;

tw_status set_error(tw_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class F>
tw_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return TW_OK;
  } catch (const twlab::Error& e) {
    return set_error(static_cast<tw_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(TW_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(TW_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(TW_E_INTERNAL, "unknown exception");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) twlab::fail(twlab::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* tw_version(void) { return "0.1.0"; }

const char* tw_status_name(tw_status s) {
  if (s == TW_OK) return "ok";
  if (s == TW_E_INTERNAL) return "internal";
  if (s >= TW_E_INVALID_ARGUMENT && s <= TW_E_IO) return twlab::error_code_name(static_cast<twlab::ErrorCode>(s));
  return "unknown";
}

const char* tw_last_error(void) { return last_error.c_str(); }

int tw_exit_status(tw_status s) {
  if (s == TW_OK) return 0;
  if (s >= TW_E_INVALID_ARGUMENT && s <= TW_E_IO) return twlab::exit_status_for(static_cast<twlab::ErrorCode>(s));
  return twlab::exit_status::numeric;
}

void tw_string_free(char* s) { std::free(s); }

void tw_holling2_defaults(tw_holling2_params* p) {
  if (!p) return;
  const twlab::Holling2Params d;
  *p = {d.a1, d.a2, d.d1, d.d2, d.alpha1, d.alpha2, d.beta1, d.beta2, d.gamma1, d.gamma2};
}

void tw_ricker_defaults(tw_ricker_params* p) {
  if (!p) return;
  const twlab::RickerParams d;
  *p = {d.a, d.a1, d.a2, d.d1, d.d2, d.p, d.q, d.m};
}

tw_status tw_model_holling2(const tw_holling2_params* p, tw_model** out) {
  return guarded([&] {
    need(p, "params"), need(out, "out");
    *out = nullptr;
    twlab::Holling2Params h{p->a1,     p->a2,     p->d1,    p->d2,    p->alpha1,
                            p->alpha2, p->beta1, p->beta2, p->gamma1, p->gamma2};
    *out = new tw_model{twlab::make_holling2_model(h)};
  });
}

tw_status tw_model_ricker(const tw_ricker_params* p, tw_model** out) {
  return guarded([&] {
    need(p, "params"), need(out, "out");
    *out = nullptr;
    twlab::RickerParams r{p->a, p->a1, p->a2, p->d1, p->d2, p->p, p->q, p->m};
    *out = new tw_model{twlab::make_ricker_model(r)};
  });
}

tw_status tw_model_custom(const char* name, size_t n, const double* d, const double* K, const double* constant,
                          const double* linear, const double* quadratic, tw_model** out) {
  return guarded([&] {
    need(d, "d"), need(K, "K"), need(linear, "linear"), need(out, "out");
    *out = nullptr;
    if (n == 0) twlab::fail(twlab::ErrorCode::InvalidArgument, "n must be positive");
    twlab::QuadraticTables t;
    t.n = n;
    t.constant = constant ? twlab::Vec(constant, constant + n) : twlab::Vec(n, 0.0);
    t.linear.assign(linear, linear + n * n);
    t.quadratic = quadratic ? twlab::Vec(quadratic, quadratic + n * n * n) : twlab::Vec(n * n * n, 0.0);
    *out = new tw_model{twlab::make_quadratic_model(name ? name : "custom", twlab::Vec(d, d + n),
                                                    twlab::Vec(K, K + n), std::move(t))};
  });
}

void tw_model_free(tw_model* m) { delete m; }

size_t tw_model_components(const tw_model* m) { return m ? m->sys.n() : 0; }

tw_status tw_model_eval(const tw_model* m, const double* u, double* out) {
  return guarded([&] {
    need(m, "model"), need(u, "u"), need(out, "out");
    const auto n = m->sys.n();
    m->sys.f(std::span<const double>(u, n), std::span<double>(out, n));
  });
}

tw_status tw_model_audit(const tw_model* m, int samples_per_axis, int* all_pass, char** json) {
  return guarded([&] {
    need(m, "model"), need(all_pass, "all_pass");
    const auto rep = twlab::audit_hypotheses(m->sys, samples_per_axis);
    *all_pass = rep.all_pass() ? 1 : 0;
    if (json) *json = dup(twlab::audit_report_json(m->sys, rep));
  });
}

tw_status tw_model_c_star(const tw_model* m, double* c_star) {
  return guarded([&] {
    need(m, "model"), need(c_star, "c_star");
    *c_star = twlab::compute_c_star(twlab::CharParams::from(m->sys));
  });
}

tw_status tw_model_spectral(const tw_model* m, double c, double epsilon, char** json) {
  return guarded([&] {
    need(m, "model"), need(json, "json");
    std::optional<double> eps;
    if (epsilon > 0) eps = epsilon;
    *json = dup(twlab::spectral_report_json(twlab::spectral_report(m->sys, c, eps)));
  });
}

void tw_profile_defaults(tw_profile_options* o) {
  if (!o) return;
  const twlab::ProfileOptions d;
  *o = {0.0, d.m, d.L, d.tol, d.max_iter};
}

tw_status tw_profile_solve(const tw_model* m, const tw_profile_options* o, tw_profile** out) {
  return guarded([&] {
    need(m, "model"), need(o, "options"), need(out, "out");
    *out = nullptr;
    twlab::ProfileOptions opt;
    opt.m = o->m;
    opt.L = o->L;
    opt.tol = o->tol;
    opt.max_iter = o->max_iter;
    const auto spec = twlab::spectral_report(m->sys, o->c);
    auto sol = twlab::solve_profile(m->sys, spec, opt);
    *out = new tw_profile{std::move(sol.profile), sol.total_iterations};
  });
}

tw_status tw_profile_read(const char* path, tw_profile** out) {
  return guarded([&] {
    need(path, "path"), need(out, "out");
    *out = nullptr;
    *out = new tw_profile{twlab::read_profile(path), 0};
  });
}

tw_status tw_profile_write(const tw_profile* p, const char* path) {
  return guarded([&] {
    need(p, "profile"), need(path, "path");
    twlab::write_profile(p->profile, path);
  });
}

void tw_profile_free(tw_profile* p) { delete p; }

size_t tw_profile_nodes(const tw_profile* p) { return p ? p->profile.values.nodes() : 0; }
size_t tw_profile_components(const tw_profile* p) { return p ? p->profile.n() : 0; }
double tw_profile_speed(const tw_profile* p) { return p ? p->profile.c : 0.0; }
int tw_profile_iterations(const tw_profile* p) { return p ? p->iterations : 0; }

tw_status tw_profile_values(const tw_profile* p, double* xi, double* phi) {
  return guarded([&] {
    need(p, "profile");
    const auto& v = p->profile.values;
    for (std::size_t j = 0; j < v.nodes(); ++j) {
      if (xi) xi[j] = p->profile.xi(j);
      if (phi)
        for (std::size_t i = 0; i < v.components(); ++i) phi[i * v.nodes() + j] = v(i, j);
    }
  });
}

tw_status tw_profile_residual(const tw_model* m, const tw_profile* p, double* residual) {
  return guarded([&] {
    need(m, "model"), need(p, "profile"), need(residual, "residual");
    *residual = twlab::profile_residual(m->sys, p->profile).max;
  });
}

tw_status tw_experiment_load(const char* path, tw_experiment** out) {
  return guarded([&] {
    need(path, "path"), need(out, "out");
    *out = nullptr;
    *out = new tw_experiment{twlab::load_config(path)};
  });
}

tw_status tw_experiment_parse(const char* text, const char* source, tw_experiment** out) {
  return guarded([&] {
    need(text, "text"), need(out, "out");
    *out = nullptr;
    *out = new tw_experiment{twlab::parse_config(text, source ? source : "<config>")};
  });
}

void tw_experiment_free(tw_experiment* e) { delete e; }

tw_status tw_experiment_set_output_dir(tw_experiment* e, const char* dir) {
  return guarded([&] {
    need(e, "experiment"), need(dir, "dir");
    if (!*dir) twlab::fail(twlab::ErrorCode::InvalidArgument, "output directory is empty");
    e->cfg.output_dir = dir;
  });
}

tw_status tw_experiment_run(tw_experiment* e, const char* stage, int* exit_code, char** manifest) {
  return guarded([&] {
    need(e, "experiment"), need(stage, "stage"), need(exit_code, "exit_code");
    const auto s = twlab::stage_from_name(stage);
    if (!s) twlab::fail(twlab::ErrorCode::InvalidArgument, std::string("unknown stage '") + stage + "'");
    const auto man = twlab::run_experiment(e->cfg, *s);
    *exit_code = man.exit_code;
    if (manifest) *manifest = dup(man.json());
  });
}

tw_status tw_schema(char** json) {
  return guarded([&] {
    need(json, "json");
    *json = dup(twlab::schema_json());
  });
}

}  // extern "C"
