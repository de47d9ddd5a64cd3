#include "twlab/experiment.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "numeric.hpp"
#include "twlab/error.hpp"

namespace twlab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Model

ReactionSystem ModelConfig::build() const {
  if (builtin == "holling2") return make_holling2_model(holling);
  if (builtin == "ricker") return make_ricker_model(ricker);
  if (builtin == "custom") return make_quadratic_model(custom_name, d, K, tables);
  fail(ErrorCode::Config, fmt::format("unknown model '{}'", builtin));
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void error(const YAML::Node& at, const std::string& path, const std::string& msg) const {
    const auto mark = at.IsDefined() ? at.Mark() : YAML::Mark::null_mark();
    if (mark.is_null()) fail(ErrorCode::Config, fmt::format("{}: field '{}': {}", source_, path, msg));
    fail(ErrorCode::Config,
         fmt::format("{}:{}:{}: field '{}': {}", source_, mark.line + 1, mark.column + 1, path, msg));
  }

  void keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed) const {
    if (!n.IsMap()) error(n, path, "expected a mapping");
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) error(kv.first, join(path, key), "unknown field");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  double number(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) error(n, path, "expected a number");
    try {
      const double v = n.as<double>();
      if (!std::isfinite(v)) error(n, path, "expected a finite number");
      return v;
    } catch (const YAML::BadConversion&) {
      error(n, path, fmt::format("expected a number, got '{}'", n.Scalar()));
    }
  }

  double positive(const YAML::Node& n, const std::string& path) const {
    const double v = number(n, path);
    if (!(v > 0)) error(n, path, fmt::format("must be positive (got {})", v));
    return v;
  }

  long long integer(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) error(n, path, "expected an integer");
    try {
      return n.as<long long>();
    } catch (const YAML::BadConversion&) {
      error(n, path, fmt::format("expected an integer, got '{}'", n.Scalar()));
    }
  }

  bool boolean(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) error(n, path, "expected true or false");
    try {
      return n.as<bool>();
    } catch (const YAML::BadConversion&) {
      error(n, path, fmt::format("expected true or false, got '{}'", n.Scalar()));
    }
  }

  std::string string(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) error(n, path, "expected a string");
    return n.Scalar();
  }

  Vec vector(const YAML::Node& n, const std::string& path) const {
    if (!n.IsSequence()) error(n, path, "expected a list of numbers");
    Vec out;
    for (std::size_t k = 0; k < n.size(); ++k) out.push_back(number(n[k], fmt::format("{}[{}]", path, k)));
    return out;
  }

 private:
  std::string source_;
};

std::string fnv_hex(const std::string& s) { return fmt::format("{:016x}", num::fnv1a(s)); }

void parse_model(const Reader& rd, const YAML::Node& n, ModelConfig& m) {
  rd.keys(n, "model", {"builtin", "params", "custom"});
  const bool has_builtin = n["builtin"].IsDefined(), has_custom = n["custom"].IsDefined();
  if (has_builtin == has_custom) rd.error(n, "model", "give exactly one of 'builtin' or 'custom'");
  if (has_builtin) {
    m.builtin = rd.string(n["builtin"], "model.builtin");
    const auto params = n["params"];
    auto get = [&](const char* key, double& slot) {
      if (params.IsDefined() && params[key].IsDefined()) slot = rd.positive(params[key], std::string("model.params.") + key);
    };
    if (m.builtin == "holling2") {
      if (params.IsDefined())
        rd.keys(params, "model.params",
                {"a1", "a2", "d1", "d2", "alpha1", "alpha2", "beta1", "beta2", "gamma1", "gamma2"});
      auto& p = m.holling;
      get("a1", p.a1), get("a2", p.a2), get("d1", p.d1), get("d2", p.d2);
      get("alpha1", p.alpha1), get("alpha2", p.alpha2), get("beta1", p.beta1), get("beta2", p.beta2);
      get("gamma1", p.gamma1), get("gamma2", p.gamma2);
    } else if (m.builtin == "ricker") {
      if (params.IsDefined()) rd.keys(params, "model.params", {"a", "a1", "a2", "d1", "d2", "p", "q", "m"});
      auto& p = m.ricker;
      get("a", p.a), get("a1", p.a1), get("a2", p.a2), get("d1", p.d1), get("d2", p.d2);
      get("p", p.p), get("q", p.q), get("m", p.m);
    } else {
      rd.error(n["builtin"], "model.builtin", fmt::format("unknown model '{}' (holling2 or ricker)", m.builtin));
    }
    return;
  }
  if (n["params"].IsDefined()) rd.error(n["params"], "model.params", "only valid with 'builtin'");
  const auto c = n["custom"];
  rd.keys(c, "model.custom", {"name", "d", "K", "constant", "linear", "quadratic"});
  m.builtin = "custom";
  m.custom_name = c["name"].IsDefined() ? rd.string(c["name"], "model.custom.name") : "custom";
  for (const char* key : {"d", "K", "linear"})
    if (!c[key].IsDefined()) rd.error(c, std::string("model.custom.") + key, "required field missing");
  m.d = rd.vector(c["d"], "model.custom.d");
  m.K = rd.vector(c["K"], "model.custom.K");
  const std::size_t n_comp = m.d.size();
  if (n_comp == 0) rd.error(c["d"], "model.custom.d", "needs at least one component");
  if (m.K.size() != n_comp)
    rd.error(c["K"], "model.custom.K", fmt::format("has {} entries, d has {}", m.K.size(), n_comp));
  auto& t = m.tables;
  t.n = n_comp;
  t.constant.assign(n_comp, 0.0);
  if (c["constant"].IsDefined()) {
    t.constant = rd.vector(c["constant"], "model.custom.constant");
    if (t.constant.size() != n_comp) rd.error(c["constant"], "model.custom.constant", "wrong length");
  }
  const auto lin = c["linear"];
  if (!lin.IsSequence() || lin.size() != n_comp)
    rd.error(lin, "model.custom.linear", fmt::format("expected {} rows", n_comp));
  t.linear.clear();
  for (std::size_t i = 0; i < n_comp; ++i) {
    const auto row = rd.vector(lin[i], fmt::format("model.custom.linear[{}]", i));
    if (row.size() != n_comp)
      rd.error(lin[i], fmt::format("model.custom.linear[{}]", i), fmt::format("expected {} entries", n_comp));
    t.linear.insert(t.linear.end(), row.begin(), row.end());
  }
  t.quadratic.assign(n_comp * n_comp * n_comp, 0.0);
  if (c["quadratic"].IsDefined()) {
    const auto q = c["quadratic"];
    if (!q.IsSequence()) rd.error(q, "model.custom.quadratic", "expected a list of [i, j, k, value] terms");
    for (std::size_t r = 0; r < q.size(); ++r) {
      const std::string path = fmt::format("model.custom.quadratic[{}]", r);
      const auto term = rd.vector(q[r], path);
      if (term.size() != 4) rd.error(q[r], path, "expected [i, j, k, value]");
      std::size_t idx[3];
      for (int a = 0; a < 3; ++a) {
        const double v = term[a];
        if (v != std::floor(v) || v < 1 || v > static_cast<double>(n_comp))
          rd.error(q[r], path, fmt::format("index {} outside 1..{}", v, n_comp));
        idx[a] = static_cast<std::size_t>(v) - 1;
      }
      t.quadratic[(idx[0] * n_comp + idx[1]) * n_comp + idx[2]] += term[3];
    }
  }
}

Bump parse_bump(const Reader& rd, const YAML::Node& n, const std::string& path, std::optional<double>& fraction) {
  rd.keys(n, path, {"kind", "amplitude", "amplitude_fraction", "center", "width"});
  Bump b;
  if (n["kind"].IsDefined()) {
    const auto kind = rd.string(n["kind"], path + ".kind");
    if (kind == "cosine") b.kind = BumpKind::Cosine;
    else if (kind == "gaussian") b.kind = BumpKind::Gaussian;
    else rd.error(n["kind"], path + ".kind", fmt::format("unknown kind '{}' (cosine or gaussian)", kind));
  }
  const bool abs = n["amplitude"].IsDefined(), rel = n["amplitude_fraction"].IsDefined();
  if (abs == rel) rd.error(n, path, "give exactly one of 'amplitude' or 'amplitude_fraction'");
  if (abs) b.amplitude = rd.number(n["amplitude"], path + ".amplitude");
  else fraction = rd.number(n["amplitude_fraction"], path + ".amplitude_fraction");
  if (n["center"].IsDefined()) {
    const auto c = n["center"];
    if (c.IsScalar() && c.Scalar() == "front") b.center_at_front = true;
    else b.center = rd.number(c, path + ".center");
  }
  if (n["width"].IsDefined()) b.width = rd.positive(n["width"], path + ".width");
  return b;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    fail(ErrorCode::Config, fmt::format("{}:{}:{}: {}", source, e.mark.line + 1, e.mark.column + 1, e.msg));
  }
  const Reader rd(source);
  if (!root.IsMap()) fail(ErrorCode::Config, fmt::format("{}: expected a mapping at the top level", source));
  rd.keys(root, "", {"seed", "model", "audit", "spectral", "profile", "evolve", "stability", "output"});

  ExperimentConfig cfg;
  cfg.source = source;
  cfg.digest = fnv_hex(text);
  if (root["seed"].IsDefined()) cfg.seed = rd.integer(root["seed"], "seed");

  if (!root["model"].IsDefined()) rd.error(root, "model", "required section missing");
  parse_model(rd, root["model"], cfg.model);

  if (const auto a = root["audit"]; a.IsDefined()) {
    rd.keys(a, "audit", {"samples_per_axis"});
    if (a["samples_per_axis"].IsDefined()) {
      const auto s = rd.integer(a["samples_per_axis"], "audit.samples_per_axis");
      if (s < 2 || s > 10000) rd.error(a["samples_per_axis"], "audit.samples_per_axis", "must lie in [2, 10000]");
      cfg.audit_samples = static_cast<int>(s);
    }
  }

  if (const auto s = root["spectral"]; s.IsDefined()) {
    rd.keys(s, "spectral", {"c", "c_multiplier", "epsilon"});
    if (s["c"].IsDefined()) cfg.speed.c = rd.positive(s["c"], "spectral.c");
    if (s["c_multiplier"].IsDefined()) cfg.speed.multiplier = rd.positive(s["c_multiplier"], "spectral.c_multiplier");
    if (cfg.speed.c && cfg.speed.multiplier) rd.error(s, "spectral", "give only one of 'c' and 'c_multiplier'");
    if (s["epsilon"].IsDefined()) cfg.epsilon = rd.positive(s["epsilon"], "spectral.epsilon");
  }
  if (!cfg.speed.c && !cfg.speed.multiplier) cfg.speed.multiplier = 1.1;

  if (const auto p = root["profile"]; p.IsDefined()) {
    rd.keys(p, "profile",
            {"m", "L", "tol", "max_iter", "tail_fraction", "tail_passes", "beta", "anchor", "truncation_check",
             "boundary_tol"});
    auto& o = cfg.profile;
    if (p["m"].IsDefined()) {
      const auto m = rd.integer(p["m"], "profile.m");
      if (m < 4 || m > 1000) rd.error(p["m"], "profile.m", "must lie in [4, 1000]");
      o.m = static_cast<int>(m);
    }
    if (p["L"].IsDefined()) o.L = rd.positive(p["L"], "profile.L");
    if (p["tol"].IsDefined()) o.tol = rd.positive(p["tol"], "profile.tol");
    if (p["max_iter"].IsDefined()) {
      const auto it = rd.integer(p["max_iter"], "profile.max_iter");
      if (it < 1) rd.error(p["max_iter"], "profile.max_iter", "must be at least 1");
      o.max_iter = static_cast<int>(it);
    }
    if (p["tail_fraction"].IsDefined()) o.tail_fraction = rd.positive(p["tail_fraction"], "profile.tail_fraction");
    if (p["tail_passes"].IsDefined()) o.tail_passes = static_cast<int>(rd.integer(p["tail_passes"], "profile.tail_passes"));
    if (p["beta"].IsDefined()) o.beta = rd.positive(p["beta"], "profile.beta");
    if (p["anchor"].IsDefined()) o.anchor = rd.number(p["anchor"], "profile.anchor");
    if (p["truncation_check"].IsDefined()) cfg.truncation_check = rd.boolean(p["truncation_check"], "profile.truncation_check");
    if (p["boundary_tol"].IsDefined()) cfg.boundary_tol = rd.positive(p["boundary_tol"], "profile.boundary_tol");
    if (o.L < 10) rd.error(p["L"], "profile.L", "must be at least 10");
    const double Lm = o.L * o.m;
    if (std::abs(Lm - std::round(Lm)) > 1e-9) rd.error(p["L"], "profile.L", "L * m must be an integer");
    if (!(o.tail_fraction < 0.25)) rd.error(p["tail_fraction"], "profile.tail_fraction", "must lie in (0, 0.25)");
  }

  if (const auto e = root["evolve"]; e.IsDefined()) {
    rd.keys(e, "evolve", {"dt", "t_end", "stepper", "perturbation"});
    if (e["dt"].IsDefined()) cfg.dt = rd.positive(e["dt"], "evolve.dt");
    if (e["t_end"].IsDefined()) cfg.t_end = rd.positive(e["t_end"], "evolve.t_end");
    if (e["stepper"].IsDefined()) {
      const auto s = rd.string(e["stepper"], "evolve.stepper");
      if (s == "rk4") cfg.stepper = Stepper::Rk4;
      else if (s == "explicit-euler") cfg.stepper = Stepper::ExplicitEuler;
      else rd.error(e["stepper"], "evolve.stepper", fmt::format("unknown stepper '{}' (rk4 or explicit-euler)", s));
    }
    if (const auto pert = e["perturbation"]; pert.IsDefined()) {
      if (pert.IsScalar() && pert.Scalar() == "none") {
      } else if (pert.IsSequence()) {
        for (std::size_t k = 0; k < pert.size(); ++k) {
          std::optional<double> frac;
          cfg.perturbation.bumps.push_back(parse_bump(rd, pert[k], fmt::format("evolve.perturbation[{}]", k), frac));
          cfg.amplitude_fraction.push_back(frac);
        }
      } else {
        rd.error(pert, "evolve.perturbation", "expected 'none' or a list of bumps");
      }
    }
  }

  if (const auto s = root["stability"]; s.IsDefined()) {
    rd.keys(s, "stability", {"sample_interval", "window", "squeeze", "r2_min", "terminal_ratio_max", "energy_from", "norms"});
    if (s["sample_interval"].IsDefined()) cfg.sample_interval = rd.positive(s["sample_interval"], "stability.sample_interval");
    if (s["window"].IsDefined()) {
      const auto w = rd.vector(s["window"], "stability.window");
      if (w.size() != 2 || !(w[0] >= 0 && w[0] < w[1]))
        rd.error(s["window"], "stability.window", "expected [t_lo, t_hi] with 0 <= t_lo < t_hi");
      cfg.window_lo = w[0];
      cfg.window_hi = w[1];
    }
    if (s["squeeze"].IsDefined()) cfg.squeeze = rd.boolean(s["squeeze"], "stability.squeeze");
    if (s["r2_min"].IsDefined()) cfg.r2_min = rd.number(s["r2_min"], "stability.r2_min");
    if (s["terminal_ratio_max"].IsDefined())
      cfg.terminal_ratio_max = rd.positive(s["terminal_ratio_max"], "stability.terminal_ratio_max");
    if (s["energy_from"].IsDefined()) cfg.energy_from = rd.number(s["energy_from"], "stability.energy_from");
    if (const auto nn = s["norms"]; nn.IsDefined()) {
      if (!nn.IsSequence()) rd.error(nn, "stability.norms", "expected a list of norm names");
      cfg.fit_norms.clear();
      for (std::size_t k = 0; k < nn.size(); ++k) {
        const std::string path = fmt::format("stability.norms[{}]", k);
        const auto name = rd.string(nn[k], path);
        bool found = false;
        for (NormKind kind : {NormKind::Linf, NormKind::L1, NormKind::L2, NormKind::WeightedL1, NormKind::Energy})
          if (name == norm_kind_name(kind)) {
            cfg.fit_norms.push_back(kind);
            found = true;
          }
        if (!found) rd.error(nn[k], path, fmt::format("unknown norm '{}'", name));
      }
    }
  }
  if (cfg.window_hi && *cfg.window_hi > cfg.t_end)
    rd.error(root["stability"]["window"], "stability.window", fmt::format("ends after t_end = {}", cfg.t_end));

  if (const auto o = root["output"]; o.IsDefined()) {
    rd.keys(o, "output", {"directory", "snapshots", "snapshot_interval"});
    if (o["directory"].IsDefined()) cfg.output_dir = rd.string(o["directory"], "output.directory");
    if (o["snapshots"].IsDefined()) {
      const auto f = rd.string(o["snapshots"], "output.snapshots");
      if (f == "none") cfg.snapshot_format = SnapshotFormat::None;
      else if (f == "text") cfg.snapshot_format = SnapshotFormat::Text;
      else if (f == "binary") cfg.snapshot_format = SnapshotFormat::Binary;
      else if (f == "both") cfg.snapshot_format = SnapshotFormat::Both;
      else rd.error(o["snapshots"], "output.snapshots", fmt::format("unknown format '{}' (none, text, binary, both)", f));
    }
    if (o["snapshot_interval"].IsDefined())
      cfg.snapshot_interval = rd.positive(o["snapshot_interval"], "output.snapshot_interval");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, fmt::format("cannot read config {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Stages

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Audit: return "audit";
    case Stage::Spectral: return "spectral";
    case Stage::Wave: return "wave";
    case Stage::Evolve: return "evolve";
    case Stage::Stability: return "stability";
    case Stage::Full: return "full";
  }
  return "?";
}

std::optional<Stage> stage_from_name(const std::string& name) {
  for (Stage s : {Stage::Audit, Stage::Spectral, Stage::Wave, Stage::Evolve, Stage::Stability, Stage::Full})
    if (name == stage_name(s)) return s;
  return std::nullopt;
}

int exit_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
      return exit_status::config;
    case ErrorCode::SubThreshold:
      return exit_status::spectral;
    default:
      return exit_status::numeric;
  }
}

std::string RunManifest::json() const {
  nlohmann::ordered_json j;
  j["format"] = "twlab-manifest 1";
  j["command"] = command;
  j["config_source"] = config_source;
  j["config_digest"] = config_digest;
  j["output_dir"] = output_dir;
  j["exit_code"] = exit_code;
  j["wall_clock_seconds"] = seconds;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : stages)
    j["stages"].push_back({{"name", s.name},
                           {"status", s.status},
                           {"exit_code", s.exit_code},
                           {"wall_clock_seconds", s.seconds},
                           {"message", s.message}});
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : artifacts) j["artifacts"].push_back({{"path", a.path}, {"kind", a.kind}});
  return j.dump(2) + "\n";
}

namespace {

json vec_json(const Vec& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

json matrix_json(const Eigen::MatrixXd& A) {
  json a = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < A.cols(); ++k) row.push_back(A(i, k));
    a.push_back(row);
  }
  return a;
}

json audit_json(const ReactionSystem& sys, const HypothesisReport& r) {
  json j;
  j["model"] = sys.name;
  j["samples_per_axis"] = r.samples_per_axis;
  j["all_pass"] = r.all_pass();
  j["hypotheses"] = json::array();
  for (const auto& h : r.results) {
    json w = json::array();
    for (const auto& x : h.witnesses) w.push_back({{"point", vec_json(x.point)}, {"quantity", x.quantity}, {"value", x.value}});
    j["hypotheses"].push_back({{"name", h.name}, {"verdict", verdict_name(h.verdict)}, {"detail", h.detail}, {"witnesses", w}});
  }
  j["caveats"] = r.caveats;
  return j;
}

json spectral_json(const SpectralReport& s) {
  json j;
  j["n"] = s.n;
  j["c"] = s.c;
  j["c_star"] = s.c_star;
  j["c_star_lower"] = {{"value", s.c_star_lower.value},
                       {"kind", lower_threshold_kind_name(s.c_star_lower.kind)},
                       {"argmin", s.c_star_lower.argmin}};
  j["lambda1"] = s.lambda1;
  j["lambda2"] = s.lambda2;
  j["lambda_bar"] = s.lambda_bar;
  j["rho"] = s.rho;
  j["epsilon"] = s.epsilon;
  j["gamma"] = s.gamma;
  j["P_gamma"] = s.P_gamma;
  j["xi0"] = s.xi0;
  j["eta"] = vec_json(s.eta);
  j[s.n == 2 ? "pq" : "v"] = vec_json(s.pq);
  json ledger = json::array();
  for (const auto& e : s.pq_ledger.entries) ledger.push_back({{"k", e.k}, {"j", e.j}, {"det", e.det}, {"ok", e.ok}});
  j["sign_determinants"] = {{"ok", s.pq_ledger.ok}, {"entries", ledger}};
  j["d"] = vec_json(s.d);
  j["A0"] = matrix_json(s.A0);
  j["AK"] = matrix_json(s.AK);
  j["digest"] = s.digest();
  return j;
}

json check_json(const InequalityCheck& c) {
  return {{"checked", c.checked}, {"excluded", c.excluded}, {"failing", c.failing},
          {"worst", c.worst},     {"worst_xi", c.worst_xi}, {"worst_component", c.worst_component + 1}};
}

json fit_json(const DecayFit& f) {
  return {{"mu", f.mu},         {"C", f.C},         {"r2", f.r2},           {"t_lo", f.t_lo},
          {"t_hi", f.t_hi},     {"samples", f.samples}, {"degenerate", f.degenerate}};
}

json clip_json(const ClipLedger& c) {
  return {{"clipped", c.clipped},
          {"total", c.total},
          {"max", c.max},
          {"node_steps", c.node_steps},
          {"within_budget", c.within_budget()}};
}

json grid_json(const Grid& g) {
  return {{"m", g.m}, {"first", g.first}, {"last", g.last}, {"x_lo", g.x_lo()}, {"x_hi", g.x_hi()}, {"nodes", g.size()}};
}

struct Outcome {
  std::string status = "ok";
  int exit_code = 0;
  std::string message;
};

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, Stage stage) : cfg_(cfg), dir_(cfg.output_dir) {
    man_.config_digest = cfg.digest;
    man_.config_source = cfg.source;
    man_.command = stage_name(stage);
    man_.output_dir = cfg.output_dir;
  }

  RunManifest finish(double seconds) {
    man_.seconds = seconds;
    write("schema.json", schema_json(), "schema");
    add("manifest.json", "manifest");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    std::ofstream os(dir_ / "manifest.json");
    os << man_.json();
    return man_;
  }

  /// Runs one stage; false means later stages must not run.
  bool stage(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    StageStatus st;
    st.name = name;
    try {
      const Outcome o = body();
      st.status = o.status;
      st.exit_code = o.exit_code;
      st.message = o.message;
    } catch (const Error& e) {
      st.status = "error";
      st.exit_code = exit_status_for(e.code());
      st.message = fmt::format("{}: {}", error_code_name(e.code()), e.what());
    } catch (const std::exception& e) {
      st.status = "error";
      st.exit_code = exit_status::numeric;
      st.message = e.what();
    }
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man_.stages.push_back(st);
    if (st.exit_code != 0 && man_.exit_code == 0) man_.exit_code = st.exit_code;
    return st.exit_code == 0;
  }

  void write(const std::string& rel, const std::string& content, const std::string& kind) {
    const fs::path path = dir_ / rel;
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
    os << content;
    if (!os) fail(ErrorCode::Io, fmt::format("write to {} failed", path.string()));
    add(rel, kind);
  }

  void add(const std::string& rel, const std::string& kind) {
    for (const auto& a : man_.artifacts)
      if (a.path == rel) return;
    man_.artifacts.push_back({rel, kind});
  }

  fs::path path(const std::string& rel) const { return dir_ / rel; }

  // pipeline state
  std::optional<ReactionSystem> sys;
  std::optional<SpectralReport> spec;
  std::optional<ProfileSolution> sol;

  const ExperimentConfig& cfg() const { return cfg_; }

 private:
  const ExperimentConfig& cfg_;
  fs::path dir_;
  RunManifest man_;
};

Perturbation resolved_perturbation(const ExperimentConfig& cfg, const ReactionSystem& sys) {
  Perturbation p = cfg.perturbation;
  const double kmin = *std::min_element(sys.K.begin(), sys.K.end());
  for (std::size_t k = 0; k < p.bumps.size(); ++k)
    if (k < cfg.amplitude_fraction.size() && cfg.amplitude_fraction[k]) p.bumps[k].amplitude = *cfg.amplitude_fraction[k] * kmin;
  return p;
}

EvolveConfig evolve_config(const ExperimentConfig& cfg, const ReactionSystem& sys) {
  EvolveConfig e = EvolveConfig::for_system(sys, cfg.t_end);
  if (cfg.dt) e.dt = *cfg.dt;
  e.stepper = cfg.stepper;
  e.validate(sys);
  return e;
}

Outcome do_audit(Runner& r) {
  const auto rep = audit_hypotheses(*r.sys, r.cfg().audit_samples);
  r.write("audit.json", audit_report_json(*r.sys, rep), "audit");
  Outcome o;
  if (!rep.all_pass()) {
    std::string failed;
    for (const auto& h : rep.results)
      if (h.verdict == Verdict::Fail) failed += (failed.empty() ? "" : ", ") + h.name;
    o = {"fail", exit_status::hypothesis, "failed: " + failed};
  }
  return o;
}

Outcome do_spectral(Runner& r) {
  const auto p = CharParams::from(*r.sys);
  const double c = resolve_speed(p, r.cfg().speed);
  r.spec = spectral_report(*r.sys, c, r.cfg().epsilon);
  r.write("spectral.json", spectral_report_json(*r.spec), "spectral");
  return {};
}

Outcome do_wave(Runner& r) {
  const auto& cfg = r.cfg();
  r.sol = solve_profile(*r.sys, *r.spec, cfg.profile);
  const auto& sol = *r.sol;
  const auto& p = sol.profile;
  write_profile(p, r.path("profile.csv").string());
  r.add("profile.csv", "profile");

  const auto res = profile_residual(*r.sys, p);
  const auto bnd = check_boundary_limits(p, cfg.profile.tail_fraction, cfg.boundary_tol);
  double min_step = std::numeric_limits<double>::infinity(), range = 0;
  for (std::size_t i = 0; i < p.n(); ++i)
    for (std::size_t j = 0; j < p.values.nodes(); ++j) {
      if (j + 1 < p.values.nodes()) min_step = std::min(min_step, p.values(i, j + 1) - p.values(i, j));
      range = std::max({range, -p.values(i, j), p.values(i, j) - p.K[i]});
    }
  json j;
  j["c"] = p.c;
  j["m"] = p.grid.m;
  j["L"] = p.L;
  j["nodes"] = p.grid.size();
  j["anchor"] = p.tail.anchor;
  j["beta"] = sol.log.beta;
  j["subsolution"] = {{"M", sol.pair.M}, {"eps_prime", sol.pair.eps_prime}, {"check", check_json(sol.pair.lower_check)}};
  j["supersolution"] = {{"check", check_json(sol.pair.upper_check)}};
  j["iteration"] = {{"passes", sol.passes},
                    {"iterations", sol.log.iterations},
                    {"total_iterations", sol.total_iterations},
                    {"converged", sol.log.converged},
                    {"tol", cfg.profile.tol},
                    {"last_delta", sol.log.deltas.empty() ? 0.0 : sol.log.deltas.back()},
                    {"max_increase", sol.log.max_increase},
                    {"min_gap_lower", sol.log.min_gap_lower},
                    {"max_gap_upper", sol.log.max_gap_upper}};
  j["residual"] = {{"max", res.max}, {"xi", res.xi}, {"component", res.component + 1}, {"within_10_tol", res.max <= 10 * cfg.profile.tol}};
  j["boundary"] = {{"tail_fraction", cfg.profile.tail_fraction}, {"tol", cfg.boundary_tol}, {"left_worst", bnd.left_worst},
                   {"right_worst", bnd.right_worst}, {"pass", bnd.pass}};
  j["monotone"] = {{"min_step", min_step}, {"pass", min_step >= -1e-10}};
  j["range_excess"] = range;
  j["tail"] = {{"eta", vec_json(p.tail.eta)}, {"chi", vec_json(p.tail.chi)},  {"b", vec_json(p.tail.b)},
               {"lambda1", p.tail.lambda},    {"lambda2", p.tail.lambda2},    {"rho", p.tail.rho}};
  j["xi0"] = p.spectral.xi0;
  j["spectral_digest"] = p.spectral_digest;
  j["interpolation_floor"] = interpolation_floor(p);

  if (cfg.truncation_check) {
    ProfileOptions o2 = cfg.profile;
    o2.L = std::ceil(1.5 * cfg.profile.L);
    o2.anchor = sol.pair.anchor;
    const auto wide = solve_profile(*r.sys, *r.spec, o2).profile;
    const std::int64_t off = p.grid.first - wide.grid.first;
    double worst = 0, at = 0;
    for (std::size_t i = 0; i < p.n(); ++i)
      for (std::size_t k = 0; k < p.values.nodes(); ++k) {
        const double d = std::abs(p.values(i, k) - wide.values(i, k + static_cast<std::size_t>(off)));
        if (d > worst) {
          worst = d;
          at = p.xi(k);
        }
      }
    j["truncation"] = {{"L_wide", o2.L}, {"max_diff", worst}, {"at_xi", at}};
  }
  r.write("profile.json", j.dump(2) + "\n", "profile-report");

  Outcome o;
  std::vector<std::string> bad;
  if (!bnd.pass) bad.push_back(fmt::format("boundary tails {:.3e} / {:.3e} above {}", bnd.left_worst, bnd.right_worst, cfg.boundary_tol));
  if (min_step < -1e-10) bad.push_back(fmt::format("profile decreases by {:.3e}", -min_step));
  if (!bad.empty()) {
    o.status = "fail";
    o.exit_code = exit_status::numeric;
    for (const auto& b : bad) o.message += (o.message.empty() ? "" : "; ") + b;
  }
  return o;
}

Outcome do_evolve(Runner& r) {
  const auto& cfg = r.cfg();
  const auto& p = r.sol->profile;
  const EvolveConfig base = evolve_config(cfg, *r.sys);
  const Grid grid = evolution_grid(p, cfg.t_end);
  const auto init = make_initial_data(p, resolved_perturbation(cfg, *r.sys), grid);
  const std::size_t steps = static_cast<std::size_t>(std::ceil(cfg.t_end / base.dt - 1e-9));
  const double dt_eff = steps ? cfg.t_end / static_cast<double>(steps) : base.dt;
  EvolveConfig e = base;
  e.snapshot_every = std::max(1, static_cast<int>(std::lround(cfg.snapshot_interval / dt_eff)));

  std::size_t count = 0;
  json snaps = json::array();
  auto sink = [&](const FieldState& s) {
    if (cfg.snapshot_format == SnapshotFormat::None) return;
    const std::string stem = fmt::format("snapshots/snap_{:05d}", count++);
    json entry = {{"t", s.t}};
    if (cfg.snapshot_format == SnapshotFormat::Text || cfg.snapshot_format == SnapshotFormat::Both) {
      write_snapshot_text(s, r.path(stem + ".txt").string());
      r.add(stem + ".txt", "snapshot-text");
      entry["text"] = stem + ".txt";
    }
    if (cfg.snapshot_format == SnapshotFormat::Binary || cfg.snapshot_format == SnapshotFormat::Both) {
      write_snapshot_binary(s, r.path(stem + ".bin").string());
      r.add(stem + ".bin", "snapshot-binary");
      entry["binary"] = stem + ".bin";
    }
    snaps.push_back(entry);
  };
  if (cfg.snapshot_format != SnapshotFormat::None) {
    std::error_code ec;
    fs::create_directories(r.path("snapshots"), ec);
  }
  const auto run = integrate(*r.sys, init.state, e, sink);

  json j;
  j["grid"] = grid_json(grid);
  j["stepper"] = stepper_name(e.stepper);
  j["dt"] = run.dt;
  j["dt_bound"] = EvolveConfig::dt_bound(*r.sys);
  j["steps"] = run.steps;
  j["t_end"] = cfg.t_end;
  j["initial"] = {{"weighted_l1", init.weighted_l1}, {"h1", init.h1}, {"max_abs", init.max_abs}};
  j["clip"] = clip_json(run.clip);
  j["snapshots"] = snaps;
  r.write("evolve.json", j.dump(2) + "\n", "evolve-report");
  Outcome o;
  if (!run.clip.within_budget()) o = {"fail", exit_status::numeric, "clipped overshoot over budget"};
  return o;
}

Outcome do_stability(Runner& r) {
  const auto& cfg = r.cfg();
  const auto& p = r.sol->profile;
  StabilitySettings st;
  st.evolve = evolve_config(cfg, *r.sys);
  st.sample_interval = cfg.sample_interval;
  st.perturbation = resolved_perturbation(cfg, *r.sys);
  st.t_lo = cfg.window_lo.value_or(0.1 * cfg.t_end);
  st.t_hi = cfg.window_hi.value_or(0.8 * cfg.t_end);
  st.squeeze = cfg.squeeze;
  st.r2_min = cfg.r2_min;
  st.terminal_ratio_max = cfg.terminal_ratio_max;
  st.energy_from = cfg.energy_from;
  const auto run = run_stability(*r.sys, p, st);

  r.write("norms.csv", run.trace.csv(), "norm-trace");
  if (!run.zero_perturbation) r.write("front_norms.csv", run.front_trace.csv(), "norm-trace");

  json fits = json::array();
  for (NormKind k : cfg.fit_norms) {
    const std::size_t comps = k == NormKind::Energy ? 1 : p.n();
    for (std::size_t i = 0; i < comps; ++i) {
      json f = {{"norm", norm_kind_name(k)}};
      if (k != NormKind::Energy) f["component"] = i + 1;
      try {
        f.update(fit_json(fit_decay_rate(run.trace, {k, i}, st.t_lo, st.t_hi)));
      } catch (const Error& e) {
        f["error"] = e.what();
      }
      fits.push_back(f);
    }
  }
  json j;
  j["zero_perturbation"] = run.zero_perturbation;
  j["grid"] = grid_json(run.grid);
  j["dt"] = run.dt;
  j["steps"] = run.steps;
  j["window"] = {st.t_lo, st.t_hi};
  j["initial"] = {{"weighted_l1", run.initial.weighted_l1}, {"h1", run.initial.h1}, {"max_abs", run.initial.max_abs}};
  j["mu"] = run.zero_perturbation ? json(nullptr) : json(run.mu);
  j["r2_worst"] = run.zero_perturbation ? json(nullptr) : json(run.r2_worst);
  j["fits"] = fits;
  j["initial_linf"] = run.initial_linf;
  j["terminal_linf"] = run.terminal_linf;
  j["terminal_ratio"] = run.terminal_ratio;
  j["energy"] = {{"from", st.energy_from},
                 {"raw_max_increase", run.energy_raw_increase},
                 {"excess_over_front", run.energy_excess},
                 {"excess_t", run.energy_excess_t}};
  j["interpolation_floor"] = run.floor;
  j["transport_max_linf"] = run.transport_max;
  if (run.squeeze)
    j["squeeze"] = {{"ordering", run.squeeze->ordering},   {"sandwich", run.squeeze->sandwich},
                    {"rectangle", run.squeeze->rectangle}, {"phi_sandwich", run.squeeze->phi_sandwich},
                    {"worst_t", run.squeeze->worst_t},     {"max_violation", run.squeeze->max_violation()}};
  j["clip"] = clip_json(run.clip);
  j["verdict"] = run.pass() ? "pass" : "fail";
  j["failures"] = run.failures;
  r.write("stability.json", j.dump(2) + "\n", "stability-report");

  Outcome o;
  if (!run.pass()) {
    o.status = "fail";
    o.exit_code = exit_status::stability;
    for (const auto& f : run.failures) o.message += (o.message.empty() ? "" : "; ") + f;
  }
  return o;
}

}  // namespace

std::string audit_report_json(const ReactionSystem& sys, const HypothesisReport& report) {
  return audit_json(sys, report).dump(2) + "\n";
}

std::string spectral_report_json(const SpectralReport& report) { return spectral_json(report).dump(2) + "\n"; }

RunManifest run_experiment(const ExperimentConfig& cfg, Stage stage) {
  const auto t0 = std::chrono::steady_clock::now();
  Runner r(cfg, stage);
  bool go = r.stage("model", [&] {
    r.sys = cfg.model.build();
    return Outcome{};
  });
  // a model that cannot be built is a configuration problem
  auto want = [&](Stage s) {
    if (stage == Stage::Full) return true;
    switch (s) {
      case Stage::Audit: return stage == Stage::Audit;
      case Stage::Spectral: return stage != Stage::Audit;
      case Stage::Wave: return stage == Stage::Wave || stage == Stage::Evolve || stage == Stage::Stability;
      case Stage::Evolve: return stage == Stage::Evolve;
      case Stage::Stability: return stage == Stage::Stability;
      default: return false;
    }
  };
  if (go && want(Stage::Audit)) go = r.stage("audit", [&] { return do_audit(r); });
  if (go && want(Stage::Spectral)) go = r.stage("spectral", [&] { return do_spectral(r); });
  if (go && want(Stage::Wave)) go = r.stage("wave", [&] { return do_wave(r); });
  if (go && want(Stage::Evolve)) go = r.stage("evolve", [&] { return do_evolve(r); });
  if (go && want(Stage::Stability)) r.stage("stability", [&] { return do_stability(r); });
  return r.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

// ---------------------------------------------------------------------------
// Schema

std::string schema_json() {
  json s;
  s["format"] = "twlab-schema 1";
  s["exit_codes"] = {{"0", "success"},
                     {"1", "configuration or validation error (nothing computed)"},
                     {"2", "numerical error (non-convergence, blow-up, I/O)"},
                     {"10", "hypothesis audit failed"},
                     {"11", "spectral failure or wave speed not above c*"},
                     {"12", "stability verdict failed"}};
  s["artifacts"]["manifest.json"] = {
      {"config_digest", "FNV-1a 64-bit hex digest of the config document text"},
      {"stages[]", "name, status (ok | fail | error), exit_code, wall_clock_seconds, message"},
      {"artifacts[]", "path relative to the output directory and kind; every emitted file once"},
      {"exit_code", "first nonzero stage exit code, else 0"},
      {"wall_clock_seconds", "total run time; the only nondeterministic values are the wall-clock fields"}};
  s["artifacts"]["audit.json"] = {
      {"hypotheses[]", "name, verdict (pass | fail | n/a), detail, witnesses[] {point, quantity, value}"},
      {"all_pass", "true when no applicable hypothesis failed"},
      {"caveats[]", "statements the sampling audit cannot certify"}};
  s["artifacts"]["spectral.json"] = {
      {"c", "wave speed"},
      {"c_star", "threshold speed (tangency of P)"},
      {"c_star_lower", "value, kind (minimum | zero-infimum | infimum-at-infinity | minus-infinity), argmin"},
      {"lambda1, lambda2", "positive roots of P(., c)"},
      {"lambda_bar", "first positive crossing of the barred polynomial (null when undefined)"},
      {"rho", "decay rate of the approach to K (null when undefined)"},
      {"epsilon, gamma, P_gamma", "weight exponent gamma = lambda1 + epsilon and P(gamma, c)"},
      {"eta", "positive kernel vector of J(lambda1, c), max entry 1"},
      {"pq | v", "positive vector of J(gamma, c)^T (pq for two components, v otherwise)"},
      {"sign_determinants", "ok and entries[] {k, j, det, ok}"},
      {"d, A0, AK", "diffusion and Jacobians at 0 and K"},
      {"digest", "digest of the scalar fields, repeated in profile.csv"}};
  s["artifacts"]["profile.csv"] = {
      {"header", "lines starting with '#': key = value (n, c, c_star, m, L, K, anchor, lambda1, lambda2, rho, eta, "
                 "gamma, epsilon, xi0, pq, chi, tail_b, spectral_digest)"},
      {"columns", "xi, phi1 .. phin"}};
  s["artifacts"]["profile.json"] = {
      {"iteration", "passes, iterations (final pass), total_iterations, converged, tol, last_delta, max_increase, "
                    "min_gap_lower, max_gap_upper"},
      {"residual", "max |c phi' - d D[phi] - f(phi)|, its xi and component, within_10_tol flag"},
      {"boundary", "tail window verdict: left_worst = max |phi|, right_worst = max |phi - K|"},
      {"monotone", "min_step = min phi(j+1) - phi(j); pass when >= -1e-10"},
      {"tail", "left closure eta, chi, b and rates lambda1, lambda2; right closure rate rho"},
      {"truncation", "comparison with a solve on [-1.5L, 1.5L]: L_wide, max_diff, at_xi"},
      {"interpolation_floor", "odd-from-even monotone cubic reconstruction error / 16"}};
  s["artifacts"]["evolve.json"] = {
      {"grid", "m, first, last, x_lo, x_hi, nodes of the evolution grid"},
      {"dt, dt_bound, steps, stepper", "time stepping actually used"},
      {"initial", "weighted_l1, h1, max_abs of v0 - phi"},
      {"clip", "clipped, total, max, node_steps, within_budget (total <= 1e-9 node_steps)"},
      {"snapshots[]", "t and relative paths of the written snapshot files"}};
  s["artifacts"]["snapshots/*.txt"] = {
      {"header", "'# twlab-snapshot 1' then '# key = value' lines: t, n, m, first, last, K"},
      {"columns", "x, v1 .. vn"}};
  s["artifacts"]["snapshots/*.bin"] = {
      {"layout", "little-endian: magic 'TWSNAPB\\0', u32 version (1), u32 n, i64 m, i64 first, i64 last, f64 t, "
                 "f64 K[n], then f64 values node-major (v1..vn for each node)"}};
  s["artifacts"]["norms.csv"] = {
      {"columns", "t, then for each component i: linf_i, l1_i, l2_i, wl1_i, then energy"},
      {"linf_i, l1_i, l2_i", "norms of V_i = v_i(xi - ct, t) - phi_i(xi) over the overlap with the profile window"},
      {"wl1_i", "L1 norm weighted by omega1(xi) = exp(-gamma (xi - xi0))"},
      {"energy", "sum_i pq_i wl1_i"}};
  s["artifacts"]["front_norms.csv"] = {{"columns", "as norms.csv, for the unperturbed front run"}};
  s["artifacts"]["stability.json"] = {
      {"fits[]", "norm, component, mu, C, r2, t_lo, t_hi, samples, degenerate (or error)"},
      {"mu", "min of the per-component L-inf decay rates"},
      {"r2_worst", "smallest L-inf r2"},
      {"terminal_ratio", "L-inf at t_end over L-inf at t = 0"},
      {"energy", "raw_max_increase and excess_over_front (increase beyond the unperturbed run's E) for t >= from"},
      {"squeeze", "ordering, sandwich (against the evolved front), rectangle, phi_sandwich, worst_t"},
      {"transport_max_linf", "max L-inf deviation of the unperturbed run"},
      {"verdict, failures[]", "pass or fail and the reasons"}};
  return s.dump(2) + "\n";
}

}  // namespace twlab
