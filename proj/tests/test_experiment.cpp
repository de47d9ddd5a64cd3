#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "twlab/error.hpp"
#include "twlab/experiment.hpp"

using namespace twlab;
namespace fs = std::filesystem;

namespace {

std::string config_path(const std::string& name) { return std::string(TWLAB_SOURCE_DIR) + "/configs/" + name; }

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "t.yaml");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    return e.what();
  }
  FAIL("expected a config error");
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("twlab_test_" + name);
  fs::remove_all(p);
  return p;
}

const StageStatus* find_stage(const RunManifest& m, const std::string& name) {
  for (const auto& s : m.stages)
    if (s.name == name) return &s;
  return nullptr;
}

}  // namespace

TEST_CASE("config errors carry position and field") {
  try {
    load_config(config_path("malformed.yaml"));
    FAIL("malformed config accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    const std::string msg = e.what();
    CHECK(msg.find("malformed.yaml:4:5: field 'model.custom.K'") != std::string::npos);
  }

  CHECK(config_error("model:\n  builtin: holling2\n  colour: red\n").find("t.yaml:3:3: field 'model.colour'") !=
        std::string::npos);
  CHECK(config_error("model:\n  builtin: holling2\nprofile:\n  m: ten\n").find("field 'profile.m'") !=
        std::string::npos);
  CHECK(config_error("model:\n  builtin: lotka\n").find("field 'model.builtin'") != std::string::npos);
  CHECK(config_error("model: [1, 2\n").find("t.yaml:") == 0);
  CHECK(config_error("model:\n  builtin: holling2\nevolve:\n  stepper: leapfrog\n").find("evolve.stepper") !=
        std::string::npos);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"holling2.yaml", "holling2_fine.yaml", "ricker.yaml", "ricker_fine.yaml",
                           "ricker_boundary.yaml", "custom3.yaml", "sub_threshold.yaml", "zero_perturbation.yaml"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(config_path(name)));
  }
  const auto a = load_config(config_path("holling2.yaml"));
  const auto b = load_config(config_path("holling2.yaml"));
  CHECK(a.digest == b.digest);
  CHECK(a.digest != load_config(config_path("ricker.yaml")).digest);
  CHECK(a.profile.m == 10);
}

TEST_CASE("stage names and exit statuses") {
  for (auto s : {Stage::Audit, Stage::Spectral, Stage::Wave, Stage::Evolve, Stage::Stability, Stage::Full})
    CHECK(stage_from_name(stage_name(s)) == s);
  CHECK_FALSE(stage_from_name("profile").has_value());
  CHECK(exit_status_for(ErrorCode::Config) == exit_status::config);
  CHECK(exit_status_for(ErrorCode::InvalidArgument) == exit_status::config);
  CHECK(exit_status_for(ErrorCode::SubThreshold) == exit_status::spectral);
  CHECK(exit_status_for(ErrorCode::Convergence) == exit_status::numeric);
  CHECK(exit_status_for(ErrorCode::BlowUp) == exit_status::numeric);
}

TEST_CASE("audit failure stops the run with status 10") {
  auto cfg = load_config(config_path("ricker_boundary.yaml"));
  cfg.output_dir = scratch("boundary").string();
  const auto m = run_experiment(cfg, Stage::Full);
  CHECK(m.exit_code == exit_status::hypothesis);
  const auto* audit = find_stage(m, "audit");
  REQUIRE(audit);
  CHECK(audit->status == "fail");
  CHECK(audit->message.find("B4") != std::string::npos);
  CHECK(find_stage(m, "spectral") == nullptr);
  const auto j = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "audit.json"));
  CHECK(j["all_pass"] == false);
  CHECK(fs::exists(fs::path(cfg.output_dir) / "manifest.json"));
}

TEST_CASE("sub-threshold speed exits with status 11") {
  auto cfg = load_config(config_path("sub_threshold.yaml"));
  cfg.output_dir = scratch("sub").string();
  const auto m = run_experiment(cfg, Stage::Wave);
  CHECK(m.exit_code == exit_status::spectral);
  REQUIRE(find_stage(m, "spectral"));
  CHECK(find_stage(m, "spectral")->status == "error");
  CHECK(find_stage(m, "wave") == nullptr);
}

TEST_CASE("custom three-component spectral stage") {
  auto cfg = load_config(config_path("custom3.yaml"));
  cfg.output_dir = scratch("custom3").string();
  const auto m = run_experiment(cfg, Stage::Spectral);
  CHECK(m.exit_code == 0);
  const auto j = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "spectral.json"));
  CHECK(j.contains("v"));
  CHECK(j["v"].size() == 3);
}

TEST_CASE("manifest lists every artifact once and runs are reproducible") {
  auto cfg = load_config(config_path("holling2.yaml"));
  cfg.t_end = 10;
  cfg.window_lo = 2;
  cfg.window_hi = 8;
  cfg.snapshot_format = SnapshotFormat::Both;
  cfg.snapshot_interval = 5;

  cfg.output_dir = scratch("run_a").string();
  const auto a = run_experiment(cfg, Stage::Full);
  cfg.output_dir = scratch("run_b").string();
  const auto b = run_experiment(cfg, Stage::Full);

  for (const auto& s : a.stages) CHECK_MESSAGE(s.status != "error", s.name << ": " << s.message);
  REQUIRE(a.artifacts.size() == b.artifacts.size());

  std::set<std::string> seen;
  for (const auto& art : a.artifacts) CHECK(seen.insert(art.path).second);
  for (const char* name : {"audit.json", "spectral.json", "profile.csv", "profile.json", "evolve.json", "norms.csv",
                           "front_norms.csv", "stability.json", "schema.json", "manifest.json",
                           "snapshots/snap_00000.txt", "snapshots/snap_00002.bin"})
    CHECK_MESSAGE(seen.count(name) == 1, name);

  // every file on disk is listed, and listed files exist
  std::size_t on_disk = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.output_dir))
    if (e.is_regular_file()) {
      ++on_disk;
      CHECK_MESSAGE(seen.count(fs::relative(e.path(), a.output_dir).generic_string()) == 1, e.path());
    }
  CHECK(on_disk == seen.size());

  // wall-clock fields are the only difference
  for (const auto& art : a.artifacts) {
    const auto x = slurp(fs::path(a.output_dir) / art.path);
    const auto y = slurp(fs::path(b.output_dir) / art.path);
    if (art.path == "manifest.json" || art.path == "evolve.json" || art.path == "stability.json" ||
        art.path == "profile.json") {
      auto jx = nlohmann::json::parse(x), jy = nlohmann::json::parse(y);
      auto strip = [](nlohmann::json& j) {
        const auto flat = j.flatten();
        for (const auto& item : flat.items())
          if (item.key().find("seconds") != std::string::npos) j[nlohmann::json::json_pointer(item.key())] = 0;
        for (const char* k : {"output_dir"}) j.erase(k);
      };
      strip(jx);
      strip(jy);
      CHECK_MESSAGE(jx == jy, art.path);
    } else {
      CHECK_MESSAGE(x == y, art.path);
    }
  }
}

TEST_CASE("schema documents every artifact kind") {
  const auto s = nlohmann::json::parse(schema_json());
  for (const char* name : {"manifest.json", "audit.json", "spectral.json", "profile.csv", "profile.json",
                           "evolve.json", "norms.csv", "stability.json"})
    CHECK_MESSAGE(s["artifacts"].contains(name), name);
  CHECK(s["exit_codes"].contains("12"));
}
