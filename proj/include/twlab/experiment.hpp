#pragma once

#include <optional>
#include <string>
#include <vector>

#include "twlab/error.hpp"
#include "twlab/evolve.hpp"
#include "twlab/model.hpp"
#include "twlab/profile.hpp"
#include "twlab/spectral.hpp"
#include "twlab/stability.hpp"

namespace twlab {

struct ModelConfig {
  std::string builtin;  // "holling2", "ricker" or "custom"
  Holling2Params holling;
  RickerParams ricker;
  std::string custom_name;
  Vec d;
  Vec K;
  QuadraticTables tables;

  ReactionSystem build() const;
};

enum class SnapshotFormat { None, Text, Binary, Both };

struct ExperimentConfig {
  std::string source;  // file name used in diagnostics
  std::string digest;  // FNV-1a of the document text
  std::optional<long long> seed;

  ModelConfig model;
  int audit_samples = 21;

  SpeedChoice speed;
  std::optional<double> epsilon;

  ProfileOptions profile;
  bool truncation_check = true;
  double boundary_tol = 1e-4;

  std::optional<double> dt;
  double t_end = 50;
  Stepper stepper = Stepper::Rk4;
  Perturbation perturbation;
  // fractions of min K, resolved against the model when the run starts
  std::vector<std::optional<double>> amplitude_fraction;
  SnapshotFormat snapshot_format = SnapshotFormat::None;
  double snapshot_interval = 5;

  double sample_interval = 0.25;
  std::optional<double> window_lo, window_hi;
  bool squeeze = true;
  double r2_min = 0.98;
  double terminal_ratio_max = 1e-3;
  double energy_from = 1;
  // norms whose decay fits are reported
  std::vector<NormKind> fit_norms{NormKind::Linf, NormKind::L1, NormKind::L2, NormKind::WeightedL1, NormKind::Energy};

  std::string output_dir = "twlab-out";
};

/// Parses and validates a YAML document. Errors are Config errors of the
/// form "source:line:col: field 'a.b': message".
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

enum class Stage { Audit, Spectral, Wave, Evolve, Stability, Full };

const char* stage_name(Stage s);
std::optional<Stage> stage_from_name(const std::string& name);

/// Process exit statuses.
namespace exit_status {
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int numeric = 2;
inline constexpr int hypothesis = 10;
inline constexpr int spectral = 11;
inline constexpr int stability = 12;
}  // namespace exit_status

int exit_status_for(ErrorCode code);

struct StageStatus {
  std::string name;
  std::string status;  // "ok", "fail" (verdict) or "error"
  int exit_code = 0;
  double seconds = 0;
  std::string message;
};

struct Artifact {
  std::string path;  // relative to the output directory
  std::string kind;
};

struct RunManifest {
  std::string config_digest;
  std::string config_source;
  std::string command;
  std::string output_dir;
  std::vector<Artifact> artifacts;
  std::vector<StageStatus> stages;
  int exit_code = 0;
  double seconds = 0;

  std::string json() const;
};

/// Runs the stage (and the stages it depends on), writing artifacts and
/// manifest.json into cfg.output_dir. Never throws for numerical or verdict
/// failures; those end up in the manifest and its exit code.
RunManifest run_experiment(const ExperimentConfig& cfg, Stage stage);

/// JSON records also written by the audit and spectral stages.
std::string audit_report_json(const ReactionSystem& sys, const HypothesisReport& report);
std::string spectral_report_json(const SpectralReport& report);

/// Column and field documentation for every artifact.
std::string schema_json();

}  // namespace twlab
