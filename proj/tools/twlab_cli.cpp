#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "twlab/twlab.h"

namespace {

int report_error(tw_status s) {
  std::cerr << "twlab: " << tw_status_name(s) << ": " << tw_last_error() << "\n";
  return tw_exit_status(s);
}

int run_stage(const std::string& stage, const std::string& config, const std::string& out, bool quiet) {
  tw_experiment* exp = nullptr;
  if (auto s = tw_experiment_load(config.c_str(), &exp); s != TW_OK) return report_error(s);
  if (!out.empty()) {
    if (auto s = tw_experiment_set_output_dir(exp, out.c_str()); s != TW_OK) {
      tw_experiment_free(exp);
      return report_error(s);
    }
  }
  int code = 0;
  char* manifest = nullptr;
  const auto s = tw_experiment_run(exp, stage.c_str(), &code, &manifest);
  tw_experiment_free(exp);
  if (s != TW_OK) return report_error(s);

  const auto j = nlohmann::json::parse(manifest);
  tw_string_free(manifest);
  if (!quiet) {
    for (const auto& st : j["stages"]) {
      std::string line = st["name"].get<std::string>() + ": " + st["status"].get<std::string>();
      char buf[32];
      std::snprintf(buf, sizeof buf, " (%.2fs)", st["wall_clock_seconds"].get<double>());
      line += buf;
      if (const auto msg = st["message"].get<std::string>(); !msg.empty()) line += " - " + msg;
      std::cout << line << "\n";
    }
    std::cout << "artifacts in " << j["output_dir"].get<std::string>() << ", exit " << code << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traveling wave fronts of lattice reaction-diffusion systems"};
  app.set_version_flag("--version", std::string(tw_version()));
  app.require_subcommand(1);

  std::string config, out;
  bool quiet = false;
  const char* stages[][2] = {
      {"audit", "check the model hypotheses"},
      {"spectral", "characteristic roots, threshold speed and weights"},
      {"wave", "solve for the wave profile"},
      {"evolve", "integrate the lattice system from the perturbed front"},
      {"stability", "decay of perturbations in the moving frame"},
      {"full", "audit, spectral, wave, evolve and stability in sequence"},
  };
  for (const auto& st : stages) {
    auto* sub = app.add_subcommand(st[0], st[1]);
    sub->add_option("config", config, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", out, "output directory (overrides output.directory)");
    sub->add_flag("-q,--quiet", quiet, "no summary on stdout");
  }
  auto* schema = app.add_subcommand("schema", "print the artifact schema");
  schema->add_option("-o,--out", out, "write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (schema->parsed()) {
    char* text = nullptr;
    if (auto s = tw_schema(&text); s != TW_OK) return report_error(s);
    if (out.empty()) {
      std::cout << text;
    } else {
      std::ofstream os(out);
      os << text;
      if (!os) {
        std::cerr << "twlab: cannot write " << out << "\n";
        tw_string_free(text);
        return 2;
      }
    }
    tw_string_free(text);
    return 0;
  }
  for (const auto* sub : app.get_subcommands()) return run_stage(sub->get_name(), config, out, quiet);
  return 1;
}
