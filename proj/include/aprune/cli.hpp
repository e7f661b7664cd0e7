#ifndef APRUNE_CLI_HPP_
#define APRUNE_CLI_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "aprune/config.hpp"

namespace aprune {

extern const char* kToolVersion;

// Exit codes shared by every command.
enum ExitCode {
  kExitOk = 0,
  kExitFailure = 1,     // I/O, shape, or unexpected errors
  kExitConfig = 2,      // invalid configuration or arguments
  kExitDivergence = 3,  // training loss turned non-finite
  kExitCollapse = 4,    // derivation left a site with zero channels
};

// Every run directory carries a manifest naming the tool version, the seed,
// the full config snapshot, and each artifact the pipeline wrote — enough
// to reproduce the run from scratch.
struct RunManifest {
  std::string version;
  std::string created;  // ISO-8601 UTC
  std::string updated;
  uint32_t seed = 0;
  std::string config_json;  // snapshot text (a JSON object)
  std::vector<std::pair<std::string, std::string>> artifacts;  // name, path

  void add_artifact(const std::string& name, const std::string& rel_path);
  const std::string* find_artifact(const std::string& name) const;
};

std::string iso_utc_now();
void save_manifest(RunManifest& m, const std::string& run_dir);
RunManifest load_manifest(const std::string& run_dir);

// Final indicator snapshot: per-site alpha vectors plus the temperature,
// written so a reload reproduces keep decisions bit-for-bit.
void save_alpha_snapshot(const IndicatorSet& set, const std::string& path);
void load_alpha_snapshot(IndicatorSet& set, const std::string& path);

struct SearchCmdOptions {
  std::string config_path;
  std::string run_dir;            // empty: derived from APRUNE_RUN_ROOT
  bool dry_run = false;
  bool no_annealing = false;      // ablation: hold T at t0
  bool no_bilevel = false;        // ablation: merge the two splits
  std::vector<std::string> reg;   // ablation: replace the active penalty set
  int64_t seed = -1;              // override search seed
};

struct SpaceCmdOptions {
  std::string config_path;
  std::string run_dir;
  std::string kind;  // override space.kind
  int instances = -1;
  int64_t seed = -1;
};

// Commands return an ExitCode and write human-readable output to `out`.
// They throw the typed errors (ConfigError and friends); run_cli maps those
// to exit codes.
int cmd_search(const SearchCmdOptions& opt, std::ostream& out);
int cmd_derive(const std::string& run_dir, double threshold_override,
               std::ostream& out);  // override < 0: use the config value
int cmd_finetune(const std::string& run_dir, std::ostream& out);
int cmd_eval(const std::string& run_dir, std::ostream& out);
int cmd_report(const std::string& run_dir, std::ostream& out);
int cmd_space(const SpaceCmdOptions& opt, std::ostream& out);

// Full argv-level entry point: parses flags, honours APRUNE_RUN_ROOT and
// APRUNE_THREADS, dispatches, and maps typed errors to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace aprune

#endif  // APRUNE_CLI_HPP_
