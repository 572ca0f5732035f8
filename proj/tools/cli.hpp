#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace drew::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kViolation = 3,
  kCalibrationRequired = 4,
};

/// Everything a command can be configured with. Loaded from a JSON file,
/// then overridden by flags.
struct RunConfig {
  std::string store;
  std::string csv;
  std::size_t synthetic_n = 0;  // 0: not requested
  int synthetic_d = 64;
  int k = 10;
  int n = 100;
  double design_p = 0.1;
  double reliability_threshold = 0.5;
  double tau_r = -1.0;
  std::string reliability_mode = "last-bit";
  std::string check_node = "exact";
  std::string suite;  // empty: built-in default suite
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: $DREW_OUTPUT_DIR, then "."
  std::size_t n_queries = 10000;
  std::size_t epsilon_trials = 100000;
  std::size_t roc_in = 1000;
  std::size_t roc_out = 1000;
  std::vector<std::size_t> top_p = {2, 5, 10, 20};
  std::string golden;  // empty: <output_dir>/epsilon_r.json

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Keys absent from `doc` keep the values already in `base`.
RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig base = {});

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace drew::cli
