#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

#include "sibf/eval.hpp"
#include "sibf/sibf.hpp"
#include "sibf/synth.hpp"

namespace sibf::cli {

using Json = nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericFailure = 3 };

// Bad configuration, arguments or input files (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json default_config();
// Applies "dotted.key=value". The key must exist in the defaults; the value
// is parsed as JSON when possible and taken as a string otherwise.
void apply_override(Json& config, const std::string& assignment);
// Defaults, then the optional file (deep-merged), then overrides in order.
Json load_config(const std::string& path, const std::vector<std::string>& overrides);

StftConfig stft_config(const Json& config);
SibfConfig sibf_config(const Json& config, int channels);
// Scenario `index` of the configured set (seed offset by the index).
ScenarioSpec scenario_spec(const Json& config, int index = 0);

struct SweepCell {
  double rho = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;
  bool iterative = true;
  int passes = 0;
  double mean_delta_sdr = 0.0;
  int scenarios = 0;
  int failures = 0;
  std::string status = "ok";
};

const char* sweep_csv_header();
std::vector<SweepCell> run_sweep(const Json& config);

struct BenchRow {
  std::string mode;
  double t_b_seconds = 0.0;
  double rtf = 0.0;
  LatencyReport latency;
};

const char* bench_csv_header();
// Times every processing mode on the same observation.
std::vector<BenchRow> bench_modes(const OracleBundle& bundle, const Json& config);

// Metric rows for every compared method on one scenario, in fixed order:
// sibf, ive_constrained, mmse, reference, observation.
std::vector<MetricReport> compare_scenario(const OracleBundle& bundle, const Json& config,
                                           const std::string& utterance_id,
                                           double* mmse_gamma_deviation = nullptr);

int cmd_simulate(const Json& config);
int cmd_extract(const Json& config);
int cmd_sweep(const Json& config);
int cmd_compare(const Json& config);
int cmd_bench(const Json& config);

// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace sibf::cli
