#pragma once

#include <string>
#include <vector>

#include "kausal/config.hpp"

#include <json.hpp>

namespace kausal {

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
  std::string config_hash;
  std::string version = kVersion;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> timings;  // stage name, seconds
  std::vector<std::string> outputs;                     // files written, in order

  nlohmann::json to_json() const;
};

// Valid stage names: simulate, causal, test, forecast, stability, auroc.
// Each stage writes its CSV/JSON/SVG artifacts into the config's output
// directory (rooted at $KAUSAL_OUTPUT_ROOT when relative); a failing stage
// removes whatever it had written before rethrowing. The manifest lands in
// manifest.json.
RunManifest run_experiment(const ExperimentConfig& config,
                           const std::vector<std::string>& stages);

// The trajectory a config describes (integration or CSV ingest).
Trajectory config_trajectory(const ExperimentConfig& config);

}  // namespace kausal
