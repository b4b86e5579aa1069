#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kausal/causal.hpp"
#include "kausal/dynamics.hpp"
#include "kausal/observables.hpp"

namespace kausal {

// Minimal TOML reader covering what the experiment configs use: [tables],
// key = string | number | boolean | flat array, and # comments.
struct TomlValue {
  std::variant<std::string, double, bool, std::vector<TomlValue>> data;

  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_number() const { return std::holds_alternative<double>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
  bool is_array() const { return std::holds_alternative<std::vector<TomlValue>>(data); }

  const std::string& as_string() const { return std::get<std::string>(data); }
  double as_number() const { return std::get<double>(data); }
  bool as_bool() const { return std::get<bool>(data); }
  const std::vector<TomlValue>& as_array() const { return std::get<std::vector<TomlValue>>(data); }
};

class TomlDocument {
 public:
  static TomlDocument parse_file(const std::filesystem::path& path);
  static TomlDocument parse(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& table, const std::string& key) const;
  const TomlValue* find(const std::string& table, const std::string& key) const;
  bool has_table(const std::string& table) const;

  std::string get_string(const std::string& table, const std::string& key,
                         const std::string& fallback) const;
  double get_number(const std::string& table, const std::string& key, double fallback) const;
  bool get_bool(const std::string& table, const std::string& key, bool fallback) const;
  std::vector<double> get_numbers(const std::string& table, const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& table, const std::string& key) const;

 private:
  std::map<std::string, std::map<std::string, TomlValue>> tables_;
};

// Resolved experiment description: exactly one of {system, csv input}.
struct ExperimentConfig {
  std::string name = "experiment";
  std::filesystem::path output_dir;
  std::uint64_t seed = 1;

  bool use_csv = false;
  SystemSpec system;
  std::vector<double> initial;  // empty = system default
  double t0 = 0.0;
  double t1 = 10.0;
  double dt = 1e-2;
  std::size_t output_stride = 1;
  std::filesystem::path csv_path;
  std::string csv_time_column = "t";
  std::vector<std::string> csv_value_columns;

  // Dimension names or zero-based indices; unlisted dims become remainder.
  std::vector<std::string> effect;
  std::vector<std::string> cause;

  DictionarySpec dictionary;
  TrainConfig train;

  CausalOptions causal;
  bool both_directions = true;
  std::size_t forecast_horizon = 0;  // 0 = full test split
  std::vector<std::uint64_t> ensemble_seeds;

  std::size_t permutations = 100;
  std::size_t test_time_shift = 1;

  double mu_min = 0.3;
  double mu_max = 0.9;
  double mu_step = 0.005;

  std::size_t window = 10;
  std::size_t window_step = 1;
  double gamma = 1.0;
  std::string label_method = "gamma_sigma";
  std::string label_series;  // default: first effect dimension
  double oni_threshold = 0.5;
  std::size_t task2_last = 0;       // keep only the final L samples (0 = all)
  std::size_t task2_subsample = 1;  // stride applied before windowing

  // Relative paths in the config resolve against its directory.
  std::filesystem::path base_dir;

  // Stable serialization for hashing and the manifest.
  std::string canonical_string() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Applies a `key=value` override using the same table.key addressing as the
// file (e.g. "experiment.seed=3", "causal.shifts=1:50").
void apply_override(ExperimentConfig& config, const std::string& assignment);

ComponentPartition resolve_partition(const ExperimentConfig& config,
                                     const std::vector<std::string>& dim_labels);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace kausal
