#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kausal/dynamics.hpp"

namespace kausal {

// Header `t,<label>,...`, one row per sample, full 17-significant-digit
// doubles so ingest round-trips bit-exactly.
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);

// Strict reader: rejects ragged rows, non-numeric cells and non-uniform
// time (relative jitter above 1e-6), reporting the offending row. Empty
// value_columns selects every non-time column.
Trajectory ingest_csv(const std::filesystem::path& path, const std::string& time_column = "t",
                      const std::vector<std::string>& value_columns = {});

// Generic numeric table writer with the same formatting rules.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& columns);

std::string format_full(double v);

}  // namespace kausal
