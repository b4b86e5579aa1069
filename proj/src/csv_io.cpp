#include "kausal/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kausal {

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  traj.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "t";
  for (std::size_t j = 0; j < traj.state_dim(); ++j) {
    out << ',';
    if (j < traj.dim_labels.size() && !traj.dim_labels[j].empty())
      out << traj.dim_labels[j];
    else
      out << "dim_" << j;
  }
  out << '\n';
  for (std::size_t i = 0; i < traj.num_samples(); ++i) {
    out << format_full(traj.times[i]);
    for (std::size_t j = 0; j < traj.state_dim(); ++j) out << ',' << format_full(traj.states(i, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  if (cell.empty())
    throw std::runtime_error("csv: missing value at row " + std::to_string(row) + ", column " +
                             std::to_string(col));
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    throw std::runtime_error("csv: non-numeric cell '" + cell + "' at row " +
                             std::to_string(row) + ", column " + std::to_string(col));
  }
  while (consumed < cell.size() && std::isspace(static_cast<unsigned char>(cell[consumed])))
    ++consumed;
  if (consumed != cell.size())
    throw std::runtime_error("csv: non-numeric cell '" + cell + "' at row " +
                             std::to_string(row) + ", column " + std::to_string(col));
  return value;
}

}  // namespace

Trajectory ingest_csv(const std::filesystem::path& path, const std::string& time_column,
                      const std::vector<std::string>& value_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: " + path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  std::size_t time_idx = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == time_column) time_idx = j;
  if (time_idx == header.size())
    throw std::runtime_error("csv: time column '" + time_column + "' not found in " +
                             path.string());

  std::vector<std::size_t> value_idx;
  std::vector<std::string> labels;
  if (value_columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (j != time_idx) {
        value_idx.push_back(j);
        labels.push_back(header[j]);
      }
  } else {
    for (const std::string& name : value_columns) {
      std::size_t found = header.size();
      for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) found = j;
      if (found == header.size())
        throw std::runtime_error("csv: column '" + name + "' not found in " + path.string());
      value_idx.push_back(found);
      labels.push_back(name);
    }
  }
  if (value_idx.empty()) throw std::runtime_error("csv: no value columns selected");

  std::vector<double> times;
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv: row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header.size()));
    times.push_back(parse_cell(cells[time_idx], row, time_idx));
    for (std::size_t j : value_idx) values.push_back(parse_cell(cells[j], row, j));
  }
  if (times.size() < 2) throw std::runtime_error("csv: needs at least 2 data rows");

  const double step = times[1] - times[0];
  if (!(step > 0.0)) throw std::runtime_error("csv: time must increase at row 3");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double d = times[i] - times[i - 1];
    if (!(d > 0.0))
      throw std::runtime_error("csv: time not strictly increasing at row " +
                               std::to_string(i + 2));
    if (std::abs(d - step) > 1e-6 * std::abs(step))
      throw std::runtime_error("csv: non-uniform sampling at row " + std::to_string(i + 2) +
                               " (step " + format_full(d) + " vs " + format_full(step) + ")");
  }

  Trajectory traj;
  traj.times = std::move(times);
  traj.dim_labels = std::move(labels);
  traj.states = Matrix(traj.times.size(), value_idx.size());
  std::copy(values.begin(), values.end(), traj.states.data());
  traj.validate();
  return traj;
}

void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size())
    throw std::invalid_argument("write_table_csv: header/column count mismatch");
  std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& col : columns)
    if (col.size() != rows) throw std::invalid_argument("write_table_csv: ragged columns");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j)
      out << (j ? "," : "") << format_full(columns[j][i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace kausal
