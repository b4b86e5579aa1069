#include "kausal/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kausal {

std::string to_string(KoopmanMode mode) {
  return mode == KoopmanMode::marginal ? "marginal" : "joint";
}

namespace {

// Rows = samples, columns = the selected state dimensions.
Matrix select_dims(const Matrix& states, const std::vector<std::size_t>& dims) {
  Matrix out(states.rows(), dims.size());
  for (std::size_t i = 0; i < states.rows(); ++i) {
    const double* row = states.data() + i * states.cols();
    double* o = out.data() + i * dims.size();
    for (std::size_t j = 0; j < dims.size(); ++j) o[j] = row[dims[j]];
  }
  return out;
}

Matrix dictionary_input_series(const Trajectory& traj, const ComponentPartition& partition,
                               KoopmanMode mode) {
  std::vector<std::size_t> dims = partition.effect_dims;
  if (mode == KoopmanMode::joint)
    dims.insert(dims.end(), partition.cause_dims.begin(), partition.cause_dims.end());
  return select_dims(traj.states, dims);
}

}  // namespace

SnapshotPairs make_snapshot_pairs(const Trajectory& traj, const ComponentPartition& partition,
                                  std::size_t time_shift) {
  partition.validate(traj.state_dim());
  if (time_shift < 1) throw std::invalid_argument("make_snapshot_pairs: time shift must be >= 1");
  if (traj.num_samples() < time_shift + 1)
    throw std::invalid_argument("make_snapshot_pairs: trajectory too short for time shift");
  const std::size_t d = traj.state_dim();
  const std::size_t de = partition.effect_dims.size();
  const std::size_t count = traj.num_samples() - time_shift;

  SnapshotPairs out;
  out.time_shift = time_shift;
  out.current = Matrix(d, count);
  out.shifted = Matrix(de, count);
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t j = 0; j < d; ++j) out.current(j, n) = traj.states(n, j);
    for (std::size_t j = 0; j < de; ++j)
      out.shifted(j, n) = traj.states(n + time_shift, partition.effect_dims[j]);
  }
  return out;
}

DataMatrices build_matrices(const Trajectory& traj, const ComponentPartition& partition,
                            const FeatureMap& dictionary, std::size_t time_shift,
                            KoopmanMode mode) {
  partition.validate(traj.state_dim());
  if (time_shift < 1) throw std::invalid_argument("build_matrices: time shift must be >= 1");
  const std::size_t history = dictionary.history();
  if (traj.num_samples() < time_shift + history + 1)
    throw std::invalid_argument("build_matrices: trajectory too short for time shift " +
                                std::to_string(time_shift));

  const Matrix effect = select_dims(traj.states, partition.effect_dims);
  const Matrix inputs = dictionary_input_series(traj, partition, mode);
  if (dictionary.input_dim() != inputs.cols())
    throw std::invalid_argument("build_matrices: dictionary expects input dimension " +
                                std::to_string(dictionary.input_dim()) + ", partition provides " +
                                std::to_string(inputs.cols()));

  const std::size_t de = partition.effect_dims.size();
  const std::size_t m = dictionary.output_dim();
  const std::size_t count = traj.num_samples() - time_shift - history;

  DataMatrices out;
  out.features = Matrix(de + m, count);
  out.targets = Matrix(de, count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t row = history + n;
    for (std::size_t j = 0; j < de; ++j) out.features(j, n) = effect(row, j);
    const std::vector<double> psi = dictionary.apply(dictionary.gather(inputs, row));
    for (std::size_t j = 0; j < m; ++j) out.features(de + j, n) = psi[j];
    for (std::size_t j = 0; j < de; ++j) out.targets(j, n) = effect(row + time_shift, j);
  }
  return out;
}

namespace {

Matrix fit_truncated_svd(const Matrix& features, const Matrix& targets, std::size_t svd_rank,
                         std::size_t* effective_rank, double rel_tol) {
  const SvdResult f = svd(features);
  const double smax = f.singular_values.empty() ? 0.0 : f.singular_values.front();
  const double cut = rel_tol * smax;
  std::size_t rank = 0;
  for (double s : f.singular_values) {
    if (rank >= svd_rank || s <= cut || s == 0.0) break;
    ++rank;
  }
  if (effective_rank) *effective_rank = rank;

  // K = T * V_r * diag(1/sigma) * U_r^T
  Matrix tv(targets.rows(), rank);  // T * V_r, V_r columns = vt rows
  for (std::size_t i = 0; i < targets.rows(); ++i)
    for (std::size_t k = 0; k < rank; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < targets.cols(); ++n) s += targets(i, n) * f.vt(k, n);
      tv(i, k) = s / f.singular_values[k];
    }
  Matrix out(targets.rows(), features.rows(), 0.0);
  for (std::size_t i = 0; i < targets.rows(); ++i)
    for (std::size_t k = 0; k < rank; ++k) {
      const double v = tv(i, k);
      for (std::size_t j = 0; j < features.rows(); ++j) out(i, j) += v * f.u(j, k);
    }
  return out;
}

// Full-rank solve through the smaller Gram matrix. The singular-value
// cutoff squares on the Gram eigenvalues; 1e-14 * lambda_max is the floor
// below which the squared problem carries no information anyway.
Matrix fit_gram(const Matrix& features, const Matrix& targets, std::size_t* effective_rank,
                double rel_tol) {
  const double kEigCut = std::max(rel_tol * rel_tol, 1e-14);
  const std::size_t p = features.rows();
  const std::size_t d = features.cols();

  if (p <= d) {
    const Matrix g = gram(features);  // F F^T, p x p
    const SymEig eig = sym_eig(g);
    const double lmax = eig.values.empty() ? 0.0 : std::max(eig.values.front(), 0.0);
    std::size_t rank = 0;
    while (rank < p && eig.values[rank] > kEigCut * lmax && eig.values[rank] > 0.0) ++rank;
    if (effective_rank) *effective_rank = rank;

    // K = (T F^T) Q diag(1/lambda) Q^T
    const Matrix tft = matmul_abt(targets, features);  // e x p
    Matrix tq(targets.rows(), rank);
    for (std::size_t i = 0; i < targets.rows(); ++i)
      for (std::size_t k = 0; k < rank; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < p; ++j) s += tft(i, j) * eig.vectors(j, k);
        tq(i, k) = s / eig.values[k];
      }
    Matrix out(targets.rows(), p, 0.0);
    for (std::size_t i = 0; i < targets.rows(); ++i)
      for (std::size_t k = 0; k < rank; ++k) {
        const double v = tq(i, k);
        const double* qk = eig.vectors.data();
        for (std::size_t j = 0; j < p; ++j) out(i, j) += v * qk[j * p + k];
      }
    return out;
  }

  // Tall features (interpolating regime): work with F^T F, d x d.
  const Matrix ft = features.transposed();
  const Matrix g = gram(ft);  // F^T F
  const SymEig eig = sym_eig(g);
  const double lmax = eig.values.empty() ? 0.0 : std::max(eig.values.front(), 0.0);
  std::size_t rank = 0;
  while (rank < d && eig.values[rank] > kEigCut * lmax && eig.values[rank] > 0.0) ++rank;
  if (effective_rank) *effective_rank = rank;

  // K = T Q diag(1/lambda) (F Q)^T
  Matrix tq(targets.rows(), rank);
  for (std::size_t i = 0; i < targets.rows(); ++i)
    for (std::size_t k = 0; k < rank; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < d; ++n) s += targets(i, n) * eig.vectors(n, k);
      tq(i, k) = s / eig.values[k];
    }
  Matrix fq(p, rank, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const double* fi = features.data() + i * d;
    for (std::size_t n = 0; n < d; ++n) {
      const double f = fi[n];
      if (f == 0.0) continue;
      const double* qn = eig.vectors.data() + n * d;
      double* fqi = fq.data() + i * rank;
      for (std::size_t k = 0; k < rank; ++k) fqi[k] += f * qn[k];
    }
  }
  return matmul_abt(tq, fq);
}

}  // namespace

Matrix fit_operator(const Matrix& features, const Matrix& targets, std::size_t svd_rank,
                    std::size_t* effective_rank, double rel_tol) {
  if (features.cols() != targets.cols())
    throw std::invalid_argument("fit_operator: feature/target sample counts differ");
  if (features.cols() == 0) throw std::invalid_argument("fit_operator: no samples");
  if (!(rel_tol >= 0.0)) throw std::invalid_argument("fit_operator: rel_tol must be >= 0");
  if (svd_rank > 0) return fit_truncated_svd(features, targets, svd_rank, effective_rank, rel_tol);
  return fit_gram(features, targets, effective_rank, rel_tol);
}

KoopmanModel fit(const Trajectory& traj, const ComponentPartition& partition,
                 std::shared_ptr<const FeatureMap> dictionary, std::size_t time_shift,
                 KoopmanMode mode, std::size_t svd_rank, double rel_tol) {
  if (!dictionary) throw std::invalid_argument("fit: dictionary is null");
  const DataMatrices data = build_matrices(traj, partition, *dictionary, time_shift, mode);

  KoopmanModel model;
  model.mode = mode;
  model.dictionary = std::move(dictionary);
  model.partition = partition;
  model.time_shift = time_shift;
  model.svd_rank = svd_rank;
  model.underdetermined = data.features.rows() > data.features.cols();
  model.op = fit_operator(data.features, data.targets, svd_rank, &model.effective_rank, rel_tol);
  return model;
}

std::vector<double> predict(const KoopmanModel& model, std::span<const double> effect_state,
                            std::span<const double> cause_state) {
  const std::size_t de = model.partition.effect_dims.size();
  if (effect_state.size() != de)
    throw std::invalid_argument("predict: effect state has wrong dimension");
  if (model.mode == KoopmanMode::joint && cause_state.size() != model.partition.cause_dims.size())
    throw std::invalid_argument("predict: joint mode requires the cause state");
  if (model.dictionary->history() > 0)
    throw std::invalid_argument("predict: dictionary needs history; use conditional_forecast");

  std::vector<double> input(effect_state.begin(), effect_state.end());
  if (model.mode == KoopmanMode::joint)
    input.insert(input.end(), cause_state.begin(), cause_state.end());
  const std::vector<double> psi = model.dictionary->apply(input);

  std::vector<double> stacked(effect_state.begin(), effect_state.end());
  stacked.insert(stacked.end(), psi.begin(), psi.end());
  return matvec(model.op, stacked);
}

ForecastResult conditional_forecast(const KoopmanModel& model, const Trajectory& test,
                                    std::size_t horizon, std::size_t start_row) {
  if (horizon < 1) throw std::invalid_argument("conditional_forecast: horizon must be >= 1");
  model.partition.validate(test.state_dim());
  const std::size_t t = model.time_shift;
  const std::size_t history = model.dictionary->history();
  const std::size_t s0 = std::max(start_row, history);
  if (s0 + horizon * t >= test.num_samples())
    throw std::invalid_argument(
        "conditional_forecast: horizon " + std::to_string(horizon) + " at shift " +
        std::to_string(t) + " exceeds the " + std::to_string(test.num_samples()) +
        " available test samples");

  const Matrix effect = select_dims(test.states, model.partition.effect_dims);
  const Matrix inputs = dictionary_input_series(test, model.partition, model.mode);
  const std::size_t de = model.partition.effect_dims.size();
  const std::size_t m = model.dictionary->output_dim();

  ForecastResult out;
  out.predictions = Matrix(horizon, de);
  out.target_rows.resize(horizon);
  out.start_row = s0;

  std::vector<double> stacked(de + m);
  std::vector<double> identity_block(effect.row(s0).begin(), effect.row(s0).end());
  for (std::size_t i = 1; i <= horizon; ++i) {
    const std::size_t input_row = s0 + (i - 1) * t;
    const std::vector<double> psi = model.dictionary->apply(
        model.dictionary->gather(inputs, input_row));
    std::copy(identity_block.begin(), identity_block.end(), stacked.begin());
    std::copy(psi.begin(), psi.end(), stacked.begin() + de);
    const std::vector<double> pred = matvec(model.op, stacked);
    std::copy(pred.begin(), pred.end(), out.predictions.row(i - 1).begin());
    out.target_rows[i - 1] = s0 + i * t;
    identity_block = pred;
  }
  return out;
}

Matrix effect_rows(const Trajectory& traj, const ComponentPartition& partition,
                   const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), partition.effect_dims.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < partition.effect_dims.size(); ++j)
      out(i, j) = traj.states(rows[i], partition.effect_dims[j]);
  return out;
}

}  // namespace kausal
