#pragma once

#include <memory>
#include <span>
#include <vector>

#include "kausal/dynamics.hpp"
#include "kausal/matrix.hpp"
#include "kausal/observables.hpp"

namespace kausal {

enum class KoopmanMode { marginal, joint };

std::string to_string(KoopmanMode mode);

// Snapshot triplets (current state, t-shifted effect state) as column
// matrices; one column per sample.
struct SnapshotPairs {
  Matrix current;  // d x D
  Matrix shifted;  // d_E x D
  std::size_t time_shift = 1;
};

SnapshotPairs make_snapshot_pairs(const Trajectory& traj, const ComponentPartition& partition,
                                  std::size_t time_shift);

struct DataMatrices {
  Matrix features;  // (d_E + M) x D: identity block stacked over dictionary block
  Matrix targets;   // d_E x D
};

// Column n holds [effect(n); psi(input(n))] with input = effect (marginal)
// or [effect; cause] (joint); target column is effect(n + t). Dictionaries
// with history drop the earliest samples.
DataMatrices build_matrices(const Trajectory& traj, const ComponentPartition& partition,
                            const FeatureMap& dictionary, std::size_t time_shift,
                            KoopmanMode mode);

// Rectangular Koopman operator mapping stacked observables to effect states
// t steps ahead. Immutable after fit.
struct KoopmanModel {
  KoopmanMode mode = KoopmanMode::marginal;
  Matrix op;  // d_E x (d_E + M)
  std::shared_ptr<const FeatureMap> dictionary;
  ComponentPartition partition;
  std::size_t time_shift = 1;
  std::size_t svd_rank = 0;  // 0 = full rank
  std::size_t effective_rank = 0;
  bool underdetermined = false;  // fewer samples than feature rows
};

// Singular values below rel_tol * sigma_max count as null directions when
// solving the least-squares problem. Aggressive truncation keeps the
// operator norm small, which stabilizes iterated conditional forecasts.
inline constexpr double kDefaultFitRelTol = 1e-6;

// Least-squares solve K = targets * pinv(features). With svd_rank = 0 the
// normal equations are solved through a symmetric eigendecomposition of the
// smaller Gram matrix; a positive svd_rank routes through the truncated SVD.
Matrix fit_operator(const Matrix& features, const Matrix& targets, std::size_t svd_rank = 0,
                    std::size_t* effective_rank = nullptr, double rel_tol = kDefaultFitRelTol);

KoopmanModel fit(const Trajectory& traj, const ComponentPartition& partition,
                 std::shared_ptr<const FeatureMap> dictionary, std::size_t time_shift,
                 KoopmanMode mode, std::size_t svd_rank = 0,
                 double rel_tol = kDefaultFitRelTol);

// K * [effect; psi(input)] for one state. Dictionaries with history cannot
// be evaluated pointwise; use conditional_forecast or build_matrices.
std::vector<double> predict(const KoopmanModel& model, std::span<const double> effect_state,
                            std::span<const double> cause_state = {});

struct ForecastResult {
  Matrix predictions;                   // H x d_E, step i predicts row target_rows[i]
  std::vector<std::size_t> target_rows; // rows of the test trajectory
  std::size_t start_row = 0;            // row supplying the initial identity block
};

// Conditional forecasting: the first step reads everything from the test
// data; later steps feed the previous prediction into the identity block
// while the dictionary block keeps reading test data.
ForecastResult conditional_forecast(const KoopmanModel& model, const Trajectory& test,
                                    std::size_t horizon, std::size_t start_row = 0);

// Effect-state rows of `traj` at the given rows, for comparing forecasts.
Matrix effect_rows(const Trajectory& traj, const ComponentPartition& partition,
                   const std::vector<std::size_t>& rows);

}  // namespace kausal
