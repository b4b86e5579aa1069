#include "kausal/causal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kausal {

double loss(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw std::invalid_argument("loss: shape mismatch");
  if (pred.rows() == 0) throw std::invalid_argument("loss: empty matrices");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < pred.cols(); ++j) {
      const double d = pred(i, j) - truth(i, j);
      row += d * d;
    }
    total += row;
  }
  return total / static_cast<double>(pred.rows());
}

namespace {

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + end * m.cols(), out.data());
  return out;
}

Trajectory slice_trajectory(const Trajectory& traj, std::size_t begin, std::size_t end) {
  Trajectory out;
  out.times.assign(traj.times.begin() + begin, traj.times.begin() + end);
  out.states = slice_rows(traj.states, begin, end);
  out.dim_labels = traj.dim_labels;
  return out;
}

struct Split {
  Trajectory train;  // rows [0, train_end)
  Trajectory test;   // rows [train_end - history, N): keeps history for gathers
  std::size_t history = 0;
};

Split split_trajectory(const Trajectory& traj, const DictionaryPair& dicts,
                       double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train fraction must lie in (0,1)");
  const std::size_t history =
      std::max(dicts.marginal->history(), dicts.joint->history());
  const std::size_t n = traj.num_samples();
  if (n < history + 4) throw std::invalid_argument("split: trajectory too short");

  const std::size_t triplets = n - 1 - history;  // shift-1 triplet count
  std::size_t n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(triplets)));
  n_train = std::min(std::max<std::size_t>(n_train, 2), triplets - 1);

  // Training rows cover current indices history..history+n_train-1 plus
  // their shift-1 targets. The test slice starts history rows earlier than
  // its first current index so gathers stay valid.
  const std::size_t train_end = history + n_train + 1;
  Split out;
  out.history = history;
  out.train = slice_trajectory(traj, 0, train_end);
  out.test = slice_trajectory(traj, n_train, n);
  return out;
}

// Losses per shift from iterated shift-1 operators (conditional forecasting).
std::vector<double> forecast_losses(const KoopmanModel& model, const Trajectory& test,
                                    const std::vector<std::size_t>& shifts, bool all_starts) {
  const std::size_t history = model.dictionary->history();
  const std::size_t max_shift = *std::max_element(shifts.begin(), shifts.end());
  const std::size_t n = test.num_samples();
  if (history + max_shift >= n)
    throw std::invalid_argument("causal_measure: largest shift exceeds the test split");

  std::vector<double> sums(shifts.size(), 0.0);
  std::vector<std::size_t> counts(shifts.size(), 0);

  const std::size_t last_start = all_starts ? n - 2 : history;
  for (std::size_t start = history; start <= last_start; ++start) {
    const std::size_t budget = n - 1 - start;
    const std::size_t horizon = std::min(max_shift, budget);
    if (horizon == 0) break;
    const ForecastResult fc = conditional_forecast(model, test, horizon, start);
    const Matrix truth = effect_rows(test, model.partition, fc.target_rows);
    for (std::size_t si = 0; si < shifts.size(); ++si) {
      const std::size_t s = shifts[si];
      if (s > horizon) continue;
      double err = 0.0;
      for (std::size_t j = 0; j < truth.cols(); ++j) {
        const double d = fc.predictions(s - 1, j) - truth(s - 1, j);
        err += d * d;
      }
      sums[si] += err;
      counts[si] += 1;
    }
  }
  std::vector<double> out(shifts.size(), 0.0);
  for (std::size_t si = 0; si < shifts.size(); ++si) {
    if (counts[si] == 0)
      throw std::invalid_argument("causal_measure: no admissible start for shift " +
                                  std::to_string(shifts[si]));
    out[si] = sums[si] / static_cast<double>(counts[si]);
  }
  return out;
}

// Loss at one shift from a dedicated K^t, single-step over all test triplets.
double refit_loss(const Trajectory& train, const Trajectory& test,
                  const ComponentPartition& partition,
                  const std::shared_ptr<const FeatureMap>& dictionary, KoopmanMode mode,
                  std::size_t shift, std::size_t svd_rank, double rel_tol) {
  const KoopmanModel model = fit(train, partition, dictionary, shift, mode, svd_rank, rel_tol);
  const DataMatrices eval = build_matrices(test, partition, *dictionary, shift, mode);
  const Matrix pred = matmul(model.op, eval.features);
  // Columns are samples; loss averages the squared column differences.
  double total = 0.0;
  for (std::size_t n = 0; n < pred.cols(); ++n) {
    double col = 0.0;
    for (std::size_t j = 0; j < pred.rows(); ++j) {
      const double d = pred(j, n) - eval.targets(j, n);
      col += d * d;
    }
    total += col;
  }
  return total / static_cast<double>(pred.cols());
}

}  // namespace

CausalAnalysis causal_measure(const Trajectory& traj, const ComponentPartition& partition,
                              const DictionaryPair& dictionaries, const CausalOptions& options) {
  if (options.shifts.empty()) throw std::invalid_argument("causal_measure: no shifts given");
  for (std::size_t s : options.shifts)
    if (s < 1) throw std::invalid_argument("causal_measure: shifts must be >= 1");
  if (!dictionaries.marginal || !dictionaries.joint)
    throw std::invalid_argument("causal_measure: missing dictionary");
  partition.validate(traj.state_dim());

  const Split split = split_trajectory(traj, dictionaries, options.train_fraction);

  CausalAnalysis out;
  out.shifts = options.shifts;
  out.marginal_loss.resize(options.shifts.size());
  out.joint_loss.resize(options.shifts.size());
  out.delta.resize(options.shifts.size());

  if (options.mode == MeasureMode::forecast) {
    const KoopmanModel marg = fit(split.train, partition, dictionaries.marginal, 1,
                                  KoopmanMode::marginal, options.svd_rank, options.fit_rel_tol);
    const KoopmanModel joint = fit(split.train, partition, dictionaries.joint, 1,
                                   KoopmanMode::joint, options.svd_rank, options.fit_rel_tol);
    out.marginal_loss = forecast_losses(marg, split.test, options.shifts, options.all_starts);
    out.joint_loss = forecast_losses(joint, split.test, options.shifts, options.all_starts);
  } else {
    for (std::size_t si = 0; si < options.shifts.size(); ++si) {
      const std::size_t s = options.shifts[si];
      out.marginal_loss[si] = refit_loss(split.train, split.test, partition,
                                         dictionaries.marginal, KoopmanMode::marginal, s,
                                         options.svd_rank, options.fit_rel_tol);
      out.joint_loss[si] = refit_loss(split.train, split.test, partition, dictionaries.joint,
                                      KoopmanMode::joint, s, options.svd_rank,
                                      options.fit_rel_tol);
    }
  }

  for (std::size_t si = 0; si < options.shifts.size(); ++si)
    out.delta[si] = out.marginal_loss[si] - out.joint_loss[si];

  if (options.normalize) {
    double peak = 0.0;
    for (double d : out.delta) peak = std::max(peak, std::abs(d));
    if (peak > 0.0) {
      // Scale the losses and rebuild delta so delta == marginal - joint
      // stays exact after normalization.
      const double inv = 1.0 / peak;
      for (double& d : out.marginal_loss) d *= inv;
      for (double& d : out.joint_loss) d *= inv;
      for (std::size_t si = 0; si < options.shifts.size(); ++si)
        out.delta[si] = out.marginal_loss[si] - out.joint_loss[si];
    }
    out.normalized = true;
  }
  return out;
}

DictionaryPair prepare_dictionaries(const Trajectory& traj, const ComponentPartition& partition,
                                    const DictionarySpec& spec, const TrainConfig& train,
                                    double train_fraction) {
  partition.validate(traj.state_dim());
  const std::size_t n = traj.num_samples();
  const std::size_t train_rows = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n))));

  auto rows_of = [&](const std::vector<std::size_t>& dims) {
    Matrix out(train_rows, dims.size());
    for (std::size_t i = 0; i < train_rows; ++i)
      for (std::size_t j = 0; j < dims.size(); ++j) out(i, j) = traj.states(i, dims[j]);
    return out;
  };

  std::vector<std::size_t> joint_dims = partition.effect_dims;
  joint_dims.insert(joint_dims.end(), partition.cause_dims.begin(), partition.cause_dims.end());
  const Matrix marginal_inputs = rows_of(partition.effect_dims);
  const Matrix joint_inputs = rows_of(joint_dims);

  const SeededRng root(train.seed);
  std::unique_ptr<FeatureMap> marginal =
      make_feature_map(spec, marginal_inputs.cols(), root.fork(1).seed(), &marginal_inputs);
  std::unique_ptr<FeatureMap> joint =
      make_feature_map(spec, joint_inputs.cols(), root.fork(2).seed(), &joint_inputs);

  if (auto* trainable = dynamic_cast<TrainableMap*>(marginal.get())) {
    TrainConfig cfg = train;
    cfg.seed = root.fork(3).seed();
    train_dictionary(*trainable, marginal_inputs, cfg);
  }
  if (auto* trainable = dynamic_cast<TrainableMap*>(joint.get())) {
    TrainConfig cfg = train;
    cfg.seed = root.fork(4).seed();
    train_dictionary(*trainable, joint_inputs, cfg);
  }
  return DictionaryPair{std::shared_ptr<const FeatureMap>(std::move(marginal)),
                        std::shared_ptr<const FeatureMap>(std::move(joint))};
}

CausalAnalysis causal_ensemble(const Trajectory& traj, const ComponentPartition& partition,
                               const DictionarySpec& spec, const TrainConfig& train,
                               const std::vector<std::uint64_t>& member_seeds,
                               const CausalOptions& options) {
  if (member_seeds.size() < 2)
    throw std::invalid_argument("causal_ensemble: needs at least 2 members");

  CausalAnalysis out;
  out.shifts = options.shifts;
  CausalOptions member_options = options;
  member_options.normalize = false;

  std::vector<std::vector<double>> member_marg, member_joint;
  for (std::size_t k = 0; k < member_seeds.size(); ++k) {
    TrainConfig member_train = train;
    member_train.seed = member_seeds[k];
    CausalAnalysis member;
    try {
      const DictionaryPair dicts = prepare_dictionaries(traj, partition, spec, member_train,
                                                        options.train_fraction);
      member = causal_measure(traj, partition, dicts, member_options);
    } catch (const std::exception& e) {
      throw std::runtime_error("causal_ensemble: member " + std::to_string(k) +
                               " failed: " + e.what());
    }
    out.ensemble.push_back(member.delta);
    member_marg.push_back(member.marginal_loss);
    member_joint.push_back(member.joint_loss);
  }

  const std::size_t shifts = options.shifts.size();
  auto summarize = [&] {
    out.delta.assign(shifts, 0.0);
    out.ensemble_min.assign(shifts, std::numeric_limits<double>::infinity());
    out.ensemble_max.assign(shifts, -std::numeric_limits<double>::infinity());
    for (const auto& member : out.ensemble) {
      for (std::size_t si = 0; si < shifts; ++si) {
        out.delta[si] += member[si];
        out.ensemble_min[si] = std::min(out.ensemble_min[si], member[si]);
        out.ensemble_max[si] = std::max(out.ensemble_max[si], member[si]);
      }
    }
    for (double& d : out.delta) d /= static_cast<double>(out.ensemble.size());
  };
  summarize();

  double norm_scale = 1.0;
  if (options.normalize) {
    double peak = 0.0;
    for (double d : out.delta) peak = std::max(peak, std::abs(d));
    if (peak > 0.0) {
      // Scale members by the peak of the mean series, then rebuild the
      // summary so the mean stays the exact member average.
      norm_scale = 1.0 / peak;
      for (auto& member : out.ensemble)
        for (double& d : member) d *= norm_scale;
      summarize();
    }
    out.normalized = true;
  }

  // Member-mean losses, on the same scale as the delta summary.
  out.marginal_loss.assign(shifts, 0.0);
  out.joint_loss.assign(shifts, 0.0);
  for (std::size_t k = 0; k < member_marg.size(); ++k)
    for (std::size_t si = 0; si < shifts; ++si) {
      out.marginal_loss[si] += member_marg[k][si] * norm_scale;
      out.joint_loss[si] += member_joint[k][si] * norm_scale;
    }
  const double inv_members = 1.0 / static_cast<double>(member_marg.size());
  for (std::size_t si = 0; si < shifts; ++si) {
    out.marginal_loss[si] *= inv_members;
    out.joint_loss[si] *= inv_members;
  }
  return out;
}

namespace {

Trajectory permute_series(const Trajectory& traj, const ComponentPartition& partition,
                          const std::vector<std::size_t>& effect_perm,
                          const std::vector<std::size_t>& cause_perm) {
  Trajectory out = traj;
  for (std::size_t i = 0; i < traj.num_samples(); ++i) {
    for (std::size_t d : partition.effect_dims) out.states(i, d) = traj.states(effect_perm[i], d);
    for (std::size_t d : partition.cause_dims) out.states(i, d) = traj.states(cause_perm[i], d);
  }
  return out;
}

}  // namespace

namespace {

// Rows = samples, columns = effect dimensions.
Matrix select_effect(const Trajectory& traj, const ComponentPartition& partition) {
  Matrix out(traj.num_samples(), partition.effect_dims.size());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = traj.states(i, partition.effect_dims[j]);
  return out;
}

// Single-step losses of dedicated K^{s*t} operators for s = 1..count, all
// sharing one factorization of the training features. Columns are the
// current indices every aggregated shift can use.
std::vector<double> refit_loss_curve(const Trajectory& train, const Trajectory& test,
                                     const ComponentPartition& partition, const FeatureMap& dict,
                                     KoopmanMode mode, std::size_t time_shift, std::size_t count,
                                     double rel_tol) {
  constexpr double kDiverged = 1e300;
  const std::size_t max_shift = time_shift * count;
  const std::size_t history = dict.history();
  if (train.num_samples() < history + max_shift + 2 ||
      test.num_samples() < history + max_shift + 1)
    throw std::invalid_argument(
        "identifiability_test: splits too short for the aggregated shifts");

  const DataMatrices train_all = build_matrices(train, partition, dict, max_shift, mode);
  const DataMatrices test_all = build_matrices(test, partition, dict, max_shift, mode);
  const Matrix train_effect = select_effect(train, partition);
  const Matrix test_effect = select_effect(test, partition);
  const std::size_t de = partition.effect_dims.size();
  const std::size_t d_train = train_all.features.cols();
  const std::size_t d_test = test_all.features.cols();

  // Z = F^T Q diag(1/lambda) Q^T, so that K_t = T_t Z for every shift.
  const Matrix g = gram(train_all.features);
  const SymEig eig = sym_eig(g);
  const double lmax = eig.values.empty() ? 0.0 : std::max(eig.values.front(), 0.0);
  const double cut = std::max(rel_tol * rel_tol, 1e-14) * lmax;
  std::size_t rank = 0;
  while (rank < eig.values.size() && eig.values[rank] > cut && eig.values[rank] > 0.0) ++rank;

  Matrix w(g.rows(), g.cols(), 0.0);
  for (std::size_t k = 0; k < rank; ++k) {
    const double inv = 1.0 / eig.values[k];
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double qik = eig.vectors(i, k) * inv;
      if (qik == 0.0) continue;
      for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) += qik * eig.vectors(j, k);
    }
  }
  const Matrix z = matmul_atb(train_all.features, w);  // d_train x p

  // pred_t = K_t F_test = T_t (Z F_test); the projection is shift-free.
  const Matrix zf = matmul(z, test_all.features);  // d_train x d_test

  std::vector<double> losses(count, 0.0);
  Matrix targets(de, d_train);
  for (std::size_t s = 1; s <= count; ++s) {
    const std::size_t shift = s * time_shift;
    for (std::size_t n = 0; n < d_train; ++n)
      for (std::size_t j = 0; j < de; ++j) targets(j, n) = train_effect(history + n + shift, j);
    const Matrix pred = matmul(targets, zf);  // de x d_test
    double total = 0.0;
    for (std::size_t n = 0; n < d_test; ++n)
      for (std::size_t j = 0; j < de; ++j) {
        const double d = pred(j, n) - test_effect(history + n + shift, j);
        total += d * d;
      }
    const double loss = total / static_cast<double>(d_test);
    losses[s - 1] = std::isfinite(loss) ? std::min(loss, kDiverged) : kDiverged;
  }
  return losses;
}

// The identifiability statistic: the measure aggregated over shifts
// {t, 2t, ..., S*t}, each from a dedicated K^{shift} scored single-step on
// every held-out triplet. A single-sample shift alone sits at the numerical
// noise floor of near-perfect one-step predictions, so the statistic
// integrates the same per-shift measure the shift curves report.
double refit_measure_statistic(const Trajectory& traj, const ComponentPartition& partition,
                               const DictionaryPair& dicts, std::size_t time_shift,
                               std::size_t max_multiples, const CausalOptions& options) {
  const Split split = split_trajectory(traj, dicts, options.train_fraction);
  const std::vector<double> marg =
      refit_loss_curve(split.train, split.test, partition, *dicts.marginal,
                       KoopmanMode::marginal, time_shift, max_multiples,
                       options.statistic_rel_tol);
  const std::vector<double> joint =
      refit_loss_curve(split.train, split.test, partition, *dicts.joint, KoopmanMode::joint,
                       time_shift, max_multiples, options.statistic_rel_tol);
  // Per-shift relative differences keep the observed and permuted rounds on
  // one scale; shuffled series inflate both losses by orders of magnitude.
  double delta = 0.0;
  for (std::size_t s = 0; s < max_multiples; ++s) {
    const double denom = marg[s] + joint[s];
    if (denom > 0.0) delta += (marg[s] - joint[s]) / denom;
  }
  return delta / static_cast<double>(max_multiples);
}

// Largest shift-multiple count the splits can host, capped by the option.
std::size_t statistic_multiples(const Trajectory& traj, const DictionaryPair& dicts,
                                std::size_t time_shift, const CausalOptions& options) {
  const Split split = split_trajectory(traj, dicts, options.train_fraction);
  const std::size_t history =
      std::max(dicts.marginal->history(), dicts.joint->history());
  const std::size_t train_cap = split.train.num_samples() > history + 2
                                    ? (split.train.num_samples() - history - 2) / time_shift
                                    : 0;
  const std::size_t test_cap = split.test.num_samples() > history + 1
                                   ? (split.test.num_samples() - history - 1) / time_shift
                                   : 0;
  std::size_t cap = std::min(train_cap, test_cap);
  // Keep at least a handful of test columns in play.
  const std::size_t headroom = test_cap > 8 ? test_cap - 8 : test_cap;
  cap = std::min(cap, std::max<std::size_t>(headroom, 1));
  const std::size_t requested = options.statistic_horizon == 0 ? 100 : options.statistic_horizon;
  return std::max<std::size_t>(1, std::min(cap, requested));
}

}  // namespace

HypothesisResult identifiability_test(const Trajectory& traj, const ComponentPartition& partition,
                                      const DictionaryPair& dictionaries, std::size_t time_shift,
                                      std::size_t permutations, std::uint64_t seed,
                                      const CausalOptions& base_options) {
  if (permutations < 1)
    throw std::invalid_argument("identifiability_test: needs at least one permutation");
  if (time_shift < 1) throw std::invalid_argument("identifiability_test: time shift must be >= 1");
  if (!dictionaries.marginal || !dictionaries.joint)
    throw std::invalid_argument("identifiability_test: missing dictionary");
  partition.validate(traj.state_dim());

  HypothesisResult out;
  out.permutations = permutations;
  out.seed = seed;
  const std::size_t multiples =
      statistic_multiples(traj, dictionaries, time_shift, base_options);
  out.delta_observed =
      refit_measure_statistic(traj, partition, dictionaries, time_shift, multiples, base_options);
  out.delta_permuted.reserve(permutations);

  const SeededRng root(seed);
  std::size_t greater_or_equal = 0;
  for (std::size_t round = 0; round < permutations; ++round) {
    SeededRng rng_effect = root.fork(2 * round + 1);
    SeededRng rng_cause = root.fork(2 * round + 2);
    const std::vector<std::size_t> effect_perm = rng_effect.permutation(traj.num_samples());
    const std::vector<std::size_t> cause_perm = rng_cause.permutation(traj.num_samples());
    const Trajectory shuffled = permute_series(traj, partition, effect_perm, cause_perm);
    const double delta = refit_measure_statistic(shuffled, partition, dictionaries, time_shift,
                                                 multiples, base_options);
    out.delta_permuted.push_back(delta);
    if (delta >= out.delta_observed) ++greater_or_equal;
  }
  out.p_value = static_cast<double>(1 + greater_or_equal) / static_cast<double>(permutations + 1);
  return out;
}

MagnitudeSeries magnitude_series(const Trajectory& traj, const ComponentPartition& partition,
                                 const DictionaryPair& dictionaries, std::size_t window_size,
                                 std::size_t step, std::size_t svd_rank, double fit_rel_tol) {
  if (window_size < 3) throw std::invalid_argument("magnitude_series: window must be >= 3");
  if (step < 1) throw std::invalid_argument("magnitude_series: step must be >= 1");
  if (traj.num_samples() < window_size + 1)
    throw std::invalid_argument("magnitude_series: trajectory shorter than window");
  if (dictionaries.marginal->history() > 0 || dictionaries.joint->history() > 0)
    throw std::invalid_argument("magnitude_series: history-bearing dictionaries unsupported");

  MagnitudeSeries out;
  out.window_size = window_size;
  out.step = step;

  const std::size_t triplets = window_size - 1;
  std::size_t n_train = static_cast<std::size_t>(
      std::floor(0.8 * static_cast<double>(triplets)));
  n_train = std::min(std::max<std::size_t>(n_train, 1), triplets - 1);

  for (std::size_t start = 0; start + window_size <= traj.num_samples(); start += step) {
    const Trajectory window = slice_trajectory(traj, start, start + window_size);
    const Trajectory train = slice_trajectory(window, 0, n_train + 1);
    const Trajectory eval = slice_trajectory(window, n_train, window_size);

    double magnitude = 0.0;
    try {
      const double marg = refit_loss(train, eval, partition, dictionaries.marginal,
                                     KoopmanMode::marginal, 1, svd_rank, fit_rel_tol);
      const double joint = refit_loss(train, eval, partition, dictionaries.joint,
                                      KoopmanMode::joint, 1, svd_rank, fit_rel_tol);
      magnitude = std::abs(marg - joint);
      if (!std::isfinite(magnitude)) magnitude = 0.0;
    } catch (const std::exception&) {
      magnitude = 0.0;  // degenerate window
    }
    out.window_starts.push_back(start);
    out.magnitude.push_back(magnitude);
  }
  return out;
}

}  // namespace kausal
