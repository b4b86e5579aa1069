#include "kausal/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "kausal/csv_io.hpp"
#include "kausal/evaluation.hpp"
#include "kausal/stability.hpp"
#include "kausal/svg.hpp"

namespace kausal {

nlohmann::json RunManifest::to_json() const {
  nlohmann::json timing = nlohmann::json::object();
  for (const auto& [stage, seconds] : timings) timing[stage] = seconds;
  return {{"config_hash", config_hash},
          {"version", version},
          {"seed", seed},
          {"timings_seconds", timing},
          {"outputs", outputs}};
}

Trajectory config_trajectory(const ExperimentConfig& config) {
  if (config.use_csv) {
    std::filesystem::path path = config.csv_path;
    if (path.is_relative()) path = config.base_dir / path;
    return ingest_csv(path, config.csv_time_column, config.csv_value_columns);
  }
  std::vector<double> initial = config.initial;
  if (initial.empty()) initial = default_initial(config.system, config.seed);
  return integrate_dopri5(config.system, initial, config.t0, config.t1, config.dt,
                          config.output_stride);
}

namespace {

std::filesystem::path resolved_output_dir(const ExperimentConfig& config) {
  std::filesystem::path dir = config.output_dir;
  if (dir.is_relative()) {
    if (const char* root = std::getenv("KAUSAL_OUTPUT_ROOT")) dir = std::filesystem::path(root) / dir;
  }
  return dir;
}

// Shared lazily-built pipeline state plus output bookkeeping.
struct Pipeline {
  const ExperimentConfig& config;
  std::filesystem::path out_dir;
  RunManifest manifest;
  std::vector<std::string> stage_files;

  bool have_trajectory = false;
  Trajectory trajectory;
  ComponentPartition partition;
  // Dictionary pairs per direction, built on demand.
  bool have_dicts[2] = {false, false};
  DictionaryPair dicts[2];

  explicit Pipeline(const ExperimentConfig& cfg) : config(cfg) {
    out_dir = resolved_output_dir(cfg);
    std::filesystem::create_directories(out_dir);
    manifest.seed = cfg.seed;
    manifest.config_hash = [&] {
      char buf[20];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(fnv1a64(cfg.canonical_string())));
      return std::string(buf);
    }();
  }

  const Trajectory& get_trajectory() {
    if (!have_trajectory) {
      trajectory = config_trajectory(config);
      partition = resolve_partition(config, trajectory.dim_labels);
      have_trajectory = true;
    }
    return trajectory;
  }

  ComponentPartition direction_partition(std::size_t dir) {
    get_trajectory();
    return dir == 0 ? partition : partition.reversed();
  }

  const DictionaryPair& get_dicts(std::size_t dir) {
    if (!have_dicts[dir]) {
      TrainConfig train = config.train;
      train.seed = config.seed;
      dicts[dir] = prepare_dictionaries(get_trajectory(), direction_partition(dir),
                                        config.dictionary, train,
                                        config.causal.train_fraction);
      have_dicts[dir] = true;
    }
    return dicts[dir];
  }

  std::filesystem::path file(const std::string& name) {
    const std::filesystem::path path = out_dir / name;
    stage_files.push_back(path.string());
    return path;
  }

  void write_json(const std::string& name, const nlohmann::json& doc) {
    std::ofstream out(file(name));
    if (!out) throw std::runtime_error("cannot open " + name + " for writing");
    out << doc.dump(2) << '\n';
  }

  std::vector<std::size_t> directions() const {
    return config.both_directions ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{0};
  }

  static const char* direction_name(std::size_t dir) {
    return dir == 0 ? "c_to_e" : "e_to_c";
  }
};

std::vector<double> spatial_mean(const Trajectory& traj, const std::vector<std::size_t>& dims) {
  std::vector<double> out(traj.num_samples(), 0.0);
  for (std::size_t i = 0; i < traj.num_samples(); ++i) {
    double s = 0.0;
    for (std::size_t d : dims) s += traj.states(i, d);
    out[i] = s / static_cast<double>(dims.size());
  }
  return out;
}

void stage_simulate(Pipeline& p) {
  const Trajectory& traj = p.get_trajectory();
  write_trajectory_csv(traj, p.file("trajectory.csv"));

  std::vector<PlotSeries> series;
  if (traj.state_dim() > 8) {
    PlotSeries eff{"effect mean", traj.times,
                   spatial_mean(traj, p.direction_partition(0).effect_dims), "", {}, {}};
    PlotSeries cau{"cause mean", traj.times,
                   spatial_mean(traj, p.direction_partition(0).cause_dims), "", {}, {}};
    series = {eff, cau};
  } else {
    for (std::size_t j = 0; j < traj.state_dim(); ++j) {
      PlotSeries s;
      s.label = traj.dim_labels.size() > j ? traj.dim_labels[j] : "dim_" + std::to_string(j);
      s.x = traj.times;
      s.y.resize(traj.num_samples());
      for (std::size_t i = 0; i < traj.num_samples(); ++i) s.y[i] = traj.states(i, j);
      series.push_back(std::move(s));
    }
  }
  PlotStyle style;
  style.title = p.config.name + ": trajectory";
  style.x_label = "t";
  style.y_label = "state";
  write_svg(p.file("trajectory.svg"), series, style);
}

void stage_causal(Pipeline& p) {
  const Trajectory& traj = p.get_trajectory();
  std::vector<PlotSeries> plot;
  for (std::size_t dir : p.directions()) {
    const ComponentPartition part = p.direction_partition(dir);
    CausalAnalysis analysis;
    if (p.config.ensemble_seeds.size() >= 2) {
      TrainConfig train = p.config.train;
      analysis = causal_ensemble(traj, part, p.config.dictionary, train,
                                 p.config.ensemble_seeds, p.config.causal);
    } else {
      analysis = causal_measure(traj, part, p.get_dicts(dir), p.config.causal);
    }

    std::vector<std::string> header{"shift", "delta", "marginal_loss", "joint_loss"};
    std::vector<std::vector<double>> cols(4);
    for (std::size_t i = 0; i < analysis.shifts.size(); ++i) {
      cols[0].push_back(static_cast<double>(analysis.shifts[i]));
      cols[1].push_back(analysis.delta[i]);
      cols[2].push_back(analysis.marginal_loss[i]);
      cols[3].push_back(analysis.joint_loss[i]);
    }
    for (std::size_t k = 0; k < analysis.ensemble.size(); ++k) {
      header.push_back("member_" + std::to_string(k));
      cols.push_back(analysis.ensemble[k]);
    }
    write_table_csv(p.file(std::string("causal_") + Pipeline::direction_name(dir) + ".csv"),
                    header, cols);

    PlotSeries s;
    s.label = dir == 0 ? "delta C->E" : "delta E->C";
    s.x = cols[0];
    s.y = analysis.delta;
    if (!analysis.ensemble_min.empty()) {
      s.band_lo = analysis.ensemble_min;
      s.band_hi = analysis.ensemble_max;
    }
    plot.push_back(std::move(s));
  }
  PlotStyle style;
  style.title = p.config.name + ": causal measure";
  style.x_label = "time shift";
  style.y_label = "delta";
  write_svg(p.file("causal_measure.svg"), plot, style);
}

void stage_test(Pipeline& p) {
  const Trajectory& traj = p.get_trajectory();
  std::vector<PlotSeries> plot;
  for (std::size_t dir : p.directions()) {
    const HypothesisResult result = identifiability_test(
        traj, p.direction_partition(dir), p.get_dicts(dir), p.config.test_time_shift,
        p.config.permutations, p.config.seed, p.config.causal);
    p.write_json(std::string("identifiability_") + Pipeline::direction_name(dir) + ".json",
                 {{"direction", Pipeline::direction_name(dir)},
                  {"time_shift", p.config.test_time_shift},
                  {"delta_observed", result.delta_observed},
                  {"delta_permuted", result.delta_permuted},
                  {"p_value", result.p_value},
                  {"permutations", result.permutations},
                  {"seed", result.seed}});

    PlotSeries null_series;
    null_series.label = std::string(dir == 0 ? "null C->E" : "null E->C");
    std::vector<double> sorted = result.delta_permuted;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      null_series.x.push_back(static_cast<double>(i + 1) / static_cast<double>(sorted.size()));
      null_series.y.push_back(sorted[i]);
    }
    PlotSeries observed;
    observed.label = std::string(dir == 0 ? "observed C->E" : "observed E->C");
    observed.x = {0.0, 1.0};
    observed.y = {result.delta_observed, result.delta_observed};
    plot.push_back(std::move(null_series));
    plot.push_back(std::move(observed));
  }
  PlotStyle style;
  style.title = p.config.name + ": permutation null vs observed";
  style.x_label = "null quantile";
  style.y_label = "delta";
  write_svg(p.file("identifiability.svg"), plot, style);
}

// Chronological split mirroring causal_measure's bookkeeping.
std::pair<Trajectory, Trajectory> split_for_forecast(const Trajectory& traj,
                                                     const DictionaryPair& dicts,
                                                     double train_fraction) {
  const std::size_t history = std::max(dicts.marginal->history(), dicts.joint->history());
  const std::size_t triplets = traj.num_samples() - 1 - history;
  std::size_t n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(triplets)));
  n_train = std::min(std::max<std::size_t>(n_train, 2), triplets - 1);
  const std::size_t train_end = history + n_train + 1;

  auto slice = [&](std::size_t begin, std::size_t end) {
    Trajectory out;
    out.times.assign(traj.times.begin() + begin, traj.times.begin() + end);
    out.states = Matrix(end - begin, traj.state_dim());
    std::copy(traj.states.data() + begin * traj.state_dim(),
              traj.states.data() + end * traj.state_dim(), out.states.data());
    out.dim_labels = traj.dim_labels;
    return out;
  };
  return {slice(0, train_end), slice(n_train, traj.num_samples())};
}

void stage_forecast(Pipeline& p) {
  const Trajectory& traj = p.get_trajectory();
  for (std::size_t dir : p.directions()) {
    const ComponentPartition part = p.direction_partition(dir);
    const DictionaryPair& dicts = p.get_dicts(dir);
    const auto [train, test] = split_for_forecast(traj, dicts, p.config.causal.train_fraction);

    const KoopmanModel marg = fit(train, part, dicts.marginal, 1, KoopmanMode::marginal,
                                  p.config.causal.svd_rank, p.config.causal.fit_rel_tol);
    const KoopmanModel joint = fit(train, part, dicts.joint, 1, KoopmanMode::joint,
                                   p.config.causal.svd_rank, p.config.causal.fit_rel_tol);
    const std::size_t history = std::max(dicts.marginal->history(), dicts.joint->history());
    std::size_t horizon = test.num_samples() - 1 - history;
    if (p.config.forecast_horizon > 0) horizon = std::min(horizon, p.config.forecast_horizon);

    const ForecastResult fm = conditional_forecast(marg, test, horizon, history);
    const ForecastResult fj = conditional_forecast(joint, test, horizon, history);
    const Matrix truth = effect_rows(test, part, fm.target_rows);

    const std::size_t de = part.effect_dims.size();
    std::vector<std::string> header{"step"};
    std::vector<std::vector<double>> cols(1 + 3 * de);
    for (std::size_t i = 0; i < horizon; ++i) cols[0].push_back(static_cast<double>(i + 1));
    for (std::size_t j = 0; j < de; ++j) {
      const std::string label = traj.dim_labels.size() > part.effect_dims[j]
                                    ? traj.dim_labels[part.effect_dims[j]]
                                    : "dim_" + std::to_string(part.effect_dims[j]);
      header.push_back("true_" + label);
      header.push_back("marginal_" + label);
      header.push_back("joint_" + label);
      for (std::size_t i = 0; i < horizon; ++i) {
        cols[1 + 3 * j].push_back(truth(i, j));
        cols[2 + 3 * j].push_back(fm.predictions(i, j));
        cols[3 + 3 * j].push_back(fj.predictions(i, j));
      }
    }
    write_table_csv(p.file(std::string("forecast_") + Pipeline::direction_name(dir) + ".csv"),
                    header, cols);

    std::vector<double> steps = cols[0];
    PlotSeries st{"true", steps, cols[1], "#444444", {}, {}};
    PlotSeries sm{"marginal", steps, cols[2], "", {}, {}};
    PlotSeries sj{"joint", steps, cols[3], "", {}, {}};
    PlotStyle style;
    style.title = p.config.name + ": conditional forecast (" +
                  Pipeline::direction_name(dir) + ")";
    style.x_label = "step";
    style.y_label = header[1];
    write_svg(p.file(std::string("forecast_") + Pipeline::direction_name(dir) + ".svg"),
              {st, sm, sj}, style);
  }
}

void stage_stability(Pipeline& p) {
  const EnsoParams& params = p.config.system.enso;
  std::vector<double> mu_values;
  for (double mu = p.config.mu_min; mu <= p.config.mu_max + 1e-12; mu += p.config.mu_step)
    mu_values.push_back(mu);
  const std::vector<StabilityResult> scan = bifurcation_scan(params, mu_values);

  std::ofstream out(p.file("bifurcation.csv"));
  if (!out) throw std::runtime_error("cannot open bifurcation.csv");
  out << "mu,re_lambda,im_lambda,regime,period\n";
  for (const StabilityResult& r : scan)
    out << format_full(r.mu) << ',' << format_full(r.eigenvalues.first.real()) << ','
        << format_full(r.eigenvalues.first.imag()) << ',' << to_string(r.regime) << ','
        << format_full(r.period) << '\n';
  out.close();

  const double critical = find_critical_mu(params, p.config.mu_min, p.config.mu_max);
  p.write_json("critical_mu.json",
               {{"critical_mu", critical},
                {"analytic", (params.r + params.c) / (params.gamma * params.b0)},
                {"mu_range", {p.config.mu_min, p.config.mu_max}}});

  PlotSeries re{"Re(lambda)", {}, {}, "", {}, {}};
  PlotSeries im{"Im(lambda)", {}, {}, "", {}, {}};
  for (const StabilityResult& r : scan) {
    re.x.push_back(r.mu);
    re.y.push_back(r.eigenvalues.first.real());
    im.x.push_back(r.mu);
    im.y.push_back(r.eigenvalues.first.imag());
  }
  PlotStyle style;
  style.title = p.config.name + ": linear stability";
  style.x_label = "mu";
  style.y_label = "eigenvalue";
  write_svg(p.file("bifurcation.svg"), {re, im}, style);
}

void stage_auroc(Pipeline& p) {
  const Trajectory& full = p.get_trajectory();

  // Optional tail selection and subsampling ahead of the sliding window.
  Trajectory traj;
  {
    std::size_t begin = 0;
    if (p.config.task2_last > 0 && p.config.task2_last < full.num_samples())
      begin = full.num_samples() - p.config.task2_last;
    const std::size_t stride = std::max<std::size_t>(1, p.config.task2_subsample);
    std::vector<std::size_t> rows;
    for (std::size_t i = begin; i < full.num_samples(); i += stride) rows.push_back(i);
    traj.states = Matrix(rows.size(), full.state_dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      traj.times.push_back(full.times[rows[i]]);
      std::copy(full.states.row(rows[i]).begin(), full.states.row(rows[i]).end(),
                traj.states.row(i).begin());
    }
    traj.dim_labels = full.dim_labels;
  }

  const ComponentPartition part = p.direction_partition(0);
  TrainConfig train = p.config.train;
  train.seed = p.config.seed;
  const DictionaryPair dicts =
      prepare_dictionaries(traj, part, p.config.dictionary, train, p.config.causal.train_fraction);
  const MagnitudeSeries magnitudes =
      magnitude_series(traj, part, dicts, p.config.window, p.config.window_step,
                       p.config.causal.svd_rank, p.config.causal.fit_rel_tol);

  // Label series: named dimension or the spatial mean of the effect block.
  std::vector<double> label_series;
  std::string label_name = p.config.label_series;
  if (label_name.empty() || label_name == "effect_mean") {
    label_series = spatial_mean(traj, part.effect_dims);
    label_name = "effect_mean";
  } else {
    std::size_t idx = traj.state_dim();
    for (std::size_t j = 0; j < traj.dim_labels.size(); ++j)
      if (traj.dim_labels[j] == label_name) idx = j;
    if (idx == traj.state_dim())
      throw std::runtime_error("auroc: label series '" + label_name + "' not found");
    label_series.resize(traj.num_samples());
    for (std::size_t i = 0; i < traj.num_samples(); ++i) label_series[i] = traj.states(i, idx);
  }

  EventLabels labels = p.config.label_method == "oni"
                           ? oni_labels(label_series, p.config.oni_threshold)
                           : extreme_labels(label_series, p.config.gamma);

  // Score of the window starting at w answers for the label at the window's
  // final sample.
  std::vector<double> scores;
  EventLabels aligned;
  aligned.method = labels.method;
  for (std::size_t k = 0; k < magnitudes.window_starts.size(); ++k) {
    const std::size_t label_row = magnitudes.window_starts[k] + p.config.window - 1;
    scores.push_back(magnitudes.magnitude[k]);
    aligned.labels.push_back(labels.labels[label_row]);
    aligned.positive_count += static_cast<std::size_t>(labels.labels[label_row]);
  }
  const RocCurve roc = auroc(scores, aligned);

  {
    std::vector<double> t_col, m_col;
    for (std::size_t k = 0; k < magnitudes.window_starts.size(); ++k) {
      t_col.push_back(traj.times[magnitudes.window_starts[k] + p.config.window - 1]);
      m_col.push_back(magnitudes.magnitude[k]);
    }
    write_table_csv(p.file("magnitude.csv"), {"t", "magnitude"}, {t_col, m_col});

    PlotSeries mag{"|delta|", t_col, m_col, "", {}, {}};
    std::vector<double> label_y;
    double peak = 0.0;
    for (double v : m_col) peak = std::max(peak, v);
    for (std::size_t k = 0; k < magnitudes.window_starts.size(); ++k)
      label_y.push_back(aligned.labels[k] ? peak : 0.0);
    PlotSeries lbl{"extreme", t_col, label_y, "#d0d0d0", {}, {}};
    PlotStyle style;
    style.title = p.config.name + ": causal magnitude vs extremes";
    style.x_label = "t";
    style.y_label = "|delta|";
    write_svg(p.file("magnitude.svg"), {lbl, mag}, style);
  }

  write_table_csv(p.file("roc.csv"), {"threshold", "fpr", "tpr"},
                  {roc.thresholds, roc.fpr, roc.tpr});
  p.write_json("auroc.json", {{"auroc", roc.auroc},
                              {"positives", aligned.positive_count},
                              {"negatives", aligned.labels.size() - aligned.positive_count},
                              {"window", p.config.window},
                              {"step", p.config.window_step},
                              {"label_method", p.config.label_method},
                              {"label_series", label_name},
                              {"gamma", p.config.gamma}});

  PlotSeries curve{"ROC", roc.fpr, roc.tpr, "", {}, {}};
  PlotStyle style;
  style.title = p.config.name + ": ROC (AUROC " + std::to_string(roc.auroc) + ")";
  style.x_label = "false positive rate";
  style.y_label = "true positive rate";
  style.staircase = true;
  style.diagonal = true;
  write_svg(p.file("roc.svg"), {curve}, style);
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config,
                           const std::vector<std::string>& stages) {
  Pipeline pipeline(config);
  for (const std::string& stage : stages) {
    pipeline.stage_files.clear();
    const auto started = std::chrono::steady_clock::now();
    try {
      if (stage == "simulate")
        stage_simulate(pipeline);
      else if (stage == "causal")
        stage_causal(pipeline);
      else if (stage == "test")
        stage_test(pipeline);
      else if (stage == "forecast")
        stage_forecast(pipeline);
      else if (stage == "stability")
        stage_stability(pipeline);
      else if (stage == "auroc")
        stage_auroc(pipeline);
      else
        throw std::runtime_error("unknown stage '" + stage + "'");
    } catch (const std::exception& e) {
      for (const std::string& path : pipeline.stage_files) {
        std::error_code ec;
        std::filesystem::remove(path, ec);
      }
      throw std::runtime_error("stage " + stage + " failed: " + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    pipeline.manifest.timings.emplace_back(stage, seconds);
    for (const std::string& path : pipeline.stage_files)
      pipeline.manifest.outputs.push_back(path);
  }

  std::ofstream out(pipeline.out_dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << pipeline.manifest.to_json().dump(2) << '\n';
  return pipeline.manifest;
}

}  // namespace kausal
