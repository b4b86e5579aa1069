#include "kausal/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kausal/csv_io.hpp"

namespace kausal {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_scalar(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  if (t.empty()) throw std::runtime_error("toml: empty value at " + where);
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"')
      throw std::runtime_error("toml: unterminated string at " + where);
    return TomlValue{t.substr(1, t.size() - 2)};
  }
  if (t == "true") return TomlValue{true};
  if (t == "false") return TomlValue{false};
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used == t.size()) return TomlValue{v};
  } catch (const std::exception&) {
  }
  throw std::runtime_error("toml: cannot parse value '" + t + "' at " + where);
}

TomlValue parse_value(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw std::runtime_error("toml: unterminated array at " + where);
    std::vector<TomlValue> items;
    std::string body = t.substr(1, t.size() - 2);
    std::string cell;
    bool in_string = false;
    for (char c : body) {
      if (c == '"') in_string = !in_string;
      if (c == ',' && !in_string) {
        if (!trim(cell).empty()) items.push_back(parse_scalar(cell, where));
        cell.clear();
      } else {
        cell += c;
      }
    }
    if (!trim(cell).empty()) items.push_back(parse_scalar(cell, where));
    return TomlValue{std::move(items)};
  }
  return parse_scalar(t, where);
}

}  // namespace

TomlDocument TomlDocument::parse(const std::string& text, const std::string& origin) {
  TomlDocument doc;
  std::string table;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error("toml: bad table header at " + where);
      table = trim(line.substr(1, line.size() - 2));
      if (table.empty()) throw std::runtime_error("toml: empty table name at " + where);
      doc.tables_[table];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("toml: expected key = value at " + where);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::runtime_error("toml: empty key at " + where);
    doc.tables_[table][key] = parse_value(line.substr(eq + 1), where);
  }
  return doc;
}

TomlDocument TomlDocument::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool TomlDocument::has(const std::string& table, const std::string& key) const {
  return find(table, key) != nullptr;
}

bool TomlDocument::has_table(const std::string& table) const {
  return tables_.count(table) > 0;
}

const TomlValue* TomlDocument::find(const std::string& table, const std::string& key) const {
  const auto t = tables_.find(table);
  if (t == tables_.end()) return nullptr;
  const auto k = t->second.find(key);
  return k == t->second.end() ? nullptr : &k->second;
}

std::string TomlDocument::get_string(const std::string& table, const std::string& key,
                                     const std::string& fallback) const {
  const TomlValue* v = find(table, key);
  if (!v) return fallback;
  if (!v->is_string()) throw std::runtime_error("config: " + table + "." + key + " must be a string");
  return v->as_string();
}

double TomlDocument::get_number(const std::string& table, const std::string& key,
                                double fallback) const {
  const TomlValue* v = find(table, key);
  if (!v) return fallback;
  if (!v->is_number()) throw std::runtime_error("config: " + table + "." + key + " must be a number");
  return v->as_number();
}

bool TomlDocument::get_bool(const std::string& table, const std::string& key,
                            bool fallback) const {
  const TomlValue* v = find(table, key);
  if (!v) return fallback;
  if (!v->is_bool()) throw std::runtime_error("config: " + table + "." + key + " must be a boolean");
  return v->as_bool();
}

std::vector<double> TomlDocument::get_numbers(const std::string& table,
                                              const std::string& key) const {
  const TomlValue* v = find(table, key);
  if (!v) return {};
  if (v->is_number()) return {v->as_number()};
  if (!v->is_array()) throw std::runtime_error("config: " + table + "." + key + " must be an array");
  std::vector<double> out;
  for (const TomlValue& item : v->as_array()) {
    if (!item.is_number())
      throw std::runtime_error("config: " + table + "." + key + " must hold numbers");
    out.push_back(item.as_number());
  }
  return out;
}

std::vector<std::string> TomlDocument::get_strings(const std::string& table,
                                                   const std::string& key) const {
  const TomlValue* v = find(table, key);
  if (!v) return {};
  if (v->is_string()) return {v->as_string()};
  if (!v->is_array()) throw std::runtime_error("config: " + table + "." + key + " must be an array");
  std::vector<std::string> out;
  for (const TomlValue& item : v->as_array()) {
    if (item.is_string())
      out.push_back(item.as_string());
    else if (item.is_number())
      out.push_back(format_full(item.as_number()));
    else
      throw std::runtime_error("config: " + table + "." + key + " must hold strings");
  }
  return out;
}

namespace {

std::size_t as_count(double v, const std::string& what) {
  if (!(v >= 0.0) || std::floor(v) != v)
    throw std::runtime_error("config: " + what + " must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> parse_shift_spec(const TomlDocument& doc, const std::string& table,
                                          const std::string& key,
                                          std::vector<std::size_t> fallback) {
  const TomlValue* v = doc.find(table, key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  if (v->is_string()) {
    // "a:b" or "a:b:step"
    const std::string& spec = v->as_string();
    std::size_t a = 0, b = 0, step = 1;
    const std::size_t c1 = spec.find(':');
    if (c1 == std::string::npos)
      throw std::runtime_error("config: shift range '" + spec + "' needs a colon");
    const std::size_t c2 = spec.find(':', c1 + 1);
    a = std::stoul(spec.substr(0, c1));
    b = std::stoul(spec.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1));
    if (c2 != std::string::npos) step = std::stoul(spec.substr(c2 + 1));
    if (a < 1 || b < a || step < 1)
      throw std::runtime_error("config: bad shift range '" + spec + "'");
    for (std::size_t s = a; s <= b; s += step) out.push_back(s);
  } else {
    for (double x : doc.get_numbers(table, key)) out.push_back(as_count(x, table + "." + key));
  }
  if (out.empty()) throw std::runtime_error("config: " + table + "." + key + " is empty");
  return out;
}

void apply_document(ExperimentConfig& cfg, const TomlDocument& doc) {
  cfg.name = doc.get_string("experiment", "name", cfg.name);
  cfg.seed = as_count(doc.get_number("experiment", "seed", static_cast<double>(cfg.seed)),
                      "experiment.seed");
  const std::string out_dir = doc.get_string("experiment", "output_dir",
                                             cfg.output_dir.string());
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  if (doc.has_table("input") || doc.has("input", "csv")) {
    cfg.use_csv = true;
    const std::string csv = doc.get_string("input", "csv", cfg.csv_path.string());
    if (!csv.empty()) cfg.csv_path = csv;
    cfg.csv_time_column = doc.get_string("input", "time_column", cfg.csv_time_column);
    if (doc.has("input", "value_columns"))
      cfg.csv_value_columns = doc.get_strings("input", "value_columns");
  }
  if (doc.has_table("system") || doc.has("system", "kind")) {
    if (cfg.use_csv && doc.has("system", "kind"))
      throw std::runtime_error("config: give either [system] or [input], not both");
    const std::string kind = doc.get_string("system", "kind", "");
    if (!kind.empty()) {
      if (kind == "coupled_rossler")
        cfg.system.kind = SystemKind::coupled_rossler;
      else if (kind == "reaction_diffusion")
        cfg.system.kind = SystemKind::reaction_diffusion;
      else if (kind == "enso")
        cfg.system.kind = SystemKind::enso;
      else
        throw std::runtime_error("config: unknown system kind '" + kind + "'");
    }
    auto& r = cfg.system.rossler;
    r.a = doc.get_number("system", "a", r.a);
    r.b = doc.get_number("system", "b", r.b);
    r.d = doc.get_number("system", "d", r.d);
    r.phi1 = doc.get_number("system", "phi1", r.phi1);
    r.phi2 = doc.get_number("system", "phi2", r.phi2);
    r.c1 = doc.get_number("system", "c1", r.c1);
    r.c2 = doc.get_number("system", "c2", r.c2);
    auto& rd = cfg.system.rd;
    rd.du = doc.get_number("system", "du", rd.du);
    rd.dv = doc.get_number("system", "dv", rd.dv);
    rd.a = doc.get_number("system", "ra", rd.a);
    rd.b = doc.get_number("system", "rb", rd.b);
    rd.beta = doc.get_number("system", "beta", rd.beta);
    rd.gamma = doc.get_number("system", "rd_gamma", rd.gamma);
    rd.nx = as_count(doc.get_number("system", "nx", static_cast<double>(rd.nx)), "system.nx");
    rd.ny = as_count(doc.get_number("system", "ny", static_cast<double>(rd.ny)), "system.ny");
    auto& e = cfg.system.enso;
    e.r = doc.get_number("system", "r", e.r);
    e.alpha = doc.get_number("system", "alpha", e.alpha);
    e.b0 = doc.get_number("system", "b0", e.b0);
    e.c = doc.get_number("system", "c", e.c);
    e.gamma = doc.get_number("system", "gamma", e.gamma);
    e.mu = doc.get_number("system", "mu", e.mu);
    e.epsilon = doc.get_number("system", "epsilon", e.epsilon);

    if (doc.has("system", "initial")) cfg.initial = doc.get_numbers("system", "initial");
    cfg.t0 = doc.get_number("system", "t0", cfg.t0);
    cfg.t1 = doc.get_number("system", "t1", cfg.t1);
    cfg.dt = doc.get_number("system", "dt", cfg.dt);
    cfg.output_stride = as_count(
        doc.get_number("system", "output_stride", static_cast<double>(cfg.output_stride)),
        "system.output_stride");
  }

  if (doc.has("partition", "effect")) cfg.effect = doc.get_strings("partition", "effect");
  if (doc.has("partition", "cause")) cfg.cause = doc.get_strings("partition", "cause");

  const std::string dict_kind = doc.get_string("dictionary", "kind", "");
  if (!dict_kind.empty()) cfg.dictionary.kind = feature_kind_from_string(dict_kind);
  cfg.dictionary.output_dim = as_count(
      doc.get_number("dictionary", "output_dim", static_cast<double>(cfg.dictionary.output_dim)),
      "dictionary.output_dim");
  if (doc.has("dictionary", "hidden")) {
    cfg.dictionary.hidden.clear();
    for (double v : doc.get_numbers("dictionary", "hidden"))
      cfg.dictionary.hidden.push_back(as_count(v, "dictionary.hidden"));
  }
  cfg.dictionary.lengthscale =
      doc.get_number("dictionary", "lengthscale", cfg.dictionary.lengthscale);
  cfg.dictionary.degree = as_count(
      doc.get_number("dictionary", "degree", static_cast<double>(cfg.dictionary.degree)),
      "dictionary.degree");
  cfg.dictionary.delays = as_count(
      doc.get_number("dictionary", "delays", static_cast<double>(cfg.dictionary.delays)),
      "dictionary.delays");
  cfg.dictionary.lag = as_count(
      doc.get_number("dictionary", "lag", static_cast<double>(cfg.dictionary.lag)),
      "dictionary.lag");
  if (doc.has("dictionary", "channels")) {
    cfg.dictionary.channels.clear();
    for (double v : doc.get_numbers("dictionary", "channels"))
      cfg.dictionary.channels.push_back(as_count(v, "dictionary.channels"));
  }
  if (doc.has("dictionary", "grid")) {
    const auto grid = doc.get_numbers("dictionary", "grid");
    if (grid.size() != 2) throw std::runtime_error("config: dictionary.grid needs two entries");
    cfg.dictionary.grid_nx = as_count(grid[0], "dictionary.grid");
    cfg.dictionary.grid_ny = as_count(grid[1], "dictionary.grid");
  }
  cfg.dictionary.standardize =
      doc.get_bool("dictionary", "standardize", cfg.dictionary.standardize);

  cfg.train.epochs = as_count(
      doc.get_number("train", "epochs", static_cast<double>(cfg.train.epochs)), "train.epochs");
  cfg.train.learning_rate = doc.get_number("train", "learning_rate", cfg.train.learning_rate);
  cfg.train.batch_size = as_count(
      doc.get_number("train", "batch_size", static_cast<double>(cfg.train.batch_size)),
      "train.batch_size");
  cfg.train.weight_decay = doc.get_number("train", "weight_decay", cfg.train.weight_decay);
  cfg.train.w_reconstruction =
      doc.get_number("train", "w_reconstruction", cfg.train.w_reconstruction);
  cfg.train.w_prediction = doc.get_number("train", "w_prediction", cfg.train.w_prediction);

  cfg.causal.shifts = parse_shift_spec(doc, "causal", "shifts", cfg.causal.shifts);
  const std::string mode = doc.get_string("causal", "mode", "");
  if (!mode.empty()) {
    if (mode == "forecast")
      cfg.causal.mode = MeasureMode::forecast;
    else if (mode == "refit")
      cfg.causal.mode = MeasureMode::refit;
    else
      throw std::runtime_error("config: causal.mode must be forecast or refit");
  }
  cfg.causal.train_fraction =
      doc.get_number("causal", "train_fraction", cfg.causal.train_fraction);
  cfg.causal.normalize = doc.get_bool("causal", "normalize", cfg.causal.normalize);
  cfg.causal.all_starts = doc.get_bool("causal", "all_starts", cfg.causal.all_starts);
  cfg.causal.svd_rank = as_count(
      doc.get_number("causal", "svd_rank", static_cast<double>(cfg.causal.svd_rank)),
      "causal.svd_rank");
  cfg.causal.fit_rel_tol = doc.get_number("causal", "fit_rel_tol", cfg.causal.fit_rel_tol);
  cfg.causal.statistic_horizon = as_count(
      doc.get_number("causal", "statistic_horizon",
                     static_cast<double>(cfg.causal.statistic_horizon)),
      "causal.statistic_horizon");
  cfg.causal.statistic_rel_tol =
      doc.get_number("causal", "statistic_rel_tol", cfg.causal.statistic_rel_tol);
  cfg.both_directions = doc.get_bool("causal", "both_directions", cfg.both_directions);
  cfg.forecast_horizon = as_count(
      doc.get_number("causal", "forecast_horizon", static_cast<double>(cfg.forecast_horizon)),
      "causal.forecast_horizon");
  if (doc.has("causal", "ensemble_seeds")) {
    cfg.ensemble_seeds.clear();
    for (double v : doc.get_numbers("causal", "ensemble_seeds"))
      cfg.ensemble_seeds.push_back(static_cast<std::uint64_t>(v));
  } else if (doc.has("causal", "ensemble")) {
    const std::size_t members =
        as_count(doc.get_number("causal", "ensemble", 0.0), "causal.ensemble");
    cfg.ensemble_seeds.clear();
    for (std::size_t k = 0; k < members; ++k) cfg.ensemble_seeds.push_back(cfg.seed + k);
  }

  cfg.permutations = as_count(
      doc.get_number("test", "permutations", static_cast<double>(cfg.permutations)),
      "test.permutations");
  cfg.test_time_shift = as_count(
      doc.get_number("test", "time_shift", static_cast<double>(cfg.test_time_shift)),
      "test.time_shift");

  cfg.mu_min = doc.get_number("stability", "mu_min", cfg.mu_min);
  cfg.mu_max = doc.get_number("stability", "mu_max", cfg.mu_max);
  cfg.mu_step = doc.get_number("stability", "mu_step", cfg.mu_step);

  cfg.window = as_count(doc.get_number("auroc", "window", static_cast<double>(cfg.window)),
                        "auroc.window");
  cfg.window_step = as_count(
      doc.get_number("auroc", "step", static_cast<double>(cfg.window_step)), "auroc.step");
  cfg.gamma = doc.get_number("auroc", "gamma", cfg.gamma);
  cfg.label_method = doc.get_string("auroc", "label_method", cfg.label_method);
  cfg.label_series = doc.get_string("auroc", "label_series", cfg.label_series);
  cfg.oni_threshold = doc.get_number("auroc", "oni_threshold", cfg.oni_threshold);
  cfg.task2_last = as_count(
      doc.get_number("auroc", "last", static_cast<double>(cfg.task2_last)), "auroc.last");
  cfg.task2_subsample = as_count(
      doc.get_number("auroc", "subsample", static_cast<double>(cfg.task2_subsample)),
      "auroc.subsample");
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  cfg.base_dir = path.has_parent_path() ? path.parent_path() : ".";
  cfg.name = path.stem().string();
  apply_document(cfg, TomlDocument::parse_file(path));
  if (cfg.output_dir.empty()) cfg.output_dir = "out/" + cfg.name;
  if (cfg.effect.empty() || cfg.cause.empty())
    throw std::runtime_error("config: [partition] must list effect and cause dimensions");
  if (cfg.use_csv && cfg.csv_path.empty())
    throw std::runtime_error("config: [input] needs a csv path");
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("override '" + assignment + "' must look like table.key=value");
  const std::string address = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  const std::size_t dot = address.find('.');
  if (dot == std::string::npos)
    throw std::runtime_error("override '" + assignment + "' must address table.key");
  const std::string table = address.substr(0, dot);
  const std::string key = address.substr(dot + 1);

  // Quote values that are not valid TOML scalars/arrays already.
  if (value.empty() || (value.front() != '[' && value.front() != '"' && value != "true" &&
                        value != "false")) {
    try {
      std::size_t used = 0;
      std::stod(value, &used);
      if (used != value.size()) value = '"' + value + '"';
    } catch (const std::exception&) {
      value = '"' + value + '"';
    }
  }
  apply_document(cfg, TomlDocument::parse("[" + table + "]\n" + key + " = " + value + "\n",
                                          "<override>"));
}

ComponentPartition resolve_partition(const ExperimentConfig& config,
                                     const std::vector<std::string>& dim_labels) {
  auto resolve_one = [&](const std::string& token) -> std::size_t {
    for (std::size_t j = 0; j < dim_labels.size(); ++j)
      if (dim_labels[j] == token) return j;
    try {
      std::size_t used = 0;
      const unsigned long idx = std::stoul(token, &used);
      if (used == token.size() && idx < dim_labels.size()) return idx;
    } catch (const std::exception&) {
    }
    throw std::runtime_error("partition: unknown dimension '" + token + "'");
  };
  auto resolve_list = [&](const std::vector<std::string>& tokens) {
    std::vector<std::size_t> out;
    for (const std::string& token : tokens) {
      // field names expand to every matching grid dimension prefix, so
      // "u" picks up u_0_0, u_0_1, ...
      bool matched = false;
      for (std::size_t j = 0; j < dim_labels.size(); ++j)
        if (dim_labels[j] == token ||
            (dim_labels[j].size() > token.size() + 1 &&
             dim_labels[j].compare(0, token.size(), token) == 0 &&
             dim_labels[j][token.size()] == '_' &&
             std::isdigit(static_cast<unsigned char>(dim_labels[j][token.size() + 1])))) {
          out.push_back(j);
          matched = true;
        }
      if (!matched) out.push_back(resolve_one(token));
    }
    return out;
  };

  ComponentPartition part;
  part.effect_dims = resolve_list(config.effect);
  part.cause_dims = resolve_list(config.cause);
  std::vector<bool> used(dim_labels.size(), false);
  for (std::size_t d : part.effect_dims) used[d] = true;
  for (std::size_t d : part.cause_dims) used[d] = true;
  for (std::size_t d = 0; d < dim_labels.size(); ++d)
    if (!used[d]) part.remainder_dims.push_back(d);
  part.validate(dim_labels.size());
  return part;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::string ExperimentConfig::canonical_string() const {
  std::ostringstream out;
  auto put = [&](const std::string& key, const std::string& value) {
    out << key << '=' << value << '\n';
  };
  auto num = [&](double v) { return format_full(v); };
  put("name", name);
  put("seed", std::to_string(seed));
  put("use_csv", use_csv ? "1" : "0");
  if (use_csv) {
    put("csv", csv_path.string());
    put("time_column", csv_time_column);
    for (const auto& c : csv_value_columns) put("value_column", c);
  } else {
    put("system", std::to_string(static_cast<int>(system.kind)));
    const auto& r = system.rossler;
    put("rossler", num(r.a) + "," + num(r.b) + "," + num(r.d) + "," + num(r.phi1) + "," +
                       num(r.phi2) + "," + num(r.c1) + "," + num(r.c2));
    const auto& d = system.rd;
    put("rd", num(d.du) + "," + num(d.dv) + "," + num(d.a) + "," + num(d.b) + "," + num(d.beta) +
                  "," + num(d.gamma) + "," + std::to_string(d.nx) + "," + std::to_string(d.ny));
    const auto& e = system.enso;
    put("enso", num(e.r) + "," + num(e.alpha) + "," + num(e.b0) + "," + num(e.c) + "," +
                    num(e.gamma) + "," + num(e.mu) + "," + num(e.epsilon));
    std::string init;
    for (double v : initial) init += num(v) + ",";
    put("initial", init);
    put("span", num(t0) + "," + num(t1) + "," + num(dt) + "," + std::to_string(output_stride));
  }
  std::string eff, cau;
  for (const auto& t : effect) eff += t + ",";
  for (const auto& t : cause) cau += t + ",";
  put("effect", eff);
  put("cause", cau);
  put("dict_kind", to_string(dictionary.kind));
  put("dict_m", std::to_string(dictionary.output_dim));
  std::string hidden;
  for (std::size_t h : dictionary.hidden) hidden += std::to_string(h) + ",";
  put("dict_hidden", hidden);
  put("dict_lengthscale", num(dictionary.lengthscale));
  put("dict_degree", std::to_string(dictionary.degree));
  put("dict_delays", std::to_string(dictionary.delays) + ":" + std::to_string(dictionary.lag));
  std::string channels;
  for (std::size_t c : dictionary.channels) channels += std::to_string(c) + ",";
  put("dict_channels", channels);
  put("dict_grid", std::to_string(dictionary.grid_nx) + "x" + std::to_string(dictionary.grid_ny));
  put("dict_standardize", dictionary.standardize ? "1" : "0");
  put("train", std::to_string(train.epochs) + "," + num(train.learning_rate) + "," +
                   std::to_string(train.batch_size) + "," + num(train.weight_decay) + "," +
                   num(train.w_reconstruction) + "," + num(train.w_prediction));
  std::string shifts;
  for (std::size_t s : causal.shifts) shifts += std::to_string(s) + ",";
  put("shifts", shifts);
  put("causal_mode", causal.mode == MeasureMode::forecast ? "forecast" : "refit");
  put("train_fraction", num(causal.train_fraction));
  put("normalize", causal.normalize ? "1" : "0");
  put("all_starts", causal.all_starts ? "1" : "0");
  put("svd_rank", std::to_string(causal.svd_rank));
  put("fit_rel_tol", num(causal.fit_rel_tol));
  put("statistic",
      std::to_string(causal.statistic_horizon) + "," + num(causal.statistic_rel_tol));
  put("both_directions", both_directions ? "1" : "0");
  put("forecast_horizon", std::to_string(forecast_horizon));
  std::string members;
  for (std::uint64_t s : ensemble_seeds) members += std::to_string(s) + ",";
  put("ensemble_seeds", members);
  put("test", std::to_string(permutations) + "," + std::to_string(test_time_shift));
  put("stability", num(mu_min) + "," + num(mu_max) + "," + num(mu_step));
  put("auroc", std::to_string(window) + "," + std::to_string(window_step) + "," + num(gamma) +
                   "," + label_method + "," + label_series + "," + num(oni_threshold) + "," +
                   std::to_string(task2_last) + "," + std::to_string(task2_subsample));
  return out.str();
}

}  // namespace kausal
