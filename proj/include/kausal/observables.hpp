#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kausal/matrix.hpp"
#include "kausal/rng.hpp"

#include <json.hpp>

namespace kausal {

enum class FeatureKind { identity, rff, polynomial, time_delay, mlp, cnn };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

// Observable dictionary psi: R^d -> R^M. `apply` consumes the vector built
// by `gather`; for every kind except time_delay that is simply one sample.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;

  virtual FeatureKind kind() const = 0;
  // Dimension of one series sample.
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;

  virtual std::vector<double> apply(std::span<const double> x) const = 0;

  // Preceding samples required to evaluate at a row (time_delay only).
  virtual std::size_t history() const { return 0; }
  // Builds the apply() input from a series whose rows are samples.
  virtual std::vector<double> gather(const Matrix& series, std::size_t row) const;

  virtual nlohmann::json to_json() const = 0;
  virtual std::unique_ptr<FeatureMap> clone() const = 0;
};

// <psi(x), psi(y)>.
double kernel_eval(const FeatureMap& map, std::span<const double> x, std::span<const double> y);

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 1e-2;
  std::size_t batch_size = 0;  // 0 = full batch
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double w_reconstruction = 1.0;
  double w_prediction = 1.0;
};

struct AdamWState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamWState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// Decoupled-weight-decay Adam update, in place.
void adamw_step(std::span<double> params, std::span<const double> gradients, AdamWState& state,
                double learning_rate, double weight_decay);

struct ForwardBackward {
  double loss = 0.0;
  std::vector<double> gradients;  // same layout as params()
};

// Learnable encoder-decoder dictionary (mlp or cnn). The encoder output is
// the observable vector; sigmoid keeps it inside (0,1).
class TrainableMap : public FeatureMap {
 public:
  virtual std::span<double> params() = 0;
  virtual std::span<const double> params() const = 0;

  // loss = w_rec * MSE(dec(enc(x)), x) + w_pred * MSE(dec(enc(x)), target),
  // MSE averaged over every element of the batch. Gradients are exact
  // reverse-mode derivatives of that loss.
  virtual ForwardBackward forward_backward(const Matrix& inputs, const Matrix& targets,
                                           double w_rec, double w_pred) const = 0;

  virtual std::vector<double> decode(std::span<const double> code) const = 0;

  // Freeze input standardization (per-dimension affine) from sample rows.
  virtual void set_standardization(const Matrix& samples) = 0;
};

// Runs epochs of AdamW on forward_backward, pairing each sample row with
// its successor as the prediction target. Returns the per-epoch loss.
std::vector<double> train_dictionary(TrainableMap& map, const Matrix& training_states,
                                     const TrainConfig& config);

// Construction recipe for a dictionary; the seed drives weight init and
// feature sampling.
struct DictionarySpec {
  FeatureKind kind = FeatureKind::rff;
  std::size_t output_dim = 500;
  std::vector<std::size_t> hidden = {16};           // mlp: encoder hidden widths
  double lengthscale = 0.0;                         // rff: 0 = median heuristic
  std::size_t degree = 3;                           // polynomial
  std::size_t delays = 5;                           // time_delay q
  std::size_t lag = 1;                              // time_delay tau (samples)
  std::vector<std::size_t> channels = {16, 32, 64, 128};  // cnn
  std::size_t grid_nx = 16;
  std::size_t grid_ny = 16;
  // Optional per-dimension affine input standardization for mlp/cnn. Off by
  // default: saturated sigmoids on raw state scales generalize more
  // conservatively, which the causal comparisons rely on.
  bool standardize = false;
};

// Builds a map for `input_dim`-dimensional samples. `sample_inputs` (rows =
// samples) feeds the rff median heuristic and mlp/cnn standardization; it may
// be null when neither is needed.
std::unique_ptr<FeatureMap> make_feature_map(const DictionarySpec& spec, std::size_t input_dim,
                                             std::uint64_t seed,
                                             const Matrix* sample_inputs = nullptr);

std::unique_ptr<FeatureMap> feature_map_from_json(const nlohmann::json& doc);

}  // namespace kausal
