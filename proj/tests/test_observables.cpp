#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kausal/observables.hpp"
#include "kausal/rng.hpp"

using namespace kausal;

namespace {

Matrix random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  SeededRng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

std::unique_ptr<FeatureMap> make_mlp(std::size_t dim, std::vector<std::size_t> hidden,
                                     std::size_t code, std::uint64_t seed) {
  DictionarySpec spec;
  spec.kind = FeatureKind::mlp;
  spec.hidden = std::move(hidden);
  spec.output_dim = code;
  spec.standardize = false;
  return make_feature_map(spec, dim, seed);
}

// Central finite differences against the analytic gradient; returns the
// worst relative error over every parameter.
double gradient_defect(TrainableMap& map, const Matrix& inputs, const Matrix& targets,
                       double w_rec, double w_pred) {
  const ForwardBackward fb = map.forward_backward(inputs, targets, w_rec, w_pred);
  const double h = 1e-5;
  double worst = 0.0;
  auto params = map.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = map.forward_backward(inputs, targets, w_rec, w_pred).loss;
    params[i] = saved - h;
    const double down = map.forward_backward(inputs, targets, w_rec, w_pred).loss;
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(fb.gradients[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - fb.gradients[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("identity map returns the state unchanged") {
  DictionarySpec spec;
  spec.kind = FeatureKind::identity;
  const auto map = make_feature_map(spec, 2, 0);
  const std::vector<double> out = map->apply(std::vector<double>{3.0, -1.0});
  CHECK(out[0] == 3.0);
  CHECK(out[1] == -1.0);
}

TEST_CASE("mlp with zeroed weights emits sigmoid(0)") {
  auto map = make_mlp(3, {4}, 5, 1);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  for (double& p : trainable.params()) p = 0.0;
  for (double v : map->apply(std::vector<double>{7.0, -2.0, 0.5})) CHECK(v == 0.5);
}

TEST_CASE("rff self inner product approximates k(x,x)=1") {
  DictionarySpec spec;
  spec.kind = FeatureKind::rff;
  spec.output_dim = 500;
  spec.lengthscale = 1.0;
  const auto map = make_feature_map(spec, 3, 0);
  const std::vector<double> x{0.3, -1.2, 0.7};
  CHECK(std::abs(kernel_eval(*map, x, x) - 1.0) < 0.15);
}

TEST_CASE("kernel_eval of a map with itself is the squared norm") {
  DictionarySpec spec;
  spec.kind = FeatureKind::polynomial;
  spec.degree = 2;
  const auto map = make_feature_map(spec, 2, 0);
  const std::vector<double> x{1.5, -0.5};
  const std::vector<double> fx = map->apply(x);
  double norm2 = 0.0;
  for (double v : fx) norm2 += v * v;
  CHECK(kernel_eval(*map, x, x) == doctest::Approx(norm2));
}

TEST_CASE("identity kernel of orthogonal vectors vanishes") {
  DictionarySpec spec;
  spec.kind = FeatureKind::identity;
  const auto map = make_feature_map(spec, 2, 0);
  CHECK(kernel_eval(*map, std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) == 0.0);
}

TEST_CASE("rff kernel approximates the Gaussian kernel at M=10^4") {
  DictionarySpec spec;
  spec.kind = FeatureKind::rff;
  spec.output_dim = 10000;
  spec.lengthscale = 1.0;
  const auto map = make_feature_map(spec, 2, 3);
  SeededRng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<double> x{rng.normal(), rng.normal()};
    const std::vector<double> y{rng.normal(), rng.normal()};
    const double d2 = (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]);
    const double exact = std::exp(-d2 / 2.0);
    CHECK(std::abs(kernel_eval(*map, x, y) - exact) < 3.0 / std::sqrt(10000.0));
  }
}

TEST_CASE("rff kernel is symmetric exactly") {
  DictionarySpec spec;
  spec.kind = FeatureKind::rff;
  spec.output_dim = 64;
  spec.lengthscale = 2.0;
  const auto map = make_feature_map(spec, 3, 5);
  const std::vector<double> x{0.1, 2.0, -0.4};
  const std::vector<double> y{1.0, -1.0, 0.2};
  CHECK(kernel_eval(*map, x, y) == kernel_eval(*map, y, x));
}

TEST_CASE("zero loss weights give zero loss and gradients") {
  auto map = make_mlp(2, {3}, 2, 7);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  const Matrix in = random_rows(4, 2, 1);
  const ForwardBackward fb = trainable.forward_backward(in, in, 0.0, 0.0);
  CHECK(fb.loss == 0.0);
  for (double g : fb.gradients) CHECK(g == 0.0);
}

TEST_CASE("mlp gradients match central differences") {
  auto map = make_mlp(3, {4, 5}, 3, 11);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  const Matrix in = random_rows(6, 3, 2);
  const Matrix tg = random_rows(6, 3, 3);
  CHECK(gradient_defect(trainable, in, tg, 1.0, 1.0) < 1e-4);
  CHECK(gradient_defect(trainable, in, tg, 0.5, 2.0) < 1e-4);
}

TEST_CASE("mlp gradient check over many random configurations") {
  SeededRng rng(123);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 1 + rng.below(3);
    const std::size_t hidden = 2 + rng.below(3);
    const std::size_t code = 1 + rng.below(4);
    const std::size_t batch = 1 + rng.below(3);
    auto map = make_mlp(dim, {hidden}, code, rng.next());
    auto& trainable = dynamic_cast<TrainableMap&>(*map);
    const Matrix in = random_rows(batch, dim, rng.next());
    const Matrix tg = random_rows(batch, dim, rng.next());
    worst = std::max(worst, gradient_defect(trainable, in, tg, 1.0, 1.0));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("single-sample reconstruction with target=input is pure autoencoding") {
  auto map = make_mlp(2, {3}, 2, 13);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  const Matrix in = random_rows(1, 2, 4);
  const double both = trainable.forward_backward(in, in, 1.0, 1.0).loss;
  const double rec_only = trainable.forward_backward(in, in, 1.0, 0.0).loss;
  CHECK(both == doctest::Approx(2.0 * rec_only).epsilon(1e-12));
}

TEST_CASE("cnn with zeroed weights encodes to sigmoid(0)") {
  DictionarySpec spec;
  spec.kind = FeatureKind::cnn;
  spec.channels = {2, 4};
  spec.grid_nx = 8;
  spec.grid_ny = 8;
  spec.output_dim = 6;
  spec.standardize = false;
  auto map = make_feature_map(spec, 64, 1);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  for (double& p : trainable.params()) p = 0.0;
  for (double v : map->apply(std::vector<double>(64, 1.25))) CHECK(v == 0.5);
}

TEST_CASE("cnn rejects grids the stride chain cannot divide") {
  DictionarySpec spec;
  spec.kind = FeatureKind::cnn;
  spec.channels = {2, 4, 8};
  spec.grid_nx = 6;
  spec.grid_ny = 6;
  CHECK_THROWS(make_feature_map(spec, 36, 1));
}

TEST_CASE("cnn gradients match central differences") {
  DictionarySpec spec;
  spec.kind = FeatureKind::cnn;
  spec.channels = {2, 4};
  spec.grid_nx = 8;
  spec.grid_ny = 8;
  spec.output_dim = 5;
  spec.standardize = false;
  auto map = make_feature_map(spec, 64, 21);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  const Matrix in = random_rows(2, 64, 5, 0.5);
  const Matrix tg = random_rows(2, 64, 6, 0.5);
  CHECK(gradient_defect(trainable, in, tg, 1.0, 1.0) < 1e-4);
}

TEST_CASE("cnn training reduces the loss") {
  DictionarySpec spec;
  spec.kind = FeatureKind::cnn;
  spec.channels = {2, 4};
  spec.grid_nx = 8;
  spec.grid_ny = 8;
  spec.output_dim = 8;
  auto map = make_feature_map(spec, 64, 31, nullptr);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  const Matrix states = random_rows(12, 64, 7, 0.5);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  cfg.seed = 1;
  const std::vector<double> history = train_dictionary(trainable, states, cfg);
  CHECK(history.size() == 50);
  CHECK(history.back() < history.front());
}

TEST_CASE("adamw leaves parameters alone for zero gradient and decay") {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamWState state(3);
  adamw_step(p, g, state, 0.1, 0.0);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 3.0);
}

TEST_CASE("first adamw step moves by about lr in the gradient direction") {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{0.5, -2.0};
  AdamWState state(2);
  adamw_step(p, g, state, 0.01, 0.0);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("decoupled weight decay shrinks parameters multiplicatively") {
  std::vector<double> p{2.0};
  const std::vector<double> g{0.0};
  AdamWState state(1);
  adamw_step(p, g, state, 0.1, 0.5);
  CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("training with zero learning rate records one history entry per epoch") {
  auto map = make_mlp(2, {3}, 2, 17);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  const std::vector<double> before(trainable.params().begin(), trainable.params().end());
  const Matrix states = random_rows(5, 2, 8);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  const std::vector<double> history = train_dictionary(trainable, states, cfg);
  CHECK(history.size() == 1);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(trainable.params()[i] == before[i]);
}

TEST_CASE("training halves the loss on oscillator states") {
  SeededRng rng(2);
  Matrix states(200, 3);
  for (std::size_t i = 0; i < states.rows(); ++i) {
    const double t = 0.05 * static_cast<double>(i);
    states(i, 0) = std::sin(t);
    states(i, 1) = std::cos(1.3 * t);
    states(i, 2) = 0.5 * std::sin(0.7 * t + 0.4);
  }
  DictionarySpec spec;
  spec.kind = FeatureKind::mlp;
  spec.hidden = {16};
  spec.output_dim = 32;
  auto map = make_feature_map(spec, 3, 5, &states);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const std::vector<double> history = train_dictionary(trainable, states, cfg);
  CHECK(history.back() < 0.5 * history.front());
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const Matrix states = random_rows(20, 2, 9);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 4;
  cfg.seed = 12;

  auto run = [&]() {
    auto map = make_mlp(2, {4}, 3, 77);
    auto& trainable = dynamic_cast<TrainableMap&>(*map);
    train_dictionary(trainable, states, cfg);
    return std::vector<double>(trainable.params().begin(), trainable.params().end());
  };
  const std::vector<double> a = run();
  const std::vector<double> b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("learnable codes stay strictly inside (0,1)") {
  auto map = make_mlp(2, {4}, 6, 19);
  SeededRng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const double scale = trial < 25 ? 1.0 : 1e6;
    const std::vector<double> x{scale * rng.normal(), scale * rng.normal()};
    for (double v : map->apply(x)) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("degree-1 polynomial equals constant plus identity") {
  DictionarySpec spec;
  spec.kind = FeatureKind::polynomial;
  spec.degree = 1;
  const auto map = make_feature_map(spec, 3, 0);
  CHECK(map->output_dim() == 4);
  const std::vector<double> x{2.0, -1.0, 0.5};
  const std::vector<double> fx = map->apply(x);
  double constant = 0.0;
  std::vector<double> rest;
  for (double v : fx) {
    if (v == 1.0 && constant == 0.0)
      constant = v;
    else
      rest.push_back(v);
  }
  CHECK(constant == 1.0);
  std::sort(rest.begin(), rest.end());
  std::vector<double> expect{-1.0, 0.5, 2.0};
  for (std::size_t i = 0; i < 3; ++i) CHECK(rest[i] == expect[i]);
}

TEST_CASE("time delay features stack the lagged window") {
  DictionarySpec spec;
  spec.kind = FeatureKind::time_delay;
  spec.delays = 2;
  spec.lag = 1;
  const auto map = make_feature_map(spec, 2, 0);
  CHECK(map->history() == 2);
  CHECK(map->output_dim() == 6);
  Matrix series(4, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    series(i, 0) = static_cast<double>(i);
    series(i, 1) = 10.0 + static_cast<double>(i);
  }
  const std::vector<double> gathered = map->gather(series, 3);
  const std::vector<double> expect{3, 13, 2, 12, 1, 11};
  for (std::size_t i = 0; i < 6; ++i) CHECK(gathered[i] == expect[i]);
  CHECK_THROWS(map->gather(series, 1));
}

TEST_CASE("serialization round-trips bit-exactly") {
  Matrix states = random_rows(50, 2, 9);
  DictionarySpec spec;
  spec.kind = FeatureKind::mlp;
  spec.hidden = {4};
  spec.output_dim = 3;
  auto map = make_feature_map(spec, 2, 55, &states);
  auto& trainable = dynamic_cast<TrainableMap&>(*map);
  TrainConfig cfg;
  cfg.epochs = 5;
  train_dictionary(trainable, states, cfg);

  const nlohmann::json doc = map->to_json();
  const auto restored = feature_map_from_json(nlohmann::json::parse(doc.dump()));
  const std::vector<double> x{0.42, -1.7};
  const std::vector<double> a = map->apply(x);
  const std::vector<double> b = restored->apply(x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  DictionarySpec rspec;
  rspec.kind = FeatureKind::rff;
  rspec.output_dim = 32;
  rspec.lengthscale = 1.7;
  auto rff = make_feature_map(rspec, 2, 5);
  const auto rff2 = feature_map_from_json(nlohmann::json::parse(rff->to_json().dump()));
  const std::vector<double> ra = rff->apply(x);
  const std::vector<double> rb = rff2->apply(x);
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i] == rb[i]);
}
