#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kausal/koopman.hpp"
#include "kausal/rng.hpp"

using namespace kausal;

namespace {

// Test-only oracle: solve the normal equations (F F^T) K^T = F T^T by
// Gauss-Jordan elimination, independent of the svd/eigen fit paths.
Matrix least_squares_oracle(const Matrix& features, const Matrix& targets) {
  const std::size_t p = features.rows();
  Matrix g = gram(features);                        // p x p
  Matrix rhs = matmul_abt(features, targets);       // p x e
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(g(r, col)) > std::abs(g(pivot, col))) pivot = r;
    if (pivot != col)
      for (std::size_t c = 0; c < p; ++c) {
        std::swap(g(pivot, c), g(col, c));
      }
    if (pivot != col)
      for (std::size_t c = 0; c < rhs.cols(); ++c) std::swap(rhs(pivot, c), rhs(col, c));
    const double diag = g(col, col);
    REQUIRE(std::abs(diag) > 1e-12);
    for (std::size_t c = 0; c < p; ++c) g(col, c) /= diag;
    for (std::size_t c = 0; c < rhs.cols(); ++c) rhs(col, c) /= diag;
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double factor = g(r, col);
      if (factor == 0.0) continue;
      for (std::size_t c = 0; c < p; ++c) g(r, c) -= factor * g(col, c);
      for (std::size_t c = 0; c < rhs.cols(); ++c) rhs(r, c) -= factor * rhs(col, c);
    }
  }
  return rhs.transposed();
}

Trajectory linear_trajectory(const Matrix& a, std::vector<double> x0, std::size_t steps) {
  Trajectory traj;
  traj.states = Matrix(steps, x0.size());
  for (std::size_t i = 0; i < steps; ++i) {
    traj.times.push_back(0.1 * static_cast<double>(i));
    std::copy(x0.begin(), x0.end(), traj.states.row(i).begin());
    x0 = matvec(a, x0);
  }
  return traj;
}

ComponentPartition all_effect(std::size_t dim) {
  ComponentPartition p;
  for (std::size_t i = 0; i < dim; ++i) p.effect_dims.push_back(i);
  return p;
}

std::shared_ptr<const FeatureMap> identity_map(std::size_t dim) {
  DictionarySpec spec;
  spec.kind = FeatureKind::identity;
  return std::shared_ptr<const FeatureMap>(make_feature_map(spec, dim, 0));
}

std::shared_ptr<const FeatureMap> rff_map(std::size_t dim, std::size_t m, std::uint64_t seed) {
  DictionarySpec spec;
  spec.kind = FeatureKind::rff;
  spec.output_dim = m;
  spec.lengthscale = 1.0;
  return std::shared_ptr<const FeatureMap>(make_feature_map(spec, dim, seed));
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("build_matrices counts columns") {
  Trajectory traj;
  traj.times = {0.0, 0.1, 0.2};
  traj.states = Matrix(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    traj.states(i, 0) = static_cast<double>(i);
    traj.states(i, 1) = 10.0 + static_cast<double>(i);
  }
  ComponentPartition part;
  part.effect_dims = {0};
  part.cause_dims = {1};
  const auto dict = identity_map(1);
  const DataMatrices dm = build_matrices(traj, part, *dict, 1, KoopmanMode::marginal);
  CHECK(dm.features.cols() == 2);
  CHECK(dm.targets.cols() == 2);
  // Identity dictionary duplicates the effect block.
  CHECK(dm.features(0, 0) == dm.features(1, 0));
  CHECK(dm.targets(0, 0) == 1.0);
  CHECK(dm.targets(0, 1) == 2.0);
}

TEST_CASE("build_matrices shapes follow d_E + M") {
  const Trajectory traj = linear_trajectory(
      Matrix::from_rows({{0.9, 0.1, 0.0}, {-0.1, 0.9, 0.0}, {0.0, 0.0, 0.8}}),
      {1.0, 0.5, -0.3}, 40);
  ComponentPartition part;
  part.effect_dims = {0, 1};
  part.cause_dims = {2};
  const auto dict = rff_map(3, 16, 1);
  const DataMatrices dm = build_matrices(traj, part, *dict, 3, KoopmanMode::joint);
  CHECK(dm.features.rows() == 2 + 16);
  CHECK(dm.features.cols() == 40 - 3);
  CHECK(dm.targets.rows() == 2);
  CHECK(dm.targets.cols() == 40 - 3);
}

TEST_CASE("fit reproduces targets that are a multiple of the effect block") {
  Trajectory traj;
  const std::size_t n = 12;
  traj.states = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    traj.times.push_back(0.1 * static_cast<double>(i));
    traj.states(i, 0) = std::pow(2.0, static_cast<double>(i) / 2.0);
  }
  const ComponentPartition part = all_effect(1);
  const DataMatrices dm = build_matrices(traj, part, *identity_map(1), 2, KoopmanMode::marginal);
  const Matrix k = fit_operator(dm.features, dm.targets);
  // targets = 2 * current, split across the duplicated identity rows.
  const Matrix pred = matmul(k, dm.features);
  for (std::size_t j = 0; j < pred.cols(); ++j)
    CHECK(pred(0, j) == doctest::Approx(dm.targets(0, j)).epsilon(1e-10));
  CHECK(k(0, 0) + k(0, 1) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("fit recovers a linear operator against the oracle") {
  const Matrix a =
      Matrix::from_rows({{0.95, 0.05, -0.02}, {-0.08, 0.9, 0.03}, {0.01, -0.04, 0.85}});
  const Trajectory traj = linear_trajectory(a, {1.0, -0.7, 0.4}, 60);

  // Identity-only features, no duplicate block: build by hand.
  Matrix features(3, 59), targets(3, 59);
  for (std::size_t nn = 0; nn < 59; ++nn)
    for (std::size_t j = 0; j < 3; ++j) {
      features(j, nn) = traj.states(nn, j);
      targets(j, nn) = traj.states(nn + 1, j);
    }
  const Matrix k = fit_operator(features, targets);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(k(i, j) == doctest::Approx(a(i, j)).epsilon(1e-8));

  const Matrix oracle = least_squares_oracle(features, targets);
  for (std::size_t i = 0; i < k.size(); ++i)
    CHECK(k.data()[i] == doctest::Approx(oracle.data()[i]).epsilon(1e-7));
}

TEST_CASE("gram and svd fit paths agree with the oracle on noisy data") {
  const Matrix features = random_matrix(6, 40, 2);
  const Matrix targets = random_matrix(2, 40, 3);
  const Matrix k_gram = fit_operator(features, targets, 0);
  const Matrix k_svd = fit_operator(features, targets, 6);
  const Matrix oracle = least_squares_oracle(features, targets);
  for (std::size_t i = 0; i < k_gram.size(); ++i) {
    CHECK(k_gram.data()[i] == doctest::Approx(oracle.data()[i]).epsilon(1e-8));
    CHECK(k_svd.data()[i] == doctest::Approx(oracle.data()[i]).epsilon(1e-8));
  }
}

TEST_CASE("svd_rank covering all nonzero singular values matches full rank") {
  const Matrix features = random_matrix(5, 30, 4);
  const Matrix targets = random_matrix(3, 30, 5);
  std::size_t rank_full = 0;
  const Matrix k_full = fit_operator(features, targets, 0, &rank_full);
  CHECK(rank_full == 5);
  const Matrix k_trunc = fit_operator(features, targets, 5);
  for (std::size_t i = 0; i < k_full.size(); ++i)
    CHECK(k_full.data()[i] == doctest::Approx(k_trunc.data()[i]).epsilon(1e-10));
}

TEST_CASE("interpolating fits reproduce their training targets") {
  const Trajectory traj = linear_trajectory(
      Matrix::from_rows({{0.9, 0.2}, {-0.2, 0.9}}), {1.0, 0.0}, 8);
  const ComponentPartition part = all_effect(2);
  const auto dict = rff_map(2, 32, 7);  // 34 features, 7 samples: underdetermined
  const KoopmanModel model = fit(traj, part, dict, 1, KoopmanMode::marginal);
  CHECK(model.underdetermined);
  const DataMatrices dm = build_matrices(traj, part, *dict, 1, KoopmanMode::marginal);
  const Matrix pred = matmul(model.op, dm.features);
  for (std::size_t i = 0; i < pred.size(); ++i)
    CHECK(pred.data()[i] == doctest::Approx(dm.targets.data()[i]).epsilon(1e-8));
}

TEST_CASE("zero operator predicts zero") {
  KoopmanModel model;
  model.mode = KoopmanMode::marginal;
  model.partition = all_effect(2);
  model.dictionary = identity_map(2);
  model.op = Matrix(2, 4, 0.0);
  const std::vector<double> out = predict(model, std::vector<double>{1.0, -2.0});
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("joint predict requires the cause state") {
  const Trajectory traj = linear_trajectory(
      Matrix::from_rows({{0.9, 0.1}, {0.0, 0.95}}), {1.0, 1.0}, 30);
  ComponentPartition part;
  part.effect_dims = {0};
  part.cause_dims = {1};
  const KoopmanModel model = fit(traj, part, identity_map(2), 1, KoopmanMode::joint);
  CHECK_THROWS(predict(model, std::vector<double>{1.0}));
  CHECK_NOTHROW(predict(model, std::vector<double>{1.0}, std::vector<double>{0.5}));
}

TEST_CASE("least-squares optimality under random perturbations") {
  const Matrix features = random_matrix(5, 25, 11);
  const Matrix targets = random_matrix(2, 25, 12);
  const Matrix k = fit_operator(features, targets);

  auto residual = [&](const Matrix& op) {
    Matrix r = matmul(op, features);
    r -= targets;
    const double f = r.frobenius_norm();
    return f * f;
  };
  const double base = residual(k);
  SeededRng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix perturbed = k;
    double norm = 0.0;
    std::vector<double> noise(k.size());
    for (double& v : noise) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < k.size(); ++i)
      perturbed.data()[i] += 1e-3 * noise[i] / norm;
    CHECK(residual(perturbed) >= base);
  }
}

TEST_CASE("fit residual is orthogonal to the feature rows") {
  const Matrix features = random_matrix(4, 30, 15);
  const Matrix targets = random_matrix(2, 30, 16);
  const Matrix k = fit_operator(features, targets);
  Matrix resid = matmul(k, features);
  resid -= targets;
  const Matrix overlap = matmul_abt(resid, features);  // 2 x 4
  for (std::size_t i = 0; i < overlap.size(); ++i)
    CHECK(std::abs(overlap.data()[i]) < 1e-8);
}

TEST_CASE("conditional forecast base case equals predict") {
  const Matrix a = Matrix::from_rows({{0.9, 0.1}, {-0.1, 0.92}});
  const Trajectory traj = linear_trajectory(a, {1.0, 0.3}, 50);
  ComponentPartition part;
  part.effect_dims = {0};
  part.cause_dims = {1};
  const KoopmanModel model = fit(traj, part, identity_map(2), 1, KoopmanMode::joint);
  const ForecastResult fc = conditional_forecast(model, traj, 1);
  const std::vector<double> one =
      predict(model, std::vector<double>{traj.states(0, 0)}, std::vector<double>{traj.states(0, 1)});
  CHECK(fc.predictions(0, 0) == doctest::Approx(one[0]).epsilon(1e-12));
  CHECK(fc.target_rows[0] == 1);
}

TEST_CASE("iterated shift-1 forecasts match a direct shift-H fit on linear dynamics") {
  const Matrix a = Matrix::from_rows({{0.95, 0.10}, {-0.10, 0.95}});
  const Trajectory traj = linear_trajectory(a, {1.0, 0.0}, 80);
  const ComponentPartition part = all_effect(2);
  const auto dict = identity_map(2);

  const std::size_t horizon = 6;
  const KoopmanModel one = fit(traj, part, dict, 1, KoopmanMode::marginal);
  const ForecastResult iterated = conditional_forecast(one, traj, horizon);

  const KoopmanModel direct = fit(traj, part, dict, horizon, KoopmanMode::marginal);
  const std::vector<double> once =
      predict(direct, std::vector<double>{traj.states(0, 0), traj.states(0, 1)});
  CHECK(iterated.predictions(horizon - 1, 0) == doctest::Approx(once[0]).epsilon(1e-6));
  CHECK(iterated.predictions(horizon - 1, 1) == doctest::Approx(once[1]).epsilon(1e-6));
}

TEST_CASE("forecast horizon beyond the test data fails") {
  const Trajectory traj = linear_trajectory(Matrix::from_rows({{0.9, 0.0}, {0.0, 0.9}}),
                                            {1.0, 1.0}, 10);
  const KoopmanModel model = fit(traj, all_effect(2), identity_map(2), 1, KoopmanMode::marginal);
  CHECK_THROWS(conditional_forecast(model, traj, 10));
  CHECK_NOTHROW(conditional_forecast(model, traj, 9));
}
