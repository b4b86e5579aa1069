#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "kausal/matrix.hpp"
#include "kausal/rng.hpp"

using namespace kausal;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double reconstruction_residual(const Matrix& a, const SvdResult& f) {
  Matrix rec(a.rows(), a.cols(), 0.0);
  for (std::size_t k = 0; k < f.singular_values.size(); ++k)
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j)
        rec(i, j) += f.singular_values[k] * f.u(i, k) * f.vt(k, j);
  rec -= a;
  return rec.frobenius_norm();
}

double orthonormality_defect(const Matrix& columns) {
  const Matrix g = matmul_atb(columns, columns);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

}  // namespace

TEST_CASE("svd of the identity") {
  const SvdResult f = svd(Matrix::identity(3));
  for (double s : f.singular_values) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix uvt = matmul(f.u, f.vt);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(uvt(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("svd of a diagonal matrix sorts singular values") {
  Matrix a(3, 3, 0.0);
  a(0, 0) = 3.0;
  a(1, 1) = 2.0;
  a(2, 2) = 1.0;
  const SvdResult f = svd(a);
  CHECK(f.singular_values[0] == doctest::Approx(3.0));
  CHECK(f.singular_values[1] == doctest::Approx(2.0));
  CHECK(f.singular_values[2] == doctest::Approx(1.0));
}

TEST_CASE("svd reconstructs seeded random matrices") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix a = random_matrix(5, 3, seed);
    const SvdResult f = svd(a);
    CHECK(reconstruction_residual(a, f) < 1e-9 * a.frobenius_norm());
    CHECK(orthonormality_defect(f.u) < 1e-10);
    CHECK(orthonormality_defect(f.vt.transposed()) < 1e-10);
    for (std::size_t k = 1; k < f.singular_values.size(); ++k)
      CHECK(f.singular_values[k] <= f.singular_values[k - 1]);
  }
}

TEST_CASE("svd of a fat matrix") {
  const Matrix a = random_matrix(3, 7, 9);
  const SvdResult f = svd(a);
  CHECK(f.u.rows() == 3);
  CHECK(f.u.cols() == 3);
  CHECK(f.vt.rows() == 3);
  CHECK(f.vt.cols() == 7);
  CHECK(reconstruction_residual(a, f) < 1e-9 * a.frobenius_norm());
}

TEST_CASE("svd of the transpose carries the same spectrum") {
  const Matrix a = random_matrix(6, 4, 17);
  const SvdResult fa = svd(a);
  const SvdResult fat = svd(a.transposed());
  for (std::size_t k = 0; k < fa.singular_values.size(); ++k)
    CHECK(std::abs(fa.singular_values[k] - fat.singular_values[k]) < 1e-10);
}

TEST_CASE("svd handles rank deficiency with an orthonormal basis") {
  Matrix a(2, 2, 0.0);
  a(0, 0) = 2.0;
  const SvdResult f = svd(a);
  CHECK(f.singular_values[0] == doctest::Approx(2.0));
  CHECK(f.singular_values[1] == doctest::Approx(0.0));
  CHECK(orthonormality_defect(f.u) < 1e-10);
}

TEST_CASE("pinv of the identity") {
  const Matrix p = pinv(Matrix::identity(4));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(p(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("pinv of a singular diagonal") {
  Matrix a(2, 2, 0.0);
  a(0, 0) = 2.0;
  const Matrix p = pinv(a, 1e-12);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx(0.0));
  CHECK(p(1, 0) == doctest::Approx(0.0));
  CHECK(p(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("pinv satisfies the Penrose identities") {
  const Matrix a = random_matrix(3, 7, 21);
  const Matrix p = pinv(a);
  const double scale = a.frobenius_norm();

  Matrix apa = matmul(matmul(a, p), a);
  apa -= a;
  CHECK(apa.frobenius_norm() < 1e-8 * scale);

  Matrix pap = matmul(matmul(p, a), p);
  pap -= p;
  CHECK(pap.frobenius_norm() < 1e-8 * scale);
}

TEST_CASE("pinv is an involution on full-rank square matrices") {
  const Matrix a = random_matrix(5, 5, 33);
  Matrix back = pinv(pinv(a));
  back -= a;
  CHECK(back.frobenius_norm() < 1e-8 * a.frobenius_norm());
}

TEST_CASE("eig2x2 of a rotation gives a conjugate pair") {
  const Eig2x2 e = eig2x2(Matrix::from_rows({{0.0, -1.0}, {1.0, 0.0}}));
  CHECK(e.first.real() == doctest::Approx(0.0));
  CHECK(e.first.imag() == doctest::Approx(1.0));
  CHECK(e.second.imag() == doctest::Approx(-1.0));
}

TEST_CASE("eig2x2 of a diagonal sorts by real part") {
  const Eig2x2 e = eig2x2(Matrix::from_rows({{2.0, 0.0}, {0.0, 3.0}}));
  CHECK(e.first.real() == doctest::Approx(3.0));
  CHECK(e.second.real() == doctest::Approx(2.0));
}

TEST_CASE("eig2x2 matches the recharge-oscillator critical point") {
  // trace 0, det 0.09375 at the critical coupling.
  const Matrix j = Matrix::from_rows({{-0.25, -(2.0 / 3.0) * 0.125 * 2.5},
                                      {0.75, 0.75 * (2.0 / 3.0) * 2.5 - 1.0}});
  const Eig2x2 e = eig2x2(j);
  CHECK(std::abs(e.first.real()) < 1e-12);
  CHECK(e.first.imag() == doctest::Approx(std::sqrt(0.09375)).epsilon(1e-10));
  CHECK(e.first.imag() == doctest::Approx(0.3062).epsilon(1e-3));
}

TEST_CASE("eig2x2 satisfies the characteristic polynomial") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix a = random_matrix(2, 2, 100 + seed);
    const double tr = a(0, 0) + a(1, 1);
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    for (const std::complex<double>& lambda : {eig2x2(a).first, eig2x2(a).second}) {
      const std::complex<double> residual = lambda * lambda - tr * lambda + det;
      CHECK(std::abs(residual) < 1e-12 * std::max(1.0, std::abs(det)));
    }
  }
}

TEST_CASE("standard_normal sanity bounds") {
  SeededRng rng(0);
  const std::size_t n = 10000;
  const std::vector<double> draws = standard_normal(rng, n);
  double mean = 0.0;
  for (double x : draws) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : draws) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 8.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("identical seeds give identical streams") {
  SeededRng a(42), b(42);
  const std::vector<double> xa = standard_normal(a, 100);
  const std::vector<double> xb = standard_normal(b, 100);
  for (std::size_t i = 0; i < xa.size(); ++i) CHECK(xa[i] == xb[i]);
}

TEST_CASE("different seeds diverge immediately") {
  SeededRng a(0), b(1);
  CHECK(a.normal() != b.normal());
}

TEST_CASE("svd is reproducible bit for bit") {
  const Matrix a = random_matrix(8, 5, 7);
  const SvdResult f1 = svd(a);
  const SvdResult f2 = svd(a);
  for (std::size_t k = 0; k < f1.singular_values.size(); ++k)
    CHECK(f1.singular_values[k] == f2.singular_values[k]);
  for (std::size_t i = 0; i < f1.u.size(); ++i) CHECK(f1.u.data()[i] == f2.u.data()[i]);
}

TEST_CASE("sym_eig reconstructs and matches svd spectrum") {
  for (std::uint64_t seed : {5u, 6u}) {
    const Matrix b = random_matrix(12, 8, seed);
    const Matrix g = gram(b);  // SPD-ish 12x12? gram gives B B^T: 12x12, PSD rank 8
    const SymEig e = sym_eig(g);
    CHECK(orthonormality_defect(e.vectors) < 1e-9);

    Matrix rec(g.rows(), g.cols(), 0.0);
    for (std::size_t k = 0; k < e.values.size(); ++k)
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
          rec(i, j) += e.values[k] * e.vectors(i, k) * e.vectors(j, k);
    rec -= g;
    CHECK(rec.frobenius_norm() < 1e-9 * g.frobenius_norm());

    const SvdResult f = svd(b);
    for (std::size_t k = 0; k < f.singular_values.size(); ++k)
      CHECK(std::sqrt(std::max(e.values[k], 0.0)) ==
            doctest::Approx(f.singular_values[k]).epsilon(1e-8));
  }
}

TEST_CASE("permutation shuffles every index exactly once") {
  SeededRng rng(3);
  const std::vector<std::size_t> p = rng.permutation(100);
  std::vector<int> seen(100, 0);
  for (std::size_t v : p) seen[v]++;
  for (int c : seen) CHECK(c == 1);
}
