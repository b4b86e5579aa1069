#include "kausal/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kausal {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

std::vector<double> Matrix::col(std::size_t j) const {
  std::vector<double> v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

void Matrix::set_col(std::size_t j, std::span<const double> v) {
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw std::invalid_argument("Matrix::operator-=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols(), 0.0);
  // ikj order keeps the inner loop contiguous in b and c.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * c.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_abt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * a.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.data() + j * b.cols();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix matmul_atb(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_atb: inner dimensions differ");
  Matrix c(a.cols(), b.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.data() + k * a.cols();
    const double* bk = b.data() + k * b.cols();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.data() + i * c.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix gram(const Matrix& a) {
  Matrix g(a.rows(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * a.cols();
    for (std::size_t j = 0; j <= i; ++j) {
      const double* aj = a.data() + j * a.cols();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * aj[k];
      g(i, j) = s;
      g(j, i) = s;
    }
  }
  return g;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<double> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * a.cols();
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * x[k];
    y[i] = s;
  }
  return y;
}

namespace {

// One-sided Jacobi on a tall matrix held column-major in `w` (m rows,
// n columns, m >= n). Rotates column pairs until all are mutually
// orthogonal; the right rotations accumulate in `v` (n x n, column-major).
void jacobi_columns(std::vector<double>& w, std::vector<double>& v, std::size_t m,
                    std::size_t n) {
  v.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) v[j * n + j] = 1.0;

  constexpr int kMaxSweeps = 100;
  const double eps = 1e-15;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* wp = w.data() + p * m;
        double* wq = w.data() + q * m;
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          app += wp[i] * wp[i];
          aqq += wq[i] * wq[i];
          apq += wp[i] * wq[i];
        }
        if (std::abs(apq) <= eps * std::sqrt(app * aqq)) continue;
        converged = false;

        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t i = 0; i < m; ++i) {
          const double a = wp[i], b = wq[i];
          wp[i] = c * a - s * b;
          wq[i] = s * a + c * b;
        }
        double* vp = v.data() + p * n;
        double* vq = v.data() + q * n;
        for (std::size_t i = 0; i < n; ++i) {
          const double a = vp[i], b = vq[i];
          vp[i] = c * a - s * b;
          vq[i] = s * a + c * b;
        }
      }
    }
    if (converged) return;
  }
  throw std::runtime_error("svd: Jacobi iteration did not converge within 100 sweeps for " +
                           std::to_string(m) + "x" + std::to_string(n) + " matrix");
}

// Orthonormal fill-in for U columns whose singular value vanished.
void complete_basis(Matrix& u, std::size_t from_col) {
  const std::size_t m = u.rows();
  const std::size_t r = u.cols();
  std::size_t cursor = 0;
  for (std::size_t j = from_col; j < r; ++j) {
    for (; cursor <= m; ++cursor) {
      if (cursor == m)
        throw std::runtime_error("svd: failed to complete orthonormal basis");
      std::vector<double> cand(m, 0.0);
      cand[cursor] = 1.0;
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += u(i, k) * cand[i];
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, k);
      }
      double norm = 0.0;
      for (double x : cand) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / norm;
        ++cursor;
        break;
      }
    }
  }
}

SvdResult svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();

  // Work matrix, column-major so rotations run over contiguous memory.
  std::vector<double> w(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) w[j * m + i] = a(i, j);

  std::vector<double> v;
  jacobi_columns(w, v, m, n);

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    const double* wj = w.data() + j * m;
    for (std::size_t i = 0; i < m; ++i) s += wj[i] * wj[i];
    sigma[j] = std::sqrt(s);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out;
  out.u = Matrix(m, n);
  out.vt = Matrix(n, n);
  out.singular_values.resize(n);

  const double tiny = sigma.empty() ? 0.0 : sigma[order[0]] * 1e-300;
  std::size_t rank_end = n;
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    out.singular_values[jj] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.vt(jj, i) = v[j * n + i];
    if (sigma[j] > tiny && sigma[j] > 0.0) {
      const double inv = 1.0 / sigma[j];
      for (std::size_t i = 0; i < m; ++i) out.u(i, jj) = w[j * m + i] * inv;
    } else if (rank_end == n) {
      rank_end = jj;
    }
  }
  if (rank_end < n) complete_basis(out.u, rank_end);
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) throw std::invalid_argument("svd: empty matrix");
  if (!a.all_finite()) throw std::invalid_argument("svd: non-finite entries");
  if (a.rows() >= a.cols()) return svd_tall(a);
  // Fat matrix: factor the transpose and swap the roles of U and V.
  SvdResult t = svd_tall(a.transposed());
  SvdResult out;
  out.singular_values = std::move(t.singular_values);
  out.u = t.vt.transposed();
  out.vt = t.u.transposed();
  return out;
}

Matrix pinv(const Matrix& a, double rel_tol) {
  if (rel_tol < 0.0) throw std::invalid_argument("pinv: rel_tol must be non-negative");
  const SvdResult f = svd(a);
  const double smax = f.singular_values.empty() ? 0.0 : f.singular_values.front();
  const double cut = rel_tol * smax;

  // A+ = V * diag(1/sigma) * U^T, dropping truncated directions.
  const std::size_t r = f.singular_values.size();
  Matrix result(a.cols(), a.rows(), 0.0);
  for (std::size_t k = 0; k < r; ++k) {
    const double s = f.singular_values[k];
    if (s <= cut || s == 0.0) continue;
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double vik = f.vt(k, i) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < a.rows(); ++j) result(i, j) += vik * f.u(j, k);
    }
  }
  return result;
}

namespace {

// Householder reduction of a symmetric matrix to tridiagonal form,
// accumulating the transformation in z (classic tred2).
void tridiagonalize(Matrix& z, std::vector<double>& d, std::vector<double>& e) {
  const std::size_t n = z.rows();
  d.assign(n, 0.0);
  e.assign(n, 0.0);

  for (std::size_t i = n - 1; i >= 1; --i) {
    const std::size_t l = i - 1;
    double h = 0.0;
    double scale = 0.0;
    if (i > 1) {
      for (std::size_t k = 0; k <= l; ++k) scale += std::abs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = (f >= 0.0 ? -std::sqrt(h) : std::sqrt(h));
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (std::size_t k = 0; k <= j; ++k) g += z(j, k) * z(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          f = z(i, j);
          e[j] = g = e[j] - hh * f;
          for (std::size_t k = 0; k <= j; ++k) z(j, k) -= f * e[k] + g * z(i, k);
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }

  d[0] = 0.0;
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (std::size_t j = 0; j < i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < i; ++k) g += z(i, k) * z(k, j);
        for (std::size_t k = 0; k < i; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) {
      z(j, i) = 0.0;
      z(i, j) = 0.0;
    }
  }
}

// Implicit-shift QL on the tridiagonal (d, e), rotating the columns of z
// along (classic tqli).
void ql_implicit(std::vector<double>& d, std::vector<double>& e, Matrix& z) {
  const std::size_t n = d.size();
  if (n == 0) return;
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double scale = 0.0;
  for (double v : d) scale = std::max(scale, std::abs(v));
  for (double v : e) scale = std::max(scale, std::abs(v));
  const double floor = 2.3e-16 * scale;

  for (std::size_t l = 0; l < n; ++l) {
    int iterations = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= floor || std::abs(e[m]) <= 2.3e-16 * dd) break;
      }
      if (m != l) {
        if (++iterations == 100)
          throw std::runtime_error("sym_eig: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
        double s = 1.0, c = 1.0, p = 0.0;
        bool deflated_early = false;
        for (std::size_t i = m; i-- > l;) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            deflated_early = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (std::size_t k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (deflated_early) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace

SymEig sym_eig(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("sym_eig: matrix must be square");
  if (a.rows() == 0) throw std::invalid_argument("sym_eig: empty matrix");
  if (!a.all_finite()) throw std::invalid_argument("sym_eig: non-finite entries");

  const std::size_t n = a.rows();
  Matrix z = a;
  std::vector<double> d, e;
  if (n == 1) {
    return SymEig{{a(0, 0)}, Matrix::identity(1)};
  }
  tridiagonalize(z, d, e);
  ql_implicit(d, e, z);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] > d[y]; });

  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t jj = 0; jj < n; ++jj) {
    out.values[jj] = d[order[jj]];
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, jj) = z(i, order[jj]);
  }
  return out;
}

Eig2x2 eig2x2(const Matrix& a) {
  if (a.rows() != 2 || a.cols() != 2) throw std::invalid_argument("eig2x2: matrix must be 2x2");
  if (!a.all_finite()) throw std::invalid_argument("eig2x2: non-finite entries");

  const double tr = a(0, 0) + a(1, 1);
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const double disc = tr * tr - 4.0 * det;

  Eig2x2 out;
  if (disc >= 0.0) {
    const double root = std::sqrt(disc);
    out.first = {(tr + root) / 2.0, 0.0};
    out.second = {(tr - root) / 2.0, 0.0};
  } else {
    const double im = std::sqrt(-disc) / 2.0;
    out.first = {tr / 2.0, im};
    out.second = {tr / 2.0, -im};
  }
  return out;
}

}  // namespace kausal
