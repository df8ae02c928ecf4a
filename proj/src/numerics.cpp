#include "tcattn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace tcattn {

Real neg_inf() { return -std::numeric_limits<Real>::infinity(); }

Matrix::Matrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidInput("Matrix: data length " + std::to_string(data_.size()) +
                       " != rows*cols " + std::to_string(rows * cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<Real>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw InvalidInput("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) +
                       "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                       "x" + std::to_string(b.cols()));
  }
}

void require_mask_values(const Matrix& mask) {
  for (Real v : mask.data()) {
    if (!(v == Real{0} || (std::isinf(v) && v < 0))) {
      throw InvalidInput("masked_row_softmax: mask entries must be 0 or -inf");
    }
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                       " vs " + std::to_string(b.rows()) + ")");
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  Matrix out(a.rows(), m);
#pragma omp parallel for schedule(static) if (n * inner * m > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    // Accumulate each output row over k in ascending order. The i-k-j loop
    // order keeps every cell's summation sequence identical to the
    // reference's k loop.
    Real* orow = &out(static_cast<std::size_t>(i), 0);
    for (std::size_t k = 0; k < inner; ++k) {
      const Real aik = a(static_cast<std::size_t>(i), k);
      const Real* brow = &b.data()[k * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidInput("matmul_bt: column counts differ");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows());
  Matrix out(a.rows(), b.rows());
#pragma omp parallel for schedule(static) if (n * a.cols() * b.rows() > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ar = a.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < b.rows(); ++j) out(static_cast<std::size_t>(i), j) = dot(ar, b.row(j));
  }
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("matmul_at: row counts differ");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.cols());
  const std::size_t m = b.cols();
  Matrix out(a.cols(), m);
#pragma omp parallel for schedule(static) if (n * a.rows() * m > 32768)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Real* orow = &out(static_cast<std::size_t>(i), 0);
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const Real aki = a(k, static_cast<std::size_t>(i));
      const Real* brow = &b.data()[k * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

void masked_softmax_row(std::span<const Real> scores, std::span<const Real> mask,
                        std::span<Real> out) {
  const std::size_t n = scores.size();
  Real peak = neg_inf();
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j] == Real{0}) peak = std::max(peak, scores[j]);
  }
  if (std::isinf(peak)) {
    // no allowed entry
    std::fill(out.begin(), out.end(), Real{0});
    return;
  }
  Real sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j] == Real{0}) {
      out[j] = std::exp(scores[j] - peak);
      sum += out[j];
    } else {
      out[j] = 0;
    }
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
}

Matrix masked_row_softmax(const Matrix& scores, const Matrix& mask) {
  require_same_shape(scores, mask, "masked_row_softmax");
  require_mask_values(mask);
  Matrix out(scores.rows(), scores.cols());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(scores.rows());
#pragma omp parallel for schedule(static) if (scores.size() > 16384)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    masked_softmax_row(scores.row(r), mask.row(r), out.row(r));
  }
  return out;
}

Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Real max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw InvalidInput("max_abs_diff: length mismatch");
  Real worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) continue;  // covers matching infinities
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

Real max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  return max_abs_diff(std::span<const Real>(a.data()), std::span<const Real>(b.data()));
}

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Real s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

Matrix masked_row_softmax(const Matrix& scores, const Matrix& mask) {
  require_same_shape(scores, mask, "masked_row_softmax");
  require_mask_values(mask);
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    masked_softmax_row(scores.row(i), mask.row(i), out.row(i));
  }
  return out;
}

}  // namespace reference

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidInput("Rng::below: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, Real lo, Real hi) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = static_cast<Real>(rng.uniform(lo, hi));
  return m;
}

void set_num_threads(int n) {
#if defined(_OPENMP)
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : default_threads);
#else
  (void)n;
#endif
}

int num_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace tcattn
