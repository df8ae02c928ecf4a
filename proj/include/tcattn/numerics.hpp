#pragma once

// Dense real-valued kernels shared by every other module: a row-major
// matrix, matrix products with a fixed summation order, a masked row
// softmax and a platform-independent random stream.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcattn {

#ifdef TCATTN_FLOAT32
using Real = float;
#else
using Real = double;
#endif

/// Raised for any input that violates an operation's preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Negative infinity, the additive-mask sentinel for a forbidden pair.
Real neg_inf();

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real{0});
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Matrix identity(std::size_t n);
  /// Builds from nested rows; all rows must have the same length.
  static Matrix from_rows(const std::vector<std::vector<Real>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

/// a · b. Each output cell is accumulated left to right over the inner
/// index, so the result is bitwise identical to reference::matmul no
/// matter how many threads run the row loop.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a · bᵀ without materializing the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// aᵀ · b without materializing the transpose.
Matrix matmul_at(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// Row softmax restricted to entries whose mask value is 0. Masked entries
/// come out exactly 0; a row with no allowed entry comes out all zero.
/// Mask entries must be 0 or -inf.
Matrix masked_row_softmax(const Matrix& scores, const Matrix& mask);

/// Same as masked_row_softmax for a single row.
void masked_softmax_row(std::span<const Real> scores, std::span<const Real> mask,
                        std::span<Real> out);

Real dot(std::span<const Real> a, std::span<const Real> b);
Real max_abs_diff(const Matrix& a, const Matrix& b);
Real max_abs_diff(std::span<const Real> a, std::span<const Real> b);

/// Serial loop implementations kept as the reference for the parallel
/// kernels above.
namespace reference {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix masked_row_softmax(const Matrix& scores, const Matrix& mask);
}  // namespace reference

/// Deterministic random stream: std::mt19937_64 (its output sequence is
/// fixed by the C++ standard) with distributions implemented here rather
/// than taken from <random>, whose algorithms vary between libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, Real lo = -1, Real hi = 1);

/// Threads used by the OpenMP kernels; 0 restores the runtime default.
void set_num_threads(int n);
int num_threads();

}  // namespace tcattn
