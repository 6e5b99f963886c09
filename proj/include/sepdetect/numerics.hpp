#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace sepdetect {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  void append_row(std::span<const double> r);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws ValidationError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> v, std::string_view what);

// Softmax via max-subtraction; safe for logits of magnitude ~1e3 and beyond.
Vector stable_softmax(std::span<const double> v);

double log_sum_exp(std::span<const double> v);

std::size_t argmax(std::span<const double> v);

double squared_distance(std::span<const double> a, std::span<const double> b);

// Seeded generator. The stream depends only on the seed: mt19937_64 output is
// fixed by the standard, and every derived draw (uniform, index, normal) is
// computed here rather than through the implementation-defined <random>
// distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on {0, ..., n-1}, unbiased (rejection sampling).
  std::size_t uniform_index(std::size_t n);
  // Standard normal, Marsaglia polar method.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Vector gaussian_sample(Rng& rng, double mean, double std_dev, std::size_t n);

// Derives an independent child seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace sepdetect
