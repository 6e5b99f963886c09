#include "sepdetect/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sepdetect/error.hpp"

namespace sepdetect {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ValidationError("matrix data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
  }
}

void Matrix::append_row(std::span<const double> r) {
  if (rows_ == 0 && cols_ == 0) cols_ = r.size();
  if (r.size() != cols_) {
    throw ValidationError("row length " + std::to_string(r.size()) + " != " +
                          std::to_string(cols_));
  }
  data_.insert(data_.end(), r.begin(), r.end());
  ++rows_;
}

void require_finite(std::span<const double> v, std::string_view what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw ValidationError(std::string(what) + ": non-finite entry at index " +
                            std::to_string(i));
    }
  }
}

Vector stable_softmax(std::span<const double> v) {
  if (v.empty()) throw ValidationError("softmax of empty vector");
  require_finite(v, "softmax input");
  const double m = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw ValidationError("log_sum_exp of empty vector");
  require_finite(v, "log_sum_exp input");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ValidationError("argmax of empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("distance between vectors of length " + std::to_string(a.size()) +
                          " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw ValidationError("uniform_index over empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Vector gaussian_sample(Rng& rng, double mean, double std_dev, std::size_t n) {
  if (!(std_dev >= 0.0) || !std::isfinite(std_dev) || !std::isfinite(mean)) {
    throw ValidationError("gaussian_sample: std must be finite and >= 0");
  }
  Vector out(n);
  for (double& x : out) x = mean + std_dev * rng.normal();
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sepdetect
