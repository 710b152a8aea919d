#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <random>
#include <vector>

#include "trg/tensor.hpp"

namespace testutil {

inline trg::Tensor random_tensor(trg::Shape shape, std::mt19937_64& rng, double scale = 1.0,
                                 bool grad = false) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(trg::numel(shape));
  for (auto& x : v) x = dist(rng);
  return trg::Tensor(std::move(shape), std::move(v), grad);
}

// Rows drawn from a Dirichlet(1) so every entry is positive and rows sum to 1.
inline trg::Tensor random_stochastic(std::size_t m, std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += v[i * n + j] = e(rng);
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= s;
  }
  return trg::Tensor({m, n}, std::move(v));
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool same_bits(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

// Plain-loop reference implementations.
inline std::vector<double> softmax_row(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  std::vector<double> out(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += out[i] = std::exp(x[i] - m);
  for (auto& v : out) v /= s;
  return out;
}

inline double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  return s;
}

inline std::vector<double> row(const trg::Tensor& t, std::size_t i) {
  const std::size_t n = t.dim(t.rank() - 1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(i * n),
          t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n)};
}

}  // namespace testutil
