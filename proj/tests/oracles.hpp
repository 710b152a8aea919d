#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "trg/tensor.hpp"

namespace testutil {

// O(S^3) k-NN graph: j is among i's picks when fewer than k other nodes
// precede it in (distance, index) order. Union symmetrization, median bandwidth.
struct BruteGraph {
  std::vector<std::vector<bool>> mask;
  std::vector<std::vector<double>> adjacency;
  double sigma = 1.0;
};

inline BruteGraph brute_force_graph(const trg::Tensor& tokens, std::size_t k) {
  const std::size_t s = tokens.dim(0), d = tokens.dim(1);
  std::vector<std::vector<double>> dist(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = tokens.at(i, c) - tokens.at(j, c);
        acc += diff * diff;
      }
      dist[i][j] = acc;
    }
  std::vector<std::vector<bool>> pick(s, std::vector<bool>(s, false));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      if (j == i) continue;
      std::size_t before = 0;
      for (std::size_t l = 0; l < s; ++l) {
        if (l == i || l == j) continue;
        if (dist[i][l] < dist[i][j] || (dist[i][l] == dist[i][j] && l < j)) ++before;
      }
      pick[i][j] = before < k;
    }
  BruteGraph g;
  g.mask.assign(s, std::vector<bool>(s, false));
  std::vector<double> masked;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) {
      g.mask[i][j] = pick[i][j] || pick[j][i];
      if (g.mask[i][j] && i < j) masked.push_back(dist[i][j]);
    }
  std::sort(masked.begin(), masked.end());
  if (!masked.empty()) {
    const std::size_t n = masked.size();
    const double med = n % 2 ? masked[n / 2] : 0.5 * (masked[n / 2 - 1] + masked[n / 2]);
    g.sigma = med > 0.0 ? med : 1.0;
  }
  g.adjacency.assign(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      if (g.mask[i][j]) g.adjacency[i][j] = std::exp(dist[i][j] * (-1.0 / (2.0 * g.sigma)));
  return g;
}

}  // namespace testutil
