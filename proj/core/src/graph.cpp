#include "trg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "trg/errors.hpp"
#include "trg/ops.hpp"

namespace trg {

std::size_t NeighborMask::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < n_; ++j) d += bits_[i * n_ + j];
  return d;
}

std::size_t NeighborMask::edge_count() const {
  std::size_t e = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j) e += bits_[i * n_ + j];
  return e;
}

Tensor NeighborMask::as_tensor() const {
  std::vector<double> v(bits_.begin(), bits_.end());
  return Tensor({n_, n_}, std::move(v));
}

std::string SigmaPolicy::str() const {
  if (kind == Kind::median) return "median";
  std::ostringstream os;
  os << std::setprecision(17) << value;
  return os.str();
}

SigmaPolicy SigmaPolicy::parse(const std::string& text) {
  if (text == "median") return median();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || used == 0) throw ConfigError("sigma must be 'median' or a number, got '" + text + "'");
  if (!(v > 0.0)) throw ConfigError("sigma must be positive, got " + text);
  return fixed(v);
}

Tensor pairwise_sq_distances(const Tensor& tokens) { return ops::pairwise_sq_distances(tokens); }

NeighborMask knn_select(const Tensor& dist2, std::size_t k, NeighborRule rule) {
  if (dist2.rank() != 2 || dist2.dim(0) != dist2.dim(1)) {
    throw DimensionError("knn_select: expected a square distance matrix, got " + shape_str(dist2.shape()));
  }
  const std::size_t s = dist2.dim(0);
  if (k < 1 || k >= s) {
    throw ConfigError("k-NN needs 1 <= k < S, got k=" + std::to_string(k) + ", S=" + std::to_string(s));
  }
  const auto d = dist2.data();
  NeighborMask picks(s);
  std::vector<std::size_t> order(s - 1);
  for (std::size_t i = 0; i < s; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < s; ++j)
      if (j != i) order[w++] = j;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = d[i * s + a], db = d[i * s + b];
                        return da < db || (da == db && a < b);
                      });
    for (std::size_t r = 0; r < k; ++r) picks.set(i, order[r]);
  }
  NeighborMask mask(s);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const bool on = rule == NeighborRule::union_of_picks ? (picks(i, j) || picks(j, i))
                                                           : (picks(i, j) && picks(j, i));
      mask.set(i, j, on);
    }
  }
  return mask;
}

Tensor gaussian_adjacency(const Tensor& dist2, const NeighborMask& mask, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("Gaussian bandwidth sigma must be positive");
  if (dist2.rank() != 2 || dist2.dim(0) != mask.size() || dist2.dim(1) != mask.size()) {
    throw DimensionError("gaussian_adjacency: distances " + shape_str(dist2.shape()) +
                         " vs mask of size " + std::to_string(mask.size()));
  }
  return ops::mul(ops::exp(ops::scale(dist2, -1.0 / (2.0 * sigma))), mask.as_tensor());
}

double median_masked_distance(const Tensor& dist2, const NeighborMask& mask) {
  std::vector<double> values;
  const std::size_t s = mask.size();
  const auto d = dist2.data();
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j)
      if (mask(i, j)) values.push_back(d[i * s + j]);
  if (values.empty()) return 1.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double med = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return med > 0.0 ? med : 1.0;
}

TokenGraph build_token_graph(const TokenBatch& batch, std::size_t k, SigmaPolicy sigma,
                             NeighborRule rule) {
  if (batch.tokens.rank() != 2) {
    throw DimensionError("build_token_graph: tokens must be [S x D], got " + shape_str(batch.tokens.shape()));
  }
  TokenGraph g;
  g.k = k;
  g.tokens = batch;
  auto dist2 = pairwise_sq_distances(batch.tokens);
  g.neighbor_mask = knn_select(dist2, k, rule);
  g.sigma = sigma.kind == SigmaPolicy::Kind::median ? median_masked_distance(dist2, g.neighbor_mask)
                                                    : sigma.value;
  g.adjacency = gaussian_adjacency(dist2, g.neighbor_mask, g.sigma);
  return g;
}

void write_edge_csv(const TokenGraph& graph, std::ostream& os) {
  os << "i,j,weight\n" << std::setprecision(17);
  const std::size_t s = graph.neighbor_mask.size();
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j)
      if (graph.neighbor_mask(i, j)) os << i << ',' << j << ',' << graph.adjacency.at(i, j) << '\n';
}

}  // namespace trg
