#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "trg/tensor.hpp"
#include "trg/tokenization.hpp"

namespace trg {

// Square boolean matrix, row-major.
class NeighborMask {
 public:
  NeighborMask() = default;
  explicit NeighborMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool on = true) { bits_[i * n_ + j] = on ? 1 : 0; }
  std::size_t degree(std::size_t i) const;
  std::size_t edge_count() const;  // undirected edges
  Tensor as_tensor() const;

  friend bool operator==(const NeighborMask&, const NeighborMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

// How the directed k-NN picks are symmetrized.
enum class NeighborRule {
  union_of_picks,  // edge if either endpoint picked the other
  mutual,          // edge only if both did
};

struct SigmaPolicy {
  enum class Kind { median, fixed };
  Kind kind = Kind::median;
  double value = 1.0;

  static SigmaPolicy median() { return {Kind::median, 0.0}; }
  static SigmaPolicy fixed(double sigma) { return {Kind::fixed, sigma}; }
  std::string str() const;
  static SigmaPolicy parse(const std::string& text);
};

struct TokenGraph {
  Tensor adjacency;  // [S x S], Gaussian weights on edges, 0 elsewhere
  NeighborMask neighbor_mask;
  std::size_t k = 0;
  double sigma = 1.0;
  TokenBatch tokens;
};

Tensor pairwise_sq_distances(const Tensor& tokens);

// Each node picks its k nearest other nodes (ties -> lower index), then the
// picks are symmetrized per `rule`. ConfigError unless 1 <= k < S.
NeighborMask knn_select(const Tensor& dist2, std::size_t k,
                        NeighborRule rule = NeighborRule::union_of_picks);

// exp(-dist2 / (2 sigma)) on masked entries, 0 elsewhere. Differentiable in dist2.
Tensor gaussian_adjacency(const Tensor& dist2, const NeighborMask& mask, double sigma);

// Median of the squared distances over masked pairs; the bandwidth the
// median policy assigns. Falls back to 1 when every masked distance is 0.
double median_masked_distance(const Tensor& dist2, const NeighborMask& mask);

TokenGraph build_token_graph(const TokenBatch& batch, std::size_t k, SigmaPolicy sigma,
                             NeighborRule rule = NeighborRule::union_of_picks);

// Edge list "i,j,weight" with i < j, 17 significant digits.
void write_edge_csv(const TokenGraph& graph, std::ostream& os);

}  // namespace trg
