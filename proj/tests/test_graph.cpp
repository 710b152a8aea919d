#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "oracles.hpp"
#include "trg/errors.hpp"
#include "trg/graph.hpp"

using namespace trg;
using testutil::random_tensor;

namespace {

TokenBatch as_batch(Tensor tokens) {
  TokenBatch b;
  const std::size_t s = tokens.dim(0);
  b.tokens = std::move(tokens);
  b.instance_index.assign(s, 0);
  b.batch_size = 1;
  return b;
}

Tensor line(std::vector<double> xs) {
  const std::size_t n = xs.size();
  return Tensor({n, 1}, std::move(xs));
}

}  // namespace

TEST_CASE("pairwise squared distances") {
  auto d = pairwise_sq_distances(line({0, 1, 3, 7}));
  CHECK(testutil::row(d, 0) == std::vector<double>{0, 1, 9, 49});
  CHECK(testutil::row(d, 3) == std::vector<double>{49, 36, 16, 0});

  auto same = pairwise_sq_distances(Tensor({3, 2}, {1, 2, 1, 2, 1, 2}));
  for (double v : same.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(1);
  auto t = random_tensor({16, 8}, rng);
  auto dd = pairwise_sq_distances(t);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 8; ++c) acc += (t.at(i, c) - t.at(j, c)) * (t.at(i, c) - t.at(j, c));
      CHECK(dd.at(i, j) == doctest::Approx(acc).epsilon(1e-10));
    }
}

TEST_CASE("knn_select hand examples") {
  SUBCASE("1-D line, k=1") {
    auto mask = knn_select(pairwise_sq_distances(line({0, 1, 3, 7})), 1);
    CHECK(mask.edge_count() == 3);
    CHECK(mask(0, 1));
    CHECK(mask(1, 2));
    CHECK(mask(2, 3));
    CHECK_FALSE(mask(0, 2));
    CHECK_FALSE(mask(1, 3));
    for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(mask(i, i));
  }
  SUBCASE("two tokens") {
    auto mask = knn_select(pairwise_sq_distances(line({2, 5})), 1);
    CHECK(mask.edge_count() == 1);
    CHECK(mask(0, 1));
    CHECK(mask(1, 0));
  }
  SUBCASE("equidistant triangle picks lowest index") {
    Tensor dist({3, 3}, {0, 1, 1, 1, 0, 1, 1, 1, 0});
    auto mask = knn_select(dist, 1);
    // 0 -> 1, 1 -> 0, 2 -> 0
    CHECK(mask(0, 1));
    CHECK(mask(0, 2));
    CHECK_FALSE(mask(1, 2));
    CHECK(knn_select(dist, 1) == mask);
  }
  SUBCASE("mutual rule keeps reciprocated picks") {
    auto mask = knn_select(pairwise_sq_distances(line({0, 1, 3, 7})), 1, NeighborRule::mutual);
    CHECK(mask.edge_count() == 1);
    CHECK(mask(0, 1));
  }
  SUBCASE("k out of range") {
    auto d = pairwise_sq_distances(line({0, 1, 3}));
    CHECK_THROWS_AS(knn_select(d, 3), ConfigError);
    CHECK_THROWS_AS(knn_select(d, 0), ConfigError);
  }
}

TEST_CASE("gaussian adjacency") {
  NeighborMask m(2);
  m.set(0, 1);
  m.set(1, 0);
  auto a = gaussian_adjacency(Tensor({2, 2}, {0, 1, 1, 0}), m, 0.5);
  CHECK(a.at(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(a.at(0, 1) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(a.at(0, 0) == 0.0);

  auto z = gaussian_adjacency(Tensor({2, 2}, {0, 0, 0, 0}), m, 2.0);
  CHECK(z.at(0, 1) == 1.0);

  NeighborMask none(2);
  CHECK(gaussian_adjacency(Tensor({2, 2}, {0, 1, 1, 0}), none, 0.5).at(0, 1) == 0.0);

  CHECK_THROWS_AS(gaussian_adjacency(Tensor({2, 2}, {0, 1, 1, 0}), m, 0.0), ConfigError);
  CHECK_THROWS_AS(gaussian_adjacency(Tensor({2, 2}, {0, 1, 1, 0}), m, -1.0), ConfigError);
  CHECK_THROWS_AS(SigmaPolicy::parse("-2"), ConfigError);
  CHECK_THROWS_AS(SigmaPolicy::parse("wide"), ConfigError);
  CHECK(SigmaPolicy::parse("median").kind == SigmaPolicy::Kind::median);
  CHECK(SigmaPolicy::parse("0.25").value == 0.25);
}

TEST_CASE("build_token_graph structure") {
  std::mt19937_64 rng(2);
  SUBCASE("S = k + 1 is fully connected") {
    auto g = build_token_graph(as_batch(random_tensor({5, 3}, rng)), 4, SigmaPolicy::median());
    CHECK(g.neighbor_mask.edge_count() == 10);
  }
  SUBCASE("deterministic on equal inputs") {
    auto t = random_tensor({20, 4}, rng);
    auto a = build_token_graph(as_batch(t), 3, SigmaPolicy::median());
    auto b = build_token_graph(as_batch(t.clone()), 3, SigmaPolicy::median());
    CHECK(a.neighbor_mask == b.neighbor_mask);
    CHECK(testutil::same_bits(a.adjacency.data(), b.adjacency.data()));
    CHECK(a.sigma == b.sigma);
  }
  SUBCASE("properties over random inputs") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t s = testutil::pick(rng, 2, 30), k = testutil::pick(rng, 1, s - 1);
      auto g = build_token_graph(as_batch(random_tensor({s, 3}, rng)), k, SigmaPolicy::median());
      for (std::size_t i = 0; i < s; ++i) {
        CHECK(g.neighbor_mask.degree(i) >= k);
        CHECK_FALSE(g.neighbor_mask(i, i));
        for (std::size_t j = 0; j < s; ++j) {
          CHECK(g.neighbor_mask(i, j) == g.neighbor_mask(j, i));
          CHECK(g.adjacency.at(i, j) == g.adjacency.at(j, i));
          const double w = g.adjacency.at(i, j);
          CHECK(w >= 0.0);
          CHECK(w <= 1.0);
          CHECK((w > 0.0) == g.neighbor_mask(i, j));
        }
      }
    }
  }
  SUBCASE("uniform scaling keeps the mask and, under the median policy, the weights") {
    for (int trial = 0; trial < 20; ++trial) {
      auto t = random_tensor({24, 4}, rng);
      const double c = std::exp(testutil::pick(rng, 0, 8) - 4.0);
      std::vector<double> scaled(t.data().begin(), t.data().end());
      for (auto& v : scaled) v *= c;
      auto a = build_token_graph(as_batch(t), 3, SigmaPolicy::median());
      auto b = build_token_graph(as_batch(Tensor({24, 4}, scaled)), 3, SigmaPolicy::median());
      CHECK(a.neighbor_mask == b.neighbor_mask);
      CHECK(testutil::max_abs_diff(a.adjacency.data(), b.adjacency.data()) < 1e-12);
    }
  }
  SUBCASE("fixed sigma") {
    auto g = build_token_graph(as_batch(line({0, 1, 3, 7})), 1, SigmaPolicy::fixed(0.5));
    CHECK(g.sigma == 0.5);
    CHECK(g.adjacency.at(0, 1) == doctest::Approx(std::exp(-1.0)));
    CHECK(g.adjacency.at(2, 3) == doctest::Approx(std::exp(-16.0)));
  }
  SUBCASE("median of masked distances") {
    // edges (0,1)=1, (1,2)=4, (2,3)=16 -> median 4
    auto g = build_token_graph(as_batch(line({0, 1, 3, 7})), 1, SigmaPolicy::median());
    CHECK(g.sigma == 4.0);
    auto z = build_token_graph(as_batch(line({2, 2, 2})), 1, SigmaPolicy::median());
    CHECK(z.sigma == 1.0);
  }
}

TEST_CASE("build_token_graph matches the exhaustive builder") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t s = testutil::pick(rng, 6, 40), d = testutil::pick(rng, 1, 8);
    const std::size_t k = std::vector<std::size_t>{1, 3, 5}[trial % 3];
    // integer coordinates produce plenty of distance ties
    std::uniform_int_distribution<int> coord(-2, 2);
    std::vector<double> v(s * d);
    for (auto& x : v) x = coord(rng);
    Tensor t({s, d}, v);
    auto g = build_token_graph(as_batch(t), k, SigmaPolicy::median());
    auto ref = testutil::brute_force_graph(t, k);
    CHECK(g.sigma == ref.sigma);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        CHECK(g.neighbor_mask(i, j) == ref.mask[i][j]);
        CHECK(g.adjacency.at(i, j) == doctest::Approx(ref.adjacency[i][j]).epsilon(1e-12));
      }
  }
}

TEST_CASE("edge csv") {
  auto g = build_token_graph(as_batch(line({0, 1, 3, 7})), 1, SigmaPolicy::fixed(0.5));
  std::ostringstream os;
  write_edge_csv(g, os);
  std::istringstream is(os.str());
  std::string header, l;
  std::getline(is, header);
  CHECK(header == "i,j,weight");
  std::vector<std::string> lines;
  while (std::getline(is, l)) lines.push_back(l);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("0,1,", 0) == 0);
  CHECK(std::stod(lines[0].substr(4)) == std::exp(-1.0));
  CHECK(lines[2].rfind("2,3,", 0) == 0);
}
