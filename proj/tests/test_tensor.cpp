#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "trg/errors.hpp"
#include "trg/gradcheck.hpp"
#include "trg/ops.hpp"

using namespace trg;
using testutil::random_tensor;

TEST_CASE("tensor construction checks shape against data") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 0}, std::vector<double>{}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6);
  CHECK(shape_str(t.shape()) == "[2x3]");
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    Tensor i2({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    auto c = ops::matmul(i2, a);
    CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("permutation") {
    Tensor p({2, 2}, {0, 1, 1, 0});
    auto c = ops::matmul(Tensor({2, 2}, {1, 0, 0, 1}), p);
    CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{0, 1, 1, 0});
  }
  SUBCASE("triple loop oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
      auto c = ops::matmul(a, b);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
          CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    }
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax_rows") {
  auto s = ops::softmax_rows(Tensor({1, 2}, {0, 0}));
  CHECK(s.at(0) == doctest::Approx(0.5));
  s = ops::softmax_rows(Tensor({1, 2}, {std::log(2.0), 0}));
  CHECK(s.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(s.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  s = ops::softmax_rows(Tensor({1, 2}, {1000, 0}));
  CHECK(std::isfinite(s.at(0)));
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) >= 0.0);
  CHECK_THROWS_AS(ops::softmax_rows(Tensor({1, 2}, {NAN, 0})), NumericError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({4, 7}, rng, 3.0);
    auto y = ops::softmax_rows(x);
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y.at(i, j) > 0.0);
        CHECK(y.at(i, j) < 1.0);
        sum += y.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("kl_rows") {
  std::mt19937_64 rng(7);
  auto p = testutil::random_stochastic(4, 5, rng);
  CHECK(ops::kl_rows(p, p).item() == 0.0);
  CHECK(ops::kl_rows(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0.5, 0.5})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  SUBCASE("direct summation oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      auto a = testutil::random_stochastic(4, 5, rng), b = testutil::random_stochastic(4, 5, rng);
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) s += testutil::kl_oracle(testutil::row(a, i), testutil::row(b, i));
      CHECK(ops::kl_rows(a, b).item() == doctest::Approx(s / 4.0).epsilon(1e-13));
    }
  }
  SUBCASE("Gibbs inequality") {
    for (int trial = 0; trial < 1000; ++trial) {
      auto a = testutil::random_stochastic(2, 3, rng), b = testutil::random_stochastic(2, 3, rng);
      CHECK(ops::kl_rows(a, b).item() >= 0.0);
    }
  }
  SUBCASE("support violations") {
    CHECK_THROWS_AS(ops::kl_rows(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {1, 0}), 0.0), NumericError);
    CHECK(std::isfinite(ops::kl_rows(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {1, 0})).item()));
    CHECK_THROWS_AS(ops::kl_rows(Tensor({1, 2}, {0.7, 0.7}), Tensor({1, 2}, {0.5, 0.5})), NumericError);
  }
}

TEST_CASE("mse") {
  Tensor a({2}, {0, 0}), b({2}, {1, 1});
  CHECK(ops::mse(a, a).item() == 0.0);
  CHECK(ops::mse(a, b).item() == 1.0);
  CHECK_THROWS_AS(ops::mse(a, Tensor::zeros({3})), DimensionError);
  std::mt19937_64 rng(9);
  auto x = random_tensor({3, 3}, rng), y = random_tensor({3, 3}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i) s += (x.at(i) - y.at(i)) * (x.at(i) - y.at(i));
  CHECK(ops::mse(x, y).item() == doctest::Approx(s / 9.0).epsilon(1e-14));
}

TEST_CASE("backward") {
  SUBCASE("sum gives ones") {
    Tensor x = Tensor::full({2, 3, 2}, 0.3, true);
    backward(ops::sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("mse against zero") {
    Tensor x({1}, {3}, true);
    backward(ops::mse(x, Tensor::zeros({1})));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("non-scalar loss is a usage error") {
    Tensor x({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(ops::scale(x, 2.0)), UsageError);
  }
  SUBCASE("every requires_grad leaf gets a gradient of its own shape") {
    Tensor x({2, 2}, {1, 2, 3, 4}, true);
    Tensor unused_branch({2, 2}, {1, 1, 1, 1}, true);
    auto loss = ops::sum(ops::add(ops::square(x), ops::scale(unused_branch, 0.0)));
    backward(loss);
    CHECK(x.grad().size() == 4);
    CHECK(unused_branch.grad().size() == 4);
    CHECK(unused_branch.grad()[0] == 0.0);
  }
  SUBCASE("tape is consumed") {
    Tensor x({1}, {2}, true);
    auto loss = ops::sum(ops::square(x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), UsageError);
  }
  SUBCASE("shared subexpressions are visited once") {
    Tensor x({1}, {3}, true);
    auto y = ops::square(x);
    backward(ops::sum(ops::add(y, y)));  // d/dx 2x^2 = 4x
    CHECK(x.grad()[0] == doctest::Approx(12.0));
  }
  SUBCASE("linearity: gradient of a sum is the sum of gradients") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      auto base = random_tensor({3, 4}, rng);
      auto t = testutil::random_stochastic(3, 4, rng);
      auto make = [&] { return Tensor(base.shape(), {base.data().begin(), base.data().end()}, true); };
      auto f1 = [&](const Tensor& x) { return ops::mse(ops::softmax_rows(x), t); };
      auto f2 = [&](const Tensor& x) { return ops::sum(ops::exp(ops::scale(x, 0.3))); };
      auto x1 = make(), x2 = make(), x3 = make();
      backward(f1(x1));
      backward(f2(x2));
      backward(ops::add(f1(x3), f2(x3)));
      for (std::size_t i = 0; i < 12; ++i) {
        CHECK(x3.grad()[i] == doctest::Approx(x1.grad()[i] + x2.grad()[i]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("no recording under NoGradGuard") {
    Tensor x({1}, {2}, true);
    NoGradGuard g;
    auto y = ops::square(x);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("grad_check") {
  SUBCASE("exact for a quadratic") {
    Tensor x({3}, {0.5, -1.0, 2.0}, true);
    const auto r = grad_check([&] { return ops::sum(ops::square(x)); }, {x});
    CHECK(r.max_rel_error <= 1e-10);
    CHECK(r.coordinates == 3);
  }
  SUBCASE("detects a corrupted gradient") {
    Tensor x({3}, {0.5, -1.0, 2.0}, true);
    std::vector<std::vector<double>> wrong = {{1.0, -2.0, 4.0 * 1.01}};
    const auto r = grad_check_against([&] { return ops::sum(ops::square(x)); }, {x}, wrong);
    CHECK(r.max_rel_error > 1e-3);
    CHECK(r.worst_index == 2);
  }
}

namespace {

// Each primitive on random inputs, checked against central differences.
void check_primitive(const char* name, std::size_t seeds,
                     const std::function<Tensor(const Tensor&, std::mt19937_64&)>& build,
                     trg::Shape shape, double scale = 1.0, double offset = 0.0) {
  for (std::size_t s = 1; s <= seeds; ++s) {
    std::mt19937_64 rng(s * 7919);
    auto x = random_tensor(shape, rng, scale, true);
    if (offset != 0.0) {
      for (auto& v : x.mutable_data()) v = std::abs(v) + offset;
    }
    std::mt19937_64 aux_seed(s);
    const auto aux = aux_seed();
    const auto r = grad_check(
        [&] {
          std::mt19937_64 local(aux);
          return build(x, local);
        },
        {x});
    INFO(name << " seed " << s);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

}  // namespace

TEST_CASE("primitive gradients match central differences over 20 seeds") {
  auto weights = [](const Tensor& x, std::mt19937_64& rng) { return random_tensor(x.shape(), rng); };
  auto wsum = [&](const Tensor& y, std::mt19937_64& rng) { return ops::sum(ops::mul(y, weights(y, rng))); };
  check_primitive("matmul", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::matmul(x, random_tensor({4, 2}, r)), r);
  }, {3, 4});
  check_primitive("bmm", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::bmm(x, random_tensor({2, 4, 3}, r)), r);
  }, {2, 3, 4});
  check_primitive("transpose", 20, [&](const Tensor& x, std::mt19937_64& r) { return wsum(ops::transpose(x), r); },
                  {3, 4});
  check_primitive("sub", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::sub(x, ops::square(x)), r);
  }, {5});
  check_primitive("add_bias", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::add_bias(random_tensor({3, 4}, r), ops::reshape(x, {4})), r);
  }, {4});
  check_primitive("relu", 20, [&](const Tensor& x, std::mt19937_64& r) { return wsum(ops::relu(x), r); }, {6});
  check_primitive("exp", 20, [&](const Tensor& x, std::mt19937_64& r) { return wsum(ops::exp(x), r); }, {6});
  check_primitive("log", 20, [&](const Tensor& x, std::mt19937_64& r) { return wsum(ops::log(x), r); }, {6}, 1.0,
                  0.5);
  check_primitive("mean", 20, [&](const Tensor& x, std::mt19937_64&) { return ops::mean(ops::square(x)); }, {2, 3});
  check_primitive("gather", 20, [&](const Tensor& x, std::mt19937_64& r) {
    std::vector<std::int64_t> idx = {0, 3, -1, 3, 5, 1, 2, 2};
    return wsum(ops::gather(x, idx, {8}), r);
  }, {6});
  check_primitive("softmax_rows", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::softmax_rows(x), r);
  }, {3, 5});
  check_primitive("log_softmax_rows", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::log_softmax_rows(x), r);
  }, {3, 5});
  check_primitive("kl_rows", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return ops::kl_rows(ops::softmax_rows(x), testutil::random_stochastic(3, 5, r));
  }, {3, 5});
  check_primitive("kl_rows second argument", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return ops::kl_rows(testutil::random_stochastic(3, 5, r), ops::softmax_rows(x));
  }, {3, 5});
  check_primitive("kl_rows_from_logits", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return ops::add(ops::kl_rows_from_logits(x, random_tensor({3, 5}, r)),
                    ops::kl_rows_from_logits(random_tensor({3, 5}, r), x));
  }, {3, 5});
  check_primitive("mse", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return ops::mse(x, random_tensor({3, 5}, r));
  }, {3, 5});
  check_primitive("cross_entropy", 20, [&](const Tensor& x, std::mt19937_64&) {
    const std::vector<int> y = {0, 4, 2};
    return ops::cross_entropy(x, y);
  }, {3, 5});
  check_primitive("row_normalize", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::row_normalize(x), r);
  }, {3, 5});
  check_primitive("pairwise_sq_distances", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::pairwise_sq_distances(x), r);
  }, {6, 3});
  check_primitive("diagonal", 20, [&](const Tensor& x, std::mt19937_64& r) {
    return wsum(ops::diagonal(x), r);
  }, {4, 4});
}

TEST_CASE("cross_entropy rejects labels outside [0, K)") {
  const std::vector<int> bad = {0, 5};
  CHECK_THROWS_AS(ops::cross_entropy(Tensor::zeros({2, 5}), bad), UsageError);
}

TEST_CASE("pairwise_sq_distances") {
  auto d = ops::pairwise_sq_distances(Tensor({4, 1}, {0, 1, 3, 7}));
  CHECK(std::vector<double>{d.at(0, 0), d.at(0, 1), d.at(0, 2), d.at(0, 3)} == std::vector<double>{0, 1, 9, 49});
  auto z = ops::pairwise_sq_distances(Tensor::full({3, 2}, 1.5));
  for (double v : z.data()) CHECK(v == 0.0);
  std::mt19937_64 rng(13);
  auto x = random_tensor({16, 8}, rng);
  auto p = ops::pairwise_sq_distances(x);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < 8; ++c) s += (x.at(i, c) - x.at(j, c)) * (x.at(i, c) - x.at(j, c));
      CHECK(std::abs(p.at(i, j) - s) <= 1e-10);
      CHECK(p.at(i, j) == p.at(j, i));
      CHECK(p.at(i, j) >= 0.0);
    }
}
