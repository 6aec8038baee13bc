#include <doctest.h>

#include <cmath>
#include <vector>

#include "saca/attention.hpp"
#include "saca/errors.hpp"
#include "saca/gradcheck.hpp"
#include "saca/ops.hpp"
#include "saca/rng.hpp"
#include "support/oracles.hpp"

using namespace saca;

TEST_SUITE("attention_core") {

TEST_CASE("project with an identity weight is the identity") {
  Rng rng(42);
  Tensor x = Tensor::uniform({3, 2, 4}, -1, 1, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  CHECK(oracle::bit_equal(project(x, eye), x));
}

TEST_CASE("project hand computation on one pixel") {
  Tensor x({1, 1, 2}, {1, 2});
  Tensor w({2, 2}, {1, 0, 0, 2});
  Tensor y = project(x, w);
  CHECK(y.values() == std::vector<double>{1, 4});
}

TEST_CASE("project matches the per-pixel loop") {
  Rng rng(43);
  Tensor x = Tensor::uniform({3, 3, 4}, -1, 1, rng);
  Tensor w = Tensor::uniform({4, 2}, -1, 1, rng);
  CHECK(oracle::max_abs_diff(project(x, w).values(), oracle::project(x, w)) <= 1e-12);
  CHECK_THROWS_AS((void)project(x, Tensor({5, 2})), DimensionError);
}

TEST_CASE("affinity of orthonormal rows is a scaled identity") {
  Tensor q({2, 2}, {1, 0, 0, 1});
  Tensor e = affinity(q, q);
  const double d = 1.0 / std::sqrt(2.0);
  CHECK(e.at({0, 0}) == doctest::Approx(d).epsilon(1e-15));
  CHECK(e.at({1, 1}) == doctest::Approx(d).epsilon(1e-15));
  CHECK(e.at({0, 1}) == 0.0);
  CHECK(e.at({1, 0}) == 0.0);
}

TEST_CASE("affinity hand value with four channels") {
  Tensor q({1, 4}, {2, 0, 0, 0});
  Tensor k({1, 4}, {3, 0, 0, 0});
  CHECK(affinity(q, k).item() == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("affinity matches the loop oracle") {
  Rng rng(44);
  Tensor q = Tensor::uniform({5, 8}, -1, 1, rng);
  Tensor k = Tensor::uniform({7, 8}, -1, 1, rng);
  CHECK(oracle::max_abs_diff(affinity(q, k).values(), oracle::affinity(q, k)) <= 1e-12);
  CHECK_THROWS_AS((void)affinity(q, Tensor({7, 9})), DimensionError);
}

TEST_CASE("aggregate with one-hot rows selects value rows") {
  Tensor alpha({2, 3}, {0, 1, 0, 0, 0, 1});
  Tensor v({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor z = aggregate(alpha, v);
  CHECK(z.values() == std::vector<double>{3, 4, 5, 6});
}

TEST_CASE("aggregate with uniform rows averages the values") {
  Tensor alpha = Tensor::full({2, 4}, 0.25);
  Rng rng(45);
  Tensor v = Tensor::uniform({4, 3}, -1, 1, rng);
  Tensor z = aggregate(alpha, v);
  for (int d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (int j = 0; j < 4; ++j) mean += v.at({j, d}) / 4.0;
    CHECK(z.at({0, d}) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(z.at({1, d}) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("aggregate over a single key copies that value everywhere") {
  Tensor alpha = Tensor::ones({3, 1});
  Tensor v({1, 2}, {4, 9});
  Tensor z = aggregate(alpha, v);
  for (int i = 0; i < 3; ++i) {
    CHECK(z.at({i, 0}) == 4.0);
    CHECK(z.at({i, 1}) == 9.0);
  }
}

TEST_CASE("aggregate rejects unnormalized rows") {
  Tensor alpha({1, 2}, {0.8, 0.7});
  Tensor v({2, 1}, {1, 2});
  CHECK_THROWS_AS((void)aggregate(alpha, v), ValueError);
}

TEST_CASE("single-position attention returns the projected value") {
  Rng rng(46);
  AttentionProjections p = AttentionProjections::init(3, 2, rng);
  Tensor xq = Tensor::uniform({1, 1, 3}, -1, 1, rng);
  Tensor xk = Tensor::uniform({1, 1, 3}, -1, 1, rng);
  Tensor xv = Tensor::uniform({1, 1, 3}, -1, 1, rng);
  Tensor out = general_attention(xq, xk, xv, p);
  CHECK(oracle::max_abs_diff(out.values(), oracle::project(xv, p.wv)) <= 1e-12);
}

TEST_CASE("constant keys make attention an average of projected values") {
  Rng rng(47);
  AttentionProjections p = AttentionProjections::init(3, 2, rng);
  Tensor xq = Tensor::uniform({2, 2, 3}, -1, 1, rng);
  Tensor xk = Tensor::full({2, 2, 3}, 0.3);
  Tensor xv = Tensor::uniform({2, 2, 3}, -1, 1, rng);
  Tensor out = general_attention(xq, xk, xv, p);
  const std::vector<double> pv = oracle::project(xv, p.wv);
  for (int d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (int j = 0; j < 4; ++j) mean += pv[static_cast<std::size_t>(j) * 2 + d] / 4.0;
    for (int i = 0; i < 4; ++i)
      CHECK(out.values()[static_cast<std::size_t>(i) * 2 + d] ==
            doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("attention matches the brute-force reference") {
  Rng rng(48);
  AttentionProjections p = AttentionProjections::init(3, 3, rng);
  Tensor xq = Tensor::uniform({4, 4, 3}, -1, 1, rng);
  Tensor xk = Tensor::uniform({4, 4, 3}, -1, 1, rng);
  Tensor xv = Tensor::uniform({4, 4, 3}, -1, 1, rng);
  Tensor out = general_attention(xq, xk, xv, p);
  const std::vector<double> ref = oracle::general_attention(xq, xk, xv, p.wq, p.wk, p.wv);
  CHECK(oracle::max_abs_diff(out.values(), ref) <= 1e-10);
}

TEST_CASE("attention rows stay normalized") {
  Rng rng(49);
  Tensor q = Tensor::uniform({6, 4}, -2, 2, rng);
  Tensor k = Tensor::uniform({5, 4}, -2, 2, rng);
  Tensor alpha = softmax(affinity(q, k), 1);
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) s += alpha.at({i, j});
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("attention ignores the order of key and value positions") {
  Rng rng(50);
  AttentionProjections p = AttentionProjections::init(3, 2, rng);
  Tensor xq = Tensor::uniform({2, 3, 3}, -1, 1, rng);
  Tensor xk = Tensor::uniform({2, 3, 3}, -1, 1, rng);
  Tensor xv = Tensor::uniform({2, 3, 3}, -1, 1, rng);
  // reverse keys and values by the same position permutation
  Tensor rk({2, 3, 3}), rv({2, 3, 3});
  const int n = 6, c = 3;
  for (int pidx = 0; pidx < n; ++pidx)
    for (int d = 0; d < c; ++d) {
      rk.values()[static_cast<std::size_t>(n - 1 - pidx) * c + d] =
          xk.values()[static_cast<std::size_t>(pidx) * c + d];
      rv.values()[static_cast<std::size_t>(n - 1 - pidx) * c + d] =
          xv.values()[static_cast<std::size_t>(pidx) * c + d];
    }
  Tensor a = general_attention(xq, xk, xv, p);
  Tensor b = general_attention(xq, rk, rv, p);
  CHECK(oracle::max_abs_diff(a, b) <= 1e-12);
}

TEST_CASE("projection init is seeded and bounded by fan-in") {
  Rng rng1(7), rng2(7);
  AttentionProjections a = AttentionProjections::init(9, 4, rng1);
  AttentionProjections b = AttentionProjections::init(9, 4, rng2);
  CHECK(oracle::bit_equal(a.wq, b.wq));
  CHECK(oracle::bit_equal(a.wk, b.wk));
  CHECK(oracle::bit_equal(a.wv, b.wv));
  const double bound = 1.0 / 3.0;
  for (const Tensor* w : {&a.wq, &a.wk, &a.wv})
    for (double v : w->values()) {
      CHECK(v >= -bound);
      CHECK(v <= bound);
    }
}

TEST_CASE("analytic gradients agree with finite differences") {
  CHECK(run_gradcheck("attention", 2).all_pass());
}

}  // TEST_SUITE
