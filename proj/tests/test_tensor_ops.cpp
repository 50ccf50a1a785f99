#include <cmath>
#include <numeric>
#include <vector>

#include "cis/conv.hpp"
#include "cis/gradcheck.hpp"
#include "cis/ops.hpp"
#include "cis/rng.hpp"
#include "doctest.h"
#include "support/conv_reference.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cis;

namespace {

TensorF randf(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<float> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<float>(scale * rng.normal());
  return TensorF::from_data(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("conv2d counts overlapping ones") {
  auto x = TensorF::filled({1, 1, 3, 3}, 1.0f);
  auto w = TensorF::filled({1, 1, 3, 3}, 1.0f);
  auto b = TensorF::zeros({1});
  auto y = conv2d(x, w, b, 1, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.values()[4] == doctest::Approx(9.0f));
  CHECK(y.values()[0] == doctest::Approx(4.0f));
  CHECK(y.values()[2] == doctest::Approx(4.0f));
  CHECK(y.values()[1] == doctest::Approx(6.0f));
}

TEST_CASE("conv2d zero weights give zero output") {
  Rng rng(7);
  auto x = randf(rng, {2, 3, 5, 5});
  auto w = TensorF::zeros({4, 3, 3, 3});
  auto b = TensorF::zeros({4});
  auto y = conv2d(x, w, b, 1, 1, 1);
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("conv2d dilated identity kernel passes input through") {
  std::vector<float> vals(25);
  std::iota(vals.begin(), vals.end(), 0.0f);
  auto x = TensorF::from_data({1, 1, 5, 5}, vals);
  std::vector<float> kv(9, 0.0f);
  kv[4] = 1.0f;  // center tap
  auto w = TensorF::from_data({1, 1, 3, 3}, kv);
  auto b = TensorF::zeros({1});

  auto y = conv2d(x, w, b, 1, 2, 2);
  auto ref = testsupport::conv2d_reference(x, w, b, 1, 2, 2);
  REQUIRE(y.shape() == Shape{1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) {
    CHECK(y.values()[i] == doctest::Approx(vals[i]));
    CHECK(y.values()[i] == doctest::Approx(ref.values()[i]));
  }
}

TEST_CASE("conv2d matches the nested-loop reference on random cases") {
  Rng rng(123);
  struct Case {
    int stride, pad, dilation;
  };
  for (Case c : {Case{1, 1, 1}, Case{2, 1, 1}, Case{1, 2, 2}, Case{1, 0, 1}, Case{2, 3, 3}}) {
    auto x = randf(rng, {2, 3, 9, 8});
    auto w = randf(rng, {4, 3, 3, 3}, 0.5);
    auto b = randf(rng, {4}, 0.1);
    auto y = conv2d(x, w, b, c.stride, c.pad, c.dilation);
    auto ref = testsupport::conv2d_reference(x, w, b, c.stride, c.pad, c.dilation);
    REQUIRE(y.shape() == ref.shape());
    for (std::int64_t i = 0; i < y.size(); ++i) {
      CHECK(y.values()[static_cast<std::size_t>(i)] ==
            doctest::Approx(ref.values()[static_cast<std::size_t>(i)]).epsilon(1e-4));
    }
  }
}

TEST_CASE("conv2d rejects mismatched channels naming the dimension") {
  auto x = TensorF::zeros({1, 3, 4, 4});
  auto w = TensorF::zeros({2, 4, 3, 3});
  auto b = TensorF::zeros({2});
  CHECK_THROWS_WITH_AS(conv2d(x, w, b), doctest::Contains("dim 1"), Error);
}

TEST_CASE("elementwise op identities") {
  auto x = TensorF::from_data({1, 2, 1, 1}, {0.0f, -3.0f});
  CHECK(sigmoid(x).values()[0] == doctest::Approx(0.5f));
  CHECK(relu(x).values()[1] == 0.0f);
  CHECK(leaky_relu(x, 0.1f).values()[1] == doctest::Approx(-0.3f));
}

TEST_CASE("softmax over equal logits is uniform and sums to one") {
  auto x = TensorF::filled({1, 2, 3, 3}, 0.7f);
  auto p = softmax_channels(x);
  for (float v : p.values()) CHECK(v == doctest::Approx(0.5f));

  Rng rng(9);
  auto z = randf(rng, {2, 4, 5, 5}, 3.0);
  auto q = softmax_channels(z);
  const auto qv = q.values();
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 25; ++i) {
      double s = 0.0;
      for (int c = 0; c < 4; ++c) s += qv[static_cast<std::size_t>((b * 4 + c) * 25 + i)];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("upsample_bilinear preserves constant fields") {
  auto x = TensorF::filled({1, 3, 4, 5}, 2.75f);
  auto y = upsample_bilinear(x, 2);
  REQUIRE(y.shape() == Shape{1, 3, 8, 10});
  for (float v : y.values()) CHECK(v == doctest::Approx(2.75f).epsilon(1e-6));
}

TEST_CASE("backward of sum of squares is 2w") {
  Rng rng(17);
  auto w = randf(rng, {2, 1, 3, 3});
  w.set_requires_grad(true);
  sum(square(w)).backward();
  REQUIRE(w.has_grad());
  for (std::int64_t i = 0; i < w.size(); ++i) {
    CHECK(w.grad()[static_cast<std::size_t>(i)] ==
          doctest::Approx(2.0f * w.values()[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("backward of linear form recovers the coefficients") {
  Rng rng(18);
  auto a = randf(rng, {1, 2, 4, 4});
  auto w = randf(rng, {1, 2, 4, 4});
  w.set_requires_grad(true);
  sum(mul(a, w)).backward();
  for (std::int64_t i = 0; i < w.size(); ++i) {
    CHECK(w.grad()[static_cast<std::size_t>(i)] ==
          doctest::Approx(a.values()[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("backward rejects non-scalar roots") {
  auto w = TensorF::filled({2, 1, 2, 2}, 1.0f, true);
  CHECK_THROWS_AS(square(w).backward(), Error);
}

TEST_CASE("random 3-layer composition matches central finite differences") {
  Rng rng(99);
  auto x = TensorD::from_data({1, 2, 6, 6}, [&] {
    std::vector<double> v(72);
    for (auto& e : v) e = rng.normal();
    return v;
  }());
  auto w1 = TensorD::from_data({3, 2, 3, 3}, [&] {
    std::vector<double> v(54);
    for (auto& e : v) e = 0.4 * rng.normal();
    return v;
  }());
  auto b1 = TensorD::zeros({3});
  auto w2 = TensorD::from_data({2, 3, 3, 3}, [&] {
    std::vector<double> v(54);
    for (auto& e : v) e = 0.4 * rng.normal();
    return v;
  }());
  auto b2 = TensorD::zeros({2});

  auto forward = [=]() {
    auto h1 = leaky_relu(conv2d(x, w1, b1, 1, 1, 1), 0.1);
    auto h2 = sigmoid(conv2d(h1, w2, b2, 2, 1, 1));
    return mean(square(h2));
  };
  const double err = finite_difference_check({w1, b1, w2, b2, x}, forward, 1e-5);
  CHECK(err <= 1e-5);
}

TEST_CASE("every layer type passes its finite-difference check") {
  for (const auto& check : run_layer_gradchecks(2024)) {
    INFO(check.name << " rel err " << check.max_rel_err);
    CHECK(check.passed);
  }
}

TEST_CASE("forward and gradients are deterministic across runs") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = randf(rng, {2, 3, 8, 8});
    auto w = randf(rng, {4, 3, 3, 3}, 0.5);
    auto b = randf(rng, {4}, 0.1);
    w.set_requires_grad(true);
    auto y = leaky_relu(conv2d(x, w, b, 2, 1, 1), 0.1f);
    auto loss = mean(square(y));
    loss.backward();
    std::vector<float> out(y.values().begin(), y.values().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  auto a = run(5);
  auto b = run(5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bit-identical

  auto c = run(6);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size() && !any_diff; ++i) any_diff = a[i] != c[i];
  CHECK(any_diff);
}

#ifdef _OPENMP
TEST_CASE("conv results are bit-identical across thread counts") {
  Rng rng(31);
  auto x = randf(rng, {4, 8, 16, 16});
  auto w = randf(rng, {8, 8, 3, 3}, 0.2);
  auto b = randf(rng, {8}, 0.1);
  omp_set_num_threads(1);
  auto y1 = conv2d(x, w, b, 1, 1, 1);
  omp_set_num_threads(4);
  auto y4 = conv2d(x, w, b, 1, 1, 1);
  for (std::int64_t i = 0; i < y1.size(); ++i) {
    CHECK(y1.values()[static_cast<std::size_t>(i)] == y4.values()[static_cast<std::size_t>(i)]);
  }
}
#endif

TEST_CASE("non-finite values are rejected at op boundaries") {
  CHECK_THROWS_AS(TensorF::from_data({2}, {1.0f, std::nanf("")}), Error);
  CHECK_THROWS_AS(TensorF::from_data({1}, {INFINITY}), Error);
  // overflow produced inside an op is caught too
  auto big = TensorF::filled({1}, 3e38f);
  CHECK_THROWS_AS(square(big), Error);
}

TEST_CASE("broadcast mul follows mask-times-flow semantics") {
  auto mask = TensorF::from_data({1, 1, 1, 2}, {0.5f, 0.0f});
  auto flow = TensorF::from_data({1, 2, 1, 2}, {2.0f, 4.0f, 6.0f, 8.0f});
  auto prod = mul(mask, flow);
  REQUIRE(prod.shape() == Shape{1, 2, 1, 2});
  CHECK(prod.values()[0] == doctest::Approx(1.0f));
  CHECK(prod.values()[1] == doctest::Approx(0.0f));
  CHECK(prod.values()[2] == doctest::Approx(3.0f));
  CHECK(prod.values()[3] == doctest::Approx(0.0f));

  auto bad = TensorF::zeros({1, 3, 1, 3});
  CHECK_THROWS_AS(mul(flow, bad), Error);
}

TEST_CASE("sum_per_sample reduces everything but the batch dimension") {
  auto x = TensorF::from_data({2, 2, 1, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto s = sum_per_sample(x);
  REQUIRE(s.shape() == Shape{2});
  CHECK(s.values()[0] == doctest::Approx(10.0f));
  CHECK(s.values()[1] == doctest::Approx(26.0f));
}
