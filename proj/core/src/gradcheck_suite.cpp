#include "cis/gradcheck.hpp"

#include "cis/conv.hpp"
#include "cis/ops.hpp"
#include "cis/rng.hpp"

namespace cis {

namespace {

TensorD random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = scale * rng.normal();
  return TensorD::from_data(std::move(shape), std::move(v));
}

}  // namespace

std::vector<LayerCheck> run_layer_gradchecks(std::uint64_t seed, double tolerance) {
  std::vector<LayerCheck> checks;
  Rng rng(seed);
  auto run = [&](const std::string& name, std::vector<TensorD> leaves,
                 std::function<TensorD()> fwd) {
    const double err = finite_difference_check(std::move(leaves), fwd);
    checks.push_back({name, err, err <= tolerance});
  };

  // conv2d: plain, strided, dilated
  {
    auto x = random_tensor(rng, {2, 3, 6, 6});
    auto w = random_tensor(rng, {4, 3, 3, 3}, 0.5);
    auto b = random_tensor(rng, {4}, 0.1);
    run("conv2d", {x, w, b}, [=] { return sum(conv2d(x, w, b, 1, 1, 1)); });
  }
  {
    auto x = random_tensor(rng, {1, 2, 7, 7});
    auto w = random_tensor(rng, {3, 2, 3, 3}, 0.5);
    auto b = random_tensor(rng, {3}, 0.1);
    run("conv2d_stride2", {x, w, b}, [=] { return sum(conv2d(x, w, b, 2, 1, 1)); });
  }
  {
    auto x = random_tensor(rng, {1, 2, 8, 8});
    auto w = random_tensor(rng, {2, 2, 3, 3}, 0.5);
    auto b = random_tensor(rng, {2}, 0.1);
    run("conv2d_dilation2", {x, w, b}, [=] { return sum(conv2d(x, w, b, 1, 2, 2)); });
  }

  {
    auto x = random_tensor(rng, {1, 2, 4, 4});
    run("relu", {x}, [=] { return sum(relu(x)); });
    run("leaky_relu", {x}, [=] { return sum(leaky_relu(x, 0.1)); });
    run("sigmoid", {x}, [=] { return sum(square(sigmoid(x))); });
    run("square", {x}, [=] { return sum(square(x)); });
    run("mean", {x}, [=] { return mean(square(x)); });
    run("sum_per_sample", {x}, [=] { return mean(square(sum_per_sample(square(x)))); });
  }

  {
    auto a = random_tensor(rng, {2, 3, 4, 4});
    auto b = random_tensor(rng, {2, 3, 4, 4});
    run("add", {a, b}, [=] { return sum(square(add(a, b))); });
    run("sub", {a, b}, [=] { return sum(square(sub(a, b))); });
    run("mul", {a, b}, [=] { return sum(mul(a, b)); });
  }
  {
    // broadcast across channels, the mask-times-flow pattern
    auto a = random_tensor(rng, {2, 1, 4, 4});
    auto b = random_tensor(rng, {2, 3, 4, 4});
    run("mul_broadcast", {a, b}, [=] { return sum(square(mul(a, b))); });
  }
  {
    auto a = random_tensor(rng, {3});
    auto b = random_tensor(rng, {3});
    // keep denominators away from zero
    run("div", {a, b}, [=] { return sum(div(a, add_scalar(square(b), 1.0))); });
  }

  {
    auto x = random_tensor(rng, {1, 3, 3, 3});
    run("softmax_channels", {x}, [=] {
      auto p = softmax_channels(x);
      return sum(square(slice_channels(p, 0, 1)));
    });
  }
  {
    auto a = random_tensor(rng, {1, 2, 3, 3});
    auto b = random_tensor(rng, {1, 1, 3, 3});
    run("concat_channels", {a, b}, [=] {
      return sum(square(concat_channels<double>({a, b})));
    });
  }
  {
    auto x = random_tensor(rng, {1, 2, 3, 3});
    run("upsample_bilinear", {x}, [=] { return sum(square(upsample_bilinear(x, 2))); });
  }

  {
    auto x = random_tensor(rng, {2, 3, 4, 4});
    auto gamma = random_tensor(rng, {3}, 0.5);
    auto beta = random_tensor(rng, {3}, 0.5);
    auto rm = TensorD::zeros({3});
    auto rv = TensorD::filled({3}, 1.0);
    auto cnt = TensorD::zeros({1});
    run("batchnorm_train", {x, gamma, beta}, [=] {
      return sum(square(batchnorm(x, gamma, beta, rm, rv, cnt,
                                  /*train=*/true, /*update_stats=*/false, 0.9, 1e-5)));
    });
    auto cnt1 = TensorD::filled({1}, 1.0);
    auto rm1 = random_tensor(rng, {3}, 0.2);
    auto rv1 = TensorD::filled({3}, 1.5);
    run("batchnorm_eval", {x, gamma, beta}, [=] {
      return sum(square(batchnorm(x, gamma, beta, rm1, rv1, cnt1,
                                  /*train=*/false, /*update_stats=*/false, 0.9, 1e-5)));
    });
  }

  return checks;
}

}  // namespace cis
