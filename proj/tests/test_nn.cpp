#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "btgan/nn.hpp"

using namespace btgan;

namespace {

// Scalar loss used by the finite-difference checks: weighted sum of outputs,
// so dL/dy is a constant matrix and all head Jacobians get exercised.
double weighted_sum(const Matrix& y, const Matrix& w) { return y.cwiseProduct(w).sum(); }

// Central-difference check of parameter and input gradients.
void check_gradients(Mlp net, const Matrix& x, double tol, bool training, std::uint64_t gumbel_seed = 0) {
  MlpCache cache;
  RngStream g1(gumbel_seed);
  const Matrix y = net.forward(x, &cache, training, &g1);
  Matrix w(y.rows(), y.cols());
  RngStream wr(99);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = wr.normal();

  const auto grads = net.backward(cache, w);

  std::vector<long> sizes;
  auto params = net.parameter_blocks(sizes);
  std::vector<long> gsizes;
  auto gblocks = net.gradient_blocks(grads, gsizes);

  const double h = 1e-6;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (long i = 0; i < sizes[b]; ++i) {
      const double orig = params[b][i];
      params[b][i] = orig + h;
      RngStream gp(gumbel_seed);
      const double lp = weighted_sum(net.forward(x, nullptr, training, &gp), w);
      params[b][i] = orig - h;
      RngStream gm(gumbel_seed);
      const double lm = weighted_sum(net.forward(x, nullptr, training, &gm), w);
      params[b][i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = gblocks[b][i];
      REQUIRE(std::abs(fd - an) <= tol * std::max(1.0, std::max(std::abs(fd), std::abs(an))));
    }
  }

  // input gradient
  Matrix xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp.data()[i];
    xp.data()[i] = orig + h;
    RngStream gp(gumbel_seed);
    const double lp = weighted_sum(net.forward(xp, nullptr, training, &gp), w);
    xp.data()[i] = orig - h;
    RngStream gm(gumbel_seed);
    const double lm = weighted_sum(net.forward(xp, nullptr, training, &gm), w);
    xp.data()[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    const double an = grads.dinput.data()[i];
    REQUIRE(std::abs(fd - an) <= tol * std::max(1.0, std::max(std::abs(fd), std::abs(an))));
  }
}

Matrix random_input(int n, int d, std::uint64_t seed) {
  Matrix x(n, d);
  RngStream r(seed);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();
  return x;
}

}  // namespace

TEST_CASE("gradients match finite differences: linear head") {
  NetworkSpec spec;
  spec.hidden_widths = {7, 5};
  spec.activation = Activation::leaky_relu;
  spec.head = HeadKind::linear;
  check_gradients(Mlp(4, 3, spec, 1), random_input(6, 4, 2), 1e-5, true);
}

TEST_CASE("gradients match finite differences: sigmoid head, relu") {
  NetworkSpec spec;
  spec.hidden_widths = {8};
  spec.activation = Activation::relu;
  spec.head = HeadKind::sigmoid;
  check_gradients(Mlp(5, 2, spec, 3), random_input(5, 5, 4), 1e-5, true);
}

TEST_CASE("gradients match finite differences: softmax head") {
  NetworkSpec spec;
  spec.hidden_widths = {6, 6};
  spec.head = HeadKind::softmax;
  check_gradients(Mlp(3, 4, spec, 5), random_input(5, 3, 6), 1e-5, true);
}

TEST_CASE("gradients match finite differences: grouped gumbel head") {
  NetworkSpec spec;
  spec.hidden_widths = {6};
  spec.head = HeadKind::gumbel_softmax;
  spec.gumbel_temperature = 0.2;
  spec.output_groups = {1, 3, 2, 1};  // continuous, 3-cat, 2-cat, binary
  check_gradients(Mlp(4, 7, spec, 7), random_input(5, 4, 8), 2e-4, true, /*gumbel_seed=*/21);
}

TEST_CASE("gradients match finite differences: batch norm in training mode") {
  NetworkSpec spec;
  spec.hidden_widths = {6, 4};
  spec.head = HeadKind::softmax;
  spec.batch_norm = true;
  check_gradients(Mlp(3, 2, spec, 9), random_input(8, 3, 10), 1e-4, true);
}

TEST_CASE("gradients match finite differences: batch norm in eval mode") {
  NetworkSpec spec;
  spec.hidden_widths = {5};
  spec.head = HeadKind::linear;
  spec.batch_norm = true;
  Mlp net(3, 2, spec, 11);
  // push the running stats away from their init
  MlpCache c;
  net.forward(random_input(16, 3, 12), &c, true);
  net.update_running_stats(c);
  check_gradients(net, random_input(6, 3, 13), 1e-5, false);
}

TEST_CASE("initialization is deterministic in the seed") {
  NetworkSpec spec;
  spec.hidden_widths = {8, 8};
  Mlp a(4, 2, spec, 42), b(4, 2, spec, 42), c(4, 2, spec, 43);
  const Matrix x = random_input(3, 4, 1);
  REQUIRE(a.forward_eval(x) == b.forward_eval(x));
  REQUIRE(a.forward_eval(x) != c.forward_eval(x));
}

TEST_CASE("one-hot groups from a gumbel head sum to one") {
  NetworkSpec spec;
  spec.hidden_widths = {8};
  spec.head = HeadKind::gumbel_softmax;
  spec.output_groups = {1, 4, 3};
  Mlp net(3, 8, spec, 17);
  RngStream g(5);
  MlpCache c;
  const Matrix y = net.forward(random_input(32, 3, 6), &c, true, &g);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    REQUIRE(std::abs(y.row(r).segment(1, 4).sum() - 1.0) < 1e-5);
    REQUIRE(std::abs(y.row(r).segment(5, 3).sum() - 1.0) < 1e-5);
    REQUIRE(y(r, 0) >= 0.0);
    REQUIRE(y(r, 0) <= 1.0);
  }
}

TEST_CASE("adam takes the expected first step") {
  // With fresh state, bias-corrected Adam moves each parameter by
  // -lr * g / (|g| + eps), i.e. about -lr * sign(g).
  NetworkSpec spec;
  spec.head = HeadKind::linear;
  Mlp net(2, 1, spec, 3);
  std::vector<long> sizes;
  auto params = net.parameter_blocks(sizes);
  std::vector<double> before;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (long i = 0; i < sizes[b]; ++i) before.push_back(params[b][i]);

  MlpCache c;
  const Matrix x = random_input(4, 2, 9);
  net.forward(x, &c, true);
  const auto g = net.backward(c, Matrix::Ones(4, 1));

  AdamOptimizer opt(0.01);
  opt.step(net, g);

  std::vector<long> gsz;
  auto gb = net.gradient_blocks(g, gsz);
  std::size_t k = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (long i = 0; i < sizes[b]; ++i, ++k) {
      const double gi = gb[b][i];
      if (std::abs(gi) > 1e-9) {
        REQUIRE(params[b][i] - before[k] ==
                Catch::Approx(-0.01 * gi / (std::abs(gi) + 1e-8)).margin(1e-12));
      }
    }
  }
}

TEST_CASE("serialization round-trips parameters exactly") {
  NetworkSpec spec;
  spec.hidden_widths = {6, 4};
  spec.batch_norm = true;
  spec.head = HeadKind::softmax;
  Mlp net(5, 3, spec, 77);
  const Matrix x = random_input(4, 5, 8);
  const Matrix y = net.forward_eval(x);

  std::stringstream buf;
  net.save(buf);
  Mlp loaded(5, 3, spec, 0);
  loaded.load(buf);
  REQUIRE(loaded.forward_eval(x) == y);
}

TEST_CASE("network spec validation") {
  NetworkSpec spec;
  spec.hidden_widths = {0};
  REQUIRE_THROWS_AS(Mlp(2, 2, spec, 1), NnError);
  spec.hidden_widths = {4};
  spec.output_groups = {1, 2};  // sums to 3, output is 2
  REQUIRE_THROWS_AS(Mlp(2, 2, spec, 1), NnError);
  spec.output_groups.clear();
  spec.head = HeadKind::gumbel_softmax;
  spec.gumbel_temperature = 0.0;
  REQUIRE_THROWS_AS(Mlp(2, 2, spec, 1), NnError);
}

TEST_CASE("bce with logits matches the direct formula") {
  Matrix logits(2, 1);
  logits << 0.0, 2.0;
  Matrix dl;
  const double loss = bce_with_logits(logits, 1.0, &dl);
  const double expected = -(std::log(0.5) + std::log(1.0 / (1.0 + std::exp(-2.0)))) / 2.0;
  REQUIRE(loss == Catch::Approx(expected));
  REQUIRE(dl(0, 0) == Catch::Approx((0.5 - 1.0) / 2.0));
}
