#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "btgan/bias_injection.hpp"
#include "btgan/mine.hpp"

using namespace btgan;

namespace {

// Bivariate Gaussian with correlation rho: I(X;Y) = -0.5 ln(1 - rho^2).
std::pair<Matrix, Matrix> gaussian_pair(long n, double rho, std::uint64_t seed) {
  RngStream rng(seed);
  Matrix w(n, 1), s(n, 1);
  for (long i = 0; i < n; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    w(i, 0) = a;
    s(i, 0) = rho * a + std::sqrt(1.0 - rho * rho) * b;
  }
  return {w, s};
}

std::pair<Matrix, Matrix> binary_pair(long n, bool identical, std::uint64_t seed) {
  RngStream rng(seed);
  Matrix w(n, 1), s(n, 1);
  for (long i = 0; i < n; ++i) {
    const int a = rng.bernoulli(0.5);
    w(i, 0) = a;
    s(i, 0) = identical ? a : rng.bernoulli(0.5);
  }
  return {w, s};
}

MineConfig fast_cfg() {
  MineConfig cfg;
  cfg.statistic_net.hidden_widths = {16, 16};
  cfg.epochs = 60;
  cfg.batch_size = 1024;
  cfg.learning_rate = 2e-3;
  cfg.inner_steps_per_batch = 1;
  return cfg;
}

}  // namespace

TEST_CASE("independent binaries estimate near zero") {
  const auto [w, s] = binary_pair(10000, false, 1);
  const auto est = mine_estimate(w, s, fast_cfg(), 2);
  INFO("estimate = " << est.value_nats);
  REQUIRE(est.value_nats < 0.02);
  REQUIRE(est.value_nats > -0.02);
  REQUIRE(est.n_samples == 10000);
}

TEST_CASE("identical binaries estimate ln 2") {
  const auto [w, s] = binary_pair(10000, true, 3);
  const auto est = mine_estimate(w, s, fast_cfg(), 4);
  INFO("estimate = " << est.value_nats);
  REQUIRE(est.value_nats == Catch::Approx(std::numbers::ln2).margin(0.05));
}

TEST_CASE("correlated gaussian estimate matches the closed form") {
  const double rho = 0.8;
  const double truth = -0.5 * std::log(1.0 - rho * rho);
  const auto [w, s] = gaussian_pair(10000, rho, 5);
  const auto est = mine_estimate(w, s, fast_cfg(), 6);
  INFO("estimate = " << est.value_nats << " truth = " << truth);
  REQUIRE(est.value_nats == Catch::Approx(truth).margin(0.05));
}

TEST_CASE("degenerate constant input returns zero and converged") {
  Matrix w = Matrix::Constant(100, 2, 0.7);
  Matrix s = Matrix::Constant(100, 1, 0.3);
  const auto est = mine_estimate(w, s, fast_cfg(), 7);
  REQUIRE(est.value_nats == 0.0);
  REQUIRE(est.converged);
}

TEST_CASE("mine_estimate input validation") {
  Matrix w(3, 1), s(2, 1);
  REQUIRE_THROWS_AS(mine_estimate(w, s, fast_cfg(), 1), std::invalid_argument);
  Matrix one(1, 1);
  REQUIRE_THROWS_AS(mine_estimate(one, one, fast_cfg(), 1), std::invalid_argument);
  MineConfig bad = fast_cfg();
  bad.ema_decay = 1.5;
  Matrix w2(10, 1), s2(10, 1);
  w2.setZero();
  s2.setZero();
  REQUIRE_THROWS_AS(mine_estimate(w2, s2, bad, 1), std::invalid_argument);
}

TEST_CASE("statistic-network gradient matches central finite differences") {
  // tiny statistic network so every parameter is checked
  MineConfig cfg;
  cfg.statistic_net.hidden_widths = {1};
  cfg.statistic_net.activation = Activation::relu;

  MineEstimator est(1, 1, cfg, 11);
  const auto [w, s] = gaussian_pair(64, 0.6, 12);
  RngStream prng(13);
  const auto perm = prng.permutation(64);

  MlpGrads grads;
  est.bound_and_param_grads(w, s, perm, /*bias_corrected=*/false, &grads);

  std::vector<long> sizes;
  auto params = est.net().parameter_blocks(sizes);
  std::vector<long> gsizes;
  auto gb = est.net().gradient_blocks(grads, gsizes);

  const double h = 1e-6;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (long i = 0; i < sizes[b]; ++i) {
      const double orig = params[b][i];
      params[b][i] = orig + h;
      const double lp = est.bound(w, s, perm);
      params[b][i] = orig - h;
      const double lm = est.bound(w, s, perm);
      params[b][i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = gb[b][i];
      INFO("block " << b << " index " << i << " fd " << fd << " an " << an);
      REQUIRE(std::abs(fd - an) <= 1e-3 * std::max(1.0, std::max(std::abs(fd), std::abs(an))));
    }
  }
}

TEST_CASE("input gradients match finite differences") {
  MineConfig cfg;
  cfg.statistic_net.hidden_widths = {4};
  MineEstimator est(2, 1, cfg, 21);
  RngStream rng(22);
  Matrix w(10, 2), s(10, 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
  const auto perm = rng.permutation(10);

  Matrix dw, ds;
  est.input_grads(w, s, perm, &dw, &ds);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double orig = w.data()[i];
    w.data()[i] = orig + h;
    const double lp = est.bound(w, s, perm);
    w.data()[i] = orig - h;
    const double lm = est.bound(w, s, perm);
    w.data()[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    REQUIRE(std::abs(fd - dw.data()[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double orig = s.data()[i];
    s.data()[i] = orig + h;
    const double lp = est.bound(w, s, perm);
    s.data()[i] = orig - h;
    const double lm = est.bound(w, s, perm);
    s.data()[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    REQUIRE(std::abs(fd - ds.data()[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("loss_final composes the penalty linearly into the generator loss") {
  GcdLosses gcd;
  gcd.discriminator_objective = -1.2;
  gcd.generator_loss = -0.4;
  gcd.classifier_loss = 0.7;
  gcd.cross_entropy = 0.3;

  const auto zero = loss_final(gcd, 0.3, 0.0);
  REQUIRE(zero.generator_loss == gcd.generator_loss);
  REQUIRE(zero.discriminator_objective == gcd.discriminator_objective);
  REQUIRE(zero.classifier_loss == gcd.classifier_loss);

  const auto one = loss_final(gcd, 0.3, 1.0);
  REQUIRE(one.generator_loss == Catch::Approx(gcd.generator_loss + 0.3));
  REQUIRE(one.discriminator_objective == gcd.discriminator_objective);

  const auto half = loss_final(gcd, 0.3, 0.5);
  REQUIRE(half.generator_loss == Catch::Approx(gcd.generator_loss + 0.15));

  REQUIRE_THROWS_AS(loss_final(gcd, 0.3, -0.1), std::invalid_argument);
}

TEST_CASE("the penalty perturbs only the generator update at step 1") {
  BiasInjectionSpec bspec;
  bspec.n_rows = 512;
  bspec.correlation_strength = 0.8;
  bspec.seed = 31;
  auto data = synthesize_biased(bspec).data;

  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 512;  // one batch per epoch
  cfg.learning_rate = 1e-3;
  cfg.seed = 33;
  cfg.noise_dim = 8;
  BundleSpecs specs = default_bundle_specs(data.schema());
  specs.generator.hidden_widths = {16};
  specs.discriminator.hidden_widths = {16};
  specs.classifier.hidden_widths = {8};
  specs.classifier.batch_norm = false;

  auto run = [&](double alpha) {
    auto bundle = init_models(data.schema(), specs, cfg);
    train_stage1(data, bundle, cfg);
    MineConfig mc;
    mc.alpha_fairness = alpha;
    mc.statistic_net.hidden_widths = {8};
    TrainingConfig s2 = cfg;
    s2.stage2_epochs = 1;  // a single batch = step 1
    train_stage2(data, bundle, mc, uniform_sampler(), s2);
    return bundle;
  };

  auto a0 = run(0.0);
  auto a1 = run(1.0);

  Matrix dprobe(3, data.schema().feature_width() + 2);
  dprobe.setConstant(0.3);
  REQUIRE(a0.discriminator_primary.forward_eval(dprobe) ==
          a1.discriminator_primary.forward_eval(dprobe));

  Matrix gprobe(3, 2 + cfg.noise_dim);
  gprobe.setConstant(0.2);
  REQUIRE(a0.generator.forward_eval(gprobe) != a1.generator.forward_eval(gprobe));
}

TEST_CASE("stage 2 with the information penalty reduces generated MI") {
  BiasInjectionSpec bspec;
  bspec.n_rows = 6000;
  bspec.correlation_strength = 0.95;
  bspec.proxy_agreement = 0.5;  // uninformative proxy; the proxy experiment is separate
  bspec.seed = 41;
  auto data = synthesize_biased(bspec).data;

  TrainingConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 512;
  cfg.learning_rate = 3e-4;
  cfg.seed = 43;
  cfg.noise_dim = 16;
  cfg.stage2_epochs = 60;
  BundleSpecs specs = default_bundle_specs(data.schema());
  specs.generator.hidden_widths = {32, 64};
  specs.discriminator.hidden_widths = {32, 32};
  specs.classifier.hidden_widths = {16};
  specs.classifier.batch_norm = false;

  auto bundle = init_models(data.schema(), specs, cfg);
  train_stage1(data, bundle, cfg);

  MineConfig probe_cfg = fast_cfg();
  probe_cfg.epochs = 40;
  const auto before = bundle_mi_estimate(bundle, 8000, probe_cfg, 51);

  MineConfig mc;
  mc.alpha_fairness = 0.5;
  train_stage2(data, bundle, mc, uniform_sampler(), cfg);
  const auto after = bundle_mi_estimate(bundle, 8000, probe_cfg, 51);

  INFO("MI before " << before.value_nats << " after " << after.value_nats);
  REQUIRE(before.value_nats > 0.15);  // strong bias replicated by stage 1
  REQUIRE(after.value_nats < 0.3 * before.value_nats);
}
