#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "btgan/bias_injection.hpp"

using namespace btgan;

namespace {

// Test-side oracle: plug-in discrete mutual information of two binary
// columns, independent of the library's closed forms.
double plugin_mi(const std::vector<int>& a, const std::vector<int>& b) {
  double joint[2][2] = {{0, 0}, {0, 0}};
  const auto n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) joint[a[i]][b[i]] += 1.0 / n;
  double pa[2] = {joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]};
  double pb[2] = {joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]};
  double mi = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      if (joint[i][j] > 0) mi += joint[i][j] * std::log(joint[i][j] / (pa[i] * pb[j]));
  return mi;
}

struct Extracted {
  std::vector<int> s, y, proxy, seg;
};

Extracted extract(const Dataset& d) {
  Extracted e;
  const auto& sch = d.schema();
  const int s_off = sch.column_offset(sch.column_index("group"));
  const int p_off = sch.column_offset(sch.column_index("proxy"));
  const int g_off = sch.column_offset(sch.column_index("segment"));
  const int y_off = sch.column_offset(sch.column_index("outcome"));
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    e.s.push_back(d.encoded()(r, s_off + 1) > 0.5 ? 1 : 0);
    e.proxy.push_back(d.encoded()(r, p_off + 1) > 0.5 ? 1 : 0);
    e.seg.push_back(d.encoded()(r, g_off + 1) > 0.5 ? 1 : 0);
    e.y.push_back(d.encoded()(r, y_off) > 0.5 ? 1 : 0);
  }
  return e;
}

}  // namespace

TEST_CASE("zero correlation gives independent label and group") {
  BiasInjectionSpec spec;
  spec.n_rows = 10000;
  spec.correlation_strength = 0.0;
  spec.seed = 11;
  const auto out = synthesize_biased(spec);
  const auto e = extract(out.data);
  REQUIRE(out.truth.mi_nats == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(plugin_mi(e.y, e.s) < 0.01);
}

TEST_CASE("full correlation gives MI of ln 2") {
  BiasInjectionSpec spec;
  spec.n_rows = 10000;
  spec.correlation_strength = 1.0;
  spec.seed = 12;
  const auto out = synthesize_biased(spec);
  const auto e = extract(out.data);
  REQUIRE(out.truth.mi_nats == Catch::Approx(std::numbers::ln2));
  REQUIRE(plugin_mi(e.y, e.s) == Catch::Approx(std::numbers::ln2).margin(0.01));
  for (std::size_t i = 0; i < e.y.size(); ++i) REQUIRE(e.y[i] == e.s[i]);
}

TEST_CASE("conditional label rates match the analytic values") {
  BiasInjectionSpec spec;
  spec.n_rows = 20000;
  spec.correlation_strength = 0.8;
  spec.seed = 13;
  const auto out = synthesize_biased(spec);
  const auto e = extract(out.data);

  double n1 = 0, p1 = 0, n0 = 0, p0 = 0;
  for (std::size_t i = 0; i < e.y.size(); ++i) {
    if (e.s[i] == 1) {
      n1 += 1;
      p1 += e.y[i];
    } else {
      n0 += 1;
      p0 += e.y[i];
    }
  }
  const double tol = 2.0 / std::sqrt(static_cast<double>(spec.n_rows));
  REQUIRE(std::abs(p1 / n1 - out.truth.rate_s1) < tol);
  REQUIRE(std::abs(p0 / n0 - out.truth.rate_s0) < tol);
  REQUIRE(out.truth.rate_s1 > out.truth.rate_s0);
}

TEST_CASE("plug-in MI agrees with the closed form within 3 standard errors") {
  BiasInjectionSpec spec;
  spec.n_rows = 10000;
  spec.correlation_strength = 0.6;
  spec.seed = 14;
  const auto out = synthesize_biased(spec);
  const auto e = extract(out.data);
  const double emp = plugin_mi(e.y, e.s);
  // rough SE of plug-in MI at this scale
  const double se = 3.0 / std::sqrt(static_cast<double>(spec.n_rows));
  REQUIRE(std::abs(emp - out.truth.mi_nats) < 3.0 * se);
}

TEST_CASE("minority segment frequency matches the spec") {
  BiasInjectionSpec spec;
  spec.n_rows = 20000;
  spec.minority_fraction = 0.05;
  spec.seed = 15;
  const auto out = synthesize_biased(spec);
  const auto e = extract(out.data);
  double frac = 0;
  for (int s : e.seg) frac += s;
  frac /= static_cast<double>(e.seg.size());
  REQUIRE(std::abs(frac - 0.05) < 2.0 / std::sqrt(static_cast<double>(spec.n_rows)));
}

TEST_CASE("proxy agrees with the sensitive column at the requested rate") {
  BiasInjectionSpec spec;
  spec.n_rows = 20000;
  spec.proxy_agreement = 0.95;
  spec.correlation_strength = 0.5;
  spec.seed = 16;
  const auto out = synthesize_biased(spec);
  const auto e = extract(out.data);
  double agree = 0;
  for (std::size_t i = 0; i < e.s.size(); ++i) agree += e.s[i] == e.proxy[i] ? 1 : 0;
  agree /= static_cast<double>(e.s.size());
  REQUIRE(std::abs(agree - 0.95) < 0.01);
}

TEST_CASE("label masking is applied by the synthesizer") {
  BiasInjectionSpec spec;
  spec.n_rows = 1000;
  spec.label_missing_fraction = 0.4;
  spec.seed = 17;
  const auto out = synthesize_biased(spec);
  REQUIRE(out.data.n_observed_labels() == 600);
}

TEST_CASE("determinism: same seed, same dataset") {
  BiasInjectionSpec spec;
  spec.n_rows = 500;
  spec.correlation_strength = 0.3;
  spec.seed = 18;
  const auto a = synthesize_biased(spec);
  const auto b = synthesize_biased(spec);
  REQUIRE(a.data.encoded() == b.data.encoded());
  spec.seed = 19;
  const auto c = synthesize_biased(spec);
  REQUIRE(a.data.encoded() != c.data.encoded());
}

TEST_CASE("invalid specs are rejected") {
  BiasInjectionSpec spec;
  spec.correlation_strength = 1.5;
  REQUIRE_THROWS_AS(synthesize_biased(spec), DataError);
  spec.correlation_strength = 0.5;
  spec.minority_fraction = 0.0;
  REQUIRE_THROWS_AS(synthesize_biased(spec), DataError);
  spec.minority_fraction = 0.05;
  spec.proxy_agreement = 0.2;
  REQUIRE_THROWS_AS(synthesize_biased(spec), DataError);
  spec.proxy_agreement = 0.9;
  spec.label_missing_fraction = 1.0;
  REQUIRE_THROWS_AS(synthesize_biased(spec), DataError);
}

TEST_CASE("negative correlation flips the bias direction") {
  BiasInjectionSpec spec;
  spec.n_rows = 10000;
  spec.correlation_strength = -0.8;
  spec.seed = 20;
  const auto out = synthesize_biased(spec);
  REQUIRE(out.truth.rate_s1 < out.truth.rate_s0);
}
