#include <catch2/catch_amalgamated.hpp>

#include "btgan/rng.hpp"

using namespace btgan;

TEST_CASE("substreams with different names are independent") {
  const auto a = substream_seed(42, "data");
  const auto b = substream_seed(42, "init");
  REQUIRE(a != b);
  REQUIRE(substream_seed(42, "data") == a);
  REQUIRE(substream_seed(43, "data") != a);
}

TEST_CASE("streams are deterministic") {
  RngStream r1(7), r2(7);
  for (int i = 0; i < 100; ++i) REQUIRE(r1.uniform() == r2.uniform());
  RngStream n1(9), n2(9);
  for (int i = 0; i < 100; ++i) REQUIRE(n1.normal() == n2.normal());
}

TEST_CASE("uniform lies in [0,1) and normal has roughly unit moments") {
  RngStream r(123);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  REQUIRE(std::abs(sum / n) < 0.03);
  REQUIRE(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("categorical respects weights") {
  RngStream r(5);
  const std::vector<double> w{0.7, 0.2, 0.1};
  std::vector<int> counts(3, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[r.categorical(w)];
  for (int k = 0; k < 3; ++k)
    REQUIRE(std::abs(counts[static_cast<std::size_t>(k)] / static_cast<double>(n) -
                     w[static_cast<std::size_t>(k)]) < 0.01);
}

TEST_CASE("indexed uniforms are stable and well spread") {
  REQUIRE(indexed_uniform(11, 0) == indexed_uniform(11, 0));
  REQUIRE(indexed_uniform(11, 0) != indexed_uniform(11, 1));
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += indexed_uniform(3, static_cast<std::uint64_t>(i));
  REQUIRE(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("permutation is a bijection") {
  RngStream r(77);
  auto p = r.permutation(100);
  std::vector<bool> seen(100, false);
  for (auto i : p) {
    REQUIRE(!seen[i]);
    seen[i] = true;
  }
}
