#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "btgan/dataset.hpp"

using namespace btgan;

namespace {

TableSchema toy_schema() {
  return TableSchema({
      {"age", ColumnKind::continuous, {}, false, false},
      {"sex", ColumnKind::categorical, {"M", "F"}, true, false},
      {"income", ColumnKind::binary, {}, false, true},
  });
}

std::string write_temp_csv(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/btgan_test_" + name + ".csv";
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("schema invariants") {
  REQUIRE_THROWS_AS(TableSchema({{"a", ColumnKind::continuous, {}, false, false}}), SchemaError);
  REQUIRE_THROWS_AS(TableSchema({{"a", ColumnKind::binary, {}, false, true},
                                 {"b", ColumnKind::binary, {}, false, true}}),
                    SchemaError);
  REQUIRE_THROWS_AS(TableSchema({{"a", ColumnKind::categorical, {}, false, false},
                                 {"y", ColumnKind::binary, {}, false, true}}),
                    SchemaError);
  REQUIRE_THROWS_AS(TableSchema({{"a", ColumnKind::categorical, {"x", "x"}, false, false},
                                 {"y", ColumnKind::binary, {}, false, true}}),
                    SchemaError);

  const auto s = toy_schema();
  REQUIRE(s.encoded_width() == 4);  // 1 + 2 + 1
  REQUIRE(s.label_cardinality() == 2);
  REQUIRE(s.feature_width() == 3);
  REQUIRE(s.sensitive_feature_positions() == std::vector<int>{1, 2});
}

TEST_CASE("load_csv encodes a 3-row table") {
  const auto path = write_temp_csv("basic", "age,sex,income\n30,M,1\n40,F,0\n50,M,1\n");
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  REQUIRE(d.n_rows() == 3);
  REQUIRE(d.encoded().cols() == 4);
  // age scaled to [0,1] over observed range 30..50
  REQUIRE(d.encoded()(0, 0) == Catch::Approx(0.0));
  REQUIRE(d.encoded()(1, 0) == Catch::Approx(0.5));
  REQUIRE(d.encoded()(2, 0) == Catch::Approx(1.0));
  // one-hot sums
  for (int r = 0; r < 3; ++r) REQUIRE(d.encoded()(r, 1) + d.encoded()(r, 2) == Catch::Approx(1.0));
  REQUIRE(d.labels() == std::vector<int>{1, 0, 1});
  std::remove(path.c_str());
}

TEST_CASE("load_csv masks blank label cells instead of dropping rows") {
  const auto path = write_temp_csv("mask", "age,sex,income\n30,M,1\n40,F,\n50,M,1\n");
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  REQUIRE(d.n_rows() == 3);
  REQUIRE(d.label_mask() == std::vector<std::uint8_t>{1, 0, 1});
  REQUIRE(d.labels()[1] == -1);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects schema mismatches with the offending name") {
  const auto path = write_temp_csv("hdr", "age,gender,income\n30,M,1\n");
  REQUIRE_THROWS_WITH(load_csv(path, toy_schema(), SplitTag::train),
                      Catch::Matchers::ContainsSubstring("sex"));
  std::remove(path.c_str());

  const auto path2 = write_temp_csv("cat", "age,sex,income\n30,X,1\n");
  REQUIRE_THROWS_WITH(load_csv(path2, toy_schema(), SplitTag::train),
                      Catch::Matchers::ContainsSubstring("sex"));
  std::remove(path2.c_str());
}

TEST_CASE("load_csv rejects unparseable continuous cells with the row index") {
  const auto path = write_temp_csv("cont", "age,sex,income\n30,M,1\nforty,F,0\n");
  REQUIRE_THROWS_WITH(load_csv(path, toy_schema(), SplitTag::train),
                      Catch::Matchers::ContainsSubstring("row 1"));
  std::remove(path.c_str());
}

TEST_CASE("mask_labels arithmetic, determinism and identity") {
  const auto path = write_temp_csv("mk", [] {
    std::string s = "age,sex,income\n";
    for (int i = 0; i < 100; ++i) s += std::to_string(20 + i) + ",M,1\n";
    return s;
  }());
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  std::remove(path.c_str());

  const auto d0 = mask_labels(d, 0.0, 1);
  REQUIRE(d0.n_observed_labels() == 100);
  REQUIRE(d0.encoded() == d.encoded());

  const auto d1 = mask_labels(d, 0.5, 1);
  REQUIRE(d1.n_observed_labels() == 50);
  const auto d2 = mask_labels(d, 0.5, 1);
  REQUIRE(d1.label_mask() == d2.label_mask());
  const auto d3 = mask_labels(d, 0.5, 2);
  REQUIRE(d1.label_mask() != d3.label_mask());

  REQUIRE_THROWS_AS(mask_labels(d, 1.0, 1), DataError);
  REQUIRE_THROWS_AS(mask_labels(d, -0.1, 1), DataError);
}

TEST_CASE("decode round-trips categorical and binary exactly") {
  const auto path = write_temp_csv("rt", "age,sex,income\n30,M,1\n35,F,0\n42.5,F,1\n");
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  std::remove(path.c_str());

  const auto table = decode(d, d.encoded());
  REQUIRE(table[0][1] == "M");
  REQUIRE(table[1][1] == "F");
  REQUIRE(table[0][2] == "1");
  REQUIRE(table[1][2] == "0");
  // continuous round-trips within scaling precision
  REQUIRE(std::stod(table[2][0]) == Catch::Approx(42.5).margin(1e-9));
}

TEST_CASE("decode rejects invalid one-hot groups") {
  const auto path = write_temp_csv("oh", "age,sex,income\n30,M,1\n");
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  std::remove(path.c_str());
  Matrix bad = d.encoded();
  bad(0, 1) = 0.0;
  bad(0, 2) = 0.0;
  REQUIRE_THROWS_AS(decode(d, bad), DataError);
}

TEST_CASE("continuous decode applies the stored linear scale") {
  ContinuousScale sc{0.0, 100.0};
  REQUIRE(sc.decode(0.5) == Catch::Approx(50.0));
  REQUIRE(sc.encode(25.0) == Catch::Approx(0.25));
}

TEST_CASE("stratified split preserves proportions and is deterministic") {
  std::string body = "age,sex,income\n";
  RngStream r(3);
  for (int i = 0; i < 1000; ++i) {
    const bool male = r.uniform() < 0.5;
    const bool pos = r.uniform() < (male ? 0.7 : 0.3);
    body += std::to_string(20 + i % 50) + "," + (male ? "M" : "F") + "," + (pos ? "1" : "0") + "\n";
  }
  const auto path = write_temp_csv("split", body);
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  std::remove(path.c_str());

  auto [train, test] = stratified_split(d, 0.85, 9);
  REQUIRE(train.n_rows() + test.n_rows() == 1000);
  REQUIRE(std::abs(static_cast<double>(train.n_rows()) - 850.0) <= 4.0);
  REQUIRE(train.split() == SplitTag::train);
  REQUIRE(test.split() == SplitTag::test);

  const auto prior_all = d.label_prior();
  const auto prior_tr = train.label_prior();
  REQUIRE(std::abs(prior_all[1] - prior_tr[1]) < 0.01);

  auto [train2, test2] = stratified_split(d, 0.85, 9);
  REQUIRE(train.encoded() == train2.encoded());
}

TEST_CASE("write_csv then load_csv round-trips") {
  const auto path = write_temp_csv("w", "age,sex,income\n30,M,1\n40,F,\n50,M,0\n");
  const auto d = load_csv(path, toy_schema(), SplitTag::train);
  std::remove(path.c_str());

  const auto table = decode(d, d.encoded());
  const std::string out_path = "/tmp/btgan_test_out.csv";
  write_csv(out_path, d.schema(), table, &d.label_mask());
  const auto d2 = load_csv(out_path, toy_schema(), SplitTag::train);
  std::remove(out_path.c_str());
  REQUIRE(d2.label_mask() == d.label_mask());
  REQUIRE((d2.encoded() - d.encoded()).cwiseAbs().maxCoeff() < 1e-12);
}
