// Census-style benchmark generator.
//
// Produces a dataset with the Adult-income schema shape (demographic
// features, a binary income label, sex as the protected attribute) whose
// population statistics are calibrated so a logistic model trained on it
// reproduces the reference behaviour of the public benchmark: predicted
// positive-rate gap between sexes near 0.12 and precision/recall near
// 0.90/0.94 for the majority class. Signal features are independent of sex;
// the sex effect enters the label propensity directly, so the bias is
// removable without destroying feature signal.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "btgan/bias_injection.hpp"
#include "btgan/dataset.hpp"
#include "btgan/rng.hpp"
#include "btgan/schema.hpp"

namespace btgan {

namespace adult_constants {
inline constexpr double k_signal = 1.8;
inline constexpr double rate_female = 0.86;  // P(income = "<=50K" | Female)
inline constexpr double rate_male = 0.74;    // P(income = "<=50K" | Male)
inline constexpr double p_female = 0.33;
}  // namespace adult_constants

inline TableSchema adult_mimic_schema() {
  return TableSchema({
      {"age", ColumnKind::continuous, {}, false, false},
      {"education_num", ColumnKind::continuous, {}, false, false},
      {"hours_per_week", ColumnKind::continuous, {}, false, false},
      {"workclass", ColumnKind::categorical, {"private", "self_emp", "gov", "other"}, false, false},
      {"sex", ColumnKind::categorical, {"Male", "Female"}, true, false},
      {"income", ColumnKind::categorical, {">50K", "<=50K"}, false, true},
  });
}

struct AdultMimicTruth {
  double rate_female = adult_constants::rate_female;
  double rate_male = adult_constants::rate_male;
  double mi_nats = 0.0;
};

inline double probit_inverse(double p) {
  // Acklam-style rational approximation, adequate for calibration constants.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

struct AdultMimicDataset {
  Dataset data;
  AdultMimicTruth truth;
};

inline AdultMimicDataset synthesize_adult_mimic(long n_rows, std::uint64_t seed) {
  using namespace adult_constants;
  const TableSchema schema = adult_mimic_schema();
  RngStream rng(substream_seed(seed, "adult-mimic"));

  const double s1 = std::sqrt(1.0 + k_signal * k_signal);
  const double d_shift = (probit_inverse(rate_female) - probit_inverse(rate_male)) * s1 / 2.0;
  const double t_base = (probit_inverse(rate_female) + probit_inverse(rate_male)) * s1 / 2.0;

  const std::vector<double> work_probs{0.694, 0.091, 0.131, 0.084};

  Matrix rows = Matrix::Zero(n_rows, schema.encoded_width());
  std::vector<double> age(static_cast<std::size_t>(n_rows)), edu(static_cast<std::size_t>(n_rows)),
      hours(static_cast<std::size_t>(n_rows));
  std::vector<int> sex(static_cast<std::size_t>(n_rows)), inc(static_cast<std::size_t>(n_rows)),
      work(static_cast<std::size_t>(n_rows));

  auto clampd = [](double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); };

  for (long i = 0; i < n_rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    const double z = rng.normal();
    sex[r] = rng.bernoulli(p_female);  // 1 = Female
    const double shift = sex[r] == 1 ? d_shift : -d_shift;
    inc[r] = rng.bernoulli(std_normal_cdf(k_signal * z + t_base + shift));  // 1 = "<=50K"
    work[r] = static_cast<int>(rng.categorical(work_probs));
    age[r] = clampd(38.0 - 9.0 * (z + rng.normal(0.0, 0.45)), 17.0, 90.0);
    edu[r] = clampd(std::round(10.0 - 2.2 * (z + rng.normal(0.0, 0.7))), 1.0, 16.0);
    hours[r] = clampd(std::round(40.0 - 10.0 * (z + rng.normal(0.0, 0.9))), 1.0, 99.0);
  }

  auto fit = [](const std::vector<double>& v) {
    ContinuousScale sc{v[0], v[0]};
    for (double x : v) {
      sc.min = std::min(sc.min, x);
      sc.max = std::max(sc.max, x);
    }
    return sc;
  };
  std::vector<ContinuousScale> scales{fit(age), fit(edu), fit(hours)};

  for (long i = 0; i < n_rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    rows(i, 0) = scales[0].encode(age[r]);
    rows(i, 1) = scales[1].encode(edu[r]);
    rows(i, 2) = scales[2].encode(hours[r]);
    rows(i, 3 + work[r]) = 1.0;
    rows(i, 7 + sex[r]) = 1.0;
    rows(i, 9 + inc[r]) = 1.0;
  }

  AdultMimicTruth truth;
  truth.mi_nats = detail::discrete_mi_2x2(p_female, rate_female, rate_male);

  Dataset data(schema, std::move(rows), std::vector<std::uint8_t>(static_cast<std::size_t>(n_rows), 1),
               SplitTag::train, std::move(scales));
  return AdultMimicDataset{std::move(data), truth};
}

}  // namespace btgan
