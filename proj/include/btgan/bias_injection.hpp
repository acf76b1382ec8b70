// Ground-truth-biased toy populations.
//
// Generative story: a latent score z is drawn from a Gaussian mixture whose
// last component is a designated minority segment; a balanced binary group
// membership shifts the label propensity through a probit link. Because
// group and z are independent, every conditional label rate has a closed
// form, which the synthesizer stores next to the data for oracle checks.
//
//   z    ~ sum_j w_j N(mu_j, sigma_j^2)        (segment j observable)
//   S    ~ Bernoulli(1/2)                      (sensitive group)
//   Y|z,S~ Bernoulli(Phi(k z + b_S)),  b_1 = +beta, b_0 = -beta
//   f1,f2 = z + noise                          (signal features)
//   proxy = S with probability proxy_agreement
//
// correlation_strength in [-1,1] tunes beta nonlinearly: 0 gives
// independence, +/-1 collapses to Y = S (resp. Y = 1-S). In between, beta is
// solved so the conditional rate gap P(Y=1|S=1)-P(Y=1|S=0) equals the value
// of the calibrated tangent ramp, keeping moderate settings learnable.
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "btgan/dataset.hpp"
#include "btgan/rng.hpp"
#include "btgan/schema.hpp"

namespace btgan {

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double spread = 1.0;
};

struct BiasInjectionSpec {
  long n_rows = 10000;
  std::vector<MixtureComponent> base_distribution{{0.95, 0.0, 1.0}, {0.05, 3.0, 0.5}};
  double correlation_strength = 0.0;  // in [-1, 1]
  double minority_fraction = 0.05;    // weight of the last (designated) component
  double proxy_agreement = 0.95;      // in [0.5, 1]
  double label_missing_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_rows <= 0) throw DataError("bias spec: n_rows must be positive");
    if (base_distribution.size() < 2)
      throw DataError("bias spec: base_distribution needs >= 2 components (last is the minority segment)");
    for (const auto& c : base_distribution) {
      if (c.weight < 0.0) throw DataError("bias spec: negative mixture weight");
      if (c.spread <= 0.0) throw DataError("bias spec: mixture spread must be positive");
    }
    if (correlation_strength < -1.0 || correlation_strength > 1.0)
      throw DataError("bias spec: correlation_strength must lie in [-1,1]");
    if (minority_fraction <= 0.0 || minority_fraction > 0.5)
      throw DataError("bias spec: minority_fraction must lie in (0, 0.5]");
    if (proxy_agreement < 0.5 || proxy_agreement > 1.0)
      throw DataError("bias spec: proxy_agreement must lie in [0.5, 1]");
    if (label_missing_fraction < 0.0 || label_missing_fraction >= 1.0)
      throw DataError("bias spec: label_missing_fraction must lie in [0, 1)");
  }
};

// Fixed internal constants of the synthesizer (see file comment).
namespace bias_constants {
inline constexpr double k_signal = 1.4;       // weight of z in the label propensity
inline constexpr double shift_scale = 0.20;   // scale of the tangent ramp for beta
inline constexpr double feature_noise = 0.6;  // stddev of f1/f2 noise around z
}  // namespace bias_constants

struct BiasGroundTruth {
  double beta = 0.0;            // probit shift (|c| < 1 only)
  double rate_s1 = 0.5;         // P(Y=1 | S=1)
  double rate_s0 = 0.5;         // P(Y=1 | S=0)
  double mi_nats = 0.0;         // I(Y;S) of the population joint
  bool degenerate = false;      // |c| == 1, Y determined by S
  std::vector<double> segment_weights;
};

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

// I(Y;S) for S ~ Bernoulli(ps), Y|S=s ~ Bernoulli(rates[s]).
inline double discrete_mi_2x2(double ps, double rate1, double rate0) {
  const double py = ps * rate1 + (1.0 - ps) * rate0;
  return binary_entropy(py) - ps * binary_entropy(rate1) - (1.0 - ps) * binary_entropy(rate0);
}

}  // namespace detail

// Population label rate P(Y=1 | S-shift b) under the mixture:
//   sum_j w_j Phi((k mu_j + b) / sqrt(1 + k^2 sigma_j^2)).
inline double bias_population_rate(const std::vector<MixtureComponent>& mix, double k, double b) {
  double total_w = 0.0, rate = 0.0;
  for (const auto& c : mix) total_w += c.weight;
  for (const auto& c : mix)
    rate += (c.weight / total_w) *
            std_normal_cdf((k * c.mean + b) / std::sqrt(1.0 + k * k * c.spread * c.spread));
  return rate;
}

inline BiasGroundTruth bias_ground_truth(const BiasInjectionSpec& spec) {
  spec.validate();
  BiasGroundTruth gt;

  auto mix = spec.base_distribution;
  double head_w = 0.0;
  for (std::size_t j = 0; j + 1 < mix.size(); ++j) head_w += mix[j].weight;
  if (head_w <= 0.0) throw DataError("bias spec: non-minority components must carry weight");
  for (std::size_t j = 0; j + 1 < mix.size(); ++j)
    mix[j].weight *= (1.0 - spec.minority_fraction) / head_w;
  mix.back().weight = spec.minority_fraction;
  for (const auto& c : mix) gt.segment_weights.push_back(c.weight);

  const double c = spec.correlation_strength;
  if (std::abs(std::abs(c) - 1.0) < 1e-12) {
    gt.degenerate = true;
    gt.rate_s1 = c > 0 ? 1.0 : 0.0;
    gt.rate_s0 = c > 0 ? 0.0 : 1.0;
    gt.mi_nats = std::numbers::ln2;
    return gt;
  }

  const double k = bias_constants::k_signal;
  const double target_gap =
      2.0 * std_normal_cdf(bias_constants::shift_scale * std::tan(std::numbers::pi * std::abs(c) / 2.0) /
                           std::sqrt(1.0 + k * k)) -
      1.0;

  // Solve beta so the population rate gap equals target_gap (monotone).
  double beta = 0.0;
  if (target_gap > 0.0) {
    double lo = 0.0, hi = 1.0;
    auto gap_at = [&](double b) {
      return bias_population_rate(mix, k, b) - bias_population_rate(mix, k, -b);
    };
    while (gap_at(hi) < target_gap) {
      hi *= 2.0;
      if (hi > 1e6) throw DataError("bias spec: infeasible correlation_strength for this mixture");
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (gap_at(mid) < target_gap ? lo : hi) = mid;
    }
    beta = 0.5 * (lo + hi);
  }
  if (c < 0.0) beta = -beta;

  gt.beta = beta;
  gt.rate_s1 = bias_population_rate(mix, k, beta);
  gt.rate_s0 = bias_population_rate(mix, k, -beta);
  gt.mi_nats = detail::discrete_mi_2x2(0.5, gt.rate_s1, gt.rate_s0);
  return gt;
}

inline TableSchema bias_toy_schema(std::size_t n_segments) {
  std::vector<std::string> seg_names;
  for (std::size_t j = 0; j + 1 < n_segments; ++j) seg_names.push_back("seg" + std::to_string(j));
  seg_names.push_back("minority");
  return TableSchema({
      {"f1", ColumnKind::continuous, {}, false, false},
      {"f2", ColumnKind::continuous, {}, false, false},
      {"group", ColumnKind::categorical, {"a", "b"}, true, false},
      {"proxy", ColumnKind::categorical, {"a", "b"}, false, false},
      {"segment", ColumnKind::categorical, seg_names, false, false},
      {"outcome", ColumnKind::binary, {}, false, true},
  });
}

struct BiasedDataset {
  Dataset data;
  BiasGroundTruth truth;
};

inline BiasedDataset synthesize_biased(const BiasInjectionSpec& spec) {
  spec.validate();
  const BiasGroundTruth gt = bias_ground_truth(spec);
  const TableSchema schema = bias_toy_schema(spec.base_distribution.size());

  RngStream rng(substream_seed(spec.seed, "bias-injection"));
  const long n = spec.n_rows;
  const double k = bias_constants::k_signal;

  std::vector<double> f1(static_cast<std::size_t>(n)), f2(static_cast<std::size_t>(n));
  std::vector<int> s(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n)),
      seg(static_cast<std::size_t>(n)), proxy(static_cast<std::size_t>(n));

  auto mix = spec.base_distribution;
  for (std::size_t j = 0; j < mix.size(); ++j) mix[j].weight = gt.segment_weights[j];
  std::vector<double> weights;
  for (const auto& cmp : mix) weights.push_back(cmp.weight);

  double fmin = std::numeric_limits<double>::infinity();
  double fmax = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    seg[r] = static_cast<int>(rng.categorical(weights));
    const double z = rng.normal(mix[static_cast<std::size_t>(seg[r])].mean,
                                mix[static_cast<std::size_t>(seg[r])].spread);
    s[r] = rng.bernoulli(0.5);
    if (gt.degenerate) {
      y[r] = spec.correlation_strength > 0 ? s[r] : 1 - s[r];
    } else {
      const double shift = s[r] == 1 ? gt.beta : -gt.beta;
      y[r] = rng.bernoulli(std_normal_cdf(k * z + shift));
    }
    proxy[r] = rng.bernoulli(spec.proxy_agreement) ? s[r] : 1 - s[r];
    f1[r] = z + rng.normal(0.0, bias_constants::feature_noise);
    f2[r] = z + rng.normal(0.0, bias_constants::feature_noise);
    fmin = std::min({fmin, f1[r], f2[r]});
    fmax = std::max({fmax, f1[r], f2[r]});
  }

  std::vector<ContinuousScale> scales{{fmin, fmax}, {fmin, fmax}};
  Matrix rows = Matrix::Zero(n, schema.encoded_width());
  const int seg_off = schema.column_offset(schema.column_index("segment"));
  for (long i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    rows(i, 0) = scales[0].encode(f1[r]);
    rows(i, 1) = scales[1].encode(f2[r]);
    rows(i, 2 + s[r]) = 1.0;      // group one-hot
    rows(i, 4 + proxy[r]) = 1.0;  // proxy one-hot
    rows(i, seg_off + seg[r]) = 1.0;
    rows(i, schema.encoded_width() - 1) = static_cast<double>(y[r]);
  }

  Dataset data(schema, std::move(rows), std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1),
               SplitTag::train, std::move(scales));
  if (spec.label_missing_fraction > 0.0)
    data = mask_labels(data, spec.label_missing_fraction, substream_seed(spec.seed, "bias-mask"));
  return BiasedDataset{std::move(data), gt};
}

}  // namespace btgan
