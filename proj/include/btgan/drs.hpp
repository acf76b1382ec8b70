// Discriminator rejection sampling (stage 3).
//
// The LDSS-weighted fine-tuning of stage 2 deliberately shifts the sampler
// toward under-represented regions; this filter undoes the shift by
// accepting candidates with probability min(1, r / (L e^gamma)), where r is
// the density ratio implied by the frozen stage-1 discriminator and L is a
// high quantile of pilot ratios. Acceptance runs in log space and consumes a
// per-candidate random stream indexed by candidate ordinal, so batched
// generation cannot change the accept/reject sequence.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "btgan/rng.hpp"
#include "btgan/triple_gan.hpp"

namespace btgan {

class DrsAbortError : public std::runtime_error {
 public:
  DrsAbortError(const std::string& what, long attempts, long accepted, double rate)
      : std::runtime_error(what), attempts(attempts), accepted(accepted), acceptance_rate(rate) {}
  long attempts;
  long accepted;
  double acceptance_rate;
};

struct DrsConfig {
  double l_constant_percentile = 0.999;  // quantile of pilot ratios used for L
  long burn_in = 2000;                   // pilot generations
  double gamma_shift = 0.0;              // logit shift on the acceptance level
  long max_attempts_factor = 50;

  void validate() const {
    if (l_constant_percentile <= 0.0 || l_constant_percentile > 1.0)
      throw std::invalid_argument("l_constant_percentile must lie in (0,1]");
    if (burn_in < 100) throw std::invalid_argument("burn_in must be >= 100");
    if (max_attempts_factor < 1) throw std::invalid_argument("max_attempts_factor must be >= 1");
    if (!std::isfinite(gamma_shift)) throw std::invalid_argument("gamma_shift must be finite");
  }
};

// Density ratios for a generated batch; injectable so exact ratios can be
// supplied on toys with known densities.
using RatioFn = std::function<Vector(const GeneratedBatch&)>;

inline RatioFn frozen_discriminator_ratio(const ModelBundle& bundle) {
  const ModelBundle* b = &bundle;
  return [b](const GeneratedBatch& batch) { return discriminator_density_ratio(*b, batch.x, batch.y); };
}

struct LEstimate {
  double l = 1.0;
  bool saturated = false;  // every pilot ratio sat at the clamp ceiling
};

// Empirical quantile (lowest value with rank >= p * n).
inline double ratio_quantile(std::vector<double> ratios, double percentile) {
  if (ratios.empty()) throw std::invalid_argument("ratio_quantile: no ratios");
  std::sort(ratios.begin(), ratios.end());
  const auto n = static_cast<double>(ratios.size());
  auto idx = static_cast<std::size_t>(std::ceil(percentile * n)) - 1;
  idx = std::min(idx, ratios.size() - 1);
  return ratios[idx];
}

inline LEstimate estimate_l_from_ratios(const std::vector<double>& ratios, double percentile) {
  LEstimate out;
  out.l = ratio_quantile(ratios, percentile);
  out.saturated = true;
  for (double r : ratios)
    if (r < 1.0 / kRatioClamp) {
      out.saturated = false;
      break;
    }
  return out;
}

// L from pilot generations scored by the frozen discriminator.
inline LEstimate estimate_l(const ModelBundle& bundle, const DrsConfig& cfg, std::uint64_t seed,
                            const RatioFn& ratio_fn = {}) {
  cfg.validate();
  const RatioFn fn = ratio_fn ? ratio_fn : frozen_discriminator_ratio(bundle);
  const auto pilots = generate(bundle, cfg.burn_in, substream_seed(seed, "drs-pilot"),
                               bundle.stage >= 2 ? GenerationStage::transformed : GenerationStage::pretrain);
  const Vector r = fn(pilots);
  std::vector<double> ratios(r.data(), r.data() + r.size());
  return estimate_l_from_ratios(ratios, cfg.l_constant_percentile);
}

struct DrsResult {
  GeneratedBatch batch;  // exactly n_target accepted rows, stage drs_filtered
  double l_constant = 1.0;
  double acceptance_rate = 0.0;
  long attempts = 0;
};

// Filters generated candidates until n_target rows are accepted. Candidates
// are produced in deterministic chunks; candidate i is accepted iff
// log u_i < log r_i - log L - gamma, with u_i drawn from the indexed stream.
inline DrsResult drs_filter(const ModelBundle& bundle, long n_target, const DrsConfig& cfg,
                            std::uint64_t seed, const RatioFn& ratio_fn = {},
                            const double* l_override = nullptr) {
  cfg.validate();
  if (n_target <= 0) throw std::invalid_argument("drs_filter: n_target must be positive");
  const RatioFn fn = ratio_fn ? ratio_fn : frozen_discriminator_ratio(bundle);

  DrsResult out;
  out.l_constant = l_override ? *l_override : estimate_l(bundle, cfg, seed, ratio_fn).l;
  if (out.l_constant <= 0.0) throw std::invalid_argument("drs_filter: L must be positive");
  const double log_threshold_base = std::log(out.l_constant) + cfg.gamma_shift;

  const std::uint64_t accept_seed = substream_seed(seed, "drs-accept");
  const long max_attempts = n_target * cfg.max_attempts_factor;

  Matrix xs;
  Matrix ys;
  long accepted = 0;
  long ordinal = 0;
  long chunk_index = 0;
  while (accepted < n_target) {
    if (ordinal >= max_attempts) {
      const double rate = ordinal > 0 ? static_cast<double>(accepted) / static_cast<double>(ordinal) : 0.0;
      throw DrsAbortError("rejection sampling exceeded the attempt budget (acceptance rate " +
                              std::to_string(rate) + ")",
                          ordinal, accepted, rate);
    }
    const long chunk = std::min<long>(4096, max_attempts - ordinal);
    const auto candidates =
        generate(bundle, chunk, substream_seed(seed, "drs-chunk-" + std::to_string(chunk_index++)),
                 GenerationStage::drs_filtered);
    const Vector r = fn(candidates);
    if (xs.cols() == 0) {
      xs = Matrix(n_target, candidates.x.cols());
      ys = Matrix(n_target, candidates.y.cols());
    }
    for (Eigen::Index i = 0; i < chunk && accepted < n_target; ++i, ++ordinal) {
      const double u = indexed_uniform(accept_seed, static_cast<std::uint64_t>(ordinal));
      if (std::log(std::max(u, 1e-300)) < std::log(r[i]) - log_threshold_base) {
        xs.row(accepted) = candidates.x.row(i);
        ys.row(accepted) = candidates.y.row(i);
        ++accepted;
      }
    }
  }

  out.batch.x = std::move(xs);
  out.batch.y = std::move(ys);
  out.batch.stage = GenerationStage::drs_filtered;
  out.batch.seed = seed;
  out.attempts = ordinal;
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(ordinal);
  return out;
}

}  // namespace btgan
