// Sub-group representation accounting.
//
// LDS is the log odds ratio of a sub-group's frequency between synthetic and
// real data; LDSS averages it over a trailing window of training epochs and
// drives the weighted batch sampler. Frequencies are clamped away from {0,1}
// so absent groups stay finite and classify as missing.
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "btgan/dataset.hpp"
#include "btgan/schema.hpp"

namespace btgan {

inline constexpr double kFreqClamp = 1e-4;  // epsilon_p

struct SubgroupCondition {
  std::string column;
  std::optional<std::string> equals;                  // categorical / binary value
  std::optional<std::pair<double, double>> range;     // continuous, [lo, hi)
};

struct SubgroupSpec {
  std::string id;
  std::string label;
  std::vector<SubgroupCondition> conditions;  // conjunction
};

enum class RepresentationBand { missing, under, adequate, over };

inline std::string to_string(RepresentationBand b) {
  switch (b) {
    case RepresentationBand::missing: return "missing";
    case RepresentationBand::under: return "under";
    case RepresentationBand::adequate: return "adequate";
    case RepresentationBand::over: return "over";
  }
  return "?";
}

// Band boundaries of the 90-percent rule: {log .8, log .9, -log .9, -log .8}.
struct BandThresholds {
  double missing_below = std::log(0.8);
  double under_below = std::log(0.9);
  double adequate_below = -std::log(0.9);
  double over_cap = -std::log(0.8);  // retained for reporting; above it still classifies over
};

inline RepresentationBand classify_band(double lds_value, const BandThresholds& t = {}) {
  if (!std::isfinite(lds_value)) throw std::invalid_argument("classify_band: non-finite LDS");
  if (lds_value <= t.missing_below) return RepresentationBand::missing;
  if (lds_value <= t.under_below) return RepresentationBand::under;
  if (lds_value <= t.adequate_below) return RepresentationBand::adequate;
  return RepresentationBand::over;
}

inline double clamp_frequency(double p) {
  return std::min(1.0 - kFreqClamp, std::max(kFreqClamp, p));
}

// log( odds(p_synth) / odds(p_real) ), inputs clamped to [1e-4, 1-1e-4].
inline double lds(double p_synth, double p_real) {
  const double ps = clamp_frequency(p_synth);
  const double pr = clamp_frequency(p_real);
  return std::log((ps / (1.0 - ps)) / (pr / (1.0 - pr)));
}

// Evaluates subgroup membership over full-width encoded rows. Continuous
// conditions compare against decoded (original-unit) values.
class SubgroupEvaluator {
 public:
  SubgroupEvaluator(const TableSchema& schema, const std::vector<ContinuousScale>& scales,
                    std::vector<SubgroupSpec> subgroups)
      : schema_(schema), scales_(scales), subgroups_(std::move(subgroups)) {
    std::map<int, int> cont_index;
    int ci = 0;
    for (int c = 0; c < schema_.n_columns(); ++c)
      if (schema_.column(c).kind == ColumnKind::continuous) cont_index[c] = ci++;

    for (const auto& sg : subgroups_) {
      if (sg.conditions.empty())
        throw std::invalid_argument("subgroup '" + sg.id + "' has no conditions");
      std::vector<Compiled> comp;
      for (const auto& cond : sg.conditions) {
        Compiled cc;
        const int col = schema_.column_index(cond.column);
        const auto& cs = schema_.column(col);
        cc.offset = schema_.column_offset(col);
        if (cond.equals.has_value()) {
          if (cs.kind == ColumnKind::continuous)
            throw std::invalid_argument("subgroup '" + sg.id + "': equality condition on continuous column");
          if (cs.kind == ColumnKind::categorical) {
            cc.kind = Compiled::Kind::one_hot;
            cc.offset += cs.category_index(*cond.equals);
          } else {
            cc.kind = Compiled::Kind::binary;
            if (*cond.equals != "0" && *cond.equals != "1")
              throw std::invalid_argument("subgroup '" + sg.id + "': binary condition must be 0 or 1");
            cc.binary_value = *cond.equals == "1";
          }
        } else if (cond.range.has_value()) {
          if (cs.kind != ColumnKind::continuous)
            throw std::invalid_argument("subgroup '" + sg.id + "': range condition on non-continuous column");
          cc.kind = Compiled::Kind::range;
          cc.lo = cond.range->first;
          cc.hi = cond.range->second;
          cc.scale = scales_.at(static_cast<std::size_t>(cont_index.at(col)));
        } else {
          throw std::invalid_argument("subgroup '" + sg.id + "': condition needs equals or range");
        }
        comp.push_back(cc);
      }
      compiled_.push_back(std::move(comp));
    }
  }

  const std::vector<SubgroupSpec>& subgroups() const { return subgroups_; }
  std::size_t size() const { return subgroups_.size(); }

  // membership[j][r] = 1 iff row r belongs to subgroup j.
  std::vector<std::vector<char>> memberships(const Matrix& encoded) const {
    std::vector<std::vector<char>> out(compiled_.size(),
                                       std::vector<char>(static_cast<std::size_t>(encoded.rows()), 0));
    for (std::size_t j = 0; j < compiled_.size(); ++j) {
      for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
        bool in = true;
        for (const auto& cc : compiled_[j]) {
          const double v = encoded(r, cc.offset);
          switch (cc.kind) {
            case Compiled::Kind::one_hot:
              in = in && v > 0.5;
              break;
            case Compiled::Kind::binary:
              in = in && ((v > 0.5) == cc.binary_value);
              break;
            case Compiled::Kind::range: {
              const double decoded = cc.scale.decode(v);
              in = in && decoded >= cc.lo && decoded < cc.hi;
              break;
            }
          }
          if (!in) break;
        }
        out[j][static_cast<std::size_t>(r)] = in ? 1 : 0;
      }
    }
    return out;
  }

  std::vector<double> frequencies(const Matrix& encoded) const {
    const auto mem = memberships(encoded);
    std::vector<double> out(mem.size(), 0.0);
    const auto n = static_cast<double>(encoded.rows());
    for (std::size_t j = 0; j < mem.size(); ++j) {
      double c = 0;
      for (char m : mem[j]) c += m;
      out[j] = n > 0 ? c / n : 0.0;
    }
    return out;
  }

  std::vector<double> counts(const Matrix& encoded) const {
    const auto mem = memberships(encoded);
    std::vector<double> out(mem.size(), 0.0);
    for (std::size_t j = 0; j < mem.size(); ++j)
      for (char m : mem[j]) out[j] += m;
    return out;
  }

 private:
  struct Compiled {
    enum class Kind { one_hot, binary, range } kind = Kind::one_hot;
    int offset = 0;
    bool binary_value = false;
    double lo = 0, hi = 0;
    ContinuousScale scale;
  };

  TableSchema schema_;
  std::vector<ContinuousScale> scales_;
  std::vector<SubgroupSpec> subgroups_;
  std::vector<std::vector<Compiled>> compiled_;
};

// Per-epoch LDS values: trace[k][j] is subgroup j at epoch k.
using LdsTrace = std::vector<std::vector<double>>;

// Per-instance LDSS over the T most recent epochs: the mean over the window
// of the mean LDS of the subgroups containing the instance; instances in no
// monitored subgroup score 0.
inline Vector ldss_scores(const LdsTrace& trace, std::size_t window_T,
                          const std::vector<std::vector<char>>& membership, std::size_t n_instances) {
  if (trace.empty() || window_T == 0) throw std::invalid_argument("ldss: empty window");
  const std::size_t t0 = trace.size() > window_T ? trace.size() - window_T : 0;
  const auto used = static_cast<double>(trace.size() - t0);

  // mean LDS per subgroup over the window
  std::vector<double> mean_lds(membership.size(), 0.0);
  for (std::size_t j = 0; j < membership.size(); ++j) {
    for (std::size_t k = t0; k < trace.size(); ++k) mean_lds[j] += trace[k].at(j);
    mean_lds[j] /= used;
  }

  Vector out = Vector::Zero(static_cast<Eigen::Index>(n_instances));
  for (std::size_t r = 0; r < n_instances; ++r) {
    double sum = 0.0;
    int hits = 0;
    for (std::size_t j = 0; j < membership.size(); ++j) {
      if (membership[j][r]) {
        sum += mean_lds[j];
        ++hits;
      }
    }
    out[static_cast<Eigen::Index>(r)] = hits > 0 ? sum / hits : 0.0;
  }
  return out;
}

struct SamplingTable {
  Vector weight;
  Vector probability;
  std::size_t window_T = 1;

  void validate() const {
    if (probability.size() == 0) throw std::invalid_argument("sampling table is empty");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < probability.size(); ++i) {
      if (probability[i] < 0.0) throw std::invalid_argument("negative sampling probability");
      sum += probability[i];
    }
    if (std::abs(sum - 1.0) > 1e-8)
      throw std::invalid_argument("sampling probabilities sum to " + std::to_string(sum));
  }
};

// Raw LDSS scores may be negative, so literal normalization is ill-defined;
// exponential weights keep the intent (under-represented instances get more
// mass) while staying strictly positive.
inline SamplingTable sampling_table(const Vector& ldss, double temperature, std::size_t window_T = 1) {
  if (temperature <= 0.0) throw std::invalid_argument("sampling temperature must be positive");
  SamplingTable t;
  t.window_T = window_T;
  // subtract the max exponent for overflow safety; normalization removes it
  const double m = (-ldss / temperature).maxCoeff();
  t.weight = ((-ldss / temperature).array() - m).exp();
  t.probability = t.weight / t.weight.sum();
  t.validate();
  return t;
}

struct SubgroupAuditRecord {
  std::string id;
  double p_real = 0.0;
  double p_synth = 0.0;
  double lds_value = 0.0;
  RepresentationBand band = RepresentationBand::adequate;
  bool auditable = true;
};

struct DpDgpAudit {
  std::vector<SubgroupAuditRecord> records;
  bool verdict = false;
  double delta = -std::log(0.9);
  std::map<std::string, double> band_proportions;  // over auditable subgroups
};

// Density-preservation audit: true iff |LDS| < delta for every monitored
// subgroup that is present in the real data.
inline DpDgpAudit audit_dp_dgp(const SubgroupEvaluator& eval, const Matrix& real_encoded,
                               const Matrix& synth_encoded, double delta = -std::log(0.9)) {
  if (real_encoded.rows() == 0 || synth_encoded.rows() == 0)
    throw std::invalid_argument("audit_dp_dgp: both samples must be non-empty");
  DpDgpAudit audit;
  audit.delta = delta;
  const auto pr = eval.frequencies(real_encoded);
  const auto cr = eval.counts(real_encoded);
  const auto ps = eval.frequencies(synth_encoded);

  bool all_ok = true;
  int n_auditable = 0;
  std::map<std::string, int> band_counts;
  for (std::size_t j = 0; j < eval.size(); ++j) {
    SubgroupAuditRecord rec;
    rec.id = eval.subgroups()[j].id;
    rec.p_real = pr[j];
    rec.p_synth = ps[j];
    rec.auditable = cr[j] > 0;
    rec.lds_value = lds(ps[j], pr[j]);
    rec.band = classify_band(rec.lds_value);
    if (rec.auditable) {
      ++n_auditable;
      ++band_counts[to_string(rec.band)];
      if (std::abs(rec.lds_value) >= delta) all_ok = false;
    }
    audit.records.push_back(std::move(rec));
  }
  audit.verdict = n_auditable > 0 && all_ok;
  for (const auto& [band, count] : band_counts)
    audit.band_proportions[band] = static_cast<double>(count) / std::max(1, n_auditable);
  return audit;
}

}  // namespace btgan
