// Downstream utility, fairness-gap, leakage and distribution metrics.
//
// Downstream models: a softmax-regression linear classifier trained by
// deterministic full-batch gradient descent, and a bagged decision-tree
// ensemble. Both expose hard labels and scores. All metrics are pure
// functions of (data, seed).
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "btgan/dataset.hpp"
#include "btgan/rng.hpp"

namespace btgan {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DownstreamKind { linear_classifier, tree_ensemble };

struct DownstreamModelSpec {
  DownstreamKind kind = DownstreamKind::linear_classifier;
  // linear classifier
  double l2 = 1e-4;
  int iterations = 400;
  double learning_rate = 0.8;
  // tree ensemble
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 4;
  std::uint64_t seed = 0;
};

// Multinomial logistic regression, full-batch gradient descent.
class SoftmaxRegression {
 public:
  SoftmaxRegression() = default;

  void fit(const Matrix& x, const std::vector<int>& y, int n_classes, const DownstreamModelSpec& spec) {
    n_classes_ = n_classes;
    w_ = Matrix::Zero(x.cols() + 1, n_classes);
    Matrix xb(x.rows(), x.cols() + 1);
    xb.leftCols(x.cols()) = x;
    xb.col(x.cols()).setOnes();
    const auto n = static_cast<double>(x.rows());
    Matrix onehot = Matrix::Zero(x.rows(), n_classes);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const int label = y[static_cast<std::size_t>(r)];
      if (label < 0 || label >= n_classes) throw MetricError("label out of range");
      onehot(r, label) = 1.0;
    }
    for (int it = 0; it < spec.iterations; ++it) {
      Matrix p = probabilities_with_bias(xb);
      Matrix grad = xb.transpose() * (p - onehot) / n + spec.l2 * w_;
      grad.row(x.cols()).array() -= spec.l2 * w_.row(x.cols()).array();  // no penalty on bias
      w_ -= spec.learning_rate * grad;
    }
  }

  Matrix probabilities(const Matrix& x) const {
    Matrix xb(x.rows(), x.cols() + 1);
    xb.leftCols(x.cols()) = x;
    xb.col(x.cols()).setOnes();
    return probabilities_with_bias(xb);
  }

  std::vector<int> predict(const Matrix& x) const {
    const Matrix p = probabilities(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      Eigen::Index arg = 0;
      p.row(r).maxCoeff(&arg);
      out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
    }
    return out;
  }

 private:
  Matrix probabilities_with_bias(const Matrix& xb) const {
    Matrix logits = xb * w_;
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double m = logits.row(r).maxCoeff();
      Eigen::ArrayXd e = (logits.row(r).array() - m).exp();
      out.row(r) = e / e.sum();
    }
    return out;
  }

  Matrix w_;
  int n_classes_ = 2;
};

namespace tree_detail {

struct Node {
  int feature = -1;
  double threshold = 0.0;
  double leaf_value = 0.5;  // positive fraction
  int left = -1, right = -1;
  bool is_leaf = true;
};

class Cart {
 public:
  void fit(const Matrix& x, const std::vector<int>& y, const std::vector<std::size_t>& rows,
           int max_depth, int min_leaf) {
    nodes_.clear();
    build(x, y, rows, 0, max_depth, min_leaf);
  }

  double score_row(const Matrix& x, Eigen::Index r) const {
    int node = 0;
    while (!nodes_[static_cast<std::size_t>(node)].is_leaf) {
      const auto& nd = nodes_[static_cast<std::size_t>(node)];
      node = x(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes_[static_cast<std::size_t>(node)].leaf_value;
  }

 private:
  int build(const Matrix& x, const std::vector<int>& y, const std::vector<std::size_t>& rows,
            int depth, int max_depth, int min_leaf) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double pos = 0;
    for (auto r : rows) pos += y[r];
    const double frac = rows.empty() ? 0.5 : pos / static_cast<double>(rows.size());
    nodes_[static_cast<std::size_t>(id)].leaf_value = frac;

    if (depth >= max_depth || rows.size() < 2 * static_cast<std::size_t>(min_leaf) || frac == 0.0 ||
        frac == 1.0)
      return id;

    int best_feature = -1;
    double best_threshold = 0.0, best_gini = gini(pos, static_cast<double>(rows.size()) - pos);
    for (int f = 0; f < x.cols(); ++f) {
      std::vector<std::pair<double, int>> vals;
      vals.reserve(rows.size());
      for (auto r : rows) vals.emplace_back(x(static_cast<Eigen::Index>(r), f), y[r]);
      std::sort(vals.begin(), vals.end());
      double lpos = 0, lcnt = 0;
      const double tot = static_cast<double>(rows.size());
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        lpos += vals[i].second;
        lcnt += 1;
        if (vals[i].first == vals[i + 1].first) continue;
        if (lcnt < min_leaf || tot - lcnt < min_leaf) continue;
        const double g =
            (lcnt / tot) * gini(lpos, lcnt - lpos) +
            ((tot - lcnt) / tot) * gini(pos - lpos, (tot - lcnt) - (pos - lpos));
        if (g < best_gini - 1e-12) {
          best_gini = g;
          best_feature = f;
          best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? left : right).push_back(r);
    if (left.empty() || right.empty()) return id;

    nodes_[static_cast<std::size_t>(id)].is_leaf = false;
    nodes_[static_cast<std::size_t>(id)].feature = best_feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int l = build(x, y, left, depth + 1, max_depth, min_leaf);
    const int r = build(x, y, right, depth + 1, max_depth, min_leaf);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  static double gini(double pos, double neg) {
    const double n = pos + neg;
    if (n <= 0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  std::vector<Node> nodes_;
};

}  // namespace tree_detail

// Bagged decision trees with per-tree bootstrap resampling.
class RandomForest {
 public:
  void fit(const Matrix& x, const std::vector<int>& y, const DownstreamModelSpec& spec) {
    trees_.assign(static_cast<std::size_t>(spec.n_trees), {});
    RngStream rng(substream_seed(spec.seed, "forest"));
    const auto n = static_cast<std::size_t>(x.rows());
    for (auto& tree : trees_) {
      std::vector<std::size_t> rows(n);
      for (auto& r : rows) r = rng.uniform_index(n);
      tree.fit(x, y, rows, spec.max_depth, spec.min_leaf);
    }
  }

  Vector scores(const Matrix& x) const {
    Vector out = Vector::Zero(x.rows());
    for (const auto& tree : trees_)
      for (Eigen::Index r = 0; r < x.rows(); ++r) out[r] += tree.score_row(x, r);
    return out / static_cast<double>(trees_.size());
  }

 private:
  std::vector<tree_detail::Cart> trees_;
};

// Deterministic binary predictor facade over both model kinds.
class DownstreamModel {
 public:
  static DownstreamModel train(const Matrix& x, const std::vector<int>& y,
                               const DownstreamModelSpec& spec) {
    bool saw[2] = {false, false};
    for (int v : y) {
      if (v < 0 || v > 1) throw MetricError("downstream tasks are binary; got label out of {0,1}");
      saw[v] = true;
    }
    if (x.rows() == 0 || !saw[0] || !saw[1])
      throw MetricError("training set must contain both classes");

    DownstreamModel m;
    m.kind_ = spec.kind;
    if (spec.kind == DownstreamKind::linear_classifier) {
      m.linear_ = std::make_shared<SoftmaxRegression>();
      m.linear_->fit(x, y, 2, spec);
    } else {
      m.forest_ = std::make_shared<RandomForest>();
      m.forest_->fit(x, y, spec);
    }
    return m;
  }

  // P(y = 1)
  Vector scores(const Matrix& x) const {
    if (kind_ == DownstreamKind::linear_classifier) return linear_->probabilities(x).col(1);
    return forest_->scores(x);
  }

  std::vector<int> predict(const Matrix& x) const {
    const Vector s = scores(x);
    std::vector<int> out(static_cast<std::size_t>(s.size()));
    for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s[i] > 0.5 ? 1 : 0;
    return out;
  }

 private:
  DownstreamKind kind_ = DownstreamKind::linear_classifier;
  std::shared_ptr<SoftmaxRegression> linear_;
  std::shared_ptr<RandomForest> forest_;
};

// ---- classification metrics ----

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long n() const { return tp + fp + tn + fn; }
};

inline ConfusionCounts confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw MetricError("confusion: size mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1)
      (truth[i] == 1 ? c.tp : c.fp)++;
    else
      (truth[i] == 1 ? c.fn : c.tn)++;
  }
  return c;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  const auto c = confusion(pred, truth);
  return static_cast<double>(c.tp + c.tn) / std::max<long>(1, c.n());
}

inline double precision(const ConfusionCounts& c) {
  return c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
}

inline double recall(const ConfusionCounts& c) {
  return c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
}

inline double f1_score(const std::vector<int>& pred, const std::vector<int>& truth) {
  const auto c = confusion(pred, truth);
  const double p = precision(c), r = recall(c);
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

// AUROC via the rank statistic (Mann-Whitney with midranks for ties).
inline double auroc(const Vector& scores, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size()) throw MetricError("auroc: size mismatch");
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });
  std::vector<double> rank(labels.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[static_cast<Eigen::Index>(idx[j + 1])] ==
                                     scores[static_cast<Eigen::Index>(idx[i])])
      ++j;
    const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  long n_pos = 0, n_neg = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == 1) {
      rank_sum += rank[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) throw MetricError("auroc: needs both classes");
  const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision (step-wise integral of the PR curve).
inline double auprc(const Vector& scores, const std::vector<int>& labels) {
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });
  long n_pos = 0;
  for (int v : labels) n_pos += v == 1 ? 1 : 0;
  if (n_pos == 0) throw MetricError("auprc: no positive labels");
  double tp = 0, fp = 0, ap = 0;
  std::size_t k = 0;
  while (k < idx.size()) {
    std::size_t j = k;  // group ties
    double gtp = 0, gfp = 0;
    while (j < idx.size() &&
           scores[static_cast<Eigen::Index>(idx[j])] == scores[static_cast<Eigen::Index>(idx[k])]) {
      (labels[idx[j]] == 1 ? gtp : gfp) += 1;
      ++j;
    }
    const double prev_recall = tp / static_cast<double>(n_pos);
    tp += gtp;
    fp += gfp;
    const double recall_now = tp / static_cast<double>(n_pos);
    const double prec_now = tp / (tp + fp);
    ap += (recall_now - prev_recall) * prec_now;
    k = j;
  }
  return ap;
}

// P(pred = 1 | group a) - P(pred = 1 | group b).
inline double parity_gap(const std::vector<int>& pred, const std::vector<int>& groups, int group_a,
                         int group_b) {
  if (pred.size() != groups.size()) throw MetricError("parity_gap: size mismatch");
  double na = 0, pa = 0, nb = 0, pb = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (groups[i] == group_a) {
      na += 1;
      pa += pred[i] == 1 ? 1 : 0;
    }
    if (groups[i] == group_b) {
      nb += 1;
      pb += pred[i] == 1 ? 1 : 0;
    }
  }
  if (na == 0 || nb == 0) throw MetricError("parity_gap: empty group");
  return pa / na - pb / nb;
}

// AUROC(group a) - AUROC(group b); nullopt when a group is degenerate (one
// label class), which callers must report as unauditable.
inline std::optional<double> auroc_gap(const Vector& scores, const std::vector<int>& labels,
                                       const std::vector<int>& groups, int group_a, int group_b) {
  auto group_auroc = [&](int g) -> std::optional<double> {
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (groups[i] == g) {
        s.push_back(scores[static_cast<Eigen::Index>(i)]);
        l.push_back(labels[i]);
      }
    }
    bool saw[2] = {false, false};
    for (int v : l) saw[v == 1] = true;
    if (s.empty() || !saw[0] || !saw[1]) return std::nullopt;
    Vector sv = Eigen::Map<Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
    return auroc(sv, l);
  };
  const auto a = group_auroc(group_a);
  const auto b = group_auroc(group_b);
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

// Attacker accuracy predicting the sensitive value from a discrete signal
// (ground-truth labels for data leakage, downstream predictions for model
// leakage). The attacker is a softmax regression on the one-hot signal,
// evaluated on a held-out split.
inline double leakage(const std::vector<int>& signal, const std::vector<int>& sensitive,
                      double heldout_fraction, std::uint64_t seed,
                      const DownstreamModelSpec& attacker_spec = {}) {
  if (signal.size() != sensitive.size()) throw MetricError("leakage: size mismatch");
  if (signal.size() < 10) throw MetricError("leakage: too few pairs");
  if (heldout_fraction <= 0.0 || heldout_fraction >= 1.0)
    throw MetricError("leakage: heldout_fraction must lie in (0,1)");

  int max_signal = 0, max_sens = 0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    if (signal[i] < 0 || sensitive[i] < 0) throw MetricError("leakage: negative category");
    max_signal = std::max(max_signal, signal[i]);
    max_sens = std::max(max_sens, sensitive[i]);
  }
  {
    std::vector<bool> seen(static_cast<std::size_t>(max_sens) + 1, false);
    int distinct = 0;
    for (int s : sensitive)
      if (!seen[static_cast<std::size_t>(s)]) {
        seen[static_cast<std::size_t>(s)] = true;
        ++distinct;
      }
    if (distinct < 2) throw MetricError("leakage: sensitive column is constant");
  }

  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(signal.size()), max_signal + 1);
  for (std::size_t i = 0; i < signal.size(); ++i) x(static_cast<Eigen::Index>(i), signal[i]) = 1.0;

  RngStream rng(substream_seed(seed, "leakage-split"));
  auto order = rng.permutation(signal.size());
  const auto n_test = static_cast<std::size_t>(heldout_fraction * static_cast<double>(signal.size()));
  const std::size_t n_train = signal.size() - n_test;

  Matrix xtr(static_cast<Eigen::Index>(n_train), x.cols());
  std::vector<int> ytr(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    xtr.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[i]));
    ytr[i] = sensitive[order[i]];
  }
  SoftmaxRegression attacker;
  attacker.fit(xtr, ytr, max_sens + 1, attacker_spec);

  Matrix xte(static_cast<Eigen::Index>(n_test), x.cols());
  std::vector<int> yte(n_test);
  for (std::size_t i = 0; i < n_test; ++i) {
    xte.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[n_train + i]));
    yte[i] = sensitive[order[n_train + i]];
  }
  const auto pred = attacker.predict(xte);
  double correct = 0;
  for (std::size_t i = 0; i < n_test; ++i) correct += pred[i] == yte[i] ? 1 : 0;
  return correct / static_cast<double>(n_test);
}

// Mean Jensen-Shannon divergence (base e) over per-column marginals.
// Continuous columns use equal-width histograms over the union support;
// categorical and binary columns use category frequencies.
inline double jsd_marginal(const Dataset& real, const Matrix& synth_full, int bins = 32) {
  const auto& schema = real.schema();
  if (synth_full.cols() != schema.encoded_width()) throw MetricError("jsd_marginal: width mismatch");
  if (synth_full.rows() == 0 || real.n_rows() == 0) throw MetricError("jsd_marginal: empty sample");

  auto jsd_of = [](const std::vector<double>& p, const std::vector<double>& q) {
    double out = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double m = 0.5 * (p[k] + q[k]);
      if (p[k] > 0) out += 0.5 * p[k] * std::log(p[k] / m);
      if (q[k] > 0) out += 0.5 * q[k] * std::log(q[k] / m);
    }
    return out;
  };

  double total = 0.0;
  for (int c = 0; c < schema.n_columns(); ++c) {
    const auto& col = schema.column(c);
    const int off = schema.column_offset(c);
    if (col.kind == ColumnKind::continuous) {
      double lo = std::min(real.encoded().col(off).minCoeff(), synth_full.col(off).minCoeff());
      double hi = std::max(real.encoded().col(off).maxCoeff(), synth_full.col(off).maxCoeff());
      if (hi <= lo) hi = lo + 1e-9;
      std::vector<double> p(static_cast<std::size_t>(bins), 0.0), q(p);
      auto fill = [&](const auto& colv, std::vector<double>& h) {
        for (Eigen::Index r = 0; r < colv.size(); ++r) {
          auto k = static_cast<long>((colv[r] - lo) / (hi - lo) * bins);
          k = std::clamp<long>(k, 0, bins - 1);
          h[static_cast<std::size_t>(k)] += 1.0 / static_cast<double>(colv.size());
        }
      };
      fill(real.encoded().col(off), p);
      fill(synth_full.col(off), q);
      total += jsd_of(p, q);
    } else {
      const int w = col.encoded_width();
      std::vector<double> p(static_cast<std::size_t>(w == 1 ? 2 : w), 0.0), q(p);
      auto fill = [&](const Matrix& m, std::vector<double>& h) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          std::size_t k = 0;
          if (w == 1) {
            k = m(r, off) > 0.5 ? 1 : 0;
          } else {
            Eigen::Index arg = 0;
            m.row(r).segment(off, w).maxCoeff(&arg);
            k = static_cast<std::size_t>(arg);
          }
          h[k] += 1.0 / static_cast<double>(m.rows());
        }
      };
      fill(real.encoded(), p);
      fill(synth_full, q);
      total += jsd_of(p, q);
    }
  }
  return total / schema.n_columns();
}

struct DiscriminativeScore {
  double score = 0.0;         // |accuracy - 0.5|, lower is better
  double raw_accuracy = 0.5;  // held-out real-vs-fake accuracy
};

// Trains a linear real-vs-fake classifier on balanced samples and reports
// the held-out accuracy distance from chance.
inline DiscriminativeScore discriminative_score(const Matrix& real_rows, const Matrix& synth_rows,
                                                std::uint64_t seed,
                                                const DownstreamModelSpec& spec = {}) {
  if (real_rows.cols() != synth_rows.cols()) throw MetricError("discriminative_score: width mismatch");
  const auto n = std::min(real_rows.rows(), synth_rows.rows());
  if (n < 20) throw MetricError("discriminative_score: too few rows");

  RngStream rng(substream_seed(seed, "disc-subsample"));
  auto pick = [&](const Matrix& m) {
    auto order = rng.permutation(static_cast<std::size_t>(m.rows()));
    Matrix out(n, m.cols());
    for (Eigen::Index i = 0; i < n; ++i)
      out.row(i) = m.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]));
    return out;
  };
  const Matrix r = pick(real_rows);
  const Matrix s = pick(synth_rows);

  Matrix x(2 * n, real_rows.cols());
  x.topRows(n) = r;
  x.bottomRows(n) = s;
  std::vector<int> y(static_cast<std::size_t>(2 * n), 0);
  for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = 1;  // real = 1

  auto order = rng.permutation(static_cast<std::size_t>(2 * n));
  const auto n_test = static_cast<Eigen::Index>(0.25 * 2 * static_cast<double>(n));
  const Eigen::Index n_train = 2 * n - n_test;
  Matrix xtr(n_train, x.cols()), xte(n_test, x.cols());
  std::vector<int> ytr(static_cast<std::size_t>(n_train)), yte(static_cast<std::size_t>(n_test));
  for (Eigen::Index i = 0; i < n_train; ++i) {
    xtr.row(i) = x.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]));
    ytr[static_cast<std::size_t>(i)] = y[order[static_cast<std::size_t>(i)]];
  }
  for (Eigen::Index i = 0; i < n_test; ++i) {
    xte.row(i) = x.row(static_cast<Eigen::Index>(order[static_cast<std::size_t>(n_train + i)]));
    yte[static_cast<std::size_t>(i)] = y[order[static_cast<std::size_t>(n_train + i)]];
  }

  SoftmaxRegression clf;
  clf.fit(xtr, ytr, 2, spec);
  const auto pred = clf.predict(xte);
  double correct = 0;
  for (std::size_t i = 0; i < yte.size(); ++i) correct += pred[i] == yte[i] ? 1 : 0;
  DiscriminativeScore out;
  out.raw_accuracy = correct / static_cast<double>(yte.size());
  out.score = std::abs(out.raw_accuracy - 0.5);
  return out;
}

// Plug-in discrete mutual information in nats.
inline double plugin_discrete_mi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw MetricError("plugin_discrete_mi: bad input");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  const auto n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0 / n;
    pa[a[i]] += 1.0 / n;
    pb[b[i]] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [key, p] : joint)
    if (p > 0) mi += p * std::log(p / (pa[key.first] * pb[key.second]));
  return mi;
}

struct ParityMiOracle {
  bool parity_holds = false;
  double plug_in_mi = 0.0;
};

// Exact sample-level check of the parity <-> zero-MI equivalence: parity
// holds iff the largest pairwise positive-rate difference across sensitive
// groups is below 0.01; the MI is the plug-in estimate on the same sample.
inline ParityMiOracle parity_mi_oracle(const std::vector<int>& labels,
                                       const std::vector<int>& sensitive, double tolerance = 0.01) {
  if (labels.size() != sensitive.size() || labels.empty())
    throw MetricError("parity_mi_oracle: bad input");
  std::map<int, std::pair<double, double>> per_group;  // group -> (count, positives)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& g = per_group[sensitive[i]];
    g.first += 1;
    g.second += labels[i] == 1 ? 1 : 0;
  }
  double max_gap = 0.0;
  for (auto it = per_group.begin(); it != per_group.end(); ++it)
    for (auto jt = std::next(it); jt != per_group.end(); ++jt)
      max_gap = std::max(max_gap, std::abs(it->second.second / it->second.first -
                                           jt->second.second / jt->second.first));
  ParityMiOracle out;
  out.parity_holds = max_gap < tolerance;
  out.plug_in_mi = plugin_discrete_mi(labels, sensitive);
  return out;
}

}  // namespace btgan
