// Neural mutual-information estimation and the stage-2 bias transform.
//
// The statistic network T is trained by gradient ascent on the
// Donsker-Varadhan bound  E_joint[T] - log E_marginal[e^T], with marginal
// pairs built by shuffling S within the batch. The gradient of the log-
// partition term uses an exponential moving average of E[e^T] so mini-batch
// gradients are not systematically biased.
//
// Stage 2 fine-tunes the pre-trained players on LDSS-weighted batches while
// adding alpha * L_MI to the generator loss only; the penalty gradient flows
// into the generator through the generated features (both the non-sensitive
// block W and the sensitive projection S).
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "btgan/nn.hpp"
#include "btgan/representation.hpp"
#include "btgan/rng.hpp"
#include "btgan/triple_gan.hpp"

namespace btgan {

enum class SensitiveSource { generated, real };

struct MineConfig {
  NetworkSpec statistic_net;  // defaults to [8,8] relu with a linear head
  int inner_steps_per_batch = 5;
  double ema_decay = 0.99;
  double alpha_fairness = 0.5;
  // Internal gain mapping alpha onto the generator's gradient scale; the
  // reported losses keep the literal alpha * L_MI composition.
  double penalty_scale = 4.0;
  double trust_ratio = 10.0;  // penalty-to-adversarial gradient norm backstop
  double marginal_match_weight = 8.0;  // stage-2 anchor of generated column means to the real ones
  SensitiveSource sensitive_source = SensitiveSource::generated;

  // standalone-estimation knobs
  int batch_size = 512;
  int epochs = 150;
  double learning_rate = 1e-3;
  double convergence_tol = 5e-3;

  MineConfig() {
    statistic_net.hidden_widths = {8, 8};
    statistic_net.activation = Activation::relu;
    statistic_net.head = HeadKind::linear;
  }

  void validate() const {
    if (ema_decay <= 0.0 || ema_decay >= 1.0)
      throw std::invalid_argument("ema_decay must lie in (0,1)");
    if (!(alpha_fairness >= 0.0) || !std::isfinite(alpha_fairness))
      throw std::invalid_argument("alpha_fairness must be finite and >= 0");
    if (inner_steps_per_batch < 1)
      throw std::invalid_argument("inner_steps_per_batch must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("mine batch_size must be >= 2");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"statistic_net", network_spec_to_json(statistic_net)},
                          {"inner_steps_per_batch", inner_steps_per_batch},
                          {"ema_decay", ema_decay},
                          {"alpha_fairness", alpha_fairness},
                          {"penalty_scale", penalty_scale},
                          {"trust_ratio", trust_ratio},
                          {"marginal_match_weight", marginal_match_weight},
                          {"sensitive_source",
                           sensitive_source == SensitiveSource::generated ? "generated" : "real"},
                          {"batch_size", batch_size},
                          {"epochs", epochs},
                          {"learning_rate", learning_rate}};
  }

  static MineConfig from_json(const nlohmann::json& j) {
    MineConfig c;
    if (j.contains("statistic_net")) c.statistic_net = network_spec_from_json(j["statistic_net"]);
    c.inner_steps_per_batch = j.value("inner_steps_per_batch", c.inner_steps_per_batch);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.alpha_fairness = j.value("alpha_fairness", c.alpha_fairness);
    c.penalty_scale = j.value("penalty_scale", c.penalty_scale);
    c.trust_ratio = j.value("trust_ratio", c.trust_ratio);
    c.marginal_match_weight = j.value("marginal_match_weight", c.marginal_match_weight);
    const std::string src = j.value("sensitive_source", std::string("generated"));
    c.sensitive_source = src == "real" ? SensitiveSource::real : SensitiveSource::generated;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.validate();
    return c;
  }
};

struct MiEstimate {
  double value_nats = 0.0;
  long n_samples = 0;
  bool converged = false;
};

namespace mine_detail {

inline double log_mean_exp(const Matrix& t) {
  const double m = t.maxCoeff();
  double s = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) s += std::exp(t(i, 0) - m);
  return m + std::log(s / static_cast<double>(t.rows()));
}

}  // namespace mine_detail

class MineEstimator {
 public:
  static constexpr double kWeightClip = 2.0;

  MineEstimator(int w_dim, int s_dim, const MineConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        w_dim_(w_dim),
        s_dim_(s_dim),
        net_(w_dim + s_dim, 1, cfg.statistic_net, seed),
        opt_(cfg.learning_rate, 0.9) {
    cfg_.validate();
  }

  int w_dim() const { return w_dim_; }
  int s_dim() const { return s_dim_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  // One gradient-ascent step on the DV bound; the marginal uses a fresh
  // in-batch shuffle of S. Returns the batch bound value.
  double ascent_step(const Matrix& w, const Matrix& s, RngStream& rng) {
    const auto perm = rng.permutation(static_cast<std::size_t>(w.rows()));
    MlpGrads grads;
    const double value = bound_and_param_grads(w, s, perm, /*bias_corrected=*/true, &grads);
    // ascend: flip the descent direction
    negate(grads);
    opt_.step(net_, grads);
    return value;
  }

  // DV bound at the current parameters with an explicit marginal permutation.
  double bound(const Matrix& w, const Matrix& s, const std::vector<std::size_t>& perm) const {
    const Matrix tj = net_.forward_eval(joined(w, s));
    const Matrix tm = net_.forward_eval(joined_perm(w, s, perm));
    return tj.mean() - mine_detail::log_mean_exp(tm);
  }

  // Averages the bound over several seeded permutations.
  double estimate(const Matrix& w, const Matrix& s, std::uint64_t seed, int n_perms = 8) const {
    RngStream rng(substream_seed(seed, "mine-estimate"));
    double total = 0.0;
    for (int k = 0; k < n_perms; ++k)
      total += bound(w, s, rng.permutation(static_cast<std::size_t>(w.rows())));
    return total / n_perms;
  }

  // Full DV objective with parameter gradients (gradient of the loss to
  // MINIMIZE, i.e. the negative bound is NOT applied here; callers ascend by
  // negating). With bias_corrected the log-partition gradient uses the EMA.
  double bound_and_param_grads(const Matrix& w, const Matrix& s, const std::vector<std::size_t>& perm,
                               bool bias_corrected, MlpGrads* grads) {
    const auto n = static_cast<double>(w.rows());
    MlpCache cj, cm;
    const Matrix tj = net_.forward(joined(w, s), &cj, true);
    const Matrix tm = net_.forward(joined_perm(w, s, perm), &cm, true);
    const double lme = mine_detail::log_mean_exp(tm);
    const double value = tj.mean() - lme;

    if (grads) {
      double log_norm = lme;
      if (bias_corrected) {
        if (!ema_valid_) {
          ema_log_ = lme;
          ema_valid_ = true;
        } else {
          const double m = std::max(ema_log_, lme);
          ema_log_ = m + std::log(cfg_.ema_decay * std::exp(ema_log_ - m) +
                                  (1.0 - cfg_.ema_decay) * std::exp(lme - m));
        }
        log_norm = ema_log_;
      }
      const Matrix dj = Matrix::Constant(tj.rows(), 1, 1.0 / n);
      Matrix dm(tm.rows(), 1);
      for (Eigen::Index i = 0; i < tm.rows(); ++i) dm(i, 0) = -std::exp(tm(i, 0) - log_norm) / n;
      *grads = net_.backward(cj, dj);
      add_scaled(*grads, net_.backward(cm, dm), 1.0);
      net_.update_running_stats(cj);
    }
    return value;
  }

  // Bound value plus the gradients with respect to the inputs, for routing
  // the fairness penalty into the generator. The normalized importance
  // weights of the log-partition term are clipped at 10x uniform so a few
  // heavy-tail rows cannot blast the generator past the data-fidelity force
  // in a single step.
  double input_grads(const Matrix& w, const Matrix& s, const std::vector<std::size_t>& perm,
                     Matrix* dw, Matrix* ds) const {
    const auto n = static_cast<double>(w.rows());
    MlpCache cj, cm;
    const Matrix tj = net_.forward(joined(w, s), &cj, true);
    const Matrix tm = net_.forward(joined_perm(w, s, perm), &cm, true);
    const double lme = mine_detail::log_mean_exp(tm);

    const Matrix dj = Matrix::Constant(tj.rows(), 1, 1.0 / n);
    Matrix dm(tm.rows(), 1);
    for (Eigen::Index i = 0; i < tm.rows(); ++i)
      dm(i, 0) = -std::min(std::exp(tm(i, 0) - lme), kWeightClip) / n;

    const MlpGrads gj = net_.backward(cj, dj);
    const MlpGrads gm = net_.backward(cm, dm);

    *dw = gj.dinput.leftCols(w_dim_);
    *ds = gj.dinput.rightCols(s_dim_);
    // marginal pairs route W back to row i and S back to row perm[i]
    *dw += gm.dinput.leftCols(w_dim_);
    for (Eigen::Index i = 0; i < tm.rows(); ++i)
      ds->row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])) +=
          gm.dinput.row(i).rightCols(s_dim_);
    return tj.mean() - lme;
  }

 private:
  static void negate(MlpGrads& g) {
    for (auto& m : g.dw) m = -m;
    for (auto& v : g.db) v = -v;
    for (auto& v : g.dgamma) v = -v;
    for (auto& v : g.dbeta) v = -v;
  }

  Matrix joined(const Matrix& w, const Matrix& s) const {
    Matrix out(w.rows(), w_dim_ + s_dim_);
    out.leftCols(w_dim_) = w;
    out.rightCols(s_dim_) = s;
    return out;
  }

  Matrix joined_perm(const Matrix& w, const Matrix& s, const std::vector<std::size_t>& perm) const {
    Matrix out(w.rows(), w_dim_ + s_dim_);
    out.leftCols(w_dim_) = w;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      out.row(i).rightCols(s_dim_) = s.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
    return out;
  }

  MineConfig cfg_;
  int w_dim_ = 0;
  int s_dim_ = 0;
  Mlp net_;
  AdamOptimizer opt_;
  double ema_log_ = 0.0;
  bool ema_valid_ = false;
};

// Trains a fresh statistic network on the given joint sample and returns the
// Donsker-Varadhan lower-bound estimate of I(W;S) in nats.
inline MiEstimate mine_estimate(const Matrix& w, const Matrix& s, const MineConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  if (w.rows() != s.rows()) throw std::invalid_argument("mine_estimate: row counts differ");
  if (w.rows() < 2) throw std::invalid_argument("mine_estimate: need at least 2 samples");

  MiEstimate out;
  out.n_samples = w.rows();

  // degenerate input: constant W and constant S carry no information
  const bool w_const = (w.rowwise() - w.row(0)).cwiseAbs().maxCoeff() == 0.0;
  const bool s_const = (s.rowwise() - s.row(0)).cwiseAbs().maxCoeff() == 0.0;
  if (w_const && s_const) {
    out.value_nats = 0.0;
    out.converged = true;
    return out;
  }

  MineEstimator est(static_cast<int>(w.cols()), static_cast<int>(s.cols()), cfg,
                    substream_seed(seed, "mine-init"));
  RngStream rng(substream_seed(seed, "mine-train"));

  const auto n = static_cast<std::size_t>(w.rows());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  double prev_epoch_value = 0.0;
  bool have_prev = false;
  out.converged = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = rng.permutation(n);
    double epoch_value = 0.0;
    long batches = 0;
    for (std::size_t lo = 0; lo + 1 < n; lo += bs) {
      const auto nb = static_cast<Eigen::Index>(std::min(bs, n - lo));
      if (nb < 2) break;
      Matrix wb(nb, w.cols()), sb(nb, s.cols());
      for (Eigen::Index i = 0; i < nb; ++i) {
        wb.row(i) = w.row(static_cast<Eigen::Index>(order[lo + static_cast<std::size_t>(i)]));
        sb.row(i) = s.row(static_cast<Eigen::Index>(order[lo + static_cast<std::size_t>(i)]));
      }
      double v = 0.0;
      for (int k = 0; k < cfg.inner_steps_per_batch; ++k) v = est.ascent_step(wb, sb, rng);
      epoch_value += v;
      ++batches;
    }
    epoch_value /= std::max(1L, batches);
    if (have_prev && std::abs(epoch_value - prev_epoch_value) < cfg.convergence_tol)
      out.converged = true;
    prev_epoch_value = epoch_value;
    have_prev = true;
  }

  out.value_nats = est.estimate(w, s, substream_seed(seed, "mine-final"));
  return out;
}

struct FinalLosses {
  double discriminator_objective = 0.0;
  double generator_loss = 0.0;
  double classifier_loss = 0.0;
};

// Composition of the adversarial losses with the fairness penalty: only the
// generator objective gains alpha * L_MI.
inline FinalLosses loss_final(const GcdLosses& gcd, double mi_lower_bound, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  FinalLosses out;
  out.discriminator_objective = gcd.discriminator_objective;
  out.generator_loss = gcd.generator_loss + alpha * mi_lower_bound;
  out.classifier_loss = gcd.classifier_loss;
  return out;
}

// Sampler provider contract for stage 2: called once per epoch with the
// current bundle (whose lds_trace grows every epoch) and the training data.
using SamplerProvider = std::function<SamplingTable(const ModelBundle&, const Dataset&)>;

inline SamplerProvider uniform_sampler() {
  return [](const ModelBundle&, const Dataset& data) {
    SamplingTable t;
    const auto n = static_cast<Eigen::Index>(data.n_rows());
    t.weight = Vector::Ones(n);
    t.probability = Vector::Constant(n, 1.0 / static_cast<double>(n));
    return t;
  };
}

// LDSS-weighted sampler over the trailing window of the bundle's LDS trace.
inline SamplerProvider ldss_sampler(const SubgroupEvaluator& eval, std::size_t window_T,
                                    double temperature) {
  const auto* eval_ptr = &eval;
  return [eval_ptr, window_T, temperature](const ModelBundle& bundle, const Dataset& data) {
    const auto membership = eval_ptr->memberships(data.encoded());
    const Vector scores = ldss_scores(bundle.lds_trace, window_T, membership,
                                      static_cast<std::size_t>(data.n_rows()));
    return sampling_table(scores, temperature, window_T);
  };
}

// Splits generated features into the MINE inputs: W = (non-sensitive block,
// conditioning label), S = sensitive projection.
struct MineViews {
  Matrix w;
  Matrix s;
  std::vector<int> sensitive_positions;
  std::vector<int> nonsensitive_positions;
};

inline MineViews mine_views(const TableSchema& schema, const Matrix& x, const Matrix& y) {
  MineViews v;
  v.sensitive_positions = schema.sensitive_feature_positions();
  std::vector<char> is_sens(static_cast<std::size_t>(schema.feature_width()), 0);
  for (int p : v.sensitive_positions) is_sens[static_cast<std::size_t>(p)] = 1;
  for (int p = 0; p < schema.feature_width(); ++p)
    if (!is_sens[static_cast<std::size_t>(p)]) v.nonsensitive_positions.push_back(p);

  v.w = Matrix(x.rows(), static_cast<Eigen::Index>(v.nonsensitive_positions.size()) + y.cols());
  for (std::size_t j = 0; j < v.nonsensitive_positions.size(); ++j)
    v.w.col(static_cast<Eigen::Index>(j)) = x.col(v.nonsensitive_positions[j]);
  v.w.rightCols(y.cols()) = y;

  v.s = Matrix(x.rows(), static_cast<Eigen::Index>(v.sensitive_positions.size()));
  for (std::size_t j = 0; j < v.sensitive_positions.size(); ++j)
    v.s.col(static_cast<Eigen::Index>(j)) = x.col(v.sensitive_positions[j]);
  return v;
}

// Post-hoc MI between generated W and S for a bundle, using a freshly
// trained statistic network.
inline MiEstimate bundle_mi_estimate(const ModelBundle& bundle, long n_rows, const MineConfig& cfg,
                                     std::uint64_t seed) {
  const auto batch = generate(bundle, n_rows, substream_seed(seed, "mi-probe"),
                              bundle.stage >= 2 ? GenerationStage::transformed : GenerationStage::pretrain);
  const auto v = mine_views(bundle.schema, batch.x, batch.y);
  return mine_estimate(v.w, v.s, cfg, seed);
}

// Stage 2: fine-tune on LDSS-weighted batches with the information penalty.
// Each mini-batch first trains the statistic network (inner_steps_per_batch
// ascent steps on a fresh generated batch), then runs the player updates
// with alpha * L_MI added to the generator gradient. When a monitor is
// given, per-epoch LDS keeps being recorded so the sampler's trailing window
// rolls forward through the transform.
inline void train_stage2(const Dataset& data, ModelBundle& bundle, const MineConfig& mine_cfg,
                         const SamplerProvider& sampler, const TrainingConfig& cfg,
                         const SubgroupEvaluator* monitor = nullptr) {
  mine_cfg.validate();
  cfg.validate();
  if (bundle.stage < 1) throw std::logic_error("train_stage2: bundle has not completed stage 1");
  if (!sampler) throw std::invalid_argument("train_stage2: sampler provider required");

  const auto views_probe = mine_views(bundle.schema, Matrix::Zero(1, bundle.schema.feature_width()),
                                      Matrix::Zero(1, bundle.schema.label_cardinality()));
  if (views_probe.sensitive_positions.empty())
    throw std::invalid_argument("train_stage2: schema declares no sensitive columns");

  MineEstimator mine(static_cast<int>(views_probe.w.cols()), static_cast<int>(views_probe.s.cols()),
                     mine_cfg, substream_seed(cfg.seed, "stage2-mine-init"));

  RngStream rng(substream_seed(cfg.seed, "stage2"));
  RngStream perm_rng(substream_seed(cfg.seed, "stage2-perm"));
  const int epochs = cfg.effective_stage2_epochs();
  const double alpha = mine_cfg.alpha_fairness;
  const double gain = alpha * mine_cfg.penalty_scale;

  PreStepHook mine_update = [&](ModelBundle& b, RngStream& r) {
    const auto yf = gan_detail::sample_labels(cfg.batch_size, b.label_prior, r);
    const Matrix y = one_hot(yf, b.schema.label_cardinality());
    const Matrix z = gan_detail::sample_noise(cfg.batch_size, cfg, r);
    const Matrix x = b.generator.forward(gan_detail::concat_cols(y, z), nullptr, true, &r);
    const auto v = mine_views(b.schema, x, y);
    for (int k = 0; k < mine_cfg.inner_steps_per_batch; ++k) mine.ascent_step(v.w, v.s, r);
  };

  const Eigen::RowVectorXd real_feature_means = data.features().colwise().mean();

  GeneratorPenaltyHook penalty = [&](const ModelBundle& b, const Matrix& xg, const Matrix& yg,
                                     Matrix* dx) {
    // marginal anchor: quadratic pull of generated column means toward the
    // real ones, countering penalty-induced marginal drift
    if (mine_cfg.marginal_match_weight > 0.0) {
      const Eigen::RowVectorXd diff = xg.colwise().mean() - real_feature_means;
      const auto n = static_cast<double>(xg.rows());
      dx->rowwise() += (2.0 * mine_cfg.marginal_match_weight / n) * diff;
    }
    const auto v = mine_views(b.schema, xg, yg);
    const auto perm = perm_rng.permutation(static_cast<std::size_t>(xg.rows()));
    Matrix dw, ds;
    const double mi = mine.input_grads(v.w, v.s, perm, &dw, &ds);
    // Center the penalty gradient per column: the batch-mean component moves
    // marginals, which are the discriminator's responsibility; the fairness
    // force acts only on the per-row dependence structure.
    dw.rowwise() -= dw.colwise().mean();
    ds.rowwise() -= ds.colwise().mean();

    // Trust region: the penalty may not exceed a fixed fraction of the
    // adversarial gradient in norm, so data fidelity always retains enough
    // force to hold the marginals while the penalty erodes the dependence.
    const double adv_norm = dx->norm();
    double pen_sq = dw.squaredNorm();
    if (mine_cfg.sensitive_source == SensitiveSource::generated) pen_sq += ds.squaredNorm();
    const double pen_norm = gain * std::sqrt(pen_sq);
    double scale = gain;
    if (pen_norm > mine_cfg.trust_ratio * adv_norm && pen_norm > 0.0)
      scale *= mine_cfg.trust_ratio * adv_norm / pen_norm;

    for (std::size_t j = 0; j < v.nonsensitive_positions.size(); ++j)
      dx->col(v.nonsensitive_positions[j]) += scale * dw.col(static_cast<Eigen::Index>(j));
    if (mine_cfg.sensitive_source == SensitiveSource::generated)
      for (std::size_t j = 0; j < v.sensitive_positions.size(); ++j)
        dx->col(v.sensitive_positions[j]) += scale * ds.col(static_cast<Eigen::Index>(j));
    return alpha * mi;
  };

  const long mon_rows = gan_detail::monitoring_batch_rows(monitor, data, cfg);
  std::vector<double> p_real;
  if (monitor && mon_rows > 0) p_real = monitor->frequencies(data.encoded());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    SamplingTable table = sampler(bundle, data);
    table.validate();
    if (table.probability.size() != static_cast<Eigen::Index>(data.n_rows()))
      throw std::invalid_argument("sampler table size does not match the dataset");

    const auto stats = gan_detail::run_epoch(bundle, data, cfg, rng, &table.probability, mine_update,
                                             penalty, epoch);
    bundle.stage = 2;
    EpochLog log;
    log.epoch = static_cast<long>(bundle.log.size());
    log.stage = 2;
    log.d_objective = stats.d_objective;
    log.g_loss = stats.g_loss;
    log.c_loss = stats.c_loss;
    log.mi_penalty = stats.mi_penalty;
    bundle.log.push_back(log);
    if (monitor && mon_rows > 0)
      gan_detail::record_lds(bundle, data, *monitor, mon_rows,
                             static_cast<long>(bundle.lds_trace.size()), p_real);
  }
  bundle.stage = 2;
}

}  // namespace btgan
