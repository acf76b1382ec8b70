// Semi-supervised three-player adversarial trainer.
//
// Players: a classifier C for p(y|x), a label-conditioned generator G with
// x' = G(y, z), and a discriminator D over (x, y) pairs. With partially
// observed labels the three-player objective applies, with the classifier
// term weighted by lambda and the generator term by (1 - lambda); with fully
// observed labels the classifier path is disabled and training reduces to
// the standard two-player game on (x, y).
//
// A frozen copy of the stage-1 discriminator is kept for density-ratio
// scoring; stage-2 fine-tuning never touches it.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "btgan/dataset.hpp"
#include "btgan/nn.hpp"
#include "btgan/representation.hpp"
#include "btgan/rng.hpp"
#include "btgan/schema.hpp"

namespace btgan {

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long epoch) : std::runtime_error(what), epoch(epoch) {}
  long epoch;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NoiseDistribution { uniform, normal };
enum class GanMode { two_player, triple };
enum class GenerationStage { pretrain, transformed, drs_filtered };

inline std::string to_string(GenerationStage s) {
  switch (s) {
    case GenerationStage::pretrain: return "pretrain";
    case GenerationStage::transformed: return "transformed";
    case GenerationStage::drs_filtered: return "drs_filtered";
  }
  return "?";
}

inline constexpr double kRatioClamp = 1e-3;  // epsilon_ratio

struct TrainingConfig {
  double lambda_balance = 0.5;
  int batch_size = 1024;
  double learning_rate = 1e-4;
  int epochs = 200;
  std::uint64_t seed = 0;
  int noise_dim = 32;
  NoiseDistribution noise_distribution = NoiseDistribution::normal;
  int stage2_epochs = 0;       // 0 means epochs / 4
  long eval_batch_cap = 32768; // cap on per-epoch monitoring batches
  double adam_beta1 = 0.5;
  int d_steps = 1;  // discriminator updates per mini-batch
  // Non-saturating player updates (-log D on fakes) for G and C; the
  // reported objective values stay in the minimax form.
  bool non_saturating = true;

  void validate() const {
    if (lambda_balance <= 0.0 || lambda_balance >= 1.0)
      throw std::invalid_argument("lambda_balance must lie in (0,1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (noise_dim < 1) throw std::invalid_argument("noise_dim must be >= 1");
    if (d_steps < 1) throw std::invalid_argument("d_steps must be >= 1");
  }

  int effective_stage2_epochs() const { return stage2_epochs > 0 ? stage2_epochs : std::max(1, epochs / 4); }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"lambda_balance", lambda_balance},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"epochs", epochs},
        {"seed", seed},
        {"noise_dim", noise_dim},
        {"noise_distribution", noise_distribution == NoiseDistribution::normal ? "normal" : "uniform"},
        {"stage2_epochs", stage2_epochs},
        {"eval_batch_cap", eval_batch_cap},
        {"adam_beta1", adam_beta1},
        {"d_steps", d_steps},
        {"non_saturating", non_saturating}};
  }

  static TrainingConfig from_json(const nlohmann::json& j) {
    TrainingConfig c;
    c.lambda_balance = j.value("lambda_balance", c.lambda_balance);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.noise_dim = j.value("noise_dim", c.noise_dim);
    const std::string nd = j.value("noise_distribution", std::string("normal"));
    if (nd != "normal" && nd != "uniform")
      throw std::invalid_argument("noise_distribution must be 'normal' or 'uniform'");
    c.noise_distribution = nd == "normal" ? NoiseDistribution::normal : NoiseDistribution::uniform;
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.eval_batch_cap = j.value("eval_batch_cap", c.eval_batch_cap);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.d_steps = j.value("d_steps", c.d_steps);
    c.non_saturating = j.value("non_saturating", c.non_saturating);
    c.validate();
    return c;
  }
};

nlohmann::json network_spec_to_json(const NetworkSpec& s);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

inline nlohmann::json network_spec_to_json(const NetworkSpec& s) {
  return nlohmann::json{
      {"hidden", s.hidden_widths},
      {"activation", s.activation == Activation::relu ? "relu" : "leaky_relu"},
      {"head", s.head == HeadKind::sigmoid    ? "sigmoid"
               : s.head == HeadKind::softmax  ? "softmax"
               : s.head == HeadKind::gumbel_softmax ? "gumbel_softmax"
                                              : "linear"},
      {"gumbel_temperature", s.gumbel_temperature},
      {"gumbel_logit_bound", s.gumbel_logit_bound},
      {"batch_norm", s.batch_norm},
      {"output_groups", s.output_groups}};
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.hidden_widths = j.value("hidden", std::vector<int>{});
  const std::string act = j.value("activation", std::string("leaky_relu"));
  s.activation = act == "relu" ? Activation::relu : Activation::leaky_relu;
  const std::string head = j.value("head", std::string("linear"));
  if (head == "sigmoid") s.head = HeadKind::sigmoid;
  else if (head == "softmax") s.head = HeadKind::softmax;
  else if (head == "gumbel_softmax") s.head = HeadKind::gumbel_softmax;
  else s.head = HeadKind::linear;
  s.gumbel_temperature = j.value("gumbel_temperature", 0.2);
  s.gumbel_logit_bound = j.value("gumbel_logit_bound", 1.5);
  s.batch_norm = j.value("batch_norm", false);
  s.output_groups = j.value("output_groups", std::vector<int>{});
  return s;
}

struct BundleSpecs {
  NetworkSpec classifier;
  NetworkSpec generator;
  NetworkSpec discriminator;
};

// Feature-relative widths with rounding up; generator/discriminator widths
// and the gumbel temperature follow the reference architecture table.
inline BundleSpecs default_bundle_specs(const TableSchema& schema) {
  const int d = schema.feature_width();
  BundleSpecs s;
  s.classifier.hidden_widths = {2 * d, static_cast<int>(std::ceil(1.5 * d)), d};
  s.classifier.activation = Activation::relu;
  s.classifier.head = HeadKind::softmax;
  s.classifier.batch_norm = true;

  s.generator.hidden_widths = {64, 128, 256};
  s.generator.activation = Activation::leaky_relu;
  s.generator.head = HeadKind::gumbel_softmax;
  s.generator.gumbel_temperature = 0.5;
  s.generator.gumbel_logit_bound = 1.5;
  for (int c = 0; c < schema.n_columns(); ++c) {
    if (c == schema.label_column()) continue;
    s.generator.output_groups.push_back(schema.column(c).encoded_width());
  }

  s.discriminator.hidden_widths = {64, 64, 64};
  s.discriminator.activation = Activation::leaky_relu;
  s.discriminator.head = HeadKind::linear;  // logits; sigmoid applied in the loss
  return s;
}

struct EpochLog {
  long epoch = 0;
  int stage = 1;
  double d_objective = 0.0;
  double g_loss = 0.0;
  double c_loss = 0.0;
  double mi_penalty = 0.0;
};

struct GeneratedBatch {
  Matrix x;  // n x feature_width, relaxed encodings
  Matrix y;  // n x label_cardinality, one-hot conditioning labels
  GenerationStage stage = GenerationStage::pretrain;
  std::uint64_t seed = 0;
  long epoch = 0;

  Eigen::Index rows() const { return x.rows(); }
};

struct ModelBundle {
  TableSchema schema;
  BundleSpecs specs;
  TrainingConfig cfg;
  GanMode mode = GanMode::triple;
  int stage = 0;  // 0 init, 1 pretrained, 2 transformed

  Mlp classifier;
  Mlp generator;
  Mlp discriminator_primary;
  Mlp discriminator_frozen;
  bool frozen_initialized = false;

  std::vector<double> label_prior;
  AdamOptimizer opt_c, opt_g, opt_d;
  std::vector<EpochLog> log;
  LdsTrace lds_trace;  // per epoch, per monitored subgroup

  Matrix sensitive_projection(const GeneratedBatch& b) const {
    const auto pos = schema.sensitive_feature_positions();
    Matrix out(b.x.rows(), static_cast<Eigen::Index>(pos.size()));
    for (std::size_t j = 0; j < pos.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = b.x.col(pos[j]);
    return out;
  }

  // Assembles full-width encoded rows from a generated batch, argmax-
  // discretizing relaxed one-hot groups so schema predicates and decode apply.
  Matrix discretize(const GeneratedBatch& b) const {
    Matrix out = Matrix::Zero(b.x.rows(), schema.encoded_width());
    int fpos = 0;
    for (int c = 0; c < schema.n_columns(); ++c) {
      const auto& col = schema.column(c);
      const int off = schema.column_offset(c);
      if (c == schema.label_column()) {
        for (Eigen::Index r = 0; r < b.y.rows(); ++r) {
          Eigen::Index arg = 0;
          b.y.row(r).maxCoeff(&arg);
          if (col.kind == ColumnKind::binary)
            out(r, off) = static_cast<double>(arg);
          else
            out(r, off + arg) = 1.0;
        }
        continue;
      }
      switch (col.kind) {
        case ColumnKind::continuous:
          out.col(off) = b.x.col(fpos);
          break;
        case ColumnKind::binary:
          out.col(off) = b.x.col(fpos).unaryExpr([](double v) { return v > 0.5 ? 1.0 : 0.0; });
          break;
        case ColumnKind::categorical:
          for (Eigen::Index r = 0; r < b.x.rows(); ++r) {
            Eigen::Index arg = 0;
            b.x.row(r).segment(fpos, col.encoded_width()).maxCoeff(&arg);
            out(r, off + arg) = 1.0;
          }
          break;
      }
      fpos += col.encoded_width();
    }
    return out;
  }
};

inline Matrix one_hot(const std::vector<int>& labels, int cardinality) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), cardinality);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= cardinality)
      throw std::invalid_argument("one_hot: label out of range");
    out(static_cast<Eigen::Index>(r), labels[r]) = 1.0;
  }
  return out;
}

inline ModelBundle init_models(const TableSchema& schema, const BundleSpecs& specs,
                               const TrainingConfig& cfg) {
  cfg.validate();
  ModelBundle b;
  b.schema = schema;
  b.specs = specs;
  b.cfg = cfg;

  const int d = schema.feature_width();
  const int classes = schema.label_cardinality();
  const int d_in = d + classes;

  if (!specs.generator.output_groups.empty()) {
    int total = 0;
    for (int g : specs.generator.output_groups) total += g;
    if (total != d)
      throw NnError("generator output groups sum to " + std::to_string(total) +
                    ", encoded feature width is " + std::to_string(d));
  }

  b.classifier = Mlp(d, classes, specs.classifier, substream_seed(cfg.seed, "init-classifier"));
  b.generator = Mlp(classes + cfg.noise_dim, d, specs.generator, substream_seed(cfg.seed, "init-generator"));
  b.discriminator_primary = Mlp(d_in, 1, specs.discriminator, substream_seed(cfg.seed, "init-discriminator"));
  b.discriminator_frozen = b.discriminator_primary;

  // beta1 = 0.5 damps the adversarial oscillation of moment estimates
  b.opt_c = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1);
  b.opt_g = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1);
  b.opt_d = AdamOptimizer(cfg.learning_rate, cfg.adam_beta1);
  return b;
}

inline ModelBundle init_models(const TableSchema& schema, const TrainingConfig& cfg) {
  return init_models(schema, default_bundle_specs(schema), cfg);
}

namespace gan_detail {

inline Matrix sample_noise(int n, const TrainingConfig& cfg, RngStream& rng) {
  Matrix z(n, cfg.noise_dim);
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z.data()[i] = cfg.noise_distribution == NoiseDistribution::normal ? rng.normal() : rng.uniform(-1.0, 1.0);
  return z;
}

inline std::vector<int> sample_labels(int n, const std::vector<double>& prior, RngStream& rng) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& y : out) y = static_cast<int>(rng.categorical(prior));
  return out;
}

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

inline void check_finite(double v, const std::string& what, long epoch) {
  if (!std::isfinite(v)) throw DivergenceError(what + " became non-finite", epoch);
}

}  // namespace gan_detail

// Draws a synthetic batch: y' from the empirical label prior, z from the
// configured noise distribution, x' = G(y', z) with relaxed one-hot groups.
inline GeneratedBatch generate(const ModelBundle& bundle, long n, std::uint64_t seed,
                               GenerationStage stage = GenerationStage::pretrain, long epoch = 0) {
  if (bundle.stage < 1) throw std::logic_error("generate: bundle has not completed stage 1");
  if (n <= 0) throw std::invalid_argument("generate: n must be positive");
  if (bundle.label_prior.empty()) throw std::logic_error("generate: label prior missing");

  RngStream rng(substream_seed(seed, "generate"));
  GeneratedBatch out;
  out.stage = stage;
  out.seed = seed;
  out.epoch = epoch;
  const auto y_idx = gan_detail::sample_labels(static_cast<int>(n), bundle.label_prior, rng);
  out.y = one_hot(y_idx, bundle.schema.label_cardinality());
  const Matrix z = gan_detail::sample_noise(static_cast<int>(n), bundle.cfg, rng);
  out.x = bundle.generator.forward(gan_detail::concat_cols(out.y, z), nullptr, /*training=*/true, &rng);
  return out;
}

// Density ratio p/p_gamma from the frozen discriminator: D/(1-D) = exp(logit),
// clamped to [epsilon_ratio, 1/epsilon_ratio].
inline Vector discriminator_density_ratio(const ModelBundle& bundle, const Matrix& x, const Matrix& y) {
  if (!bundle.frozen_initialized)
    throw std::logic_error("density ratio needs the frozen stage-1 discriminator");
  const Matrix logits = bundle.discriminator_frozen.forward_eval(gan_detail::concat_cols(x, y));
  Vector out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out[i] = std::clamp(std::exp(logits(i, 0)), kRatioClamp, 1.0 / kRatioClamp);
  return out;
}

struct GcdLosses {
  double discriminator_objective = 0.0;  // value of V (to be maximized by D)
  double generator_loss = 0.0;           // generator's term of V
  double classifier_loss = 0.0;          // lambda term + cross entropy
  double cross_entropy = 0.0;
};

// Literal evaluation of the adversarial value function at the current
// parameters. The classifier term uses the exact expectation over classes of
// the predictive distribution; the generator term is evaluated on the given
// generated batch. With the classifier path disabled (two-player mode or no
// unlabeled rows and lambda collapse), the objective reduces to the standard
// two-player value on (x, y) pairs.
inline GcdLosses loss_gcd(const ModelBundle& bundle, const Matrix& x_labeled,
                          const std::vector<int>& y_labeled, const Matrix& x_unlabeled,
                          const GeneratedBatch& gen, const TrainingConfig& cfg) {
  if (x_labeled.rows() == 0) throw std::invalid_argument("loss_gcd: empty real batch");
  const int classes = bundle.schema.label_cardinality();
  const bool classifier_active = bundle.mode == GanMode::triple && x_unlabeled.rows() > 0;
  const double lambda = classifier_active ? cfg.lambda_balance : 0.0;
  const double gen_weight = classifier_active ? 1.0 - cfg.lambda_balance : 1.0;

  GcdLosses out;

  const Matrix y_lab = one_hot(y_labeled, classes);
  const Matrix real_logits =
      bundle.discriminator_primary.forward_eval(gan_detail::concat_cols(x_labeled, y_lab));
  double t_real = 0.0;
  for (Eigen::Index r = 0; r < real_logits.rows(); ++r) t_real += log_sigmoid(real_logits(r, 0));
  t_real /= static_cast<double>(real_logits.rows());

  double t_cls = 0.0;
  if (classifier_active) {
    const Matrix probs = bundle.classifier.forward_eval(x_unlabeled);
    for (int k = 0; k < classes; ++k) {
      Matrix yk = Matrix::Zero(x_unlabeled.rows(), classes);
      yk.col(k).setOnes();
      const Matrix lk = bundle.discriminator_primary.forward_eval(gan_detail::concat_cols(x_unlabeled, yk));
      for (Eigen::Index r = 0; r < lk.rows(); ++r) t_cls += probs(r, k) * log1m_sigmoid(lk(r, 0));
    }
    t_cls /= static_cast<double>(x_unlabeled.rows());
  }

  const Matrix fake_logits =
      bundle.discriminator_primary.forward_eval(gan_detail::concat_cols(gen.x, gen.y));
  double t_gen = 0.0;
  for (Eigen::Index r = 0; r < fake_logits.rows(); ++r) t_gen += log1m_sigmoid(fake_logits(r, 0));
  t_gen /= static_cast<double>(fake_logits.rows());

  double ce = 0.0;
  if (bundle.mode == GanMode::triple) {
    const Matrix probs = bundle.classifier.forward_eval(x_labeled);
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
      ce -= std::log(std::max(probs(r, y_labeled[static_cast<std::size_t>(r)]), 1e-300));
    ce /= static_cast<double>(probs.rows());
  }

  out.cross_entropy = ce;
  out.discriminator_objective = t_real + lambda * t_cls + gen_weight * t_gen;
  out.generator_loss = gen_weight * t_gen;
  out.classifier_loss = lambda * t_cls + ce;
  return out;
}

namespace gan_detail {

// One discriminator update: real pairs toward 1, generated (and classifier-
// sampled) pairs toward 0, weighted per the three-player objective.
inline double discriminator_step(ModelBundle& b, const Matrix& x_real, const Matrix& y_real,
                                 const Matrix& x_cls, const Matrix& y_cls, const Matrix& x_gen,
                                 const Matrix& y_gen, double lambda, double gen_weight) {
  Mlp& d = b.discriminator_primary;

  MlpCache c_real;
  const Matrix lr = d.forward(concat_cols(x_real, y_real), &c_real, true);
  Matrix dlr;
  double obj = -bce_with_logits(lr, 1.0, &dlr);

  MlpCache c_gen;
  const Matrix lg = d.forward(concat_cols(x_gen, y_gen), &c_gen, true);
  Matrix dlg;
  obj -= gen_weight * bce_with_logits(lg, 0.0, &dlg);

  auto grads = d.backward(c_real, dlr);
  add_scaled(grads, d.backward(c_gen, dlg), gen_weight);

  if (x_cls.rows() > 0) {
    MlpCache c_cls;
    const Matrix lc = d.forward(concat_cols(x_cls, y_cls), &c_cls, true);
    Matrix dlc;
    obj -= lambda * bce_with_logits(lc, 0.0, &dlc);
    add_scaled(grads, d.backward(c_cls, dlc), lambda);
  }

  d.update_running_stats(c_real);
  b.opt_d.step(d, grads);
  return obj;  // value of the (weighted) discriminator objective
}

// Gradient of the generator loss through the discriminator input. Returns
// dL/dx for the feature block of the fake pairs and the loss value.
inline double generator_adversarial_grad(const ModelBundle& b, const Matrix& x_gen, const Matrix& y_gen,
                                         bool non_saturating, Matrix* dx) {
  const Mlp& d = b.discriminator_primary;
  MlpCache cache;
  const Matrix logits = d.forward(concat_cols(x_gen, y_gen), &cache, true);
  const auto n = static_cast<double>(logits.rows());
  Matrix dlogits(logits.rows(), 1);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double sig = 1.0 / (1.0 + std::exp(-logits(r, 0)));
    if (non_saturating) {
      loss -= log_sigmoid(logits(r, 0));
      dlogits(r, 0) = (sig - 1.0) / n;
    } else {
      loss += log1m_sigmoid(logits(r, 0));
      dlogits(r, 0) = sig / n;
    }
  }
  loss /= n;
  const auto grads = d.backward(cache, dlogits);
  *dx = grads.dinput.leftCols(x_gen.cols());
  return loss;
}

inline double classifier_step(ModelBundle& b, const Matrix& x_lab, const std::vector<int>& y_lab,
                              const Matrix& x_unl, double lambda, bool non_saturating) {
  Mlp& cnet = b.classifier;
  const int classes = b.schema.label_cardinality();

  // supervised cross entropy on observed labels
  MlpCache cache_lab;
  const Matrix p_lab = cnet.forward(x_lab, &cache_lab, true);
  const auto n_lab = static_cast<double>(p_lab.rows());
  double ce = 0.0;
  Matrix dce = Matrix::Zero(p_lab.rows(), classes);
  for (Eigen::Index r = 0; r < p_lab.rows(); ++r) {
    const int y = y_lab[static_cast<std::size_t>(r)];
    const double p = std::max(p_lab(r, y), 1e-12);
    ce -= std::log(p) / n_lab;
    dce(r, y) = -1.0 / (p * n_lab);
  }
  auto grads = cnet.backward(cache_lab, dce);
  cnet.update_running_stats(cache_lab);
  double total = ce;

  if (x_unl.rows() > 0 && lambda > 0.0) {
    // adversarial term: expectation over classes of the discriminator score
    // for (x_u, y); gradients reach the classifier through the class weights.
    const auto n_unl = static_cast<double>(x_unl.rows());
    Matrix v(x_unl.rows(), classes);  // per-class log-score
    for (int k = 0; k < classes; ++k) {
      Matrix yk = Matrix::Zero(x_unl.rows(), classes);
      yk.col(k).setOnes();
      const Matrix lk = b.discriminator_primary.forward_eval(concat_cols(x_unl, yk));
      for (Eigen::Index r = 0; r < lk.rows(); ++r)
        v(r, k) = non_saturating ? -log_sigmoid(lk(r, 0)) : log1m_sigmoid(lk(r, 0));
    }
    MlpCache cache_unl;
    const Matrix p_unl = cnet.forward(x_unl, &cache_unl, true);
    double adv = 0.0;
    for (Eigen::Index r = 0; r < p_unl.rows(); ++r) adv += p_unl.row(r).dot(v.row(r));
    adv /= n_unl;
    total += lambda * adv;

    const Matrix dadv = (lambda / n_unl) * v;
    add_scaled(grads, cnet.backward(cache_unl, dadv), 1.0);
  }

  b.opt_c.step(cnet, grads);
  return total;
}

// Samples pseudo-labels from the classifier's predictive distribution.
inline Matrix sample_pseudo_labels(const Mlp& classifier, const Matrix& x_unl, int classes,
                                   RngStream& rng) {
  const Matrix probs = classifier.forward_eval(x_unl);
  Matrix y = Matrix::Zero(x_unl.rows(), classes);
  std::vector<double> row(static_cast<std::size_t>(classes));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (int k = 0; k < classes; ++k) row[static_cast<std::size_t>(k)] = probs(r, k);
    y(r, static_cast<Eigen::Index>(rng.categorical(row))) = 1.0;
  }
  return y;
}

}  // namespace gan_detail

// Hooks used by the stage-2 trainer. pre_step runs before each mini-batch's
// player updates (the MI estimator trains there); the penalty hook returns
// the current fairness penalty for a generated batch and adds its gradient
// contribution to dx (same shape as the generated features).
using PreStepHook = std::function<void(ModelBundle&, RngStream&)>;
using GeneratorPenaltyHook =
    std::function<double(const ModelBundle&, const Matrix& x_gen, const Matrix& y_gen, Matrix* dx)>;

namespace gan_detail {

struct EpochStats {
  double d_objective = 0.0;
  double g_loss = 0.0;
  double c_loss = 0.0;
  double mi_penalty = 0.0;
  long batches = 0;
};

// Shared mini-batch loop. `sampler_probs`, when non-null, biases labeled-row
// sampling (stage 2); otherwise epochs sweep a uniform shuffle. Returns the
// epoch means of the player losses.
inline EpochStats run_epoch(ModelBundle& b, const Dataset& data, const TrainingConfig& cfg,
                            RngStream& rng, const Vector* sampler_probs,
                            const PreStepHook& pre_step, const GeneratorPenaltyHook& penalty,
                            long epoch) {
  const int classes = b.schema.label_cardinality();
  const Matrix features = data.features();
  const auto labels = data.labels();

  std::vector<std::size_t> labeled_idx, unlabeled_idx;
  for (std::size_t r = 0; r < labels.size(); ++r)
    (labels[r] >= 0 ? labeled_idx : unlabeled_idx).push_back(r);
  if (labeled_idx.empty()) throw DivergenceError("no observed labels", epoch);

  const bool triple = b.mode == GanMode::triple && !unlabeled_idx.empty();
  const double lambda = triple ? cfg.lambda_balance : 0.0;
  const double gen_weight = triple ? 1.0 - cfg.lambda_balance : 1.0;

  // batch order for the epoch
  std::vector<std::size_t> order;
  if (sampler_probs) {
    if (sampler_probs->size() != static_cast<Eigen::Index>(labels.size()))
      throw std::invalid_argument("sampler probabilities must cover every training row");
    // restrict the instance distribution to rows with observed labels
    std::vector<double> probs(labeled_idx.size());
    for (std::size_t i = 0; i < labeled_idx.size(); ++i)
      probs[i] = (*sampler_probs)[static_cast<Eigen::Index>(labeled_idx[i])];
    order.resize(labeled_idx.size());
    for (auto& o : order) o = labeled_idx[rng.categorical(probs)];
  } else {
    order = labeled_idx;
    rng.shuffle(order);
  }
  std::vector<std::size_t> unl_order = unlabeled_idx;
  rng.shuffle(unl_order);

  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = (order.size() + batch_size - 1) / batch_size;

  EpochStats stats;
  std::size_t unl_cursor = 0;
  for (std::size_t bi = 0; bi < n_batches; ++bi) {
    const std::size_t lo = bi * batch_size;
    const std::size_t hi = std::min(order.size(), lo + batch_size);
    const auto nb = static_cast<Eigen::Index>(hi - lo);
    if (nb < 2) continue;

    Matrix x_real(nb, features.cols());
    std::vector<int> y_real_idx(static_cast<std::size_t>(nb));
    for (Eigen::Index i = 0; i < nb; ++i) {
      const std::size_t row = order[lo + static_cast<std::size_t>(i)];
      x_real.row(i) = features.row(static_cast<Eigen::Index>(row));
      y_real_idx[static_cast<std::size_t>(i)] = labels[row];
    }
    const Matrix y_real = one_hot(y_real_idx, classes);

    if (pre_step) pre_step(b, rng);

    Matrix x_unl(0, features.cols());
    if (triple) {
      const auto n_unl = std::min<std::size_t>(static_cast<std::size_t>(nb), unlabeled_idx.size());
      x_unl.resize(static_cast<Eigen::Index>(n_unl), features.cols());
      for (std::size_t i = 0; i < n_unl; ++i) {
        x_unl.row(static_cast<Eigen::Index>(i)) =
            features.row(static_cast<Eigen::Index>(unl_order[unl_cursor]));
        unl_cursor = (unl_cursor + 1) % unl_order.size();
      }
    }

    // --- D step(s) ---
    double d_obj = 0.0;
    for (int ds = 0; ds < cfg.d_steps; ++ds) {
      const auto y_fake_idx = sample_labels(static_cast<int>(nb), b.label_prior, rng);
      const Matrix y_fake = one_hot(y_fake_idx, classes);
      const Matrix z = sample_noise(static_cast<int>(nb), cfg, rng);
      const Matrix x_fake =
          b.generator.forward(concat_cols(y_fake, z), nullptr, true, &rng);

      Matrix y_cls(0, classes), x_cls(0, features.cols());
      if (triple && x_unl.rows() > 0) {
        x_cls = x_unl;
        y_cls = sample_pseudo_labels(b.classifier, x_unl, classes, rng);
      }
      d_obj = discriminator_step(b, x_real, y_real, x_cls, y_cls, x_fake, y_fake, lambda, gen_weight);
      check_finite(d_obj, "discriminator objective", epoch);
    }

    // --- G step ---
    const auto yg_idx = sample_labels(static_cast<int>(nb), b.label_prior, rng);
    const Matrix yg = one_hot(yg_idx, classes);
    const Matrix zg = sample_noise(static_cast<int>(nb), cfg, rng);
    MlpCache gcache;
    const Matrix xg = b.generator.forward(concat_cols(yg, zg), &gcache, true, &rng);

    Matrix dxg;
    double g_loss = generator_adversarial_grad(b, xg, yg, cfg.non_saturating, &dxg);
    g_loss *= gen_weight;
    dxg *= gen_weight;
    double mi_value = 0.0;
    if (penalty) {
      mi_value = penalty(b, xg, yg, &dxg);
      check_finite(mi_value, "fairness penalty", epoch);
    }
    const auto ggrads = b.generator.backward(gcache, dxg);
    b.generator.update_running_stats(gcache);
    b.opt_g.step(b.generator, ggrads);
    check_finite(g_loss, "generator loss", epoch);

    // --- C step ---
    double c_loss = 0.0;
    if (triple) {
      c_loss = classifier_step(b, x_real, y_real_idx, x_unl, lambda, cfg.non_saturating);
      check_finite(c_loss, "classifier loss", epoch);
    }

    stats.d_objective += d_obj;
    stats.g_loss += g_loss;
    stats.c_loss += c_loss;
    stats.mi_penalty += mi_value;
    ++stats.batches;
  }

  if (stats.batches > 0) {
    stats.d_objective /= static_cast<double>(stats.batches);
    stats.g_loss /= static_cast<double>(stats.batches);
    stats.c_loss /= static_cast<double>(stats.batches);
    stats.mi_penalty /= static_cast<double>(stats.batches);
  }
  return stats;
}

inline long monitoring_batch_rows(const SubgroupEvaluator* eval, const Dataset& data,
                                  const TrainingConfig& cfg) {
  if (!eval || eval->size() == 0) return 0;
  const auto counts = eval->counts(data.encoded());
  double min_count = std::numeric_limits<double>::infinity();
  for (double c : counts)
    if (c > 0) min_count = std::min(min_count, c);
  if (!std::isfinite(min_count)) min_count = 0;
  return std::min<long>(cfg.eval_batch_cap, std::max<long>(4096, static_cast<long>(10 * min_count)));
}

// Generates a monitoring batch and appends per-subgroup LDS to the trace.
inline std::vector<double> record_lds(ModelBundle& b, const Dataset& data,
                                      const SubgroupEvaluator& eval, long rows, long epoch,
                                      const std::vector<double>& p_real) {
  const auto batch = generate(b, rows, substream_seed(b.cfg.seed, "monitor-" + std::to_string(epoch)),
                              b.stage >= 2 ? GenerationStage::transformed : GenerationStage::pretrain,
                              epoch);
  const Matrix full = b.discretize(batch);
  const auto p_synth = eval.frequencies(full);
  std::vector<double> out(eval.size());
  for (std::size_t j = 0; j < eval.size(); ++j) out[j] = lds(p_synth[j], p_real[j]);
  b.lds_trace.push_back(out);
  return out;
}

}  // namespace gan_detail

// Stage 1: pre-train the (two- or three-player) game on real data, recording
// per-epoch LDS for every monitored subgroup, then freeze the discriminator
// copy used later for density ratios.
inline void train_stage1(const Dataset& data, ModelBundle& bundle, const TrainingConfig& cfg,
                         const SubgroupEvaluator* monitor = nullptr) {
  cfg.validate();
  bundle.cfg = cfg;
  bundle.mode = data.fully_labeled() ? GanMode::two_player : GanMode::triple;
  bundle.label_prior = data.label_prior();

  const auto observed = data.n_observed_labels();
  if (observed == 0) throw DivergenceError("dataset has no observed labels", 0);
  {
    const auto prior = bundle.label_prior;
    for (double p : prior)
      if (p == 0.0) throw DivergenceError("a label class has no observed rows", 0);
  }

  RngStream rng(substream_seed(cfg.seed, "stage1"));
  const long mon_rows = gan_detail::monitoring_batch_rows(monitor, data, cfg);
  std::vector<double> p_real;
  if (monitor && mon_rows > 0) p_real = monitor->frequencies(data.encoded());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto stats = gan_detail::run_epoch(bundle, data, cfg, rng, nullptr, nullptr, nullptr, epoch);
    bundle.stage = std::max(bundle.stage, 1);
    EpochLog log;
    log.epoch = epoch;
    log.stage = 1;
    log.d_objective = stats.d_objective;
    log.g_loss = stats.g_loss;
    log.c_loss = stats.c_loss;
    bundle.log.push_back(log);
    if (monitor && mon_rows > 0) gan_detail::record_lds(bundle, data, *monitor, mon_rows, epoch, p_real);
  }

  bundle.stage = 1;
  bundle.discriminator_frozen = bundle.discriminator_primary;
  bundle.frozen_initialized = true;
}

// ---- checkpoints ----

inline constexpr char kCheckpointMagic[9] = "BTGANCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ModelBundle& b, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t schema_hash = b.schema.hash();
  out.write(reinterpret_cast<const char*>(&schema_hash), sizeof schema_hash);

  nlohmann::json header{
      {"schema", b.schema.to_json()},
      {"specs",
       {{"classifier", network_spec_to_json(b.specs.classifier)},
        {"generator", network_spec_to_json(b.specs.generator)},
        {"discriminator", network_spec_to_json(b.specs.discriminator)}}},
      {"cfg", b.cfg.to_json()},
      {"mode", b.mode == GanMode::triple ? "triple" : "two_player"},
      {"stage", b.stage},
      {"frozen_initialized", b.frozen_initialized},
      {"label_prior", b.label_prior},
      {"lds_trace", b.lds_trace}};
  const std::string hs = header.dump();
  const auto hlen = static_cast<std::uint64_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  b.classifier.save(out);
  b.generator.save(out);
  b.discriminator_primary.save(out);
  b.discriminator_frozen.save(out);
  b.opt_c.save(out);
  b.opt_g.save(out);
  b.opt_d.save(out);
  if (!out) throw CheckpointError("short write while saving checkpoint: " + path);
}

inline ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw CheckpointError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t stored_hash = 0;
  in.read(reinterpret_cast<char*>(&stored_hash), sizeof stored_hash);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw CheckpointError("truncated checkpoint header: " + path);

  const auto header = nlohmann::json::parse(hs);
  const TableSchema schema = TableSchema::from_json(header.at("schema"));
  if (schema.hash() != stored_hash)
    throw CheckpointError("checkpoint schema hash mismatch: refusing to load " + path);

  BundleSpecs specs;
  specs.classifier = network_spec_from_json(header.at("specs").at("classifier"));
  specs.generator = network_spec_from_json(header.at("specs").at("generator"));
  specs.discriminator = network_spec_from_json(header.at("specs").at("discriminator"));
  const TrainingConfig cfg = TrainingConfig::from_json(header.at("cfg"));

  ModelBundle b = init_models(schema, specs, cfg);
  b.mode = header.at("mode") == "triple" ? GanMode::triple : GanMode::two_player;
  b.stage = header.at("stage").get<int>();
  b.frozen_initialized = header.at("frozen_initialized").get<bool>();
  b.label_prior = header.at("label_prior").get<std::vector<double>>();
  b.lds_trace = header.at("lds_trace").get<LdsTrace>();

  b.classifier.load(in);
  b.generator.load(in);
  b.discriminator_primary.load(in);
  b.discriminator_frozen.load(in);
  b.opt_c.load(in);
  b.opt_g.load(in);
  b.opt_d.load(in);
  return b;
}

// Verifies that a checkpoint belongs to the given dataset schema.
inline void require_schema_match(const ModelBundle& b, const TableSchema& schema) {
  if (b.schema.hash() != schema.hash())
    throw CheckpointError("checkpoint schema does not match the dataset schema");
}

}  // namespace btgan
