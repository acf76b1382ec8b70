// Dense networks with hand-rolled backprop.
//
// Shapes follow the row-major batch convention: activations are (batch x
// width). Heads: elementwise sigmoid, softmax over the whole output,
// temperature Gumbel-softmax applied per output group (categorical one-hot
// blocks relax to simplex points, single-slot groups fall back to sigmoid),
// or linear. Batch norm uses batch statistics in training mode, running
// averages in eval mode.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "btgan/rng.hpp"

namespace btgan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { relu, leaky_relu };
enum class HeadKind { sigmoid, softmax, gumbel_softmax, linear };

struct NetworkSpec {
  std::vector<int> hidden_widths;
  Activation activation = Activation::leaky_relu;
  HeadKind head = HeadKind::linear;
  double gumbel_temperature = 0.2;
  double gumbel_logit_bound = 1.5;  // tanh bound on one-hot group logits
  bool batch_norm = false;
  // Output group sizes for gumbel heads; empty means one group spanning the
  // whole output. Sizes must sum to the output width.
  std::vector<int> output_groups;

  void validate(int output_width) const {
    for (int w : hidden_widths)
      if (w <= 0) throw NnError("network spec: hidden widths must be positive");
    if (head == HeadKind::gumbel_softmax && gumbel_temperature <= 0.0)
      throw NnError("network spec: gumbel temperature must be positive");
    if (head == HeadKind::gumbel_softmax && gumbel_logit_bound <= 0.0)
      throw NnError("network spec: gumbel logit bound must be positive");
    if (!output_groups.empty()) {
      int total = 0;
      for (int g : output_groups) {
        if (g <= 0) throw NnError("network spec: output group sizes must be positive");
        total += g;
      }
      if (total != output_width)
        throw NnError("network spec: output groups sum to " + std::to_string(total) +
                      ", expected " + std::to_string(output_width));
    }
  }
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9;

struct DenseLayer {
  Matrix w;  // (in x out)
  Vector b;  // (out)
};

struct BatchNormLayer {
  Vector gamma, beta;
  Vector running_mean, running_var;
};

struct MlpCache {
  Matrix input;
  std::vector<Matrix> pre_bn;      // per hidden layer: affine output
  std::vector<Matrix> normalized;  // per hidden layer: (x-mu)/sqrt(var+eps)
  std::vector<Vector> batch_var;   // per hidden layer
  std::vector<Matrix> post_act;    // per hidden layer: activation output
  Matrix logits;                   // final affine output
  Matrix output;                   // after head
  bool training = false;
};

struct MlpGrads {
  std::vector<Matrix> dw;
  std::vector<Vector> db;
  std::vector<Vector> dgamma, dbeta;
  Matrix dinput;
};

// a += scale * b over all parameter gradients (shapes must match).
inline void add_scaled(MlpGrads& a, const MlpGrads& b, double scale) {
  for (std::size_t i = 0; i < a.dw.size(); ++i) {
    a.dw[i] += scale * b.dw[i];
    a.db[i] += scale * b.db[i];
  }
  for (std::size_t i = 0; i < a.dgamma.size(); ++i) {
    a.dgamma[i] += scale * b.dgamma[i];
    a.dbeta[i] += scale * b.dbeta[i];
  }
}

class Mlp {
 public:
  Mlp() = default;

  Mlp(int input_width, int output_width, NetworkSpec spec, std::uint64_t seed)
      : spec_(std::move(spec)), input_width_(input_width), output_width_(output_width) {
    spec_.validate(output_width);
    RngStream rng(seed);
    int in = input_width;
    for (int w : spec_.hidden_widths) {
      layers_.push_back(init_dense(in, w, rng));
      if (spec_.batch_norm) {
        BatchNormLayer bn;
        bn.gamma = Vector::Ones(w);
        bn.beta = Vector::Zero(w);
        bn.running_mean = Vector::Zero(w);
        bn.running_var = Vector::Ones(w);
        bn_.push_back(std::move(bn));
      }
      in = w;
    }
    layers_.push_back(init_dense(in, output_width, rng));
  }

  const NetworkSpec& spec() const { return spec_; }
  int input_width() const { return input_width_; }
  int output_width() const { return output_width_; }

  // Forward pass. `rng` is consumed only by gumbel heads in training mode;
  // in eval mode the gumbel head degrades to plain (tempered) softmax.
  Matrix forward(const Matrix& x, MlpCache* cache, bool training, RngStream* rng = nullptr) const {
    if (x.cols() != input_width_) throw NnError("forward: input width mismatch");
    MlpCache local;
    MlpCache& c = cache ? *cache : local;
    c = MlpCache{};
    c.input = x;
    c.training = training;

    Matrix h = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      Matrix a = (h * layers_[l].w).rowwise() + layers_[l].b.transpose();
      if (spec_.batch_norm) {
        c.pre_bn.push_back(a);
        a = bn_forward(l, a, training, c);
      }
      c.post_act.push_back(apply_activation(a));
      h = c.post_act.back();
    }
    c.logits = (h * layers_.back().w).rowwise() + layers_.back().b.transpose();
    c.output = apply_head(c.logits, c, training, rng);
    return c.output;
  }

  Matrix forward_eval(const Matrix& x) const { return forward(x, nullptr, false); }

  // Backward pass from dL/d(output). Returns parameter gradients and dL/dx.
  MlpGrads backward(const MlpCache& c, const Matrix& doutput) const {
    MlpGrads g;
    g.dw.resize(layers_.size());
    g.db.resize(layers_.size());
    if (spec_.batch_norm) {
      g.dgamma.resize(bn_.size());
      g.dbeta.resize(bn_.size());
    }

    Matrix dlogits = head_backward(c, doutput);
    Matrix dh = dlogits;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Matrix& input_to_layer = li == 0 ? c.input : c.post_act[li - 1];
      g.dw[li] = input_to_layer.transpose() * dh;
      g.db[li] = dh.colwise().sum();
      Matrix dprev = dh * layers_[li].w.transpose();
      if (li == 0) {
        g.dinput = dprev;
        break;
      }
      // dprev is the gradient at post_act[li-1]; walk back through the
      // activation (and batch norm) of hidden layer li-1.
      const std::size_t hl = li - 1;
      Matrix dact = activation_backward(c, hl, dprev);
      if (spec_.batch_norm) dact = bn_backward(hl, c, dact, g);
      dh = dact;
    }
    return g;
  }

  // Flattened views over all trainable tensors, in a fixed order.
  std::vector<double*> parameter_blocks(std::vector<long>& sizes) {
    std::vector<double*> out;
    sizes.clear();
    for (auto& l : layers_) {
      out.push_back(l.w.data());
      sizes.push_back(l.w.size());
      out.push_back(l.b.data());
      sizes.push_back(l.b.size());
    }
    for (auto& bn : bn_) {
      out.push_back(bn.gamma.data());
      sizes.push_back(bn.gamma.size());
      out.push_back(bn.beta.data());
      sizes.push_back(bn.beta.size());
    }
    return out;
  }

  std::vector<const double*> gradient_blocks(const MlpGrads& g, std::vector<long>& sizes) const {
    std::vector<const double*> out;
    sizes.clear();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      out.push_back(g.dw[i].data());
      sizes.push_back(g.dw[i].size());
      out.push_back(g.db[i].data());
      sizes.push_back(g.db[i].size());
    }
    for (std::size_t i = 0; i < bn_.size(); ++i) {
      out.push_back(g.dgamma[i].data());
      sizes.push_back(g.dgamma[i].size());
      out.push_back(g.dbeta[i].data());
      sizes.push_back(g.dbeta[i].size());
    }
    return out;
  }

  long parameter_count() const {
    long total = 0;
    for (const auto& l : layers_) total += l.w.size() + l.b.size();
    for (const auto& bn : bn_) total += bn.gamma.size() + bn.beta.size();
    return total;
  }

  void save(std::ostream& out) const {
    auto put_i64 = [&](std::int64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    put_i64(static_cast<std::int64_t>(layers_.size()));
    put_i64(input_width_);
    put_i64(output_width_);
    auto put_mat = [&](const Matrix& m) {
      put_i64(m.rows());
      put_i64(m.cols());
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    };
    auto put_vec = [&](const Vector& v) {
      put_i64(v.size());
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
    };
    for (const auto& l : layers_) {
      put_mat(l.w);
      put_vec(l.b);
    }
    put_i64(static_cast<std::int64_t>(bn_.size()));
    for (const auto& bn : bn_) {
      put_vec(bn.gamma);
      put_vec(bn.beta);
      put_vec(bn.running_mean);
      put_vec(bn.running_var);
    }
  }

  void load(std::istream& in) {
    auto get_i64 = [&]() {
      std::int64_t v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      if (!in) throw NnError("checkpoint truncated");
      return v;
    };
    const auto n_layers = static_cast<std::size_t>(get_i64());
    if (n_layers != layers_.size()) throw NnError("checkpoint layer count mismatch");
    if (get_i64() != input_width_ || get_i64() != output_width_)
      throw NnError("checkpoint width mismatch");
    auto get_mat = [&](Matrix& m) {
      const auto r = get_i64(), c = get_i64();
      if (r != m.rows() || c != m.cols()) throw NnError("checkpoint tensor shape mismatch");
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    };
    auto get_vec = [&](Vector& v) {
      const auto n = get_i64();
      if (n != v.size()) throw NnError("checkpoint tensor shape mismatch");
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
    };
    for (auto& l : layers_) {
      get_mat(l.w);
      get_vec(l.b);
    }
    const auto n_bn = static_cast<std::size_t>(get_i64());
    if (n_bn != bn_.size()) throw NnError("checkpoint batch-norm count mismatch");
    for (auto& bn : bn_) {
      get_vec(bn.gamma);
      get_vec(bn.beta);
      get_vec(bn.running_mean);
      get_vec(bn.running_var);
    }
    if (!in) throw NnError("checkpoint truncated");
  }

 private:
  static DenseLayer init_dense(int in, int out, RngStream& rng) {
    DenseLayer l;
    l.w = Matrix(in, out);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (long i = 0; i < l.w.size(); ++i) l.w.data()[i] = scale * rng.normal();
    l.b = Vector::Zero(out);
    return l;
  }

  Matrix apply_activation(const Matrix& a) const {
    if (spec_.activation == Activation::relu) return a.cwiseMax(0.0);
    return a.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
  }

  Matrix activation_backward(const MlpCache& c, std::size_t hl, const Matrix& dpost) const {
    const Matrix& post = c.post_act[hl];
    if (spec_.activation == Activation::relu)
      return dpost.cwiseProduct(post.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    return dpost.cwiseProduct(post.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
  }

  Matrix bn_forward(std::size_t l, const Matrix& a, bool training, MlpCache& c) const {
    const auto& bn = bn_[l];
    Vector mean, var;
    if (training) {
      // Running stats are updated by the trainer through
      // update_running_stats(); forward itself stays const.
      mean = a.colwise().mean();
      var = (a.rowwise() - mean.transpose()).array().square().colwise().mean();
    } else {
      mean = bn.running_mean;
      var = bn.running_var;
    }
    const Vector inv_std = (var.array() + kBnEps).sqrt().inverse();
    Matrix normalized = a.rowwise() - mean.transpose();
    normalized = normalized * inv_std.asDiagonal();
    c.normalized.push_back(normalized);
    c.batch_var.push_back(var);
    Matrix out = normalized * bn.gamma.asDiagonal();
    out.rowwise() += bn.beta.transpose();
    return out;
  }

  Matrix bn_backward(std::size_t l, const MlpCache& c, const Matrix& dout, MlpGrads& g) const {
    const auto& bn = bn_[l];
    const Matrix& xhat = c.normalized[l];
    const Vector& var = c.batch_var[l];
    const auto n = static_cast<double>(dout.rows());
    g.dgamma[l] = dout.cwiseProduct(xhat).colwise().sum();
    g.dbeta[l] = dout.colwise().sum();
    const Vector inv_std = (var.array() + kBnEps).sqrt().inverse();
    Matrix dxhat = dout * bn.gamma.asDiagonal();
    if (!c.training) return dxhat * inv_std.asDiagonal();
    const Vector sum_dxhat = dxhat.colwise().sum();
    const Vector sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
    Matrix dx = dxhat * n;
    dx.rowwise() -= sum_dxhat.transpose();
    dx -= xhat * sum_dxhat_xhat.asDiagonal();
    return (dx * inv_std.asDiagonal()) / n;
  }

  static Matrix softmax_rows(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double m = a.row(r).maxCoeff();
      Eigen::ArrayXd e = (a.row(r).array() - m).exp();
      out.row(r) = e / e.sum();
    }
    return out;
  }

  std::vector<std::pair<int, int>> head_groups() const {
    std::vector<std::pair<int, int>> groups;
    if (spec_.output_groups.empty()) {
      groups.emplace_back(0, output_width_);
    } else {
      int off = 0;
      for (int gsize : spec_.output_groups) {
        groups.emplace_back(off, gsize);
        off += gsize;
      }
    }
    return groups;
  }

  Matrix apply_head(const Matrix& logits, MlpCache& c, bool training, RngStream* rng) const {
    switch (spec_.head) {
      case HeadKind::linear:
        return logits;
      case HeadKind::sigmoid:
        return logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      case HeadKind::softmax:
        return softmax_rows(logits);
      case HeadKind::gumbel_softmax: {
        // Gumbel perturbation applies only to one-hot groups; single-slot
        // groups (continuous / binary columns) pass through a plain sigmoid.
        // Group logits are tanh-bounded to +-kGumbelLogitBound so the relaxed
        // samples keep a boundary population and gradients stay alive at the
        // low temperature.
        Matrix out(logits.rows(), logits.cols());
        for (const auto& [off, gsize] : head_groups()) {
          if (gsize == 1) {
            out.col(off) = logits.col(off).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
          } else {
            const double bound = spec_.gumbel_logit_bound;
            Matrix block = logits.middleCols(off, gsize).unaryExpr([bound](double v) {
              return bound * std::tanh(v / bound);
            });
            if (training) {
              if (!rng) throw NnError("gumbel head needs an RNG in training mode");
              for (Eigen::Index r = 0; r < block.rows(); ++r)
                for (Eigen::Index j = 0; j < block.cols(); ++j) block(r, j) += rng->gumbel();
            }
            out.middleCols(off, gsize) = softmax_rows(block / spec_.gumbel_temperature);
          }
        }
        return out;
      }
    }
    throw NnError("unknown head");
  }

  Matrix head_backward(const MlpCache& c, const Matrix& dout) const {
    switch (spec_.head) {
      case HeadKind::linear:
        return dout;
      case HeadKind::sigmoid:
        return dout.cwiseProduct(
            c.output.unaryExpr([](double y) { return y * (1.0 - y); }));
      case HeadKind::softmax: {
        Matrix dlogits(dout.rows(), dout.cols());
        for (Eigen::Index r = 0; r < dout.rows(); ++r) {
          const Eigen::RowVectorXd y = c.output.row(r);
          const double dot = dout.row(r).dot(y);
          dlogits.row(r) = y.cwiseProduct((dout.row(r).array() - dot).matrix());
        }
        return dlogits;
      }
      case HeadKind::gumbel_softmax: {
        Matrix dlogits = Matrix::Zero(dout.rows(), dout.cols());
        for (const auto& [off, gsize] : head_groups()) {
          if (gsize == 1) {
            dlogits.col(off) =
                dout.col(off).cwiseProduct(c.output.col(off).unaryExpr([](double y) { return y * (1.0 - y); }));
          } else {
            for (Eigen::Index r = 0; r < dout.rows(); ++r) {
              const Eigen::RowVectorXd y = c.output.row(r).segment(off, gsize);
              const Eigen::RowVectorXd dy = dout.row(r).segment(off, gsize);
              const double dot = dy.dot(y);
              Eigen::RowVectorXd dblock =
                  y.cwiseProduct((dy.array() - dot).matrix()) / spec_.gumbel_temperature;
              // chain through the tanh logit bound
              for (Eigen::Index j = 0; j < gsize; ++j) {
                const double t = std::tanh(c.logits(r, off + j) / spec_.gumbel_logit_bound);
                dblock[j] *= 1.0 - t * t;
              }
              dlogits.row(r).segment(off, gsize) = dblock;
            }
          }
        }
        return dlogits;
      }
    }
    throw NnError("unknown head");
  }

 public:
  // Exposes batch-norm running-statistic updates to the trainer.
  void update_running_stats(const MlpCache& c) {
    if (!spec_.batch_norm || !c.training) return;
    for (std::size_t l = 0; l < bn_.size(); ++l) {
      const Matrix& a = c.pre_bn[l];
      Vector mean = a.colwise().mean();
      Vector var = (a.rowwise() - mean.transpose()).array().square().colwise().mean();
      bn_[l].running_mean = kBnMomentum * bn_[l].running_mean + (1.0 - kBnMomentum) * mean;
      bn_[l].running_var = kBnMomentum * bn_[l].running_var + (1.0 - kBnMomentum) * var;
    }
  }

 private:
  NetworkSpec spec_;
  int input_width_ = 0;
  int output_width_ = 0;
  std::vector<DenseLayer> layers_;
  std::vector<BatchNormLayer> bn_;
};

// Adam with bias correction, one state per network.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Mlp& net, const MlpGrads& grads) {
    std::vector<long> psizes, gsizes;
    auto params = net.parameter_blocks(psizes);
    auto g = net.gradient_blocks(grads, gsizes);
    long total = 0;
    for (long s : psizes) total += s;
    if (m_.size() != total) {
      m_ = Vector::Zero(total);
      v_ = Vector::Zero(total);
      t_ = 0;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    long off = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (long i = 0; i < psizes[b]; ++i) {
        const double gi = g[b][i];
        m_[off + i] = beta1_ * m_[off + i] + (1.0 - beta1_) * gi;
        v_[off + i] = beta2_ * v_[off + i] + (1.0 - beta2_) * gi * gi;
        const double mhat = m_[off + i] / bc1;
        const double vhat = v_[off + i] / bc2;
        params[b][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      off += psizes[b];
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long steps() const { return t_; }

  void save(std::ostream& out) const {
    const std::int64_t n = m_.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&t_), sizeof t_);
    out.write(reinterpret_cast<const char*>(&lr_), sizeof lr_);
    if (n > 0) {
      out.write(reinterpret_cast<const char*>(m_.data()), static_cast<std::streamsize>(sizeof(double) * n));
      out.write(reinterpret_cast<const char*>(v_.data()), static_cast<std::streamsize>(sizeof(double) * n));
    }
  }

  void load(std::istream& in) {
    std::int64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&t_), sizeof t_);
    in.read(reinterpret_cast<char*>(&lr_), sizeof lr_);
    m_ = Vector::Zero(n);
    v_ = Vector::Zero(n);
    if (n > 0) {
      in.read(reinterpret_cast<char*>(m_.data()), static_cast<std::streamsize>(sizeof(double) * n));
      in.read(reinterpret_cast<char*>(v_.data()), static_cast<std::streamsize>(sizeof(double) * n));
    }
    if (!in) throw NnError("optimizer state truncated");
  }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Vector m_, v_;
  long t_ = 0;
};

// Binary cross-entropy on logits; returns mean loss, writes dL/dlogit.
inline double bce_with_logits(const Matrix& logits, double target, Matrix* dlogits) {
  const auto n = static_cast<double>(logits.rows());
  double loss = 0.0;
  if (dlogits) *dlogits = Matrix(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double x = logits.data()[i];
    const double p = 1.0 / (1.0 + std::exp(-x));
    loss += std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
    if (dlogits) dlogits->data()[i] = (p - target) / n;
  }
  return loss / n;
}

// log(sigmoid(x)) and log(1 - sigmoid(x)), numerically stable.
inline double log_sigmoid(double x) { return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)))); }
inline double log1m_sigmoid(double x) { return log_sigmoid(-x); }

}  // namespace btgan
