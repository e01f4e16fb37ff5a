#pragma once

// Small dense/LSTM kernel in double precision. Every layer processes one
// sample at a time and accumulates parameter gradients; the caller averages
// over a minibatch before the optimizer step.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cpijit/rng.hpp"

namespace cpijit::nn {

using Vec = std::vector<double>;
using Sequence = std::vector<Vec>;

/// A named parameter block and its gradient accumulator.
struct ParamRef {
  std::string name;
  Vec* value = nullptr;
  Vec* grad = nullptr;
  std::vector<std::size_t> shape;
};

double sigmoid(double z);

/// Fully connected affine map y = W x + b, W stored row-major (out x in).
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out);

  /// Glorot-uniform weights, zero bias.
  void init(Rng& rng);
  Vec forward(std::span<const double> x) const;
  /// Accumulates dW, db; returns dL/dx.
  Vec backward(std::span<const double> x, std::span<const double> dy);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

  Vec w, b, gw, gb;

 private:
  std::size_t in_ = 0, out_ = 0;
};

/// Activations of one LSTM time step, kept for backprop.
struct LstmStepCache {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o;  // gate activations
  Vec c, tanh_c;
};

/// One LSTM layer. Gate blocks are stacked in the order input, forget,
/// candidate, output: W is (4H x in), U is (4H x H).
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(std::size_t in, std::size_t hidden);

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
  void init(Rng& rng);
  /// Runs the sequence from zero state; returns h_t for every step.
  Sequence forward(const Sequence& xs, std::vector<LstmStepCache>* cache) const;
  /// dhs[t] is dL/dh_t from above. Accumulates parameter gradients and
  /// returns dL/dx_t for every step.
  Sequence backward(const std::vector<LstmStepCache>& cache, const Sequence& dhs);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  std::size_t in() const { return in_; }
  std::size_t hidden() const { return hidden_; }

  Vec w, u, b, gw, gu, gb;

 private:
  std::size_t in_ = 0, hidden_ = 0;
};

/// Stacked LSTM layers with inverted dropout between consecutive layers.
class LstmStack {
 public:
  struct Cache {
    std::vector<std::vector<LstmStepCache>> layers;
    /// masks[l][t] scales the output of layer l at step t before it feeds
    /// layer l + 1 (already divided by the keep probability).
    std::vector<Sequence> masks;
  };

  LstmStack() = default;
  LstmStack(std::size_t in, std::size_t hidden, std::size_t num_layers, double dropout_rate);

  void init(Rng& rng);
  /// Final hidden state of the top layer. `dropout_rng` non-null means train
  /// mode; null means eval mode (no dropout).
  Vec forward(const Sequence& xs, Rng* dropout_rng, Cache* cache) const;
  /// Backprop from dL/dh_final of the top layer. Returns dL/dx_t if wanted.
  Sequence backward(const Cache& cache, std::span<const double> dh_final);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  std::size_t in() const { return layers_.empty() ? 0 : layers_.front().in(); }
  std::size_t hidden() const { return hidden_; }
  std::size_t num_layers() const { return layers_.size(); }
  double dropout_rate() const { return dropout_; }
  std::vector<LstmLayer>& layers() { return layers_; }
  const std::vector<LstmLayer>& layers() const { return layers_; }

 private:
  std::vector<LstmLayer> layers_;
  std::size_t hidden_ = 0;
  double dropout_ = 0.0;
};

/// Numerically stable binary cross-entropy on a logit; writes dL/dz.
double bce_with_logits(double z, double y, double* dz);

/// Mean squared error over the entries; writes dL/dpred into grad.
double mse(std::span<const double> pred, std::span<const double> target, std::span<double> grad);

void zero_grads(const std::vector<ParamRef>& params);
void scale_grads(const std::vector<ParamRef>& params, double factor);
double grad_norm(const std::vector<ParamRef>& params);
/// Rescales gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);
bool all_finite(const std::vector<ParamRef>& params, bool gradients);

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef>& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Vec> m_, v_;
};

}  // namespace cpijit::nn
