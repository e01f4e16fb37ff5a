#include "cpijit/nn.hpp"

#include <algorithm>
#include <cmath>

#include "cpijit/error.hpp"

namespace cpijit::nn {

namespace {

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    fail(ErrorCode::kDimensionMismatch, std::string(what) + ": expected dimension " + std::to_string(want) +
                                            ", got " + std::to_string(got));
  }
}

void fill_uniform(Vec& v, Rng& rng, double limit) {
  for (double& x : v) x = rng.uniform(-limit, limit);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Dense ---------------------------------------------------------------------

Dense::Dense(std::size_t in, std::size_t out)
    : w(in * out, 0.0), b(out, 0.0), gw(in * out, 0.0), gb(out, 0.0), in_(in), out_(out) {
  if (in == 0 || out == 0) fail(ErrorCode::kArgument, "dense layer dimensions must be positive");
}

void Dense::init(Rng& rng) {
  fill_uniform(w, rng, std::sqrt(6.0 / static_cast<double>(in_ + out_)));
  std::fill(b.begin(), b.end(), 0.0);
}

Vec Dense::forward(std::span<const double> x) const {
  check_dim(x.size(), in_, "dense input");
  Vec y(b);
  for (std::size_t r = 0; r < out_; ++r) {
    const double* row = &w[r * in_];
    double s = 0.0;
    for (std::size_t c = 0; c < in_; ++c) s += row[c] * x[c];
    y[r] += s;
  }
  return y;
}

Vec Dense::backward(std::span<const double> x, std::span<const double> dy) {
  Vec dx(in_, 0.0);
  for (std::size_t r = 0; r < out_; ++r) {
    const double d = dy[r];
    gb[r] += d;
    double* grow = &gw[r * in_];
    const double* row = &w[r * in_];
    for (std::size_t c = 0; c < in_; ++c) {
      grow[c] += d * x[c];
      dx[c] += d * row[c];
    }
  }
  return dx;
}

void Dense::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".w", &w, &gw, {out_, in_}});
  out.push_back({prefix + ".b", &b, &gb, {out_}});
}

// LSTM layer ----------------------------------------------------------------

LstmLayer::LstmLayer(std::size_t in, std::size_t hidden)
    : w(4 * hidden * in, 0.0),
      u(4 * hidden * hidden, 0.0),
      b(4 * hidden, 0.0),
      gw(w.size(), 0.0),
      gu(u.size(), 0.0),
      gb(b.size(), 0.0),
      in_(in),
      hidden_(hidden) {
  if (in == 0 || hidden == 0) fail(ErrorCode::kArgument, "LSTM dimensions must be positive");
}

void LstmLayer::init(Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_));
  fill_uniform(w, rng, limit);
  fill_uniform(u, rng, limit);
  std::fill(b.begin(), b.end(), 0.0);
  std::fill(b.begin() + static_cast<std::ptrdiff_t>(hidden_),
            b.begin() + static_cast<std::ptrdiff_t>(2 * hidden_), 1.0);
}

Sequence LstmLayer::forward(const Sequence& xs, std::vector<LstmStepCache>* cache) const {
  const std::size_t H = hidden_;
  Vec h(H, 0.0), c(H, 0.0), a(4 * H);
  Sequence hs;
  hs.reserve(xs.size());
  if (cache) {
    cache->clear();
    cache->reserve(xs.size());
  }
  for (const Vec& x : xs) {
    check_dim(x.size(), in_, "LSTM input");
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const double* wr = &w[r * in_];
      const double* ur = &u[r * H];
      double s = b[r];
      for (std::size_t k = 0; k < in_; ++k) s += wr[k] * x[k];
      for (std::size_t k = 0; k < H; ++k) s += ur[k] * h[k];
      a[r] = s;
    }
    LstmStepCache step;
    step.x = x;
    step.h_prev = h;
    step.c_prev = c;
    step.i.resize(H);
    step.f.resize(H);
    step.g.resize(H);
    step.o.resize(H);
    step.c.resize(H);
    step.tanh_c.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
      step.i[k] = sigmoid(a[k]);
      step.f[k] = sigmoid(a[H + k]);
      step.g[k] = std::tanh(a[2 * H + k]);
      step.o[k] = sigmoid(a[3 * H + k]);
      c[k] = step.f[k] * c[k] + step.i[k] * step.g[k];
      step.c[k] = c[k];
      step.tanh_c[k] = std::tanh(c[k]);
      h[k] = step.o[k] * step.tanh_c[k];
      if (!std::isfinite(h[k]) || !std::isfinite(c[k])) {
        fail(ErrorCode::kNumericFailure, "non-finite LSTM state");
      }
    }
    hs.push_back(h);
    if (cache) cache->push_back(std::move(step));
  }
  return hs;
}

Sequence LstmLayer::backward(const std::vector<LstmStepCache>& cache, const Sequence& dhs) {
  const std::size_t H = hidden_;
  const std::size_t T = cache.size();
  Sequence dxs(T, Vec(in_, 0.0));
  Vec dh_rec(H, 0.0), dc_rec(H, 0.0), da(4 * H);
  for (std::size_t t = T; t-- > 0;) {
    const LstmStepCache& s = cache[t];
    for (std::size_t k = 0; k < H; ++k) {
      const double dh = dhs[t][k] + dh_rec[k];
      const double d_o = dh * s.tanh_c[k];
      const double dc = dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_rec[k];
      const double di = dc * s.g[k];
      const double dg = dc * s.i[k];
      const double df = dc * s.c_prev[k];
      dc_rec[k] = dc * s.f[k];
      da[k] = di * s.i[k] * (1.0 - s.i[k]);
      da[H + k] = df * s.f[k] * (1.0 - s.f[k]);
      da[2 * H + k] = dg * (1.0 - s.g[k] * s.g[k]);
      da[3 * H + k] = d_o * s.o[k] * (1.0 - s.o[k]);
    }
    std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    Vec& dx = dxs[t];
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const double d = da[r];
      gb[r] += d;
      double* gwr = &gw[r * in_];
      const double* wr = &w[r * in_];
      for (std::size_t k = 0; k < in_; ++k) {
        gwr[k] += d * s.x[k];
        dx[k] += d * wr[k];
      }
      double* gur = &gu[r * H];
      const double* ur = &u[r * H];
      for (std::size_t k = 0; k < H; ++k) {
        gur[k] += d * s.h_prev[k];
        dh_rec[k] += d * ur[k];
      }
    }
  }
  return dxs;
}

void LstmLayer::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".w", &w, &gw, {4 * hidden_, in_}});
  out.push_back({prefix + ".u", &u, &gu, {4 * hidden_, hidden_}});
  out.push_back({prefix + ".b", &b, &gb, {4 * hidden_}});
}

// LSTM stack ----------------------------------------------------------------

LstmStack::LstmStack(std::size_t in, std::size_t hidden, std::size_t num_layers, double dropout_rate)
    : hidden_(hidden), dropout_(dropout_rate) {
  if (num_layers == 0) fail(ErrorCode::kArgument, "LSTM stack needs at least one layer");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail(ErrorCode::kArgument, "dropout rate must lie in [0, 1)");
  }
  layers_.emplace_back(in, hidden);
  for (std::size_t l = 1; l < num_layers; ++l) layers_.emplace_back(hidden, hidden);
}

void LstmStack::init(Rng& rng) {
  for (auto& layer : layers_) layer.init(rng);
}

Vec LstmStack::forward(const Sequence& xs, Rng* dropout_rng, Cache* cache) const {
  if (xs.empty()) fail(ErrorCode::kArgument, "LSTM input sequence is empty");
  if (cache) {
    cache->layers.assign(layers_.size(), {});
    cache->masks.assign(layers_.size() > 0 ? layers_.size() - 1 : 0, {});
  }
  const bool drop = dropout_rng != nullptr && dropout_ > 0.0;
  const double keep = 1.0 - dropout_;
  Sequence current = xs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    current = layers_[l].forward(current, cache ? &cache->layers[l] : nullptr);
    if (l + 1 < layers_.size() && drop) {
      Sequence masks(current.size(), Vec(hidden_));
      for (std::size_t t = 0; t < current.size(); ++t) {
        for (std::size_t k = 0; k < hidden_; ++k) {
          masks[t][k] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
          current[t][k] *= masks[t][k];
        }
      }
      if (cache) cache->masks[l] = std::move(masks);
    }
  }
  return current.back();
}

Sequence LstmStack::backward(const Cache& cache, std::span<const double> dh_final) {
  const std::size_t T = cache.layers.front().size();
  Sequence dhs(T, Vec(hidden_, 0.0));
  std::copy(dh_final.begin(), dh_final.end(), dhs.back().begin());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Sequence dxs = layers_[l].backward(cache.layers[l], dhs);
    if (l == 0) return dxs;
    const Sequence& masks = cache.masks[l - 1];
    if (!masks.empty()) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < hidden_; ++k) dxs[t][k] *= masks[t][k];
      }
    }
    dhs = std::move(dxs);
  }
  return {};
}

void LstmStack::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].collect(out, prefix + ".l" + std::to_string(l));
  }
}

// Losses --------------------------------------------------------------------

double bce_with_logits(double z, double y, double* dz) {
  if (dz) *dz = sigmoid(z) - y;
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double mse(std::span<const double> pred, std::span<const double> target, std::span<double> grad) {
  check_dim(target.size(), pred.size(), "mse target");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - target[k];
    loss += d * d;
    if (!grad.empty()) grad[k] = 2.0 * d / n;
  }
  return loss / n;
}

// Optimisation --------------------------------------------------------------

void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void scale_grads(const std::vector<ParamRef>& params, double factor) {
  for (const auto& p : params) {
    for (double& g : *p.grad) g *= factor;
  }
}

double grad_norm(const std::vector<ParamRef>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : *p.grad) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm) scale_grads(params, max_norm / norm);
  return norm;
}

bool all_finite(const std::vector<ParamRef>& params, bool gradients) {
  for (const auto& p : params) {
    for (double x : gradients ? *p.grad : *p.value) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->size(), 0.0);
      v_.emplace_back(p.value->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) fail(ErrorCode::kArgument, "optimizer state does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t j = 0; j < params.size(); ++j) {
    Vec& value = *params[j].value;
    const Vec& grad = *params[j].grad;
    Vec& m = m_[j];
    Vec& v = v_[j];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * grad[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * grad[k] * grad[k];
      value[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

}  // namespace cpijit::nn
