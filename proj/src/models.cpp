#include "cpijit/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cpijit/error.hpp"

namespace cpijit {

namespace {

using nn::Vec;

constexpr int kCheckpointVersion = 1;

void check_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    fail(ErrorCode::kDimensionMismatch,
         what + ": expected dimension " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

Point z_vector(std::span<const double> features, int label) {
  Point z(features.begin(), features.end());
  z.push_back(static_cast<double>(label));
  return z;
}

std::vector<Point> standardize_window(std::span<const Point> window, const Standardizer& scaler,
                                      std::size_t lookback) {
  check_dim(window.size(), lookback, "window length");
  std::vector<Point> out;
  out.reserve(window.size());
  for (const Point& z : window) {
    check_dim(z.size(), scaler.dim() + 1, "window row");
    Point s = scaler.apply(std::span<const double>(z).first(scaler.dim()));
    s.push_back(z.back());
    out.push_back(std::move(s));
  }
  return out;
}

template <typename Model, typename Example>
TrainHistory run_training(Model& model, const std::vector<Example>& train, const std::vector<Example>& val,
                          const TrainConfig& config) {
  if (train.empty()) fail(ErrorCode::kInsufficientData, "no training examples");
  auto params = model.params();
  nn::Adam adam(config.learning_rate);
  Rng order_rng(config.seed, "shuffle");
  Rng dropout_rng(config.seed, "dropout");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  Model best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      nn::zero_grads(params);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) batch_loss += model.loss_and_grad(train[order[i]], &dropout_rng);
      if (!std::isfinite(batch_loss) || !nn::all_finite(params, true)) {
        fail(ErrorCode::kNumericFailure, "non-finite loss or gradient at epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batch_index) +
                                             " (batch loss " + std::to_string(batch_loss) + ")");
      }
      nn::scale_grads(params, 1.0 / static_cast<double>(end - start));
      nn::clip_grad_norm(params, config.clip_norm);
      adam.step(params);
      total += batch_loss;
    }
    const double train_loss = total / static_cast<double>(train.size());
    double val_loss = train_loss;
    if (!val.empty()) {
      val_loss = 0.0;
      for (const auto& ex : val) val_loss += model.loss(ex, nullptr);
      val_loss /= static_cast<double>(val.size());
    }
    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(val_loss);
    history.epochs_run = epoch + 1;
    if (val.empty()) {
      history.best_epoch = epoch;
      continue;
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      history.stopped_early = true;
      break;
    }
  }
  if (!val.empty()) model = best;
  return history;
}

// base64 ---------------------------------------------------------------------

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

nlohmann::json vec_json(const Vec& v) { return encode_doubles(v); }

Vec json_vec(const nlohmann::json& j, std::size_t expected, const std::string& what) {
  Vec v = decode_doubles(j.get<std::string>());
  check_dim(v.size(), expected, what);
  return v;
}

nlohmann::json params_json(std::vector<nn::ParamRef> params) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : params) {
    out.push_back({{"name", p.name}, {"shape", p.shape}, {"data", encode_doubles(*p.value)}});
  }
  return out;
}

void load_params(std::vector<nn::ParamRef> params, const nlohmann::json& j) {
  if (!j.is_array() || j.size() != params.size()) {
    fail(ErrorCode::kConfig, "checkpoint parameter list does not match the architecture");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (j[k].at("name").get<std::string>() != params[k].name) {
      fail(ErrorCode::kConfig, "checkpoint parameter '" + j[k].at("name").get<std::string>() +
                                   "' where '" + params[k].name + "' was expected");
    }
    *params[k].value = json_vec(j[k].at("data"), params[k].value->size(), params[k].name);
  }
}

nlohmann::json scaler_json(const Standardizer& s) {
  return {{"mean", vec_json(s.mean)}, {"scale", vec_json(s.scale)}};
}

Standardizer json_scaler(const nlohmann::json& j, std::size_t dim) {
  return {json_vec(j.at("mean"), dim, "scaler mean"), json_vec(j.at("scale"), dim, "scaler scale")};
}

void check_header(const nlohmann::json& j, const std::string& kind) {
  if (j.value("format", "") != "cpijit-model") fail(ErrorCode::kConfig, "not a model checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    fail(ErrorCode::kConfig, "unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
  }
  if (j.value("kind", "") != kind) {
    fail(ErrorCode::kConfig, "checkpoint holds a '" + j.value("kind", "") + "' model, expected '" + kind + "'");
  }
}

}  // namespace

// Config ---------------------------------------------------------------------

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kConfig, std::string("invalid training config: ") + what);
  };
  need(epochs > 0, "epochs must be positive");
  need(batch_size > 0, "batch_size must be positive");
  need(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be finite and >= 0");
  need(early_stop_patience > 0, "early_stop_patience must be positive");
  need(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
  need(hidden_size > 0, "hidden_size must be positive");
  need(num_layers > 0, "num_layers must be positive");
  need(lookback > 0, "lookback must be positive");
  need(clip_norm > 0.0, "clip_norm must be positive");
  for (auto s : dense_sizes) need(s > 0, "dense_sizes entries must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"early_stop_patience", c.early_stop_patience},
          {"dropout_rate", c.dropout_rate},
          {"hidden_size", c.hidden_size},
          {"num_layers", c.num_layers},
          {"lookback", c.lookback},
          {"dense_sizes", c.dense_sizes},
          {"forecast_part", c.forecast_part},
          {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "training config must be an object");
  TrainConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) fail(ErrorCode::kConfig, "unknown training key '" + key + "'");
  }
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.lookback = j.value("lookback", c.lookback);
    c.dense_sizes = j.value("dense_sizes", c.dense_sizes);
    c.forecast_part = j.value("forecast_part", c.forecast_part);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

// Scaling and windows --------------------------------------------------------

Standardizer Standardizer::fit(std::span<const Point> rows) {
  if (rows.empty()) fail(ErrorCode::kEmptyDataset, "cannot fit scaling on zero rows");
  const std::size_t d = rows.front().size();
  Standardizer s{Vec(d, 0.0), Vec(d, 1.0)};
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    check_dim(r.size(), d, "scaling row");
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (double& m : s.mean) m /= n;
  Vec var(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) { return {Vec(dim, 0.0), Vec(dim, 1.0)}; }

Point Standardizer::apply(std::span<const double> row) const {
  check_dim(row.size(), dim(), "scaled row");
  Point out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
  return out;
}

std::vector<ForecastExample> forecast_examples(std::span<const Point> features, std::span<const int> labels,
                                               std::size_t lookback) {
  check_dim(labels.size(), features.size(), "label count");
  if (lookback == 0) fail(ErrorCode::kArgument, "lookback must be positive");
  if (features.size() <= lookback) {
    fail(ErrorCode::kInsufficientData, "forecasting needs more than " + std::to_string(lookback) +
                                           " changesets, got " + std::to_string(features.size()));
  }
  std::vector<ForecastExample> out;
  out.reserve(features.size() - lookback);
  for (std::size_t t = lookback; t < features.size(); ++t) {
    ForecastExample ex;
    for (std::size_t k = t - lookback; k < t; ++k) ex.window.push_back(z_vector(features[k], labels[k]));
    ex.target = z_vector(features[t], labels[t]);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Point> preceding_window(std::span<const Point> features, std::span<const int> labels, std::size_t t,
                                    std::size_t lookback) {
  check_dim(labels.size(), features.size(), "label count");
  if (t > features.size()) fail(ErrorCode::kArgument, "window position past the end of the data");
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  std::vector<Point> window;
  window.reserve(lookback);
  for (std::size_t k = 0; k < lookback; ++k) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(lookback) +
                               static_cast<std::ptrdiff_t>(k);
    if (pos < 0) {
      window.emplace_back(dim + 1, 0.0);
    } else {
      const auto p = static_cast<std::size_t>(pos);
      window.push_back(z_vector(features[p], labels[p]));
    }
  }
  return window;
}

// Forecaster -----------------------------------------------------------------

ForecastModel::ForecastModel(std::size_t feature_dim, const TrainConfig& config)
    : stack(feature_dim + 1, config.hidden_size, config.num_layers, config.dropout_rate),
      head(config.hidden_size, feature_dim + 1),
      lookback(config.lookback),
      scaler(Standardizer::identity(feature_dim)),
      feature_dim_(feature_dim) {
  if (feature_dim == 0) fail(ErrorCode::kArgument, "forecaster needs at least one feature");
}

void ForecastModel::init(std::uint64_t seed) {
  Rng rng(seed, "init");
  stack.init(rng);
  head.init(rng);
}

std::vector<nn::ParamRef> ForecastModel::params() {
  std::vector<nn::ParamRef> out;
  stack.collect(out, "stack");
  head.collect(out, "head");
  return out;
}

std::vector<double> ForecastModel::forward(const std::vector<Point>& window, Rng* dropout_rng,
                                           nn::LstmStack::Cache* cache) const {
  return head.forward(stack.forward(window, dropout_rng, cache));
}

double ForecastModel::loss(const ForecastExample& ex, Rng* dropout_rng) const {
  const Vec out = forward(ex.window, dropout_rng, nullptr);
  const double m = nn::mse(std::span(out).first(feature_dim_), std::span(ex.target).first(feature_dim_), {});
  return m + nn::bce_with_logits(out.back(), ex.target.back(), nullptr);
}

double ForecastModel::loss_and_grad(const ForecastExample& ex, Rng* dropout_rng) {
  nn::LstmStack::Cache cache;
  const Vec h = stack.forward(ex.window, dropout_rng, &cache);
  const Vec out = head.forward(h);
  Vec dout(out.size());
  double loss = nn::mse(std::span(out).first(feature_dim_), std::span(ex.target).first(feature_dim_),
                        std::span(dout).first(feature_dim_));
  loss += nn::bce_with_logits(out.back(), ex.target.back(), &dout.back());
  const Vec dh = head.backward(h, dout);
  stack.backward(cache, dh);
  return loss;
}

std::vector<Point> ForecastModel::prepare_window(std::span<const Point> window) const {
  return standardize_window(window, scaler, lookback);
}

ForecastExample ForecastModel::prepare(const ForecastExample& raw) const {
  check_dim(raw.target.size(), feature_dim_ + 1, "forecast target");
  ForecastExample ex;
  ex.window = prepare_window(raw.window);
  ex.target = scaler.apply(std::span(raw.target).first(feature_dim_));
  ex.target.push_back(raw.target.back());
  return ex;
}

double ForecastModel::predict_proba(std::span<const Point> window) const {
  return nn::sigmoid(forward(prepare_window(window), nullptr, nullptr).back());
}

Point ForecastModel::predict_next(std::span<const Point> window) const {
  Vec out = forward(prepare_window(window), nullptr, nullptr);
  for (std::size_t j = 0; j < feature_dim_; ++j) out[j] = out[j] * scaler.scale[j] + scaler.mean[j];
  out.back() = nn::sigmoid(out.back());
  return out;
}

// DeepICP --------------------------------------------------------------------

struct DeepIcpModel::Cache {
  nn::LstmStack::Cache a, b;
  Vec ha, hb;
  std::vector<Vec> inputs;    // input of each dense layer
  std::vector<Vec> pre_acts;  // output of each dense layer before ReLU
};

DeepIcpModel::DeepIcpModel(std::size_t feature_dim, const TrainConfig& config)
    : part_b(feature_dim, config.hidden_size, config.num_layers, config.dropout_rate),
      lookback(config.lookback),
      scaler(Standardizer::identity(feature_dim)),
      feature_dim_(feature_dim),
      forecast_part_(config.forecast_part) {
  if (feature_dim == 0) fail(ErrorCode::kArgument, "classifier needs at least one feature");
  std::size_t width = config.hidden_size;
  if (forecast_part_) {
    part_a = nn::LstmStack(feature_dim + 1, config.hidden_size, config.num_layers, config.dropout_rate);
    width += config.hidden_size;
  }
  for (std::size_t s : config.dense_sizes) {
    part_c.emplace_back(width, s);
    width = s;
  }
  part_c.emplace_back(width, 1);
}

void DeepIcpModel::init(std::uint64_t seed) {
  Rng rng(seed, "init");
  if (forecast_part_) part_a.init(rng);
  part_b.init(rng);
  for (auto& d : part_c) d.init(rng);
}

std::vector<nn::ParamRef> DeepIcpModel::params() {
  std::vector<nn::ParamRef> out;
  if (forecast_part_) part_a.collect(out, "part_a");
  part_b.collect(out, "part_b");
  for (std::size_t l = 0; l < part_c.size(); ++l) part_c[l].collect(out, "part_c.d" + std::to_string(l));
  return out;
}

double DeepIcpModel::logit(const IcpExample& ex, Rng* dropout_rng, Cache* cache) const {
  Vec ha;
  if (forecast_part_) ha = part_a.forward(ex.window, dropout_rng, cache ? &cache->a : nullptr);
  const Vec hb = part_b.forward(nn::Sequence{ex.x}, dropout_rng, cache ? &cache->b : nullptr);
  Vec u = ha;
  u.insert(u.end(), hb.begin(), hb.end());
  for (std::size_t l = 0; l < part_c.size(); ++l) {
    Vec z = part_c[l].forward(u);
    if (cache) {
      cache->inputs.push_back(std::move(u));
      cache->pre_acts.push_back(z);
    }
    if (l + 1 < part_c.size()) {
      for (double& v : z) v = std::max(v, 0.0);
    }
    u = std::move(z);
  }
  return u[0];
}

double DeepIcpModel::loss(const IcpExample& ex, Rng* dropout_rng) const {
  return nn::bce_with_logits(logit(ex, dropout_rng, nullptr), ex.label, nullptr);
}

double DeepIcpModel::loss_and_grad(const IcpExample& ex, Rng* dropout_rng) {
  Cache cache;
  double dz = 0.0;
  const double loss = nn::bce_with_logits(logit(ex, dropout_rng, &cache), ex.label, &dz);
  Vec d{dz};
  for (std::size_t l = part_c.size(); l-- > 0;) {
    Vec dx = part_c[l].backward(cache.inputs[l], d);
    if (l > 0) {
      const Vec& pre = cache.pre_acts[l - 1];
      for (std::size_t k = 0; k < dx.size(); ++k) {
        if (pre[k] <= 0.0) dx[k] = 0.0;
      }
    }
    d = std::move(dx);
  }
  const std::size_t ha = forecast_part_ ? part_a.hidden() : 0;
  if (forecast_part_) part_a.backward(cache.a, std::span(d).first(ha));
  part_b.backward(cache.b, std::span(d).subspan(ha));
  return loss;
}

IcpExample DeepIcpModel::prepare(const IcpExample& raw) const {
  check_dim(raw.x.size(), feature_dim_, "changeset features");
  if (raw.label != 0 && raw.label != 1) fail(ErrorCode::kDomain, "labels must be 0 or 1");
  IcpExample ex;
  ex.x = scaler.apply(raw.x);
  ex.label = raw.label;
  if (forecast_part_) ex.window = standardize_window(raw.window, scaler, lookback);
  return ex;
}

double DeepIcpModel::predict(const IcpExample& raw) const {
  IcpExample ex = prepare(raw);
  return nn::sigmoid(logit(ex, nullptr, nullptr));
}

std::vector<double> DeepIcpModel::predict(std::span<const IcpExample> raw) const {
  std::vector<double> out;
  out.reserve(raw.size());
  for (const auto& ex : raw) out.push_back(predict(ex));
  return out;
}

// Logistic baseline ----------------------------------------------------------

LogisticModel fit_logistic(std::span<const Point> features, std::span<const int> labels, double ridge,
                           int max_iter) {
  check_dim(labels.size(), features.size(), "label count");
  if (features.empty()) fail(ErrorCode::kEmptyDataset, "logistic fit on zero rows");
  const Standardizer s = Standardizer::fit(features);
  const auto n = static_cast<Eigen::Index>(features.size());
  const auto d = static_cast<Eigen::Index>(s.dim());
  Eigen::MatrixXd X(n, d + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point z = s.apply(features[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = z[static_cast<std::size_t>(j)];
    X(i, d) = 1.0;
    const int l = labels[static_cast<std::size_t>(i)];
    if (l != 0 && l != 1) fail(ErrorCode::kDomain, "labels must be 0 or 1");
    y(i) = l;
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, ridge);
  penalty(d) = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = nn::sigmoid(eta(i));
      w(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
    }
    const Eigen::VectorXd grad = X.transpose() * (y - p) - penalty.cwiseProduct(beta);
    Eigen::MatrixXd hess = X.transpose() * w.asDiagonal() * X;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) fail(ErrorCode::kNumericFailure, "logistic Newton step is not finite");
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  LogisticModel m;
  m.weights.resize(s.dim());
  m.bias = beta(d);
  for (std::size_t j = 0; j < s.dim(); ++j) {
    m.weights[j] = beta(static_cast<Eigen::Index>(j)) / s.scale[j];
    m.bias -= m.weights[j] * s.mean[j];
  }
  return m;
}

double predict(const LogisticModel& model, std::span<const double> x) {
  check_dim(x.size(), model.weights.size(), "logistic input");
  double z = model.bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
  return nn::sigmoid(z);
}

// Training entry points ------------------------------------------------------

Fit<ForecastModel> train_forecaster(std::span<const ForecastExample> train, std::span<const ForecastExample> val,
                                    const TrainConfig& config) {
  config.validate();
  if (train.empty()) fail(ErrorCode::kInsufficientData, "no forecasting examples");
  const std::size_t m = train.front().target.size();
  if (m < 2) fail(ErrorCode::kDimensionMismatch, "Z vectors need at least one feature and the label");
  TrainConfig c = config;
  c.lookback = train.front().window.size();
  Fit<ForecastModel> fit{ForecastModel(m - 1, c), {}};
  std::vector<Point> rows;
  rows.reserve(train.size());
  for (const auto& ex : train) {
    check_dim(ex.target.size(), m, "forecast target");
    rows.emplace_back(ex.target.begin(), ex.target.end() - 1);
  }
  fit.model.scaler = Standardizer::fit(rows);
  fit.model.init(config.seed);
  std::vector<ForecastExample> tr, va;
  for (const auto& ex : train) tr.push_back(fit.model.prepare(ex));
  for (const auto& ex : val) va.push_back(fit.model.prepare(ex));
  fit.history = run_training(fit.model, tr, va, config);
  return fit;
}

Fit<DeepIcpModel> train_deepicp(std::span<const IcpExample> train, std::span<const IcpExample> val,
                                const TrainConfig& config) {
  config.validate();
  if (train.empty()) fail(ErrorCode::kInsufficientData, "no training examples");
  Fit<DeepIcpModel> fit{DeepIcpModel(train.front().x.size(), config), {}};
  std::vector<Point> rows;
  rows.reserve(train.size());
  for (const auto& ex : train) rows.push_back(ex.x);
  fit.model.scaler = Standardizer::fit(rows);
  fit.model.init(config.seed);
  std::vector<IcpExample> tr, va;
  for (const auto& ex : train) tr.push_back(fit.model.prepare(ex));
  for (const auto& ex : val) va.push_back(fit.model.prepare(ex));
  fit.history = run_training(fit.model, tr, va, config);
  return fit;
}

Fit<DeepIcpModel> incremental_update(const DeepIcpModel& model, std::span<const IcpExample> train,
                                     std::span<const IcpExample> val, const TrainConfig& config) {
  config.validate();
  if (train.empty()) fail(ErrorCode::kInsufficientData, "incremental update needs a nonempty segment");
  Fit<DeepIcpModel> fit{model, {}};
  std::vector<IcpExample> tr, va;
  for (const auto& ex : train) tr.push_back(fit.model.prepare(ex));
  for (const auto& ex : val) va.push_back(fit.model.prepare(ex));
  fit.history = run_training(fit.model, tr, va, config);
  return fit;
}

// Checkpoints ----------------------------------------------------------------

std::string encode_doubles(std::span<const double> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<unsigned char>(bits >> (8 * k)));
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::size_t left = bytes.size() - i;
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (left > 1) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (left > 2) chunk |= bytes[i + 2];
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += left > 1 ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += left > 2 ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

std::vector<double> decode_doubles(std::string_view text) {
  if (text.size() % 4 != 0) fail(ErrorCode::kParse, "base64 payload length is not a multiple of 4");
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      int v = 0;
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
      } else {
        v = b64_value(c);
        if (v < 0 || pad > 0) fail(ErrorCode::kParse, "invalid base64 payload");
      }
      chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    }
    bytes.push_back(static_cast<unsigned char>(chunk >> 16));
    if (pad < 2) bytes.push_back(static_cast<unsigned char>(chunk >> 8));
    if (pad < 1) bytes.push_back(static_cast<unsigned char>(chunk));
  }
  if (bytes.size() % 8 != 0) fail(ErrorCode::kParse, "payload is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(k)]) << (8 * k);
    std::memcpy(&out[i], &bits, sizeof bits);
  }
  return out;
}

nlohmann::json to_json(const ForecastModel& model) {
  auto& m = const_cast<ForecastModel&>(model);  // params() hands out mutable refs; we only read
  return {{"format", "cpijit-model"},
          {"version", kCheckpointVersion},
          {"kind", "forecast"},
          {"feature_dim", model.feature_dim()},
          {"lookback", model.lookback},
          {"hidden_size", model.stack.hidden()},
          {"num_layers", model.stack.num_layers()},
          {"dropout_rate", model.stack.dropout_rate()},
          {"scaler", scaler_json(model.scaler)},
          {"params", params_json(m.params())}};
}

nlohmann::json to_json(const DeepIcpModel& model) {
  auto& m = const_cast<DeepIcpModel&>(model);
  std::vector<std::size_t> dense;
  for (std::size_t l = 0; l + 1 < model.part_c.size(); ++l) dense.push_back(model.part_c[l].out());
  return {{"format", "cpijit-model"},
          {"version", kCheckpointVersion},
          {"kind", "deepicp"},
          {"feature_dim", model.feature_dim()},
          {"lookback", model.lookback},
          {"hidden_size", model.part_b.hidden()},
          {"num_layers", model.part_b.num_layers()},
          {"dropout_rate", model.part_b.dropout_rate()},
          {"dense_sizes", dense},
          {"forecast_part", model.forecast_part()},
          {"scaler", scaler_json(model.scaler)},
          {"params", params_json(m.params())}};
}

nlohmann::json to_json(const LogisticModel& model) {
  return {{"format", "cpijit-model"},
          {"version", kCheckpointVersion},
          {"kind", "logistic"},
          {"feature_dim", model.weights.size()},
          {"bias", encode_doubles(std::span(&model.bias, 1))},
          {"weights", encode_doubles(model.weights)}};
}

ForecastModel forecast_model_from_json(const nlohmann::json& j) {
  try {
    check_header(j, "forecast");
    TrainConfig c;
    c.lookback = j.at("lookback").get<std::size_t>();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    const auto dim = j.at("feature_dim").get<std::size_t>();
    ForecastModel m(dim, c);
    m.scaler = json_scaler(j.at("scaler"), dim);
    load_params(m.params(), j.at("params"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed forecast checkpoint: ") + e.what());
  }
}

DeepIcpModel deepicp_model_from_json(const nlohmann::json& j) {
  try {
    check_header(j, "deepicp");
    TrainConfig c;
    c.lookback = j.at("lookback").get<std::size_t>();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.dense_sizes = j.at("dense_sizes").get<std::vector<std::size_t>>();
    c.forecast_part = j.at("forecast_part").get<bool>();
    const auto dim = j.at("feature_dim").get<std::size_t>();
    DeepIcpModel m(dim, c);
    m.scaler = json_scaler(j.at("scaler"), dim);
    load_params(m.params(), j.at("params"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed DeepICP checkpoint: ") + e.what());
  }
}

LogisticModel logistic_model_from_json(const nlohmann::json& j) {
  try {
    check_header(j, "logistic");
    const auto dim = j.at("feature_dim").get<std::size_t>();
    LogisticModel m;
    m.weights = json_vec(j.at("weights"), dim, "logistic weights");
    m.bias = json_vec(j.at("bias"), 1, "logistic bias")[0];
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed logistic checkpoint: ") + e.what());
  }
}

}  // namespace cpijit
