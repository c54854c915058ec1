// Copyright 2026 The facelink Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "facelink/codec.hpp"
#include "facelink/error.hpp"
#include "facelink/matrix.hpp"
#include "facelink/random.hpp"
#include "facelink/text.hpp"
#include "facelink/trace.hpp"

namespace facelink {

struct PredictorConfig {
  std::size_t window = 5;  ///< sliding window d
  std::size_t hidden_size = 16;
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  bool normalize = true;
  double train_fraction = 0.8;

  void validate() const {
    if (window < 1) fail(Errc::invalid_argument, "predictor: window must be >= 1");
    if (hidden_size < 1) fail(Errc::invalid_argument, "predictor: hidden_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      fail(Errc::invalid_argument, "predictor: learning_rate must be positive");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
      fail(Errc::invalid_argument, "predictor: train_fraction must lie in (0, 1]");
  }
};

/// Single-layer LSTM with a scalar input and a linear scalar readout.
///
/// Parameters live in one flat vector so that optimizers and gradient checks
/// can treat them uniformly. Layout, with H the hidden size and gates
/// ordered input, forget, candidate, output:
///
///   [ w_x (4H) | w_h (H x 4H) | b (4H) | w_out (H) | b_out (1) ]
///
/// w_h is stored transposed: entry [c][r] couples h[c] into gate row r, so
/// the recurrent product is a run of contiguous axpy updates.
class Lstm {
 public:
  Lstm() = default;
  explicit Lstm(std::size_t hidden) : hidden_(hidden), params_(param_count(hidden), 0.0) {}
  Lstm(std::size_t hidden, std::vector<double> params)
      : hidden_(hidden), params_(std::move(params)) {
    if (params_.size() != param_count(hidden_))
      fail(Errc::shape_mismatch, "lstm: parameter vector has the wrong length");
  }

  static constexpr std::size_t param_count(std::size_t h) { return 4 * h + 4 * h * h + 4 * h + h + 1; }

  std::size_t hidden() const noexcept { return hidden_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1, zero readout bias.
  void initialize(Rng& rng) {
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_));
    for (auto& p : params_) p = rng.uniform(-k, k);
    auto b = params_.begin() + static_cast<std::ptrdiff_t>(b_off());
    std::fill(b, b + 4 * static_cast<std::ptrdiff_t>(hidden_), 0.0);
    std::fill(b + static_cast<std::ptrdiff_t>(hidden_), b + 2 * static_cast<std::ptrdiff_t>(hidden_), 1.0);
    params_.back() = 0.0;
  }

  /// Runs the window through the cell from zero state and returns the readout.
  double forward(std::span<const double> window) const {
    Workspace ws;
    return forward(window, ws);
  }

  /// Squared error (y - target)^2 and its gradient, accumulated into grad.
  double loss_and_gradient(std::span<const double> window, double target,
                           std::span<double> grad) const {
    Workspace ws;
    const double y = forward(window, ws);
    const double err = y - target;
    backward(window, ws, 2.0 * err, grad);
    return err * err;
  }

  struct Workspace {
    // per step: gates (4H, post-activation), cell (H), tanh(cell) (H), hidden (H)
    std::vector<double> gates, cell, cell_tanh, hidden;
    std::vector<double> dh, dc, da;
  };

  double forward(std::span<const double> window, Workspace& ws) const {
    const std::size_t h = hidden_, steps = window.size();
    ws.gates.assign(steps * 4 * h, 0.0);
    ws.cell.assign((steps + 1) * h, 0.0);
    ws.cell_tanh.assign(steps * h, 0.0);
    ws.hidden.assign((steps + 1) * h, 0.0);
    const double* wx = params_.data() + wx_off();
    const double* wh = params_.data() + wh_off();
    const double* b = params_.data() + b_off();
    for (std::size_t t = 0; t < steps; ++t) {
      double* g = ws.gates.data() + t * 4 * h;
      const double* hp = ws.hidden.data() + t * h;
      const double* cp = ws.cell.data() + t * h;
      double* hn = ws.hidden.data() + (t + 1) * h;
      double* cn = ws.cell.data() + (t + 1) * h;
      const double x = window[t];
      for (std::size_t r = 0; r < 4 * h; ++r) g[r] = b[r] + wx[r] * x;
      for (std::size_t c = 0; t > 0 && c < h; ++c) {  // zero initial state
        const double hc = hp[c];
        const double* col = wh + c * 4 * h;
        for (std::size_t r = 0; r < 4 * h; ++r) g[r] += col[r] * hc;
      }
      for (std::size_t r = 0; r < 4 * h; ++r)
        g[r] = (r >= 2 * h && r < 3 * h) ? tanh(g[r]) : sigmoid(g[r]);
      double* tc = ws.cell_tanh.data() + t * h;
      for (std::size_t k = 0; k < h; ++k) {
        cn[k] = g[h + k] * cp[k] + g[k] * g[2 * h + k];
        tc[k] = tanh(cn[k]);
        hn[k] = g[3 * h + k] * tc[k];
      }
    }
    const double* wo = params_.data() + wo_off();
    const double* hl = ws.hidden.data() + steps * h;
    double y = params_.back();
    for (std::size_t k = 0; k < h; ++k) y += wo[k] * hl[k];
    return y;
  }

  /// Backpropagation through the whole window given dL/dy.
  void backward(std::span<const double> window, Workspace& ws, double dy,
                std::span<double> grad) const {
    const std::size_t h = hidden_, steps = window.size();
    const double* wh = params_.data() + wh_off();
    const double* wo = params_.data() + wo_off();
    double* g_wx = grad.data() + wx_off();
    double* g_wh = grad.data() + wh_off();
    double* g_b = grad.data() + b_off();
    double* g_wo = grad.data() + wo_off();

    auto& dh = ws.dh;
    auto& dc = ws.dc;
    auto& da = ws.da;
    dh.assign(h, 0.0);
    dc.assign(h, 0.0);
    da.assign(4 * h, 0.0);
    const double* hl = ws.hidden.data() + steps * h;
    for (std::size_t k = 0; k < h; ++k) {
      g_wo[k] += dy * hl[k];
      dh[k] = dy * wo[k];
    }
    grad.back() += dy;

    for (std::size_t t = steps; t-- > 0;) {
      const double* g = ws.gates.data() + t * 4 * h;
      const double* cp = ws.cell.data() + t * h;
      const double* tcs = ws.cell_tanh.data() + t * h;
      const double* hp = ws.hidden.data() + t * h;
      for (std::size_t k = 0; k < h; ++k) {
        const double i = g[k], f = g[h + k], c_hat = g[2 * h + k], o = g[3 * h + k];
        const double tc = tcs[k];
        const double dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        da[k] = dct * c_hat * i * (1.0 - i);
        da[h + k] = dct * cp[k] * f * (1.0 - f);
        da[2 * h + k] = dct * i * (1.0 - c_hat * c_hat);
        da[3 * h + k] = dh[k] * tc * o * (1.0 - o);
        dc[k] = dct * f;
      }
      for (std::size_t r = 0; r < 4 * h; ++r) {
        g_wx[r] += da[r] * window[t];
        g_b[r] += da[r];
      }
      for (std::size_t c = 0; t > 0 && c < h; ++c) {
        const double hc = hp[c];
        const double* col = wh + c * 4 * h;
        double* gcol = g_wh + c * 4 * h;
        double acc = 0.0;
        for (std::size_t r = 0; r < 4 * h; ++r) {
          gcol[r] += da[r] * hc;
          acc += da[r] * col[r];
        }
        dh[c] = acc;
      }
    }
  }

  friend bool operator==(const Lstm&, const Lstm&) = default;

 private:
  static double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }
  // exp-based tanh; glibc's exp is markedly cheaper than its tanh
  static double tanh(double a) {
    if (a > 20.0) return 1.0;
    if (a < -20.0) return -1.0;
    if (std::abs(a) < 1e-4) return std::tanh(a);
    const double e = std::exp(-2.0 * a);
    return (1.0 - e) / (1.0 + e);
  }

  std::size_t wx_off() const noexcept { return 0; }
  std::size_t wh_off() const noexcept { return 4 * hidden_; }
  std::size_t b_off() const noexcept { return 4 * hidden_ + 4 * hidden_ * hidden_; }
  std::size_t wo_off() const noexcept { return b_off() + 4 * hidden_; }

  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

/// Trained predictor for one coefficient.
struct FeatureModel {
  std::size_t feature = 0;
  Lstm net;
  double mean = 0.0;  ///< normalization offset
  double scale = 1.0; ///< normalization divisor
  double train_mse = 0.0;
  double validation_mse = 0.0;

  friend bool operator==(const FeatureModel&, const FeatureModel&) = default;
};

/// One recurrent predictor per trained coefficient index.
struct PredictorModel {
  PredictorConfig config;
  std::vector<FeatureModel> features;  // ascending by feature index

  const FeatureModel* find(std::size_t m) const {
    auto it = std::lower_bound(features.begin(), features.end(), m,
                               [](const FeatureModel& f, std::size_t idx) { return f.feature < idx; });
    return (it != features.end() && it->feature == m) ? &*it : nullptr;
  }

  const FeatureModel& at(std::size_t m) const {
    if (const auto* f = find(m)) return *f;
    fail(Errc::missing_model, "no predictor trained for feature " + std::to_string(m));
  }

  std::vector<std::size_t> trained_feature_indices() const {
    std::vector<std::size_t> out;
    for (const auto& f : features) out.push_back(f.feature);
    return out;
  }
};

/// One-step-ahead prediction from the last d values.
inline double predict_step(const FeatureModel& model, std::span<const double> window,
                           std::size_t expected_window) {
  if (window.size() != expected_window)
    fail(Errc::invalid_argument, "predict_step: window has " + std::to_string(window.size()) +
                                     " values, model expects " + std::to_string(expected_window));
  std::vector<double> x(window.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (window[i] - model.mean) / model.scale;
  return model.net.forward(x) * model.scale + model.mean;
}

inline double predict_step(const PredictorModel& model, std::size_t m, std::span<const double> window) {
  return predict_step(model.at(m), window, model.config.window);
}

/// Trains one model on a single coefficient series with per-window SGD.
inline FeatureModel train_feature(std::span<const double> series, std::size_t feature,
                                  const PredictorConfig& config) {
  config.validate();
  const std::size_t d = config.window;
  if (series.size() <= d)
    fail(Errc::trace_too_short, "train: trace length " + std::to_string(series.size()) +
                                    " must exceed window " + std::to_string(d));

  FeatureModel model;
  model.feature = feature;
  // first train_fraction of the frames for fitting, the remainder for validation
  std::size_t train_end = static_cast<std::size_t>(
      std::floor(config.train_fraction * static_cast<double>(series.size())));
  train_end = std::clamp<std::size_t>(train_end, d + 1, series.size());

  if (config.normalize) {
    const auto stats = mean_and_variance(series.first(train_end));
    model.mean = stats.mean;
    const double sd = std::sqrt(stats.variance);
    model.scale = sd > 1e-8 ? sd : 1.0;
  }
  std::vector<double> z(series.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (series[i] - model.mean) / model.scale;

  Rng rng(mix_seed(config.seed, feature));
  model.net = Lstm(config.hidden_size);
  model.net.initialize(rng);

  std::vector<std::size_t> order;
  for (std::size_t t = d; t < train_end; ++t) order.push_back(t);
  std::vector<double> grad(model.net.params().size());
  Lstm::Workspace ws;
  auto params = model.net.params();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    double loss = 0.0;
    for (std::size_t t : order) {
      const std::span<const double> window(z.data() + t - d, d);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double y = model.net.forward(window, ws);
      const double err = y - z[t];
      loss += err * err;
      model.net.backward(window, ws, 2.0 * err, grad);
      for (std::size_t p = 0; p < params.size(); ++p) params[p] -= config.learning_rate * grad[p];
    }
    if (!std::isfinite(loss))
      fail(Errc::divergence, "train: non-finite loss for feature " + std::to_string(feature) +
                                 " at epoch " + std::to_string(epoch));
  }

  const auto mse_over = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t t = std::max(from, d); t < to; ++t, ++n) {
      const double y = model.net.forward(std::span<const double>(z.data() + t - d, d), ws);
      const double e = (y - z[t]) * model.scale;
      s += e * e;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  };
  model.train_mse = mse_over(d, train_end);
  model.validation_mse = mse_over(train_end, series.size());
  return model;
}

/// Trains an independent model for each requested coefficient index.
inline PredictorModel train(const CoefficientTrace& trace, std::vector<std::size_t> features,
                            const PredictorConfig& config) {
  config.validate();
  if (trace.frames() <= config.window)
    fail(Errc::trace_too_short, "train: trace must be longer than the window");
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  PredictorModel model;
  model.config = config;
  for (auto m : features) {
    if (m >= trace.features())
      fail(Errc::invalid_argument, "train: feature index " + std::to_string(m) + " out of range");
    const auto series = trace.values().column(m);
    model.features.push_back(train_feature(series, m, config));
  }
  return model;
}

/// Autoregressive rollout of the dynamic features for frames n_f+1..N.
/// Row k of the result is frame n_f+1+k; column j is dynamic feature j.
inline Matrix extend(const ReceivedChunk& received, const PredictorModel& model, std::size_t n) {
  const std::size_t n_f = received.n_f();
  if (n < n_f) fail(Errc::invalid_argument, "extend: N is smaller than n_f");
  const std::size_t m_dyn = received.m_dyn();
  Matrix out(n - n_f, m_dyn);
  if (n == n_f) return out;
  const std::size_t d = model.config.window;
  if (n_f < d)
    fail(Errc::window_underfull, "extend: n_f = " + std::to_string(n_f) +
                                     " frames cannot fill a window of " + std::to_string(d));
  for (std::size_t j = 0; j < m_dyn; ++j) {
    const auto& fm = model.at(received.dynamic_indices[j]);
    auto history = received.dynamic_series(j);
    history.reserve(n);
    for (std::size_t i = n_f; i < n; ++i) {
      const std::span<const double> window(history.data() + history.size() - d, d);
      const double next = predict_step(fm, window, d);
      out(i - n_f, j) = next;
      history.push_back(next);
    }
  }
  return out;
}

/// Repeats the last received dynamic row for frames n_f+1..N.
inline Matrix pad_last(const ReceivedChunk& received, std::size_t n) {
  const std::size_t n_f = received.n_f();
  if (n < n_f) fail(Errc::invalid_argument, "pad_last: N is smaller than n_f");
  const std::size_t m_dyn = received.m_dyn();
  Matrix out(n - n_f, m_dyn);
  for (std::size_t j = 0; j < m_dyn; ++j) {
    const double last = n_f == 1 ? received.frame1[received.dynamic_indices[j]]
                                 : received.dynamic(n_f - 2, j);
    for (std::size_t r = 0; r < out.rows(); ++r) out(r, j) = last;
  }
  return out;
}

// Text model file:
//   facelink-predictor 1
//   window <d> hidden <H> features <K>
//   feature <m> mean <x> scale <x> train_mse <x> validation_mse <x>
//   <P parameters separated by spaces>
//   ... (one feature/parameter line pair per model)
inline void write_model(std::ostream& out, const PredictorModel& model) {
  out << "facelink-predictor 1\n";
  out << "window " << model.config.window << " hidden " << model.config.hidden_size
      << " features " << model.features.size() << '\n';
  for (const auto& f : model.features) {
    out << "feature " << f.feature << " mean " << text::format_double(f.mean) << " scale "
        << text::format_double(f.scale) << " train_mse " << text::format_double(f.train_mse)
        << " validation_mse " << text::format_double(f.validation_mse) << '\n';
    bool first = true;
    for (double p : f.net.params()) {
      if (!first) out << ' ';
      out << text::format_double(p);
      first = false;
    }
    out << '\n';
  }
}

inline PredictorModel read_model(std::istream& in) {
  const auto bad = [](const std::string& why) { fail(Errc::bad_model_file, "model file: " + why); };
  const auto token = [&]() {
    std::string t;
    if (!(in >> t)) bad("unexpected end of file");
    return t;
  };
  const auto expect = [&](std::string_view key) {
    if (token() != key) bad("expected '" + std::string(key) + "'");
  };
  const auto number = [&]() {
    const auto v = text::parse_double(token());
    if (!v || !std::isfinite(*v)) bad("bad number");
    return *v;
  };
  const auto count = [&]() {
    const auto v = text::parse_int(token());
    if (!v || *v < 0) bad("bad count");
    return static_cast<std::size_t>(*v);
  };

  expect("facelink-predictor");
  if (token() != "1") bad("unsupported version");
  PredictorModel model;
  expect("window");
  model.config.window = count();
  expect("hidden");
  model.config.hidden_size = count();
  expect("features");
  const std::size_t n_models = count();
  if (model.config.window < 1 || model.config.hidden_size < 1) bad("degenerate dimensions");
  const std::size_t p_count = Lstm::param_count(model.config.hidden_size);
  for (std::size_t i = 0; i < n_models; ++i) {
    FeatureModel f;
    expect("feature");
    f.feature = count();
    expect("mean");
    f.mean = number();
    expect("scale");
    f.scale = number();
    expect("train_mse");
    f.train_mse = number();
    expect("validation_mse");
    f.validation_mse = number();
    if (!(f.scale > 0.0)) bad("non-positive scale");
    std::vector<double> params(p_count);
    for (auto& p : params) p = number();
    f.net = Lstm(model.config.hidden_size, std::move(params));
    if (!model.features.empty() && model.features.back().feature >= f.feature)
      bad("features not in ascending order");
    model.features.push_back(std::move(f));
  }
  return model;
}

inline void save_model(const std::filesystem::path& path, const PredictorModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write model file " + path.string());
  write_model(out, model);
}

inline PredictorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace facelink
