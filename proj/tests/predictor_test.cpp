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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "facelink/codec.hpp"
#include "facelink/predictor.hpp"

namespace facelink {
namespace {

PredictorConfig small_config(std::size_t epochs = 60) {
  PredictorConfig cfg;
  cfg.hidden_size = 8;
  cfg.epochs = epochs;
  return cfg;
}

std::vector<double> noisy_sinusoid(std::size_t n, double period, double phase, double noise, Rng& rng) {
  std::vector<double> s(n);
  for (std::size_t t = 0; t < n; ++t)
    s[t] = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * t / period + phase) + noise * rng.normal();
  return s;
}

// Packs one single-feature chunk with every feature dynamic and decodes it.
ReceivedChunk receive(const std::vector<double>& series, std::size_t n_f) {
  const CoefficientTrace trace(Matrix(series.size(), 1, series));
  const ChunkView chunk(trace, 0, 0, series.size());
  const QuantizationSpec spec{16, 0, 1};
  const auto packet = pack_chunk(chunk, select_all(chunk), ChunkPlan{n_f, 1, 1, 16}, spec);
  return unpack_chunk(packet.bytes);
}

// Loss (y - target)^2 evaluated from the forward pass only.
double loss_of(const Lstm& net, std::span<const double> window, double target) {
  const double e = net.forward(window) - target;
  return e * e;
}

TEST(Lstm, ZeroNetworkPredictsZero) {
  const Lstm net(6);
  const std::vector<double> window{0.3, -1.0, 2.0, 0.5, 0.0};
  EXPECT_EQ(net.forward(window), 0.0);
  FeatureModel fm;
  fm.net = net;
  EXPECT_EQ(predict_step(fm, window, 5), 0.0);
}

TEST(Lstm, ParameterCount) {
  EXPECT_EQ(Lstm::param_count(1), 14u);
  EXPECT_EQ(Lstm::param_count(16), 4u * 16 + 4 * 16 * 16 + 4 * 16 + 16 + 1);
}

TEST(Lstm, GradientMatchesCentralDifferences) {
  Rng rng(31);
  const double h = 1e-5;
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t hidden = 1 + rng.below(8), d = 1 + rng.below(8);
    Lstm net(hidden);
    for (auto& p : net.params()) p = rng.uniform(-1.0, 1.0);
    std::vector<double> window(d);
    for (auto& x : window) x = rng.uniform(-2.0, 2.0);
    const double target = rng.uniform(-1.0, 1.0);

    std::vector<double> grad(net.params().size(), 0.0);
    net.loss_and_gradient(window, target, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      Lstm plus = net, minus = net;
      plus.params()[i] += h;
      minus.params()[i] -= h;
      const double numeric = (loss_of(plus, window, target) - loss_of(minus, window, target)) / (2 * h);
      const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Lstm, GradientAccumulates) {
  Rng rng(5);
  Lstm net(3);
  net.initialize(rng);
  const std::vector<double> window{0.1, 0.2, 0.3};
  std::vector<double> once(net.params().size(), 0.0), twice(net.params().size(), 0.0);
  net.loss_and_gradient(window, 0.7, once);
  net.loss_and_gradient(window, 0.7, twice);
  net.loss_and_gradient(window, 0.7, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

TEST(Lstm, InitializationRangeAndForgetBias) {
  Rng rng(8);
  const std::size_t hidden = 16;
  Lstm net(hidden);
  net.initialize(rng);
  const auto p = net.params();
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const std::size_t b_off = 4 * hidden + 4 * hidden * hidden;
  for (std::size_t k = 0; k < hidden; ++k) EXPECT_EQ(p[b_off + hidden + k], 1.0);
  for (std::size_t i = 0; i < b_off; ++i) EXPECT_LE(std::abs(p[i]), bound);
}

TEST(PredictStep, RejectsWrongWindowLength) {
  FeatureModel fm;
  fm.net = Lstm(2);
  const std::vector<double> window{1, 2, 3};
  EXPECT_THROW(predict_step(fm, window, 5), Error);
}

TEST(Train, ConstantSeriesPredictsConstant) {
  for (double c : {0.0, 0.3, 0.85}) {
    const std::vector<double> series(120, c);
    const auto fm = train_feature(series, 0, small_config(40));
    const std::vector<double> window(5, c);
    EXPECT_NEAR(predict_step(fm, window, 5), c, 1e-3) << c;
  }
}

TEST(Train, Deterministic) {
  Rng rng(12);
  const auto series = noisy_sinusoid(150, 30, 0.4, 0.01, rng);
  const auto a = train_feature(series, 4, small_config(20));
  const auto b = train_feature(series, 4, small_config(20));
  EXPECT_TRUE(a == b);
  // a different seed gives a different network
  auto cfg = small_config(20);
  cfg.seed = 2;
  EXPECT_FALSE(a.net == train_feature(series, 4, cfg).net);
}

TEST(Train, SinusoidBeatsMeanPredictor) {
  std::vector<double> series(300);
  for (std::size_t t = 0; t < series.size(); ++t) series[t] = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * t / 40.0);
  const auto fm = train_feature(series, 0, small_config(100));
  // held-out one-step MSE against the variance of the series
  const auto stats = mean_and_variance(series);
  EXPECT_LT(fm.validation_mse, stats.variance);
  EXPECT_LT(fm.train_mse, stats.variance);
}

TEST(Train, ErrorsAndBookkeeping) {
  const std::vector<double> short_series(5, 0.1);
  try {
    train_feature(short_series, 0, small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::trace_too_short);
  }

  auto cfg = small_config(5);
  cfg.learning_rate = 1e6;
  std::vector<double> wild(60);
  for (std::size_t t = 0; t < wild.size(); ++t) wild[t] = (t % 7) * 0.3;
  try {
    train_feature(wild, 0, cfg);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::divergence);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }

  Matrix values(40, 3, 0.2);
  const CoefficientTrace trace(std::move(values));
  const auto model = train(trace, {2, 0, 2}, small_config(2));
  EXPECT_EQ(model.trained_feature_indices(), (std::vector<std::size_t>{0, 2}));
  EXPECT_NE(model.find(2), nullptr);
  EXPECT_EQ(model.find(1), nullptr);
  EXPECT_THROW(model.at(1), Error);
  EXPECT_THROW(train(trace, {3}, small_config(2)), Error);
}

class ExtendTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Rng rng(99);
    const auto series = noisy_sinusoid(200, 30, 0.0, 0.01, rng);
    model_ = new PredictorModel(train(CoefficientTrace(Matrix(200, 1, series)), {0}, small_config(30)));
  }
  static void TearDownTestSuite() { delete model_; }
  static PredictorModel* model_;
};
PredictorModel* ExtendTest::model_ = nullptr;

TEST_F(ExtendTest, NothingToPredict) {
  Rng rng(1);
  const auto rx = receive(noisy_sinusoid(100, 30, 1.0, 0.01, rng), 100);
  EXPECT_EQ(extend(rx, *model_, 100).rows(), 0u);
}

TEST_F(ExtendTest, OneRowFromReceivedValues) {
  Rng rng(2);
  const auto rx = receive(noisy_sinusoid(100, 30, 1.0, 0.01, rng), 99);
  const auto out = extend(rx, *model_, 100);
  ASSERT_EQ(out.rows(), 1u);
  const auto hist = rx.dynamic_series(0);
  const std::span<const double> window(hist.data() + 94, 5);
  EXPECT_EQ(out(0, 0), predict_step(*model_, 0, window));
}

TEST_F(ExtendTest, RolloutMatchesManualRecursion) {
  Rng rng(3);
  const auto rx = receive(noisy_sinusoid(100, 30, 2.0, 0.01, rng), 60);
  const auto out = extend(rx, *model_, 100);
  ASSERT_EQ(out.rows(), 40u);

  std::vector<double> hist = rx.dynamic_series(0);
  ASSERT_EQ(hist.size(), 60u);
  for (std::size_t k = 0; k < 40; ++k) {
    const std::vector<double> window(hist.end() - 5, hist.end());
    const double y = predict_step(*model_, 0, window);
    EXPECT_EQ(out(k, 0), y) << "frame " << 61 + k;
    hist.push_back(y);
  }
  EXPECT_TRUE(extend(rx, *model_, 100) == out);
}

TEST_F(ExtendTest, WindowUnderfull) {
  Rng rng(4);
  const auto rx = receive(noisy_sinusoid(100, 30, 0.0, 0.01, rng), 4);
  try {
    extend(rx, *model_, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::window_underfull);
  }
  // n_f = d is enough
  EXPECT_EQ(extend(receive(noisy_sinusoid(100, 30, 0.0, 0.01, rng), 5), *model_, 100).rows(), 95u);
}

TEST_F(ExtendTest, MissingFeatureModel) {
  Matrix values(100, 2);
  for (std::size_t t = 0; t < 100; ++t) values(t, 1) = 0.5 + 0.3 * std::sin(t * 0.2);
  const CoefficientTrace trace(std::move(values));
  const ChunkView chunk(trace, 0, 0, 100);
  const auto report = classify(chunk, SelectorConfig{});
  ASSERT_EQ(report.dynamic_set, std::vector<std::size_t>{1});
  const auto rx = unpack_chunk(pack_chunk(chunk, report, ChunkPlan{20, 2, 1, 16}, QuantizationSpec{}).bytes);
  EXPECT_THROW(extend(rx, *model_, 100), Error);
}

TEST(PadLast, RowsRepeatLastReceived) {
  Rng rng(6);
  for (std::size_t n_f : {1u, 2u, 37u, 100u}) {
    const auto rx = receive(noisy_sinusoid(100, 25, 0.3, 0.02, rng), n_f);
    const auto out = pad_last(rx, 100);
    ASSERT_EQ(out.rows(), 100 - n_f);
    const double last = rx.dynamic_series(0).back();
    for (std::size_t r = 0; r < out.rows(); ++r) EXPECT_EQ(out(r, 0), last);
  }
}

TEST(PadLast, ConstantSourceIsExact) {
  const std::vector<double> series(50, 0.25);
  const auto rx = receive(series, 10);
  const auto out = pad_last(rx, 50);
  const double sent = dequantize(quantize(0.25, QuantizationSpec{}), QuantizationSpec{});
  for (std::size_t r = 0; r < out.rows(); ++r) EXPECT_EQ(out(r, 0), sent);
}

TEST(Extend, ErrorAccumulatesOverRollout) {
  Rng train_rng(500);
  PredictorConfig cfg;
  cfg.hidden_size = 8;
  cfg.epochs = 80;
  const auto model = train(CoefficientTrace(Matrix(300, 1, noisy_sinusoid(300, 30, 0.0, 0.01, train_rng))), {0}, cfg);

  double first = 0.0, last = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(1000 + s, 7));
    const auto truth = noisy_sinusoid(100, 30, rng.uniform(0.0, 6.28), 0.01, rng);
    const auto out = extend(receive(truth, 60), model, 100);
    first += std::abs(out(0, 0) - truth[60]);
    last += std::abs(out(39, 0) - truth[99]);
  }
  EXPECT_GE(last / seeds, first / seeds);
}

TEST(ModelFile, RoundTrip) {
  Rng rng(41);
  const auto series = noisy_sinusoid(80, 20, 0.0, 0.01, rng);
  Matrix values(80, 3);
  for (std::size_t t = 0; t < 80; ++t) {
    values(t, 0) = series[t];
    values(t, 2) = 1 - series[t];
  }
  const auto model = train(CoefficientTrace(std::move(values)), {0, 2}, small_config(3));
  std::stringstream buf;
  write_model(buf, model);
  const auto back = read_model(buf);
  EXPECT_EQ(back.config.window, model.config.window);
  EXPECT_EQ(back.config.hidden_size, model.config.hidden_size);
  EXPECT_TRUE(back.features == model.features);
}

TEST(ModelFile, RejectsDamage) {
  for (const char* text : {"", "facelink-predictor 2\n", "facelink-predictor 1\nwindow 5 hidden 1 features 1\n",
                           "facelink-predictor 1\nwindow 5 hidden 1 features 1\nfeature 0 mean 0 scale 1 "
                           "train_mse 0 validation_mse 0\n1 2 3\n",
                           "facelink-predictor 1\nwindow 5 hidden 1 features 1\nfeature 0 mean 0 scale 0 "
                           "train_mse 0 validation_mse 0\n1 2 3 4 5 6 7 8 9 10 11 12 13 14\n"}) {
    std::istringstream in(text);
    try {
      read_model(in);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::bad_model_file);
    }
  }
}

}  // namespace
}  // namespace facelink
