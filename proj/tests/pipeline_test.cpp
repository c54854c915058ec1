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
#include <numeric>

#include "facelink/pipeline.hpp"

namespace facelink {
namespace {

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthSpec spec;
    spec.features = 12;
    spec.frames = 200;
    spec.seed = 5;
    trace_ = new CoefficientTrace(synth_trace(spec));
    basis_ = new BlendBasis(make_basis(16, 16, 12, 5));
    PredictorConfig cfg;
    cfg.hidden_size = 8;
    cfg.epochs = 15;
    std::vector<std::size_t> all(12);
    std::iota(all.begin(), all.end(), 0);
    model_ = new PredictorModel(train(*trace_, all, cfg));
  }
  static void TearDownTestSuite() {
    delete trace_;
    delete basis_;
    delete model_;
  }

  static TransmitOptions options(double rate) {
    TransmitOptions o;
    o.budget = LinkBudget{1e-3, rate};
    return o;
  }
  static ChunkView chunk(std::size_t k = 0) { return ChunkView(*trace_, k, k * 100, 100); }

  static CoefficientTrace* trace_;
  static BlendBasis* basis_;
  static PredictorModel* model_;
};
CoefficientTrace* PipelineTest::trace_ = nullptr;
BlendBasis* PipelineTest::basis_ = nullptr;
PredictorModel* PipelineTest::model_ = nullptr;

TEST(SchemeNames, RoundTrip) {
  for (auto s : kAllSchemes) EXPECT_EQ(parse_scheme(to_string(s)), s);
  EXPECT_THROW(parse_scheme("best"), Error);
  EXPECT_TRUE(uses_prediction(Scheme::no_selection));
  EXPECT_FALSE(uses_prediction(Scheme::no_selection_no_prediction));
}

TEST_F(PipelineTest, FullBudgetSendsEveryFrame) {
  const auto r = transmit_chunk(chunk(), Scheme::proposed, options(19.2e6), model_, *basis_);
  EXPECT_EQ(r.n_f, 100u);
  EXPECT_FALSE(r.budget_exempt);
  EXPECT_LE(r.payload_bits, r.budget_bits);
}

TEST_F(PipelineTest, UpperBoundDominatesProposed) {
  for (double rate : {1e6, 2e6, 6e6, 12e6}) {
    const auto ub = transmit_chunk(chunk(1), Scheme::upper_bound, options(rate), model_, *basis_);
    const auto p = transmit_chunk(chunk(1), Scheme::proposed, options(rate), model_, *basis_);
    EXPECT_TRUE(ub.budget_exempt);
    EXPECT_EQ(ub.payload_bits, 16u * 12 * 100);
    EXPECT_GE(ub.mean_psnr, p.mean_psnr) << rate;
  }
}

TEST_F(PipelineTest, StaticColumnsHoldDequantizedMean) {
  const QuantizationSpec q;
  for (double rate : {1e6, 4e6, 19.2e6}) {
    for (std::size_t k = 0; k < 2; ++k) {
      const auto c = chunk(k);
      const auto report = classify(c, SelectorConfig{});
      const auto r = transmit_chunk(c, Scheme::proposed, options(rate), model_, *basis_);
      for (auto m : report.static_set) {
        const double sent = dequantize(quantize(report.means[m], q), q);
        for (std::size_t t = 0; t < 100; ++t) ASSERT_EQ(r.recon(t, m), sent);
      }
    }
  }
}

TEST_F(PipelineTest, ZeroThresholdEqualsNoSelection) {
  auto o = options(2e6);
  o.selector.delta = 0.0;
  const auto p = transmit_chunk(chunk(), Scheme::proposed, o, model_, *basis_);
  const auto ns = transmit_chunk(chunk(), Scheme::no_selection, o, model_, *basis_);
  EXPECT_EQ(p.n_f, ns.n_f);
  EXPECT_TRUE(p.recon == ns.recon);
  EXPECT_EQ(p.frame_psnr, ns.frame_psnr);
}

TEST_F(PipelineTest, EveryFrameSentMatchesUpperBound) {
  // synthetic static channels are exactly constant, so n_f = N loses nothing
  const auto ub = transmit_chunk(chunk(), Scheme::upper_bound, options(1e6), model_, *basis_);
  const auto p = transmit_chunk(chunk(), Scheme::proposed, options(19.2e6), model_, *basis_);
  ASSERT_EQ(p.n_f, 100u);
  EXPECT_TRUE(p.recon == ub.recon);
}

TEST_F(PipelineTest, ExactUpperBoundIsLossless) {
  auto o = options(1e6);
  o.upper_bound_exact = true;
  const auto ub = transmit_chunk(chunk(), Scheme::upper_bound, o, model_, *basis_);
  EXPECT_TRUE(ub.recon == chunk().to_matrix());
  EXPECT_EQ(ub.coeff_mse, 0.0);
  EXPECT_EQ(ub.mean_psnr, kPsnrCapDb);
}

TEST_F(PipelineTest, AllStaticTraceCostsOneFrame) {
  const CoefficientTrace flat(Matrix(100, 12, 0.4));
  const auto r = transmit_chunk(ChunkView(flat, 0, 0, 100), Scheme::proposed, options(0.2e6), nullptr, *basis_);
  EXPECT_EQ(r.m_dyn, 0u);
  EXPECT_EQ(r.n_f, 100u);
  EXPECT_EQ(r.payload_bits, 16u * 12);
}

TEST_F(PipelineTest, PayloadNeverExceedsBudget) {
  for (auto s : {Scheme::proposed, Scheme::no_selection, Scheme::no_selection_no_prediction})
    for (double rate = 1e6; rate <= 20e6; rate *= 1.7) {
      const auto r = transmit_chunk(chunk(), s, options(rate), model_, *basis_);
      EXPECT_LE(r.payload_bits, r.budget_bits);
      EXPECT_EQ(r.frame_psnr.size(), 100u);
    }
}

TEST_F(PipelineTest, NoSelectionFrameCount) {
  const auto r = transmit_chunk(chunk(), Scheme::no_selection_no_prediction, options(2e6), model_, *basis_);
  EXPECT_EQ(r.m_dyn, 12u);
  EXPECT_EQ(r.n_f, 2000u / (16 * 12));
  // padded frames repeat the last received row
  for (std::size_t t = r.n_f; t < 100; ++t) EXPECT_TRUE(std::ranges::equal(r.recon.row(t), r.recon.row(r.n_f - 1)));
}

TEST_F(PipelineTest, OverrideForcesFrameCount) {
  auto o = options(0.2e6);
  o.n_f_override = 60;
  const auto r = transmit_chunk(chunk(), Scheme::proposed, o, model_, *basis_);
  EXPECT_EQ(r.n_f, 60u);
  EXPECT_TRUE(r.budget_exempt);
  o.n_f_override = 101;
  EXPECT_THROW(transmit_chunk(chunk(), Scheme::proposed, o, model_, *basis_), Error);
}

TEST_F(PipelineTest, Deterministic) {
  const auto a = transmit_chunk(chunk(), Scheme::proposed, options(3e6), model_, *basis_);
  const auto b = transmit_chunk(chunk(), Scheme::proposed, options(3e6), model_, *basis_);
  EXPECT_TRUE(a.recon == b.recon);
  EXPECT_EQ(a.frame_psnr, b.frame_psnr);
}

TEST_F(PipelineTest, PropagatesErrors) {
  auto expect_code = [](Errc want, auto&& fn) {
    try {
      fn();
      ADD_FAILURE() << "no error";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), want);
    }
  };
  expect_code(Errc::insufficient_budget,
              [&] { transmit_chunk(chunk(), Scheme::proposed, options(0.1e6), model_, *basis_); });
  expect_code(Errc::missing_model,
              [&] { transmit_chunk(chunk(), Scheme::proposed, options(2e6), nullptr, *basis_); });
  expect_code(Errc::window_underfull,
              [&] { transmit_chunk(chunk(), Scheme::no_selection, options(0.2e6), model_, *basis_); });
  const auto wrong = make_basis(16, 16, 5, 1);
  expect_code(Errc::shape_mismatch,
              [&] { transmit_chunk(chunk(), Scheme::proposed, options(2e6), model_, wrong); });
}

TEST_F(PipelineTest, RunStreamCoversFullChunks) {
  StreamConfig cfg;
  cfg.options = options(4e6);
  const auto truth = render_truth(*trace_, 100, *basis_);
  const auto results = run_stream(*trace_, Scheme::proposed, cfg, model_, *basis_, &truth);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[1].chunk_id, 1u);
  const auto uncached = run_stream(*trace_, Scheme::proposed, cfg, model_, *basis_);
  EXPECT_EQ(results[1].frame_psnr, uncached[1].frame_psnr);

  const CoefficientTrace one(Matrix(150, 12, 0.3));
  EXPECT_EQ(run_stream(one, Scheme::proposed, cfg, nullptr, *basis_).size(), 1u);
  const CoefficientTrace short_trace(Matrix(99, 12, 0.3));
  EXPECT_THROW(run_stream(short_trace, Scheme::proposed, cfg, nullptr, *basis_), Error);
}

TEST_F(PipelineTest, DynamicUnion) {
  const auto u = dynamic_union(*trace_, 100, SelectorConfig{});
  // static channels of the synthetic trace never qualify
  for (auto m : u) EXPECT_GE(m, SynthSpec{.features = 12}.static_count());
  for (std::size_t k = 0; k < 2; ++k)
    for (auto m : classify(chunk(k), SelectorConfig{}).dynamic_set)
      EXPECT_TRUE(std::ranges::find(u, m) != u.end());
}

}  // namespace
}  // namespace facelink
