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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "facelink/render.hpp"

namespace facelink {
namespace {

TEST(MakeBasis, DeterministicPerSeed) {
  const auto a = make_basis(32, 32, 47, 3);
  const auto b = make_basis(32, 32, 47, 3);
  const auto c = make_basis(32, 32, 47, 4);
  EXPECT_TRUE(a.deltas == b.deltas);
  EXPECT_TRUE(a.neutral == b.neutral);
  EXPECT_FALSE(a.deltas == c.deltas);
}

TEST(MakeBasis, DistinctCentresUpTo64) {
  for (std::size_t m : {1u, 47u, 64u}) {
    const auto basis = make_basis(64, 64, m, 11);
    ASSERT_EQ(basis.features(), m);
    std::set<std::pair<std::size_t, std::size_t>> seen(basis.centres.begin(), basis.centres.end());
    EXPECT_EQ(seen.size(), m);
  }
}

TEST(MakeBasis, NeutralInRangeAndDeltasLocal) {
  const auto basis = make_basis(40, 24, 20, 5);
  for (double p : basis.neutral.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  for (std::size_t m = 0; m < basis.features(); ++m) {
    const auto& box = basis.boxes[m];
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 24; ++x)
        if (y < box.y0 || y >= box.y1 || x < box.x0 || x >= box.x1) {
          for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(basis.deltas[m].at(y, x, c), 0.0);
        }
  }
  EXPECT_THROW(make_basis(7, 32, 3, 1), Error);
  EXPECT_THROW(make_basis(32, 32, 0, 1), Error);
}

TEST(Render, ZeroCoefficientsGiveNeutral) {
  const auto basis = make_basis(16, 16, 9, 2);
  const std::vector<double> zeros(9, 0.0);
  EXPECT_TRUE(render(zeros, basis) == basis.neutral);
}

TEST(Render, MatchesDenseSumBeforeClamp) {
  const auto basis = make_basis(16, 16, 6, 7);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> e(6);
    for (auto& v : e) v = rng.uniform(-1.0, 1.0);
    const auto img = render(e, basis);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      double dense = basis.neutral.pixels[i];
      for (std::size_t m = 0; m < 6; ++m) dense += e[m] * basis.deltas[m].pixels[i];
      ASSERT_NEAR(img.pixels[i], std::clamp(dense, 0.0, 1.0), 1e-12);
    }
  }
}

TEST(Render, UnitVectorAddsOneDelta) {
  const auto basis = make_basis(16, 16, 4, 9);
  std::vector<double> e(4, 0.0);
  e[2] = 1.0;
  const auto img = render(e, basis);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    EXPECT_NEAR(img.pixels[i], std::clamp(basis.neutral.pixels[i] + basis.deltas[2].pixels[i], 0.0, 1.0), 1e-15);
}

TEST(Render, LinearWhileUnclamped) {
  const auto basis = make_basis(16, 16, 3, 1);
  const std::vector<double> a{0.1, 0.05, 0.0}, b{0.0, 0.1, 0.1}, ab{0.1, 0.15, 0.1};
  const auto ia = render(a, basis), ib = render(b, basis), iab = render(ab, basis);
  for (std::size_t i = 0; i < iab.pixels.size(); ++i)
    EXPECT_NEAR(iab.pixels[i] - basis.neutral.pixels[i],
                (ia.pixels[i] - basis.neutral.pixels[i]) + (ib.pixels[i] - basis.neutral.pixels[i]), 1e-12);
}

TEST(Render, RejectsLengthMismatch) {
  const auto basis = make_basis(16, 16, 3, 1);
  const std::vector<double> e(4, 0.0);
  EXPECT_THROW(render(e, basis), Error);
}

TEST(Psnr, KnownValues) {
  const ImageFrame a(4, 4, 0.3);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(a, ImageFrame(4, 4, 0.4)), 20.0, 1e-9);
  EXPECT_DOUBLE_EQ(psnr(ImageFrame(3, 5, 0.0), ImageFrame(3, 5, 1.0)), 0.0);
  EXPECT_THROW(psnr(a, ImageFrame(4, 5, 0.3)), Error);
}

TEST(Psnr, SymmetricAndMonotone) {
  Rng rng(17);
  ImageFrame truth(8, 8);
  for (auto& p : truth.pixels) p = rng.uniform();
  double previous = std::numeric_limits<double>::infinity();
  for (double noise : {0.001, 0.01, 0.05, 0.2}) {
    ImageFrame recon = truth;
    Rng r2(4);
    for (auto& p : recon.pixels) p += noise * (r2.uniform() - 0.5);
    EXPECT_DOUBLE_EQ(psnr(truth, recon), psnr(recon, truth));
    const double v = psnr(truth, recon);
    EXPECT_LT(v, previous);
    previous = v;
  }
}

TEST(MeanPsnr, CapsIdenticalFrames) {
  const std::vector<double> v{std::numeric_limits<double>::infinity(), 41.0};
  EXPECT_DOUBLE_EQ(mean_psnr(v), (kPsnrCapDb + 41.0) / 2);
}

TEST(CoeffMse, MatchesNaiveLoop) {
  Rng rng(2);
  Matrix a(7, 5), b(7, 5);
  for (auto& v : a.data()) v = rng.uniform();
  for (auto& v : b.data()) v = rng.uniform();
  long double s = 0;
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 5; ++c) s += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
  EXPECT_NEAR(coeff_mse(a, b), static_cast<double>(s / 35), 1e-15);
  EXPECT_EQ(coeff_mse(a, a), 0.0);
  EXPECT_THROW(coeff_mse(a, Matrix(5, 7)), Error);
}

TEST(Ppm, HeaderAndSize) {
  const auto path = std::filesystem::temp_directory_path() / "facelink_render_test.ppm";
  ImageFrame img(3, 2, 0.5);
  img.at(0, 0, 0) = 1.0;
  write_ppm(path, img);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  in.get();
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(w, 2u);
  EXPECT_EQ(h, 3u);
  EXPECT_EQ(maxv, 255u);
  std::vector<char> body((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(body.size(), 18u);
  EXPECT_EQ(static_cast<unsigned char>(body[0]), 255);
  EXPECT_EQ(static_cast<unsigned char>(body[1]), 128);
  std::filesystem::remove(path);
}

TEST(Hstack, PlacesSideBySide) {
  const std::vector<ImageFrame> parts{ImageFrame(2, 3, 0.1), ImageFrame(2, 1, 0.9)};
  const auto out = hstack(parts);
  EXPECT_EQ(out.width, 4u);
  EXPECT_EQ(out.at(1, 2, 2), 0.1);
  EXPECT_EQ(out.at(1, 3, 0), 0.9);
  const std::vector<ImageFrame> bad{ImageFrame(2, 3), ImageFrame(3, 3)};
  EXPECT_THROW(hstack(bad), Error);
}

}  // namespace
}  // namespace facelink
