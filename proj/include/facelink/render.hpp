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
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "facelink/error.hpp"
#include "facelink/matrix.hpp"
#include "facelink/random.hpp"

namespace facelink {

/// H x W x 3 image, channel-interleaved, values in [0, 1].
struct ImageFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  ImageFrame() = default;
  ImageFrame(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const ImageFrame&, const ImageFrame&) = default;
};

/// Linear blendshape basis: a neutral face plus one localized delta image
/// per coefficient. Each delta is zero outside its bounding box.
struct BlendBasis {
  struct Box {
    std::size_t y0, y1, x0, x1;  // half-open
  };

  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  ImageFrame neutral;
  std::vector<ImageFrame> deltas;
  std::vector<Box> boxes;
  std::vector<std::pair<std::size_t, std::size_t>> centres;  // (y, x)

  std::size_t features() const noexcept { return deltas.size(); }
};

/// Builds a deterministic basis. Blob centres sit on an 8 x 8 grid of cells
/// so up to 64 coefficients get distinct positions; beyond that cells repeat.
inline BlendBasis make_basis(std::size_t height, std::size_t width, std::size_t m, std::uint64_t seed) {
  if (height < 8 || width < 8) fail(Errc::invalid_argument, "make_basis: H and W must be >= 8");
  if (m < 1) fail(Errc::invalid_argument, "make_basis: M must be >= 1");

  BlendBasis basis;
  basis.height = height;
  basis.width = width;
  basis.seed = seed;
  basis.neutral = ImageFrame(height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(width - 1);
      const double v = static_cast<double>(y) / static_cast<double>(height - 1);
      basis.neutral.at(y, x, 0) = std::clamp(0.35 + 0.3 * u, 0.0, 1.0);
      basis.neutral.at(y, x, 1) = std::clamp(0.35 + 0.3 * v, 0.0, 1.0);
      basis.neutral.at(y, x, 2) = std::clamp(0.65 - 0.15 * (u + v), 0.0, 1.0);
    }

  constexpr std::size_t kGrid = 8;
  const double cell_h = static_cast<double>(height) / kGrid;
  const double cell_w = static_cast<double>(width) / kGrid;
  const double sigma = 0.45 * std::min(cell_h, cell_w);
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));

  Rng rng(seed);
  std::vector<std::size_t> cells(kGrid * kGrid);
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);

  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t cell = cells[k % cells.size()];
    const auto cy = static_cast<std::ptrdiff_t>((static_cast<double>(cell / kGrid) + 0.5) * cell_h);
    const auto cx = static_cast<std::ptrdiff_t>((static_cast<double>(cell % kGrid) + 0.5) * cell_w);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double amp[3];
    for (auto& a : amp) a = sign * rng.uniform(0.2, 0.5);

    ImageFrame delta(height, width);
    const auto h = static_cast<std::ptrdiff_t>(height), w = static_cast<std::ptrdiff_t>(width);
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, cy - radius);
    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, cy + radius + 1);
    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, cx - radius);
    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, cx + radius + 1);
    for (std::ptrdiff_t y = y0; y < y1; ++y)
      for (std::ptrdiff_t x = x0; x < x1; ++x) {
        const double r2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
        const double g = std::exp(-r2 / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < 3; ++c)
          delta.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = amp[c] * g;
      }
    basis.deltas.push_back(std::move(delta));
    basis.boxes.push_back({static_cast<std::size_t>(y0), static_cast<std::size_t>(y1),
                           static_cast<std::size_t>(x0), static_cast<std::size_t>(x1)});
    basis.centres.emplace_back(static_cast<std::size_t>(cy), static_cast<std::size_t>(cx));
  }
  return basis;
}

/// clamp(B_0 + sum_m e_m * dB_m, 0, 1)
inline ImageFrame render(std::span<const double> coeffs, const BlendBasis& basis) {
  if (coeffs.size() != basis.features())
    fail(Errc::shape_mismatch, "render: coefficient vector length " + std::to_string(coeffs.size()) +
                                   " != basis size " + std::to_string(basis.features()));
  ImageFrame img = basis.neutral;
  for (std::size_t m = 0; m < coeffs.size(); ++m) {
    const double e = coeffs[m];
    if (e == 0.0) continue;
    const auto& box = basis.boxes[m];
    const auto& delta = basis.deltas[m];
    for (std::size_t y = box.y0; y < box.y1; ++y) {
      const std::size_t a = (y * basis.width + box.x0) * 3, b = (y * basis.width + box.x1) * 3;
      for (std::size_t i = a; i < b; ++i) img.pixels[i] += e * delta.pixels[i];
    }
  }
  for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
  return img;
}

inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(MAX^2 / MSE) with MAX = 1; identical frames give +infinity.
inline double psnr(const ImageFrame& truth, const ImageFrame& recon) {
  if (truth.height != recon.height || truth.width != recon.width ||
      truth.pixels.size() != recon.pixels.size())
    fail(Errc::shape_mismatch, "psnr: image dimensions differ");
  double sq = 0.0;
  for (std::size_t i = 0; i < truth.pixels.size(); ++i) {
    const double d = truth.pixels[i] - recon.pixels[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(truth.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Arithmetic mean of per-frame PSNR with each frame capped at 99 dB.
inline double mean_psnr(std::span<const double> per_frame) {
  if (per_frame.empty()) return 0.0;
  double s = 0.0;
  for (double v : per_frame) s += std::min(v, kPsnrCapDb);
  return s / static_cast<double>(per_frame.size());
}

inline double coeff_mse(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(Errc::shape_mismatch, "coeff_mse: shapes differ");
  if (a.empty()) fail(Errc::shape_mismatch, "coeff_mse: empty matrices");
  double s = 0.0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    s += d * d;
  }
  return s / static_cast<double>(da.size());
}

/// Binary PPM (P6), 8 bits per channel.
inline void write_ppm(const std::filesystem::path& path, const ImageFrame& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write image " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (double p : img.pixels)
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0))));
}

/// Places frames side by side (all must share a height).
inline ImageFrame hstack(std::span<const ImageFrame> frames) {
  if (frames.empty()) return {};
  std::size_t w = 0;
  for (const auto& f : frames) {
    if (f.height != frames[0].height) fail(Errc::shape_mismatch, "hstack: heights differ");
    w += f.width;
  }
  ImageFrame out(frames[0].height, w);
  std::size_t x_off = 0;
  for (const auto& f : frames) {
    for (std::size_t y = 0; y < f.height; ++y)
      for (std::size_t x = 0; x < f.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x_off + x, c) = f.at(y, x, c);
    x_off += f.width;
  }
  return out;
}

}  // namespace facelink
