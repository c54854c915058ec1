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
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "facelink/error.hpp"
#include "facelink/matrix.hpp"
#include "facelink/random.hpp"
#include "facelink/text.hpp"

namespace facelink {

/// M expression coefficients sampled over T frames (values are T x M).
class CoefficientTrace {
 public:
  CoefficientTrace(Matrix values, double frame_rate = 25.0,
                   std::vector<std::string> feature_names = {})
      : values_(std::move(values)),
        frame_rate_(frame_rate),
        feature_names_(std::move(feature_names)) {
    if (values_.rows() < 1 || values_.cols() < 1)
      fail(Errc::empty_input, "trace needs at least one frame and one feature");
    for (double v : values_.data())
      if (!std::isfinite(v)) fail(Errc::non_finite, "trace holds a non-finite value");
    if (!(frame_rate_ > 0.0) || !std::isfinite(frame_rate_))
      fail(Errc::invalid_argument, "frame rate must be positive");
    if (!feature_names_.empty() && feature_names_.size() != values_.cols())
      fail(Errc::shape_mismatch, "feature name count does not match M");
  }

  std::size_t frames() const noexcept { return values_.rows(); }
  std::size_t features() const noexcept { return values_.cols(); }
  double frame_rate() const noexcept { return frame_rate_; }
  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }

  double operator()(std::size_t t, std::size_t m) const { return values_(t, m); }

 private:
  Matrix values_;
  double frame_rate_;
  std::vector<std::string> feature_names_;
};

/// Parameters of the synthetic coefficient generator.
///
/// The first round(static_fraction * M) features are constant; the rest are
/// clamped noisy sinusoids with per-feature amplitude, period and phase.
struct SynthSpec {
  std::size_t features = 47;
  std::size_t frames = 300;
  double static_fraction = 0.3;
  double amplitude_min = 0.2;
  double amplitude_max = 0.4;
  double period_min = 20.0;  // frames
  double period_max = 60.0;
  double noise_std = 0.01;
  double static_min = 0.05;
  double static_max = 0.5;
  double frame_rate = 25.0;
  std::uint64_t seed = 1;

  std::size_t static_count() const {
    return static_cast<std::size_t>(std::lround(static_fraction * static_cast<double>(features)));
  }

  void validate() const {
    if (features < 1 || frames < 1)
      fail(Errc::invalid_argument, "synth: M and T must be at least 1");
    if (!(static_fraction >= 0.0 && static_fraction <= 1.0))
      fail(Errc::invalid_argument, "synth: static_fraction must lie in [0,1]");
    if (!(amplitude_min >= 0.0 && amplitude_min <= amplitude_max && amplitude_max <= 0.5))
      fail(Errc::invalid_argument, "synth: amplitudes must satisfy 0 <= min <= max <= 0.5");
    if (!(period_min > 0.0 && period_min <= period_max))
      fail(Errc::invalid_argument, "synth: periods must satisfy 0 < min <= max");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
      fail(Errc::invalid_argument, "synth: noise_std must be finite and >= 0");
    if (!(static_min >= 0.0 && static_min <= static_max && static_max <= 1.0))
      fail(Errc::invalid_argument, "synth: static range must lie in [0,1]");
  }
};

inline CoefficientTrace synth_trace(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n_static = spec.static_count();
  Matrix values(spec.frames, spec.features);

  for (std::size_t m = 0; m < spec.features; ++m) {
    if (m < n_static) {
      const double level = rng.uniform(spec.static_min, spec.static_max);
      for (std::size_t t = 0; t < spec.frames; ++t) values(t, m) = level;
      continue;
    }
    const double amp = rng.uniform(spec.amplitude_min, spec.amplitude_max);
    const double period = rng.uniform(spec.period_min, spec.period_max);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double centre = amp <= 0.5 ? rng.uniform(amp, 1.0 - amp) : 0.5;
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const double x = centre +
                       amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase) +
                       spec.noise_std * rng.normal();
      values(t, m) = std::clamp(x, 0.0, 1.0);
    }
  }
  return CoefficientTrace(std::move(values), spec.frame_rate);
}

/// Reads the CSV trace format: header `frame,<name_0>,...,<name_{M-1}>`
/// followed by one row per frame with strictly ascending frame index.
inline CoefficientTrace parse_trace_csv(std::istream& in, double frame_rate = 25.0) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line).empty())
    fail(Errc::empty_input, "trace file is empty");

  const auto header = text::split(text::trim(line), ',');
  if (header.size() < 2 || text::trim(header[0]) != "frame")
    fail(Errc::malformed_header, "header must start with 'frame' and name at least one feature");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto name = text::trim(header[i]);
    if (name.empty()) fail(Errc::malformed_header, "empty feature name in header");
    names.emplace_back(name);
  }
  const std::size_t m = names.size();

  std::vector<double> data;
  std::size_t rows = 0;
  std::int64_t last_frame = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto fields = text::split(body, ',');
    if (fields.size() != m + 1)
      fail(Errc::ragged_row, "line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(m + 1) + " fields, got " +
                                 std::to_string(fields.size()));
    const auto frame = text::parse_int(fields[0]);
    if (!frame || *frame <= last_frame)
      fail(Errc::bad_frame_index,
           "line " + std::to_string(line_no) + ": frame index missing or not ascending");
    last_frame = *frame;
    for (std::size_t c = 1; c <= m; ++c) {
      const auto v = text::parse_double(fields[c]);
      if (!v)
        fail(Errc::ragged_row, "line " + std::to_string(line_no) + ": unparsable value '" +
                                   std::string(fields[c]) + "'");
      if (!std::isfinite(*v))
        fail(Errc::non_finite, "line " + std::to_string(line_no) + ": non-finite value");
      data.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) fail(Errc::empty_input, "trace file has a header but no frames");
  return CoefficientTrace(Matrix(rows, m, std::move(data)), frame_rate, std::move(names));
}

inline CoefficientTrace load_trace(const std::filesystem::path& path, double frame_rate = 25.0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open trace file " + path.string());
  return parse_trace_csv(in, frame_rate);
}

inline void write_trace_csv(std::ostream& out, const CoefficientTrace& trace) {
  out << "frame";
  for (std::size_t m = 0; m < trace.features(); ++m) {
    out << ',';
    if (trace.feature_names().empty())
      out << "e_" << m;
    else
      out << trace.feature_names()[m];
  }
  out << '\n';
  for (std::size_t t = 0; t < trace.frames(); ++t) {
    out << t;
    for (std::size_t m = 0; m < trace.features(); ++m)
      out << ',' << text::format_double(trace(t, m));
    out << '\n';
  }
}

inline void save_trace(const std::filesystem::path& path, const CoefficientTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write trace file " + path.string());
  write_trace_csv(out, trace);
}

/// N consecutive frames of a trace. Does not own the data.
class ChunkView {
 public:
  ChunkView(const CoefficientTrace& trace, std::size_t chunk_id, std::size_t start,
            std::size_t frames)
      : trace_(&trace), chunk_id_(chunk_id), start_(start), frames_(frames) {
    if (frames == 0 || start + frames > trace.frames())
      fail(Errc::invalid_argument, "chunk range exceeds the trace");
  }

  std::size_t chunk_id() const noexcept { return chunk_id_; }
  std::size_t start() const noexcept { return start_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t features() const noexcept { return trace_->features(); }

  /// Frame t of the chunk (0-based, relative to start), feature m.
  double operator()(std::size_t t, std::size_t m) const { return (*trace_)(start_ + t, m); }

  std::span<const double> frame(std::size_t t) const { return trace_->values().row(start_ + t); }

  std::vector<double> series(std::size_t m) const {
    std::vector<double> out(frames_);
    for (std::size_t t = 0; t < frames_; ++t) out[t] = (*this)(t, m);
    return out;
  }

  Matrix to_matrix() const {
    Matrix out(frames_, features());
    for (std::size_t t = 0; t < frames_; ++t)
      std::copy_n(frame(t).begin(), features(), out.row(t).begin());
    return out;
  }

 private:
  const CoefficientTrace* trace_;
  std::size_t chunk_id_;
  std::size_t start_;
  std::size_t frames_;
};

/// Tiles the trace into floor(T/N) chunks of exactly N frames; a trailing
/// partial chunk is dropped.
inline std::vector<ChunkView> chunk_iter(const CoefficientTrace& trace, std::size_t n) {
  if (n == 0) fail(Errc::invalid_argument, "chunk length N must be at least 1");
  std::vector<ChunkView> chunks;
  const std::size_t count = trace.frames() / n;
  chunks.reserve(count);
  for (std::size_t k = 0; k < count; ++k) chunks.emplace_back(trace, k, k * n, n);
  return chunks;
}

}  // namespace facelink
