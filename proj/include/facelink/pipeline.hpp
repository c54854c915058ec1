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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "facelink/codec.hpp"
#include "facelink/error.hpp"
#include "facelink/matrix.hpp"
#include "facelink/predictor.hpp"
#include "facelink/render.hpp"
#include "facelink/selector.hpp"
#include "facelink/trace.hpp"

namespace facelink {

enum class Scheme {
  proposed,                    ///< selection + budgeted packing + prediction
  upper_bound,                 ///< every frame, every feature, no rate limit
  no_selection,                ///< all features sent for floor(tauR/QM) frames, rest predicted
  no_selection_no_prediction,  ///< as above, rest padded with the last received frame
};

inline constexpr Scheme kAllSchemes[] = {Scheme::proposed, Scheme::upper_bound,
                                         Scheme::no_selection,
                                         Scheme::no_selection_no_prediction};

constexpr std::string_view to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::proposed: return "proposed";
    case Scheme::upper_bound: return "upper-bound";
    case Scheme::no_selection: return "no-selection";
    case Scheme::no_selection_no_prediction: return "no-selection-no-prediction";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (auto s : kAllSchemes)
    if (to_string(s) == name) return s;
  fail(Errc::invalid_argument, "unknown scheme '" + std::string(name) + "'");
}

/// Whether the receiver needs trained predictors for this scheme.
constexpr bool uses_prediction(Scheme s) noexcept {
  return s == Scheme::proposed || s == Scheme::no_selection;
}

struct TransmitOptions {
  LinkBudget budget;
  QuantizationSpec quant;
  SelectorConfig selector;
  bool upper_bound_exact = false;          ///< upper bound skips quantization
  std::optional<std::size_t> n_f_override; ///< force n_f, ignoring the budget
};

struct ChunkResult {
  std::size_t chunk_id = 0;
  Scheme scheme = Scheme::proposed;
  std::size_t n_f = 0;
  std::size_t m_dyn = 0;
  std::uint64_t payload_bits = 0;
  std::uint64_t budget_bits = 0;
  bool budget_exempt = false;  ///< upper bound or forced n_f
  Matrix recon;                ///< N x M
  std::vector<double> frame_psnr;
  double mean_psnr = 0.0;
  double coeff_mse = 0.0;
};

/// How the receiver fills dynamic frames n_f+1..N.
enum class TailPolicy { predict, pad_last };

/// Receiver side: decode a packet and rebuild the full N x M chunk. Static
/// features (bitmap bit clear) repeat their frame-1 value on every frame.
inline Matrix receive_chunk(std::span<const std::uint8_t> bytes, TailPolicy policy,
                            const PredictorModel* model, ReceivedChunk* decoded = nullptr) {
  auto rx = unpack_chunk(bytes);
  const std::size_t n = rx.n(), n_f = rx.n_f(), m = rx.features();
  Matrix recon(n, m);
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t t = 0; t < n; ++t) recon(t, f) = rx.frame1[f];

  Matrix tail;
  if (n > n_f && rx.m_dyn() > 0) {
    if (policy == TailPolicy::predict) {
      if (!model) fail(Errc::missing_model, "receive_chunk: prediction requested without a model");
      tail = extend(rx, *model, n);
    } else {
      tail = pad_last(rx, n);
    }
  }
  for (std::size_t j = 0; j < rx.m_dyn(); ++j) {
    const std::size_t f = rx.dynamic_indices[j];
    for (std::size_t t = 1; t < n_f; ++t) recon(t, f) = rx.dynamic(t - 1, j);
    for (std::size_t t = n_f; t < n; ++t) recon(t, f) = tail(t - n_f, j);
  }
  if (decoded) *decoded = std::move(rx);
  return recon;
}

inline std::vector<ImageFrame> render_frames(const Matrix& coeffs, const BlendBasis& basis) {
  std::vector<ImageFrame> frames;
  frames.reserve(coeffs.rows());
  for (std::size_t t = 0; t < coeffs.rows(); ++t) frames.push_back(render(coeffs.row(t), basis));
  return frames;
}

/// Transmitter, link and receiver for one chunk under one scheme, followed
/// by rendering and quality metrics against the uncompressed chunk.
///
/// truth may carry pre-rendered ground-truth frames for the chunk.
inline ChunkResult transmit_chunk(const ChunkView& chunk, Scheme scheme, const TransmitOptions& options,
                                  const PredictorModel* model, const BlendBasis& basis,
                                  std::span<const ImageFrame> truth = {}) {
  options.quant.validate();
  const std::size_t n = chunk.frames(), m = chunk.features();
  if (basis.features() != m)
    fail(Errc::shape_mismatch, "transmit_chunk: basis has " + std::to_string(basis.features()) +
                                   " blendshapes for " + std::to_string(m) + " features");

  ChunkResult result;
  result.chunk_id = chunk.chunk_id();
  result.scheme = scheme;
  result.budget_bits = options.budget.budget_bits();
  const Matrix original = chunk.to_matrix();

  if (scheme == Scheme::upper_bound) {
    result.budget_exempt = true;
    result.n_f = n;
    result.m_dyn = m;
    result.payload_bits = std::uint64_t{options.quant.q_bits} * m * n;
    if (options.upper_bound_exact) {
      result.recon = original;
    } else {
      const auto report = select_all(chunk);
      const ChunkPlan plan{n, m, m, options.quant.q_bits};
      const auto packet = pack_chunk(chunk, report, plan, options.quant);
      result.recon = receive_chunk(packet.bytes, TailPolicy::pad_last, nullptr);
    }
  } else {
    const auto report = scheme == Scheme::proposed ? classify(chunk, options.selector) : select_all(chunk);
    ChunkPlan plan;
    if (options.n_f_override) {
      const std::size_t forced = *options.n_f_override;
      if (forced < 1 || forced > n)
        fail(Errc::invalid_argument, "n_f override must lie in [1, N]");
      plan = ChunkPlan{forced, m, report.m_dyn(), options.quant.q_bits};
      result.budget_exempt = true;
    } else {
      plan = plan_frames(options.budget, options.quant, m, report.m_dyn(), n);
    }
    const auto packet = pack_chunk(chunk, report, plan, options.quant);
    const auto policy =
        scheme == Scheme::no_selection_no_prediction ? TailPolicy::pad_last : TailPolicy::predict;
    result.recon = receive_chunk(packet.bytes, policy, model);
    result.n_f = plan.n_f;
    result.m_dyn = report.m_dyn();
    result.payload_bits = packet.payload_bits;
  }

  std::vector<ImageFrame> rendered_truth;
  if (truth.empty()) {
    rendered_truth = render_frames(original, basis);
    truth = rendered_truth;
  }
  if (truth.size() != n) fail(Errc::shape_mismatch, "transmit_chunk: truth frame count != N");
  result.frame_psnr.reserve(n);
  for (std::size_t t = 0; t < n; ++t)
    result.frame_psnr.push_back(psnr(truth[t], render(result.recon.row(t), basis)));
  result.mean_psnr = mean_psnr(result.frame_psnr);
  result.coeff_mse = coeff_mse(original, result.recon);
  return result;
}

struct StreamConfig {
  std::size_t chunk_frames = 100;
  TransmitOptions options;
};

/// Ground-truth renders for every chunk of a trace, reusable across schemes.
using TruthCache = std::vector<std::vector<ImageFrame>>;

inline TruthCache render_truth(const CoefficientTrace& trace, std::size_t chunk_frames,
                               const BlendBasis& basis) {
  TruthCache cache;
  for (const auto& chunk : chunk_iter(trace, chunk_frames))
    cache.push_back(render_frames(chunk.to_matrix(), basis));
  return cache;
}

/// Processes every full chunk of the trace in order.
inline std::vector<ChunkResult> run_stream(const CoefficientTrace& trace, Scheme scheme,
                                           const StreamConfig& config, const PredictorModel* model,
                                           const BlendBasis& basis, const TruthCache* truth = nullptr) {
  const auto chunks = chunk_iter(trace, config.chunk_frames);
  if (chunks.empty())
    fail(Errc::empty_input, "run_stream: trace of " + std::to_string(trace.frames()) +
                                " frames holds no chunk of " + std::to_string(config.chunk_frames));
  if (truth && truth->size() != chunks.size())
    fail(Errc::shape_mismatch, "run_stream: truth cache does not match chunk count");
  std::vector<ChunkResult> results;
  results.reserve(chunks.size());
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    std::span<const ImageFrame> frames;
    if (truth) frames = (*truth)[k];
    results.push_back(transmit_chunk(chunks[k], scheme, config.options, model, basis, frames));
  }
  return results;
}

/// Indices that are dynamic in at least one chunk under the given threshold.
inline std::vector<std::size_t> dynamic_union(const CoefficientTrace& trace, std::size_t chunk_frames,
                                              const SelectorConfig& selector) {
  std::vector<bool> seen(trace.features(), false);
  for (const auto& chunk : chunk_iter(trace, chunk_frames))
    for (auto m : classify(chunk, selector).dynamic_set) seen[m] = true;
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < seen.size(); ++m)
    if (seen[m]) out.push_back(m);
  return out;
}

}  // namespace facelink
