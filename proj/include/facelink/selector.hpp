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
#include <ostream>
#include <span>
#include <vector>

#include "facelink/error.hpp"
#include "facelink/text.hpp"
#include "facelink/trace.hpp"

namespace facelink {

struct SelectorConfig {
  double delta = 0.01;  ///< variance threshold; features with variance >= delta are dynamic

  void validate() const {
    if (!(delta >= 0.0) || !std::isfinite(delta))
      fail(Errc::invalid_argument, "selector: delta must be finite and >= 0");
  }
};

struct MeanVariance {
  double mean = 0.0;
  double variance = 0.0;
};

/// Population mean and variance (divisor N, no Bessel correction).
inline MeanVariance mean_and_variance(std::span<const double> series) {
  if (series.empty()) fail(Errc::empty_input, "mean_and_variance: empty series");
  const double n = static_cast<double>(series.size());
  // offsets from the first sample keep constant series exact
  const double x0 = series.front();
  double sum = 0.0;
  for (double v : series) sum += v - x0;
  const double mean = x0 + sum / n;
  double sq = 0.0;
  for (double v : series) {
    const double d = v - mean;
    sq += d * d;
  }
  return {mean, sq / n};
}

struct SelectionReport {
  std::vector<std::size_t> dynamic_set;  // ascending
  std::vector<std::size_t> static_set;   // ascending
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t features() const noexcept { return means.size(); }
  std::size_t m_dyn() const noexcept { return dynamic_set.size(); }

  bool is_dynamic(std::size_t m) const {
    return std::binary_search(dynamic_set.begin(), dynamic_set.end(), m);
  }
};

/// Splits the chunk's features into dynamic (variance >= delta) and static.
inline SelectionReport classify(const ChunkView& chunk, const SelectorConfig& config) {
  config.validate();
  SelectionReport report;
  const std::size_t m_total = chunk.features();
  report.means.resize(m_total);
  report.variances.resize(m_total);
  for (std::size_t m = 0; m < m_total; ++m) {
    const auto series = chunk.series(m);
    const auto [mean, var] = mean_and_variance(series);
    report.means[m] = mean;
    report.variances[m] = var;
    if (var >= config.delta)
      report.dynamic_set.push_back(m);
    else
      report.static_set.push_back(m);
  }
  return report;
}

/// Same statistics as classify() but with every feature marked dynamic.
inline SelectionReport select_all(const ChunkView& chunk) {
  auto report = classify(chunk, SelectorConfig{0.0});
  return report;
}

/// Diagnostic CSV: index,mean,variance,class
inline void write_selection_csv(std::ostream& out, const SelectionReport& report) {
  out << "index,mean,variance,class\n";
  for (std::size_t m = 0; m < report.features(); ++m) {
    out << m << ',' << text::format_double(report.means[m]) << ','
        << text::format_double(report.variances[m]) << ','
        << (report.is_dynamic(m) ? "dynamic" : "static") << '\n';
  }
}

}  // namespace facelink
