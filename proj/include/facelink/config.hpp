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
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "facelink/codec.hpp"
#include "facelink/error.hpp"
#include "facelink/pipeline.hpp"
#include "facelink/predictor.hpp"
#include "facelink/text.hpp"
#include "facelink/trace.hpp"

namespace facelink {

/// Everything a sweep or report needs. Defaults reproduce the reference
/// experiment constants: M = 47 (synthetic trace), N = 100, Q = 16,
/// tau = 1 ms, delta = 0.01, d = 5.
struct ExperimentConfig {
  std::string trace = "synth";  ///< "synth" or a CSV path
  SynthSpec synth{.features = 47, .frames = 200};
  std::size_t chunk_frames = 100;
  unsigned q_bits = 16;
  double quant_lo = 0.0;
  double quant_hi = 1.0;
  double latency_ms = 1.0;
  /// Link rates in bit/s. With tau = 1 ms these give tau*R from 4000 to
  /// 75200 bits, i.e. from a few transmitted frames up to the full chunk.
  std::vector<double> rates = {4e6, 8e6, 12e6, 16e6, 24e6, 32e6, 40e6, 48e6, 56e6, 64e6, 75.2e6};
  double delta = 0.01;
  PredictorConfig predictor;
  std::vector<Scheme> schemes = {std::begin(kAllSchemes), std::end(kAllSchemes)};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::string out = "out";
  bool upper_bound_exact = false;

  bool synthetic() const { return trace == "synth"; }

  QuantizationSpec quant() const { return {q_bits, quant_lo, quant_hi}; }
  LinkBudget budget(double rate) const { return {latency_ms * 1e-3, rate}; }

  TransmitOptions options(double rate) const {
    TransmitOptions o;
    o.budget = budget(rate);
    o.quant = quant();
    o.selector = SelectorConfig{delta};
    o.upper_bound_exact = upper_bound_exact;
    return o;
  }

  void validate() const {
    quant().validate();
    SelectorConfig{delta}.validate();
    predictor.validate();
    if (synthetic()) synth.validate();
    if (chunk_frames < 1) fail(Errc::config, "chunk_frames must be >= 1");
    if (!(latency_ms > 0.0)) fail(Errc::config, "latency_ms must be positive");
    if (rates.empty()) fail(Errc::config, "rates must not be empty");
    for (double r : rates)
      if (!(r > 0.0) || !std::isfinite(r)) fail(Errc::config, "rates must be positive");
    if (schemes.empty()) fail(Errc::config, "schemes must not be empty");
    if (seeds.empty()) fail(Errc::config, "seeds must not be empty");
    if (image_height < 8 || image_width < 8) fail(Errc::config, "image dimensions must be >= 8");
  }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

namespace detail {

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

using ConfigValue = std::variant<std::string, double, bool, std::vector<std::string>, std::vector<double>>;

inline std::string parse_string(std::string_view s, std::size_t line) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"')
    fail(Errc::config, "line " + std::to_string(line) + ": expected a quoted string");
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] == '\\' && i + 2 < s.size()) ++i;
    out += s[i];
  }
  return out;
}

inline ConfigValue parse_value(std::string_view v, std::size_t line) {
  v = text::trim(v);
  if (v.empty()) fail(Errc::config, "line " + std::to_string(line) + ": missing value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') return parse_string(v, line);
  if (v.front() == '[') {
    if (v.back() != ']') fail(Errc::config, "line " + std::to_string(line) + ": unterminated array");
    const auto inner = text::trim(v.substr(1, v.size() - 2));
    std::vector<std::string> strs;
    std::vector<double> nums;
    if (inner.empty()) return nums;
    for (auto item : text::split(inner, ',')) {
      item = text::trim(item);
      if (!item.empty() && item.front() == '"') {
        strs.push_back(parse_string(item, line));
      } else if (auto d = text::parse_double(item)) {
        nums.push_back(*d);
      } else {
        fail(Errc::config, "line " + std::to_string(line) + ": bad array element");
      }
    }
    if (!strs.empty() && !nums.empty())
      fail(Errc::config, "line " + std::to_string(line) + ": mixed array");
    if (!strs.empty()) return strs;
    return nums;
  }
  if (auto d = text::parse_double(v)) return *d;
  fail(Errc::config, "line " + std::to_string(line) + ": cannot parse value");
}

}  // namespace detail

/// Writes the config as `key = value` lines in a fixed key order.
inline std::string serialize_config(const ExperimentConfig& c) {
  using text::format_double;
  std::ostringstream o;
  const auto num_list = [](const auto& xs) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ", ";
      if constexpr (std::is_floating_point_v<typename std::decay_t<decltype(xs)>::value_type>)
        s += format_double(xs[i]);
      else
        s += std::to_string(xs[i]);
    }
    return s + "]";
  };
  o << "# facelink experiment configuration\n";
  o << "trace = " << detail::quote(c.trace) << '\n';
  o << "synth.features = " << c.synth.features << '\n';
  o << "synth.frames = " << c.synth.frames << '\n';
  o << "synth.static_fraction = " << format_double(c.synth.static_fraction) << '\n';
  o << "synth.amplitude_min = " << format_double(c.synth.amplitude_min) << '\n';
  o << "synth.amplitude_max = " << format_double(c.synth.amplitude_max) << '\n';
  o << "synth.period_min = " << format_double(c.synth.period_min) << '\n';
  o << "synth.period_max = " << format_double(c.synth.period_max) << '\n';
  o << "synth.noise_std = " << format_double(c.synth.noise_std) << '\n';
  o << "synth.static_min = " << format_double(c.synth.static_min) << '\n';
  o << "synth.static_max = " << format_double(c.synth.static_max) << '\n';
  o << "chunk_frames = " << c.chunk_frames << '\n';
  o << "q_bits = " << c.q_bits << '\n';
  o << "quant_lo = " << format_double(c.quant_lo) << '\n';
  o << "quant_hi = " << format_double(c.quant_hi) << '\n';
  o << "latency_ms = " << format_double(c.latency_ms) << '\n';
  o << "rates = " << num_list(c.rates) << '\n';
  o << "delta = " << format_double(c.delta) << '\n';
  o << "window = " << c.predictor.window << '\n';
  o << "hidden_size = " << c.predictor.hidden_size << '\n';
  o << "learning_rate = " << format_double(c.predictor.learning_rate) << '\n';
  o << "epochs = " << c.predictor.epochs << '\n';
  o << "normalize = " << (c.predictor.normalize ? "true" : "false") << '\n';
  o << "train_fraction = " << format_double(c.predictor.train_fraction) << '\n';
  o << "schemes = [";
  for (std::size_t i = 0; i < c.schemes.size(); ++i)
    o << (i ? ", " : "") << detail::quote(to_string(c.schemes[i]));
  o << "]\n";
  o << "seeds = " << num_list(c.seeds) << '\n';
  o << "image_height = " << c.image_height << '\n';
  o << "image_width = " << c.image_width << '\n';
  o << "out = " << detail::quote(c.out) << '\n';
  o << "upper_bound_exact = " << (c.upper_bound_exact ? "true" : "false") << '\n';
  return o.str();
}

/// Parses the key-value document; keys not listed are left at their defaults.
inline ExperimentConfig parse_config(std::string_view doc) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  for (auto raw : text::split(doc, '\n')) {
    ++line_no;
    auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(Errc::config, "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(text::trim(line.substr(0, eq)));
    const auto value = detail::parse_value(line.substr(eq + 1), line_no);
    const auto where = "line " + std::to_string(line_no) + " (" + key + ")";

    const auto as_num = [&]() {
      if (auto p = std::get_if<double>(&value)) return *p;
      fail(Errc::config, where + ": expected a number");
    };
    const auto as_count = [&]() {
      const double d = as_num();
      if (d < 0 || d != std::floor(d)) fail(Errc::config, where + ": expected a non-negative integer");
      return static_cast<std::size_t>(d);
    };
    const auto as_bool = [&]() {
      if (auto p = std::get_if<bool>(&value)) return *p;
      fail(Errc::config, where + ": expected true or false");
    };
    const auto as_str = [&]() {
      if (auto p = std::get_if<std::string>(&value)) return *p;
      fail(Errc::config, where + ": expected a string");
    };
    const auto as_nums = [&]() {
      if (auto p = std::get_if<std::vector<double>>(&value)) return *p;
      fail(Errc::config, where + ": expected a numeric array");
    };
    const auto as_strs = [&]() {
      if (auto p = std::get_if<std::vector<std::string>>(&value)) return *p;
      if (auto p = std::get_if<std::vector<double>>(&value); p && p->empty())
        return std::vector<std::string>{};
      fail(Errc::config, where + ": expected a string array");
    };

    if (key == "trace") c.trace = as_str();
    else if (key == "synth.features") c.synth.features = as_count();
    else if (key == "synth.frames") c.synth.frames = as_count();
    else if (key == "synth.static_fraction") c.synth.static_fraction = as_num();
    else if (key == "synth.amplitude_min") c.synth.amplitude_min = as_num();
    else if (key == "synth.amplitude_max") c.synth.amplitude_max = as_num();
    else if (key == "synth.period_min") c.synth.period_min = as_num();
    else if (key == "synth.period_max") c.synth.period_max = as_num();
    else if (key == "synth.noise_std") c.synth.noise_std = as_num();
    else if (key == "synth.static_min") c.synth.static_min = as_num();
    else if (key == "synth.static_max") c.synth.static_max = as_num();
    else if (key == "chunk_frames") c.chunk_frames = as_count();
    else if (key == "q_bits") c.q_bits = static_cast<unsigned>(as_count());
    else if (key == "quant_lo") c.quant_lo = as_num();
    else if (key == "quant_hi") c.quant_hi = as_num();
    else if (key == "latency_ms") c.latency_ms = as_num();
    else if (key == "rates") c.rates = as_nums();
    else if (key == "delta") c.delta = as_num();
    else if (key == "window") c.predictor.window = as_count();
    else if (key == "hidden_size") c.predictor.hidden_size = as_count();
    else if (key == "learning_rate") c.predictor.learning_rate = as_num();
    else if (key == "epochs") c.predictor.epochs = as_count();
    else if (key == "normalize") c.predictor.normalize = as_bool();
    else if (key == "train_fraction") c.predictor.train_fraction = as_num();
    else if (key == "schemes") {
      c.schemes.clear();
      for (const auto& s : as_strs()) c.schemes.push_back(parse_scheme(s));
    } else if (key == "seeds") {
      c.seeds.clear();
      for (double d : as_nums()) {
        if (d < 0 || d != std::floor(d) || d > 9007199254740992.0)
          fail(Errc::config, where + ": seeds must be non-negative integers");
        c.seeds.push_back(static_cast<std::uint64_t>(d));
      }
    } else if (key == "image_height") c.image_height = as_count();
    else if (key == "image_width") c.image_width = as_count();
    else if (key == "out") c.out = as_str();
    else if (key == "upper_bound_exact") c.upper_bound_exact = as_bool();
    else fail(Errc::config, where + ": unknown key");
  }
  c.validate();
  return c;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

/// "default" selects the built-in configuration; anything else is a path.
inline ExperimentConfig load_config(const std::string& source) {
  if (source == "default") return ExperimentConfig{};
  std::ifstream in(source, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open config file " + source);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace facelink
