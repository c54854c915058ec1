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

#include <stdexcept>
#include <string>
#include <string_view>

namespace facelink {

/// Machine-readable failure categories. The CLI prints `to_string(code)`
/// and derives its exit status from `exit_code(code)`.
enum class Errc {
  invalid_argument,
  io,
  // trace ingestion
  empty_input,
  malformed_header,
  ragged_row,
  bad_frame_index,
  non_finite,
  // codec
  insufficient_budget,
  plan_mismatch,
  bad_magic,
  truncated,
  popcount_mismatch,
  length_mismatch,
  checksum_mismatch,
  bad_header,
  code_out_of_range,
  // predictor
  trace_too_short,
  divergence,
  window_underfull,
  missing_model,
  bad_model_file,
  // metrics / shapes
  shape_mismatch,
  // harness
  config,
  usage,
};

constexpr std::string_view to_string(Errc c) noexcept {
  switch (c) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::io: return "io";
    case Errc::empty_input: return "empty_input";
    case Errc::malformed_header: return "malformed_header";
    case Errc::ragged_row: return "ragged_row";
    case Errc::bad_frame_index: return "bad_frame_index";
    case Errc::non_finite: return "non_finite";
    case Errc::insufficient_budget: return "insufficient_budget";
    case Errc::plan_mismatch: return "plan_mismatch";
    case Errc::bad_magic: return "bad_magic";
    case Errc::truncated: return "truncated";
    case Errc::popcount_mismatch: return "popcount_mismatch";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::checksum_mismatch: return "checksum_mismatch";
    case Errc::bad_header: return "bad_header";
    case Errc::code_out_of_range: return "code_out_of_range";
    case Errc::trace_too_short: return "trace_too_short";
    case Errc::divergence: return "divergence";
    case Errc::window_underfull: return "window_underfull";
    case Errc::missing_model: return "missing_model";
    case Errc::bad_model_file: return "bad_model_file";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::config: return "config";
    case Errc::usage: return "usage";
  }
  return "unknown";
}

/// Process exit status for a failure category (0 is reserved for success).
constexpr int exit_code(Errc c) noexcept {
  switch (c) {
    case Errc::usage:
    case Errc::config:
      return 2;
    case Errc::io:
    case Errc::empty_input:
    case Errc::malformed_header:
    case Errc::ragged_row:
    case Errc::bad_frame_index:
    case Errc::non_finite:
      return 3;
    case Errc::insufficient_budget:
    case Errc::plan_mismatch:
      return 4;
    case Errc::bad_magic:
    case Errc::truncated:
    case Errc::popcount_mismatch:
    case Errc::length_mismatch:
    case Errc::checksum_mismatch:
    case Errc::bad_header:
    case Errc::code_out_of_range:
      return 5;
    case Errc::trace_too_short:
    case Errc::divergence:
    case Errc::window_underfull:
    case Errc::missing_model:
    case Errc::bad_model_file:
      return 6;
    default:
      return 1;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace facelink
