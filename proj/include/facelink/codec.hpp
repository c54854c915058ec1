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

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "facelink/error.hpp"
#include "facelink/matrix.hpp"
#include "facelink/selector.hpp"
#include "facelink/trace.hpp"

namespace facelink {

/// Per-chunk link capacity: at most floor(tau * rate) bits.
struct LinkBudget {
  double tau = 1e-3;   ///< latency, seconds
  double rate = 16e6;  ///< bits per second

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau))
      fail(Errc::invalid_argument, "budget: tau must be positive");
    if (!(rate > 0.0) || !std::isfinite(rate))
      fail(Errc::invalid_argument, "budget: rate must be positive");
  }

  /// floor(tau * rate). A product within 1e-9 (relative) of an integer is
  /// snapped to it, so 1 ms at 16 Mbit/s is 16000 bits and not 15999.
  std::uint64_t budget_bits() const {
    validate();
    const double x = tau * rate;
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x)))
      return static_cast<std::uint64_t>(r);
    return static_cast<std::uint64_t>(std::floor(x));
  }
};

/// Uniform Q-bit quantizer over [lo, hi].
struct QuantizationSpec {
  unsigned q_bits = 16;
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    if (q_bits < 1 || q_bits > 32)
      fail(Errc::invalid_argument, "quantization: Q must be in [1, 32]");
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo))
      fail(Errc::invalid_argument, "quantization: range must satisfy lo < hi");
  }

  std::uint64_t levels() const noexcept { return std::uint64_t{1} << q_bits; }
  std::uint32_t max_code() const noexcept {
    return static_cast<std::uint32_t>(levels() - 1);
  }
  double step() const noexcept { return (hi - lo) / static_cast<double>(max_code()); }
};

inline std::uint32_t quantize(double value, const QuantizationSpec& spec) {
  if (!std::isfinite(value)) fail(Errc::non_finite, "quantize: non-finite value");
  const double clamped = std::clamp(value, spec.lo, spec.hi);
  const double scaled =
      (clamped - spec.lo) / (spec.hi - spec.lo) * static_cast<double>(spec.max_code());
  // std::round rounds halfway cases away from zero
  const double code = std::round(scaled);
  return static_cast<std::uint32_t>(std::min(code, static_cast<double>(spec.max_code())));
}

inline double dequantize(std::uint32_t code, const QuantizationSpec& spec) {
  if (code > spec.max_code())
    fail(Errc::code_out_of_range, "dequantize: code exceeds 2^Q - 1");
  return spec.lo + static_cast<double>(code) * (spec.hi - spec.lo) /
                       static_cast<double>(spec.max_code());
}

/// Bit budget arithmetic for one chunk.
struct ChunkPlan {
  std::size_t n_f = 1;    ///< frames carrying dynamic features
  std::size_t m = 0;      ///< total features
  std::size_t m_dyn = 0;  ///< dynamic features
  unsigned q_bits = 16;

  /// Q*M for the first frame plus Q*(n_f-1)*m_dyn for the rest.
  std::uint64_t payload_bits() const noexcept {
    return std::uint64_t{q_bits} * m + std::uint64_t{q_bits} * (n_f - 1) * m_dyn;
  }

  friend bool operator==(const ChunkPlan&, const ChunkPlan&) = default;
};

/// Largest n_f in [1, N] with Q*M + Q*(n_f-1)*m_dyn <= budget. With no
/// dynamic features only the first frame is sent and n_f = N.
inline ChunkPlan plan_frames(const LinkBudget& budget, const QuantizationSpec& spec,
                             std::size_t m, std::size_t m_dyn, std::size_t n) {
  spec.validate();
  if (n < 1) fail(Errc::invalid_argument, "plan_frames: N must be at least 1");
  if (m < 1 || m_dyn > m) fail(Errc::invalid_argument, "plan_frames: need 0 <= m_dyn <= M, M >= 1");
  const std::uint64_t bits = budget.budget_bits();
  const std::uint64_t first = std::uint64_t{spec.q_bits} * m;
  if (bits < first)
    fail(Errc::insufficient_budget, "budget of " + std::to_string(bits) +
                                        " bits cannot carry one frame of " +
                                        std::to_string(first) + " bits");
  ChunkPlan plan{1, m, m_dyn, spec.q_bits};
  if (m_dyn == 0) {
    plan.n_f = n;
    return plan;
  }
  // floor(tauR/(Q m_dyn) - M/m_dyn + 1) evaluated in integers
  const std::uint64_t extra = (bits - first) / (std::uint64_t{spec.q_bits} * m_dyn);
  plan.n_f = static_cast<std::size_t>(std::min<std::uint64_t>(extra + 1, n));
  return plan;
}

namespace detail {

class BitWriter {
 public:
  void put(std::uint32_t code, unsigned bits) {
    for (unsigned i = bits; i-- > 0;) {
      cur_ = static_cast<std::uint8_t>((cur_ << 1) | ((code >> i) & 1u));
      if (++fill_ == 8) {
        bytes_.push_back(cur_);
        cur_ = 0;
        fill_ = 0;
      }
    }
    bit_count_ += bits;
  }

  std::vector<std::uint8_t> finish() {
    if (fill_ > 0) {
      bytes_.push_back(static_cast<std::uint8_t>(cur_ << (8 - fill_)));
      cur_ = 0;
      fill_ = 0;
    }
    return std::move(bytes_);
  }

  std::uint64_t bit_count() const noexcept { return bit_count_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint8_t cur_ = 0;
  unsigned fill_ = 0;
  std::uint64_t bit_count_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t get(unsigned bits) {
    std::uint32_t v = 0;
    for (unsigned i = 0; i < bits; ++i) {
      const std::uint8_t byte = bytes_[pos_ >> 3];
      v = (v << 1) | ((byte >> (7 - (pos_ & 7))) & 1u);
      ++pos_;
    }
    return v;
  }

  std::uint64_t position() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

inline void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | in[offset + i];
  return v;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Wire layout (all multi-byte integers big-endian):
///
///   offset  size  field
///   0       4     magic "SCM1"
///   4       4     chunk_id
///   8       2     N
///   10      2     n_f
///   12      2     M
///   14      1     Q
///   15      8     lo (IEEE-754 binary64 bits)
///   23      8     hi
///   31      B     dynamic bitmap, B = ceil(M/8), feature m at bit (7 - m%8)
///                 of byte m/8, unused trailing bits zero
///   31+B    P     body: M frame-1 codes then (n_f-1)*m_dyn dynamic codes,
///                 frame-major, ascending feature index, Q bits each,
///                 MSB-first, zero-padded to a byte, P = ceil(payload/8)
///   31+B+P  4     CRC-32 (zlib polynomial) of every preceding byte
///
/// The header and trailer are protocol overhead and are not charged against
/// the link budget.
struct PacketHeader {
  std::uint32_t chunk_id = 0;
  std::uint16_t n = 0;
  std::uint16_t n_f = 0;
  std::uint16_t m = 0;
  std::uint8_t q_bits = 0;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<bool> dynamic;  // size M

  friend bool operator==(const PacketHeader&, const PacketHeader&) = default;
};

inline constexpr std::uint8_t kPacketMagic[4] = {'S', 'C', 'M', '1'};
inline constexpr std::size_t kFixedHeaderBytes = 31;
inline constexpr std::size_t kTrailerBytes = 4;

inline std::size_t bitmap_bytes(std::size_t m) { return (m + 7) / 8; }

struct ChunkPacket {
  PacketHeader header;
  std::uint64_t payload_bits = 0;
  std::vector<std::uint8_t> bytes;

  std::size_t body_bytes() const noexcept {
    return static_cast<std::size_t>((payload_bits + 7) / 8);
  }
};

/// Quantizes and serializes one chunk. Static features carry the chunk mean
/// in the frame-1 slot; dynamic features carry frames 1..n_f.
inline ChunkPacket pack_chunk(const ChunkView& chunk, const SelectionReport& report,
                              const ChunkPlan& plan, const QuantizationSpec& spec) {
  spec.validate();
  const std::size_t m = chunk.features();
  if (report.features() != m || plan.m != m)
    fail(Errc::plan_mismatch, "pack_chunk: feature count differs between chunk, report and plan");
  if (plan.m_dyn != report.m_dyn())
    fail(Errc::plan_mismatch, "pack_chunk: plan m_dyn does not match the selection report");
  if (plan.q_bits != spec.q_bits)
    fail(Errc::plan_mismatch, "pack_chunk: plan Q does not match quantization spec");
  if (plan.n_f < 1 || plan.n_f > chunk.frames())
    fail(Errc::plan_mismatch, "pack_chunk: n_f outside [1, N]");
  if (chunk.frames() > 0xFFFF || m > 0xFFFF || chunk.chunk_id() > 0xFFFFFFFFu)
    fail(Errc::invalid_argument, "pack_chunk: N, M or chunk id exceeds header field width");

  ChunkPacket packet;
  auto& h = packet.header;
  h.chunk_id = static_cast<std::uint32_t>(chunk.chunk_id());
  h.n = static_cast<std::uint16_t>(chunk.frames());
  h.n_f = static_cast<std::uint16_t>(plan.n_f);
  h.m = static_cast<std::uint16_t>(m);
  h.q_bits = static_cast<std::uint8_t>(spec.q_bits);
  h.lo = spec.lo;
  h.hi = spec.hi;
  h.dynamic.assign(m, false);
  for (auto d : report.dynamic_set) h.dynamic.at(d) = true;

  auto& out = packet.bytes;
  out.assign(std::begin(kPacketMagic), std::end(kPacketMagic));
  detail::put_be(out, h.chunk_id, 4);
  detail::put_be(out, h.n, 2);
  detail::put_be(out, h.n_f, 2);
  detail::put_be(out, h.m, 2);
  detail::put_be(out, h.q_bits, 1);
  detail::put_be(out, std::bit_cast<std::uint64_t>(h.lo), 8);
  detail::put_be(out, std::bit_cast<std::uint64_t>(h.hi), 8);
  std::vector<std::uint8_t> bitmap(bitmap_bytes(m), 0);
  for (std::size_t i = 0; i < m; ++i)
    if (h.dynamic[i]) bitmap[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  out.insert(out.end(), bitmap.begin(), bitmap.end());

  detail::BitWriter body;
  for (std::size_t i = 0; i < m; ++i) {
    const double v = h.dynamic[i] ? chunk(0, i) : report.means[i];
    body.put(quantize(v, spec), spec.q_bits);
  }
  for (std::size_t t = 1; t < plan.n_f; ++t)
    for (auto d : report.dynamic_set) body.put(quantize(chunk(t, d), spec), spec.q_bits);
  packet.payload_bits = body.bit_count();
  const auto body_bytes = body.finish();
  out.insert(out.end(), body_bytes.begin(), body_bytes.end());
  detail::put_be(out, detail::crc32_of(out), 4);
  return packet;
}

/// Receiver view of a decoded packet.
struct ReceivedChunk {
  PacketHeader header;
  QuantizationSpec spec;
  std::vector<std::size_t> dynamic_indices;     // ascending
  std::vector<std::uint32_t> frame1_codes;      // M
  std::vector<std::uint32_t> dynamic_codes;     // (n_f-1) * m_dyn, frame-major
  std::vector<double> frame1;                   // dequantized, M
  Matrix dynamic;                               // dequantized, (n_f-1) x m_dyn

  std::size_t n() const noexcept { return header.n; }
  std::size_t n_f() const noexcept { return header.n_f; }
  std::size_t features() const noexcept { return header.m; }
  std::size_t m_dyn() const noexcept { return dynamic_indices.size(); }

  /// Received frames 1..n_f of the j-th dynamic feature.
  std::vector<double> dynamic_series(std::size_t j) const {
    std::vector<double> out;
    out.reserve(n_f());
    out.push_back(frame1[dynamic_indices[j]]);
    for (std::size_t r = 0; r < dynamic.rows(); ++r) out.push_back(dynamic(r, j));
    return out;
  }
};

inline ReceivedChunk unpack_chunk(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kPacketMagic), std::end(kPacketMagic), bytes.begin()))
    fail(Errc::bad_magic, "unpack_chunk: bad magic");
  if (bytes.size() < kFixedHeaderBytes)
    fail(Errc::truncated, "unpack_chunk: header truncated");

  ReceivedChunk rx;
  auto& h = rx.header;
  h.chunk_id = static_cast<std::uint32_t>(detail::get_be(bytes, 4, 4));
  h.n = static_cast<std::uint16_t>(detail::get_be(bytes, 8, 2));
  h.n_f = static_cast<std::uint16_t>(detail::get_be(bytes, 10, 2));
  h.m = static_cast<std::uint16_t>(detail::get_be(bytes, 12, 2));
  h.q_bits = static_cast<std::uint8_t>(detail::get_be(bytes, 14, 1));
  h.lo = std::bit_cast<double>(detail::get_be(bytes, 15, 8));
  h.hi = std::bit_cast<double>(detail::get_be(bytes, 23, 8));

  const std::size_t m = h.m;
  const std::size_t bm_bytes = bitmap_bytes(m);
  if (bytes.size() < kFixedHeaderBytes + bm_bytes)
    fail(Errc::truncated, "unpack_chunk: bitmap truncated");
  h.dynamic.assign(m, false);
  for (std::size_t i = 0; i < m; ++i)
    h.dynamic[i] = (bytes[kFixedHeaderBytes + i / 8] >> (7 - i % 8)) & 1u;
  std::size_t popcount = 0;
  for (std::size_t i = 0; i < bm_bytes; ++i)
    popcount += static_cast<std::size_t>(std::popcount(bytes[kFixedHeaderBytes + i]));
  std::size_t m_dyn = 0;
  for (bool b : h.dynamic) m_dyn += b ? 1 : 0;

  if (m < 1 || h.n < 1 || h.n_f < 1 || h.n_f > h.n || h.q_bits < 1 || h.q_bits > 32 ||
      !std::isfinite(h.lo) || !std::isfinite(h.hi) || !(h.hi > h.lo))
    fail(Errc::bad_header, "unpack_chunk: header fields are not self-consistent");
  if (popcount != m_dyn)
    fail(Errc::popcount_mismatch, "unpack_chunk: bitmap has bits set past feature M");

  const std::uint64_t q = h.q_bits;
  const auto expected_len = [&](std::uint64_t dyn) {
    const std::uint64_t bits = q * m + q * (h.n_f - 1u) * dyn;
    return kFixedHeaderBytes + bm_bytes + static_cast<std::size_t>((bits + 7) / 8) + kTrailerBytes;
  };
  const std::size_t want = expected_len(m_dyn);
  if (bytes.size() != want) {
    // a length that fits another dynamic count points at a damaged bitmap
    for (std::size_t k = 0; k <= m && h.n_f > 1; ++k)
      if (k != m_dyn && expected_len(k) == bytes.size())
        fail(Errc::popcount_mismatch,
             "unpack_chunk: bitmap popcount " + std::to_string(m_dyn) +
                 " disagrees with body length (fits " + std::to_string(k) + ")");
    if (bytes.size() < want)
      fail(Errc::truncated, "unpack_chunk: body truncated (" + std::to_string(bytes.size()) +
                                " of " + std::to_string(want) + " bytes)");
    fail(Errc::length_mismatch, "unpack_chunk: trailing bytes after packet");
  }
  const auto stored_crc = static_cast<std::uint32_t>(detail::get_be(bytes, want - 4, 4));
  if (stored_crc != detail::crc32_of(bytes.first(want - 4)))
    fail(Errc::checksum_mismatch, "unpack_chunk: CRC-32 mismatch");

  rx.spec = QuantizationSpec{h.q_bits, h.lo, h.hi};
  for (std::size_t i = 0; i < m; ++i)
    if (h.dynamic[i]) rx.dynamic_indices.push_back(i);

  detail::BitReader reader(bytes.subspan(kFixedHeaderBytes + bm_bytes));
  rx.frame1_codes.resize(m);
  rx.frame1.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    rx.frame1_codes[i] = reader.get(h.q_bits);
    rx.frame1[i] = dequantize(rx.frame1_codes[i], rx.spec);
  }
  const std::size_t rows = h.n_f - 1u;
  rx.dynamic = Matrix(rows, m_dyn);
  rx.dynamic_codes.resize(rows * m_dyn);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m_dyn; ++j) {
      const auto code = reader.get(h.q_bits);
      rx.dynamic_codes[r * m_dyn + j] = code;
      rx.dynamic(r, j) = dequantize(code, rx.spec);
    }
  // padding bits after the last code must be zero
  const std::uint64_t used = reader.position();
  const std::size_t body_len = want - kFixedHeaderBytes - bm_bytes - kTrailerBytes;
  for (std::uint64_t bit = used; bit < std::uint64_t{body_len} * 8; ++bit)
    if ((bytes[kFixedHeaderBytes + bm_bytes + bit / 8] >> (7 - bit % 8)) & 1u)
      fail(Errc::bad_header, "unpack_chunk: nonzero padding bits");
  return rx;
}

}  // namespace facelink
