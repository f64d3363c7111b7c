// Copyright 2026 The SAC Codec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SAC_BITSTREAM_HPP_
#define SAC_BITSTREAM_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sac/config.hpp"

namespace sac {

// Fixed 37-byte header: "SAC1", version (u8), then eight big-endian u32.
struct SacHeader {
  std::uint8_t version = 1;
  std::uint32_t sample_rate = 16000;
  std::uint32_t semantic_rate_centi_hz = 1250;
  std::uint32_t acoustic_rate_centi_hz = 2500;  // 0 when the acoustic stream is absent
  std::uint32_t semantic_codebook_size = 16384;
  std::uint32_t acoustic_codebook_size = 16384;
  std::uint32_t semantic_frames = 0;
  std::uint32_t acoustic_frames = 0;
  std::uint32_t original_length = 0;

  bool operator==(const SacHeader&) const = default;
};

inline constexpr std::size_t kSacHeaderBytes = 37;
inline constexpr std::uint8_t kSacVersion = 1;

// Tokens of both streams. The payload packs every semantic token, then every
// acoustic token, MSB first, ceil(log2 K) bits each, zero-padded to a byte.
struct SacStream {
  SacHeader header;
  std::vector<int> semantic_tokens;
  std::vector<int> acoustic_tokens;

  // Throws ValidationError when counts or token ranges disagree with the header.
  void validate() const;
  bool operator==(const SacStream&) const = default;
};

// ceil(log2 K); 0 for K <= 1 (an absent stream).
int bits_per_token(std::uint32_t codebook_size);

// Payload bits per second implied by the header; header bytes excluded.
double bitrate(const SacHeader& header);
double bitrate(const SacStream& stream);
// Same arithmetic from a model configuration.
double bitrate(const ModelConfig& cfg);

std::size_t payload_bits(const SacHeader& header);

std::vector<std::uint8_t> serialize(const SacStream& stream);
// Throws ValidationError on bad magic, unsupported version, wrong payload
// size or nonzero padding bits.
SacStream deserialize(std::span<const std::uint8_t> bytes);

void write_stream(const std::filesystem::path& path, const SacStream& stream);
SacStream read_stream(const std::filesystem::path& path);

}  // namespace sac

#endif  // SAC_BITSTREAM_HPP_
