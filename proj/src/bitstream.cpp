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

#include "sac/bitstream.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "sac/common.hpp"

namespace sac {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'A', 'C', '1'};

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void put(std::uint32_t value, int bits) {
    for (int b = bits - 1; b >= 0; --b) {
      if (fill_ == 0) out_.push_back(0);
      if ((value >> b) & 1u) out_.back() |= static_cast<std::uint8_t>(0x80u >> fill_);
      fill_ = (fill_ + 1) % 8;
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint32_t get(int bits) {
    std::uint32_t v = 0;
    for (int b = 0; b < bits; ++b, ++pos_) {
      v = (v << 1) | ((data_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
    }
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void check_tokens(const std::vector<int>& tokens, std::uint32_t k, const char* stream) {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::uint32_t>(t) >= k) {
      throw ValidationError(std::string(stream) + " token " + std::to_string(t) + " outside codebook of size " +
                            std::to_string(k));
    }
  }
}

}  // namespace

int bits_per_token(std::uint32_t codebook_size) {
  int bits = 0;
  while (bits < 32 && (std::uint64_t{1} << bits) < codebook_size) ++bits;
  return bits;
}

double bitrate(const SacHeader& h) {
  const std::uint64_t centi = static_cast<std::uint64_t>(h.semantic_rate_centi_hz) *
                                  static_cast<std::uint64_t>(bits_per_token(h.semantic_codebook_size)) +
                              static_cast<std::uint64_t>(h.acoustic_rate_centi_hz) *
                                  static_cast<std::uint64_t>(bits_per_token(h.acoustic_codebook_size));
  return static_cast<double>(centi) / 100.0;
}

double bitrate(const SacStream& s) { return bitrate(s.header); }

double bitrate(const ModelConfig& cfg) {
  SacHeader h;
  h.acoustic_rate_centi_hz = static_cast<std::uint32_t>(cfg.acoustic_centi_hz());
  h.semantic_codebook_size = static_cast<std::uint32_t>(cfg.codebook_size_semantic);
  h.acoustic_codebook_size = static_cast<std::uint32_t>(cfg.codebook_size_acoustic);
  return bitrate(h);
}

std::size_t payload_bits(const SacHeader& h) {
  return static_cast<std::size_t>(h.semantic_frames) * static_cast<std::size_t>(bits_per_token(h.semantic_codebook_size)) +
         static_cast<std::size_t>(h.acoustic_frames) * static_cast<std::size_t>(bits_per_token(h.acoustic_codebook_size));
}

void SacStream::validate() const {
  if (header.version != kSacVersion) {
    throw ValidationError("unsupported stream version " + std::to_string(header.version));
  }
  if (semantic_tokens.size() != header.semantic_frames) {
    throw ValidationError("header declares " + std::to_string(header.semantic_frames) + " semantic frames, stream has " +
                          std::to_string(semantic_tokens.size()));
  }
  if (acoustic_tokens.size() != header.acoustic_frames) {
    throw ValidationError("header declares " + std::to_string(header.acoustic_frames) + " acoustic frames, stream has " +
                          std::to_string(acoustic_tokens.size()));
  }
  if (header.semantic_frames > 0 && header.semantic_codebook_size < 2) {
    throw ValidationError("semantic tokens present but semantic codebook size is " +
                          std::to_string(header.semantic_codebook_size));
  }
  if (header.acoustic_frames > 0 && header.acoustic_codebook_size < 2) {
    throw ValidationError("acoustic tokens present but acoustic codebook size is " +
                          std::to_string(header.acoustic_codebook_size));
  }
  check_tokens(semantic_tokens, header.semantic_codebook_size, "semantic");
  check_tokens(acoustic_tokens, header.acoustic_codebook_size, "acoustic");
}

std::vector<std::uint8_t> serialize(const SacStream& s) {
  s.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(s.header.version);
  const auto& h = s.header;
  for (std::uint32_t v : {h.sample_rate, h.semantic_rate_centi_hz, h.acoustic_rate_centi_hz, h.semantic_codebook_size,
                          h.acoustic_codebook_size, h.semantic_frames, h.acoustic_frames, h.original_length}) {
    put_be32(out, v);
  }
  BitWriter bits(out);
  const int bs = bits_per_token(h.semantic_codebook_size);
  const int ba = bits_per_token(h.acoustic_codebook_size);
  for (int t : s.semantic_tokens) bits.put(static_cast<std::uint32_t>(t), bs);
  for (int t : s.acoustic_tokens) bits.put(static_cast<std::uint32_t>(t), ba);
  return out;
}

SacStream deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSacHeaderBytes) throw ValidationError("stream shorter than the 37-byte header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw ValidationError("bad stream magic");
  SacStream s;
  auto& h = s.header;
  h.version = bytes[4];
  if (h.version != kSacVersion) throw ValidationError("unsupported stream version " + std::to_string(h.version));
  std::uint32_t* fields[] = {&h.sample_rate,           &h.semantic_rate_centi_hz, &h.acoustic_rate_centi_hz,
                             &h.semantic_codebook_size, &h.acoustic_codebook_size, &h.semantic_frames,
                             &h.acoustic_frames,        &h.original_length};
  for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = get_be32(bytes.data() + 5 + 4 * i);

  const std::size_t nbits = payload_bits(h);
  const auto payload = bytes.subspan(kSacHeaderBytes);
  if (payload.size() != (nbits + 7) / 8) {
    throw ValidationError("payload is " + std::to_string(payload.size()) + " bytes, header implies " +
                          std::to_string((nbits + 7) / 8));
  }
  BitReader reader(payload);
  const int bs = bits_per_token(h.semantic_codebook_size);
  const int ba = bits_per_token(h.acoustic_codebook_size);
  s.semantic_tokens.resize(h.semantic_frames);
  for (auto& t : s.semantic_tokens) t = static_cast<int>(reader.get(bs));
  s.acoustic_tokens.resize(h.acoustic_frames);
  for (auto& t : s.acoustic_tokens) t = static_cast<int>(reader.get(ba));
  if (reader.get(static_cast<int>(payload.size() * 8 - nbits)) != 0) {
    throw ValidationError("nonzero padding bits after the payload");
  }
  s.validate();
  return s;
}

void write_stream(const std::filesystem::path& path, const SacStream& stream) {
  const auto bytes = serialize(stream);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw RuntimeError("failed writing " + path.string());
}

SacStream read_stream(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace sac
