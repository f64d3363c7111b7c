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

#include "sac/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace sac {

void Waveform::validate() const {
  if (sample_rate <= 0) throw ValidationError("waveform sample rate must be positive");
  if (samples.size() < 1) throw ValidationError("waveform is empty");
  if (!samples.allFinite()) throw ValidationError("waveform contains non-finite samples");
}

void SpectrogramScale::validate() const {
  if (fft_size < 2 || fft_size % 2 != 0) throw ValidationError("fft_size must be even and >= 2");
  if (hop < 1 || hop > fft_size) throw ValidationError("hop must satisfy 1 <= hop <= fft_size");
  if (mel_bins < 0 || mel_bins > fft_size / 2 + 1) {
    throw ValidationError("mel_bins must be in [0, fft_size/2 + 1]");
  }
}

Index SpectrogramScale::frame_count(Index length) const {
  const Index padded = length + (center ? fft_size : 0);
  return (padded - fft_size) / hop + 1;
}

template <typename Scalar>
Matrix<Scalar> mel_filterbank(int mel_bins, Index fft_size, int sample_rate) {
  const Index bins = fft_size / 2 + 1;
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(mel_bins) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(mel_bins + 1));
  }
  Matrix<Scalar> fb = Matrix<Scalar>::Zero(bins, mel_bins);
  for (Index k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
    for (int m = 0; m < mel_bins; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(k, m) = static_cast<Scalar>(w);
    }
  }
  return fb;
}

template <typename Scalar>
ad::Tensor<Scalar> spectrogram(const ad::Tensor<Scalar>& signal, const SpectrogramScale& scale,
                               int sample_rate) {
  scale.validate();
  if (signal.rows() < scale.fft_size) {
    throw ValidationError("waveform of " + std::to_string(signal.rows()) +
                          " samples is shorter than one frame of " + std::to_string(scale.fft_size));
  }
  const Index frames = scale.frame_count(signal.rows());
  const Index bins = scale.fft_size / 2 + 1;
  auto mag = ad::reshape(ad::complex_abs(ad::stft(signal, scale.fft_size, scale.hop, scale.center)),
                         frames, bins);
  if (scale.mel_bins > 0) {
    mag = ad::matmul(mag, ad::Tensor<Scalar>(mel_filterbank<Scalar>(scale.mel_bins, scale.fft_size,
                                                                    sample_rate)));
  }
  if (scale.log_domain) mag = ad::log_eps(mag, static_cast<Scalar>(kLogEpsilon));
  return mag;
}

Matrix<float> compute_spectrogram(const Waveform& w, const SpectrogramScale& scale) {
  w.validate();
  ad::Tensor<float> x(Matrix<float>(w.samples));
  return spectrogram(x, scale, w.sample_rate).value();
}

Crop random_crop(const Waveform& w, double duration_s, std::uint64_t seed) {
  w.validate();
  const auto want = static_cast<Index>(std::llround(duration_s * w.sample_rate));
  if (want < 1) throw ValidationError("crop duration must cover at least one sample");
  Crop crop;
  crop.wave.sample_rate = w.sample_rate;
  if (w.size() < want) {
    crop.padded = true;
    crop.wave.samples = Eigen::VectorXf::Zero(want);
    crop.wave.samples.head(w.size()) = w.samples;
    return crop;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, w.size() - want);
  crop.offset = pick(rng);
  crop.wave.samples = w.samples.segment(crop.offset, want);
  return crop;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw RuntimeError(path.string() + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    const std::uint32_t size = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw RuntimeError(path.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw RuntimeError(path.string() + ": short fmt chunk");
      format = read_u16(&bytes[body]);
      channels = read_u16(&bytes[body + 2]);
      rate = read_u32(&bytes[body + 4]);
      bits = read_u16(&bytes[body + 14]);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw RuntimeError(path.string() + ": data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw ValidationError(path.string() + ": only 16-bit PCM is supported");
      if (channels != 1) {
        throw ValidationError(path.string() + ": expected mono audio, got " + std::to_string(channels) +
                              " channels");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw ValidationError(path.string() + ": sample rate " + std::to_string(rate) +
                              " Hz is not supported; resample to 16000 Hz first");
      }
      const std::size_t n = size / 2;
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(static_cast<Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(&bytes[body + 2 * i]));
        w.samples(static_cast<Index>(i)) = static_cast<float>(v) / 32768.0f;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw RuntimeError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  w.validate();
  const auto n = static_cast<std::uint32_t>(w.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (Index i = 0; i < w.size(); ++i) {
    const float v = std::clamp(w.samples(i), -1.0f, 1.0f);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v * 32767.0f))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot write WAV file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw RuntimeError("failed writing WAV file " + path.string());
}

template Matrix<float> mel_filterbank<float>(int, Index, int);
template Matrix<double> mel_filterbank<double>(int, Index, int);
template ad::Tensor<float> spectrogram<float>(const ad::Tensor<float>&, const SpectrogramScale&, int);
template ad::Tensor<double> spectrogram<double>(const ad::Tensor<double>&, const SpectrogramScale&, int);

}  // namespace sac
