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

#ifndef SAC_SIGNAL_HPP_
#define SAC_SIGNAL_HPP_

#include <cstdint>
#include <filesystem>

#include "sac/autodiff.hpp"
#include "sac/common.hpp"

namespace sac {

// Mono PCM audio, amplitudes nominally in [-1, 1].
struct Waveform {
  Eigen::VectorXf samples;
  int sample_rate = kSampleRate;

  Index size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
  // Throws ValidationError unless non-empty, finite and sample_rate > 0.
  void validate() const;
};

enum class WindowKind { kHann };

inline constexpr double kLogEpsilon = 1e-5;

struct SpectrogramScale {
  Index fft_size = 1024;
  Index hop = 256;
  WindowKind window = WindowKind::kHann;
  int mel_bins = 0;  // 0 = linear frequency axis
  bool log_domain = false;
  // Reflect-pad by fft_size/2 on both sides before framing.
  bool center = true;

  void validate() const;
  Index bins() const { return mel_bins > 0 ? mel_bins : fft_size / 2 + 1; }
  // floor((padded_len - fft_size) / hop) + 1.
  Index frame_count(Index length) const;
};

// Triangular HTK-scale filters spanning 0 .. sample_rate/2, returned as a
// [fft_size/2+1 x mel_bins] matrix so that mel = magnitude * filterbank.
template <typename Scalar>
Matrix<Scalar> mel_filterbank(int mel_bins, Index fft_size, int sample_rate);

// Differentiable magnitude spectrogram of a [N x 1] signal, [frames x bins].
// In the log domain entries are log(x + kLogEpsilon).
template <typename Scalar>
ad::Tensor<Scalar> spectrogram(const ad::Tensor<Scalar>& signal, const SpectrogramScale& scale,
                               int sample_rate = kSampleRate);

// Non-differentiable convenience over a Waveform.
Matrix<float> compute_spectrogram(const Waveform& w, const SpectrogramScale& scale);

struct Crop {
  Waveform wave;
  Index offset = 0;
  bool padded = false;  // input was shorter than the crop; tail is zeros
};

// Uniformly placed crop of round(duration_s * sample_rate) samples.
// Deterministic in (w, duration_s, seed).
Crop random_crop(const Waveform& w, double duration_s, std::uint64_t seed);

// 16-bit PCM mono WAV at 16 kHz. Other rates are rejected, not resampled.
Waveform read_wav(const std::filesystem::path& path);
// Clamps to [-1, 1] before quantising.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace sac

#endif  // SAC_SIGNAL_HPP_
