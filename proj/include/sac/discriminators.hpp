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

#ifndef SAC_DISCRIMINATORS_HPP_
#define SAC_DISCRIMINATORS_HPP_

#include <random>
#include <string>
#include <vector>

#include "sac/config.hpp"
#include "sac/nn.hpp"

namespace sac {

// Score maps and intermediate activations of every sub-discriminator, in a
// fixed order: one entry per MPD period, then one per STFT scale.
template <typename Scalar>
struct DiscriminatorOutput {
  std::vector<ad::Tensor<Scalar>> scores;
  std::vector<std::vector<ad::Tensor<Scalar>>> features;
};

// Weight-normalised 2-D convolution over a [H*W x C] position-major map.
template <typename Scalar>
class WNConv2d {
 public:
  WNConv2d() = default;
  WNConv2d(Index in, Index out, ad::Conv2dGeometry shape, std::mt19937_64& rng);
  // With frozen = true the parameters are cut from the graph: gradients
  // still reach x but never the weights.
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& x, Index in_h, Index in_w, bool frozen,
                                Index* out_h = nullptr, Index* out_w = nullptr) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  ad::Conv2dGeometry shape;  // in_h/in_w are filled per call
  ad::Tensor<Scalar> direction;  // [(kh*kw*C_in) x C_out]
  ad::Tensor<Scalar> magnitude;  // [1 x C_out]
  ad::Tensor<Scalar> bias;
};

// Period-p view of the waveform, right-padded to a multiple of p, processed
// by (5,1)-kernel convs striding over the frame axis.
template <typename Scalar>
class PeriodDiscriminator {
 public:
  PeriodDiscriminator() = default;
  PeriodDiscriminator(int period, double width_scale, std::mt19937_64& rng);
  void forward(const ad::Tensor<Scalar>& waveform, bool frozen, DiscriminatorOutput<Scalar>& out) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  int period = 2;
  std::vector<WNConv2d<Scalar>> layers;
  WNConv2d<Scalar> post;
};

// Complex STFT (real and imaginary as two channels, time x frequency)
// followed by frequency-strided, time-dilated convs.
template <typename Scalar>
class StftDiscriminator {
 public:
  StftDiscriminator() = default;
  StftDiscriminator(int fft_size, double width_scale, std::mt19937_64& rng);
  void forward(const ad::Tensor<Scalar>& waveform, bool frozen, DiscriminatorOutput<Scalar>& out) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  int fft_size = 1024;
  std::vector<WNConv2d<Scalar>> layers;
  WNConv2d<Scalar> post;
};

// Number of padded frames the period-p view has for a length-n signal.
Index period_frames(Index length, int period);

template <typename Scalar>
class Discriminators {
 public:
  Discriminators() = default;
  Discriminators(const DiscriminatorConfig& cfg, std::uint64_t seed);

  // waveform [N x 1]. Throws ValidationError when N is shorter than the
  // largest STFT frame.
  DiscriminatorOutput<Scalar> operator()(const ad::Tensor<Scalar>& waveform, bool frozen = false) const;
  DiscriminatorOutput<Scalar> mpd(const ad::Tensor<Scalar>& waveform, bool frozen = false) const;
  DiscriminatorOutput<Scalar> msstft(const ad::Tensor<Scalar>& waveform, bool frozen = false) const;
  nn::ParamSet<Scalar> parameters() const;

  std::vector<PeriodDiscriminator<Scalar>> periods;
  std::vector<StftDiscriminator<Scalar>> scales;
};

}  // namespace sac

#endif  // SAC_DISCRIMINATORS_HPP_
