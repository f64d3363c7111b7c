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

#ifndef SAC_DECODER_HPP_
#define SAC_DECODER_HPP_

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sac/config.hpp"
#include "sac/nn.hpp"
#include "sac/signal.hpp"

namespace sac {

enum class ReconstructionPattern { kFull, kSemanticOnly, kAcousticOnly };

// Accepts "full", "semantic-only"/"semantic_only", "acoustic-only"/"acoustic_only".
ReconstructionPattern parse_pattern(std::string_view text);
std::string_view pattern_name(ReconstructionPattern p);

enum class Stream { kAcoustic, kSemantic };

// Zeros the acoustic embeddings under semantic-only and the semantic
// embeddings under acoustic-only; otherwise returns x unchanged.
template <typename Scalar>
ad::Tensor<Scalar> mask_stream(const ad::Tensor<Scalar>& x, Stream which, ReconstructionPattern pattern);

// Channel concat of A_q and S_q', repeat to 50 Hz, ConvNeXt blocks -> F.
template <typename Scalar>
class FusionPrenet {
 public:
  FusionPrenet() = default;
  FusionPrenet(const ModelConfig& cfg, std::mt19937_64& rng);
  // Throws ValidationError naming both frame counts when they differ.
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& acoustic, const ad::Tensor<Scalar>& semantic) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  int upsample = 1;
  std::vector<nn::ConvNeXtBlock<Scalar>> blocks;
};

// F [T50 x d_fuse] -> waveform [T50 * 320 x 1]. Transposed-conv strides
// 8,5,4,2 with a residual unit after each, tanh output.
template <typename Scalar>
class WaveformDecoder {
 public:
  struct Block {
    nn::ConvTranspose1d<Scalar> up;
    std::vector<nn::ResidualUnit<Scalar>> residuals;
  };

  WaveformDecoder() = default;
  WaveformDecoder(const ModelConfig& cfg, std::mt19937_64& rng);
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& fused) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  nn::Conv1d<Scalar> input;
  std::vector<Block> blocks;
  nn::Conv1d<Scalar> output;
};

inline constexpr int kDecoderStrides[] = {8, 5, 4, 2};

// Three convolutions (GELU between) predicting the 50 Hz semantic features.
template <typename Scalar>
class SemanticHead {
 public:
  SemanticHead() = default;
  SemanticHead(const ModelConfig& cfg, std::mt19937_64& rng);
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& fused) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  std::vector<nn::Conv1d<Scalar>> layers;
};

// [mean_t(F), std_t(F)] as a [1 x 2C] row; population std. Bit-exactly
// invariant to frame order. Throws ValidationError for fewer than 2 frames.
template <typename Scalar>
ad::Tensor<Scalar> speaker_features(const ad::Tensor<Scalar>& fused);

// Two-layer MLP from pooled features to the speaker embedding.
template <typename Scalar>
class SpeakerProjector {
 public:
  SpeakerProjector() = default;
  SpeakerProjector(const ModelConfig& cfg, std::mt19937_64& rng);
  // fused [T50 x d_fuse] -> [1 x d_spk]
  ad::Tensor<Scalar> operator()(const ad::Tensor<Scalar>& fused) const;
  void collect(nn::ParamSet<Scalar>& ps, const std::string& prefix) const;

  nn::Linear<Scalar> hidden;
  nn::Linear<Scalar> out;
};

// Frozen, fixed-seed stand-in for a pretrained speaker-verification model:
// 40-band log-mel (fft 512, hop 160) -> affine + tanh per frame -> mean and
// std over time -> affine to d_spk.
class SpeakerEncoder {
 public:
  SpeakerEncoder() = default;
  SpeakerEncoder(Index d_spk, std::uint64_t seed);
  // [1 x d_spk]. Inputs shorter than one frame are zero-padded.
  Matrix<float> embed(const Waveform& w) const;
  Index dim() const { return d_spk_; }
  nn::ParamSet<float> parameters() const;

 private:
  Index d_spk_ = 0;
  nn::Linear<float> frame_;
  nn::Linear<float> out_;
};

}  // namespace sac

#endif  // SAC_DECODER_HPP_
